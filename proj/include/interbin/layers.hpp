#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "interbin/asm_normalize.hpp"
#include "interbin/tensor.hpp"

namespace interbin::nn {

using ad::Tensor;

enum class Activation { ReLU, Tanh, Sigmoid, Identity };

std::string_view activation_name(Activation act);
Activation parse_activation(std::string_view name);
Tensor activate(const Tensor& x, Activation act);

// Named trainable tensors in registration order. Layers hold handles to the
// same tensors, so a parameter has exactly one identity no matter how many
// times it is used in a forward pass.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;

  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor uniform(ad::Shape shape, double bound);
  // uniform(-sqrt(1 / fan_in), +sqrt(1 / fan_in))
  Tensor fan_in(ad::Shape shape, std::size_t fan_in);

 private:
  std::mt19937_64 rng_;
};

// y = x W + b
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in, std::size_t out);
  Tensor forward(const Tensor& x) const;
  std::size_t in_dim() const { return weight_.dim(0); }
  std::size_t out_dim() const { return weight_.dim(1); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

// Char embedding -> 1-D convolution -> activation -> max over valid windows.
class CharConvEncoder {
 public:
  CharConvEncoder() = default;
  CharConvEncoder(ParameterStore& store, Initializer& init, std::size_t char_dim, std::size_t n_filters,
                  std::size_t kernel_size, Activation act);

  // One [1, n_filters] row.
  Tensor forward(const asmnorm::CharIndices& chars) const;
  // One row per instruction, computed with a single convolution over the
  // concatenated character sequences.
  Tensor forward_many(std::span<const asmnorm::CharIndices* const> chars) const;
  // Pre-activation feature map [windows, n_filters], for inspection.
  Tensor feature_map(const asmnorm::CharIndices& chars) const;

  std::size_t out_dim() const { return kernels_.dim(0); }
  std::size_t kernel_size() const { return kernel_size_; }
  const Tensor& embedding() const { return embedding_; }

 private:
  Tensor embedding_;
  Tensor kernels_;
  Tensor bias_;
  std::size_t kernel_size_ = 3;
  Activation act_ = Activation::ReLU;
};

// Per-architecture opcode embedding tables sharing one width.
class OpcodeEmbedding {
 public:
  OpcodeEmbedding() = default;
  OpcodeEmbedding(ParameterStore& store, Initializer& init, const asmnorm::ArchDictionaries& dicts,
                  std::size_t dim);
  Tensor forward(Arch arch, std::span<const std::int32_t> indices) const;
  std::size_t out_dim() const { return dim_; }
  const Tensor& table(Arch arch) const;

 private:
  std::map<Arch, Tensor> tables_;
  std::size_t dim_ = 0;
};

// Fully connected map over [string, integer, function, other counts ; register
// multi-hot]. The count weights and bias are shared; each architecture has its
// own register columns since register tables are per-architecture.
class OperandMap {
 public:
  OperandMap() = default;
  OperandMap(ParameterStore& store, Initializer& init, const asmnorm::ArchDictionaries& dicts, std::size_t dim,
             Activation act);
  Tensor forward(Arch arch, std::span<const asmnorm::OperandStats* const> stats) const;
  std::size_t out_dim() const { return bias_.dim(0); }

 private:
  Tensor count_weight_;
  std::map<Arch, Tensor> register_weight_;
  Tensor bias_;
  Activation act_ = Activation::ReLU;
};

// Gate layout along the 4H axis: input, forget, cell candidate, output.
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in, std::size_t hidden);

  // Single step built from core ops. x [1, in], h and c [1, H].
  std::pair<Tensor, Tensor> cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev) const;
  // Whole sequence x [T, in] -> [T, H] with a fused recurrence. Masked steps
  // carry the state through unchanged and emit zero rows. `reverse` runs from
  // the last step to the first.
  Tensor run(const Tensor& x, std::span<const std::uint8_t> mask, bool reverse) const;
  // Same contract as run(), assembled step by step from cell().
  Tensor run_reference(const Tensor& x, std::span<const std::uint8_t> mask, bool reverse) const;

  std::size_t hidden() const { return w_h_.dim(0); }

 private:
  Tensor w_x_;
  Tensor w_h_;
  Tensor b_;
};

// Gate layout along the 3H axis: reset, update, candidate.
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in, std::size_t hidden);
  Tensor run(const Tensor& x, std::span<const std::uint8_t> mask, bool reverse) const;
  std::size_t hidden() const { return w_h_.dim(0); }

 private:
  Tensor w_x_;
  Tensor w_h_;
  Tensor b_x_;
  Tensor b_h_;
};

enum class RnnKind { BiLstm, Lstm, BiGru, BiLstm2 };
std::string_view rnn_name(RnnKind kind);
RnnKind parse_rnn(std::string_view name);

class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  // `forward_only` drops the backward direction of a bidirectional kind.
  SequenceEncoder(ParameterStore& store, Initializer& init, RnnKind kind, std::size_t in, std::size_t hidden,
                  bool forward_only);
  Tensor forward(const Tensor& x, std::span<const std::uint8_t> mask) const;
  std::size_t out_dim() const;

 private:
  Tensor run_layer(std::size_t layer, const Tensor& x, std::span<const std::uint8_t> mask) const;

  RnnKind kind_ = RnnKind::BiLstm;
  bool bidirectional_ = true;
  std::size_t hidden_ = 0;
  // [layer][direction]
  std::vector<std::vector<LstmLayer>> lstm_;
  std::vector<GruLayer> gru_;
};

enum class AttentionKind { Bilinear, Dot, ScaledDot, Cosine };
std::string_view attention_name(AttentionKind kind);
AttentionKind parse_attention(std::string_view name);

class Attention {
 public:
  Attention() = default;
  Attention(ParameterStore& store, Initializer& init, AttentionKind kind, std::size_t dim);
  // Similarity matrix [M, N] between rows of a and rows of b.
  Tensor scores(const Tensor& a, const Tensor& b) const;
  AttentionKind kind() const { return kind_; }

 private:
  AttentionKind kind_ = AttentionKind::Bilinear;
  std::size_t dim_ = 0;
  Tensor w_s_;
};

// e_ij = a_i W b_j, with no masking applied.
Tensor bilinear_scores(const Tensor& a, const Tensor& b, const Tensor& w_s);

// One linear layer plus activation.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in, std::size_t out,
              Activation act);
  Tensor forward(const Tensor& x) const;
  std::size_t in_dim() const { return linear_.in_dim(); }
  std::size_t out_dim() const { return linear_.out_dim(); }
  const Linear& linear() const { return linear_; }
  Activation activation() const { return act_; }

 private:
  Linear linear_;
  Activation act_ = Activation::ReLU;
};

}  // namespace interbin::nn
