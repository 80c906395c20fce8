#pragma once

// The matching network: per-instruction features, sequence encoder,
// co-attention interaction, sum aggregation and a two-class MLP head.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "interbin/asm_normalize.hpp"
#include "interbin/layers.hpp"

namespace interbin::model {

using ad::Tensor;

struct Enhancement {
  bool concat = true;   // h'
  bool diff = true;     // h - h'
  bool product = true;  // h * h'
  bool operator==(const Enhancement&) const = default;
};

// "full", "none", or a '+'-joined subset of concat, diff, product.
std::string enhancement_name(const Enhancement& e);
Enhancement parse_enhancement(std::string_view text);

struct ModelConfig {
  std::size_t hidden = 256;
  std::size_t kernel_size = 3;
  std::size_t n_filters = 64;
  std::size_t opcode_dim = 8;
  std::size_t operand_dim = 8;
  std::size_t char_dim = 16;
  std::size_t max_chars = 32;
  std::size_t max_seq_len = 256;
  std::vector<std::size_t> mlp_dims = {512, 256};
  nn::AttentionKind attention = nn::AttentionKind::Bilinear;
  Enhancement enhancement;
  nn::RnnKind rnn = nn::RnnKind::BiLstm;
  nn::Activation activation = nn::Activation::ReLU;

  bool drop_char = false;
  bool drop_opcode = false;
  bool drop_operand = false;
  bool drop_backward = false;
  bool drop_coattention = false;

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
  bool operator==(const ModelConfig&) const = default;
};

// One side of a pair. Steps with mask 0 are padding.
struct Sequence {
  Arch arch = Arch::X86;
  std::vector<asmnorm::InstructionFeatures> steps;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return steps.size(); }
  std::size_t length() const;  // real steps
};

// Featurizes raw lines, truncating to max_seq_len. Throws EmptySequence.
Sequence make_sequence(std::span<const std::string> lines, Arch arch, const asmnorm::ArchDictionaries& dicts,
                       const ModelConfig& config);
// Appends padding steps until the sequence has `len` steps.
Sequence pad_to(const Sequence& seq, std::size_t len, const asmnorm::ArchDictionaries& dicts,
                std::size_t max_chars);

struct MatchOutput {
  double probability_similar = 0.0;
  std::array<double, 2> logits{};
  // Differentiable logits [2], for the loss.
  Tensor logits_tensor;
  // Retained on request; attention is the raw score matrix e, row-major [M, N].
  std::optional<std::vector<double>> attention;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::optional<std::vector<double>> r_a;
  std::optional<std::vector<double>> r_b;
};

// Char-feature rows for the distinct instruction texts of a batch, computed
// with one convolution.
struct CharBank {
  Tensor rows;
  std::map<std::string, std::int32_t, std::less<>> index;
};

// Row blocks of the enhancement weight, combined once per forward call.
struct EnhanceWeights {
  Tensor self;     // W_h (+ W_d)
  Tensor cross;    // W_c - W_d, W_c or -W_d; undefined for none/product
  Tensor product;  // W_p; undefined without the product term
};

struct Encoded {
  Tensor h;
  std::vector<std::uint8_t> mask;
  // Per-sequence parts of the enhancement layer, shared by every pair the
  // sequence takes part in: h W_self + b and h W_cross (see interact()).
  Tensor self_proj;
  Tensor cross_proj;
  Tensor product_weight;
};

struct Interaction {
  Tensor scores;   // e [M, N]
  Tensor alpha;    // row softmax [M, N]
  Tensor beta;     // column softmax [M, N]
  Tensor attended_a;  // h_a' [M, 2H]
  Tensor attended_b;  // h_b' [N, 2H]
  Tensor tilde_a;
  Tensor tilde_b;
};

class InterBinModel {
 public:
  InterBinModel(ModelConfig config, asmnorm::ArchDictionaries dicts, std::uint64_t seed);

  InterBinModel(const InterBinModel&) = delete;
  InterBinModel& operator=(const InterBinModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const asmnorm::ArchDictionaries& dictionaries() const { return dicts_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const nn::FeedForward& feed_forward() const { return ff_; }

  std::size_t feature_dim() const;
  std::size_t encoder_dim() const { return encoder_.out_dim(); }
  std::size_t enhancement_dim() const;

  Sequence make_sequence(std::span<const std::string> lines, Arch arch) const;

  CharBank char_bank(std::span<const Sequence* const> seqs) const;
  // F [T, feature_dim]; padded rows are zero.
  Tensor embed_instructions(const Sequence& seq, const CharBank* bank = nullptr) const;
  // H [T, encoder_dim]; padded rows are zero.
  Tensor encode(const Tensor& f, std::span<const std::uint8_t> mask) const;
  Encoded encode_sequence(const Sequence& seq, const CharBank* bank = nullptr,
                          const EnhanceWeights* weights = nullptr) const;
  EnhanceWeights enhance_weights() const;
  // Fills self_proj, cross_proj and product_weight.
  void project(Encoded& side) const { project(side, enhance_weights()); }
  void project(Encoded& side, const EnhanceWeights& w) const;

  // [h ; h' ; h - h' ; h * h'] restricted to the enhancement mode.
  Tensor enhance(const Tensor& h, const Tensor& attended) const;
  Interaction interact(const Encoded& a, const Encoded& b) const;
  // Co-attention bypass: F applied to H zero-padded to the enhancement width.
  Tensor bypass(const Encoded& side) const;
  // Masked sum over rows, [2H].
  Tensor aggregate(const Tensor& tilde, std::span<const std::uint8_t> mask) const;
  // Two logits from [r_a ; r_b]; index 1 is "similar".
  Tensor match_head(const Tensor& r_a, const Tensor& r_b) const;

  MatchOutput match(const Encoded& a, const Encoded& b, bool retain = false) const;
  MatchOutput forward_pair(const Sequence& a, const Sequence& b, bool retain = false) const;
  // Shares the char bank and the encoding of repeated sequences across pairs.
  std::vector<MatchOutput> forward_batch(std::span<const std::pair<const Sequence*, const Sequence*>> pairs) const;

 private:
  ModelConfig config_;
  asmnorm::ArchDictionaries dicts_;
  nn::ParameterStore store_;
  nn::Initializer init_;
  nn::CharConvEncoder chars_;
  nn::OpcodeEmbedding opcodes_;
  nn::OperandMap operands_;
  nn::SequenceEncoder encoder_;
  nn::Attention attention_;
  nn::FeedForward ff_;
  std::vector<nn::Linear> mlp_;
};

// Cross-entropy of one output against label in {0, 1}; probabilities are
// clamped at 1e-12 before the log.
Tensor pair_loss(const MatchOutput& out, int label);
// Summed over the batch.
Tensor loss(std::span<const MatchOutput> outputs, std::span<const int> labels);

}  // namespace interbin::model
