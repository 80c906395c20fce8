#include "interbin/layers.hpp"

#include <algorithm>
#include <cmath>

#include "interbin/error.hpp"

namespace interbin::nn {

using ad::Shape;

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::ReLU, Activation::Tanh, Activation::Sigmoid, Activation::Identity}) {
    if (activation_name(a) == name) return a;
  }
  throw Error(ErrorCode::ConfigError, "unknown activation '" + std::string(name) + "'");
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::ReLU: return ad::relu(x);
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Sigmoid: return ad::sigmoid(x);
    case Activation::Identity: return x;
  }
  return x;
}

// ---------------------------------------------------------------------------

Tensor& ParameterStore::add(const std::string& name, Tensor tensor) {
  if (index_.contains(name)) throw Error(ErrorCode::ConfigError, "duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(tensor));
  return entries_.back().second;
}

bool ParameterStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

Tensor& ParameterStore::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::ConfigError, "no parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

Tensor Initializer::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ad::numel_of(shape));
  for (double& x : v) x = dist(rng_);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor Initializer::fan_in(Shape shape, std::size_t fan_in) {
  return uniform(std::move(shape), std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1))));
}

// ---------------------------------------------------------------------------

Linear::Linear(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in, std::size_t out)
    : weight_(store.add(name + ".weight", init.fan_in({in, out}, in))),
      bias_(store.add(name + ".bias", init.fan_in({out}, in))) {}

Tensor Linear::forward(const Tensor& x) const { return ad::add(ad::matmul(x, weight_), bias_); }

FeedForward::FeedForward(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                         std::size_t out, Activation act)
    : linear_(store, init, name, in, out), act_(act) {}

Tensor FeedForward::forward(const Tensor& x) const { return activate(linear_.forward(x), act_); }

// ---------------------------------------------------------------------------

CharConvEncoder::CharConvEncoder(ParameterStore& store, Initializer& init, std::size_t char_dim,
                                 std::size_t n_filters, std::size_t kernel_size, Activation act)
    : embedding_(store.add("char.embedding", init.uniform({asmnorm::CharTable::kSize, char_dim}, 0.1))),
      kernels_(store.add("char.conv.kernels", init.fan_in({n_filters, kernel_size * char_dim}, kernel_size * char_dim))),
      bias_(store.add("char.conv.bias", init.fan_in({n_filters}, kernel_size * char_dim))),
      kernel_size_(kernel_size),
      act_(act) {}

Tensor CharConvEncoder::feature_map(const asmnorm::CharIndices& chars) const {
  return ad::conv1d(ad::embedding_gather(embedding_, chars.indices), kernels_, bias_, kernel_size_);
}

Tensor CharConvEncoder::forward(const asmnorm::CharIndices& chars) const {
  const asmnorm::CharIndices* one[] = {&chars};
  return forward_many(one);
}

Tensor CharConvEncoder::forward_many(std::span<const asmnorm::CharIndices* const> chars) const {
  if (chars.empty()) throw Error(ErrorCode::EmptySequence, "no instructions to encode");
  const std::size_t len = chars.front()->indices.size();
  if (len < kernel_size_) {
    throw Error(ErrorCode::ShapeMismatch, "max_chars " + std::to_string(len) + " is shorter than the kernel");
  }
  std::vector<std::int32_t> all;
  all.reserve(len * chars.size());
  for (const auto* c : chars) {
    if (c->indices.size() != len) throw Error(ErrorCode::ShapeMismatch, "inconsistent char lengths");
    if (c->length() == 0) throw Error(ErrorCode::AllPaddingInstruction, "instruction has no characters");
    all.insert(all.end(), c->indices.begin(), c->indices.end());
  }
  const Tensor fmap =
      activate(ad::conv1d(ad::embedding_gather(embedding_, all), kernels_, bias_, kernel_size_), act_);
  const std::size_t windows = len - kernel_size_ + 1;
  std::vector<Tensor> rows;
  rows.reserve(chars.size());
  for (std::size_t u = 0; u < chars.size(); ++u) {
    // Windows starting on a real character; the mask is a prefix.
    const std::size_t valid = std::min(chars[u]->length(), windows);
    rows.push_back(ad::max_over_axis(ad::slice_rows(fmap, u * len, u * len + valid), 0).values);
  }
  return ad::reshape(ad::concat(rows, 0), {chars.size(), out_dim()});
}

// ---------------------------------------------------------------------------

OpcodeEmbedding::OpcodeEmbedding(ParameterStore& store, Initializer& init, const asmnorm::ArchDictionaries& dicts,
                                 std::size_t dim)
    : dim_(dim) {
  for (Arch arch : dicts.archs()) {
    tables_[arch] = store.add("opcode.embedding." + std::string(arch_name(arch)),
                              init.uniform({dicts.opcodes(arch).size(), dim}, 0.1));
  }
}

const Tensor& OpcodeEmbedding::table(Arch arch) const {
  auto it = tables_.find(arch);
  if (it == tables_.end()) {
    throw Error(ErrorCode::UnknownArchitecture, "no opcode table for " + std::string(arch_name(arch)));
  }
  return it->second;
}

Tensor OpcodeEmbedding::forward(Arch arch, std::span<const std::int32_t> indices) const {
  return ad::embedding_gather(table(arch), indices);
}

OperandMap::OperandMap(ParameterStore& store, Initializer& init, const asmnorm::ArchDictionaries& dicts,
                       std::size_t dim, Activation act)
    : act_(act) {
  // fan-in counts the four statistics plus the widest register table
  std::size_t widest = 0;
  for (Arch arch : dicts.archs()) widest = std::max(widest, dicts.registers(arch).size());
  const std::size_t fan = 4 + widest;
  count_weight_ = store.add("operand.counts", init.fan_in({4, dim}, fan));
  for (Arch arch : dicts.archs()) {
    register_weight_[arch] = store.add("operand.registers." + std::string(arch_name(arch)),
                                       init.fan_in({dicts.registers(arch).size(), dim}, fan));
  }
  bias_ = store.add("operand.bias", init.fan_in({dim}, fan));
}

Tensor OperandMap::forward(Arch arch, std::span<const asmnorm::OperandStats* const> stats) const {
  auto it = register_weight_.find(arch);
  if (it == register_weight_.end()) {
    throw Error(ErrorCode::UnknownArchitecture, "no register table for " + std::string(arch_name(arch)));
  }
  const std::size_t t = stats.size();
  const std::size_t regs = it->second.dim(0);
  std::vector<double> counts(t * 4), multi_hot(t * regs, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    const auto& s = *stats[i];
    counts[i * 4 + 0] = s.n_string_literals;
    counts[i * 4 + 1] = s.n_integer_literals;
    counts[i * 4 + 2] = s.n_function_names;
    counts[i * 4 + 3] = s.n_other_symbols;
    if (s.register_indicator.size() != regs) {
      throw Error(ErrorCode::ShapeMismatch, "register indicator width does not match the register table");
    }
    for (std::size_t r = 0; r < regs; ++r) multi_hot[i * regs + r] = s.register_indicator[r];
  }
  const Tensor c = Tensor::from({t, 4}, std::move(counts));
  const Tensor r = Tensor::from({t, regs}, std::move(multi_hot));
  return activate(ad::add(ad::add(ad::matmul(c, count_weight_), ad::matmul(r, it->second)), bias_), act_);
}

// ---------------------------------------------------------------------------
// LSTM

LstmLayer::LstmLayer(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                     std::size_t hidden)
    : w_x_(store.add(name + ".w_x", init.fan_in({in, 4 * hidden}, in + hidden))),
      w_h_(store.add(name + ".w_h", init.fan_in({hidden, 4 * hidden}, in + hidden))),
      b_(store.add(name + ".b", init.fan_in({4 * hidden}, in + hidden))) {
  auto b = b_.mutable_values();
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
}

std::pair<Tensor, Tensor> LstmLayer::cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev) const {
  const std::size_t h = hidden();
  const Tensor gates = ad::add(ad::add(ad::matmul(x, w_x_), ad::matmul(h_prev, w_h_)), b_);
  const Tensor i = ad::sigmoid(ad::slice_cols(gates, 0, h));
  const Tensor f = ad::sigmoid(ad::slice_cols(gates, h, 2 * h));
  const Tensor g = ad::tanh(ad::slice_cols(gates, 2 * h, 3 * h));
  const Tensor o = ad::sigmoid(ad::slice_cols(gates, 3 * h, 4 * h));
  const Tensor c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

Tensor LstmLayer::run_reference(const Tensor& x, std::span<const std::uint8_t> mask, bool reverse) const {
  const std::size_t steps = x.dim(0), h = hidden();
  if (steps == 0) throw Error(ErrorCode::EmptySequence, "empty sequence");
  Tensor hs = Tensor::zeros({1, h});
  Tensor cs = Tensor::zeros({1, h});
  std::vector<Tensor> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    if (!mask[t]) {
      out[t] = Tensor::zeros({1, h});
      continue;
    }
    std::tie(hs, cs) = cell(ad::slice_rows(x, t, t + 1), hs, cs);
    out[t] = hs;
  }
  return ad::concat(out, 0);
}

namespace {

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Recurrence over precomputed input projections xp = x W_x + b, [T, 4H].
Tensor lstm_recurrence(const Tensor& xp, const Tensor& w_h, std::span<const std::uint8_t> mask, bool reverse) {
  const std::size_t steps = xp.dim(0), h = w_h.dim(0), g4 = 4 * h;
  ad::detail::check_finite(xp, "lstm");
  ad::detail::check_finite(w_h, "lstm");

  // Per step: gate activations (i, f, g, o), c, tanh(c), and the previous h, c.
  struct Saved {
    std::vector<double> gates, c, tanh_c, h_prev, c_prev;
  };
  auto saved = std::make_shared<std::vector<Saved>>(steps);
  std::vector<double> out(steps * h, 0.0);
  std::vector<double> hv(h, 0.0), cv(h, 0.0), pre(g4);
  const double* wh = w_h.values().data();
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    if (!mask[t]) continue;
    Saved& s = (*saved)[t];
    s.h_prev = hv;
    s.c_prev = cv;
    std::copy_n(xp.values().data() + t * g4, g4, pre.data());
    for (std::size_t p = 0; p < h; ++p) {
      const double hp = hv[p];
      if (hp == 0.0) continue;
      const double* row = wh + p * g4;
      for (std::size_t j = 0; j < g4; ++j) pre[j] += hp * row[j];
    }
    s.gates.resize(g4);
    s.c.resize(h);
    s.tanh_c.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigm(pre[j]);
      const double fg = sigm(pre[h + j]);
      const double gg = std::tanh(pre[2 * h + j]);
      const double og = sigm(pre[3 * h + j]);
      s.gates[j] = ig;
      s.gates[h + j] = fg;
      s.gates[2 * h + j] = gg;
      s.gates[3 * h + j] = og;
      cv[j] = fg * cv[j] + ig * gg;
      s.c[j] = cv[j];
      s.tanh_c[j] = std::tanh(cv[j]);
      hv[j] = og * s.tanh_c[j];
      out[t * h + j] = hv[j];
    }
  }

  Tensor r = ad::detail::make_result({steps, h}, std::move(out), {xp, w_h}, "lstm");
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  ad::detail::set_backward(r, [saved, keep = std::move(keep), steps, h, g4, reverse](ad::Node& self) {
    ad::Node& pxp = *self.parents[0];
    ad::Node& pwh = *self.parents[1];
    std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), da(g4);
    for (std::size_t k = 0; k < steps; ++k) {
      // Walk the processing order backwards.
      const std::size_t t = reverse ? k : steps - 1 - k;
      if (!keep[t]) continue;
      const Saved& s = (*saved)[t];
      for (std::size_t j = 0; j < h; ++j) {
        const double dh = self.grad[t * h + j] + dh_next[j];
        const double ig = s.gates[j], fg = s.gates[h + j], gg = s.gates[2 * h + j], og = s.gates[3 * h + j];
        const double dc = dc_next[j] + dh * og * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
        da[j] = dc * gg * ig * (1.0 - ig);
        da[h + j] = dc * s.c_prev[j] * fg * (1.0 - fg);
        da[2 * h + j] = dc * ig * (1.0 - gg * gg);
        da[3 * h + j] = dh * s.tanh_c[j] * og * (1.0 - og);
        dc_next[j] = dc * fg;
      }
      if (pxp.requires_grad) {
        double* gx = pxp.ensure_grad().data() + t * g4;
        for (std::size_t j = 0; j < g4; ++j) gx[j] += da[j];
      }
      if (pwh.requires_grad) {
        auto& gw = pwh.ensure_grad();
        for (std::size_t p = 0; p < h; ++p) {
          const double hp = s.h_prev[p];
          if (hp == 0.0) continue;
          for (std::size_t j = 0; j < g4; ++j) gw[p * g4 + j] += hp * da[j];
        }
      }
      for (std::size_t p = 0; p < h; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g4; ++j) acc += da[j] * pwh.value[p * g4 + j];
        dh_next[p] = acc;
      }
    }
  });
  return r;
}

}  // namespace

Tensor LstmLayer::run(const Tensor& x, std::span<const std::uint8_t> mask, bool reverse) const {
  if (x.dim(0) == 0) throw Error(ErrorCode::EmptySequence, "empty sequence");
  if (mask.size() != x.dim(0)) throw Error(ErrorCode::ShapeMismatch, "mask length does not match sequence");
  return lstm_recurrence(ad::add(ad::matmul(x, w_x_), b_), w_h_, mask, reverse);
}

// ---------------------------------------------------------------------------
// GRU

GruLayer::GruLayer(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                   std::size_t hidden)
    : w_x_(store.add(name + ".w_x", init.fan_in({in, 3 * hidden}, in + hidden))),
      w_h_(store.add(name + ".w_h", init.fan_in({hidden, 3 * hidden}, in + hidden))),
      b_x_(store.add(name + ".b_x", init.fan_in({3 * hidden}, in + hidden))),
      b_h_(store.add(name + ".b_h", init.fan_in({3 * hidden}, in + hidden))) {}

Tensor GruLayer::run(const Tensor& x, std::span<const std::uint8_t> mask, bool reverse) const {
  const std::size_t steps = x.dim(0), h = hidden();
  if (steps == 0) throw Error(ErrorCode::EmptySequence, "empty sequence");
  const Tensor xp = ad::add(ad::matmul(x, w_x_), b_x_);
  Tensor hs = Tensor::zeros({1, h});
  std::vector<Tensor> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    if (!mask[t]) {
      out[t] = Tensor::zeros({1, h});
      continue;
    }
    const Tensor xt = ad::slice_rows(xp, t, t + 1);
    const Tensor hp = ad::add(ad::matmul(hs, w_h_), b_h_);
    const Tensor r = ad::sigmoid(ad::add(ad::slice_cols(xt, 0, h), ad::slice_cols(hp, 0, h)));
    const Tensor z = ad::sigmoid(ad::add(ad::slice_cols(xt, h, 2 * h), ad::slice_cols(hp, h, 2 * h)));
    const Tensor n = ad::tanh(ad::add(ad::slice_cols(xt, 2 * h, 3 * h), ad::mul(r, ad::slice_cols(hp, 2 * h, 3 * h))));
    // h = (1 - z) n + z h_prev = n + z (h_prev - n)
    hs = ad::add(n, ad::mul(z, ad::sub(hs, n)));
    out[t] = hs;
  }
  return ad::concat(out, 0);
}

std::string_view rnn_name(RnnKind kind) {
  switch (kind) {
    case RnnKind::BiLstm: return "bilstm";
    case RnnKind::Lstm: return "lstm";
    case RnnKind::BiGru: return "bigru";
    case RnnKind::BiLstm2: return "bilstm2";
  }
  return "?";
}

RnnKind parse_rnn(std::string_view name) {
  for (auto k : {RnnKind::BiLstm, RnnKind::Lstm, RnnKind::BiGru, RnnKind::BiLstm2}) {
    if (rnn_name(k) == name) return k;
  }
  throw Error(ErrorCode::ConfigError, "unknown rnn kind '" + std::string(name) + "'");
}

SequenceEncoder::SequenceEncoder(ParameterStore& store, Initializer& init, RnnKind kind, std::size_t in,
                                 std::size_t hidden, bool forward_only)
    : kind_(kind), bidirectional_(kind != RnnKind::Lstm && !forward_only), hidden_(hidden) {
  const std::size_t dirs = bidirectional_ ? 2 : 1;
  const char* dir_names[] = {"fwd", "bwd"};
  if (kind == RnnKind::BiGru) {
    for (std::size_t d = 0; d < dirs; ++d) {
      gru_.emplace_back(store, init, std::string("encoder.gru.") + dir_names[d], in, hidden);
    }
    return;
  }
  const std::size_t layers = kind == RnnKind::BiLstm2 ? 2 : 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t layer_in = l == 0 ? in : dirs * hidden;
    const std::string prefix = l == 0 ? "encoder.lstm." : "encoder.lstm" + std::to_string(l + 1) + ".";
    std::vector<LstmLayer> layer;
    for (std::size_t d = 0; d < dirs; ++d) layer.emplace_back(store, init, prefix + dir_names[d], layer_in, hidden);
    lstm_.push_back(std::move(layer));
  }
}

std::size_t SequenceEncoder::out_dim() const { return (bidirectional_ ? 2 : 1) * hidden_; }

Tensor SequenceEncoder::run_layer(std::size_t layer, const Tensor& x, std::span<const std::uint8_t> mask) const {
  std::vector<Tensor> parts;
  if (kind_ == RnnKind::BiGru) {
    for (std::size_t d = 0; d < gru_.size(); ++d) parts.push_back(gru_[d].run(x, mask, d == 1));
  } else {
    for (std::size_t d = 0; d < lstm_[layer].size(); ++d) parts.push_back(lstm_[layer][d].run(x, mask, d == 1));
  }
  return parts.size() == 1 ? parts[0] : ad::concat(parts, 1);
}

Tensor SequenceEncoder::forward(const Tensor& x, std::span<const std::uint8_t> mask) const {
  if (x.dim(0) == 0 || std::find(mask.begin(), mask.end(), 1) == mask.end()) {
    throw Error(ErrorCode::EmptySequence, "sequence has no real steps");
  }
  Tensor h = run_layer(0, x, mask);
  for (std::size_t l = 1; l < lstm_.size(); ++l) h = run_layer(l, h, mask);
  return h;
}

// ---------------------------------------------------------------------------

std::string_view attention_name(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Bilinear: return "bilinear";
    case AttentionKind::Dot: return "dot";
    case AttentionKind::ScaledDot: return "scaled-dot";
    case AttentionKind::Cosine: return "cosine";
  }
  return "?";
}

AttentionKind parse_attention(std::string_view name) {
  for (auto k : {AttentionKind::Bilinear, AttentionKind::Dot, AttentionKind::ScaledDot, AttentionKind::Cosine}) {
    if (attention_name(k) == name) return k;
  }
  throw Error(ErrorCode::ConfigError, "unknown attention kind '" + std::string(name) + "'");
}

Attention::Attention(ParameterStore& store, Initializer& init, AttentionKind kind, std::size_t dim)
    : kind_(kind), dim_(dim) {
  if (kind == AttentionKind::Bilinear) w_s_ = store.add("attention.w_s", init.fan_in({dim, dim}, dim));
}

Tensor bilinear_scores(const Tensor& a, const Tensor& b, const Tensor& w_s) { return ad::bilinear(a, w_s, b); }

Tensor Attention::scores(const Tensor& a, const Tensor& b) const {
  switch (kind_) {
    case AttentionKind::Bilinear: return bilinear_scores(a, b, w_s_);
    case AttentionKind::Dot: return ad::matmul(a, ad::transpose(b));
    case AttentionKind::ScaledDot:
      return ad::scale(ad::matmul(a, ad::transpose(b)), 1.0 / std::sqrt(static_cast<double>(dim_)));
    case AttentionKind::Cosine: {
      const Tensor na = ad::sqrt(ad::sum(ad::mul(a, a), 1));
      const Tensor nb = ad::sqrt(ad::sum(ad::mul(b, b), 1));
      const Tensor outer = ad::matmul(ad::reshape(na, {a.dim(0), 1}), ad::reshape(nb, {1, b.dim(0)}));
      return ad::div(ad::matmul(a, ad::transpose(b)), ad::add_scalar(outer, 1e-8));
    }
  }
  return {};
}

}  // namespace interbin::nn
