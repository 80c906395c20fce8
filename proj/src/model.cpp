#include "interbin/model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>

#include "interbin/error.hpp"

namespace interbin::model {

namespace {

void require_positive(std::size_t v, const char* name) {
  if (v == 0) throw Error(ErrorCode::ConfigError, std::string(name) + " must be at least 1");
}

}  // namespace

std::string enhancement_name(const Enhancement& e) {
  if (e.concat && e.diff && e.product) return "full";
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(e.concat, "concat");
  add(e.diff, "diff");
  add(e.product, "product");
  return out.empty() ? "none" : out;
}

Enhancement parse_enhancement(std::string_view text) {
  if (text == "full") return {};
  Enhancement e{false, false, false};
  if (text == "none") return e;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const std::string_view part = text.substr(start, end - start);
    if (part == "concat") {
      e.concat = true;
    } else if (part == "diff") {
      e.diff = true;
    } else if (part == "product") {
      e.product = true;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown enhancement '" + std::string(part) + "'");
    }
    start = end + 1;
  }
  return e;
}

void ModelConfig::validate() const {
  require_positive(hidden, "hidden");
  require_positive(kernel_size, "kernel_size");
  require_positive(n_filters, "n_filters");
  require_positive(opcode_dim, "opcode_dim");
  require_positive(operand_dim, "operand_dim");
  require_positive(char_dim, "char_dim");
  require_positive(max_chars, "max_chars");
  require_positive(max_seq_len, "max_seq_len");
  for (std::size_t d : mlp_dims) require_positive(d, "mlp_dims");
  if (max_chars < kernel_size) throw Error(ErrorCode::ConfigError, "max_chars must be at least kernel_size");
  if (drop_char && drop_opcode && drop_operand) {
    throw Error(ErrorCode::ConfigError, "at least one instruction feature family must remain");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"hidden", hidden},
      {"kernel_size", kernel_size},
      {"n_filters", n_filters},
      {"opcode_dim", opcode_dim},
      {"operand_dim", operand_dim},
      {"char_dim", char_dim},
      {"max_chars", max_chars},
      {"max_seq_len", max_seq_len},
      {"mlp_dims", mlp_dims},
      {"attention", nn::attention_name(attention)},
      {"enhancement", enhancement_name(enhancement)},
      {"rnn", nn::rnn_name(rnn)},
      {"activation", nn::activation_name(activation)},
      {"drop_char", drop_char},
      {"drop_opcode", drop_opcode},
      {"drop_operand", drop_operand},
      {"drop_backward", drop_backward},
      {"drop_coattention", drop_coattention},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  try {
    c.hidden = doc.value("hidden", c.hidden);
    c.kernel_size = doc.value("kernel_size", c.kernel_size);
    c.n_filters = doc.value("n_filters", c.n_filters);
    c.opcode_dim = doc.value("opcode_dim", c.opcode_dim);
    c.operand_dim = doc.value("operand_dim", c.operand_dim);
    c.char_dim = doc.value("char_dim", c.char_dim);
    c.max_chars = doc.value("max_chars", c.max_chars);
    c.max_seq_len = doc.value("max_seq_len", c.max_seq_len);
    c.mlp_dims = doc.value("mlp_dims", c.mlp_dims);
    c.attention = nn::parse_attention(doc.value("attention", std::string("bilinear")));
    c.enhancement = parse_enhancement(doc.value("enhancement", std::string("full")));
    c.rnn = nn::parse_rnn(doc.value("rnn", std::string("bilstm")));
    c.activation = nn::parse_activation(doc.value("activation", std::string("relu")));
    c.drop_char = doc.value("drop_char", false);
    c.drop_opcode = doc.value("drop_opcode", false);
    c.drop_operand = doc.value("drop_operand", false);
    c.drop_backward = doc.value("drop_backward", false);
    c.drop_coattention = doc.value("drop_coattention", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

std::size_t Sequence::length() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

Sequence make_sequence(std::span<const std::string> lines, Arch arch, const asmnorm::ArchDictionaries& dicts,
                       const ModelConfig& config) {
  if (lines.empty()) throw Error(ErrorCode::EmptySequence, "sequence has no instructions");
  Sequence seq;
  seq.arch = arch;
  const std::size_t n = std::min(lines.size(), config.max_seq_len);
  seq.steps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    seq.steps.push_back(asmnorm::featurize(lines[i], arch, dicts, config.max_chars));
  }
  seq.mask.assign(n, 1);
  return seq;
}

Sequence pad_to(const Sequence& seq, std::size_t len, const asmnorm::ArchDictionaries& dicts,
                std::size_t max_chars) {
  Sequence out = seq;
  if (out.size() >= len) return out;
  asmnorm::InstructionFeatures pad;
  pad.arch = seq.arch;
  pad.chars.indices.assign(max_chars, asmnorm::CharTable::kPad);
  pad.chars.mask.assign(max_chars, 0);
  pad.opcode = -1;
  pad.operands.register_indicator.assign(dicts.registers(seq.arch).size(), 0);
  out.steps.resize(len, pad);
  out.mask.resize(len, 0);
  return out;
}

// ---------------------------------------------------------------------------

InterBinModel::InterBinModel(ModelConfig config, asmnorm::ArchDictionaries dicts, std::uint64_t seed)
    : config_(std::move(config)), dicts_(std::move(dicts)), init_(seed) {
  config_.validate();
  const auto act = config_.activation;
  if (!config_.drop_char) {
    chars_ = nn::CharConvEncoder(store_, init_, config_.char_dim, config_.n_filters, config_.kernel_size, act);
  }
  if (!config_.drop_opcode) opcodes_ = nn::OpcodeEmbedding(store_, init_, dicts_, config_.opcode_dim);
  if (!config_.drop_operand) operands_ = nn::OperandMap(store_, init_, dicts_, config_.operand_dim, act);
  encoder_ = nn::SequenceEncoder(store_, init_, config_.rnn, feature_dim(), config_.hidden, config_.drop_backward);
  if (!config_.drop_coattention) attention_ = nn::Attention(store_, init_, config_.attention, encoder_dim());
  ff_ = nn::FeedForward(store_, init_, "enhance.F", enhancement_dim(), encoder_dim(), act);
  std::size_t in = 2 * encoder_dim();
  for (std::size_t i = 0; i < config_.mlp_dims.size(); ++i) {
    mlp_.emplace_back(store_, init_, "mlp." + std::to_string(i), in, config_.mlp_dims[i]);
    in = config_.mlp_dims[i];
  }
  mlp_.emplace_back(store_, init_, "mlp.out", in, 2);
}

std::size_t InterBinModel::feature_dim() const {
  return config_.n_filters + config_.opcode_dim + config_.operand_dim;
}

std::size_t InterBinModel::enhancement_dim() const {
  const auto& e = config_.enhancement;
  return encoder_dim() * (1 + std::size_t{e.concat} + std::size_t{e.diff} + std::size_t{e.product});
}

Sequence InterBinModel::make_sequence(std::span<const std::string> lines, Arch arch) const {
  return model::make_sequence(lines, arch, dicts_, config_);
}

CharBank InterBinModel::char_bank(std::span<const Sequence* const> seqs) const {
  CharBank bank;
  if (config_.drop_char) return bank;
  std::vector<const asmnorm::CharIndices*> chars;
  for (const Sequence* s : seqs) {
    for (std::size_t t = 0; t < s->size(); ++t) {
      if (!s->mask[t]) continue;
      const auto& step = s->steps[t];
      if (bank.index.emplace(step.text, static_cast<std::int32_t>(chars.size())).second) {
        chars.push_back(&step.chars);
      }
    }
  }
  if (chars.empty()) throw Error(ErrorCode::EmptySequence, "no real instructions in batch");
  bank.rows = chars_.forward_many(chars);
  return bank;
}

Tensor InterBinModel::embed_instructions(const Sequence& seq, const CharBank* bank) const {
  const std::size_t t_len = seq.size();
  if (seq.mask.size() != t_len) throw Error(ErrorCode::ShapeMismatch, "mask length does not match sequence");
  if (seq.length() == 0) throw Error(ErrorCode::EmptySequence, "sequence has no real instructions");
  const bool padded = seq.length() != t_len;
  std::vector<Tensor> parts;

  if (config_.drop_char) {
    parts.push_back(Tensor::zeros({t_len, config_.n_filters}));
  } else {
    CharBank local;
    if (bank == nullptr) {
      const Sequence* one[] = {&seq};
      local = char_bank(one);
      bank = &local;
    }
    std::vector<std::int32_t> idx(t_len, -1);
    for (std::size_t t = 0; t < t_len; ++t) {
      if (!seq.mask[t]) continue;
      auto it = bank->index.find(seq.steps[t].text);
      if (it == bank->index.end()) throw Error(ErrorCode::IndexOutOfRange, "instruction missing from char bank");
      idx[t] = it->second;
    }
    parts.push_back(ad::embedding_gather(bank->rows, idx));
  }

  if (config_.drop_opcode) {
    parts.push_back(Tensor::zeros({t_len, config_.opcode_dim}));
  } else {
    std::vector<std::int32_t> idx(t_len, -1);
    for (std::size_t t = 0; t < t_len; ++t) {
      if (seq.mask[t]) idx[t] = seq.steps[t].opcode;
    }
    parts.push_back(opcodes_.forward(seq.arch, idx));
  }

  if (config_.drop_operand) {
    parts.push_back(Tensor::zeros({t_len, config_.operand_dim}));
  } else {
    std::vector<const asmnorm::OperandStats*> stats(t_len);
    for (std::size_t t = 0; t < t_len; ++t) stats[t] = &seq.steps[t].operands;
    Tensor ops = operands_.forward(seq.arch, stats);
    parts.push_back(padded ? ad::mask_rows(ops, seq.mask) : ops);
  }
  return ad::concat(parts, 1);
}

Tensor InterBinModel::encode(const Tensor& f, std::span<const std::uint8_t> mask) const {
  return encoder_.forward(f, mask);
}

Encoded InterBinModel::encode_sequence(const Sequence& seq, const CharBank* bank,
                                       const EnhanceWeights* weights) const {
  Encoded out{encode(embed_instructions(seq, bank), seq.mask), seq.mask, {}, {}, {}};
  if (!config_.drop_coattention) project(out, weights ? *weights : enhance_weights());
  return out;
}

// F([h ; h' ; h - h' ; h * h']) splits by row blocks of its weight:
//   h (W_h + W_d) + b  +  h' (W_c - W_d)  +  (h * h') W_p
// and h' = alpha H_other, so h' (W_c - W_d) = alpha (H_other (W_c - W_d)).
EnhanceWeights InterBinModel::enhance_weights() const {
  const auto& e = config_.enhancement;
  const Tensor& w = ff_.linear().weight();
  const std::size_t d = encoder_dim();
  std::size_t row = d;
  const Tensor w_h = ad::slice_rows(w, 0, d);
  Tensor w_c, w_d;
  if (e.concat) {
    w_c = ad::slice_rows(w, row, row + d);
    row += d;
  }
  if (e.diff) {
    w_d = ad::slice_rows(w, row, row + d);
    row += d;
  }
  EnhanceWeights out;
  out.self = e.diff ? ad::add(w_h, w_d) : w_h;
  if (e.concat || e.diff) out.cross = e.concat && e.diff ? ad::sub(w_c, w_d) : e.concat ? w_c : ad::scale(w_d, -1.0);
  if (e.product) out.product = ad::slice_rows(w, row, row + d);
  return out;
}

void InterBinModel::project(Encoded& side, const EnhanceWeights& w) const {
  side.self_proj = ad::add(ad::matmul(side.h, w.self), ff_.linear().bias());
  if (w.cross.defined()) side.cross_proj = ad::matmul(side.h, w.cross);
  side.product_weight = w.product;
}

Tensor InterBinModel::enhance(const Tensor& h, const Tensor& attended) const {
  if (h.shape() != attended.shape()) throw Error(ErrorCode::ShapeMismatch, "enhance: shape mismatch");
  const auto& e = config_.enhancement;
  std::vector<Tensor> parts{h};
  if (e.concat) parts.push_back(attended);
  if (e.diff) parts.push_back(ad::sub(h, attended));
  if (e.product) parts.push_back(ad::mul(h, attended));
  return parts.size() == 1 ? h : ad::concat(parts, 1);
}

Interaction InterBinModel::interact(const Encoded& a, const Encoded& b) const {
  if (config_.drop_coattention) throw Error(ErrorCode::ConfigError, "co-attention is ablated");
  if (a.h.dim(1) != b.h.dim(1)) throw Error(ErrorCode::ShapeMismatch, "interact: encoder widths differ");
  const std::size_t m = a.h.dim(0), n = b.h.dim(0);
  if (a.mask.size() != m || b.mask.size() != n) throw Error(ErrorCode::ShapeMismatch, "interact: mask length");
  Interaction out;
  out.scores = attention_.scores(a.h, b.h);
  std::vector<std::uint8_t> mask2d(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask2d[i * n + j] = a.mask[i] && b.mask[j];
  }
  out.alpha = ad::softmax(out.scores, 1, mask2d);
  out.beta = ad::softmax(out.scores, 0, mask2d);
  const Tensor beta_t = ad::transpose(out.beta);
  out.attended_a = ad::matmul(out.alpha, b.h);
  out.attended_b = ad::matmul(beta_t, a.h);

  Encoded pa = a, pb = b;
  if (!pa.self_proj.defined() || !pb.self_proj.defined()) {
    const EnhanceWeights w = enhance_weights();
    if (!pa.self_proj.defined()) project(pa, w);
    if (!pb.self_proj.defined()) project(pb, w);
  }
  const bool product = config_.enhancement.product;
  auto side = [&](const Encoded& self, const Encoded& other, const Tensor& weights, const Tensor& attended) {
    Tensor pre = self.self_proj;
    if (other.cross_proj.defined()) pre = ad::add(pre, ad::matmul(weights, other.cross_proj));
    if (product) pre = ad::add(pre, ad::matmul(ad::mul(self.h, attended), self.product_weight));
    return nn::activate(pre, ff_.activation());
  };
  out.tilde_a = side(pa, pb, out.alpha, out.attended_a);
  out.tilde_b = side(pb, pa, beta_t, out.attended_b);
  return out;
}

Tensor InterBinModel::bypass(const Encoded& side) const { return ff_.forward(ad::pad_cols(side.h, enhancement_dim())); }

Tensor InterBinModel::aggregate(const Tensor& tilde, std::span<const std::uint8_t> mask) const {
  return ad::sum(ad::mask_rows(tilde, mask), 0);
}

Tensor InterBinModel::match_head(const Tensor& r_a, const Tensor& r_b) const {
  if (r_a.shape() != r_b.shape()) throw Error(ErrorCode::ShapeMismatch, "match_head: r_a and r_b differ");
  const Tensor both[] = {r_a, r_b};
  Tensor x = ad::concat(both, 0);
  for (std::size_t i = 0; i + 1 < mlp_.size(); ++i) x = ad::relu(mlp_[i].forward(x));
  return mlp_.back().forward(x);
}

MatchOutput InterBinModel::match(const Encoded& a, const Encoded& b, bool retain) const {
  MatchOutput out;
  Tensor tilde_a, tilde_b;
  if (config_.drop_coattention) {
    tilde_a = bypass(a);
    tilde_b = bypass(b);
  } else {
    Interaction inter = interact(a, b);
    tilde_a = inter.tilde_a;
    tilde_b = inter.tilde_b;
    if (retain) {
      const auto v = inter.scores.values();
      out.attention.emplace(v.begin(), v.end());
      out.rows = inter.scores.dim(0);
      out.cols = inter.scores.dim(1);
    }
  }
  const Tensor r_a = aggregate(tilde_a, a.mask);
  const Tensor r_b = aggregate(tilde_b, b.mask);
  if (retain) {
    out.r_a.emplace(r_a.values().begin(), r_a.values().end());
    out.r_b.emplace(r_b.values().begin(), r_b.values().end());
  }
  out.logits_tensor = match_head(r_a, r_b);
  out.logits = {out.logits_tensor.at(0), out.logits_tensor.at(1)};
  const double top = std::max(out.logits[0], out.logits[1]);
  const double e0 = std::exp(out.logits[0] - top), e1 = std::exp(out.logits[1] - top);
  out.probability_similar = e1 / (e0 + e1);
  return out;
}

MatchOutput InterBinModel::forward_pair(const Sequence& a, const Sequence& b, bool retain) const {
  const Sequence* both[] = {&a, &b};
  const CharBank bank = char_bank(both);
  const CharBank* bp = config_.drop_char ? nullptr : &bank;
  if (config_.drop_coattention) return match(encode_sequence(a, bp), encode_sequence(b, bp), retain);
  const EnhanceWeights w = enhance_weights();
  return match(encode_sequence(a, bp, &w), encode_sequence(b, bp, &w), retain);
}

std::vector<MatchOutput> InterBinModel::forward_batch(
    std::span<const std::pair<const Sequence*, const Sequence*>> pairs) const {
  std::vector<const Sequence*> unique;
  std::unordered_map<const Sequence*, std::size_t> slot;
  for (const auto& [a, b] : pairs) {
    for (const Sequence* s : {a, b}) {
      if (slot.emplace(s, unique.size()).second) unique.push_back(s);
    }
  }
  const CharBank bank = char_bank(unique);
  const CharBank* bp = config_.drop_char ? nullptr : &bank;
  std::vector<Encoded> encoded;
  encoded.reserve(unique.size());
  std::optional<EnhanceWeights> w;
  if (!config_.drop_coattention) w = enhance_weights();
  for (const Sequence* s : unique) encoded.push_back(encode_sequence(*s, bp, w ? &*w : nullptr));
  std::vector<MatchOutput> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(match(encoded[slot.at(a)], encoded[slot.at(b)]));
  return out;
}

// ---------------------------------------------------------------------------

Tensor pair_loss(const MatchOutput& out, int label) {
  if (label != 0 && label != 1) throw Error(ErrorCode::ValidationError, "label must be 0 or 1");
  const Tensor p = ad::softmax(out.logits_tensor, 0);
  return ad::scale(ad::log(ad::pick(p, static_cast<std::size_t>(label)), 1e-12), -1.0);
}

Tensor loss(std::span<const MatchOutput> outputs, std::span<const int> labels) {
  if (outputs.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "loss: outputs and labels differ");
  if (outputs.empty()) throw Error(ErrorCode::EmptyInput, "loss over an empty batch");
  Tensor total = pair_loss(outputs[0], labels[0]);
  for (std::size_t i = 1; i < outputs.size(); ++i) total = ad::add(total, pair_loss(outputs[i], labels[i]));
  return total;
}

}  // namespace interbin::model
