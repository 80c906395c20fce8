#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "interbin/error.hpp"
#include "interbin/layers.hpp"

using namespace interbin;
using ad::Tensor;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix rows_of(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Textbook LSTM over the unmasked steps, gates ordered i, f, g, o.
Matrix lstm_oracle(const Matrix& x, const std::vector<std::uint8_t>& mask, const Tensor& wx, const Tensor& wh,
                   const Tensor& b, bool reverse) {
  const std::size_t h = wh.dim(0), steps = x.size();
  std::vector<double> hs(h, 0.0), cs(h, 0.0);
  Matrix out(steps, std::vector<double>(h, 0.0));
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    if (!mask[t]) continue;
    std::vector<double> z(4 * h);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      double s = b.at(j);
      for (std::size_t i = 0; i < x[t].size(); ++i) s += x[t][i] * wx.at(i, j);
      for (std::size_t i = 0; i < h; ++i) s += hs[i] * wh.at(i, j);
      z[j] = s;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double in = sig(z[j]), fg = sig(z[h + j]), g = std::tanh(z[2 * h + j]), o = sig(z[3 * h + j]);
      cs[j] = fg * cs[j] + in * g;
      hs[j] = o * std::tanh(cs[j]);
    }
    out[t] = hs;
  }
  return out;
}

// r, z, n ordering; n uses r * (W_hn h + b_hn).
Matrix gru_oracle(const Matrix& x, const std::vector<std::uint8_t>& mask, const Tensor& wx, const Tensor& wh,
                  const Tensor& bx, const Tensor& bh, bool reverse) {
  const std::size_t h = wh.dim(0), steps = x.size();
  std::vector<double> hs(h, 0.0);
  Matrix out(steps, std::vector<double>(h, 0.0));
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    if (!mask[t]) continue;
    std::vector<double> gx(3 * h), gh(3 * h);
    for (std::size_t j = 0; j < 3 * h; ++j) {
      gx[j] = bx.at(j);
      gh[j] = bh.at(j);
      for (std::size_t i = 0; i < x[t].size(); ++i) gx[j] += x[t][i] * wx.at(i, j);
      for (std::size_t i = 0; i < h; ++i) gh[j] += hs[i] * wh.at(i, j);
    }
    std::vector<double> next(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double r = sig(gx[j] + gh[j]), z = sig(gx[h + j] + gh[h + j]);
      const double n = std::tanh(gx[2 * h + j] + r * gh[2 * h + j]);
      next[j] = (1.0 - z) * n + z * hs[j];
    }
    hs = next;
    out[t] = hs;
  }
  return out;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = d(rng);
  return Tensor::from({r, c}, std::move(v));
}

double max_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b[r][c]));
  }
  return worst;
}

// Fixed random weighting so every output element reaches the loss.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  return ad::sum_all(ad::mul(y, random_matrix(y.rows(), y.cols(), seed)));
}

}  // namespace

TEST_CASE("linear layer computes x W + b") {
  nn::ParameterStore store;
  nn::Initializer init(4);
  nn::Linear lin(store, init, "lin", 3, 2);
  const Tensor x = random_matrix(4, 3, 9);
  const auto y = rows_of(lin.forward(x));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = lin.bias().at(c);
      for (std::size_t i = 0; i < 3; ++i) s += x.at(r, i) * lin.weight().at(i, c);
      CHECK(y[r][c] == doctest::Approx(s).epsilon(1e-14));
    }
  }
  CHECK(store.contains("lin.weight"));
  CHECK(store.scalar_count() == 8);
}

TEST_CASE("fan-in initialization stays inside its bound") {
  nn::Initializer init(2);
  const Tensor w = init.fan_in({50, 40}, 25);
  for (double v : w.values()) CHECK(std::abs(v) <= 0.2);
  CHECK(w.requires_grad());
  nn::Initializer again(2);
  const Tensor w2 = again.fan_in({50, 40}, 25);
  CHECK(std::equal(w.values().begin(), w.values().end(), w2.values().begin()));
}

TEST_CASE("duplicate parameter names are rejected") {
  nn::ParameterStore store;
  store.add("w", Tensor::zeros({1}));
  CHECK_THROWS_AS(store.add("w", Tensor::zeros({1})), Error);
  CHECK_THROWS_AS(store.get("missing"), Error);
}

TEST_CASE("fused LSTM matches the step-by-step reference and a scalar oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    nn::ParameterStore store;
    nn::Initializer init(seed);
    nn::LstmLayer layer(store, init, "l", 4, 3);
    const Tensor x = random_matrix(6, 4, seed + 100);
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 0, 0};
    if (seed % 2 == 0) mask = {1, 1, 1, 1, 1, 1};
    for (bool reverse : {false, true}) {
      const auto fused = rows_of(layer.run(x, mask, reverse));
      const auto ref = rows_of(layer.run_reference(x, mask, reverse));
      const auto oracle = lstm_oracle(rows_of(x), mask, store.get("l.w_x"), store.get("l.w_h"), store.get("l.b"),
                                      reverse);
      CHECK(max_diff(fused, ref) <= 1e-12);
      CHECK(max_diff(fused, oracle) <= 1e-12);
    }
  }
}

TEST_CASE("fused LSTM gradients") {
  nn::ParameterStore store;
  nn::Initializer init(8);
  nn::LstmLayer layer(store, init, "l", 3, 2);
  Tensor x = random_matrix(5, 3, 77);
  const std::vector<std::uint8_t> mask{1, 1, 1, 0, 0};
  for (bool reverse : {false, true}) {
    auto params = store.tensors();
    const auto report = ad::grad_check([&] { return probe(layer.run(x, mask, reverse), 5); }, params);
    CHECK(report.max_relative_error < 1e-6);
  }
}

TEST_CASE("GRU matches a scalar oracle and its gradients check") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    nn::ParameterStore store;
    nn::Initializer init(seed);
    nn::GruLayer layer(store, init, "g", 3, 4);
    const Tensor x = random_matrix(5, 3, seed + 50);
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 0};
    for (bool reverse : {false, true}) {
      const auto got = rows_of(layer.run(x, mask, reverse));
      const auto oracle = gru_oracle(rows_of(x), mask, store.get("g.w_x"), store.get("g.w_h"), store.get("g.b_x"),
                                     store.get("g.b_h"), reverse);
      CHECK(max_diff(got, oracle) <= 1e-12);
    }
    auto params = store.tensors();
    const auto report = ad::grad_check([&] { return probe(layer.run(x, mask, true), 3); }, params);
    CHECK(report.max_relative_error < 1e-6);
  }
}

TEST_CASE("masked steps emit zero rows and do not disturb real steps") {
  nn::ParameterStore store;
  nn::Initializer init(12);
  nn::LstmLayer layer(store, init, "l", 3, 2);
  const Tensor x = random_matrix(4, 3, 4);
  const Tensor padded = ad::concat(std::vector<Tensor>{x, random_matrix(3, 3, 99)}, 0);
  const std::vector<std::uint8_t> short_mask{1, 1, 1, 1};
  const std::vector<std::uint8_t> long_mask{1, 1, 1, 1, 0, 0, 0};
  for (bool reverse : {false, true}) {
    const auto a = rows_of(layer.run(x, short_mask, reverse));
    const auto b = rows_of(layer.run(padded, long_mask, reverse));
    for (std::size_t t = 0; t < 4; ++t) CHECK(a[t] == b[t]);
    for (std::size_t t = 4; t < 7; ++t) CHECK(b[t] == std::vector<double>(2, 0.0));
  }
}

TEST_CASE("a palindrome read by mirrored directions gives mirrored states") {
  nn::ParameterStore store;
  nn::Initializer init(6);
  nn::SequenceEncoder enc(store, init, nn::RnnKind::BiLstm, 3, 2, false);
  for (const char* part : {".w_x", ".w_h", ".b"}) {
    const auto src = store.get(std::string("encoder.lstm.fwd") + part).values();
    auto dst = store.get(std::string("encoder.lstm.bwd") + part).mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  const Tensor half = random_matrix(3, 3, 31);
  std::vector<Tensor> rows;
  for (std::size_t t : {0, 1, 2, 1, 0}) rows.push_back(ad::slice_rows(half, t, t + 1));
  const Tensor x = ad::concat(rows, 0);
  const std::vector<std::uint8_t> mask(5, 1);
  const auto h = rows_of(enc.forward(x, mask));
  REQUIRE(h[0].size() == 4);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(h[t][0] == doctest::Approx(h[4 - t][2]).epsilon(1e-14));
    CHECK(h[t][1] == doctest::Approx(h[4 - t][3]).epsilon(1e-14));
  }
}

TEST_CASE("sequence encoder widths and errors") {
  struct Case {
    nn::RnnKind kind;
    bool forward_only;
    std::size_t width;
  };
  for (const auto& c : {Case{nn::RnnKind::BiLstm, false, 6}, Case{nn::RnnKind::BiLstm, true, 3},
                        Case{nn::RnnKind::Lstm, false, 3}, Case{nn::RnnKind::BiGru, false, 6},
                        Case{nn::RnnKind::BiLstm2, false, 6}}) {
    nn::ParameterStore store;
    nn::Initializer init(1);
    nn::SequenceEncoder enc(store, init, c.kind, 4, 3, c.forward_only);
    CHECK(enc.out_dim() == c.width);
    const std::vector<std::uint8_t> mask{1, 1, 0};
    CHECK(enc.forward(random_matrix(3, 4, 2), mask).shape() == ad::Shape{3, c.width});
    const std::vector<std::uint8_t> none{0, 0, 0};
    CHECK_THROWS_AS(enc.forward(random_matrix(3, 4, 2), none), Error);
  }
  for (auto k : {nn::RnnKind::BiLstm, nn::RnnKind::Lstm, nn::RnnKind::BiGru, nn::RnnKind::BiLstm2}) {
    CHECK(nn::parse_rnn(nn::rnn_name(k)) == k);
  }
  CHECK_THROWS_AS(nn::parse_rnn("transformer"), Error);
}

TEST_CASE("char convolution matches a direct window scan") {
  nn::ParameterStore store;
  nn::Initializer init(3);
  const std::size_t dim = 3, filters = 4, k = 3;
  nn::CharConvEncoder conv(store, init, dim, filters, k, nn::Activation::ReLU);
  const auto& table = asmnorm::CharTable::canonical();
  const auto chars = asmnorm::char_indices("MOV~R1,#4", table, 14);
  const auto got = rows_of(conv.forward(chars));
  REQUIRE(got.size() == 1);
  const Tensor& emb = store.get("char.embedding");
  const Tensor& w = store.get("char.conv.kernels");
  const Tensor& b = store.get("char.conv.bias");
  auto embed = [&](std::int32_t idx, std::size_t d) { return idx < 0 ? 0.0 : emb.at(static_cast<std::size_t>(idx), d); };
  const std::size_t valid = std::min(chars.length(), chars.indices.size() - k + 1);
  for (std::size_t f = 0; f < filters; ++f) {
    double best = -1e300;
    for (std::size_t start = 0; start < valid; ++start) {
      double s = b.at(f);
      for (std::size_t o = 0; o < k; ++o) {
        for (std::size_t d = 0; d < dim; ++d) s += embed(chars.indices[start + o], d) * w.at(f, o * dim + d);
      }
      best = std::max(best, std::max(0.0, s));
    }
    CHECK(got[0][f] == doctest::Approx(best).epsilon(1e-13));
  }
}

TEST_CASE("char convolution batches rows independently and checks its input") {
  nn::ParameterStore store;
  nn::Initializer init(5);
  nn::CharConvEncoder conv(store, init, 4, 5, 3, nn::Activation::ReLU);
  const auto& table = asmnorm::CharTable::canonical();
  const auto a = asmnorm::char_indices("ADD~EAX,1", table, 12);
  const auto b = asmnorm::char_indices("RET", table, 12);
  const asmnorm::CharIndices* both[] = {&a, &b};
  const auto many = rows_of(conv.forward_many(both));
  CHECK(many[0] == rows_of(conv.forward(a))[0]);
  CHECK(many[1] == rows_of(conv.forward(b))[0]);

  auto params = store.tensors();
  const auto report = ad::grad_check([&] { return probe(conv.forward_many(both), 8); }, params);
  CHECK(report.max_relative_error < 1e-6);

  const auto empty = asmnorm::char_indices("", table, 12);
  CHECK_THROWS_AS(conv.forward(empty), Error);
  const auto short_text = asmnorm::char_indices("AB", table, 2);
  CHECK_THROWS_AS(conv.forward(short_text), Error);
}

TEST_CASE("opcode embedding gathers per-architecture rows") {
  const auto dicts = fixtures::dictionaries();
  nn::ParameterStore store;
  nn::Initializer init(2);
  nn::OpcodeEmbedding emb(store, init, dicts, 5);
  CHECK(emb.table(Arch::X86).dim(0) == dicts.opcodes(Arch::X86).size());
  CHECK(emb.table(Arch::ARM).dim(0) == dicts.opcodes(Arch::ARM).size());
  const std::vector<std::int32_t> idx{2, 0, 2};
  const auto rows = rows_of(emb.forward(Arch::ARM, idx));
  const auto table = rows_of(emb.table(Arch::ARM));
  CHECK(rows[0] == table[2]);
  CHECK(rows[1] == table[0]);
  CHECK(rows[2] == table[2]);
  CHECK_THROWS_AS(emb.table(Arch::MIPS), Error);
}

TEST_CASE("operand map is affine in the counts and register indicator") {
  const auto dicts = fixtures::dictionaries();
  nn::ParameterStore store;
  nn::Initializer init(7);
  nn::OperandMap map(store, init, dicts, 4, nn::Activation::Identity);
  const std::size_t regs = dicts.registers(Arch::X86).size();
  asmnorm::OperandStats s;
  s.n_string_literals = 1;
  s.n_integer_literals = 2;
  s.n_function_names = 0;
  s.n_other_symbols = 3;
  s.register_indicator.assign(regs, 0);
  s.register_indicator[1] = 1;
  const asmnorm::OperandStats* one[] = {&s};
  const auto y = rows_of(map.forward(Arch::X86, one));
  const Tensor& wc = store.get("operand.counts");
  const Tensor& wr = store.get("operand.registers.x86");
  const Tensor& b = store.get("operand.bias");
  for (std::size_t c = 0; c < 4; ++c) {
    const double expect = 1 * wc.at(0, c) + 2 * wc.at(1, c) + 3 * wc.at(3, c) + wr.at(1, c) + b.at(c);
    CHECK(y[0][c] == doctest::Approx(expect).epsilon(1e-14));
  }
  s.register_indicator.push_back(0);
  CHECK_THROWS_AS(map.forward(Arch::X86, one), Error);
  CHECK_THROWS_AS(map.forward(Arch::MIPS, one), Error);
}

TEST_CASE("attention score kinds") {
  nn::ParameterStore store;
  nn::Initializer init(1);
  const Tensor a = random_matrix(3, 4, 10), b = random_matrix(2, 4, 11);
  auto dot = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(j, k);
    return s;
  };
  auto norm = [](const Tensor& t, std::size_t r) {
    double s = 0.0;
    for (std::size_t k = 0; k < t.cols(); ++k) s += t.at(r, k) * t.at(r, k);
    return std::sqrt(s);
  };
  const auto d = rows_of(nn::Attention(store, init, nn::AttentionKind::Dot, 4).scores(a, b));
  const auto sd = rows_of(nn::Attention(store, init, nn::AttentionKind::ScaledDot, 4).scores(a, b));
  const auto cs = rows_of(nn::Attention(store, init, nn::AttentionKind::Cosine, 4).scores(a, b));
  nn::Attention bil(store, init, nn::AttentionKind::Bilinear, 4);
  const auto bl = rows_of(bil.scores(a, b));
  const Tensor& w = store.get("attention.w_s");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(d[i][j] == doctest::Approx(dot(i, j)).epsilon(1e-14));
      CHECK(sd[i][j] == doctest::Approx(dot(i, j) / 2.0).epsilon(1e-14));
      CHECK(cs[i][j] == doctest::Approx(dot(i, j) / (norm(a, i) * norm(b, j))).epsilon(1e-7));
      CHECK(std::abs(cs[i][j]) <= 1.0);
      double s = 0.0;
      for (std::size_t p = 0; p < 4; ++p) {
        for (std::size_t q = 0; q < 4; ++q) s += a.at(i, p) * w.at(p, q) * b.at(j, q);
      }
      CHECK(bl[i][j] == doctest::Approx(s).epsilon(1e-13));
    }
  }
  CHECK(store.entries().size() == 1);
  for (auto k : {nn::AttentionKind::Bilinear, nn::AttentionKind::Dot, nn::AttentionKind::ScaledDot,
                 nn::AttentionKind::Cosine}) {
    CHECK(nn::parse_attention(nn::attention_name(k)) == k);
  }
  CHECK_THROWS_AS(nn::parse_attention("additive"), Error);
}

TEST_CASE("activations") {
  const Tensor x = Tensor::from({1, 3}, {-2.0, 0.0, 1.5});
  CHECK(rows_of(nn::activate(x, nn::Activation::ReLU))[0] == std::vector<double>{0.0, 0.0, 1.5});
  CHECK(rows_of(nn::activate(x, nn::Activation::Identity))[0] == std::vector<double>{-2.0, 0.0, 1.5});
  CHECK(nn::activate(x, nn::Activation::Tanh).at(2) == doctest::Approx(std::tanh(1.5)));
  CHECK(nn::activate(x, nn::Activation::Sigmoid).at(1) == doctest::Approx(0.5));
  for (auto a : {nn::Activation::ReLU, nn::Activation::Tanh, nn::Activation::Sigmoid, nn::Activation::Identity}) {
    CHECK(nn::parse_activation(nn::activation_name(a)) == a);
  }
  CHECK_THROWS_AS(nn::parse_activation("gelu"), Error);
}
