// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,7] [--json report.json]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "interbin/data.hpp"
#include "interbin/evaluation.hpp"
#include "interbin/training.hpp"
#include "line_fuzzer.hpp"

using namespace interbin;
using ad::Tensor;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  json detail = json::object();
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// Desk-scale model used by the training criteria.
model::ModelConfig desk_model() {
  model::ModelConfig c;
  c.hidden = 16;
  c.n_filters = 16;
  c.char_dim = 8;
  c.opcode_dim = 8;
  c.operand_dim = 8;
  c.max_chars = 24;
  c.mlp_dims = {32};
  return c;
}

struct World {
  std::vector<data::FunctionRecord> records;
  asmnorm::ArchDictionaries dicts;
  data::PairSet pairs;
};

World make_world(const data::SynthOptions& so, const data::MakePairsOptions& po) {
  World w;
  w.records = data::synthesize(so);
  w.dicts = asmnorm::build_dictionaries(data::raw_corpus(w.records), data::function_names(w.records));
  w.pairs = data::make_pairs(w.records, po);
  return w;
}

// The bundled ranking fixture: 200 identities in two dialects, 20 negatives.
World ranking_fixture() {
  data::SynthOptions so;
  so.n_functions = 200;
  so.min_ops = 3;
  so.max_ops = 7;
  data::MakePairsOptions po;
  po.task = data::Task::Ranking;
  po.arch_pair = {{Arch::X86, Arch::ARM}};
  po.num_neg = 20;
  po.seed = 3;
  po.ratios = {0.6, 0.15, 0.25};
  return make_world(so, po);
}

train::TrainConfig ranking_train(std::uint64_t seed) {
  train::TrainConfig c;
  c.task = data::Task::Ranking;
  c.lr = 3e-3;
  c.batch_size = 32;
  c.epochs = 100;
  c.num_neg = 20;
  c.seed = seed;
  c.record_wall_time = false;
  return c;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = d(rng);
  return Tensor::from({r, c}, std::move(v));
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto dicts = fixtures::dictionaries();

  double e2e = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model::InterBinModel m(fixtures::tiny_config(), dicts, seed);
    const auto x86 = fixtures::x86_block(), arm = fixtures::arm_block();
    const std::vector<std::string> la(x86.begin(), x86.begin() + 3), lb(arm.begin(), arm.begin() + 2);
    const auto a = m.make_sequence(la, Arch::X86);
    const auto b = m.make_sequence(lb, Arch::ARM);
    auto params = m.parameters().tensors();
    for (int label : {0, 1}) {
      const auto r = ad::grad_check([&] { return model::pair_loss(m.forward_pair(a, b), label); }, params);
      e2e = std::max(e2e, r.max_relative_error);
    }
  }

  std::mt19937_64 rng(11);
  std::map<std::string, double> layers;
  auto probe = [&](const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    return ad::sum_all(ad::mul(y, random_matrix(y.rows(), y.cols(), g)));
  };
  auto check = [&](const std::string& name, nn::ParameterStore& store, const std::function<Tensor()>& f) {
    auto params = store.tensors();
    layers[name] = ad::grad_check(f, params).max_relative_error;
  };
  {
    nn::ParameterStore s;
    nn::Initializer init(1);
    nn::Linear lin(s, init, "lin", 4, 3);
    const Tensor x = random_matrix(5, 4, rng);
    check("linear", s, [&] { return probe(lin.forward(x), 1); });
  }
  {
    nn::ParameterStore s;
    nn::Initializer init(2);
    nn::CharConvEncoder conv(s, init, 4, 5, 3, nn::Activation::Tanh);
    const auto& table = asmnorm::CharTable::canonical();
    const auto c1 = asmnorm::char_indices("MOV~EAX,0", table, 12), c2 = asmnorm::char_indices("RET", table, 12);
    const asmnorm::CharIndices* both[] = {&c1, &c2};
    check("char_conv", s, [&] { return probe(conv.forward_many(both), 2); });
  }
  {
    nn::ParameterStore s;
    nn::Initializer init(3);
    nn::OpcodeEmbedding emb(s, init, dicts, 4);
    const std::vector<std::int32_t> idx{1, 0, 1, 2};
    check("opcode_embedding", s, [&] { return probe(emb.forward(Arch::X86, idx), 3); });
  }
  {
    nn::ParameterStore s;
    nn::Initializer init(4);
    nn::OperandMap map(s, init, dicts, 4, nn::Activation::Tanh);
    asmnorm::OperandStats st;
    st.n_integer_literals = 2;
    st.n_other_symbols = 1;
    st.register_indicator.assign(dicts.registers(Arch::ARM).size(), 0);
    st.register_indicator[0] = 1;
    const asmnorm::OperandStats* one[] = {&st, &st};
    check("operand_map", s, [&] { return probe(map.forward(Arch::ARM, one), 4); });
  }
  const std::vector<std::uint8_t> mask{1, 1, 1, 1, 0};
  {
    nn::ParameterStore s;
    nn::Initializer init(5);
    nn::LstmLayer lstm(s, init, "l", 3, 4);
    const Tensor x = random_matrix(5, 3, rng);
    check("lstm_forward", s, [&] { return probe(lstm.run(x, mask, false), 5); });
    check("lstm_backward", s, [&] { return probe(lstm.run(x, mask, true), 6); });
  }
  {
    nn::ParameterStore s;
    nn::Initializer init(6);
    nn::GruLayer gru(s, init, "g", 3, 4);
    const Tensor x = random_matrix(5, 3, rng);
    check("gru", s, [&] { return probe(gru.run(x, mask, true), 7); });
  }
  for (auto kind : {nn::AttentionKind::Bilinear, nn::AttentionKind::Cosine}) {
    nn::ParameterStore s;
    nn::Initializer init(7);
    nn::Attention att(s, init, kind, 4);
    const Tensor source = random_matrix(3, 4, rng);
    Tensor a = Tensor::from({3, 4}, std::vector<double>(source.values().begin(), source.values().end()), true);
    Tensor b = random_matrix(2, 4, rng);
    s.add("probe.a", a);
    check(std::string("attention_") + std::string(nn::attention_name(kind)), s,
          [&] { return probe(att.scores(a, b), 8); });
  }
  {
    nn::ParameterStore s;
    nn::Initializer init(8);
    nn::FeedForward ff(s, init, "ff", 6, 3, nn::Activation::Tanh);
    const Tensor x = random_matrix(4, 6, rng);
    check("feed_forward", s, [&] { return probe(ff.forward(x), 9); });
  }

  double worst_layer = 0.0;
  for (const auto& [_, e] : layers) worst_layer = std::max(worst_layer, e);
  const double secs = seconds_since(t0);
  o.pass = e2e < 1e-4 && worst_layer < 1e-6 && secs < 30.0;
  o.summary = "end-to-end max rel err " + fmt("%.2e", e2e) + " (< 1e-4), per-layer max " + fmt("%.2e", worst_layer) +
              " (< 1e-6), " + fmt("%.1f", secs) + " s (< 30 s)";
  o.detail = {{"end_to_end", e2e}, {"layers", layers}, {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// 2. Overfit sanity

World overfit_fixture() {
  data::SynthOptions so;
  so.n_functions = 32;
  so.seed = 21;
  data::MakePairsOptions po;
  po.task = data::Task::Classification;
  po.arch_pair = {{Arch::X86, Arch::ARM}};
  po.ratios = {1.0, 0.0, 0.0};
  po.seed = 5;
  return make_world(so, po);
}

train::TrainConfig overfit_train(std::size_t epochs) {
  train::TrainConfig c;
  c.task = data::Task::Classification;
  c.lr = 3e-3;
  c.batch_size = 8;
  c.epochs = epochs;
  c.seed = 1;
  c.record_wall_time = false;
  return c;
}

Outcome overfit_sanity() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto w = overfit_fixture();
  const auto mc = desk_model();
  train::Corpus corpus(w.records, w.dicts, mc);
  model::InterBinModel m(mc, w.dicts, 1);
  const auto train_pairs = w.pairs.pairs_in("train");
  std::vector<int> labels;
  for (const auto& p : train_pairs) labels.push_back(p.label);

  std::optional<std::size_t> reached;
  double last_acc = 0.0, last_loss = 0.0;
  train::TrainOptions opt;
  opt.on_epoch = [&](const train::EpochMetrics& e) {
    if (reached) return;
    const auto scores = train::score_pairs(m, corpus, train_pairs);
    last_acc = eval::accuracy(scores, labels);
    last_loss = e.train_loss;
    if (last_acc == 1.0 && e.train_loss < 0.05) reached = e.epoch;
  };
  // Stops counting once both targets hold; the remaining epochs only cost time.
  train::train(m, corpus, w.pairs, overfit_train(200), opt);
  const double secs = seconds_since(t0);
  o.pass = reached.has_value() && secs < 300.0;
  o.summary = std::to_string(train_pairs.size()) + " pairs: " +
              (reached ? "accuracy 1.0 and mean loss " + fmt("%.4f", last_loss) + " < 0.05 at epoch " +
                             std::to_string(*reached)
                       : "not reached in 200 epochs (accuracy " + fmt("%.3f", last_acc) + ", loss " +
                             fmt("%.4f", last_loss) + ")") +
              " (<= 200), " + fmt("%.1f", secs) + " s (< 300 s)";
  o.detail = {{"pairs", train_pairs.size()}, {"seconds", secs}, {"accuracy", last_acc}, {"loss", last_loss}};
  if (reached) o.detail["epoch"] = *reached;
  return o;
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

std::size_t dp_table_edit(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(314);
  std::uniform_int_distribution<int> level(0, 9);
  double worst_auc = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 10 + static_cast<std::size_t>(inst) * 3;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) / 9.0;
      y[i] = static_cast<int>(level(rng) < 4);
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] == 1 && y[j] == 0) {
          total += 1.0;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
      }
    }
    worst_auc = std::max(worst_auc, std::abs(eval::auc(s, y) - wins / total));
  }

  bool ranks_exact = true;
  std::uniform_real_distribution<double> u;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<eval::ScoredGroup> groups(30);
    for (auto& g : groups) {
      g.scores.resize(21);
      for (double& x : g.scores) x = std::round(u(rng) * 8.0) / 8.0;
      g.positive = static_cast<std::size_t>(level(rng)) % 21;
    }
    const auto ranks = eval::rank_queries(groups);
    double hits = 0.0, rr = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      std::size_t rank = 1;
      const double p = groups[k].scores[groups[k].positive];
      for (std::size_t j = 0; j < 21; ++j) rank += j != groups[k].positive && groups[k].scores[j] >= p;
      ranks_exact &= rank == ranks[k];
      hits += rank == 1;
      rr += 1.0 / static_cast<double>(rank);
    }
    ranks_exact &= eval::precision_at_1(ranks) == hits / 30.0;
    ranks_exact &= eval::mrr(ranks) == rr / 30.0;
  }

  std::size_t edit_mismatch = 0;
  const std::vector<std::string> vocab{"MOV", "ADD", "LDR", "STR", "BL", "RET", "CMP"};
  std::uniform_int_distribution<std::size_t> len(0, 25), tok(0, vocab.size() - 1);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<std::string> a(len(rng)), b(len(rng));
    for (auto& t : a) t = vocab[tok(rng)];
    for (auto& t : b) t = vocab[tok(rng)];
    edit_mismatch += eval::edit_distance(a, b) != dp_table_edit(a, b);
  }
  o.pass = worst_auc <= 1e-12 && ranks_exact && edit_mismatch == 0;
  o.summary = "AUC max |diff| " + fmt("%.1e", worst_auc) + " on 50 instances (<= 1e-12); precision@1/MRR " +
              (ranks_exact ? "exact" : "MISMATCH") + " on 50 instances; edit distance " +
              std::to_string(100 - edit_mismatch) + "/100 equal to the DP table";
  o.detail = {{"auc_max_diff", worst_auc}, {"ranks_exact", ranks_exact}, {"edit_mismatches", edit_mismatch}};
  return o;
}

// ---------------------------------------------------------------------------
// 4. Null-model calibration

Outcome null_calibration() {
  Outcome o;
  data::SynthOptions so;
  so.n_functions = 260;
  so.min_ops = 3;
  so.max_ops = 7;
  so.seed = 41;
  data::MakePairsOptions po;
  po.task = data::Task::Ranking;
  po.arch_pair = {{Arch::X86, Arch::ARM}};
  po.both_directions = true;
  po.num_neg = 20;
  po.seed = 9;
  po.ratios = {0.0, 0.0, 1.0};
  const auto w = make_world(so, po);
  const auto mc = desk_model();
  train::Corpus corpus(w.records, w.dicts, mc);
  model::InterBinModel m(mc, w.dicts, 1);
  const auto groups = w.pairs.groups_in("test");
  const auto ranks = eval::rank_queries(train::score_groups(m, corpus, groups));
  const std::size_t n = ranks.size();
  const auto hits = static_cast<std::size_t>(std::count(ranks.begin(), ranks.end(), std::size_t{1}));
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), 1.0 / 21.0);
  const double lo = boost::math::quantile(dist, 0.005), hi = boost::math::quantile(boost::math::complement(dist, 0.005));
  const double p1 = static_cast<double>(hits) / static_cast<double>(n);
  o.pass = n >= 500 && hits >= lo && hits <= hi;
  o.summary = std::to_string(hits) + "/" + std::to_string(n) + " groups ranked first, precision@1 " + fmt("%.4f", p1) +
              " inside the 99% binomial range [" + fmt("%.0f", lo) + ", " + fmt("%.0f", hi) + "] around 1/21";
  if (!o.pass) o.summary = std::to_string(hits) + "/" + std::to_string(n) + " outside [" + fmt("%.0f", lo) + ", " +
                           fmt("%.0f", hi) + "]";
  o.detail = {{"groups", n}, {"hits", hits}, {"precision_at_1", p1}, {"lo", lo}, {"hi", hi}};
  return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. Learning signal and ablations on the ranking fixture

struct RankingRun {
  double precision_at_1 = 0.0;
  double mrr = 0.0;
  double seconds = 0.0;
  eval::EvalReport report;
};

RankingRun run_ranking(const World& w, const model::ModelConfig& mc, std::uint64_t seed, bool baselines) {
  const auto t0 = Clock::now();
  train::Corpus corpus(w.records, w.dicts, mc);
  model::InterBinModel m(mc, w.dicts, seed);
  train::train(m, corpus, w.pairs, ranking_train(seed));
  RankingRun r;
  r.report = train::evaluate(m, corpus, w.pairs, "test", baselines);
  r.precision_at_1 = r.report.precision_at_1.value_or(0.0);
  r.mrr = r.report.mrr.value_or(0.0);
  r.seconds = seconds_since(t0);
  std::fprintf(stderr, "  trained %s seed %llu: precision@1 %.4f (%.0f s)\n",
               mc.drop_coattention ? "no-coattention" : mc.drop_backward ? "no-backward" : "full",
               static_cast<unsigned long long>(seed), r.precision_at_1, r.seconds);
  return r;
}

Outcome learning_signal(const RankingRun& full) {
  Outcome o;
  const double edit = full.report.baselines.at("edit_distance").precision_at_1.value_or(0.0);
  const double jacc = full.report.baselines.at("jaccard_4gram").precision_at_1.value_or(0.0);
  const double margin = full.precision_at_1 - std::max(edit, jacc);
  o.pass = margin >= 0.10 - 1e-12;
  o.summary = "test precision@1 " + fmt("%.3f", full.precision_at_1) + " vs edit distance " + fmt("%.3f", edit) +
              " and char 4-gram Jaccard " + fmt("%.3f", jacc) + "; margin " + fmt("%+.3f", margin) +
              " (>= +0.10) after 100 epochs";
  o.detail = {{"model", full.precision_at_1},
              {"model_mrr", full.mrr},
              {"edit_distance", edit},
              {"jaccard_4gram", jacc},
              {"margin", margin},
              {"groups", full.report.n_examples},
              {"seconds", full.seconds}};
  return o;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome ablation_directionality(const World& w, const RankingRun& full_seed1) {
  Outcome o;
  std::vector<double> full{full_seed1.precision_at_1}, no_co, no_bwd;
  for (std::uint64_t seed = 2; seed <= 3; ++seed) full.push_back(run_ranking(w, desk_model(), seed, false).precision_at_1);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto mc = desk_model();
    mc.drop_coattention = true;
    no_co.push_back(run_ranking(w, mc, seed, false).precision_at_1);
    mc = desk_model();
    mc.drop_backward = true;
    no_bwd.push_back(run_ranking(w, mc, seed, false).precision_at_1);
  }
  const double mf = median3(full), mc = median3(no_co), mb = median3(no_bwd);
  o.pass = mc < mf && mb - mf <= 0.01 + 1e-12;
  o.summary = "median precision@1 over seeds 1-3: full " + fmt("%.3f", mf) + ", no co-attention " + fmt("%.3f", mc) +
              " (must be lower), no backward LSTM " + fmt("%.3f", mb) + " (at most full + 0.01)";
  o.detail = {{"full", full}, {"no_coattention", no_co}, {"no_backward", no_bwd}};
  return o;
}

// ---------------------------------------------------------------------------
// 7. Structural invariants

Outcome structural_invariants() {
  Outcome o;
  const auto w = ranking_fixture();
  const auto mc = desk_model();
  model::InterBinModel m(mc, w.dicts, 4);
  train::Corpus corpus(w.records, w.dicts, mc);
  const auto uids = corpus.uids();

  double worst_norm = 0.0;
  bool pad_exact = true;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, uids.size() - 1), extra(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& a = corpus.sequence(uids[pick(rng)]);
    const auto& b = corpus.sequence(uids[pick(rng)]);
    const auto pa = model::pad_to(a, a.size() + extra(rng), w.dicts, mc.max_chars);
    const auto pb = model::pad_to(b, b.size() + extra(rng), w.dicts, mc.max_chars);
    const auto inter = m.interact(m.encode_sequence(pa), m.encode_sequence(pb));
    for (std::size_t i = 0; i < pa.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < pb.size(); ++j) s += inter.alpha.at(i, j);
      worst_norm = std::max(worst_norm, std::abs(s - (pa.mask[i] ? 1.0 : 0.0)));
    }
    for (std::size_t j = 0; j < pb.size(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < pa.size(); ++i) s += inter.beta.at(i, j);
      worst_norm = std::max(worst_norm, std::abs(s - (pb.mask[j] ? 1.0 : 0.0)));
    }
    const auto plain = m.forward_pair(a, b), padded = m.forward_pair(pa, pb);
    pad_exact &= plain.logits == padded.logits;
  }

  const std::size_t h = mc.hidden;
  const auto& fw = m.parameters().get("enhance.F.weight");
  const bool widths = m.enhancement_dim() == 8 * h && fw.dim(0) == 8 * h && fw.dim(1) == 2 * h;
  const bool table = asmnorm::CharTable::kSize == 58;

  fixtures::LineFuzzer fz(777);
  std::vector<std::pair<std::string, Arch>> lines;
  std::vector<asmnorm::RawInstruction> raw;
  for (int i = 0; i < 10000; ++i) {
    lines.push_back(fz.line());
    raw.push_back(asmnorm::tokenize_instruction(lines.back().first, lines.back().second));
  }
  const auto d = asmnorm::build_dictionaries(raw, {"printf", "helper"});
  std::size_t not_idempotent = 0;
  for (const auto& [line, arch] : lines) {
    const auto once = asmnorm::normalize_instruction(asmnorm::tokenize_instruction(line, arch), d);
    const auto twice = asmnorm::normalize_instruction(asmnorm::tokenize_instruction(once.text, arch), d);
    not_idempotent += twice.text != once.text;
  }

  o.pass = worst_norm <= 1e-9 && pad_exact && widths && table && not_idempotent == 0;
  o.summary = "attention normalization max dev " + fmt("%.1e", worst_norm) + " (<= 1e-9); padded logits " +
              (pad_exact ? "bit-identical" : "DIFFER") + "; enhancement " + std::to_string(fw.dim(0)) + "->" +
              std::to_string(fw.dim(1)) + " (8H->2H, H=" + std::to_string(h) + "); char table " +
              std::to_string(asmnorm::CharTable::kSize) + "; " + std::to_string(10000 - not_idempotent) +
              "/10000 fuzzed lines idempotent";
  o.detail = {{"normalization_max_dev", worst_norm},
              {"pad_exact", pad_exact},
              {"enhancement_ok", widths},
              {"char_table", asmnorm::CharTable::kSize},
              {"not_idempotent", not_idempotent}};
  return o;
}

// ---------------------------------------------------------------------------
// 8. Determinism

Outcome determinism() {
  Outcome o;
  const auto cls = overfit_fixture();
  std::string logs[2];
  std::vector<std::vector<double>> params[2];
  for (int run = 0; run < 2; ++run) {
    const auto mc = desk_model();
    train::Corpus corpus(cls.records, cls.dicts, mc);
    model::InterBinModel m(mc, cls.dicts, 1);
    logs[run] = train::train(m, corpus, cls.pairs, overfit_train(15)).metrics_jsonl;
    for (const auto& [_, t] : m.parameters().entries()) params[run].emplace_back(t.values().begin(), t.values().end());
  }

  data::SynthOptions so;
  so.n_functions = 60;
  so.min_ops = 3;
  so.max_ops = 7;
  data::MakePairsOptions po;
  po.task = data::Task::Ranking;
  po.arch_pair = {{Arch::X86, Arch::ARM}};
  po.num_neg = 5;
  po.ratios = {0.6, 0.2, 0.2};
  const auto rank = make_world(so, po);
  std::string rank_logs[2];
  for (int run = 0; run < 2; ++run) {
    const auto mc = desk_model();
    train::Corpus corpus(rank.records, rank.dicts, mc);
    model::InterBinModel m(mc, rank.dicts, 2);
    auto tc = ranking_train(2);
    tc.epochs = 5;
    tc.num_neg = 5;
    rank_logs[run] = train::train(m, corpus, rank.pairs, tc).metrics_jsonl;
  }
  const bool same_cls = logs[0] == logs[1] && params[0] == params[1];
  const bool same_rank = rank_logs[0] == rank_logs[1];
  o.pass = same_cls && same_rank && !logs[0].empty();
  o.summary = std::string("classification metrics logs (15 epochs) ") + (same_cls ? "identical" : "DIFFER") +
              ", ranking metrics logs (5 epochs) " + (same_rank ? "identical" : "DIFFER") +
              "; final parameters " + (params[0] == params[1] ? "identical" : "DIFFER");
  o.detail = {{"classification_identical", same_cls}, {"ranking_identical", same_rank}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string json_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string part;
      while (std::getline(ss, part, ',')) only.insert(std::stoi(part));
    } else if (arg == "--json" && i + 1 < argc) {
      json_path = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--json report.json]\n");
      return 2;
    }
  }
  auto wanted = [&](int c) { return only.empty() || only.contains(c); };

  const char* names[] = {"",
                         "gradient correctness",
                         "overfit sanity",
                         "metric oracles",
                         "null-model calibration",
                         "learning signal",
                         "ablation directionality",
                         "structural invariants",
                         "determinism"};
  json report = json::object();
  bool all_pass = true;
  auto emit = [&](int c, auto&& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.summary = std::string("error: ") + e.what();
    }
    std::printf("criterion %d %s %s: %s\n", c, o.pass ? "PASS" : "FAIL", names[c], o.summary.c_str());
    std::fflush(stdout);
    report[std::to_string(c)] = {{"name", names[c]}, {"pass", o.pass}, {"summary", o.summary}, {"detail", o.detail}};
    all_pass &= o.pass;
  };

  if (wanted(1)) emit(1, [&] { return gradient_correctness(); });
  if (wanted(2)) emit(2, [&] { return overfit_sanity(); });
  if (wanted(3)) emit(3, [&] { return metric_oracles(); });
  if (wanted(4)) emit(4, [&] { return null_calibration(); });
  if (wanted(5) || wanted(6)) {
    const auto w = ranking_fixture();
    const auto full = run_ranking(w, desk_model(), 1, true);
    if (wanted(5)) emit(5, [&] { return learning_signal(full); });
    if (wanted(6)) emit(6, [&] { return ablation_directionality(w, full); });
  }
  if (wanted(7)) emit(7, [&] { return structural_invariants(); });
  if (wanted(8)) emit(8, [&] { return determinism(); });

  if (!json_path.empty()) {
    std::ofstream out(json_path);
    out << report.dump(1) << "\n";
  }
  return all_pass ? 0 : 1;
}
