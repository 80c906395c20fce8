#include "interbin/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "interbin/error.hpp"

namespace interbin::train {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

std::vector<std::string> real_texts(const model::Sequence& seq) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.mask[i]) out.push_back(seq.steps[i].text);
  }
  return out;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream in(text);
  in >> rng;
  if (in.fail()) throw Error(ErrorCode::VersionMismatch, "checkpoint rng state is unreadable");
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) config_error("lr must be positive");
  if (batch_size == 0) config_error("batch_size must be at least 1");
  if (epochs == 0) config_error("epochs must be at least 1");
  if (num_neg == 0) config_error("num_neg must be at least 1");
  if (precision != "float64") config_error("unsupported precision '" + precision + "'; only float64 is built");
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"num_neg", num_neg},
          {"seed", seed},
          {"precision", precision},
          {"task", data::task_name(task)},
          {"resample_negatives", resample_negatives},
          {"record_wall_time", record_wall_time}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  try {
    c.lr = doc.value("lr", c.lr);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.epochs = doc.value("epochs", c.epochs);
    c.num_neg = doc.value("num_neg", c.num_neg);
    c.seed = doc.value("seed", c.seed);
    c.precision = doc.value("precision", c.precision);
    c.task = data::parse_task(doc.value("task", std::string(data::task_name(c.task))));
    c.resample_negatives = doc.value("resample_negatives", c.resample_negatives);
    c.record_wall_time = doc.value("record_wall_time", c.record_wall_time);
  } catch (const json::exception& e) {
    config_error(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<ad::Tensor> params, AdamState& state, double lr, const AdamHyper& hyper) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match the parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& g = params[k].node()->grad;
    if (state.m[k].size() != params[k].numel() || state.v[k].size() != params[k].numel()) {
      throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameter " + std::to_string(k));
    }
    for (double x : g) {
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteGradient, "parameter " + std::to_string(k));
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& g = params[k].node()->grad;
    auto w = params[k].mutable_values();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hyper.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::span<const data::FunctionRecord> records, const asmnorm::ArchDictionaries& dicts,
               const model::ModelConfig& config) {
  for (const auto& r : records) {
    auto uid = r.uid();
    if (entries_.contains(uid)) throw Error(ErrorCode::ValidationError, "duplicate record " + uid);
    auto seq = model::make_sequence(r.instructions, r.arch, dicts, config);
    entries_.emplace(std::move(uid), Entry{r, std::move(seq)});
  }
}

const model::Sequence& Corpus::sequence(const std::string& uid) const {
  auto it = entries_.find(uid);
  if (it == entries_.end()) throw Error(ErrorCode::ValidationError, "unknown record " + uid);
  return it->second.sequence;
}

const data::FunctionRecord& Corpus::record(const std::string& uid) const {
  auto it = entries_.find(uid);
  if (it == entries_.end()) throw Error(ErrorCode::ValidationError, "unknown record " + uid);
  return it->second.record;
}

std::vector<std::string> Corpus::uids() const {
  std::vector<std::string> out;
  for (const auto& [uid, _] : entries_) out.push_back(uid);
  return out;
}

// ---------------------------------------------------------------------------
// Batching and sampling

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "no training examples");
  if (batch_size == 0) config_error("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

NegativePools negative_pools(const Corpus& corpus, const data::PairSet& pairs, std::string_view split) {
  std::set<std::string> uids;
  for (const auto& g : pairs.groups) {
    if (g.split != split) continue;
    uids.insert(g.query);
    uids.insert(g.positive);
    uids.insert(g.negatives.begin(), g.negatives.end());
  }
  for (const auto& p : pairs.pairs) {
    if (p.split != split) continue;
    uids.insert(p.a);
    uids.insert(p.b);
  }
  NegativePools pools;
  for (const auto& uid : uids) {
    const auto& r = corpus.record(uid);
    pools[r.arch].emplace_back(uid, r.record_id);
  }
  return pools;
}

data::RankingGroup resample_group(const data::RankingGroup& group, const Corpus& corpus, const NegativePools& pools,
                                  std::size_t num_neg, std::mt19937_64& rng) {
  const auto& positive = corpus.record(group.positive);
  auto it = pools.find(positive.arch);
  if (it == pools.end()) {
    throw Error(ErrorCode::InsufficientNegatives, "no candidates on " + std::string(arch_name(positive.arch)));
  }
  data::RankingGroup out = group;
  out.negatives = data::sample_negatives(it->second, corpus.record(group.query).record_id, num_neg, rng);
  return out;
}

std::vector<model::Sequence> pad_batch(std::span<const model::Sequence* const> seqs,
                                       const asmnorm::ArchDictionaries& dicts, std::size_t max_chars) {
  std::size_t longest = 0;
  for (const auto* s : seqs) longest = std::max(longest, s->size());
  std::vector<model::Sequence> out;
  out.reserve(seqs.size());
  for (const auto* s : seqs) out.push_back(model::pad_to(*s, longest, dicts, max_chars));
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

constexpr std::size_t kScoreChunk = 64;

struct LabeledPair {
  const std::string* a;
  const std::string* b;
  int label;
};

std::vector<model::MatchOutput> run_pairs(const InterBinModel& model, const Corpus& corpus,
                                          std::span<const LabeledPair> pairs, bool pad) {
  // Distinct sequences of the batch, in first-seen order.
  std::map<std::string, std::size_t> slot;
  std::vector<const model::Sequence*> distinct;
  for (const auto& p : pairs) {
    for (const auto* uid : {p.a, p.b}) {
      if (slot.emplace(*uid, distinct.size()).second) distinct.push_back(&corpus.sequence(*uid));
    }
  }
  std::vector<model::Sequence> padded;
  if (pad) padded = pad_batch(distinct, model.dictionaries(), model.config().max_chars);
  auto at = [&](const std::string& uid) -> const model::Sequence* {
    const std::size_t k = slot.at(uid);
    return pad ? &padded[k] : distinct[k];
  };
  std::vector<std::pair<const model::Sequence*, const model::Sequence*>> refs;
  refs.reserve(pairs.size());
  for (const auto& p : pairs) refs.emplace_back(at(*p.a), at(*p.b));
  return model.forward_batch(refs);
}

}  // namespace

std::vector<double> score_pairs(const InterBinModel& model, const Corpus& corpus,
                                std::span<const data::PairExample> pairs) {
  ad::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); i += kScoreChunk) {
    std::vector<LabeledPair> chunk;
    for (std::size_t j = i; j < std::min(pairs.size(), i + kScoreChunk); ++j) {
      chunk.push_back({&pairs[j].a, &pairs[j].b, pairs[j].label});
    }
    for (const auto& o : run_pairs(model, corpus, chunk, false)) out.push_back(o.probability_similar);
  }
  return out;
}

std::vector<eval::ScoredGroup> score_groups(const InterBinModel& model, const Corpus& corpus,
                                            std::span<const data::RankingGroup> groups) {
  ad::NoGradGuard guard;
  std::vector<eval::ScoredGroup> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<LabeledPair> pairs;
    pairs.push_back({&g.query, &g.positive, 1});
    for (const auto& n : g.negatives) pairs.push_back({&g.query, &n, 0});
    eval::ScoredGroup s{g.group_id, {}, 0};
    for (const auto& o : run_pairs(model, corpus, pairs, false)) s.scores.push_back(o.probability_similar);
    out.push_back(std::move(s));
  }
  return out;
}

double edit_baseline(const model::Sequence& a, const model::Sequence& b) {
  return eval::edit_similarity(real_texts(a), real_texts(b));
}

double jaccard_baseline(const model::Sequence& a, const model::Sequence& b) {
  try {
    return eval::char_ngram_jaccard(real_texts(a), real_texts(b), 4);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TooShort) return 0.0;
    throw;
  }
}

std::vector<eval::ScoredGroup> score_groups_with(const SequenceScorer& scorer, const Corpus& corpus,
                                                 std::span<const data::RankingGroup> groups) {
  std::vector<eval::ScoredGroup> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    const auto& q = corpus.sequence(g.query);
    eval::ScoredGroup s{g.group_id, {scorer(q, corpus.sequence(g.positive))}, 0};
    for (const auto& n : g.negatives) s.scores.push_back(scorer(q, corpus.sequence(n)));
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void classification_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                           std::optional<double>& accuracy, std::optional<double>& auc) {
  accuracy = eval::accuracy(scores, labels);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives > 0 && static_cast<std::size_t>(positives) < labels.size()) auc = eval::auc(scores, labels);
}

}  // namespace

eval::EvalReport evaluate(const InterBinModel& model, const Corpus& corpus, const data::PairSet& pairs,
                          std::string_view split, bool with_baselines) {
  eval::EvalReport rep;
  rep.task = std::string(data::task_name(pairs.task));
  rep.split = std::string(split);
  rep.config = model.config().to_json();
  const std::pair<const char*, SequenceScorer> baselines[] = {{"edit_distance", edit_baseline},
                                                              {"jaccard_4gram", jaccard_baseline}};
  if (pairs.task == data::Task::Classification) {
    const auto subset = pairs.pairs_in(split);
    if (subset.empty()) throw Error(ErrorCode::EmptyDataset, "no pairs in split '" + std::string(split) + "'");
    std::vector<int> labels;
    for (const auto& p : subset) labels.push_back(p.label);
    classification_scores(score_pairs(model, corpus, subset), labels, rep.accuracy, rep.auc);
    rep.n_examples = subset.size();
    if (with_baselines) {
      for (const auto& [name, scorer] : baselines) {
        std::vector<double> s;
        for (const auto& p : subset) s.push_back(scorer(corpus.sequence(p.a), corpus.sequence(p.b)));
        classification_scores(s, labels, rep.baselines[name].accuracy, rep.baselines[name].auc);
      }
    }
  } else {
    const auto subset = pairs.groups_in(split);
    if (subset.empty()) throw Error(ErrorCode::EmptyDataset, "no groups in split '" + std::string(split) + "'");
    const auto scored = score_groups(model, corpus, subset);
    const auto ranks = eval::rank_queries(scored);
    rep.precision_at_1 = eval::precision_at_1(ranks);
    rep.mrr = eval::mrr(ranks);
    rep.n_examples = subset.size();
    for (std::size_t i = 0; i < ranks.size(); ++i) rep.ranks.push_back({scored[i].group_id, ranks[i]});
    if (with_baselines) {
      for (const auto& [name, scorer] : baselines) {
        const auto r = eval::rank_queries(score_groups_with(scorer, corpus, subset));
        rep.baselines[name].precision_at_1 = eval::precision_at_1(r);
        rep.baselines[name].mrr = eval::mrr(r);
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints

json Checkpoint::to_json() const {
  json ps = json::array();
  for (const auto& p : params) ps.push_back({{"name", p.name}, {"shape", p.shape}, {"values", p.values}});
  json doc = {{"format", kFormat},
              {"version", kVersion},
              {"dict_hash", dict_hash},
              {"model_config", model_config.to_json()},
              {"train_config", train_config.to_json()},
              {"params", ps},
              {"optimizer", {{"t", optimizer.t}, {"m", optimizer.m}, {"v", optimizer.v}}},
              {"epoch", epoch},
              {"rng_state", rng_state},
              {"best_epoch", best_epoch}};
  doc["best_metric"] = best_metric ? json(*best_metric) : json(nullptr);
  return doc;
}

Checkpoint Checkpoint::from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", std::string()) != kFormat) {
    throw Error(ErrorCode::VersionMismatch, "not a checkpoint document");
  }
  if (doc.value("version", -1) != kVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint version " + doc.value("version", json(nullptr)).dump() + ", expected " +
                    std::to_string(kVersion));
  }
  Checkpoint c;
  try {
    c.dict_hash = doc.at("dict_hash").get<std::string>();
    c.model_config = model::ModelConfig::from_json(doc.at("model_config"));
    c.train_config = TrainConfig::from_json(doc.at("train_config"));
    for (const auto& p : doc.at("params")) {
      NamedTensor t{p.at("name").get<std::string>(), p.at("shape").get<ad::Shape>(),
                    p.at("values").get<std::vector<double>>()};
      if (ad::numel_of(t.shape) != t.values.size()) {
        throw Error(ErrorCode::VersionMismatch, "checkpoint tensor " + t.name + " is truncated");
      }
      c.params.push_back(std::move(t));
    }
    const auto& o = doc.at("optimizer");
    c.optimizer.t = o.at("t").get<std::size_t>();
    c.optimizer.m = o.at("m").get<std::vector<std::vector<double>>>();
    c.optimizer.v = o.at("v").get<std::vector<std::vector<double>>>();
    c.epoch = doc.at("epoch").get<std::size_t>();
    c.rng_state = doc.at("rng_state").get<std::string>();
    c.best_epoch = doc.value("best_epoch", std::size_t{0});
    if (doc.contains("best_metric") && !doc["best_metric"].is_null()) c.best_metric = doc["best_metric"].get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::VersionMismatch, std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

Checkpoint snapshot(const InterBinModel& model, const TrainConfig& train_config, const AdamState& optimizer,
                    std::size_t epoch, const std::mt19937_64& rng) {
  Checkpoint c;
  c.model_config = model.config();
  c.train_config = train_config;
  c.dict_hash = model.dictionaries().content_hash();
  for (const auto& [name, t] : model.parameters().entries()) {
    c.params.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
  }
  c.optimizer = optimizer;
  c.epoch = epoch;
  c.rng_state = rng_to_string(rng);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << ckpt.to_json().dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::VersionMismatch, path.string() + " is not a readable checkpoint: " + e.what());
  }
  return Checkpoint::from_json(doc);
}

void restore_parameters(InterBinModel& model, const Checkpoint& ckpt) {
  const auto hash = model.dictionaries().content_hash();
  if (ckpt.dict_hash != hash) {
    throw Error(ErrorCode::HashMismatch, "checkpoint dictionaries " + ckpt.dict_hash + " differ from " + hash);
  }
  auto& entries = model.parameters().entries();
  if (entries.size() != ckpt.params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(ckpt.params.size()) +
                                              " tensors, the model " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, t] = entries[i];
    const auto& src = ckpt.params[i];
    if (src.name != name || src.shape != t.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor " + src.name + " " + ad::shape_str(src.shape) +
                                                " does not match " + name + " " + ad::shape_str(t.shape()));
    }
    std::copy(src.values.begin(), src.values.end(), t.mutable_values().begin());
  }
}

std::unique_ptr<InterBinModel> model_from_checkpoint(const Checkpoint& ckpt, const asmnorm::ArchDictionaries& dicts) {
  auto m = std::make_unique<InterBinModel>(ckpt.model_config, dicts, ckpt.train_config.seed);
  restore_parameters(*m, ckpt);
  return m;
}

// ---------------------------------------------------------------------------
// Training loop

json EpochMetrics::to_json(bool with_wall_time) const {
  json doc = {{"epoch", epoch},
              {"train_loss", train_loss},
              {"train_loss_sum", train_loss_sum},
              {"train_examples", train_examples}};
  if (val_accuracy) doc["val_accuracy"] = *val_accuracy;
  if (val_auc) doc["val_auc"] = *val_auc;
  if (val_precision_at_1) doc["val_precision_at_1"] = *val_precision_at_1;
  if (val_mrr) doc["val_mrr"] = *val_mrr;
  if (with_wall_time) doc["wall_time_s"] = wall_time_s;
  return doc;
}

namespace {

double selection_metric(const EpochMetrics& m) {
  if (m.val_precision_at_1) return *m.val_precision_at_1;
  if (m.val_accuracy) return *m.val_accuracy;
  return -m.train_loss;
}

}  // namespace

TrainResult train(InterBinModel& model, const Corpus& corpus, const data::PairSet& pairs, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (pairs.task != config.task) config_error("pairs file and train config disagree on the task");
  const bool ranking = config.task == data::Task::Ranking;

  const auto train_pairs = pairs.pairs_in(options.train_split);
  const auto train_groups = pairs.groups_in(options.train_split);
  const auto val_pairs = pairs.pairs_in(options.val_split);
  const auto val_groups = pairs.groups_in(options.val_split);
  const std::size_t n_train = ranking ? train_groups.size() : train_pairs.size();
  if (n_train == 0) throw Error(ErrorCode::EmptyDataset, "no training examples in split '" + options.train_split + "'");

  NegativePools pools;
  if (ranking && config.resample_negatives) pools = negative_pools(corpus, pairs, options.train_split);

  std::mt19937_64 rng(config.seed);
  AdamState adam;
  std::size_t start = 0;
  TrainResult result;
  std::optional<double> best_metric;
  std::size_t best_epoch = 0;

  if (options.resume_from) {
    const auto ckpt = load_checkpoint(*options.resume_from);
    if (ckpt.model_config != model.config()) config_error("resumed checkpoint has a different model config");
    auto saved = ckpt.train_config;
    saved.epochs = config.epochs;
    if (saved != config) config_error("resumed checkpoint has a different train config");
    restore_parameters(model, ckpt);
    adam = ckpt.optimizer;
    rng_from_string(rng, ckpt.rng_state);
    start = ckpt.epoch;
    best_metric = ckpt.best_metric;
    best_epoch = ckpt.best_epoch;
    const auto best_path = options.resume_from->parent_path() / "best.ckpt.json";
    result.best = std::filesystem::exists(best_path) ? load_checkpoint(best_path) : ckpt;
    result.best.train_config.epochs = config.epochs;
    result.last = ckpt;
  }

  std::ofstream metrics_out;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto path = *options.out_dir / "metrics.jsonl";
    metrics_out.open(path, options.resume_from ? std::ios::app : std::ios::trunc);
    if (!metrics_out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    if (options.resume_from) save_checkpoint(*options.out_dir / "best.ckpt.json", result.best);
  }

  auto params = model.parameters().tensors();

  for (std::size_t epoch = start + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;

    for (const auto& batch : epoch_batches(n_train, config.batch_size, rng)) {
      std::vector<data::RankingGroup> drawn;
      std::vector<LabeledPair> step;
      if (ranking) {
        drawn.reserve(batch.size());
        for (std::size_t i : batch) {
          drawn.push_back(config.resample_negatives
                              ? resample_group(train_groups[i], corpus, pools, config.num_neg, rng)
                              : train_groups[i]);
        }
        for (const auto& g : drawn) {
          step.push_back({&g.query, &g.positive, 1});
          for (const auto& n : g.negatives) step.push_back({&g.query, &n, 0});
        }
      } else {
        for (std::size_t i : batch) step.push_back({&train_pairs[i].a, &train_pairs[i].b, train_pairs[i].label});
      }

      const auto outs = run_pairs(model, corpus, step, true);
      std::vector<int> labels;
      labels.reserve(step.size());
      for (const auto& p : step) labels.push_back(p.label);
      const auto total = model::loss(outs, labels);
      const auto mean = ad::scale(total, 1.0 / static_cast<double>(step.size()));
      mean.backward();
      adam_step(params, adam, config.lr);
      model.parameters().zero_grad();

      m.train_loss_sum += total.item();
      m.train_examples += step.size();
    }
    m.train_loss = m.train_loss_sum / static_cast<double>(m.train_examples);

    if (ranking && !val_groups.empty()) {
      const auto ranks = eval::rank_queries(score_groups(model, corpus, val_groups));
      m.val_precision_at_1 = eval::precision_at_1(ranks);
      m.val_mrr = eval::mrr(ranks);
    } else if (!ranking && !val_pairs.empty()) {
      std::vector<int> labels;
      for (const auto& p : val_pairs) labels.push_back(p.label);
      classification_scores(score_pairs(model, corpus, val_pairs), labels, m.val_accuracy, m.val_auc);
    }
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const double metric = selection_metric(m);
    const bool improved = !best_metric || metric > *best_metric;
    if (improved) {
      best_metric = metric;
      best_epoch = epoch;
    }
    result.last = snapshot(model, config, adam, epoch, rng);
    result.last.best_metric = best_metric;
    result.last.best_epoch = best_epoch;
    if (improved) result.best = result.last;

    const auto line = m.to_json(config.record_wall_time).dump() + "\n";
    result.metrics_jsonl += line;
    if (options.out_dir) {
      metrics_out << line << std::flush;
      save_checkpoint(*options.out_dir / "last.ckpt.json", result.last);
      if (improved) save_checkpoint(*options.out_dir / "best.ckpt.json", result.best);
    }
    result.log.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepVariant> sweep_variants(const model::ModelConfig& base, std::string_view axis) {
  std::vector<SweepVariant> out;
  auto add = [&](const char* ax, std::string value, auto&& edit) {
    model::ModelConfig c = base;
    edit(c);
    out.push_back({ax, std::move(value), std::move(c)});
  };
  const bool all = axis == "all";
  bool known = all;
  if (all || axis == "rnn") {
    known = true;
    for (auto k : {nn::RnnKind::Lstm, nn::RnnKind::BiLstm, nn::RnnKind::BiGru, nn::RnnKind::BiLstm2}) {
      add("rnn", std::string(nn::rnn_name(k)), [k](auto& c) { c.rnn = k; });
    }
  }
  if (all || axis == "hidden") {
    known = true;
    for (std::size_t h : {16, 32, 64, 128, 256, 512}) add("hidden", std::to_string(h), [h](auto& c) { c.hidden = h; });
  }
  if (all || axis == "attention") {
    known = true;
    for (auto k : {nn::AttentionKind::Dot, nn::AttentionKind::ScaledDot, nn::AttentionKind::Cosine,
                   nn::AttentionKind::Bilinear}) {
      add("attention", std::string(nn::attention_name(k)), [k](auto& c) { c.attention = k; });
    }
  }
  if (all || axis == "enhancement") {
    known = true;
    for (const char* e : {"none", "concat", "product", "diff", "concat+product", "concat+diff", "diff+product",
                          "full"}) {
      add("enhancement", e, [e](auto& c) { c.enhancement = model::parse_enhancement(e); });
    }
  }
  if (all || axis == "ablation") {
    known = true;
    add("ablation", "base", [](auto&) {});
    add("ablation", "no-char", [](auto& c) { c.drop_char = true; });
    add("ablation", "no-opcode", [](auto& c) { c.drop_opcode = true; });
    add("ablation", "no-operand", [](auto& c) { c.drop_operand = true; });
    add("ablation", "no-backward", [](auto& c) { c.drop_backward = true; });
    add("ablation", "no-coattention", [](auto& c) { c.drop_coattention = true; });
  }
  if (!known) config_error("unknown sweep axis '" + std::string(axis) + "'");
  for (const auto& v : out) v.config.validate();
  return out;
}

std::vector<SweepResult> run_sweep(std::span<const SweepVariant> variants, const TrainConfig& config,
                                   const asmnorm::ArchDictionaries& dicts,
                                   std::span<const data::FunctionRecord> records, const data::PairSet& pairs,
                                   std::string_view eval_split) {
  std::vector<SweepResult> out;
  for (const auto& v : variants) {
    const auto t0 = std::chrono::steady_clock::now();
    const Corpus corpus(records, dicts, v.config);
    InterBinModel model(v.config, dicts, config.seed);
    const auto trained = train(model, corpus, pairs, config);
    restore_parameters(model, trained.best);
    SweepResult r{v, evaluate(model, corpus, pairs, eval_split, false), trained.best.epoch, 0.0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

std::string sweep_table(std::span<const SweepResult> results) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(4);
    s << *v;
    return s.str();
  };
  std::ostringstream out;
  out << "axis\tvalue\taccuracy\tauc\tprecision_at_1\tmrr\tbest_epoch\n";
  for (const auto& r : results) {
    out << r.variant.axis << '\t' << r.variant.value << '\t' << fmt(r.report.accuracy) << '\t' << fmt(r.report.auc)
        << '\t' << fmt(r.report.precision_at_1) << '\t' << fmt(r.report.mrr) << '\t' << r.best_epoch << '\n';
  }
  return out.str();
}

}  // namespace interbin::train
