#include "interbin/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "interbin/error.hpp"

namespace interbin::eval {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": scores and labels differ in length");
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  require_same_size(scores.size(), labels.size(), "accuracy");
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    if (predicted == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_size(scores.size(), labels.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::SingleClass, "auc needs both classes");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive) {
  if (positive >= scores.size()) throw Error(ErrorCode::NoPositive, "positive index outside the group");
  const double p = scores[positive];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != positive && scores[i] >= p) ++rank;
  }
  return rank;
}

std::vector<std::size_t> rank_queries(std::span<const ScoredGroup> groups) {
  std::vector<std::size_t> ranks;
  ranks.reserve(groups.size());
  for (const auto& g : groups) ranks.push_back(rank_of_positive(g.scores, g.positive));
  return ranks;
}

double precision_at_1(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw Error(ErrorCode::EmptyInput, "precision@1 of an empty rank list");
  std::size_t top = 0;
  for (std::size_t r : ranks) {
    if (r == 0) throw Error(ErrorCode::ValidationError, "ranks are 1-based");
    if (r == 1) ++top;
  }
  return static_cast<double>(top) / static_cast<double>(ranks.size());
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw Error(ErrorCode::EmptyInput, "mrr of an empty rank list");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw Error(ErrorCode::ValidationError, "ranks are 1-based");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  // Two rows of the DP table.
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double edit_similarity(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

double char_ngram_jaccard(std::string_view a, std::string_view b, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::ValidationError, "n-gram size must be at least 1");
  if (a.size() < n || b.size() < n) {
    throw Error(ErrorCode::TooShort, "text shorter than the n-gram size " + std::to_string(n));
  }
  auto grams = [n](std::string_view s) {
    std::set<std::string_view> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) out.insert(s.substr(i, n));
    return out;
  };
  const auto ga = grams(a), gb = grams(b);
  std::size_t common = 0;
  for (const auto& g : ga) common += gb.count(g);
  const std::size_t united = ga.size() + gb.size() - common;
  return static_cast<double>(common) / static_cast<double>(united);
}

double char_ngram_jaccard(std::span<const std::string> a, std::span<const std::string> b, std::size_t n) {
  auto join = [](std::span<const std::string> seq) {
    std::string out;
    for (const auto& s : seq) {
      if (!out.empty()) out += ' ';
      out += s;
    }
    return out;
  };
  return char_ngram_jaccard(join(a), join(b), n);
}

std::vector<CdfPoint> cdf(std::span<const double> rates) {
  if (rates.empty()) throw Error(ErrorCode::EmptyInput, "cdf of an empty set");
  std::vector<double> sorted(rates.begin(), rates.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out.push_back({sorted[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

std::vector<double> difference_rates(
    std::span<const std::pair<std::vector<std::string>, std::vector<std::string>>> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(1.0 - edit_similarity(a, b));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void put(nlohmann::json& doc, const char* key, const std::optional<double>& v) {
  if (v) doc[key] = *v;
}

std::optional<double> get(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return doc[key].get<double>();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc;
  doc["task"] = task;
  doc["split"] = split;
  doc["n_examples"] = n_examples;
  put(doc, "accuracy", accuracy);
  put(doc, "auc", auc);
  put(doc, "precision_at_1", precision_at_1);
  put(doc, "mrr", mrr);
  nlohmann::json b = nlohmann::json::object();
  for (const auto& [name, s] : baselines) {
    nlohmann::json entry = nlohmann::json::object();
    put(entry, "accuracy", s.accuracy);
    put(entry, "auc", s.auc);
    put(entry, "precision_at_1", s.precision_at_1);
    put(entry, "mrr", s.mrr);
    b[name] = entry;
  }
  doc["baselines"] = b;
  nlohmann::json r = nlohmann::json::array();
  for (const auto& e : ranks) r.push_back({{"group_id", e.group_id}, {"rank", e.rank}});
  doc["ranks"] = r;
  doc["checkpoint"] = checkpoint;
  doc["config"] = config;
  return doc;
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  EvalReport rep;
  try {
    rep.task = doc.at("task").get<std::string>();
    rep.split = doc.value("split", std::string());
    rep.n_examples = doc.value("n_examples", std::size_t{0});
    rep.accuracy = get(doc, "accuracy");
    rep.auc = get(doc, "auc");
    rep.precision_at_1 = get(doc, "precision_at_1");
    rep.mrr = get(doc, "mrr");
    if (doc.contains("baselines")) {
      for (const auto& [name, entry] : doc["baselines"].items()) {
        rep.baselines[name] = {get(entry, "accuracy"), get(entry, "auc"), get(entry, "precision_at_1"),
                               get(entry, "mrr")};
      }
    }
    if (doc.contains("ranks")) {
      for (const auto& e : doc["ranks"]) rep.ranks.push_back({e.at("group_id"), e.at("rank")});
    }
    rep.checkpoint = doc.value("checkpoint", std::string());
    rep.config = doc.value("config", nlohmann::json());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("eval report: ") + e.what());
  }
  return rep;
}

std::string EvalReport::ranks_csv() const {
  std::ostringstream out;
  out << "group_id,rank\n";
  for (const auto& e : ranks) out << e.group_id << ',' << e.rank << '\n';
  return out.str();
}

}  // namespace interbin::eval
