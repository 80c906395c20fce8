#pragma once

// Classification and ranking metrics, and two non-neural baselines.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace interbin::eval {

// Fraction of (score >= threshold) == label. Throws EmptyInput.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

// Mann-Whitney AUC; tied positive/negative scores count 1/2. Throws SingleClass.
double auc(std::span<const double> scores, std::span<const int> labels);

// 1-based rank of the positive among the candidates by descending score.
// Candidates tied with the positive are placed before it.
std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive);

struct ScoredGroup {
  std::string group_id;
  std::vector<double> scores;
  std::size_t positive = 0;
};

// One rank per group. Throws NoPositive when a group's positive index is out
// of range.
std::vector<std::size_t> rank_queries(std::span<const ScoredGroup> groups);

double precision_at_1(std::span<const std::size_t> ranks);
double mrr(std::span<const std::size_t> ranks);

// Levenshtein distance over whole tokens, unit costs.
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);
// 1 - d / max(M, N); 1 for two empty sequences.
double edit_similarity(std::span<const std::string> a, std::span<const std::string> b);

// Jaccard index of the character n-gram sets. Throws TooShort.
double char_ngram_jaccard(std::string_view a, std::string_view b, std::size_t n = 4);
// Over the instruction texts joined with single spaces.
double char_ngram_jaccard(std::span<const std::string> a, std::span<const std::string> b, std::size_t n = 4);

struct CdfPoint {
  double rate = 0.0;
  double cumulative = 0.0;
};

// Sorted distinct rates with the fraction of values <= rate. Throws EmptyInput.
std::vector<CdfPoint> cdf(std::span<const double> rates);
// Difference rate 1 - edit_similarity for each pair, then cdf().
std::vector<double> difference_rates(
    std::span<const std::pair<std::vector<std::string>, std::vector<std::string>>> pairs);

struct BaselineScores {
  std::optional<double> accuracy;
  std::optional<double> auc;
  std::optional<double> precision_at_1;
  std::optional<double> mrr;
};

struct RankEntry {
  std::string group_id;
  std::size_t rank = 0;
};

struct EvalReport {
  std::string task;  // "classification" or "ranking"
  std::optional<double> accuracy;
  std::optional<double> auc;
  std::optional<double> precision_at_1;
  std::optional<double> mrr;
  std::size_t n_examples = 0;
  std::vector<RankEntry> ranks;
  std::map<std::string, BaselineScores> baselines;
  std::string checkpoint;
  std::string split;
  nlohmann::json config;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
  // group_id,rank rows with a header.
  std::string ranks_csv() const;
};

}  // namespace interbin::eval
