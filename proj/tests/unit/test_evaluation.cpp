#include <functional>
#include <random>
#include <set>

#include "doctest.h"
#include "interbin/error.hpp"
#include "interbin/evaluation.hpp"

using namespace interbin;

namespace {

// Counts every positive/negative pair directly.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      total += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / total;
}

// Memoized recursion on suffixes.
std::size_t recursive_edit(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    if (memo[i][j] >= 0) return static_cast<std::size_t>(memo[i][j]);
    std::size_t best = std::min(go(i + 1, j), go(i, j + 1)) + 1;
    best = std::min(best, go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1));
    memo[i][j] = static_cast<long>(best);
    return best;
  };
  return go(0, 0);
}

double set_jaccard(const std::string& a, const std::string& b, std::size_t n) {
  std::set<std::string> x, y, both;
  for (std::size_t i = 0; i + n <= a.size(); ++i) x.insert(a.substr(i, n));
  for (std::size_t i = 0; i + n <= b.size(); ++i) y.insert(b.substr(i, n));
  std::set<std::string> uni = x;
  uni.insert(y.begin(), y.end());
  for (const auto& g : x) {
    if (y.contains(g)) both.insert(g);
  }
  return static_cast<double>(both.size()) / static_cast<double>(uni.size());
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::string> vocab{"MOV", "ADD", "SUB", "CALL", "RET", "JMP"};
  std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, vocab.size() - 1);
  std::vector<std::string> out(len(rng));
  for (auto& t : out) t = vocab[pick(rng)];
  return out;
}

std::string random_text(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(4, 20);
  std::uniform_int_distribution<int> ch('A', 'D');
  std::string s(len(rng), 'A');
  for (char& c : s) c = static_cast<char>(ch(rng));
  return s;
}

}  // namespace

TEST_CASE("accuracy thresholds at one half") {
  const std::vector<double> s{0.9, 0.5, 0.49, 0.1};
  const std::vector<int> y{1, 1, 0, 1};
  CHECK(eval::accuracy(s, y) == doctest::Approx(0.75));
  CHECK(eval::accuracy(s, y, 0.95) == doctest::Approx(0.25));
  CHECK_THROWS_AS(eval::accuracy({}, {}), Error);
  const std::vector<int> short_y{1};
  CHECK_THROWS_AS(eval::accuracy(s, short_y), Error);
}

TEST_CASE("AUC equals a brute-force pair count") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 30;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse(rng) / 6.0;  // many ties
      y[i] = coin(rng) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(eval::auc(s, y) == doctest::Approx(brute_auc(s, y)).epsilon(1e-12));
  }
  const std::vector<double> s{0.2, 0.4};
  const std::vector<int> ones{1, 1};
  CHECK_THROWS_AS(eval::auc(s, ones), Error);
  const std::vector<int> perfect{0, 1};
  CHECK(eval::auc(s, perfect) == 1.0);
}

TEST_CASE("AUC is invariant under a monotone transform of the scores") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  std::vector<double> s(40), t(40);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = n01(rng);
    t[i] = std::exp(3.0 * s[i]) + 1.0;
    y[i] = static_cast<int>(i % 3 == 0);
  }
  CHECK(eval::auc(s, y) == doctest::Approx(eval::auc(t, y)).epsilon(1e-15));
}

TEST_CASE("ranking with ties places the positive last among equals") {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.1};
  CHECK(eval::rank_of_positive(s, 0) == 3);
  CHECK(eval::rank_of_positive(s, 1) == 1);
  CHECK(eval::rank_of_positive(s, 3) == 4);
  const std::vector<double> flat(21, 0.3);
  CHECK(eval::rank_of_positive(flat, 0) == 21);
}

TEST_CASE("precision at 1 and MRR") {
  const std::vector<std::size_t> ranks{1, 2, 4, 1};
  CHECK(eval::precision_at_1(ranks) == doctest::Approx(0.5));
  CHECK(eval::mrr(ranks) == doctest::Approx((1.0 + 0.5 + 0.25 + 1.0) / 4.0));
  std::vector<eval::ScoredGroup> groups{{"g1", {0.9, 0.1}, 0}, {"g2", {0.2, 0.8, 0.5}, 0}};
  CHECK(eval::rank_queries(groups) == std::vector<std::size_t>{1, 3});
  groups.push_back({"bad", {0.4}, 3});
  CHECK_THROWS_AS(eval::rank_queries(groups), Error);
}

TEST_CASE("a random scorer ranks the positive 11th of 21 on average") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u;
  const std::size_t n_groups = 20000;
  std::vector<eval::ScoredGroup> groups(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    groups[g].scores.resize(21);
    for (double& x : groups[g].scores) x = u(rng);
  }
  const auto ranks = eval::rank_queries(groups);
  double mean = 0.0;
  for (auto r : ranks) mean += static_cast<double>(r);
  mean /= n_groups;
  // standard error of the mean rank is about 0.043
  CHECK(std::abs(mean - 11.0) < 0.2);
  CHECK(std::abs(eval::precision_at_1(ranks) - 1.0 / 21.0) < 0.006);
}

TEST_CASE("edit distance agrees with a recursive oracle and is a metric") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 400; ++trial) {
    const auto a = random_tokens(rng, 9), b = random_tokens(rng, 9), c = random_tokens(rng, 9);
    const std::size_t ab = eval::edit_distance(a, b);
    CHECK(ab == recursive_edit(a, b));
    CHECK(ab == eval::edit_distance(b, a));
    CHECK(eval::edit_distance(a, a) == 0);
    CHECK(eval::edit_distance(a, c) <= ab + eval::edit_distance(b, c));
    const double sim = eval::edit_similarity(a, b);
    CHECK(sim >= 0.0);
    CHECK(sim <= 1.0);
  }
  const std::vector<std::string> x{"MOV", "ADD", "RET"}, y{"MOV", "SUB", "RET", "NOP"};
  CHECK(eval::edit_distance(x, y) == 2);
  CHECK(eval::edit_similarity(x, y) == doctest::Approx(0.5));
  CHECK(eval::edit_similarity(std::vector<std::string>{}, std::vector<std::string>{}) == 1.0);
}

TEST_CASE("char n-gram Jaccard agrees with a set computation") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string a = random_text(rng), b = random_text(rng);
    const double j = eval::char_ngram_jaccard(a, b);
    CHECK(j == doctest::Approx(set_jaccard(a, b, 4)).epsilon(1e-15));
    CHECK(j == eval::char_ngram_jaccard(b, a));
    CHECK(eval::char_ngram_jaccard(a, a) == 1.0);
  }
  CHECK(eval::char_ngram_jaccard("ABCDE", "BCDEF") == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(eval::char_ngram_jaccard("ABC", "ABCD"), Error);
  const std::vector<std::string> a{"MOV", "RET"}, b{"MOV RET"};
  CHECK(eval::char_ngram_jaccard(a, b) == 1.0);
}

TEST_CASE("CDF of difference rates") {
  const std::vector<double> rates{0.5, 0.0, 0.5, 1.0};
  const auto points = eval::cdf(rates);
  REQUIRE(points.size() == 3);
  CHECK(points[0].rate == 0.0);
  CHECK(points[0].cumulative == doctest::Approx(0.25));
  CHECK(points[1].rate == 0.5);
  CHECK(points[1].cumulative == doctest::Approx(0.75));
  CHECK(points[2].cumulative == 1.0);
  CHECK_THROWS_AS(eval::cdf({}), Error);

  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs{
      {{"A", "B"}, {"A", "B"}}, {{"A", "B"}, {"A", "C"}}, {{"A"}, {"B", "C"}}};
  const auto diff = eval::difference_rates(pairs);
  CHECK(diff == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("CDF is monotone and ends at one") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> rates(500);
  for (double& r : rates) r = std::round(u(rng) * 20.0) / 20.0;
  const auto points = eval::cdf(rates);
  for (std::size_t i = 1; i < points.size(); ++i) {
    CHECK(points[i].rate > points[i - 1].rate);
    CHECK(points[i].cumulative > points[i - 1].cumulative);
  }
  CHECK(points.back().cumulative == 1.0);
}

TEST_CASE("report JSON round-trip and ranks CSV") {
  eval::EvalReport r;
  r.task = "ranking";
  r.precision_at_1 = 0.5;
  r.mrr = 0.75;
  r.n_examples = 2;
  r.ranks = {{"q1", 1}, {"q2", 2}};
  r.baselines["jaccard_4gram"] = {std::nullopt, std::nullopt, 0.25, 0.5};
  r.checkpoint = "best.ckpt.json";
  r.split = "test";
  r.config = {{"hidden", 16}};
  const auto back = eval::EvalReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.ranks.size() == 2);
  CHECK(back.baselines.at("jaccard_4gram").precision_at_1 == 0.25);
  CHECK_FALSE(back.accuracy.has_value());
  CHECK(r.ranks_csv() == "group_id,rank\nq1,1\nq2,2\n");
}
