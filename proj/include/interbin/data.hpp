#pragma once

// Function records, pair and ranking-group generation, splits by identity,
// and the synthetic two-dialect corpus generator.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "interbin/asm_normalize.hpp"

namespace interbin::data {

inline constexpr int kRecordSchemaVersion = 1;
inline constexpr int kPairsSchemaVersion = 1;

struct FunctionRecord {
  std::string record_id;
  std::string binary_name;
  std::string function_name;
  Arch arch = Arch::X86;
  std::optional<std::string> compiler;
  std::optional<std::string> opt_level;
  std::vector<std::string> instructions;

  // record_id@arch[@compiler][@opt_level]; unique within a corpus.
  std::string uid() const;
  nlohmann::json to_json() const;
  bool operator==(const FunctionRecord&) const = default;
};

// Throws MissingField or ValidationError. `line` is used in messages.
FunctionRecord parse_record(const nlohmann::json& doc, std::size_t line = 0);
// Throws IoError, ParseError (with the 1-based line), MissingField, ValidationError.
std::vector<FunctionRecord> load_jsonl(const std::filesystem::path& path);
std::vector<FunctionRecord> parse_jsonl(std::istream& in);
void write_jsonl(const std::filesystem::path& path, std::span<const FunctionRecord> records);

// All instructions of all records, tokenized; for dictionary building.
std::vector<asmnorm::RawInstruction> raw_corpus(std::span<const FunctionRecord> records);
// Function names of the corpus, for FOO normalization of direct calls.
std::set<std::string, std::less<>> function_names(std::span<const FunctionRecord> records);

enum class Task { Classification, Ranking };
std::string_view task_name(Task task);
Task parse_task(std::string_view text);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  void validate() const;
};

// Shuffled identities cut by the ratios (rounded, remainder to train).
std::map<std::string, std::string> assign_splits(std::vector<std::string> ids, const SplitRatios& ratios,
                                                 std::uint64_t seed);

struct PairExample {
  std::string split;
  std::string a;  // uid
  std::string b;
  int label = 0;
  bool operator==(const PairExample&) const = default;
};

struct RankingGroup {
  std::string split;
  std::string group_id;
  std::string query;
  std::string positive;
  std::vector<std::string> negatives;
  std::size_t size() const { return 1 + negatives.size(); }
  bool operator==(const RankingGroup&) const = default;
};

struct PairSet {
  Task task = Task::Classification;
  std::vector<PairExample> pairs;
  std::vector<RankingGroup> groups;
  // Identities present on the query architecture but with no record on the
  // target one.
  std::size_t skipped_without_counterpart = 0;

  std::vector<PairExample> pairs_in(std::string_view split) const;
  std::vector<RankingGroup> groups_in(std::string_view split) const;
};

struct MakePairsOptions {
  Task task = Task::Classification;
  // Query/target architectures; unset means mixed (drawn per identity).
  std::optional<std::pair<Arch, Arch>> arch_pair;
  // Also emit the reverse direction (target -> query) for every identity.
  bool both_directions = false;
  std::size_t num_neg = 20;
  std::uint64_t seed = 1;
  SplitRatios ratios;
};

// Throws InsufficientNegatives, NoCrossArchCounterpart, ValidationError.
PairSet make_pairs(std::span<const FunctionRecord> records, const MakePairsOptions& options);

// `pool` holds candidate uids on the target architecture together with their
// identity. Negatives are drawn without replacement among uids whose identity
// differs from `query_id`. Throws InsufficientNegatives.
std::vector<std::string> sample_negatives(std::span<const std::pair<std::string, std::string>> pool,
                                          const std::string& query_id, std::size_t num_neg, std::mt19937_64& rng);

nlohmann::json pairs_header(const PairSet& set);
void write_pairs_jsonl(const std::filesystem::path& path, const PairSet& set);
std::string pairs_jsonl(const PairSet& set);
PairSet load_pairs_jsonl(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthOptions {
  std::size_t n_functions = 100;  // identities; each is rendered once per dialect
  std::size_t min_ops = 6;
  std::size_t max_ops = 14;
  double swap_prob = 0.15;
  std::uint64_t seed = 7;
};

// Pseudo-source templates rendered into an x86-like and an ARM-like dialect
// with independent register allocation, literal perturbation, adjacent swaps
// of independent operations and dialect-specific expansions.
std::vector<FunctionRecord> synthesize(const SynthOptions& options);

}  // namespace interbin::data
