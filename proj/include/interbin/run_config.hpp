#pragma once

// Sectioned key=value run configuration shared by every CLI subcommand.
//
//   [data]   records, pairs, dicts, task, arch_pair, both_directions, num_neg,
//            seed, train_ratio, val_ratio, test_ratio
//   [model]  ModelConfig fields; mlp_dims is a comma list
//   [train]  lr, batch_size, epochs, seed, precision, resample_negatives,
//            record_wall_time
//   [run]    out_dir, checkpoint, split
//   [synth]  n_functions, min_ops, max_ops, swap_prob, seed
//
// Later sources override earlier ones: defaults, then the file, then flags.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "interbin/data.hpp"
#include "interbin/model.hpp"
#include "interbin/training.hpp"

namespace interbin::cli {

struct KeySpec {
  std::string section;
  std::string key;
  std::string default_value;
  std::string help;
  std::string dotted() const { return section + "." + key; }
};

const std::vector<KeySpec>& known_keys();

class RunConfig {
 public:
  RunConfig();

  // Throws IoError, ConfigError (syntax, unknown section or key).
  void merge_file(const std::filesystem::path& path);
  void merge_text(std::string_view ini);
  // `dotted` is section.key. Throws ConfigError for an unknown key.
  void set(std::string_view dotted, std::string value);
  const std::string& get(std::string_view dotted) const;
  bool empty(std::string_view dotted) const { return get(dotted).empty(); }

  // Typed views. Throw ConfigError for malformed or invalid values.
  model::ModelConfig model_config() const;
  train::TrainConfig train_config() const;
  data::MakePairsOptions pairs_options() const;
  data::SynthOptions synth_options() const;

  // Path-valued key that must be set and name an existing file.
  std::filesystem::path existing_path(std::string_view dotted) const;

  // Full INI rendering, sections and keys in a fixed order.
  std::string dump() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Parses "x86>arm" style pairs; "mixed" or "" is std::nullopt.
std::optional<std::pair<Arch, Arch>> parse_arch_pair(std::string_view text);

}  // namespace interbin::cli
