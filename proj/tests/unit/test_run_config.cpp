#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <optional>

#include "interbin/error.hpp"
#include "interbin/run_config.hpp"

using namespace interbin;
using cli::RunConfig;

namespace {

template <class F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("defaults cover every known key") {
  RunConfig c;
  for (const auto& k : cli::known_keys()) CHECK(c.get(k.dotted()) == k.default_value);
  CHECK(c.get("data.num_neg") == "20");
  CHECK(c.get("model.mlp_dims").find(',') != std::string::npos);
}

TEST_CASE("ini text overrides defaults and set overrides ini") {
  RunConfig c;
  c.merge_text("# comment\n[model]\nhidden = 12\nmlp_dims = 8,4\n[train]\nlr = 0.01\n");
  CHECK(c.model_config().hidden == 12);
  CHECK(c.model_config().mlp_dims == std::vector<std::size_t>{8, 4});
  c.set("train.lr", "0.5");
  CHECK(c.train_config().lr == 0.5);
  c.merge_text("[train]\nepochs = 3\n");
  CHECK(c.train_config().lr == 0.5);
  CHECK(c.train_config().epochs == 3);
}

TEST_CASE("dump round-trips") {
  RunConfig a;
  a.merge_text("[data]\ntask = ranking\narch_pair = arm>x86\n[model]\nattention = cosine\n");
  RunConfig b;
  b.merge_text(a.dump());
  for (const auto& k : cli::known_keys()) CHECK(a.get(k.dotted()) == b.get(k.dotted()));
}

TEST_CASE("train config takes the task and negatives from the data section") {
  RunConfig c;
  c.merge_text("[data]\ntask = ranking\nnum_neg = 7\n");
  const auto t = c.train_config();
  CHECK(t.task == data::Task::Ranking);
  CHECK(t.num_neg == 7);
  const auto p = c.pairs_options();
  CHECK(p.task == data::Task::Ranking);
  CHECK(p.num_neg == 7);
}

TEST_CASE("arch pairs") {
  CHECK_FALSE(cli::parse_arch_pair("mixed").has_value());
  CHECK_FALSE(cli::parse_arch_pair("").has_value());
  const auto p = cli::parse_arch_pair("x86>arm");
  REQUIRE(p.has_value());
  CHECK(p->first == Arch::X86);
  CHECK(p->second == Arch::ARM);
  CHECK(code_of([] { cli::parse_arch_pair("x86-arm"); }) == ErrorCode::ConfigError);
}

TEST_CASE("configuration errors") {
  RunConfig c;
  CHECK(code_of([&] { c.set("train.nope", "1"); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { c.get("nope"); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { c.merge_text("[bogus]\nx = 1\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { c.merge_text("hidden = 3\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { c.merge_text("[model\n"); }) == ErrorCode::ConfigError);

  RunConfig bad;
  bad.set("model.hidden", "abc");
  CHECK(code_of([&] { bad.model_config(); }) == ErrorCode::ConfigError);
  bad = RunConfig();
  bad.set("train.lr", "-1");
  CHECK(code_of([&] { bad.train_config(); }) == ErrorCode::ConfigError);
  bad = RunConfig();
  bad.set("train.resample_negatives", "maybe");
  CHECK(code_of([&] { bad.train_config(); }) == ErrorCode::ConfigError);
  bad = RunConfig();
  bad.set("synth.min_ops", "9");
  bad.set("synth.max_ops", "3");
  CHECK(code_of([&] { bad.synth_options(); }) == ErrorCode::ConfigError);
  bad = RunConfig();
  bad.set("model.attention", "quadratic");
  CHECK(code_of([&] { bad.model_config(); }) == ErrorCode::ConfigError);
}

TEST_CASE("paths") {
  const auto dir = std::filesystem::temp_directory_path() / "interbin_run_config_test";
  std::filesystem::create_directories(dir);
  RunConfig c;
  CHECK(code_of([&] { c.existing_path("data.records"); }) == ErrorCode::ConfigError);
  c.set("data.records", (dir / "absent.jsonl").string());
  CHECK(code_of([&] { c.existing_path("data.records"); }) == ErrorCode::IoError);
  std::ofstream(dir / "present.jsonl") << "\n";
  c.set("data.records", (dir / "present.jsonl").string());
  CHECK(c.existing_path("data.records") == dir / "present.jsonl");

  CHECK(code_of([&] { c.merge_file(dir / "absent.ini"); }) == ErrorCode::IoError);
  std::ofstream(dir / "run.ini") << "[run]\nsplit = val\n";
  c.merge_file(dir / "run.ini");
  CHECK(c.get("run.split") == "val");
  std::filesystem::remove_all(dir);
}
