// interbin command-line interface.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "interbin/data.hpp"
#include "interbin/error.hpp"
#include "interbin/evaluation.hpp"
#include "interbin/run_config.hpp"
#include "interbin/training.hpp"

using namespace interbin;
using nlohmann::json;

namespace {

// Options every subcommand shares: --config plus one flag per config key.
struct Common {
  std::string config_file;
  std::map<std::string, std::string> flags;
  CLI::App* app = nullptr;
};

Common& add_common(CLI::App& sub, std::vector<std::unique_ptr<Common>>& store) {
  auto c = std::make_unique<Common>();
  c->app = &sub;
  sub.add_option("--config", c->config_file, "INI config file ([data], [model], [train], [run], [synth])");
  for (const auto& k : cli::known_keys()) {
    auto* opt = sub.add_option("--" + k.dotted(), c->flags[k.dotted()], k.help);
    opt->group(k.section + " settings");
    if (!k.default_value.empty()) opt->default_str(k.default_value);
  }
  store.push_back(std::move(c));
  return *store.back();
}

cli::RunConfig resolve(const Common& c) {
  cli::RunConfig cfg;
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  for (const auto& [key, value] : c.flags) {
    if (c.app->count("--" + key) > 0) cfg.set(key, value);
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

std::string out_or(const std::string& flag, const cli::RunConfig& cfg, std::string_view key) {
  if (!flag.empty()) return flag;
  const std::string& v = cfg.get(key);
  if (v.empty()) throw Error(ErrorCode::ConfigError, "no output path: pass --out or set " + std::string(key));
  return v;
}

asmnorm::ArchDictionaries load_dicts(const cli::RunConfig& cfg) {
  const auto path = cfg.existing_path("data.dicts");
  std::ifstream in(path);
  try {
    return asmnorm::ArchDictionaries::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::vector<data::FunctionRecord> load_records(const cli::RunConfig& cfg) {
  return data::load_jsonl(cfg.existing_path("data.records"));
}

// Model from the checkpoint named by run.checkpoint, with the records featurized for it.
struct Loaded {
  train::Checkpoint ckpt;
  std::unique_ptr<model::InterBinModel> model;
  std::vector<data::FunctionRecord> records;
  std::unique_ptr<train::Corpus> corpus;
};

Loaded load_model(const cli::RunConfig& cfg) {
  Loaded l;
  l.ckpt = train::load_checkpoint(cfg.existing_path("run.checkpoint"));
  const auto dicts = load_dicts(cfg);
  l.model = train::model_from_checkpoint(l.ckpt, dicts);
  l.records = load_records(cfg);
  l.corpus = std::make_unique<train::Corpus>(l.records, dicts, l.ckpt.model_config);
  return l;
}

// ---------------------------------------------------------------------------

int cmd_synth(const cli::RunConfig& cfg, const std::string& out) {
  const auto records = data::synthesize(cfg.synth_options());
  const std::string path = out_or(out, cfg, "data.records");
  data::write_jsonl(path, records);
  std::cout << json{{"records", records.size()}, {"path", path}}.dump() << "\n";
  return 0;
}

int cmd_build_dicts(const cli::RunConfig& cfg, const std::string& out) {
  const auto records = load_records(cfg);
  const auto dicts = asmnorm::build_dictionaries(data::raw_corpus(records), data::function_names(records));
  const std::string path = out_or(out, cfg, "data.dicts");
  write_text(path, dicts.to_json().dump(1) + "\n");
  json summary{{"path", path}, {"hash", dicts.content_hash()}};
  for (Arch a : dicts.archs()) {
    summary["archs"][std::string(arch_name(a))] = {{"opcodes", dicts.opcodes(a).size()},
                                                    {"registers", dicts.registers(a).size()}};
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_make_pairs(const cli::RunConfig& cfg, const std::string& out) {
  const auto records = load_records(cfg);
  const auto set = data::make_pairs(records, cfg.pairs_options());
  const std::string path = out_or(out, cfg, "data.pairs");
  data::write_pairs_jsonl(path, set);
  std::map<std::string, std::size_t> per_split;
  for (const auto& p : set.pairs) ++per_split[p.split];
  for (const auto& g : set.groups) ++per_split[g.split];
  std::cout << json{{"path", path},
                    {"task", data::task_name(set.task)},
                    {"per_split", per_split},
                    {"skipped_without_counterpart", set.skipped_without_counterpart}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train(const cli::RunConfig& cfg, bool resume) {
  const auto records = load_records(cfg);
  const auto dicts = load_dicts(cfg);
  const auto pairs = data::load_pairs_jsonl(cfg.existing_path("data.pairs"));
  const auto mc = cfg.model_config();
  auto tc = cfg.train_config();
  if (pairs.task != tc.task) {
    throw Error(ErrorCode::ConfigError, "data.task is " + std::string(data::task_name(tc.task)) +
                                            " but the pairs file holds " + std::string(data::task_name(pairs.task)));
  }
  const std::filesystem::path out_dir = cfg.get("run.out_dir");
  std::filesystem::create_directories(out_dir);
  write_text((out_dir / "config.ini").string(), cfg.dump());

  train::Corpus corpus(records, dicts, mc);
  model::InterBinModel m(mc, dicts, tc.seed);
  train::TrainOptions opt;
  opt.out_dir = out_dir;
  if (resume) opt.resume_from = out_dir / "last.ckpt.json";
  opt.on_epoch = [](const train::EpochMetrics& e) { std::cerr << e.to_json(true).dump() << "\n"; };
  const auto result = train::train(m, corpus, pairs, tc, opt);
  json summary{{"out_dir", out_dir.string()},
               {"epochs", result.last.epoch},
               {"best_epoch", result.best.best_epoch},
               {"best_checkpoint", (out_dir / "best.ckpt.json").string()}};
  if (result.best.best_metric) summary["best_metric"] = *result.best.best_metric;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_evaluate(const cli::RunConfig& cfg, const std::string& out, const std::string& ranks_csv, bool baselines) {
  auto l = load_model(cfg);
  const auto pairs = data::load_pairs_jsonl(cfg.existing_path("data.pairs"));
  auto report = train::evaluate(*l.model, *l.corpus, pairs, cfg.get("run.split"), baselines);
  report.checkpoint = std::filesystem::path(cfg.get("run.checkpoint")).filename().string();
  report.split = cfg.get("run.split");
  report.config = l.ckpt.model_config.to_json();
  write_text(out, report.to_json().dump(1) + "\n");
  if (!ranks_csv.empty()) write_text(ranks_csv, report.ranks_csv());
  return 0;
}

int cmd_predict(const cli::RunConfig& cfg, const std::string& a, const std::string& b) {
  auto l = load_model(cfg);
  const auto out = l.model->forward_pair(l.corpus->sequence(a), l.corpus->sequence(b));
  std::printf("%.17g\n", out.probability_similar);
  return 0;
}

int cmd_export_attention(const cli::RunConfig& cfg, const std::string& a, const std::string& b,
                         const std::string& format, const std::string& matrix, const std::string& out) {
  auto l = load_model(cfg);
  if (l.ckpt.model_config.drop_coattention) {
    throw Error(ErrorCode::ConfigError, "the checkpoint was trained without co-attention; nothing to export");
  }
  const auto& sa = l.corpus->sequence(a);
  const auto& sb = l.corpus->sequence(b);
  const auto inter = l.model->interact(l.model->encode_sequence(sa), l.model->encode_sequence(sb));
  const std::map<std::string, const ad::Tensor*> mats{
      {"scores", &inter.scores}, {"alpha", &inter.alpha}, {"beta", &inter.beta}};
  auto rows_of = [](const ad::Tensor& t) {
    std::vector<std::vector<double>> r(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i) {
      for (std::size_t j = 0; j < t.cols(); ++j) r[i][j] = t.at(i, j);
    }
    return r;
  };
  std::vector<std::string> ta, tb;
  for (const auto& s : sa.steps) ta.push_back(s.text);
  for (const auto& s : sb.steps) tb.push_back(s.text);
  if (format == "json") {
    json doc{{"a", a}, {"b", b}, {"rows", ta.size()}, {"cols", tb.size()}, {"a_instructions", ta},
             {"b_instructions", tb}};
    for (const auto& [name, t] : mats) doc[name] = rows_of(*t);
    write_text(out, doc.dump(1) + "\n");
    return 0;
  }
  auto it = mats.find(matrix);
  if (it == mats.end()) throw Error(ErrorCode::ConfigError, "--matrix must be scores, alpha or beta");
  std::ostringstream csv;
  csv.precision(17);
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  csv << "instruction";
  for (const auto& t : tb) csv << "," << quote(t);
  csv << "\n";
  const auto r = rows_of(*it->second);
  for (std::size_t i = 0; i < r.size(); ++i) {
    csv << quote(ta[i]);
    for (double v : r[i]) csv << "," << v;
    csv << "\n";
  }
  write_text(out, csv.str());
  return 0;
}

int cmd_cdf_diff(const cli::RunConfig& cfg, const std::string& out) {
  const auto records = load_records(cfg);
  const auto dicts = cfg.empty("data.dicts")
                         ? asmnorm::build_dictionaries(data::raw_corpus(records), data::function_names(records))
                         : load_dicts(cfg);
  const auto arch_pair = cli::parse_arch_pair(cfg.get("data.arch_pair"));
  // identity -> arch -> first record (records sorted by uid)
  std::map<std::string, std::map<Arch, const data::FunctionRecord*>> by_id;
  for (const auto& r : records) {
    auto& slot = by_id[r.record_id][r.arch];
    if (!slot || r.uid() < slot->uid()) slot = &r;
  }
  auto texts = [&](const data::FunctionRecord& r) {
    std::vector<std::string> out;
    for (const auto& line : r.instructions) {
      out.push_back(asmnorm::normalize_instruction(asmnorm::tokenize_instruction(line, r.arch), dicts).text);
    }
    return out;
  };
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
  for (const auto& [id, per_arch] : by_id) {
    const data::FunctionRecord *x = nullptr, *y = nullptr;
    if (arch_pair) {
      auto ix = per_arch.find(arch_pair->first), iy = per_arch.find(arch_pair->second);
      if (ix == per_arch.end() || iy == per_arch.end()) continue;
      x = ix->second;
      y = iy->second;
    } else {
      if (per_arch.size() < 2) continue;
      x = per_arch.begin()->second;
      y = std::next(per_arch.begin())->second;
    }
    pairs.emplace_back(texts(*x), texts(*y));
  }
  if (pairs.empty()) throw Error(ErrorCode::NoCrossArchCounterpart, "no identity has records on both architectures");
  const auto rates = eval::difference_rates(pairs);
  std::ostringstream tsv;
  tsv.precision(17);
  tsv << "rate\tcumulative\n";
  for (const auto& p : eval::cdf(rates)) tsv << p.rate << "\t" << p.cumulative << "\n";
  write_text(out, tsv.str());
  double mean = 0.0;
  for (double r : rates) mean += r;
  std::cerr << json{{"pairs", rates.size()}, {"mean_rate", mean / static_cast<double>(rates.size())}}.dump()
            << "\n";
  return 0;
}

int cmd_sweep(const cli::RunConfig& cfg, const std::string& axis, const std::string& out) {
  const auto records = load_records(cfg);
  const auto dicts = load_dicts(cfg);
  const auto pairs = data::load_pairs_jsonl(cfg.existing_path("data.pairs"));
  const auto variants = train::sweep_variants(cfg.model_config(), axis);
  const auto results = train::run_sweep(variants, cfg.train_config(), dicts, records, pairs, cfg.get("run.split"));
  const std::string table = train::sweep_table(results);
  const std::string path = out.empty() ? (std::filesystem::path(cfg.get("run.out_dir")) / "sweep.tsv").string() : out;
  write_text(path, table);
  if (path != "-") std::cout << table;
  return 0;
}

int fail(ErrorCode code, const std::string& message) {
  std::cerr << json{{"error", to_string(code)},
                    {"message", message},
                    {"remediation", remediation(code)},
                    {"exit_code", exit_code(code)}}
                   .dump()
            << "\n";
  return exit_code(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interbin: cross-architecture binary function similarity"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Common>> commons;

  std::string out, ranks_csv, uid_a, uid_b, format = "json", matrix = "scores", axis = "all";
  bool resume = false, no_baselines = false;

  auto* synth = app.add_subcommand("synth", "generate the synthetic two-dialect corpus");
  auto& c_synth = add_common(*synth, commons);
  synth->add_option("--out", out, "records JSONL (default data.records)");

  auto* dicts = app.add_subcommand("build-dicts", "build per-architecture opcode and register tables");
  auto& c_dicts = add_common(*dicts, commons);
  dicts->add_option("--out", out, "dictionaries JSON (default data.dicts)");

  auto* pairs = app.add_subcommand("make-pairs", "sample labeled pairs or ranking groups with identity splits");
  auto& c_pairs = add_common(*pairs, commons);
  pairs->add_option("--out", out, "pairs JSONL (default data.pairs)");

  auto* trn = app.add_subcommand("train", "train a model; writes checkpoints and metrics.jsonl to run.out_dir");
  auto& c_train = add_common(*trn, commons);
  trn->add_flag("--resume", resume, "continue from run.out_dir/last.ckpt.json");

  auto* evl = app.add_subcommand("evaluate", "score a split with a checkpoint; writes an EvalReport");
  auto& c_eval = add_common(*evl, commons);
  evl->add_option("--out", out, "report JSON (default stdout)");
  evl->add_option("--ranks-csv", ranks_csv, "also write group_id,rank rows");
  evl->add_flag("--no-baselines", no_baselines, "skip the edit-distance and Jaccard baselines");

  auto* pred = app.add_subcommand("predict", "print the similarity probability of two records");
  auto& c_pred = add_common(*pred, commons);
  pred->add_option("--a", uid_a, "uid of the first record (record_id@ARCH...)")->required();
  pred->add_option("--b", uid_b, "uid of the second record")->required();

  auto* att = app.add_subcommand("export-attention", "write the co-attention matrices of one pair");
  auto& c_att = add_common(*att, commons);
  att->add_option("--a", uid_a, "uid of the row-side record")->required();
  att->add_option("--b", uid_b, "uid of the column-side record")->required();
  att->add_option("--format", format, "json (all matrices) or csv (one matrix)")
      ->check(CLI::IsMember({"json", "csv"}));
  att->add_option("--matrix", matrix, "csv matrix: scores, alpha or beta")
      ->check(CLI::IsMember({"scores", "alpha", "beta"}));
  att->add_option("--out", out, "output file (default stdout)");

  auto* cdf = app.add_subcommand("cdf-diff", "CDF of the normalized code difference rate across architectures");
  auto& c_cdf = add_common(*cdf, commons);
  cdf->add_option("--out", out, "TSV output (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "train one model per variant of a setting and tabulate the results");
  auto& c_sweep = add_common(*sweep, commons);
  sweep->add_option("--axis", axis, "rnn, hidden, attention, enhancement, ablation or all");
  sweep->add_option("--out", out, "TSV output (default run.out_dir/sweep.tsv)");

  auto* show = app.add_subcommand("show-config", "print the merged configuration");
  auto& c_show = add_common(*show, commons);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorCode::ConfigError, e.what());
  }

  try {
    if (*synth) return cmd_synth(resolve(c_synth), out);
    if (*dicts) return cmd_build_dicts(resolve(c_dicts), out);
    if (*pairs) return cmd_make_pairs(resolve(c_pairs), out);
    if (*trn) return cmd_train(resolve(c_train), resume);
    if (*evl) return cmd_evaluate(resolve(c_eval), out, ranks_csv, !no_baselines);
    if (*pred) return cmd_predict(resolve(c_pred), uid_a, uid_b);
    if (*att) return cmd_export_attention(resolve(c_att), uid_a, uid_b, format, matrix, out);
    if (*cdf) return cmd_cdf_diff(resolve(c_cdf), out);
    if (*sweep) return cmd_sweep(resolve(c_sweep), axis, out);
    if (*show) {
      std::cout << resolve(c_show).dump();
      return 0;
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "RuntimeError"}, {"message", e.what()}, {"exit_code", 4}}.dump() << "\n";
    return 4;
  }
  return 0;
}
