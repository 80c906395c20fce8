#include "interbin/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "interbin/error.hpp"

namespace interbin::data {

std::string FunctionRecord::uid() const {
  std::string out = record_id + "@" + std::string(arch_name(arch));
  if (compiler) out += "@" + *compiler;
  if (opt_level) out += "@" + *opt_level;
  return out;
}

nlohmann::json FunctionRecord::to_json() const {
  nlohmann::json doc;
  doc["schema_version"] = kRecordSchemaVersion;
  doc["record_id"] = record_id;
  doc["binary_name"] = binary_name;
  doc["function_name"] = function_name;
  doc["arch"] = arch_name(arch);
  if (compiler) doc["compiler"] = *compiler;
  if (opt_level) doc["opt_level"] = *opt_level;
  doc["instructions"] = instructions;
  return doc;
}

namespace {

std::string at_line(std::size_t line) { return line ? " (line " + std::to_string(line) + ")" : std::string(); }

std::string required_string(const nlohmann::json& doc, const char* key, std::size_t line) {
  if (!doc.contains(key)) throw Error(ErrorCode::MissingField, std::string(key) + at_line(line));
  if (!doc[key].is_string()) {
    throw Error(ErrorCode::ValidationError, std::string(key) + " must be a string" + at_line(line));
  }
  return doc[key].get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& doc, const char* key, std::size_t line) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  if (!doc[key].is_string()) {
    throw Error(ErrorCode::ValidationError, std::string(key) + " must be a string" + at_line(line));
  }
  return doc[key].get<std::string>();
}

}  // namespace

FunctionRecord parse_record(const nlohmann::json& doc, std::size_t line) {
  if (!doc.is_object()) throw Error(ErrorCode::ValidationError, "record must be a JSON object" + at_line(line));
  if (doc.contains("schema_version") && doc["schema_version"] != kRecordSchemaVersion) {
    throw Error(ErrorCode::ValidationError,
                "unsupported schema_version " + doc["schema_version"].dump() + at_line(line));
  }
  FunctionRecord r;
  r.binary_name = required_string(doc, "binary_name", line);
  r.function_name = required_string(doc, "function_name", line);
  try {
    r.arch = parse_arch(required_string(doc, "arch", line));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnknownArchitecture) throw;
    throw Error(ErrorCode::ValidationError, std::string(e.what()) + at_line(line));
  }
  r.record_id = optional_string(doc, "record_id", line).value_or(r.binary_name + "::" + r.function_name);
  r.compiler = optional_string(doc, "compiler", line);
  r.opt_level = optional_string(doc, "opt_level", line);
  if (!doc.contains("instructions")) throw Error(ErrorCode::MissingField, "instructions" + at_line(line));
  const auto& insns = doc["instructions"];
  if (!insns.is_array()) throw Error(ErrorCode::ValidationError, "instructions must be an array" + at_line(line));
  if (insns.empty()) throw Error(ErrorCode::ValidationError, "instructions is empty" + at_line(line));
  for (const auto& i : insns) {
    if (!i.is_string()) throw Error(ErrorCode::ValidationError, "instructions must be strings" + at_line(line));
    r.instructions.push_back(i.get<std::string>());
  }
  return r;
}

std::vector<FunctionRecord> parse_jsonl(std::istream& in) {
  std::vector<FunctionRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(parse_record(doc, line));
  }
  return out;
}

std::vector<FunctionRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_jsonl(in);
}

void write_jsonl(const std::filesystem::path& path, std::span<const FunctionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<asmnorm::RawInstruction> raw_corpus(std::span<const FunctionRecord> records) {
  std::vector<asmnorm::RawInstruction> out;
  for (const auto& r : records) {
    for (const auto& line : r.instructions) out.push_back(asmnorm::tokenize_instruction(line, r.arch));
  }
  return out;
}

std::set<std::string, std::less<>> function_names(std::span<const FunctionRecord> records) {
  std::set<std::string, std::less<>> out;
  for (const auto& r : records) out.insert(r.function_name);
  return out;
}

std::string_view task_name(Task task) { return task == Task::Classification ? "classification" : "ranking"; }

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::Classification;
  if (text == "ranking") return Task::Ranking;
  throw Error(ErrorCode::ConfigError, "unknown task '" + std::string(text) + "'");
}

void SplitRatios::validate() const {
  for (double r : {train, val, test}) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::ConfigError, "split ratios must lie in [0, 1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw Error(ErrorCode::ConfigError, "split ratios must sum to 1");
}

std::map<std::string, std::string> assign_splits(std::vector<std::string> ids, const SplitRatios& ratios,
                                                 std::uint64_t seed) {
  ratios.validate();
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * n));
  const auto n_val = std::min(ids.size() - n_test, static_cast<std::size_t>(std::llround(ratios.val * n)));
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[ids[i]] = i < n_test ? "test" : i < n_test + n_val ? "val" : "train";
  }
  return out;
}

std::vector<PairExample> PairSet::pairs_in(std::string_view split) const {
  std::vector<PairExample> out;
  for (const auto& p : pairs) {
    if (p.split == split) out.push_back(p);
  }
  return out;
}

std::vector<RankingGroup> PairSet::groups_in(std::string_view split) const {
  std::vector<RankingGroup> out;
  for (const auto& g : groups) {
    if (g.split == split) out.push_back(g);
  }
  return out;
}

std::vector<std::string> sample_negatives(std::span<const std::pair<std::string, std::string>> pool,
                                          const std::string& query_id, std::size_t num_neg, std::mt19937_64& rng) {
  std::vector<std::string> ids;
  for (const auto& [uid, id] : pool) {
    if (id != query_id) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < num_neg) {
    throw Error(ErrorCode::InsufficientNegatives, "need " + std::to_string(num_neg) + " negative identities, have " +
                                                      std::to_string(ids.size()));
  }
  std::vector<std::string> out;
  out.reserve(num_neg);
  for (std::size_t k = 0; k < num_neg; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, ids.size() - 1);
    std::swap(ids[k], ids[pick(rng)]);
    std::vector<const std::string*> uids;
    for (const auto& [uid, id] : pool) {
      if (id == ids[k]) uids.push_back(&uid);
    }
    std::uniform_int_distribution<std::size_t> which(0, uids.size() - 1);
    out.push_back(*uids[which(rng)]);
  }
  return out;
}

PairSet make_pairs(std::span<const FunctionRecord> records, const MakePairsOptions& options) {
  options.ratios.validate();
  if (options.task == Task::Ranking && options.num_neg == 0) {
    throw Error(ErrorCode::ValidationError, "num_neg must be at least 1");
  }
  // identity -> arch -> uids (sorted)
  std::map<std::string, std::map<Arch, std::vector<std::string>>> by_id;
  std::set<Arch> archs;
  std::set<std::string> seen;
  for (const auto& r : records) {
    const std::string uid = r.uid();
    if (!seen.insert(uid).second) throw Error(ErrorCode::ValidationError, "duplicate record " + uid);
    by_id[r.record_id][r.arch].push_back(uid);
    archs.insert(r.arch);
  }
  for (auto& [_, per_arch] : by_id) {
    for (auto& [__, uids] : per_arch) std::sort(uids.begin(), uids.end());
  }
  if (archs.size() < 2) throw Error(ErrorCode::NoCrossArchCounterpart, "records cover fewer than two architectures");
  if (options.arch_pair) {
    const auto [qa, ta] = *options.arch_pair;
    if (qa == ta) throw Error(ErrorCode::ValidationError, "query and target architectures must differ");
    for (Arch a : {qa, ta}) {
      if (!archs.contains(a)) {
        throw Error(ErrorCode::NoCrossArchCounterpart, "no records for " + std::string(arch_name(a)));
      }
    }
  }

  std::vector<std::string> ids;
  for (const auto& [id, _] : by_id) ids.push_back(id);
  const auto split_of = assign_splits(ids, options.ratios, options.seed);

  // split -> arch -> (uid, identity)
  std::map<std::string, std::map<Arch, std::vector<std::pair<std::string, std::string>>>> pools;
  for (const auto& [id, per_arch] : by_id) {
    for (const auto& [arch, uids] : per_arch) {
      for (const auto& uid : uids) pools[split_of.at(id)][arch].emplace_back(uid, id);
    }
  }

  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
  };

  PairSet set;
  set.task = options.task;
  for (const auto& [id, per_arch] : by_id) {
    const std::string& split = split_of.at(id);
    std::vector<std::pair<Arch, Arch>> directions;
    if (options.arch_pair) {
      directions.push_back(*options.arch_pair);
    } else {
      std::vector<Arch> mine;
      for (const auto& [arch, _] : per_arch) mine.push_back(arch);
      if (mine.size() < 2) {
        ++set.skipped_without_counterpart;
        continue;
      }
      std::shuffle(mine.begin(), mine.end(), rng);
      directions.emplace_back(mine[0], mine[1]);
    }
    if (options.both_directions) directions.emplace_back(directions[0].second, directions[0].first);

    for (const auto& [qa, ta] : directions) {
      auto q_it = per_arch.find(qa);
      if (q_it == per_arch.end()) continue;
      auto t_it = per_arch.find(ta);
      if (t_it == per_arch.end()) {
        ++set.skipped_without_counterpart;
        continue;
      }
      const std::string query = pick(q_it->second);
      const std::string positive = pick(t_it->second);
      const auto& pool = pools[split][ta];
      if (options.task == Task::Classification) {
        const auto neg = sample_negatives(pool, id, 1, rng);
        set.pairs.push_back({split, query, positive, 1});
        set.pairs.push_back({split, query, neg[0], 0});
      } else {
        RankingGroup g;
        g.split = split;
        g.group_id = id + "|" + std::string(arch_name(qa)) + ">" + std::string(arch_name(ta));
        g.query = query;
        g.positive = positive;
        g.negatives = sample_negatives(pool, id, options.num_neg, rng);
        set.groups.push_back(std::move(g));
      }
    }
  }
  return set;
}

nlohmann::json pairs_header(const PairSet& set) {
  return {{"format", "interbin-pairs"},
          {"schema_version", kPairsSchemaVersion},
          {"task", task_name(set.task)},
          {"skipped_without_counterpart", set.skipped_without_counterpart}};
}

std::string pairs_jsonl(const PairSet& set) {
  std::string out = pairs_header(set).dump() + "\n";
  const std::string task(task_name(set.task));
  for (const auto& p : set.pairs) {
    out += nlohmann::json{{"split", p.split}, {"task", task}, {"a", p.a}, {"b", p.b}, {"label", p.label}}.dump();
    out += '\n';
  }
  for (const auto& g : set.groups) {
    out += nlohmann::json{{"split", g.split},     {"task", task},
                          {"group_id", g.group_id}, {"query", g.query},
                          {"positive", g.positive}, {"negatives", g.negatives}}
               .dump();
    out += '\n';
  }
  return out;
}

void write_pairs_jsonl(const std::filesystem::path& path, const PairSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << pairs_jsonl(set);
}

PairSet load_pairs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  PairSet set;
  std::string text;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + e.what());
    }
    try {
      if (!header) {
        if (doc.value("format", "") != "interbin-pairs") {
          throw Error(ErrorCode::ValidationError, "missing pairs header" + at_line(line));
        }
        if (doc.value("schema_version", 0) != kPairsSchemaVersion) {
          throw Error(ErrorCode::ValidationError, "unsupported pairs schema_version" + at_line(line));
        }
        set.task = parse_task(doc.at("task").get<std::string>());
        set.skipped_without_counterpart = doc.value("skipped_without_counterpart", std::size_t{0});
        header = true;
        continue;
      }
      if (set.task == Task::Classification) {
        PairExample p{required_string(doc, "split", line), required_string(doc, "a", line),
                      required_string(doc, "b", line), doc.at("label").get<int>()};
        if (p.label != 0 && p.label != 1) throw Error(ErrorCode::ValidationError, "label must be 0 or 1" + at_line(line));
        set.pairs.push_back(std::move(p));
      } else {
        RankingGroup g;
        g.split = required_string(doc, "split", line);
        g.group_id = required_string(doc, "group_id", line);
        g.query = required_string(doc, "query", line);
        g.positive = required_string(doc, "positive", line);
        g.negatives = doc.at("negatives").get<std::vector<std::string>>();
        set.groups.push_back(std::move(g));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MissingField, std::string(e.what()) + at_line(line));
    }
  }
  if (!header) throw Error(ErrorCode::ValidationError, "empty pairs file " + path.string());
  return set;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

enum class Op {
  LoadStack, StoreStack, LoadField, StoreField, MovReg, MovImm, Add, AddImm, Sub, Mul, And, Or, Xor,
  ShlImm, ShrImm, Neg, Not, CmpReg, CmpImm, Test, Call, LoadString
};

enum class Br { Eq, Ne, Lt, Ge, Always };

struct AbsOp {
  Op op = Op::MovReg;
  int d = 0, s1 = 0, s2 = 0;
  int imm = 0;
  int slot = 0;
  int target = 0;  // string or callee index
  std::optional<Br> branch;  // after a compare
};

constexpr int kVRegs = 6;

bool is_compare(Op op) { return op == Op::CmpReg || op == Op::CmpImm || op == Op::Test; }

// Registers read and written, for deciding whether two ops commute.
void uses(const AbsOp& a, std::vector<int>& reads, std::vector<int>& writes, bool& memory) {
  memory = false;
  switch (a.op) {
    case Op::LoadStack: writes = {a.d}; memory = true; break;
    case Op::StoreStack: reads = {a.s1}; memory = true; break;
    case Op::LoadField: reads = {a.s1}; writes = {a.d}; memory = true; break;
    case Op::StoreField: reads = {a.s1, a.s2}; memory = true; break;
    case Op::MovReg: case Op::Neg: case Op::Not: case Op::AddImm: case Op::ShlImm: case Op::ShrImm:
      reads = {a.s1}; writes = {a.d}; break;
    case Op::MovImm: case Op::LoadString: writes = {a.d}; break;
    case Op::Add: case Op::Sub: case Op::Mul: case Op::And: case Op::Or: case Op::Xor:
      reads = {a.s1, a.s2}; writes = {a.d}; break;
    default: memory = true; break;  // compares, branches and calls never move
  }
}

bool independent(const AbsOp& a, const AbsOp& b) {
  if (is_compare(a.op) || is_compare(b.op) || a.op == Op::Call || b.op == Op::Call) return false;
  std::vector<int> ra, wa, rb, wb;
  bool ma = false, mb = false;
  uses(a, ra, wa, ma);
  uses(b, rb, wb, mb);
  if (ma && mb) return false;
  auto meets = [](const std::vector<int>& x, const std::vector<int>& y) {
    for (int i : x) {
      if (std::find(y.begin(), y.end(), i) != y.end()) return true;
    }
    return false;
  };
  return !meets(wa, rb) && !meets(wb, ra) && !meets(wa, wb);
}

std::vector<AbsOp> make_template(std::mt19937_64& rng, const SynthOptions& opt, std::size_t n_callees) {
  std::uniform_int_distribution<std::size_t> len(opt.min_ops, opt.max_ops);
  std::uniform_int_distribution<int> reg(0, kVRegs - 1), imm(1, 200), slot(0, 7), shift(1, 5);
  std::uniform_int_distribution<int> callee(0, static_cast<int>(n_callees) - 1), str(0, 31);
  std::discrete_distribution<int> kind({6, 4, 3, 2, 3, 4, 4, 4, 3, 2, 2, 2, 2, 2, 2, 1, 1, 3, 3, 2, 3, 2});
  std::uniform_int_distribution<int> br(0, 4);
  const std::size_t n = len(rng);
  std::vector<AbsOp> ops;
  for (std::size_t i = 0; i < n; ++i) {
    AbsOp a;
    a.op = static_cast<Op>(kind(rng));
    a.d = reg(rng);
    a.s1 = reg(rng);
    a.s2 = reg(rng);
    a.imm = (a.op == Op::ShlImm || a.op == Op::ShrImm) ? shift(rng) : imm(rng);
    a.slot = slot(rng);
    a.target = a.op == Op::Call ? callee(rng) : str(rng);
    if (is_compare(a.op)) a.branch = static_cast<Br>(br(rng));
    ops.push_back(a);
  }
  return ops;
}

void swap_adjacent(std::vector<AbsOp>& ops, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
    if (coin(rng) && independent(ops[i], ops[i + 1])) {
      std::swap(ops[i], ops[i + 1]);
      ++i;
    }
  }
}

std::string hex(long v) {
  std::ostringstream s;
  s << "0x" << std::hex << v;
  return s.str();
}

class X86Writer {
 public:
  X86Writer(std::mt19937_64& rng, const std::vector<std::string>& callees) : rng_(rng), callees_(callees) {
    std::vector<int> pool{0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(pool.begin(), pool.end(), rng_);
    for (int i = 0; i < kVRegs; ++i) map_[i] = pool[static_cast<std::size_t>(i)];
  }

  std::vector<std::string> render(const std::vector<AbsOp>& ops, int ret_reg) {
    out_ = {"push rbp", "mov rbp, rsp", "sub rsp, " + hex(16 * (1 + static_cast<long>(ops.size() % 4)))};
    for (const auto& a : ops) emit(a);
    out_.push_back("mov eax, " + r32(ret_reg));
    out_.push_back(std::bernoulli_distribution(0.5)(rng_) ? "leave" : "pop rbp");
    out_.push_back("ret");
    return out_;
  }

 private:
  static constexpr const char* k32[] = {"ebx", "ecx", "edx", "esi", "r8d", "r9d", "r10d", "r11d"};
  static constexpr const char* k64[] = {"rbx", "rcx", "rdx", "rsi", "r8", "r9", "r10", "r11"};
  std::string r32(int v) const { return k32[map_[v]]; }
  std::string r64(int v) const { return k64[map_[v]]; }
  std::string stack(int slot) const { return "dword ptr [rbp - " + hex(4 * slot + 4) + "]"; }

  void two_op(const char* mnem, const AbsOp& a, const std::string& src) {
    if (a.d != a.s1) out_.push_back("mov " + r32(a.d) + ", " + r32(a.s1));
    out_.push_back(std::string(mnem) + " " + r32(a.d) + ", " + src);
  }

  void emit(const AbsOp& a) {
    switch (a.op) {
      case Op::LoadStack: out_.push_back("mov " + r32(a.d) + ", " + stack(a.slot)); break;
      case Op::StoreStack: out_.push_back("mov " + stack(a.slot) + ", " + r32(a.s1)); break;
      case Op::LoadField:
        out_.push_back("mov " + r32(a.d) + ", dword ptr [" + r64(a.s1) + " + " + hex(4 * a.slot) + "]");
        break;
      case Op::StoreField:
        out_.push_back("mov dword ptr [" + r64(a.s1) + " + " + hex(4 * a.slot) + "], " + r32(a.s2));
        break;
      case Op::MovReg: out_.push_back("mov " + r32(a.d) + ", " + r32(a.s1)); break;
      case Op::MovImm:
        if (a.imm % 7 == 0) {
          out_.push_back("xor " + r32(a.d) + ", " + r32(a.d));
        } else {
          out_.push_back("mov " + r32(a.d) + ", " + hex(a.imm));
        }
        break;
      case Op::Add:
        if (a.d != a.s1 && a.d != a.s2 && std::bernoulli_distribution(0.5)(rng_)) {
          out_.push_back("lea " + r32(a.d) + ", [" + r64(a.s1) + " + " + r64(a.s2) + "]");
        } else {
          two_op("add", a, r32(a.s2));
        }
        break;
      case Op::AddImm: two_op("add", a, hex(a.imm)); break;
      case Op::Sub: two_op("sub", a, r32(a.s2)); break;
      case Op::Mul: two_op("imul", a, r32(a.s2)); break;
      case Op::And: two_op("and", a, r32(a.s2)); break;
      case Op::Or: two_op("or", a, r32(a.s2)); break;
      case Op::Xor: two_op("xor", a, r32(a.s2)); break;
      case Op::ShlImm: two_op("shl", a, hex(a.imm)); break;
      case Op::ShrImm: two_op("sar", a, hex(a.imm)); break;
      case Op::Neg:
        if (a.d != a.s1) out_.push_back("mov " + r32(a.d) + ", " + r32(a.s1));
        out_.push_back("neg " + r32(a.d));
        break;
      case Op::Not:
        if (a.d != a.s1) out_.push_back("mov " + r32(a.d) + ", " + r32(a.s1));
        out_.push_back("not " + r32(a.d));
        break;
      case Op::CmpReg: out_.push_back("cmp " + r32(a.s1) + ", " + r32(a.s2)); break;
      case Op::CmpImm: out_.push_back("cmp " + r32(a.s1) + ", " + hex(a.imm)); break;
      case Op::Test: out_.push_back("test " + r32(a.s1) + ", " + r32(a.s1)); break;
      case Op::Call:
        out_.push_back("mov edi, " + r32(a.s1));
        out_.push_back("call " + callees_[static_cast<std::size_t>(a.target)]);
        out_.push_back("mov " + r32(a.d) + ", eax");
        break;
      case Op::LoadString:
        out_.push_back("lea " + r64(a.d) + ", [rip + str.s" + std::to_string(a.target) + "]");
        break;
    }
    if (a.branch) {
      static constexpr const char* kJcc[] = {"je", "jne", "jl", "jge", "jmp"};
      const long addr = 0x401000 + 16 * static_cast<long>(out_.size()) + 32;
      out_.push_back(std::string(kJcc[static_cast<int>(*a.branch)]) + " " + hex(addr));
    }
  }

  std::mt19937_64& rng_;
  const std::vector<std::string>& callees_;
  int map_[kVRegs]{};
  std::vector<std::string> out_;
};

class ArmWriter {
 public:
  ArmWriter(std::mt19937_64& rng, const std::vector<std::string>& callees) : rng_(rng), callees_(callees) {
    std::vector<int> pool{0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(pool.begin(), pool.end(), rng_);
    for (int i = 0; i < kVRegs; ++i) map_[i] = pool[static_cast<std::size_t>(i)];
  }

  std::vector<std::string> render(const std::vector<AbsOp>& ops, int ret_reg) {
    out_ = {"push {fp, lr}", "add fp, sp, #4", "sub sp, sp, #" + std::to_string(8 * (1 + ops.size() % 4))};
    for (const auto& a : ops) emit(a);
    out_.push_back("mov r0, " + r(ret_reg));
    out_.push_back("sub sp, fp, #4");
    out_.push_back("pop {fp, pc}");
    return out_;
  }

 private:
  static constexpr const char* kRegs[] = {"r4", "r5", "r6", "r7", "r8", "r9", "r2", "r3"};
  std::string r(int v) const { return kRegs[map_[v]]; }
  static std::string imm(int v) { return "#" + std::to_string(v); }
  std::string stack(int slot) const { return "[fp, #-" + std::to_string(4 * slot + 8) + "]"; }

  void three_op(const char* mnem, const AbsOp& a, const std::string& src2) {
    out_.push_back(std::string(mnem) + " " + r(a.d) + ", " + r(a.s1) + ", " + src2);
  }

  void emit(const AbsOp& a) {
    switch (a.op) {
      case Op::LoadStack: out_.push_back("ldr " + r(a.d) + ", " + stack(a.slot)); break;
      case Op::StoreStack: out_.push_back("str " + r(a.s1) + ", " + stack(a.slot)); break;
      case Op::LoadField: out_.push_back("ldr " + r(a.d) + ", [" + r(a.s1) + ", " + imm(4 * a.slot) + "]"); break;
      case Op::StoreField: out_.push_back("str " + r(a.s2) + ", [" + r(a.s1) + ", " + imm(4 * a.slot) + "]"); break;
      case Op::MovReg: out_.push_back("mov " + r(a.d) + ", " + r(a.s1)); break;
      case Op::MovImm:
        if (a.imm > 150) {
          out_.push_back("movw " + r(a.d) + ", " + imm(a.imm * 3));
          out_.push_back("movt " + r(a.d) + ", #0");
        } else {
          out_.push_back("mov " + r(a.d) + ", " + imm(a.imm));
        }
        break;
      case Op::Add: three_op("add", a, r(a.s2)); break;
      case Op::AddImm: three_op("add", a, imm(a.imm)); break;
      case Op::Sub: three_op("sub", a, r(a.s2)); break;
      case Op::Mul: three_op("mul", a, r(a.s2)); break;
      case Op::And: three_op("and", a, r(a.s2)); break;
      case Op::Or: three_op("orr", a, r(a.s2)); break;
      case Op::Xor: three_op("eor", a, r(a.s2)); break;
      case Op::ShlImm: three_op("lsl", a, imm(a.imm)); break;
      case Op::ShrImm: three_op("asr", a, imm(a.imm)); break;
      case Op::Neg: three_op("rsb", a, "#0"); break;
      case Op::Not: out_.push_back("mvn " + r(a.d) + ", " + r(a.s1)); break;
      case Op::CmpReg: out_.push_back("cmp " + r(a.s1) + ", " + r(a.s2)); break;
      case Op::CmpImm: out_.push_back("cmp " + r(a.s1) + ", " + imm(a.imm)); break;
      case Op::Test: out_.push_back("cmp " + r(a.s1) + ", #0"); break;
      case Op::Call:
        out_.push_back("mov r0, " + r(a.s1));
        out_.push_back("bl " + callees_[static_cast<std::size_t>(a.target)]);
        out_.push_back("mov " + r(a.d) + ", r0");
        break;
      case Op::LoadString: out_.push_back("ldr " + r(a.d) + ", =str.s" + std::to_string(a.target)); break;
    }
    if (a.branch) {
      static constexpr const char* kB[] = {"beq", "bne", "blt", "bge", "b"};
      const long addr = 0x10400 + 4 * static_cast<long>(out_.size()) + 12;
      out_.push_back(std::string(kB[static_cast<int>(*a.branch)]) + " " + hex(addr));
    }
  }

  std::mt19937_64& rng_;
  const std::vector<std::string>& callees_;
  int map_[kVRegs]{};
  std::vector<std::string> out_;
};

}  // namespace

std::vector<FunctionRecord> synthesize(const SynthOptions& options) {
  if (options.n_functions == 0) throw Error(ErrorCode::ValidationError, "n_functions must be at least 1");
  if (options.min_ops == 0 || options.min_ops > options.max_ops) {
    throw Error(ErrorCode::ValidationError, "need 1 <= min_ops <= max_ops");
  }
  std::mt19937_64 rng(options.seed);
  const std::vector<std::string> callees{"printf", "malloc", "free", "memcpy", "strlen", "puts", "abort", "helper"};
  std::vector<FunctionRecord> out;
  out.reserve(2 * options.n_functions);
  for (std::size_t k = 0; k < options.n_functions; ++k) {
    const auto ops = make_template(rng, options, callees.size());
    const int ret_reg = std::uniform_int_distribution<int>(0, kVRegs - 1)(rng);
    FunctionRecord base;
    base.binary_name = "synth" + std::to_string(k / 10);
    base.function_name = "fn" + std::to_string(k);
    base.record_id = base.binary_name + "::" + base.function_name;
    base.compiler = "synth";
    base.opt_level = "O0";

    auto x86_ops = ops;
    swap_adjacent(x86_ops, options.swap_prob, rng);
    X86Writer xw(rng, callees);
    FunctionRecord x = base;
    x.arch = Arch::X86;
    x.instructions = xw.render(x86_ops, ret_reg);
    out.push_back(std::move(x));

    auto arm_ops = ops;
    swap_adjacent(arm_ops, options.swap_prob, rng);
    ArmWriter aw(rng, callees);
    FunctionRecord a = base;
    a.arch = Arch::ARM;
    a.instructions = aw.render(arm_ops, ret_reg);
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace interbin::data
