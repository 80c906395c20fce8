#include "interbin/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "interbin/error.hpp"

namespace interbin::cli {

namespace {

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) out += (i ? "," : "") + std::to_string(dims[i]);
  return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string number_text(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

std::vector<KeySpec> build_keys() {
  const model::ModelConfig m;
  const train::TrainConfig t;
  const data::SplitRatios r;
  const data::SynthOptions s;
  return {
      {"data", "records", "", "function records (JSONL)"},
      {"data", "pairs", "", "pairs / ranking groups file (JSONL)"},
      {"data", "dicts", "", "dictionaries JSON"},
      {"data", "task", "classification", "classification or ranking"},
      {"data", "arch_pair", "mixed", "query>target architectures, e.g. x86>arm, or mixed"},
      {"data", "both_directions", "false", "also emit target>query groups"},
      {"data", "num_neg", std::to_string(t.num_neg), "negatives per ranking group"},
      {"data", "seed", "1", "pair sampling and split seed"},
      {"data", "train_ratio", number_text(r.train), "fraction of identities in train"},
      {"data", "val_ratio", number_text(r.val), "fraction of identities in val"},
      {"data", "test_ratio", number_text(r.test), "fraction of identities in test"},

      {"model", "hidden", std::to_string(m.hidden), "LSTM hidden size per direction"},
      {"model", "kernel_size", std::to_string(m.kernel_size), "char conv kernel width"},
      {"model", "n_filters", std::to_string(m.n_filters), "char conv filters"},
      {"model", "char_dim", std::to_string(m.char_dim), "char embedding width"},
      {"model", "opcode_dim", std::to_string(m.opcode_dim), "opcode embedding width"},
      {"model", "operand_dim", std::to_string(m.operand_dim), "operand feature width"},
      {"model", "max_chars", std::to_string(m.max_chars), "characters per instruction"},
      {"model", "max_seq_len", std::to_string(m.max_seq_len), "instructions per sequence"},
      {"model", "mlp_dims", join_dims(m.mlp_dims), "hidden widths of the output MLP"},
      {"model", "attention", std::string(nn::attention_name(m.attention)), "bilinear, dot, scaled-dot, cosine"},
      {"model", "enhancement", model::enhancement_name(m.enhancement), "full, none, or concat+diff+product subset"},
      {"model", "rnn", std::string(nn::rnn_name(m.rnn)), "bilstm, lstm, bigru, bilstm2"},
      {"model", "activation", std::string(nn::activation_name(m.activation)), "relu, tanh, sigmoid, identity"},
      {"model", "drop_char", "false", "remove the char conv features"},
      {"model", "drop_opcode", "false", "remove the opcode embedding"},
      {"model", "drop_operand", "false", "remove the operand features"},
      {"model", "drop_backward", "false", "remove the backward LSTM"},
      {"model", "drop_coattention", "false", "remove co-attention"},

      {"train", "lr", number_text(t.lr), "Adam learning rate"},
      {"train", "batch_size", std::to_string(t.batch_size), "pairs (or groups) per step"},
      {"train", "epochs", std::to_string(t.epochs), "training epochs"},
      {"train", "seed", std::to_string(t.seed), "initialization and shuffling seed"},
      {"train", "precision", t.precision, "float64"},
      {"train", "resample_negatives", bool_text(t.resample_negatives), "fresh ranking negatives every epoch"},
      {"train", "record_wall_time", bool_text(t.record_wall_time), "log epoch wall time"},

      {"run", "out_dir", "run", "output directory for training and sweeps"},
      {"run", "checkpoint", "", "checkpoint file to load"},
      {"run", "split", "test", "split to evaluate"},

      {"synth", "n_functions", std::to_string(s.n_functions), "identities to generate"},
      {"synth", "min_ops", std::to_string(s.min_ops), "minimum template operations"},
      {"synth", "max_ops", std::to_string(s.max_ops), "maximum template operations"},
      {"synth", "swap_prob", number_text(s.swap_prob), "probability of swapping independent operations"},
      {"synth", "seed", std::to_string(s.seed), "generator seed"},
  };
}

std::size_t as_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    config_error(key + " must be a non-negative integer, got '" + v + "'");
  }
  return out;
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    config_error(key + " must be a number, got '" + v + "'");
  }
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  config_error(key + " must be true or false, got '" + v + "'");
}

std::vector<std::size_t> as_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start < v.size()) {
    const std::size_t end = std::min(v.find(',', start), v.size());
    std::string part = v.substr(start, end - start);
    part.erase(0, part.find_first_not_of(' '));
    part.erase(part.find_last_not_of(' ') + 1);
    out.push_back(as_size(key, part));
    start = end + 1;
  }
  return out;
}

template <typename F>
auto converting(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(e.what());
  }
}

}  // namespace

const std::vector<KeySpec>& known_keys() {
  static const std::vector<KeySpec> keys = build_keys();
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : known_keys()) values_[k.dotted()] = k.default_value;
}

void RunConfig::set(std::string_view dotted, std::string value) {
  auto it = values_.find(dotted);
  if (it == values_.end()) config_error("unknown config key '" + std::string(dotted) + "'");
  it->second = std::move(value);
}

const std::string& RunConfig::get(std::string_view dotted) const {
  auto it = values_.find(dotted);
  if (it == values_.end()) config_error("unknown config key '" + std::string(dotted) + "'");
  return it->second;
}

void RunConfig::merge_text(std::string_view ini) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(ini)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    config_error(std::string("config syntax: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      config_error("key '" + section + "' must be inside a [section]");
    }
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str());
}

std::filesystem::path RunConfig::existing_path(std::string_view dotted) const {
  const std::string& v = get(dotted);
  if (v.empty()) config_error(std::string(dotted) + " is not set");
  if (!std::filesystem::exists(v)) {
    throw Error(ErrorCode::IoError, std::string(dotted) + " names a missing file: " + v);
  }
  return v;
}

model::ModelConfig RunConfig::model_config() const {
  return converting([&] {
    model::ModelConfig c;
    auto size = [&](const char* k) { return as_size(std::string("model.") + k, get(std::string("model.") + k)); };
    auto flag = [&](const char* k) { return as_bool(std::string("model.") + k, get(std::string("model.") + k)); };
    c.hidden = size("hidden");
    c.kernel_size = size("kernel_size");
    c.n_filters = size("n_filters");
    c.char_dim = size("char_dim");
    c.opcode_dim = size("opcode_dim");
    c.operand_dim = size("operand_dim");
    c.max_chars = size("max_chars");
    c.max_seq_len = size("max_seq_len");
    c.mlp_dims = as_dims("model.mlp_dims", get("model.mlp_dims"));
    c.attention = nn::parse_attention(get("model.attention"));
    c.enhancement = model::parse_enhancement(get("model.enhancement"));
    c.rnn = nn::parse_rnn(get("model.rnn"));
    c.activation = nn::parse_activation(get("model.activation"));
    c.drop_char = flag("drop_char");
    c.drop_opcode = flag("drop_opcode");
    c.drop_operand = flag("drop_operand");
    c.drop_backward = flag("drop_backward");
    c.drop_coattention = flag("drop_coattention");
    c.validate();
    return c;
  });
}

train::TrainConfig RunConfig::train_config() const {
  return converting([&] {
    train::TrainConfig c;
    c.lr = as_double("train.lr", get("train.lr"));
    c.batch_size = as_size("train.batch_size", get("train.batch_size"));
    c.epochs = as_size("train.epochs", get("train.epochs"));
    c.num_neg = as_size("data.num_neg", get("data.num_neg"));
    c.seed = as_size("train.seed", get("train.seed"));
    c.precision = get("train.precision");
    c.task = data::parse_task(get("data.task"));
    c.resample_negatives = as_bool("train.resample_negatives", get("train.resample_negatives"));
    c.record_wall_time = as_bool("train.record_wall_time", get("train.record_wall_time"));
    c.validate();
    return c;
  });
}

data::MakePairsOptions RunConfig::pairs_options() const {
  return converting([&] {
    data::MakePairsOptions o;
    o.task = data::parse_task(get("data.task"));
    o.arch_pair = parse_arch_pair(get("data.arch_pair"));
    o.both_directions = as_bool("data.both_directions", get("data.both_directions"));
    o.num_neg = as_size("data.num_neg", get("data.num_neg"));
    o.seed = as_size("data.seed", get("data.seed"));
    o.ratios.train = as_double("data.train_ratio", get("data.train_ratio"));
    o.ratios.val = as_double("data.val_ratio", get("data.val_ratio"));
    o.ratios.test = as_double("data.test_ratio", get("data.test_ratio"));
    o.ratios.validate();
    if (o.num_neg == 0) config_error("data.num_neg must be at least 1");
    return o;
  });
}

data::SynthOptions RunConfig::synth_options() const {
  return converting([&] {
    data::SynthOptions o;
    o.n_functions = as_size("synth.n_functions", get("synth.n_functions"));
    o.min_ops = as_size("synth.min_ops", get("synth.min_ops"));
    o.max_ops = as_size("synth.max_ops", get("synth.max_ops"));
    o.swap_prob = as_double("synth.swap_prob", get("synth.swap_prob"));
    o.seed = as_size("synth.seed", get("synth.seed"));
    if (o.n_functions == 0) config_error("synth.n_functions must be at least 1");
    if (o.min_ops == 0 || o.min_ops > o.max_ops) config_error("synth.min_ops must be in [1, synth.max_ops]");
    if (!(o.swap_prob >= 0.0 && o.swap_prob <= 1.0)) config_error("synth.swap_prob must lie in [0, 1]");
    return o;
  });
}

std::string RunConfig::dump() const {
  std::string out, section;
  for (const auto& k : known_keys()) {
    if (k.section != section) {
      out += (section.empty() ? "[" : "\n[") + k.section + "]\n";
      section = k.section;
    }
    out += k.key + " = " + get(k.dotted()) + "\n";
  }
  return out;
}

std::optional<std::pair<Arch, Arch>> parse_arch_pair(std::string_view text) {
  if (text.empty() || text == "mixed") return std::nullopt;
  const std::size_t sep = text.find('>');
  if (sep == std::string_view::npos) config_error("arch_pair must look like x86>arm, got '" + std::string(text) + "'");
  return converting([&] { return std::make_pair(parse_arch(text.substr(0, sep)), parse_arch(text.substr(sep + 1))); });
}

}  // namespace interbin::cli
