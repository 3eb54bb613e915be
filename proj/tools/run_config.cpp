#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include "rdas/error.hpp"

namespace rdas::cli {

namespace {

const std::vector<std::pair<std::string_view, std::string_view>>& defaults() {
  static const std::vector<std::pair<std::string_view, std::string_view>> table = {
      // data and outputs
      {"seed", "1"},
      {"kb", ""},
      {"qa", ""},
      {"dev_qa", ""},
      {"eval_qa", ""},
      {"synthetic", ""},
      {"out", ""},
      {"checkpoint", ""},
      {"word_vectors", ""},
      {"question", "0"},
      // model
      {"word_dim", "100"},
      {"question_hidden", "100"},
      {"layers", "2"},
      {"dropout", "0.1"},
      {"max_distance_token", "8"},
      {"phi", "tanh"},
      {"distance_embedding", "true"},
      // graph
      {"relation_nodes", "true"},
      {"direction", "true"},
      {"relation_node_mode", "instance"},
      {"norm", "in_degree"},
      {"norm_constant", "1"},
      {"hops", "0"},
      {"node_budget", "500"},
      // training
      {"epochs", "30"},
      {"learning_rate", "0.001"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"epsilon", "1e-8"},
      {"batch_size", "1"},
      {"patience", "5"},
      {"dev_fraction", "0.1"},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw UsageError("config: " + std::string(key) + "=" + text + " is not a valid number");
  }
  return value;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_.emplace(k, v);
}

bool RunConfig::known(std::string_view key) {
  for (const auto& [k, v] : defaults()) {
    if (k == key) return true;
  }
  return false;
}

void RunConfig::set(std::string_view key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("config: unknown key '" + std::string(key) + "'");
  it->second = std::move(value);
}

void RunConfig::merge_text(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw UsageError(where + ": expected key=value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (!known(key)) throw UsageError(where + ": unknown key '" + key + "'");
    set(key, trim(std::string_view(body).substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  merge_text(os.str(), path.string());
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("config: unknown key '" + std::string(key) + "'");
  return it->second;
}

std::size_t RunConfig::get_size(std::string_view key) const { return parse_number<std::size_t>(key, get(key)); }
int RunConfig::get_int(std::string_view key) const { return parse_number<int>(key, get(key)); }
std::uint64_t RunConfig::get_u64(std::string_view key) const { return parse_number<std::uint64_t>(key, get(key)); }
double RunConfig::get_double(std::string_view key) const { return parse_number<double>(key, get(key)); }

bool RunConfig::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config: " + std::string(key) + "=" + v + " is not a boolean");
}

std::string RunConfig::format() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig mc;
  mc.word_dim = get_size("word_dim");
  mc.question_hidden = get_size("question_hidden");
  mc.layers = get_size("layers");
  mc.dropout = get_double("dropout");
  mc.max_distance_token = get_size("max_distance_token");
  mc.phi = model::parse_phi(get("phi"));
  mc.distance_embedding = get_bool("distance_embedding");
  mc.validate();
  return mc;
}

GraphSettings RunConfig::graph_settings() const {
  GraphSettings gs;
  gs.build.relation_nodes = get_bool("relation_nodes");
  gs.build.direction = get_bool("direction");
  const auto& mode = get("relation_node_mode");
  if (mode == "instance") {
    gs.build.mode = graph::RelationNodeMode::PerInstance;
  } else if (mode == "type") {
    gs.build.mode = graph::RelationNodeMode::PerType;
  } else {
    throw UsageError("config: relation_node_mode must be instance or type, got '" + mode + "'");
  }
  const auto& norm = get("norm");
  if (norm == "in_degree") {
    gs.build.norm.kind = graph::NormPolicy::Kind::InDegree;
  } else if (norm == "constant") {
    gs.build.norm.kind = graph::NormPolicy::Kind::Constant;
  } else {
    throw UsageError("config: norm must be in_degree or constant, got '" + norm + "'");
  }
  gs.build.norm.constant = get_double("norm_constant");
  gs.hops = get_int("hops");
  if (gs.hops < 0) throw UsageError("config: hops must be >= 0");
  gs.node_budget = get_size("node_budget");
  return gs;
}

harness::TrainConfig RunConfig::train_config() const {
  harness::TrainConfig tc;
  tc.epochs = get_size("epochs");
  tc.adam.learning_rate = get_double("learning_rate");
  tc.adam.beta1 = get_double("beta1");
  tc.adam.beta2 = get_double("beta2");
  tc.adam.epsilon = get_double("epsilon");
  tc.seed = get_u64("seed");
  tc.batch_size = get_size("batch_size");
  tc.patience = get_size("patience");
  tc.dev_fraction = get_double("dev_fraction");
  if (!(tc.dev_fraction > 0.0 && tc.dev_fraction < 1.0)) throw UsageError("config: dev_fraction must be in (0, 1)");
  tc.word_vectors = get_path("word_vectors");
  return tc;
}

}  // namespace rdas::cli
