#include "rdas/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rdas/error.hpp"

namespace rdas {

using nlohmann::json;

std::string format_hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hexfloat(std::string_view s) {
  const std::string text(s);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) throw DataError("checkpoint: bad number '" + text + "'");
  return v;
}

namespace {

json tensor_values(const Tensor& t) {
  json values = json::array();
  for (double v : t.values()) values.push_back(format_hexfloat(v));
  return values;
}

Tensor read_tensor(const json& shape, const json& values, const std::string& what) {
  if (!shape.is_array() || shape.size() != 2) throw DataError("checkpoint: " + what + " needs a 2-d shape");
  const auto rows = shape[0].get<std::size_t>();
  const auto cols = shape[1].get<std::size_t>();
  if (!values.is_array() || values.size() != rows * cols) {
    throw DataError("checkpoint: " + what + " has " + std::to_string(values.size()) + " values for shape [" +
                    std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
  std::vector<double> data;
  data.reserve(values.size());
  for (const auto& v : values) data.push_back(parse_hexfloat(v.get<std::string>()));
  return Tensor(rows, cols, std::move(data));
}

}  // namespace

std::string to_json(const Checkpoint& ck) {
  const auto& m = ck.model;
  json model{{"word_dim", m.word_dim},
             {"question_hidden", m.question_hidden},
             {"layers", m.layers},
             {"dropout", format_hexfloat(m.dropout)},
             {"max_distance_token", m.max_distance_token},
             {"phi", std::string(model::phi_name(m.phi))},
             {"distance_embedding", m.distance_embedding}};
  const auto& b = ck.graph.build;
  json graph{{"relation_nodes", b.relation_nodes},
             {"direction", b.direction},
             {"relation_node_mode", b.mode == graph::RelationNodeMode::PerInstance ? "instance" : "type"},
             {"norm", b.norm.kind == graph::NormPolicy::Kind::InDegree ? "in_degree" : "constant"},
             {"norm_constant", format_hexfloat(b.norm.constant)},
             {"hops", ck.graph.hops},
             {"node_budget", ck.graph.node_budget}};

  json params = json::array();
  json optimizer = json::array();
  for (const auto& p : ck.params.parameters()) {
    params.push_back({{"name", p.name},
                      {"shape", p.value.shape()},
                      {"trainable", p.trainable},
                      {"values", tensor_values(p.value)}});
    optimizer.push_back({{"name", p.name},
                         {"step", p.step},
                         {"first_moment", tensor_values(p.first_moment)},
                         {"second_moment", tensor_values(p.second_moment)}});
  }

  json out{{"format_version", ck.format_version},
           {"rng_seed", ck.rng_seed},
           {"model_config", model},
           {"graph", graph},
           {"vocabulary", std::vector<std::string>(ck.vocabulary.words().begin(), ck.vocabulary.words().end())},
           {"params", params},
           {"optimizer_state", optimizer}};
  if (ck.recorded_dev) {
    out["recorded_dev"] = {{"hits_at_1", format_hexfloat(ck.recorded_dev->hits_at_1)},
                           {"full", format_hexfloat(ck.recorded_dev->full)}};
  }
  return out.dump();
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json in;
  try {
    in = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    Checkpoint ck;
    ck.format_version = in.at("format_version").get<int>();
    if (ck.format_version != Checkpoint::kFormatVersion) {
      throw DataError("checkpoint: unsupported format_version " + std::to_string(ck.format_version));
    }
    ck.rng_seed = in.at("rng_seed").get<std::uint64_t>();

    const auto& m = in.at("model_config");
    ck.model.word_dim = m.at("word_dim").get<std::size_t>();
    ck.model.question_hidden = m.at("question_hidden").get<std::size_t>();
    ck.model.layers = m.at("layers").get<std::size_t>();
    ck.model.dropout = parse_hexfloat(m.at("dropout").get<std::string>());
    ck.model.max_distance_token = m.at("max_distance_token").get<std::size_t>();
    ck.model.phi = model::parse_phi(m.at("phi").get<std::string>());
    ck.model.distance_embedding = m.at("distance_embedding").get<bool>();

    const auto& g = in.at("graph");
    ck.graph.build.relation_nodes = g.at("relation_nodes").get<bool>();
    ck.graph.build.direction = g.at("direction").get<bool>();
    ck.graph.build.mode = g.at("relation_node_mode").get<std::string>() == "type" ? graph::RelationNodeMode::PerType
                                                                                 : graph::RelationNodeMode::PerInstance;
    ck.graph.build.norm.kind = g.at("norm").get<std::string>() == "constant" ? graph::NormPolicy::Kind::Constant
                                                                            : graph::NormPolicy::Kind::InDegree;
    ck.graph.build.norm.constant = parse_hexfloat(g.at("norm_constant").get<std::string>());
    ck.graph.hops = g.at("hops").get<int>();
    ck.graph.node_budget = g.at("node_budget").get<std::size_t>();

    ck.vocabulary = model::Vocabulary(in.at("vocabulary").get<std::vector<std::string>>());

    for (const auto& p : in.at("params")) {
      const auto name = p.at("name").get<std::string>();
      ck.params.add(name, read_tensor(p.at("shape"), p.at("values"), name), p.at("trainable").get<bool>());
    }
    for (const auto& s : in.at("optimizer_state")) {
      auto& p = ck.params.get(s.at("name").get<std::string>());
      p.step = s.at("step").get<std::uint64_t>();
      p.first_moment = read_tensor(json(p.value.shape()), s.at("first_moment"), p.name + " first moment");
      p.second_moment = read_tensor(json(p.value.shape()), s.at("second_moment"), p.name + " second moment");
    }
    if (in.contains("recorded_dev")) {
      const auto& r = in.at("recorded_dev");
      ck.recorded_dev = RecordedMetrics{parse_hexfloat(r.at("hits_at_1").get<std::string>()),
                                        parse_hexfloat(r.at("full").get<std::string>())};
    }
    model::check_params(ck.params, ck.model, ck.vocabulary.size());
    return ck;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << to_json(checkpoint);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return checkpoint_from_json(os.str());
}

}  // namespace rdas
