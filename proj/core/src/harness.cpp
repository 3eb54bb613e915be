#include "rdas/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rdas/error.hpp"

namespace rdas::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

int full_metric(std::span<const EntityId> predicted, std::span<const EntityId> gold) {
  std::vector<EntityId> a(predicted.begin(), predicted.end());
  std::vector<EntityId> b(gold.begin(), gold.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return a == b ? 1 : 0;
}

std::size_t top_entity(std::span<const EntityScore> scores) {
  if (scores.empty()) throw std::invalid_argument("top_entity: no entity nodes");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto& s = scores[i];
    const auto& b = scores[best];
    if (s.answer_probability > b.answer_probability ||
        (s.answer_probability == b.answer_probability && s.node < b.node)) {
      best = i;
    }
  }
  return best;
}

int hits_at_1(std::span<const EntityScore> scores, std::span<const EntityId> gold) {
  const EntityId top = scores[top_entity(scores)].entity;
  return std::find(gold.begin(), gold.end(), top) != gold.end() ? 1 : 0;
}

std::string MetricsReport::to_json() const {
  return json{{"hits_at_1", hits_at_1},
              {"full", full},
              {"n_questions", n_questions},
              {"n_unlinkable", n_unlinkable},
              {"relation_top_count", relation_top_count},
              {"variant", variant},
              {"config_digest", config_digest}}
      .dump();
}

std::string digest(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string describe(const Checkpoint& ck) {
  std::ostringstream os;
  const auto& m = ck.model;
  const auto& b = ck.graph.build;
  os << "n=" << m.word_dim << " m=" << m.question_hidden << " L=" << m.layers << " dropout=" << m.dropout
     << " max_distance=" << m.max_distance_token << " phi=" << model::phi_name(m.phi)
     << " de=" << m.distance_embedding << " rn=" << b.relation_nodes << " direction=" << b.direction
     << " mode=" << (b.mode == graph::RelationNodeMode::PerInstance ? "instance" : "type")
     << " hops=" << ck.graph.hops << " budget=" << ck.graph.node_budget << " seed=" << ck.rng_seed;
  return os.str();
}

std::vector<EntityId> predicted_answers(const PreparedQuestion& q, const Tensor& probs) {
  std::vector<EntityId> out;
  for (const auto& e : q.entity_nodes) {
    if (probs(e.node, 1) > probs(e.node, 0)) out.push_back(e.entity);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

void ensure_dev_split(Dataset& data, double fraction, std::uint64_t seed) {
  if (!data.dev.examples.empty() || data.train.examples.size() < 2) return;
  const std::size_t n = data.train.examples.size();
  const auto held = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(fraction * n)), 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<bool> to_dev(n, false);
  for (std::size_t i = 0; i < held; ++i) to_dev[order[i]] = true;
  std::vector<kb::QAExample> kept;
  for (std::size_t i = 0; i < n; ++i) {
    (to_dev[i] ? data.dev.examples : kept).push_back(std::move(data.train.examples[i]));
  }
  data.train.examples = std::move(kept);
}

model::Vocabulary build_vocabulary(const kb::KnowledgeBase& kb, const kb::QASet& train) {
  model::Vocabulary vocab;
  vocab.add(kb::kEntityPlaceholder);
  for (const auto& ex : train.examples) {
    for (const auto& t : ex.tokens) vocab.add(t);
  }
  for (const auto& r : kb.relations()) vocab.add(model::Vocabulary::node_key(r));
  for (const auto& e : kb.entities()) vocab.add(model::Vocabulary::node_key(e));
  return vocab;
}

void check_vocabulary(const model::Vocabulary& vocab, const kb::KnowledgeBase& kb) {
  std::size_t missing = 0;
  std::string example;
  auto check = [&](const std::string& surface) {
    const auto key = model::Vocabulary::node_key(surface);
    if (!key.empty() && !vocab.contains(key)) {
      if (missing++ == 0) example = surface;
    }
  };
  for (const auto& r : kb.relations()) check(r);
  for (const auto& e : kb.entities()) check(e);
  if (missing > 0) {
    throw DataError("vocabulary mismatch: " + std::to_string(missing) +
                    " KB surfaces are unknown to the checkpoint (e.g. \"" + example + "\")");
  }
}

PreparedQuestion prepare_question(const kb::KnowledgeBase& kb, const kb::QAExample& example,
                                  const model::Vocabulary& vocab, const GraphSettings& settings) {
  const int hops = settings.hops > 0 ? settings.hops : std::max(1, example.hops);
  const auto sub = kb::extract_subgraph(kb, example.seeds, hops, std::max(settings.node_budget, example.seeds.size()));

  PreparedQuestion q;
  q.example = &example;
  q.built = graph::build_reasoning_graph(kb, sub, settings.build);
  q.input = model::make_graph_input(q.built, vocab);
  for (const auto& t : example.tokens) q.tokens.push_back(vocab.lookup(t));

  const auto& g = q.built.graph;
  q.labels.assign(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.nodes[i].kind != graph::NodeKind::Entity) continue;
    const auto entity = make_id<EntityId>(g.nodes[i].source_id);
    q.entity_nodes.push_back({i, entity, 0.0});
    if (std::binary_search(example.answers.begin(), example.answers.end(), entity)) q.labels[i] = 1;
  }
  return q;
}

namespace {

Tensor answer_probabilities(const Checkpoint& checkpoint, const PreparedQuestion& question) {
  // Evaluation never writes to the parameters.
  Tape tape(const_cast<ParamStore&>(checkpoint.params));
  const auto trace = model::forward(tape, checkpoint.model, question.input, question.tokens, false, nullptr);
  return tape.value(trace.probs);
}

double fill_scores(const Tensor& probs, PreparedQuestion& question) {
  for (auto& e : question.entity_nodes) e.answer_probability = probs(e.node, 1);
  double best_relation = -1.0;
  const auto& g = question.built.graph;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.nodes[i].kind == graph::NodeKind::Relation) best_relation = std::max(best_relation, probs(i, 1));
  }
  return best_relation;
}

}  // namespace

double score_question(const Checkpoint& checkpoint, PreparedQuestion& question) {
  return fill_scores(answer_probabilities(checkpoint, question), question);
}

namespace {

QuestionRecord score_record(const Checkpoint& ck, PreparedQuestion& q) {
  const Tensor probs = answer_probabilities(ck, q);
  const double best_relation = fill_scores(probs, q);
  QuestionRecord rec;
  rec.line = q.example->line;
  rec.gold = q.example->answers;
  rec.predicted = predicted_answers(q, probs);
  rec.full = full_metric(rec.predicted, rec.gold) == 1;
  if (!q.entity_nodes.empty()) {
    const auto& top = q.entity_nodes[top_entity(q.entity_nodes)];
    rec.top = top.entity;
    rec.hit = hits_at_1(q.entity_nodes, rec.gold) == 1;
    rec.relation_would_win = best_relation > top.answer_probability;
  }
  return rec;
}

MetricsReport summarize(std::vector<QuestionRecord> records, std::size_t unlinkable, const Checkpoint& ck) {
  MetricsReport report;
  report.n_questions = records.size();
  report.n_unlinkable = unlinkable;
  report.config_digest = digest(describe(ck));
  double hits = 0, full = 0;
  for (const auto& r : records) {
    hits += r.hit;
    full += r.full;
    report.relation_top_count += r.relation_would_win;
  }
  if (!records.empty()) {
    report.hits_at_1 = hits / static_cast<double>(records.size());
    report.full = full / static_cast<double>(records.size());
  }
  report.records = std::move(records);
  return report;
}

}  // namespace

MetricsReport evaluate(const Checkpoint& checkpoint, const kb::KnowledgeBase& kb, const kb::QASet& set) {
  check_vocabulary(checkpoint.vocabulary, kb);
  std::vector<QuestionRecord> records;
  records.reserve(set.size());
  for (const auto& ex : set.examples) {
    auto q = prepare_question(kb, ex, checkpoint.vocabulary, checkpoint.graph);
    records.push_back(score_record(checkpoint, q));
  }
  for (const auto& un : set.unlinkable) {
    QuestionRecord rec;
    rec.line = un.line;
    rec.linked = false;
    rec.gold = un.answers;
    records.push_back(std::move(rec));
  }
  return summarize(std::move(records), set.unlinkable.size(), checkpoint);
}

// ---------------------------------------------------------------------------
// Training

std::string EpochRecord::to_json() const {
  return json{{"epoch", epoch}, {"train_loss", train_loss}, {"dev_hits_at_1", dev_hits_at_1}, {"dev_full", dev_full}}
      .dump();
}

TrainResult train(const Dataset& data, const model::ModelConfig& model_config, const GraphSettings& settings,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  model_config.validate();
  if (config.epochs < 1) throw UsageError("train: epochs must be >= 1");
  if (config.batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (data.train.examples.empty()) throw DataError("train: no linkable training questions");
  if (data.dev.size() == 0) throw DataError("train: empty dev set");

  Rng root(config.seed);
  Rng init_rng = root.fork(1);
  Rng order_rng = root.fork(2);
  Rng dropout_rng = root.fork(3);

  Checkpoint current;
  current.rng_seed = config.seed;
  current.model = model_config;
  current.graph = settings;
  current.vocabulary = build_vocabulary(data.kb, data.train);
  model::init_params(current.params, model_config, current.vocabulary.size(), init_rng);
  if (!config.word_vectors.empty()) model::load_word_vectors(config.word_vectors, current.vocabulary, current.params);

  std::vector<PreparedQuestion> prepared;
  prepared.reserve(data.train.examples.size());
  for (const auto& ex : data.train.examples) {
    prepared.push_back(prepare_question(data.kb, ex, current.vocabulary, settings));
  }

  auto question_loss = [&](Tape& tape, const PreparedQuestion& q, bool training) {
    const auto trace = model::forward(tape, current.model, q.input, q.tokens, training, &dropout_rng);
    return model::node_loss(trace.probs, q.labels);
  };

  TrainResult result;
  {
    double total = 0.0;
    for (const auto& q : prepared) {
      Tape tape(current.params);
      total += tape.value(question_loss(tape, q, false))[0];
    }
    result.initial_loss = total / static_cast<double>(prepared.size());
  }

  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  bool have_best = false;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    current.params.clear_grad();
    double epoch_loss = 0.0;
    std::size_t pending = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& q = prepared[order[k]];
      Tape tape(current.params);
      Var loss = question_loss(tape, q, true);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + " (question line " +
                           std::to_string(q.example->line) + "); try a smaller learning rate");
      }
      epoch_loss += value;
      tape.backward(ops::scale(loss, inv_batch));
      if (++pending == config.batch_size || k + 1 == order.size()) {
        adam_step(current.params, config.adam);
        pending = 0;
      }
    }

    const MetricsReport dev = evaluate(current, data.kb, data.dev);
    EpochRecord record{epoch, epoch_loss / static_cast<double>(order.size()), dev.hits_at_1, dev.full};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    const bool better = !have_best || dev.hits_at_1 > result.best_dev.hits_at_1 ||
                        (dev.hits_at_1 == result.best_dev.hits_at_1 && dev.full > result.best_dev.full);
    if (better) {
      have_best = true;
      since_best = 0;
      result.best = current;
      result.best.params.clear_grad();
      result.best_dev = dev;
      result.best_epoch = epoch;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  result.best.recorded_dev = RecordedMetrics{result.best_dev.hits_at_1, result.best_dev.full};
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "RDAS";
    case Variant::NoRelationNodes: return "No RN";
    case Variant::NoDirection: return "No Direction";
    case Variant::NoDistanceEmbedding: return "No DE";
  }
  return "?";
}

void apply_variant(Variant v, model::ModelConfig& model_config, GraphSettings& settings) {
  model_config.distance_embedding = true;
  settings.build.relation_nodes = true;
  settings.build.direction = true;
  switch (v) {
    case Variant::Full: break;
    case Variant::NoRelationNodes: settings.build.relation_nodes = false; break;
    case Variant::NoDirection: settings.build.direction = false; break;
    case Variant::NoDistanceEmbedding: model_config.distance_embedding = false; break;
  }
}

StructuralChecks structural_checks(const Dataset& data, const model::ModelConfig& model_config,
                                   const GraphSettings& settings, std::size_t sample) {
  StructuralChecks checks;
  const auto vocab = build_vocabulary(data.kb, data.train);
  ParamStore store;
  Rng rng(0);
  model::init_params(store, model_config, vocab.size(), rng);
  const std::size_t n = model_config.word_dim;

  for (const auto& ex : data.dev.examples) {
    if (checks.graphs_checked == sample) break;
    const auto q = prepare_question(data.kb, ex, vocab, settings);
    const auto& g = q.built.graph;
    ++checks.graphs_checked;
    checks.relation_nodes += g.relation_node_count();
    for (const auto& e : g.edges) {
      if (!std::binary_search(g.edges.begin(), g.edges.end(), graph::Edge{e.dst, e.src})) {
        checks.edges_symmetric = false;
      }
    }
    Tape tape(store);
    const Var features = model::node_features(tape, tape.param(model::names::kWordEmbedding),
                                              tape.param(model::names::kDistanceEmbedding), q.input.node_words,
                                              q.input.node_hops, model_config);
    const Tensor& f = tape.value(features);
    for (std::size_t r = 0; r < f.rows(); ++r) {
      for (std::size_t c = n; c < 2 * n; ++c) {
        if (f(r, c) != 0.0) checks.distance_vectors_zero = false;
      }
    }
  }
  return checks;
}

AblationTable run_ablations(const Dataset& data, const model::ModelConfig& model_config,
                            const GraphSettings& settings, const TrainConfig& config) {
  AblationTable table;
  for (Variant v : {Variant::Full, Variant::NoRelationNodes, Variant::NoDirection, Variant::NoDistanceEmbedding}) {
    model::ModelConfig mc = model_config;
    GraphSettings gs = settings;
    apply_variant(v, mc, gs);
    AblationRow row;
    row.variant = v;
    row.checks = structural_checks(data, mc, gs);
    row.report = train(data, mc, gs, config).best_dev;
    row.report.variant = std::string(variant_name(v));
    row.report.records.clear();
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %8s %8s\n", "Model", "Hits@1", "Full");
  os << line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-14s %8.3f %8.3f\n", std::string(variant_name(row.variant)).c_str(),
                  row.report.hits_at_1, row.report.full);
    os << line;
  }
  return os.str();
}

std::string AblationTable::to_json() const {
  json out = json::array();
  for (const auto& row : rows) {
    out.push_back({{"variant", std::string(variant_name(row.variant))},
                   {"hits_at_1", row.report.hits_at_1},
                   {"full", row.report.full},
                   {"n_questions", row.report.n_questions},
                   {"graphs_checked", row.checks.graphs_checked},
                   {"relation_nodes", row.checks.relation_nodes},
                   {"edges_symmetric", row.checks.edges_symmetric},
                   {"distance_vectors_zero", row.checks.distance_vectors_zero}});
  }
  return out.dump();
}

}  // namespace rdas::harness
