#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "rdas/error.hpp"
#include "rdas/harness.hpp"

using namespace rdas;
using namespace rdas::harness;

namespace {

std::vector<EntityId> ids(std::initializer_list<std::uint32_t> xs) {
  std::vector<EntityId> out;
  for (auto x : xs) out.push_back(make_id<EntityId>(x));
  return out;
}

std::vector<EntityScore> scores(std::initializer_list<double> ps) {
  std::vector<EntityScore> out;
  std::size_t i = 0;
  for (double p : ps) {
    out.push_back({i, make_id<EntityId>(static_cast<std::uint32_t>(i)), p});
    ++i;
  }
  return out;
}

Dataset small_task(int hops = 1) {
  kb::SyntheticSpec spec;
  spec.entities = 24;
  spec.relations = 4;
  spec.triples = 48;
  spec.hops = hops;
  spec.questions = 50;
  spec.dev_questions = 12;
  spec.types = 2;
  auto task = kb::generate_synthetic(spec, 4);
  return {std::move(task.kb), std::move(task.train), std::move(task.dev)};
}

model::ModelConfig small_model() {
  model::ModelConfig c;
  c.word_dim = 8;
  c.question_hidden = 8;
  c.layers = 2;
  c.dropout = 0.1;
  return c;
}

TrainConfig short_run(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.seed = 3;
  t.patience = 0;
  t.adam.learning_rate = 0.01;
  return t;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("Full metric examples") {
  CHECK(full_metric(ids({1, 2}), ids({1, 2})) == 1);
  CHECK(full_metric(ids({1}), ids({1, 2})) == 0);
  CHECK(full_metric(ids({1, 2, 3}), ids({1, 2})) == 0);
  CHECK(full_metric(ids({2, 1}), ids({1, 2})) == 1);
  CHECK(full_metric(ids({}), ids({1})) == 0);
  CHECK(full_metric(ids({}), ids({})) == 1);
}

TEST_CASE("Hits@1 examples") {
  CHECK(hits_at_1(scores({0.2, 0.9, 0.4}), ids({1})) == 1);
  CHECK(hits_at_1(scores({0.2, 0.9, 0.4}), ids({2})) == 0);
  // Ties resolve to the lowest node index.
  CHECK(top_entity(scores({0.5, 0.7, 0.7})) == 1);
  CHECK(hits_at_1(scores({0.7, 0.7}), ids({1})) == 0);
  CHECK_THROWS_AS(top_entity(scores({})), std::invalid_argument);
}

TEST_CASE("metrics agree with set and sort oracles on random fixtures") {
  Rng rng(17);
  std::size_t ties = 0, empty_predictions = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<EntityScore> s;
    std::vector<EntityId> predicted, gold;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse probabilities so ties are common.
      const double p = static_cast<double>(rng.below(5)) / 4.0;
      const auto e = make_id<EntityId>(static_cast<std::uint32_t>(rng.below(20)));
      s.push_back({i, e, p});
      if (p > 0.5) predicted.push_back(e);
      if (rng.bernoulli(0.3)) gold.push_back(e);
    }
    if (rng.bernoulli(0.1)) predicted.clear();
    empty_predictions += predicted.empty();
    for (std::size_t i = 1; i < n; ++i) ties += s[i].answer_probability == s[0].answer_probability;
    CAPTURE(trial);
    CHECK(full_metric(predicted, gold) == oracle::full(predicted, gold));
    CHECK(hits_at_1(s, gold) == oracle::hits(s, gold));
  }
  CHECK(ties > 100);
  CHECK(empty_predictions > 50);
}

TEST_CASE("report json and digest") {
  MetricsReport r;
  r.hits_at_1 = 0.5;
  r.full = 0.25;
  r.n_questions = 4;
  r.config_digest = digest("abc");
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["hits_at_1"] == 0.5);
  CHECK(j["full"] == 0.25);
  CHECK(j["n_questions"] == 4);
  // FNV-1a reference value.
  CHECK(digest("") == "cbf29ce484222325");
  CHECK(digest("a") == "af63dc4c8601ec8c");
}

TEST_CASE("dev split is seeded and only fills an empty dev set") {
  auto data = small_task();
  data.train.examples.insert(data.train.examples.end(), data.dev.examples.begin(), data.dev.examples.end());
  data.dev.examples.clear();
  const auto total = data.train.examples.size();
  auto copy = data;
  ensure_dev_split(data, 0.1, 5);
  ensure_dev_split(copy, 0.1, 5);
  CHECK(data.dev.examples.size() == static_cast<std::size_t>(std::ceil(0.1 * total)));
  CHECK(data.train.examples.size() + data.dev.examples.size() == total);
  CHECK(data.dev.examples.front().text == copy.dev.examples.front().text);
  const auto before = data.dev.examples.size();
  ensure_dev_split(data, 0.5, 5);
  CHECK(data.dev.examples.size() == before);
}

TEST_CASE("vocabulary covers question tokens and KB surfaces") {
  const auto data = small_task();
  const auto vocab = build_vocabulary(data.kb, data.train);
  CHECK(vocab.word(0) == "<unk>");
  CHECK(vocab.contains(kb::kEntityPlaceholder));
  CHECK(vocab.contains("what"));
  CHECK_NOTHROW(check_vocabulary(vocab, data.kb));
  model::Vocabulary partial;
  partial.add("what");
  CHECK_THROWS_AS(check_vocabulary(partial, data.kb), DataError);
}

TEST_CASE("prepared questions label gold entity nodes") {
  const auto data = small_task(2);
  const auto vocab = build_vocabulary(data.kb, data.train);
  const auto& ex = data.train.examples.at(0);
  const auto q = prepare_question(data.kb, ex, vocab, {});
  CHECK(q.labels.size() == q.built.graph.size());
  std::size_t positives = 0;
  for (auto l : q.labels) positives += l;
  std::size_t gold_in_graph = 0;
  for (auto a : ex.answers) gold_in_graph += q.built.graph.entity_nodes.count(a);
  CHECK(positives == gold_in_graph);
  for (const auto& s : q.entity_nodes) CHECK(q.built.graph.nodes[s.node].kind == graph::NodeKind::Entity);
}

TEST_CASE("zero prediction weights predict nothing") {
  const auto data = small_task();
  Checkpoint ck;
  ck.model = small_model();
  ck.vocabulary = build_vocabulary(data.kb, data.train);
  Rng rng(1);
  model::init_params(ck.params, ck.model, ck.vocabulary.size(), rng);
  ck.params.get(model::names::kPrediction).value.fill(0.0);
  const auto report = evaluate(ck, data.kb, data.dev);
  // Every node sits at exactly 0.5, so the strict threshold selects nothing.
  CHECK(report.full == 0.0);
  CHECK(report.n_questions == data.dev.size());
  for (const auto& r : report.records) CHECK(r.predicted.empty());
}

TEST_CASE("unlinkable questions count as misses") {
  auto data = small_task();
  data.dev.unlinkable.push_back({"nothing to link", {make_id<EntityId>(0)}, 99});
  Checkpoint ck;
  ck.model = small_model();
  ck.vocabulary = build_vocabulary(data.kb, data.train);
  Rng rng(1);
  model::init_params(ck.params, ck.model, ck.vocabulary.size(), rng);
  const auto report = evaluate(ck, data.kb, data.dev);
  CHECK(report.n_unlinkable == 1);
  CHECK(report.n_questions == data.dev.examples.size() + 1);
  CHECK(report.records.size() == report.n_questions);
}

TEST_CASE("training") {
  const auto data = small_task();
  SUBCASE("zero learning rate keeps the loss flat") {
    auto cfg = short_run(3);
    cfg.adam.learning_rate = 0.0;
    auto m = small_model();
    m.dropout = 0.0;
    const auto r = train(data, m, {}, cfg);
    REQUIRE(r.history.size() == 3);
    for (const auto& e : r.history) CHECK(e.train_loss == doctest::Approx(r.initial_loss).epsilon(1e-12));
  }
  SUBCASE("loss decreases and history is reported") {
    std::vector<EpochRecord> seen;
    const auto r = train(data, small_model(), {}, short_run(6), [&](const EpochRecord& e) { seen.push_back(e); });
    CHECK(seen.size() == 6);
    CHECK(r.history.back().train_loss < r.initial_loss);
    CHECK(r.best.recorded_dev.has_value());
    CHECK(r.best_dev.hits_at_1 == r.history.at(r.best_epoch - 1).dev_hits_at_1);
  }
  SUBCASE("same seed, same history") {
    const auto a = train(data, small_model(), {}, short_run(3));
    const auto b = train(data, small_model(), {}, short_run(3));
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].train_loss == b.history[i].train_loss);
  }
  SUBCASE("patience stops early") {
    auto cfg = short_run(30);
    cfg.adam.learning_rate = 0.0;
    cfg.patience = 2;
    const auto r = train(data, small_model(), {}, cfg);
    CHECK(r.history.size() == 3);
  }
  SUBCASE("bad settings") {
    auto cfg = short_run(0);
    CHECK_THROWS_AS(train(data, small_model(), {}, cfg), UsageError);
    auto no_dev = data;
    no_dev.dev.examples.clear();
    CHECK_THROWS_AS(train(no_dev, small_model(), {}, short_run(1)), DataError);
  }
  SUBCASE("divergence raises NumericError") {
    auto cfg = short_run(2);
    cfg.adam.learning_rate = 1e300;
    CHECK_THROWS_AS(train(data, small_model(), {}, cfg), NumericError);
  }
}

TEST_CASE("ablation structure") {
  const auto data = small_task(2);
  const auto base = small_model();
  for (auto v : {Variant::Full, Variant::NoRelationNodes, Variant::NoDirection, Variant::NoDistanceEmbedding}) {
    auto m = base;
    GraphSettings g;
    apply_variant(v, m, g);
    const auto checks = structural_checks(data, m, g, 10);
    CAPTURE(variant_name(v));
    CHECK(checks.graphs_checked == 10);
    CHECK((checks.relation_nodes == 0) == (v == Variant::NoRelationNodes));
    CHECK(checks.edges_symmetric == (v == Variant::NoDirection));
    CHECK(checks.distance_vectors_zero == (v == Variant::NoDistanceEmbedding));
  }
  AblationTable table;
  for (auto v : {Variant::Full, Variant::NoRelationNodes, Variant::NoDirection, Variant::NoDistanceEmbedding})
    table.rows.push_back({v, {}, {}});
  const auto text = table.to_text();
  for (auto name : {"RDAS", "No RN", "No Direction", "No DE"}) CHECK(text.find(name) != std::string::npos);
  CHECK(nlohmann::json::parse(table.to_json()).size() == 4);
}

}  // TEST_SUITE
