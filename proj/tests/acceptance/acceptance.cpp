// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// any gating criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "graph_laws.hpp"
#include "op_cases.hpp"
#include "oracles.hpp"
#include "rdas/checkpoint.hpp"
#include "rdas/harness.hpp"

using namespace rdas;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

harness::Dataset synthetic(const kb::SyntheticSpec& spec, std::uint64_t seed) {
  auto task = kb::generate_synthetic(spec, seed);
  return {std::move(task.kb), std::move(task.train), std::move(task.dev)};
}

kb::SyntheticSpec one_hop_spec() {
  kb::SyntheticSpec s;
  s.entities = 100;
  s.relations = 8;
  s.triples = 400;
  s.hops = 1;
  s.questions = 400;
  s.dev_questions = 100;
  s.types = 2;
  return s;
}

// Same KB shape as the 1-hop task; 900 training questions.
kb::SyntheticSpec two_hop_spec() {
  kb::SyntheticSpec s = one_hop_spec();
  s.hops = 2;
  s.questions = 1000;
  s.max_answers = 4;
  return s;
}

model::ModelConfig two_hop_model() {
  model::ModelConfig m;
  m.word_dim = 32;
  m.question_hidden = 32;
  m.layers = 4;
  m.dropout = 0.0;
  return m;
}

harness::TrainConfig two_hop_training(std::size_t epochs) {
  harness::TrainConfig t;
  t.epochs = epochs;
  t.seed = 7;
  t.patience = 0;
  t.adam.learning_rate = 1e-3;
  return t;
}

// First epoch whose dev scores meet both targets (0 if none).
const harness::EpochRecord* first_reaching(const harness::TrainResult& r, double hits, double full) {
  for (const auto& e : r.history)
    if (e.dev_hits_at_1 >= hits && e.dev_full >= full) return &e;
  return nullptr;
}

void progress(const harness::EpochRecord& e) {
  std::fprintf(stderr, "    epoch %3zu  loss %.6f  dev hits@1 %.3f  full %.3f\n", e.epoch, e.train_loss,
               e.dev_hits_at_1, e.dev_full);
}

// ---------------------------------------------------------------------------

Outcome graph_laws() {
  const auto report = laws::run(1000, 2024);
  return verdict(report.failures == 0 && report.graphs == 1000,
                 std::to_string(report.graphs) + " random subgraphs, " + std::to_string(report.failures) +
                     " violations" + (report.failures ? " (first: " + report.first_failure + ")" : ""));
}

Outcome gradients() {
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases::op_cases()) {
    ParamStore store;
    Rng rng(11);
    c.setup(store, rng);
    const auto r = grad_check(c.forward, store, 1e-5, 100);
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = c.name;
    }
  }
  cases::TinyModel tiny;
  const auto model = grad_check([&](Tape& t) { return tiny.loss(t); }, tiny.store, 1e-5, 100);

  ParamStore store;
  Rng rng(13);
  store.add("a", oracle::random_tensor(3, 3, rng, 2.0));
  const auto fault = grad_check([](Tape& t) { return cases::weigh(t, cases::faulty_sigmoid(t.param("a"))); }, store,
                                1e-5, 100);

  const bool ok = worst < 1e-3 && model.max_relative_error < 1e-3 && fault.max_relative_error > 1e-2;
  return verdict(ok, fmt("ops max rel err %.2e (", worst) + worst_name +
                         fmt("), 5-node model %.2e, injected fault %.2e", model.max_relative_error,
                             fault.max_relative_error));
}

Outcome metric_oracles() {
  Rng rng(99);
  std::size_t mismatches = 0, ties = 0, empty = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(15);
    std::vector<harness::EntityScore> scores;
    std::vector<EntityId> predicted, gold;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = static_cast<double>(rng.below(6)) / 5.0;
      const auto e = make_id<EntityId>(static_cast<std::uint32_t>(rng.below(25)));
      scores.push_back({i, e, p});
      if (p > 0.5) predicted.push_back(e);
      if (rng.bernoulli(0.25)) gold.push_back(e);
    }
    if (rng.bernoulli(0.15)) predicted.clear();
    empty += predicted.empty();
    for (std::size_t i = 1; i < n; ++i) ties += scores[i].answer_probability == scores[0].answer_probability;
    mismatches += harness::full_metric(predicted, gold) != oracle::full(predicted, gold);
    mismatches += harness::hits_at_1(scores, gold) != oracle::hits(scores, gold);
  }
  return verdict(mismatches == 0 && ties > 0 && empty > 0,
                 "1000 fixtures (" + std::to_string(ties) + " ties, " + std::to_string(empty) +
                     " empty predictions), " + std::to_string(mismatches) + " mismatches");
}

Outcome one_hop() {
  const auto data = synthetic(one_hop_spec(), 7);
  harness::TrainConfig t;
  t.epochs = 30;
  t.seed = 7;
  const auto r = harness::train(data, model::ModelConfig{}, {}, t, progress);
  const auto* hit = first_reaching(r, 0.95, 0.0);
  if (!hit) return verdict(false, fmt("best dev Hits@1 %.3f after %.0f epochs (target 0.95)", r.best_dev.hits_at_1,
                                      static_cast<double>(r.history.size())));
  return verdict(true, fmt("dev Hits@1 %.3f at epoch %.0f (target 0.95 within 30)", hit->dev_hits_at_1,
                           static_cast<double>(hit->epoch)));
}

Outcome two_hop() {
  const auto data = synthetic(two_hop_spec(), 7);
  const auto r = harness::train(data, two_hop_model(), {}, two_hop_training(60), progress);
  const auto* hit = first_reaching(r, 0.90, 0.75);
  if (!hit) return verdict(false, fmt("best dev Hits@1 %.3f / Full %.3f after %.0f epochs (target 0.90 / 0.75)",
                                      r.best_dev.hits_at_1, r.best_dev.full, static_cast<double>(r.history.size())));
  return verdict(true, fmt("dev Hits@1 %.3f, Full %.3f at epoch %.0f (target 0.90 / 0.75 within 60); best "
                           "checkpoint %.3f / %.3f",
                           hit->dev_hits_at_1, hit->dev_full, static_cast<double>(hit->epoch), r.best_dev.hits_at_1,
                           r.best_dev.full));
}

Outcome ablation() {
  const auto data = synthetic(two_hop_spec(), 7);
  const auto table = harness::run_ablations(data, two_hop_model(), {}, two_hop_training(5));
  std::printf("%s", table.to_text().c_str());
  bool ok = table.rows.size() == 4;
  for (const auto& row : table.rows) {
    const auto& k = row.checks;
    ok = ok && k.graphs_checked > 0;
    switch (row.variant) {
      case harness::Variant::NoRelationNodes: ok = ok && k.relation_nodes == 0; break;
      case harness::Variant::NoDirection: ok = ok && k.edges_symmetric; break;
      case harness::Variant::NoDistanceEmbedding: ok = ok && k.distance_vectors_zero; break;
      case harness::Variant::Full: ok = ok && k.relation_nodes > 0 && !k.edges_symmetric; break;
    }
  }
  return verdict(ok, "4 rows; No RN has no relation nodes, No Direction is symmetric, No DE zeroes distances");
}

Outcome determinism() {
  kb::SyntheticSpec spec = one_hop_spec();
  spec.entities = 40;
  spec.triples = 120;
  spec.questions = 120;
  spec.dev_questions = 40;
  const auto data = synthetic(spec, 7);
  model::ModelConfig m;
  m.word_dim = 16;
  m.question_hidden = 16;
  harness::TrainConfig t;
  t.epochs = 4;
  t.seed = 7;
  t.patience = 0;
  t.adam.learning_rate = 5e-3;
  t.batch_size = 4;
  const auto a = harness::train(data, m, {}, t);
  const auto b = harness::train(data, m, {}, t);
  bool same = a.history.size() == b.history.size();
  for (std::size_t i = 0; same && i < a.history.size(); ++i) {
    same = std::memcmp(&a.history[i].train_loss, &b.history[i].train_loss, sizeof(double)) == 0;
  }

  const auto path = fs::temp_directory_path() / "rdas_acceptance_checkpoint.json";
  save_checkpoint(a.best, path);
  const auto back = load_checkpoint(path);
  fs::remove(path);
  const auto again = harness::evaluate(back, data.kb, data.dev);
  const bool reproduced = back.recorded_dev && again.hits_at_1 == back.recorded_dev->hits_at_1 &&
                          again.full == back.recorded_dev->full;
  return verdict(same && reproduced,
                 std::string(same ? "bit-identical" : "DIFFERENT") + " loss histories over 2 runs; reloaded checkpoint " +
                     (reproduced ? "reproduces" : "does NOT reproduce") +
                     fmt(" dev Hits@1 %.3f / Full %.3f", again.hits_at_1, again.full));
}

std::vector<std::string> read_lines(const fs::path& p, std::size_t limit) {
  std::vector<std::string> out;
  std::FILE* f = std::fopen(p.c_str(), "r");
  if (!f) return out;
  char buf[4096];
  while (out.size() < limit && std::fgets(buf, sizeof buf, f)) out.emplace_back(buf);
  std::fclose(f);
  return out;
}

// Runs only when RDAS_METAQA_DIR points at kb.txt and 1-hop/vanilla/qa_{train,dev}.txt.
Outcome metaqa() {
  const char* dir = std::getenv("RDAS_METAQA_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "kb.txt")) return {Status::Skip, "MetaQA data not present (set RDAS_METAQA_DIR)"};
  const fs::path root(dir);
  harness::Dataset data;
  data.kb = kb::load_kb(root / "kb.txt");
  auto join = [](const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l;
    return s;
  };
  data.train = kb::parse_qa(join(read_lines(root / "1-hop/vanilla/qa_train.txt", 5000)), data.kb, 1);
  data.dev = kb::parse_qa(join(read_lines(root / "1-hop/vanilla/qa_dev.txt", 1000)), data.kb, 1);
  harness::TrainConfig t;
  t.epochs = 20;
  t.seed = 7;
  const auto r = harness::train(data, model::ModelConfig{}, {}, t, progress);
  return verdict(r.best_dev.hits_at_1 >= 0.90, fmt("dev Hits@1 %.3f (target >= 0.90, not gating)", r.best_dev.hits_at_1));
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    bool gating;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "graph laws", 30, true, graph_laws},
      {2, "gradient suite", 60, true, gradients},
      {3, "metric oracles", 5, true, metric_oracles},
      {4, "1-hop learnability", 300, true, one_hop},
      {5, "2-hop learnability", 900, true, two_hop},
      {6, "ablation harness", 0, true, ablation},
      {7, "determinism", 0, true, determinism},
      {8, "MetaQA 1-hop stretch", 0, false, metaqa},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    std::fprintf(stderr, "[%d] %s ...\n", c.id, c.name);
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status == Status::Pass && c.limit_seconds > 0 && secs > c.limit_seconds) {
      o.status = Status::Fail;
      o.detail += fmt("; over the %.0f s limit", c.limit_seconds);
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
    std::printf("%s %d %s: %s [%.1f s]\n", tag, c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (o.status == Status::Fail && c.gating) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
