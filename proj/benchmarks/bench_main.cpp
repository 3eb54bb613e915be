#include <benchmark/benchmark.h>

#include "rdas/harness.hpp"

using namespace rdas;

namespace {

struct Task {
  harness::Dataset data;
  model::Vocabulary vocab;

  explicit Task(int hops) {
    kb::SyntheticSpec spec;
    spec.hops = hops;
    spec.questions = 50;
    spec.dev_questions = 10;
    spec.types = 2;
    auto t = kb::generate_synthetic(spec, 7);
    data = {std::move(t.kb), std::move(t.train), std::move(t.dev)};
    vocab = harness::build_vocabulary(data.kb, data.train);
  }
};

const Task& task(int hops) {
  static const Task one(1), two(2);
  return hops == 1 ? one : two;
}

void BM_BuildGraph(benchmark::State& state) {
  const auto& t = task(static_cast<int>(state.range(0)));
  std::size_t i = 0, nodes = 0;
  for (auto _ : state) {
    const auto& ex = t.data.train.examples[i++ % t.data.train.examples.size()];
    const auto q = harness::prepare_question(t.data.kb, ex, t.vocab, {});
    nodes += q.built.graph.size();
    benchmark::DoNotOptimize(q.labels.data());
  }
  state.counters["nodes/graph"] = static_cast<double>(nodes) / static_cast<double>(state.iterations());
}
BENCHMARK(BM_BuildGraph)->Arg(1)->Arg(2);

void BM_ForwardBackward(benchmark::State& state) {
  const auto& t = task(static_cast<int>(state.range(0)));
  model::ModelConfig config;
  config.word_dim = static_cast<std::size_t>(state.range(1));
  config.question_hidden = config.word_dim;
  config.layers = t.data.train.examples[0].hops == 1 ? 2 : 4;
  ParamStore store;
  Rng rng(1);
  model::init_params(store, config, t.vocab.size(), rng);
  auto q = harness::prepare_question(t.data.kb, t.data.train.examples[0], t.vocab, {});
  Rng drop(2);
  for (auto _ : state) {
    Tape tape(store);
    auto trace = model::forward(tape, config, q.input, q.tokens, true, &drop);
    tape.backward(model::node_loss(trace.probs, q.labels));
  }
  state.counters["nodes"] = static_cast<double>(q.built.graph.size());
}
BENCHMARK(BM_ForwardBackward)->Args({1, 32})->Args({1, 100})->Args({2, 32})->Args({2, 100})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
