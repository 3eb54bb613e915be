#include "rdas/model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rdas/error.hpp"
#include "rdas/kbstore.hpp"

namespace rdas::model {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() { add(kUnknownToken); }

Vocabulary::Vocabulary(std::vector<std::string> words) {
  if (words.empty() || words.front() != kUnknownToken) {
    throw DataError("vocabulary must start with " + std::string(kUnknownToken));
  }
  for (const auto& w : words) {
    if (!index_.emplace(w, words_.size()).second) throw DataError("vocabulary: duplicate word '" + w + "'");
    words_.push_back(w);
  }
}

std::size_t Vocabulary::add(std::string_view word) {
  auto [it, inserted] = index_.try_emplace(std::string(word), words_.size());
  if (inserted) words_.emplace_back(word);
  return it->second;
}

std::size_t Vocabulary::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

std::string Vocabulary::node_key(std::string_view surface) { return kb::normalize_surface(surface); }

// ---------------------------------------------------------------------------
// Config

Phi parse_phi(std::string_view name) {
  if (name == "tanh") return Phi::Tanh;
  if (name == "sigmoid") return Phi::Sigmoid;
  if (name == "relu") return Phi::Relu;
  throw UsageError("unknown nonlinearity '" + std::string(name) + "' (expected tanh, sigmoid or relu)");
}

std::string_view phi_name(Phi phi) {
  switch (phi) {
    case Phi::Tanh: return "tanh";
    case Phi::Sigmoid: return "sigmoid";
    case Phi::Relu: return "relu";
  }
  return "tanh";
}

void ModelConfig::validate() const {
  if (layers < 1) throw UsageError("model: layers must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("model: dropout must be in [0, 1)");
  if (word_dim == 0 || question_hidden == 0) throw UsageError("model: dimensions must be positive");
}

GraphInput make_graph_input(const graph::BuiltGraph& built, const Vocabulary& vocab) {
  const auto& g = built.graph;
  GraphInput input;
  input.node_words.reserve(g.size());
  input.node_hops.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    input.node_words.push_back(vocab.lookup(Vocabulary::node_key(g.nodes[i].surface)));
    input.node_hops.push_back(static_cast<std::size_t>(g.hops.at(i)));
  }
  input.mixing = built.adjacency.mixing();
  return input;
}

// ---------------------------------------------------------------------------
// Parameters

namespace names {
std::string self_weight(std::size_t layer) { return "gcn." + std::to_string(layer) + ".self_weight"; }
std::string neighbour_weight(std::size_t layer) { return "gcn." + std::to_string(layer) + ".neighbour_weight"; }
std::string gate_weight(std::size_t layer) { return "gcn." + std::to_string(layer) + ".gate_weight"; }
std::string gate_bias(std::size_t layer) { return "gcn." + std::to_string(layer) + ".gate_bias"; }
}  // namespace names

namespace {

struct ShapeSpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  enum class Init { Embedding, Xavier, Zero } init;
};

std::vector<ShapeSpec> parameter_layout(const ModelConfig& c, std::size_t vocab_size) {
  using I = ShapeSpec::Init;
  const std::size_t n = c.word_dim, m = c.question_hidden, d = c.width();
  std::vector<ShapeSpec> layout{
      {std::string(names::kWordEmbedding), vocab_size, n, I::Embedding},
      {std::string(names::kDistanceEmbedding), c.max_distance_token + 1, n, I::Embedding},
      {std::string(names::kInitProjection), 2 * n, n, I::Xavier},
      {std::string(names::kLstmInput), n, 4 * m, I::Xavier},
      {std::string(names::kLstmHidden), m, 4 * m, I::Xavier},
      {std::string(names::kLstmBias), 1, 4 * m, I::Zero},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    layout.push_back({names::self_weight(l), d, d, I::Xavier});
    layout.push_back({names::neighbour_weight(l), d, d, I::Xavier});
    layout.push_back({names::gate_weight(l), 2 * d, d, I::Xavier});
    layout.push_back({names::gate_bias(l), 1, d, I::Zero});
  }
  layout.push_back({std::string(names::kPrediction), d + m, 2, I::Xavier});
  return layout;
}

}  // namespace

void init_params(ParamStore& store, const ModelConfig& config, std::size_t vocab_size, Rng& rng) {
  config.validate();
  for (const auto& spec : parameter_layout(config, vocab_size)) {
    Tensor value;
    switch (spec.init) {
      case ShapeSpec::Init::Embedding: value = init::uniform(spec.rows, spec.cols, 0.1, rng); break;
      case ShapeSpec::Init::Xavier: value = init::xavier(spec.rows, spec.cols, rng); break;
      case ShapeSpec::Init::Zero: value = Tensor(spec.rows, spec.cols); break;
    }
    store.add(spec.name, std::move(value));
  }
}

void check_params(const ParamStore& store, const ModelConfig& config, std::size_t vocab_size) {
  for (const auto& spec : parameter_layout(config, vocab_size)) {
    if (!store.contains(spec.name)) throw DataError("checkpoint lacks parameter '" + spec.name + "'");
    const Tensor& t = store.get(spec.name).value;
    if (t.rows() != spec.rows || t.cols() != spec.cols) {
      throw DataError("parameter '" + spec.name + "' has shape " + t.shape_string() + ", expected [" +
                      std::to_string(spec.rows) + "," + std::to_string(spec.cols) + "]");
    }
  }
}

std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab, ParamStore& store) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vectors " + path.string());
  Tensor& table = store.get(names::kWordEmbedding).value;
  std::size_t loaded = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    std::string number;
    while (fields >> number) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
      if (ec != std::errc{}) throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      values.push_back(v);
    }
    if (values.size() != table.cols()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.cols()) + " values, found " + std::to_string(values.size()));
    }
    if (!vocab.contains(word)) continue;
    std::copy(values.begin(), values.end(), table.row(vocab.lookup(word)).begin());
    ++loaded;
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Network

Var node_features(Tape& tape, Var word_table, Var distance_table, std::span<const std::size_t> words,
                  std::span<const std::size_t> hops, const ModelConfig& config) {
  if (words.size() != hops.size()) throw ShapeError("node_features: word and hop counts differ");
  Var w = ops::embedding_lookup(word_table, words);
  Var d;
  if (config.distance_embedding) {
    std::vector<std::size_t> tokens(hops.size());
    std::transform(hops.begin(), hops.end(), tokens.begin(),
                   [&](std::size_t h) { return std::min(h, config.max_distance_token); });
    d = ops::embedding_lookup(distance_table, tokens);
  } else {
    d = tape.constant(Tensor(words.size(), tape.value(word_table).cols()));
  }
  return ops::concat(w, d, 1);
}

Var init_nodes(Tape& tape, Var word_table, Var distance_table, Var projection,
               std::span<const std::size_t> words, std::span<const std::size_t> hops,
               const ModelConfig& config) {
  return ops::matmul(node_features(tape, word_table, distance_table, words, hops, config), projection);
}

LstmState lstm_step(Var x, const LstmState& prev, const LstmWeights& w) {
  const std::size_t m = prev.hidden.value().cols();
  Var gates = ops::add(ops::add(ops::matmul(x, w.input), ops::matmul(prev.hidden, w.hidden)), w.bias);
  Var input_gate = ops::sigmoid(ops::slice_cols(gates, 0, m));
  Var forget_gate = ops::sigmoid(ops::slice_cols(gates, m, m));
  Var candidate = ops::tanh(ops::slice_cols(gates, 2 * m, m));
  Var output_gate = ops::sigmoid(ops::slice_cols(gates, 3 * m, m));
  Var cell = ops::add(ops::mul(forget_gate, prev.cell), ops::mul(input_gate, candidate));
  Var hidden = ops::mul(output_gate, ops::tanh(cell));
  return {hidden, cell};
}

Var encode_question(Tape& tape, Var word_table, const LstmWeights& w, std::span<const std::size_t> tokens) {
  if (tokens.empty()) throw DataError("encode_question: empty question");
  const std::size_t m = tape.value(w.hidden).rows();
  LstmState state{tape.constant(Tensor(1, m)), tape.constant(Tensor(1, m))};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    state = lstm_step(ops::embedding_lookup(word_table, tokens.subspan(t, 1)), state, w);
  }
  return state.hidden;
}

Var attach_question(Var nodes, Var question) {
  return ops::concat(nodes, ops::repeat_rows(question, nodes.value().rows()), 1);
}

Var gcn_update(Var h, const SparseRows& mixing, Var self_weight, Var neighbour_weight) {
  Var neighbours = ops::matmul(ops::aggregate(h, mixing), neighbour_weight);
  return ops::sigmoid(ops::add(neighbours, ops::matmul(h, self_weight)));
}

namespace {

Var apply_phi(Var x, Phi phi) {
  switch (phi) {
    case Phi::Tanh: return ops::tanh(x);
    case Phi::Sigmoid: return ops::sigmoid(x);
    case Phi::Relu: {
      Tensor out = x.value();
      for (auto& v : out.values()) v = std::max(0.0, v);
      return x.tape->record(std::move(out), {x}, [](const GradContext& g) {
        if (!g.in_grads[0]) return;
        for (std::size_t i = 0; i < g.out_grad.size(); ++i) {
          if ((*g.in_values[0])[i] > 0.0) (*g.in_grads[0])[i] += g.out_grad[i];
        }
      });
    }
  }
  return ops::tanh(x);
}

}  // namespace

GateResult gate_combine(Var update, Var h, Var gate_weight, Var gate_bias, Phi phi) {
  Var gate = ops::sigmoid(ops::add(ops::matmul(ops::concat(update, h, 1), gate_weight), gate_bias));
  Var next = ops::add(ops::mul(apply_phi(update, phi), gate), ops::mul(h, ops::one_minus(gate)));
  return {next, gate};
}

Var predict(Var h, Var question, Var prediction_weight) {
  return ops::softmax(ops::matmul(attach_question(h, question), prediction_weight), 1);
}

Var node_loss(Var probs, std::span<const std::size_t> labels) {
  if (labels.size() != probs.value().rows()) {
    throw DataError("node_loss: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(probs.value().rows()) + " nodes");
  }
  return ops::mean(ops::neg_log_pick(probs, labels));
}

ForwardTrace forward(Tape& tape, const ModelConfig& config, const GraphInput& input,
                     std::span<const std::size_t> question_tokens, bool training, Rng* dropout_rng) {
  if (input.node_words.empty()) throw DataError("forward: empty graph");
  if (training && config.dropout > 0.0 && dropout_rng == nullptr) {
    throw std::logic_error("forward: training with dropout needs an rng");
  }
  Var words = tape.param(names::kWordEmbedding);
  Var distances = tape.param(names::kDistanceEmbedding);
  Var nodes = init_nodes(tape, words, distances, tape.param(names::kInitProjection), input.node_words,
                         input.node_hops, config);
  const LstmWeights lstm{tape.param(names::kLstmInput), tape.param(names::kLstmHidden),
                         tape.param(names::kLstmBias)};
  ForwardTrace trace;
  trace.question = encode_question(tape, words, lstm, question_tokens);

  Var h = attach_question(nodes, trace.question);
  for (std::size_t l = 0; l < config.layers; ++l) {
    Var u = gcn_update(h, input.mixing, tape.param(names::self_weight(l)), tape.param(names::neighbour_weight(l)));
    GateResult step = gate_combine(u, h, tape.param(names::gate_weight(l)), tape.param(names::gate_bias(l)),
                                   config.phi);
    trace.gates.push_back(step.gate);
    h = training && config.dropout > 0.0 ? ops::dropout(step.next, config.dropout, true, *dropout_rng) : step.next;
  }
  trace.probs = predict(h, trace.question, tape.param(names::kPrediction));
  return trace;
}

}  // namespace rdas::model
