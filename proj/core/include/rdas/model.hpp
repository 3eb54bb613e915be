#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rdas/graphbuild.hpp"
#include "rdas/params.hpp"
#include "rdas/rng.hpp"
#include "rdas/tensor.hpp"

namespace rdas::model {

/// Word list shared by question tokens and node surfaces. Id 0 is <unk>.
class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t add(std::string_view word);
  std::size_t lookup(std::string_view word) const;
  bool contains(std::string_view word) const { return index_.contains(std::string(word)); }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::span<const std::string> words() const noexcept { return words_; }
  std::size_t size() const noexcept { return words_.size(); }

  /// Key under which a node surface is looked up.
  static std::string node_key(std::string_view surface);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Phi { Tanh, Sigmoid, Relu };

Phi parse_phi(std::string_view name);
std::string_view phi_name(Phi phi);

struct ModelConfig {
  std::size_t word_dim = 100;         // n
  std::size_t question_hidden = 100;  // m
  std::size_t layers = 2;             // L
  double dropout = 0.1;
  std::size_t max_distance_token = 8;
  Phi phi = Phi::Tanh;
  bool distance_embedding = true;

  /// Width of every GCN layer: n + m.
  std::size_t width() const noexcept { return word_dim + question_hidden; }
  void validate() const;
};

/// Per-question model input derived from a built graph.
struct GraphInput {
  std::vector<std::size_t> node_words;
  std::vector<std::size_t> node_hops;  // raw hop distances
  SparseRows mixing;
};

GraphInput make_graph_input(const graph::BuiltGraph& built, const Vocabulary& vocab);

namespace names {
inline constexpr std::string_view kWordEmbedding = "word_embedding";
inline constexpr std::string_view kDistanceEmbedding = "distance_embedding";
inline constexpr std::string_view kInitProjection = "init_projection";
inline constexpr std::string_view kLstmInput = "lstm.input_weight";
inline constexpr std::string_view kLstmHidden = "lstm.hidden_weight";
inline constexpr std::string_view kLstmBias = "lstm.bias";
inline constexpr std::string_view kPrediction = "prediction";
std::string self_weight(std::size_t layer);
std::string neighbour_weight(std::size_t layer);
std::string gate_weight(std::size_t layer);
std::string gate_bias(std::size_t layer);
}  // namespace names

/// Create every parameter of the network in `store`.
void init_params(ParamStore& store, const ModelConfig& config, std::size_t vocab_size, Rng& rng);

/// Throws DataError if `store` lacks a parameter or has a wrong shape.
void check_params(const ParamStore& store, const ModelConfig& config, std::size_t vocab_size);

/// Load `word v1 ... vn` lines into the word-embedding rows of known words.
/// Returns the number of rows overwritten.
std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab, ParamStore& store);

// ---------------------------------------------------------------------------
// Network pieces, each usable on its own.

/// [w_v ; d_v] per node (N x 2n); d_v is zero when distances are disabled.
Var node_features(Tape& tape, Var word_table, Var distance_table, std::span<const std::size_t> words,
                  std::span<const std::size_t> hops, const ModelConfig& config);

/// n_v = [w_v ; d_v] W  (N x n).
Var init_nodes(Tape& tape, Var word_table, Var distance_table, Var projection,
               std::span<const std::size_t> words, std::span<const std::size_t> hops,
               const ModelConfig& config);

struct LstmWeights {
  Var input;   // n x 4m, gate blocks ordered input, forget, cell, output
  Var hidden;  // m x 4m
  Var bias;    // 1 x 4m
};

struct LstmState {
  Var hidden;
  Var cell;
};

LstmState lstm_step(Var x, const LstmState& prev, const LstmWeights& w);

/// Final hidden state of a single-layer LSTM over the token embeddings.
Var encode_question(Tape& tape, Var word_table, const LstmWeights& w, std::span<const std::size_t> tokens);

/// h^0 = [n_v ; q] for every node.
Var attach_question(Var nodes, Var question);

/// u = sigmoid(aggregate(h) W_1 + h W_0).
Var gcn_update(Var h, const SparseRows& mixing, Var self_weight, Var neighbour_weight);

struct GateResult {
  Var next;
  Var gate;
};

/// a = sigmoid([u ; h] W_a + b); h' = phi(u) * a + h * (1 - a).
GateResult gate_combine(Var update, Var h, Var gate_weight, Var gate_bias, Phi phi);

/// softmax([h^L ; q] W_p) per node.
Var predict(Var h, Var question, Var prediction_weight);

/// Mean over nodes of -log p(true class). labels[v] is 1 for answers.
Var node_loss(Var probs, std::span<const std::size_t> labels);

struct ForwardTrace {
  Var probs;
  Var question;
  std::vector<Var> gates;
};

/// Full forward pass. `dropout_rng` is required when training.
ForwardTrace forward(Tape& tape, const ModelConfig& config, const GraphInput& input,
                     std::span<const std::size_t> question_tokens, bool training, Rng* dropout_rng);

}  // namespace rdas::model
