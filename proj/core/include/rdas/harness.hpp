#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdas/checkpoint.hpp"
#include "rdas/graphbuild.hpp"
#include "rdas/kbstore.hpp"
#include "rdas/model.hpp"
#include "rdas/params.hpp"

namespace rdas::harness {

// ---------------------------------------------------------------------------
// Metrics

/// 1 iff the predicted set equals the gold set exactly.
int full_metric(std::span<const EntityId> predicted, std::span<const EntityId> gold);

struct EntityScore {
  std::size_t node = 0;
  EntityId entity{};
  double answer_probability = 0.0;
};

/// Index into `scores` of the highest answer probability; ties go to the
/// lowest node index. `scores` must be nonempty.
std::size_t top_entity(std::span<const EntityScore> scores);

/// 1 iff the top-scored entity is in `gold`.
int hits_at_1(std::span<const EntityScore> scores, std::span<const EntityId> gold);

struct QuestionRecord {
  std::size_t line = 0;
  bool linked = true;
  std::vector<EntityId> predicted;
  std::vector<EntityId> gold;
  std::optional<EntityId> top;
  bool hit = false;
  bool full = false;
  /// A relation node outscored every entity node.
  bool relation_would_win = false;
};

struct MetricsReport {
  double hits_at_1 = 0.0;
  double full = 0.0;
  std::size_t n_questions = 0;
  std::size_t n_unlinkable = 0;
  std::size_t relation_top_count = 0;
  std::string variant = "rdas";
  std::string config_digest;
  std::vector<QuestionRecord> records;

  /// {hits_at_1, full, n_questions, n_unlinkable, variant, config_digest, ...}
  std::string to_json() const;
};

/// FNV-1a 64-bit hex digest.
std::string digest(std::string_view text);

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  kb::KnowledgeBase kb;
  kb::QASet train;
  kb::QASet dev;
};

/// Move a seeded `fraction` of train questions into dev when dev is empty.
void ensure_dev_split(Dataset& data, double fraction, std::uint64_t seed);

/// <unk>, the entity placeholder, training question tokens, then KB surfaces.
model::Vocabulary build_vocabulary(const kb::KnowledgeBase& kb, const kb::QASet& train);

/// Throws DataError if KB surfaces are missing from `vocab`.
void check_vocabulary(const model::Vocabulary& vocab, const kb::KnowledgeBase& kb);

/// A question made ready for the network.
struct PreparedQuestion {
  const kb::QAExample* example = nullptr;
  graph::BuiltGraph built;
  model::GraphInput input;
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> labels;
  std::vector<EntityScore> entity_nodes;  // answer_probability unset
};

PreparedQuestion prepare_question(const kb::KnowledgeBase& kb, const kb::QAExample& example,
                                  const model::Vocabulary& vocab, const GraphSettings& settings);

// ---------------------------------------------------------------------------
// Evaluation and training

/// Forward pass without dropout; fills answer probabilities of entity nodes.
/// Also returns the highest relation-node answer probability (or -1).
double score_question(const Checkpoint& checkpoint, PreparedQuestion& question);

/// Both metrics over every question in `set`; unlinkable questions score 0.
MetricsReport evaluate(const Checkpoint& checkpoint, const kb::KnowledgeBase& kb, const kb::QASet& set);

struct TrainConfig {
  std::size_t epochs = 30;
  AdamOptions adam;
  std::uint64_t seed = 1;
  std::size_t batch_size = 1;
  /// Stop after this many epochs without a better dev Hits@1 (0: never).
  std::size_t patience = 5;
  double dev_fraction = 0.1;
  /// Optional pretrained vectors ("word v1 v2 ..." lines) copied into the
  /// word table after initialization.
  std::filesystem::path word_vectors;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_hits_at_1 = 0.0;
  double dev_full = 0.0;

  std::string to_json() const;
};

struct TrainResult {
  Checkpoint best;
  MetricsReport best_dev;
  std::size_t best_epoch = 0;
  /// Mean training loss before the first update.
  double initial_loss = 0.0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded training with gradient accumulation over `batch_size` questions
/// and best-dev-Hits@1 checkpoint selection. `data.dev` must be nonempty.
/// Throws NumericError on a non-finite loss.
TrainResult train(const Dataset& data, const model::ModelConfig& model_config, const GraphSettings& settings,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Ablations

enum class Variant { Full, NoRelationNodes, NoDirection, NoDistanceEmbedding };

std::string_view variant_name(Variant v);

struct StructuralChecks {
  std::size_t graphs_checked = 0;
  std::size_t relation_nodes = 0;
  bool edges_symmetric = true;
  bool distance_vectors_zero = true;
};

struct AblationRow {
  Variant variant = Variant::Full;
  MetricsReport report;
  StructuralChecks checks;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::string to_text() const;
  std::string to_json() const;
};

/// Configuration for one variant: the full model with one component removed.
void apply_variant(Variant v, model::ModelConfig& model_config, GraphSettings& settings);

StructuralChecks structural_checks(const Dataset& data, const model::ModelConfig& model_config,
                                   const GraphSettings& settings, std::size_t sample = 20);

/// Train and evaluate the full model and each ablation with identical seeds
/// and budgets. Rows come out in Variant order.
AblationTable run_ablations(const Dataset& data, const model::ModelConfig& model_config,
                            const GraphSettings& settings, const TrainConfig& config);

}  // namespace rdas::harness
