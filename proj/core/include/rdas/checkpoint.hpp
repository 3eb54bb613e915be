#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "rdas/graphbuild.hpp"
#include "rdas/model.hpp"
#include "rdas/params.hpp"

namespace rdas {

/// How question graphs are built from the KB.
struct GraphSettings {
  graph::BuildOptions build;
  /// Extraction radius; 0 uses each question's declared hop count.
  int hops = 0;
  std::size_t node_budget = 500;
};

struct RecordedMetrics {
  double hits_at_1 = 0.0;
  double full = 0.0;
};

/// Everything needed to rebuild and evaluate a trained model.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::uint64_t rng_seed = 0;
  model::ModelConfig model;
  GraphSettings graph;
  model::Vocabulary vocabulary;
  ParamStore params;
  std::optional<RecordedMetrics> recorded_dev;
};

/// Values are written as hex-float strings so a save/load round trip is
/// bit-exact.
std::string to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_hexfloat(double v);
double parse_hexfloat(std::string_view s);

}  // namespace rdas
