#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "rdas/checkpoint.hpp"
#include "rdas/harness.hpp"
#include "rdas/model.hpp"

namespace rdas::cli {

/// Flat key=value run configuration. Every key has a default; setting an
/// unknown key is a UsageError.
class RunConfig {
 public:
  RunConfig();

  /// Apply `key=value` lines. Blank lines and lines starting with '#' are
  /// skipped.
  void merge_text(std::string_view text, std::string_view source = "<config>");
  void merge_file(const std::filesystem::path& path);
  void set(std::string_view key, std::string value);

  const std::string& get(std::string_view key) const;
  bool has_value(std::string_view key) const { return !get(key).empty(); }
  std::size_t get_size(std::string_view key) const;
  int get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::filesystem::path get_path(std::string_view key) const { return get(key); }

  static bool known(std::string_view key);

  /// Sorted key=value lines, readable back with merge_text.
  std::string format() const;

  model::ModelConfig model_config() const;
  GraphSettings graph_settings() const;
  harness::TrainConfig train_config() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace rdas::cli
