#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "rdas/rng.hpp"
#include "rdas/tensor.hpp"

namespace rdas {

/// A named trainable tensor plus its Adam state.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;
  bool trainable = true;
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step = 0;
};

/// Named parameters in insertion order. References returned by add()/get()
/// stay valid for the lifetime of the store.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor init, bool trainable = true);
  bool contains(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;

  std::deque<Parameter>& parameters() noexcept { return params_; }
  const std::deque<Parameter>& parameters() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  /// Set every present gradient to zero.
  void zero_grad();
  /// Drop gradients entirely (state before any backward pass).
  void clear_grad();

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace init {
/// uniform(-bound, bound).
Tensor uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng);
/// Glorot/Xavier uniform: bound = sqrt(6 / (rows + cols)).
Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng);
}  // namespace init

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update on every trainable parameter, then zero grads.
/// Throws NumericError if a trainable parameter has no gradient.
void adam_step(ParamStore& store, const AdamOptions& options);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Compare analytic gradients with central finite differences.
///
/// `forward` must build a deterministic scalar loss on the given tape using
/// `store`'s parameters. Each trainable parameter contributes all of its
/// coordinates when it has at most `coords_per_param`, otherwise a random
/// subsample of that many. Relative error is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
GradCheckResult grad_check(const std::function<Var(Tape&)>& forward, ParamStore& store,
                           double eps = 1e-4, std::size_t coords_per_param = 50,
                           std::uint64_t seed = 0);

}  // namespace rdas
