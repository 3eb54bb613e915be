#include "rdas/params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rdas/error.hpp"

namespace rdas {

Parameter& ParamStore::add(std::string name, Tensor init, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  Parameter p;
  p.name = name;
  p.first_moment = Tensor(init.rows(), init.cols());
  p.second_moment = Tensor(init.rows(), init.cols());
  p.value = std::move(init);
  p.trainable = trainable;
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

Parameter& ParamStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + std::string(name) + "'");
  return params_[it->second];
}

const Parameter& ParamStore::get(std::string_view name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

std::size_t ParamStore::scalar_count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const Parameter& p) { return acc + p.value.size(); });
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    if (p.grad) p.grad->fill(0.0);
  }
}

void ParamStore::clear_grad() {
  for (auto& p : params_) p.grad.reset();
}

namespace init {

Tensor uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

}  // namespace init

void adam_step(ParamStore& store, const AdamOptions& options) {
  for (const auto& p : store.parameters()) {
    if (p.trainable && !p.grad) {
      throw NumericError("adam_step: parameter '" + p.name + "' has no gradient; run backward first");
    }
  }
  for (auto& p : store.parameters()) {
    if (!p.trainable) continue;
    ++p.step;
    const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(p.step));
    const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(p.step));
    auto value = p.value.values();
    auto grad = p.grad->values();
    auto m = p.first_moment.values();
    auto v = p.second_moment.values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * grad[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
    p.grad->fill(0.0);
  }
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& forward, ParamStore& store, double eps,
                           std::size_t coords_per_param, std::uint64_t seed) {
  store.clear_grad();
  {
    Tape tape(store);
    tape.backward(forward(tape));
  }

  auto evaluate = [&] {
    Tape tape(store);
    return tape.value(forward(tape))[0];
  };

  Rng rng(seed);
  GradCheckResult result;
  for (auto& p : store.parameters()) {
    if (!p.trainable) continue;
    const Tensor analytic = *p.grad;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > coords_per_param) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double plus = evaluate();
      p.value[i] = saved - eps;
      const double minus = evaluate();
      p.value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++result.coordinates_checked;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  store.clear_grad();
  return result;
}

}  // namespace rdas
