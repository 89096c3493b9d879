#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace cloneforge {

struct PULossConfig {
  double lambda_var = 0.0;
};

template <typename T>
struct BasicPULossValue {
  T total{};
  T consistency{};
  T variance{};
  T hinge{};
  T mu{};
};

using PULossValue = BasicPULossValue<float>;

/// Gradients of the total loss with respect to each norm and the margin m.
template <typename T>
struct PULossGradient {
  std::vector<T> d_pos;
  std::vector<T> d_unl;
  T d_margin{};
};

/// Mean of the positive latent norms.
template <typename T>
T compute_mu(std::span<const T> pos_norms) {
  if (pos_norms.empty()) throw std::invalid_argument("compute_mu: no positive norms");
  T sum{};
  for (T v : pos_norms) sum += v;
  return sum / static_cast<T>(pos_norms.size());
}

/// Consistency + lambda_var * variance + hinge on unlabeled norms.
///
/// mu is the batch mean of the positive norms and stays differentiable, so
/// both the consistency and hinge terms feed gradient into every positive.
/// The hinge is inactive (zero subgradient) exactly at its boundary.
template <typename T>
BasicPULossValue<T> pu_loss(std::span<const T> pos_norms, std::span<const T> unl_norms, T margin,
                            const PULossConfig& config, PULossGradient<T>* grad = nullptr) {
  if (pos_norms.empty() || unl_norms.empty()) {
    throw std::invalid_argument("pu_loss: positive and unlabeled sets must be non-empty");
  }
  if (!(margin > T(0))) throw std::invalid_argument("pu_loss: margin must be positive");
  if (config.lambda_var < 0) throw std::invalid_argument("pu_loss: lambda_var must be non-negative");

  const T n_pos = static_cast<T>(pos_norms.size());
  const T n_unl = static_cast<T>(unl_norms.size());
  const T lambda = static_cast<T>(config.lambda_var);

  BasicPULossValue<T> v;
  v.mu = compute_mu(pos_norms);
  T sq{};
  for (T n : pos_norms) sq += (n - v.mu) * (n - v.mu);
  v.consistency = sq / n_pos;
  v.variance = v.consistency;  // population variance of the same norms

  T hinge_sum{};
  std::size_t active = 0;
  for (T u : unl_norms) {
    const T gap = v.mu + margin - u;
    if (gap > T(0)) {
      hinge_sum += gap;
      ++active;
    }
  }
  v.hinge = hinge_sum / n_unl;
  v.total = v.consistency + lambda * v.variance + v.hinge;

  if (grad) {
    const T active_frac = static_cast<T>(active) / n_unl;
    grad->d_pos.resize(pos_norms.size());
    grad->d_unl.resize(unl_norms.size());
    const T pull = (T(1) + lambda) * T(2) / n_pos;
    for (std::size_t i = 0; i < pos_norms.size(); ++i) {
      grad->d_pos[i] = pull * (pos_norms[i] - v.mu) + active_frac / n_pos;
    }
    for (std::size_t k = 0; k < unl_norms.size(); ++k) {
      grad->d_unl[k] = (v.mu + margin - unl_norms[k] > T(0)) ? -T(1) / n_unl : T(0);
    }
    grad->d_margin = active_frac;
  }
  return v;
}

/// Clone decision on the latent norm; the boundary counts as a clone.
inline bool decision(double norm, double tau) { return norm <= tau; }

}  // namespace cloneforge
