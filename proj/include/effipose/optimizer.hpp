#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "effipose/weights.hpp"

namespace effipose {

/// Geometric mean of the two rates, doubled per unit of sigma reduction.
inline double lambda_inf(double lambda_max, double lambda_min, double sigma_0, double sigma_inf) {
  if (!(lambda_max > 0) || !(lambda_min > 0))
    throw ConfigError("learning rates must be positive");
  if (!(sigma_0 > 0) || !(sigma_inf > 0)) throw ConfigError("sigma values must be positive");
  if (sigma_0 < sigma_inf) throw ConfigError("sigma_0 must be >= sigma_inf");
  const double mean = std::pow(10.0, (std::log10(lambda_max) + std::log10(lambda_min)) / 2.0);
  return mean * std::pow(2.0, sigma_0 - sigma_inf);
}

inline constexpr double kMinRateDivisor = 3000.0;
inline constexpr double kCycleEpochs = 3.0;
inline constexpr double kPeakDecay = 0.94;
inline constexpr double kMomentum = 0.9;

/// Triangular cyclical rate whose peaks decay geometrically toward lambda_inf.
struct CLRSchedule {
  double lambda_max = 1e-2;
  double lambda_min = 1e-2 / kMinRateDivisor;
  double lambda_limit = 0;  // lambda_inf
  double cycle_epochs = kCycleEpochs;
  double decay = kPeakDecay;

  CLRSchedule() = default;
  CLRSchedule(double lmax, double sigma_0, double sigma_inf, double cycle = kCycleEpochs,
              double d = kPeakDecay)
      : lambda_max(lmax), lambda_min(lmax / kMinRateDivisor), cycle_epochs(cycle), decay(d) {
    lambda_limit = lambda_inf(lambda_max, lambda_min, sigma_0, sigma_inf);
    if (!(lambda_min < lambda_limit && lambda_limit < lambda_max))
      throw ConfigError("CLR requires lambda_min < lambda_inf < lambda_max; got " +
                        std::to_string(lambda_min) + ", " + std::to_string(lambda_limit) + ", " +
                        std::to_string(lambda_max));
    if (!(cycle_epochs > 0)) throw ConfigError("cycle length must be positive");
    if (!(decay > 0 && decay < 1)) throw ConfigError("peak decay must lie in (0, 1)");
  }

  double peak(int cycle) const {
    return lambda_limit + (lambda_max - lambda_limit) * std::pow(decay, cycle);
  }
};

inline double lr_at(const CLRSchedule& s, double epoch_fraction) {
  if (epoch_fraction < 0) throw ConfigError("epoch must be non-negative");
  const int k = static_cast<int>(std::floor(epoch_fraction / s.cycle_epochs));
  const double t = epoch_fraction / s.cycle_epochs - k;
  const double tri = 1.0 - std::abs(2.0 * t - 1.0);
  return s.lambda_min + (s.peak(k) - s.lambda_min) * tri;
}

// ---------------------------------------------------------------------------

/// v <- momentum * v - rate * g;  p <- p + v.
template <class T>
void sgd_update(std::span<T> param, std::span<const T> grad, std::span<T> velocity, double rate,
                double momentum = kMomentum) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw DimensionError("sgd_update: parameter, gradient and velocity sizes differ (" +
                         std::to_string(param.size()) + ", " + std::to_string(grad.size()) + ", " +
                         std::to_string(velocity.size()) + ")");
  const T m = static_cast<T>(momentum), r = static_cast<T>(rate);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = m * velocity[i] - r * grad[i];
    param[i] += velocity[i];
  }
}

template <class T>
struct SGDState {
  double momentum = kMomentum;
  std::map<std::string, Tensor<T>> velocity;

  Tensor<T>& buffer(const std::string& name, const Shape& s) {
    auto it = velocity.find(name);
    if (it == velocity.end()) it = velocity.emplace(name, Tensor<T>(s)).first;
    if (!(it->second.shape() == s))
      throw DimensionError("velocity of " + name + " has shape " + it->second.shape().str() +
                           ", parameter has " + s.str());
    return it->second;
  }
};

/// One momentum step over every trainable parameter, in store order.
template <class T>
void sgd_step(ParamStore<T>& store, SGDState<T>& state, double rate) {
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    auto& value = p.value();
    Tensor<T>& v = state.buffer(p.name, value.shape());
    if (!p.var->grad.empty()) {
      const auto& g = p.var->grad;
      sgd_update<T>(std::span<T>(value.vec()), std::span<const T>(g.vec()), std::span<T>(v.vec()),
                    rate, state.momentum);
    } else {
      const std::vector<T> zero(value.size(), T(0));
      sgd_update<T>(std::span<T>(value.vec()), std::span<const T>(zero), std::span<T>(v.vec()),
                    rate, state.momentum);
    }
  }
}

template <class T>
std::vector<WeightRecord> velocity_records(const SGDState<T>& state) {
  std::vector<WeightRecord> out;
  for (const auto& [name, t] : state.velocity) {
    WeightRecord r;
    r.name = name;
    r.dims = detail::stored_dims(t.shape());
    r.values.assign(t.vec().begin(), t.vec().end());
    out.push_back(std::move(r));
  }
  return out;
}

/// Restores velocities saved by `velocity_records`; shapes come from `store`.
template <class T>
void load_velocity(SGDState<T>& state, const ParamStore<T>& store,
                   const std::vector<WeightRecord>& records) {
  state.velocity.clear();
  for (const auto& r : records) {
    const Shape s = store.get(r.name).value().shape();
    if (detail::stored_dims(s) != r.dims)
      throw WeightFileError("velocity " + r.name + ": shape mismatch with " + s.str());
    Tensor<T> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t.vec()[i] = static_cast<T>(r.values[i]);
    state.velocity.emplace(r.name, std::move(t));
  }
}

}  // namespace effipose
