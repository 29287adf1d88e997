#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aql {

/// Asymmetric squared loss |tau - 1(u < 0)| * u^2.
inline double expectile_loss(double tau, double u) noexcept {
  const double weight = u < 0.0 ? 1.0 - tau : tau;
  return weight * u * u;
}

/// d/du of expectile_loss: 2 |tau - 1(u < 0)| u, zero at u = 0.
///
/// The factor 2 is kept so that tau = 0.5 gives exactly u, the gradient of
/// the plain 0.5 u^2 loss.
inline double expectile_loss_grad(double tau, double u) noexcept {
  const double weight = u < 0.0 ? 1.0 - tau : tau;
  return 2.0 * weight * u;
}

/// Plain 0.5 u^2 loss and its gradient. Kept as a separate code path from
/// the expectile loss so the two can be compared.
inline double squared_loss(double u) noexcept { return 0.5 * u * u; }
inline double squared_loss_grad(double u) noexcept { return u; }

/// Expectile loss with a validated tau in (0, 1).
class ExpectileLoss {
 public:
  explicit ExpectileLoss(double tau) : tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("ExpectileLoss: tau must lie in (0, 1)");
  }
  double tau() const noexcept { return tau_; }
  double operator()(double u) const noexcept { return expectile_loss(tau_, u); }
  double grad(double u) const noexcept { return expectile_loss_grad(tau_, u); }

 private:
  double tau_;
};

/// The tau-expectile of a (weighted) sample: the root m of
///   tau * sum_{x >= m} w (x - m) = (1 - tau) * sum_{x < m} w (m - x).
///
/// The left side minus the right side is strictly decreasing in m, so the
/// root is bracketed by [min, max] and found by bisection down to adjacent
/// doubles.
inline double sample_expectile(std::span<const double> data, std::span<const double> weights, double tau) {
  if (data.empty()) throw std::invalid_argument("sample_expectile: empty data");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("sample_expectile: tau must lie in (0, 1)");
  if (!weights.empty() && weights.size() != data.size())
    throw std::invalid_argument("sample_expectile: weights and data differ in length");
  double total_weight = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("sample_expectile: weights must be finite and >= 0");
    if (!std::isfinite(data[i])) throw std::invalid_argument("sample_expectile: non-finite data");
    total_weight += w;
  }
  if (!(total_weight > 0.0)) throw std::invalid_argument("sample_expectile: total weight is zero");

  auto condition = [&](double m) {
    double above = 0.0, below = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      const double d = data[i] - m;
      if (d >= 0.0)
        above += w * d;
      else
        below -= w * d;
    }
    return tau * above - (1.0 - tau) * below;
  };

  auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) return lo;
  for (int iter = 0; iter < 2000; ++iter) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    const double f = condition(mid);
    if (f == 0.0) return mid;
    if (f > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return lo + 0.5 * (hi - lo);
}

inline double sample_expectile(std::span<const double> data, double tau) { return sample_expectile(data, {}, tau); }

enum class ScheduleKind { linear, exp1, exp2, sigmoid, constant };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::exp1: return "exp1";
    case ScheduleKind::exp2: return "exp2";
    case ScheduleKind::sigmoid: return "sigmoid";
    case ScheduleKind::constant: return "constant";
  }
  return "?";
}

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "exp1") return ScheduleKind::exp1;
  if (s == "exp2") return ScheduleKind::exp2;
  if (s == "sigmoid") return ScheduleKind::sigmoid;
  if (s == "constant") return ScheduleKind::constant;
  throw std::invalid_argument("unknown schedule kind '" + std::string(s) + "'");
}

/// Annealing rule for the expectile tau over timesteps [0, horizon].
struct TauSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  double tau_init = 0.9;
  double tau_final = 0.5;
  double horizon = 1.0;
  /// Rate or steepness of the non-linear kinds.
  double shape = 5.0;

  static TauSchedule constant(double tau, double horizon = 1.0) {
    return {ScheduleKind::constant, tau, tau, horizon, 5.0};
  }
  static TauSchedule linear(double tau_init, double horizon, double tau_final = 0.5) {
    return {ScheduleKind::linear, tau_init, tau_final, horizon, 5.0};
  }

  void validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("TauSchedule: horizon must be positive");
    if (!std::isfinite(tau_init) || !std::isfinite(tau_final))
      throw std::invalid_argument("TauSchedule: tau values must be finite");
    if (kind == ScheduleKind::constant && tau_final != tau_init)
      throw std::invalid_argument("TauSchedule: constant schedule needs tau_final == tau_init");
    if (kind != ScheduleKind::linear && kind != ScheduleKind::constant && !(shape > 0.0))
      throw std::invalid_argument("TauSchedule: shape must be positive");
  }

  double min_value() const { return std::min(tau_init, tau_final); }
  double max_value() const { return std::max(tau_init, tau_final); }
};

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Normalized decay profile: 1 at x = 0, 0 at x = 1.
inline double schedule_profile(const TauSchedule& s, double x) {
  const double k = s.shape;
  switch (s.kind) {
    case ScheduleKind::linear: return 1.0 - x;
    case ScheduleKind::exp1: return (std::exp(-k * x) - std::exp(-k)) / (1.0 - std::exp(-k));
    case ScheduleKind::exp2: return 1.0 - std::expm1(k * x) / std::expm1(k);
    case ScheduleKind::sigmoid: {
      const double hi = logistic(0.5 * k), lo = logistic(-0.5 * k);
      return (logistic(k * (0.5 - x)) - lo) / (hi - lo);
    }
    case ScheduleKind::constant: return 1.0;
  }
  return 1.0;
}

inline double schedule_fraction(const TauSchedule& s, double t, const char* who) {
  s.validate();
  if (!(t >= 0.0 && t <= s.horizon)) throw std::out_of_range(std::string(who) + ": t outside [0, horizon]");
  return t / s.horizon;
}

}  // namespace detail

/// tau(t). Linear is tau_init - (tau_init - tau_final) t / T; the other
/// kinds scale a normalized profile between the two endpoints, which are
/// returned exactly.
inline double schedule_value(const TauSchedule& s, double t) {
  const double x = detail::schedule_fraction(s, t, "schedule_value");
  if (s.kind == ScheduleKind::constant || t == 0.0) return s.tau_init;
  if (t == s.horizon) return s.tau_final;
  if (s.kind == ScheduleKind::linear) return s.tau_init - (s.tau_init - s.tau_final) * x;
  return s.tau_final + (s.tau_init - s.tau_final) * detail::schedule_profile(s, x);
}

/// The schedule's shape remapped onto a weight with w(0) = 1 and w(T) = 0.
/// A constant schedule maps to w = 1 throughout.
inline double weight_from_tau_schedule(const TauSchedule& s, double t) {
  const double x = detail::schedule_fraction(s, t, "weight_from_tau_schedule");
  if (s.kind == ScheduleKind::constant || t == 0.0) return 1.0;
  if (t == s.horizon) return 0.0;
  return std::clamp(detail::schedule_profile(s, x), 0.0, 1.0);
}

/// schedule_value with t clamped to the horizon; training continues at the
/// final value once annealing ends.
inline double schedule_value_clamped(const TauSchedule& s, double t) {
  return schedule_value(s, std::clamp(t, 0.0, s.horizon));
}

inline double weight_clamped(const TauSchedule& s, double t) {
  return weight_from_tau_schedule(s, std::clamp(t, 0.0, s.horizon));
}

}  // namespace aql
