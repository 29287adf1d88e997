#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "aql/approx.hpp"
#include "aql/rng.hpp"

namespace aql {

enum class EnvKind { two_peak_bandit, point_mass_reach };

inline std::string_view to_string(EnvKind k) {
  return k == EnvKind::two_peak_bandit ? "two_peak_bandit" : "point_mass_reach";
}

inline EnvKind env_kind_from_string(std::string_view s) {
  if (s == "two_peak_bandit") return EnvKind::two_peak_bandit;
  if (s == "point_mass_reach") return EnvKind::point_mass_reach;
  throw std::invalid_argument("unknown environment kind '" + std::string(s) + "'");
}

/// Reward landscape of the two-peak bandit over a 1-D action in [-1, 1]:
/// baseline plus a narrow high Gaussian bump and a wide low one.
struct BanditShape {
  double high_center = 0.6;
  double high_height = 1.0;
  double high_width = 0.08;
  double low_center = -0.2;
  double low_height = 0.5;
  double low_width = 0.3;
  double baseline = 0.0;

  double operator()(double a) const {
    const double dh = (a - high_center) / high_width;
    const double dl = (a - low_center) / low_width;
    return baseline + high_height * std::exp(-0.5 * dh * dh) + low_height * std::exp(-0.5 * dl * dl);
  }
};

struct ToyEnvSpec {
  EnvKind kind = EnvKind::two_peak_bandit;
  /// Std of Gaussian noise added to the executed action (clipped to bounds).
  double action_noise_std = 0.0;
  /// Episode length cap; 0 picks the kind's default (1 for the bandit, 50 for reach).
  std::size_t horizon = 0;
  BanditShape bandit{};
};

struct EnvStep {
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;   ///< true end of the task; no bootstrapping past it
  bool truncated = false;  ///< time limit hit
};

/// Small continuous-action environments used in place of physics suites.
///
/// two_peak_bandit: one step, constant observation [1], reward is the
/// bandit shape evaluated at the (noisy) executed action.
///
/// point_mass_reach: 2-D point mass, state (x, y, vx, vy), force action in
/// [-1, 1]^2, reward -(|p|^2 + 0.01 |a|^2) for reaching the origin.
class ToyEnv {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kPosLimit = 2.0;
  static constexpr double kVelLimit = 2.0;

  explicit ToyEnv(ToyEnvSpec spec) : spec_(spec) {
    if (!(spec_.action_noise_std >= 0.0)) throw std::invalid_argument("ToyEnv: action_noise_std must be >= 0");
    if (spec_.horizon == 0) spec_.horizon = spec_.kind == EnvKind::two_peak_bandit ? 1 : 50;
    if (spec_.kind == EnvKind::two_peak_bandit) {
      const auto& b = spec_.bandit;
      if (!(b.high_width > 0.0 && b.low_width > 0.0)) throw std::invalid_argument("ToyEnv: bandit widths must be positive");
      if (b.high_height < 0.0 || b.low_height < 0.0) throw std::invalid_argument("ToyEnv: bandit heights must be >= 0");
    }
  }

  const ToyEnvSpec& spec() const noexcept { return spec_; }
  EnvKind kind() const noexcept { return spec_.kind; }
  std::size_t state_dim() const noexcept { return spec_.kind == EnvKind::two_peak_bandit ? 1 : 4; }
  std::size_t action_dim() const noexcept { return spec_.kind == EnvKind::two_peak_bandit ? 1 : 2; }
  std::size_t horizon() const noexcept { return spec_.horizon; }
  double action_bound() const noexcept { return 1.0; }

  /// Inclusive bounds on any single reward.
  std::pair<double, double> reward_bounds() const {
    if (spec_.kind == EnvKind::two_peak_bandit) {
      const auto& b = spec_.bandit;
      return {b.baseline, b.baseline + b.high_height + b.low_height};
    }
    return {-(2.0 * kPosLimit * kPosLimit + 0.01 * 2.0), 0.0};
  }

  Vector reset(RandomStream& rng) {
    t_ = 0;
    if (spec_.kind == EnvKind::two_peak_bandit) {
      state_ = Vector::Ones(1);
    } else {
      state_ = Vector::Zero(4);
      state_(0) = rng.uniform(-1.0, 1.0);
      state_(1) = rng.uniform(-1.0, 1.0);
    }
    return state_;
  }

  EnvStep step(const Vector& action, RandomStream& rng) {
    if (action.size() != static_cast<Eigen::Index>(action_dim())) throw std::invalid_argument("ToyEnv::step: wrong action size");
    if (t_ >= spec_.horizon) throw std::logic_error("ToyEnv::step: episode already finished");
    Vector a = action.cwiseMax(-1.0).cwiseMin(1.0);
    if (spec_.action_noise_std > 0.0)
      for (Eigen::Index i = 0; i < a.size(); ++i)
        a(i) = std::clamp(a(i) + spec_.action_noise_std * rng.normal(), -1.0, 1.0);
    ++t_;
    EnvStep out;
    if (spec_.kind == EnvKind::two_peak_bandit) {
      out.reward = spec_.bandit(a(0));
      out.next_state = state_;
      out.terminal = true;
    } else {
      for (int i = 0; i < 2; ++i) {
        state_(2 + i) = std::clamp(state_(2 + i) + kDt * a(i), -kVelLimit, kVelLimit);
        state_(i) = std::clamp(state_(i) + kDt * state_(2 + i), -kPosLimit, kPosLimit);
      }
      out.reward = -(state_.head(2).squaredNorm() + 0.01 * a.squaredNorm());
      out.next_state = state_;
      out.terminal = false;
    }
    out.truncated = !out.terminal && t_ >= spec_.horizon;
    return out;
  }

  /// E[r] for bandit action a under the action noise (Simpson quadrature).
  double bandit_expected_reward(double a) const {
    if (spec_.kind != EnvKind::two_peak_bandit) throw std::logic_error("bandit_expected_reward: not a bandit");
    const double sd = spec_.action_noise_std;
    const double ac = std::clamp(a, -1.0, 1.0);
    if (sd == 0.0) return spec_.bandit(ac);
    constexpr int n = 4000;  // even
    const double lo = -8.0, hi = 8.0, h = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = lo + i * h;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
      total += w * pdf * spec_.bandit(std::clamp(ac + sd * z, -1.0, 1.0));
    }
    return total * h / 3.0;
  }

  /// Best achievable expected return of the bandit: grid scan over the
  /// action range followed by golden-section refinement.
  double bandit_optimal_return(double* argmax = nullptr) const {
    double best_a = -1.0, best = -1e300;
    constexpr int grid = 2000;
    for (int i = 0; i <= grid; ++i) {
      const double a = -1.0 + 2.0 * i / grid;
      const double v = bandit_expected_reward(a);
      if (v > best) best = v, best_a = a;
    }
    double lo = std::max(-1.0, best_a - 2.0 / grid), hi = std::min(1.0, best_a + 2.0 / grid);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 80; ++it) {
      const double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
      if (bandit_expected_reward(x1) < bandit_expected_reward(x2))
        lo = x1;
      else
        hi = x2;
    }
    const double a = 0.5 * (lo + hi);
    const double v = bandit_expected_reward(a);
    if (v >= best) best = v, best_a = a;
    if (argmax) *argmax = best_a;
    return best;
  }

 private:
  ToyEnvSpec spec_;
  Vector state_;
  std::size_t t_ = 0;
};

}  // namespace aql
