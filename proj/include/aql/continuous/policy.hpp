#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "aql/approx.hpp"
#include "aql/rng.hpp"

namespace aql {

/// log(1 - tanh(u)^2), written so it stays finite for large |u|.
inline double log1m_tanh_sq(double u) {
  const double x = -2.0 * u;
  const double softplus = x > 30.0 ? x : std::log1p(std::exp(x));
  return 2.0 * (std::numbers::ln2 - u - softplus);
}

/// Differential entropy of N(mu, exp(log_std)^2) in one dimension.
inline double gaussian_entropy(double log_std) {
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) + log_std;
}

/// tanh-squashed deterministic policy a = tanh(net(s)).
class DeterministicActor {
 public:
  DeterministicActor() = default;
  DeterministicActor(std::size_t state_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden)
      : net_(Mlp::with_hidden(state_dim, hidden, action_dim)) {}

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }
  std::size_t action_dim() const { return net_.output_dim(); }

  Matrix act(const Matrix& s) const { return net_.forward(s).array().tanh().matrix(); }

  Matrix act(const Matrix& s, ForwardCache& cache) const { return net_.forward(s, cache).array().tanh().matrix(); }

  /// Parameter gradient given dL/da at the actions `a` returned by act(s, cache).
  void backward(const ForwardCache& cache, const Matrix& a, const Matrix& grad_a, std::span<double> param_grad) const {
    Matrix g = grad_a.cwiseProduct((1.0 - a.array().square()).matrix());
    net_.backward(cache, g, param_grad);
  }

 private:
  Mlp net_;
};

/// Draws from a squashed Gaussian policy, kept for the reparameterized gradient.
struct GaussianSample {
  ForwardCache cache;
  Matrix raw;      ///< network output, mean rows then raw log-std rows
  Matrix mean;     ///< pre-squash mean
  Matrix log_std;  ///< rescaled log-std
  Matrix eps;      ///< standard normal noise
  Matrix u;        ///< pre-squash action
  Matrix a;        ///< tanh(u)
  Vector log_prob; ///< log density of a, one per column
};

/// Squashed Gaussian policy. The network emits a mean and a raw log-std per
/// action dimension; the raw value is mapped into [log_std_min, log_std_max]
/// with a rescaled tanh, which keeps std >= exp(log_std_min).
class GaussianActor {
 public:
  static constexpr double kMinStdFloor = 1e-3;

  GaussianActor() = default;
  GaussianActor(std::size_t state_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden,
                double log_std_min = -5.0, double log_std_max = 1.0)
      : net_(Mlp::with_hidden(state_dim, hidden, 2 * action_dim)), adim_(action_dim), lmin_(log_std_min),
        lmax_(log_std_max) {
    if (!(log_std_min < log_std_max)) throw std::invalid_argument("GaussianActor: log_std_min must be < log_std_max");
    if (log_std_min < std::log(kMinStdFloor) - 1e-12)
      throw std::invalid_argument("GaussianActor: log_std_min below the std floor of 1e-3");
  }

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }
  std::size_t action_dim() const noexcept { return adim_; }
  double log_std_min() const noexcept { return lmin_; }
  double log_std_max() const noexcept { return lmax_; }

  double rescale_log_std(double raw) const { return lmin_ + 0.5 * (lmax_ - lmin_) * (std::tanh(raw) + 1.0); }

  /// tanh of the mean, the action used for evaluation.
  Matrix mean_action(const Matrix& s) const {
    return net_.forward(s).topRows(static_cast<Eigen::Index>(adim_)).array().tanh().matrix();
  }

  Matrix log_std(const Matrix& s) const {
    Matrix raw = net_.forward(s).bottomRows(static_cast<Eigen::Index>(adim_));
    return raw.unaryExpr([this](double r) { return rescale_log_std(r); });
  }

  /// Samples with fresh standard-normal noise from `rng` (column-major order).
  GaussianSample sample(const Matrix& s, RandomStream& rng) const {
    Matrix eps(static_cast<Eigen::Index>(adim_), s.cols());
    for (Eigen::Index j = 0; j < eps.cols(); ++j)
      for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = rng.normal();
    return sample_with_noise(s, eps);
  }

  /// Samples with given noise so the result is a deterministic function of
  /// the parameters.
  GaussianSample sample_with_noise(const Matrix& s, const Matrix& eps) const {
    const auto d = static_cast<Eigen::Index>(adim_);
    if (eps.rows() != d || eps.cols() != s.cols()) throw std::invalid_argument("GaussianActor: noise shape mismatch");
    GaussianSample out;
    out.raw = net_.forward(s, out.cache);
    out.mean = out.raw.topRows(d);
    out.log_std = out.raw.bottomRows(d).unaryExpr([this](double r) { return rescale_log_std(r); });
    out.eps = eps;
    out.u = out.mean + out.log_std.array().exp().matrix().cwiseProduct(eps);
    out.a = out.u.array().tanh().matrix();
    out.log_prob.resize(s.cols());
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      double lp = 0.0;
      for (Eigen::Index i = 0; i < d; ++i)
        lp += -0.5 * eps(i, j) * eps(i, j) - out.log_std(i, j) - half_log_2pi - log1m_tanh_sq(out.u(i, j));
      out.log_prob(j) = lp;
    }
    return out;
  }

  /// Parameter gradient of sum_j [grad_a(:, j) . a_j + grad_logp(j) * log_prob_j]
  /// through the reparameterized sample.
  void backward(const GaussianSample& smp, const Matrix& grad_a, const Vector& grad_logp,
                std::span<double> param_grad) const {
    const auto d = static_cast<Eigen::Index>(adim_);
    const Eigen::Index n = smp.a.cols();
    Matrix g(2 * d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) {
        const double a = smp.a(i, j);
        const double std = std::exp(smp.log_std(i, j));
        // d log_prob / du = 2 tanh(u); d log_prob / d log_std (direct) = -1.
        const double dJ_du = grad_a(i, j) * (1.0 - a * a) + grad_logp(j) * 2.0 * a;
        const double dJ_dlogstd = dJ_du * std * smp.eps(i, j) - grad_logp(j);
        const double t = std::tanh(smp.raw(d + i, j));
        g(i, j) = dJ_du;
        g(d + i, j) = dJ_dlogstd * 0.5 * (lmax_ - lmin_) * (1.0 - t * t);
      }
    }
    net_.backward(smp.cache, g, param_grad);
  }

 private:
  Mlp net_;
  std::size_t adim_ = 0;
  double lmin_ = -5.0;
  double lmax_ = 1.0;
};

}  // namespace aql
