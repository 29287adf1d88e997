#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aql/rng.hpp"

namespace aql {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a loss, gradient or parameter stops being finite.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Activations saved by Mlp::forward for the matching backward pass.
struct ForwardCache {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> inputs;  ///< input of each layer
  std::vector<Matrix> pre;     ///< pre-activation of each layer
};

/// Fully connected network, ReLU on hidden layers and identity output.
///
/// All weights and biases live in one contiguous buffer so that optimizers,
/// target tracking and checkpoints work on a flat view. Layer l stores its
/// (out x in) column-major weight followed by its bias. Batches are passed
/// as matrices with one sample per column.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (auto n : sizes_)
      if (n == 0) throw std::invalid_argument("Mlp: zero-width layer");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(offset);
      offset += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
    params_.assign(offset, 0.0);
  }

  /// Hidden layers of `hidden` units between `in` and `out`.
  static Mlp with_hidden(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return Mlp(std::move(sizes));
  }

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  std::size_t num_layers() const noexcept { return offsets_.size(); }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_params() const noexcept { return params_.size(); }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// He-style uniform init: hidden weights in +-sqrt(6 / fan_in), output
  /// weights in +-sqrt(1 / fan_in), biases zero.
  void init(RandomStream& rng) {
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double fan_in = static_cast<double>(sizes_[l]);
      const double bound = (l + 1 < num_layers()) ? std::sqrt(6.0 / fan_in) : std::sqrt(1.0 / fan_in);
      auto w = weight_mut(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
      bias_mut(l).setZero();
    }
  }

  Eigen::Map<const Matrix> weight(std::size_t l) const {
    return {params_.data() + offsets_.at(l), static_cast<Eigen::Index>(sizes_[l + 1]),
            static_cast<Eigen::Index>(sizes_[l])};
  }
  Eigen::Map<const Vector> bias(std::size_t l) const {
    return {params_.data() + offsets_.at(l) + sizes_[l + 1] * sizes_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
  }
  Eigen::Map<Matrix> weight_mut(std::size_t l) {
    return {params_.data() + offsets_.at(l), static_cast<Eigen::Index>(sizes_[l + 1]),
            static_cast<Eigen::Index>(sizes_[l])};
  }
  Eigen::Map<Vector> bias_mut(std::size_t l) {
    return {params_.data() + offsets_.at(l) + sizes_[l + 1] * sizes_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
  }

  Matrix forward(const Matrix& x) const { return run_forward(x, nullptr); }

  Matrix forward(const Matrix& x, ForwardCache& cache) const { return run_forward(x, &cache); }

  /// Backpropagates `out_grad` (dL/doutput, one column per sample).
  /// Overwrites `param_grad` with dL/dparams and returns dL/dinput.
  Matrix backward(const ForwardCache& cache, const Matrix& out_grad, std::span<double> param_grad) const {
    if (cache.layer_sizes != sizes_ || cache.inputs.size() != num_layers())
      throw std::invalid_argument("Mlp::backward: cache does not belong to this network shape");
    if (param_grad.size() != params_.size()) throw std::invalid_argument("Mlp::backward: gradient buffer has wrong size");
    const Eigen::Index batch = cache.inputs.front().cols();
    if (out_grad.rows() != static_cast<Eigen::Index>(output_dim()) || out_grad.cols() != batch)
      throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");

    Matrix delta = out_grad;
    for (std::size_t l = num_layers(); l-- > 0;) {
      if (l + 1 < num_layers()) delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
      const auto rows = static_cast<Eigen::Index>(sizes_[l + 1]), cols = static_cast<Eigen::Index>(sizes_[l]);
      Eigen::Map<Matrix> gw(param_grad.data() + offsets_[l], rows, cols);
      Eigen::Map<Vector> gb(param_grad.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], rows);
      gw.noalias() = delta * cache.inputs[l].transpose();
      gb = delta.rowwise().sum();
      Matrix prev = weight(l).transpose() * delta;
      delta.swap(prev);
    }
    return delta;
  }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  Matrix run_forward(const Matrix& x, ForwardCache* cache) const {
    if (sizes_.empty()) throw std::logic_error("Mlp::forward: empty network");
    if (x.rows() != static_cast<Eigen::Index>(input_dim()))
      throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                                  std::to_string(input_dim()));
    if (cache) {
      cache->layer_sizes = sizes_;
      cache->inputs.assign(num_layers(), Matrix());
      cache->pre.assign(num_layers(), Matrix());
    }
    Matrix a = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      if (cache) {
        cache->inputs[l] = std::move(a);
        cache->pre[l] = z;
      }
      a = (l + 1 < num_layers()) ? Matrix(z.cwiseMax(0.0)) : std::move(z);
    }
    return a;
  }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n_params, AdamOptions opts = {}) : opts_(opts), m_(n_params, 0.0), v_(n_params, 0.0) {}

  const AdamOptions& options() const noexcept { return opts_; }
  std::size_t steps() const noexcept { return step_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::invalid_argument("Adam::step: parameter/gradient size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        std::ostringstream os;
        os << "Adam::step: non-finite gradient " << grads[i] << " at index " << i << " (step " << step_ + 1 << ")";
        throw NonFiniteError(os.str());
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grads[i];
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon);
      if (!std::isfinite(params[i])) throw NonFiniteError("Adam::step: parameter became non-finite");
    }
  }

 private:
  AdamOptions opts_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t step_ = 0;
};

/// target <- rho * target + (1 - rho) * online, elementwise.
inline void ema_blend(Mlp& target, const Mlp& online, double rho) {
  auto dst = target.params();
  auto src = online.params();
  if (dst.size() != src.size()) throw std::invalid_argument("ema_blend: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = rho * dst[i] + (1.0 - rho) * src[i];
}

/// Slow-moving copy of a network: target <- rho * target + (1 - rho) * online.
class TargetTracker {
 public:
  TargetTracker() = default;
  TargetTracker(const Mlp& online, double rho) : target_(online), rho_(rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("TargetTracker: rho must lie in [0, 1]");
  }

  const Mlp& net() const noexcept { return target_; }
  Mlp& net() noexcept { return target_; }
  double rho() const noexcept { return rho_; }

  void update(const Mlp& online) { ema_blend(target_, online, rho_); }

 private:
  Mlp target_;
  double rho_ = 0.995;
};

// Checkpoint format (text, one file may hold several networks):
//
//   aql-checkpoint 1
//   net <name> <n_sizes> <size_0> ... <size_k> <n_params>
//   <one parameter per line, %.17g>
//   ...
//   end
//
// Values are written with 17 significant digits, so a round trip is exact.

inline void write_checkpoint(std::ostream& os, const std::vector<std::pair<std::string, const Mlp*>>& nets) {
  os << "aql-checkpoint 1\n";
  char buf[40];
  for (const auto& [name, net] : nets) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
      throw std::invalid_argument("write_checkpoint: network names must be non-empty without whitespace");
    os << "net " << name << ' ' << net->layer_sizes().size();
    for (auto n : net->layer_sizes()) os << ' ' << n;
    os << ' ' << net->num_params() << '\n';
    for (double v : net->params()) {
      std::snprintf(buf, sizeof buf, "%.17g\n", v);
      os << buf;
    }
  }
  os << "end\n";
}

inline std::map<std::string, Mlp> read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "aql-checkpoint" || version != 1)
    throw std::runtime_error("read_checkpoint: bad header");
  std::map<std::string, Mlp> out;
  std::string tag;
  while (is >> tag) {
    if (tag == "end") return out;
    if (tag != "net") throw std::runtime_error("read_checkpoint: expected 'net' or 'end', got '" + tag + "'");
    std::string name;
    std::size_t n_sizes = 0;
    if (!(is >> name >> n_sizes) || n_sizes < 2 || n_sizes > 64) throw std::runtime_error("read_checkpoint: bad net header");
    std::vector<std::size_t> sizes(n_sizes);
    for (auto& n : sizes)
      if (!(is >> n)) throw std::runtime_error("read_checkpoint: truncated layer sizes");
    std::size_t n_params = 0;
    if (!(is >> n_params)) throw std::runtime_error("read_checkpoint: missing parameter count");
    Mlp net(sizes);
    if (net.num_params() != n_params) throw std::runtime_error("read_checkpoint: parameter count does not match shape");
    for (double& v : net.params()) {
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error("read_checkpoint: truncated parameters for '" + name + "'");
      v = std::stod(tok);
    }
    out.emplace(name, std::move(net));
  }
  throw std::runtime_error("read_checkpoint: missing 'end'");
}

/// Central-difference gradient of f with respect to `params`, perturbing
/// each entry in place and restoring it.
inline std::vector<double> central_difference(const std::function<double()>& f, std::span<double> params,
                                              double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + h;
    const double up = f();
    params[i] = orig - h;
    const double down = f();
    params[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest |a - b| / max(|a|, |b|, floor) over the two vectors.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace aql
