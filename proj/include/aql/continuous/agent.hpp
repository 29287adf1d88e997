#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aql/approx.hpp"
#include "aql/continuous/env.hpp"
#include "aql/continuous/policy.hpp"
#include "aql/continuous/replay.hpp"
#include "aql/expectile.hpp"
#include "aql/rng.hpp"

namespace aql {

enum class Algo { aq_td3, aq_sac, maxbackup_sac };
enum class CriticLoss { expectile, squared };

inline std::string_view to_string(Algo a) {
  switch (a) {
    case Algo::aq_td3: return "aq_td3";
    case Algo::aq_sac: return "aq_sac";
    case Algo::maxbackup_sac: return "maxbackup_sac";
  }
  return "?";
}

inline Algo algo_from_string(std::string_view s) {
  if (s == "aq_td3") return Algo::aq_td3;
  if (s == "aq_sac") return Algo::aq_sac;
  if (s == "maxbackup_sac") return Algo::maxbackup_sac;
  throw std::invalid_argument("unknown algo '" + std::string(s) + "'");
}

inline std::string_view to_string(CriticLoss c) { return c == CriticLoss::expectile ? "expectile" : "squared"; }

inline CriticLoss critic_loss_from_string(std::string_view s) {
  if (s == "expectile") return CriticLoss::expectile;
  if (s == "squared") return CriticLoss::squared;
  throw std::invalid_argument("unknown critic loss '" + std::string(s) + "'");
}

struct Td3Options {
  double exploration_std = 0.1;
  double target_noise_std = 0.2;
  double target_noise_clip = 0.5;
  std::size_t policy_delay = 2;
};

struct SacOptions {
  double entropy_alpha = 0.1;  ///< fixed temperature
  double log_std_min = -5.0;
  double log_std_max = 1.0;
};

/// SAC-style actor, but the critic target is the best of n policy samples
/// and carries no entropy bonus.
struct MaxBackupOptions : SacOptions {
  std::size_t n_samples = 10;
};

using AlgoOptions = std::variant<Td3Options, SacOptions, MaxBackupOptions>;

struct AgentConfig {
  Algo algo = Algo::aq_sac;
  AlgoOptions options = SacOptions{};
  TauSchedule tau_schedule = TauSchedule::constant(0.5);
  CriticLoss critic_loss = CriticLoss::expectile;
  std::size_t batch_size = 128;
  double discount = 0.99;
  double ema_coeff = 0.995;
  double learning_rate = 3e-4;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t buffer_capacity = 100000;
  /// Uniform-random actions before the first update.
  std::size_t warmup_steps = 1000;

  void validate() const {
    const std::size_t want = algo == Algo::aq_td3 ? 0 : algo == Algo::aq_sac ? 1 : 2;
    if (options.index() != want) throw std::invalid_argument("AgentConfig: options do not match algo");
    if (batch_size == 0) throw std::invalid_argument("AgentConfig: batch_size must be >= 1");
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("AgentConfig: discount must lie in [0, 1)");
    if (!(ema_coeff >= 0.0 && ema_coeff <= 1.0)) throw std::invalid_argument("AgentConfig: ema_coeff must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("AgentConfig: learning_rate must be positive");
    if (buffer_capacity == 0) throw std::invalid_argument("AgentConfig: buffer_capacity must be positive");
    for (auto h : hidden)
      if (h == 0) throw std::invalid_argument("AgentConfig: zero-width hidden layer");
    tau_schedule.validate();
    if (critic_loss == CriticLoss::expectile && !(tau_schedule.min_value() > 0.0 && tau_schedule.max_value() < 1.0))
      throw std::invalid_argument("AgentConfig: tau must stay inside (0, 1)");
    if (critic_loss == CriticLoss::squared && !(tau_schedule.kind == ScheduleKind::constant && tau_schedule.tau_init == 0.5))
      throw std::invalid_argument("AgentConfig: squared critic loss needs a constant tau of 0.5");
    if (const auto* t = std::get_if<Td3Options>(&options)) {
      if (t->exploration_std < 0.0 || t->target_noise_std < 0.0 || t->target_noise_clip < 0.0)
        throw std::invalid_argument("AgentConfig: TD3 noise settings must be >= 0");
      if (t->policy_delay == 0) throw std::invalid_argument("AgentConfig: policy_delay must be >= 1");
    }
    if (const auto* m = std::get_if<MaxBackupOptions>(&options); m && m->n_samples == 0)
      throw std::invalid_argument("AgentConfig: n_samples must be >= 1");
    const SacOptions* s = std::get_if<SacOptions>(&options);
    if (!s) s = std::get_if<MaxBackupOptions>(&options);
    if (s && !(s->entropy_alpha >= 0.0)) throw std::invalid_argument("AgentConfig: entropy_alpha must be >= 0");
  }

  const SacOptions& sac() const {
    if (const auto* s = std::get_if<SacOptions>(&options)) return *s;
    if (const auto* m = std::get_if<MaxBackupOptions>(&options)) return *m;
    throw std::logic_error("AgentConfig: not a stochastic-policy algo");
  }
};

// ---------------------------------------------------------------------------
// Critic helpers

inline Matrix stack_state_action(const Matrix& s, const Matrix& a) {
  if (s.cols() != a.cols()) throw std::invalid_argument("stack_state_action: batch size mismatch");
  Matrix sa(s.rows() + a.rows(), s.cols());
  sa.topRows(s.rows()) = s;
  sa.bottomRows(a.rows()) = a;
  return sa;
}

inline Vector q_values(const Mlp& critic, const Matrix& s, const Matrix& a) {
  return critic.forward(stack_state_action(s, a)).row(0).transpose();
}

/// Q(s, a) and dQ/da for every column, for actor updates.
struct CriticFn {
  const Mlp* critic;

  struct Result {
    Vector q;
    Matrix dq_da;
  };

  Result operator()(const Matrix& s, const Matrix& a) const {
    ForwardCache cache;
    Matrix out = critic->forward(stack_state_action(s, a), cache);
    std::vector<double> scratch(critic->num_params());
    Matrix din = critic->backward(cache, Matrix::Ones(1, s.cols()), scratch);
    return {out.row(0).transpose(), din.bottomRows(a.rows())};
  }
};

/// Mean critic loss over the batch against fixed targets y. Writes the
/// parameter gradient into `grad`. The expectile branch at tau = 0.5 and the
/// squared branch give bit-identical results.
inline double critic_loss(const Mlp& critic, const Matrix& s, const Matrix& a, const Vector& y, double tau,
                          CriticLoss kind, std::span<double> grad) {
  const Eigen::Index n = y.size();
  if (n == 0 || s.cols() != n) throw std::invalid_argument("critic_loss: batch size mismatch");
  for (Eigen::Index j = 0; j < n; ++j)
    if (!std::isfinite(y(j))) {
      std::ostringstream os;
      os << "critic_loss: non-finite target " << y(j) << " at batch index " << j;
      throw NonFiniteError(os.str());
    }
  ForwardCache cache;
  Matrix q = critic.forward(stack_state_action(s, a), cache);
  Matrix g(1, n);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double u = y(j) - q(0, j);
    if (kind == CriticLoss::expectile) {
      loss += expectile_loss(tau, u);
      g(0, j) = -expectile_loss_grad(tau, u) * inv_n;
    } else {
      loss += squared_loss(u);
      g(0, j) = -squared_loss_grad(u) * inv_n;
    }
  }
  loss *= inv_n;
  if (!std::isfinite(loss)) throw NonFiniteError("critic_loss: non-finite loss");
  critic.backward(cache, g, grad);
  return loss;
}

namespace detail {

inline Vector bootstrap(const Vector& r, const Vector& done, double discount, const Vector& next_value) {
  Vector y(r.size());
  for (Eigen::Index j = 0; j < r.size(); ++j) y(j) = done(j) != 0.0 ? r(j) : r(j) + discount * next_value(j);
  return y;
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, RandomStream& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

}  // namespace detail

/// r + gamma (1 - done) min(Q1', Q2')(s', a~), a~ = clip(mu'(s') + clip(sigma * z, +-c), +-1),
/// where z is the given standard-normal noise.
inline Vector td3_target_from_noise(const Mlp& q1t, const Mlp& q2t, const DeterministicActor& actor_t,
                                    const Matrix& s_next, const Vector& r, const Vector& done, double discount,
                                    const Td3Options& opt, const Matrix& z) {
  Matrix a = actor_t.act(s_next);
  if (z.rows() != a.rows() || z.cols() != a.cols()) throw std::invalid_argument("td3_target: noise shape mismatch");
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double eps = std::clamp(opt.target_noise_std * z(i, j), -opt.target_noise_clip, opt.target_noise_clip);
      a(i, j) = std::clamp(a(i, j) + eps, -1.0, 1.0);
    }
  const Vector v = q_values(q1t, s_next, a).cwiseMin(q_values(q2t, s_next, a));
  return detail::bootstrap(r, done, discount, v);
}

inline Vector td3_target(const Mlp& q1t, const Mlp& q2t, const DeterministicActor& actor_t, const Matrix& s_next,
                         const Vector& r, const Vector& done, double discount, const Td3Options& opt,
                         RandomStream& rng) {
  const Matrix z = detail::standard_normal(static_cast<Eigen::Index>(actor_t.action_dim()), s_next.cols(), rng);
  return td3_target_from_noise(q1t, q2t, actor_t, s_next, r, done, discount, opt, z);
}

/// r + gamma (1 - done) (min(Q1', Q2')(s', a') - alpha log pi(a'|s')), a' from the policy with noise eps.
inline Vector sac_target_from_noise(const Mlp& q1t, const Mlp& q2t, const GaussianActor& actor, const Matrix& s_next,
                                    const Vector& r, const Vector& done, double discount, double alpha,
                                    const Matrix& eps) {
  const GaussianSample smp = actor.sample_with_noise(s_next, eps);
  Vector v = q_values(q1t, s_next, smp.a).cwiseMin(q_values(q2t, s_next, smp.a));
  if (alpha != 0.0) v -= alpha * smp.log_prob;
  return detail::bootstrap(r, done, discount, v);
}

inline Vector sac_target(const Mlp& q1t, const Mlp& q2t, const GaussianActor& actor, const Matrix& s_next,
                         const Vector& r, const Vector& done, double discount, double alpha, RandomStream& rng) {
  const Matrix eps = detail::standard_normal(static_cast<Eigen::Index>(actor.action_dim()), s_next.cols(), rng);
  return sac_target_from_noise(q1t, q2t, actor, s_next, r, done, discount, alpha, eps);
}

/// Max over the first k noise draws of min(Q1', Q2')(s', a'_i). Using a
/// prefix of one fixed draw list makes the target monotone in k.
inline Vector maxbackup_target_from_noise(const Mlp& q1t, const Mlp& q2t, const GaussianActor& actor,
                                          const Matrix& s_next, const Vector& r, const Vector& done, double discount,
                                          const std::vector<Matrix>& eps, std::size_t k) {
  if (k == 0 || k > eps.size()) throw std::invalid_argument("maxbackup_target: need 1 <= k <= number of draws");
  Vector best = Vector::Constant(s_next.cols(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < k; ++i) {
    const GaussianSample smp = actor.sample_with_noise(s_next, eps[i]);
    best = best.cwiseMax(q_values(q1t, s_next, smp.a).cwiseMin(q_values(q2t, s_next, smp.a)));
  }
  return detail::bootstrap(r, done, discount, best);
}

inline Vector maxbackup_target(const Mlp& q1t, const Mlp& q2t, const GaussianActor& actor, const Matrix& s_next,
                               const Vector& r, const Vector& done, double discount, std::size_t n_samples,
                               RandomStream& rng) {
  std::vector<Matrix> eps;
  for (std::size_t i = 0; i < n_samples; ++i)
    eps.push_back(detail::standard_normal(static_cast<Eigen::Index>(actor.action_dim()), s_next.cols(), rng));
  return maxbackup_target_from_noise(q1t, q2t, actor, s_next, r, done, discount, eps, n_samples);
}

/// Deterministic policy gradient: loss -mean Q1(s, mu(s)). Returns the loss
/// and writes its parameter gradient.
inline double td3_actor_gradient(const DeterministicActor& actor, const Mlp& q1, const Matrix& s,
                                 std::span<double> grad) {
  ForwardCache cache;
  const Matrix a = actor.act(s, cache);
  const auto qa = CriticFn{&q1}(s, a);
  const double inv_n = 1.0 / static_cast<double>(s.cols());
  actor.backward(cache, a, -qa.dq_da * inv_n, grad);
  return -qa.q.mean();
}

/// Reparameterized SAC actor loss mean(alpha log pi(a|s) - min(Q1, Q2)(s, a))
/// on the frozen noise `eps`. Returns the loss and writes its gradient.
inline double sac_actor_gradient(const GaussianActor& actor, const Mlp& q1, const Mlp& q2, const Matrix& s,
                                 const Matrix& eps, double alpha, std::span<double> grad) {
  const GaussianSample smp = actor.sample_with_noise(s, eps);
  const auto r1 = CriticFn{&q1}(s, smp.a);
  const auto r2 = CriticFn{&q2}(s, smp.a);
  const Eigen::Index n = s.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix grad_a(smp.a.rows(), n);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool first = r1.q(j) <= r2.q(j);
    grad_a.col(j) = -(first ? r1.dq_da.col(j) : r2.dq_da.col(j)) * inv_n;
    loss += alpha * smp.log_prob(j) - (first ? r1.q(j) : r2.q(j));
  }
  actor.backward(smp, grad_a, Vector::Constant(n, alpha * inv_n), grad);
  return loss * inv_n;
}

// ---------------------------------------------------------------------------
// Agent

struct UpdateStats {
  double critic_loss = 0.0;
  bool actor_updated = false;
};

/// Twin critics with EMA targets plus either a deterministic (TD3) or a
/// squashed-Gaussian (SAC, max-backup) actor.
class ContinuousAgent {
 public:
  ContinuousAgent(std::size_t state_dim, std::size_t action_dim, AgentConfig cfg, RandomStream& init_rng)
      : cfg_(std::move(cfg)), sdim_(state_dim), adim_(action_dim) {
    cfg_.validate();
    q1_ = Mlp::with_hidden(state_dim + action_dim, cfg_.hidden, 1);
    q2_ = Mlp::with_hidden(state_dim + action_dim, cfg_.hidden, 1);
    q1_.init(init_rng);
    q2_.init(init_rng);
    if (cfg_.algo == Algo::aq_td3) {
      det_ = DeterministicActor(state_dim, action_dim, cfg_.hidden);
      det_.net().init(init_rng);
      det_target_ = det_;
    } else {
      const auto& s = cfg_.sac();
      gauss_ = GaussianActor(state_dim, action_dim, cfg_.hidden, s.log_std_min, s.log_std_max);
      gauss_.net().init(init_rng);
    }
    q1_target_ = TargetTracker(q1_, cfg_.ema_coeff);
    q2_target_ = TargetTracker(q2_, cfg_.ema_coeff);
    AdamOptions ao;
    ao.learning_rate = cfg_.learning_rate;
    q1_opt_ = Adam(q1_.num_params(), ao);
    q2_opt_ = Adam(q2_.num_params(), ao);
    actor_opt_ = Adam(actor_net().num_params(), ao);
  }

  const AgentConfig& config() const noexcept { return cfg_; }
  bool stochastic() const noexcept { return cfg_.algo != Algo::aq_td3; }
  std::size_t state_dim() const noexcept { return sdim_; }
  std::size_t action_dim() const noexcept { return adim_; }
  std::size_t updates() const noexcept { return updates_; }

  const Mlp& q1() const noexcept { return q1_; }
  const Mlp& q2() const noexcept { return q2_; }
  const Mlp& q1_target() const noexcept { return q1_target_.net(); }
  const Mlp& q2_target() const noexcept { return q2_target_.net(); }
  const Mlp& actor_net() const noexcept { return stochastic() ? gauss_.net() : det_.net(); }
  const GaussianActor& gaussian_actor() const {
    if (!stochastic()) throw std::logic_error("ContinuousAgent: TD3 has no Gaussian actor");
    return gauss_;
  }
  const DeterministicActor& deterministic_actor() const {
    if (stochastic()) throw std::logic_error("ContinuousAgent: not a TD3 agent");
    return det_;
  }
  const DeterministicActor& deterministic_actor_target() const {
    if (stochastic()) throw std::logic_error("ContinuousAgent: not a TD3 agent");
    return det_target_;
  }

  /// Action used while collecting data.
  Vector explore_action(const Vector& s, RandomStream& rng) const {
    if (stochastic()) return gauss_.sample(s, rng).a.col(0);
    const auto& t = std::get<Td3Options>(cfg_.options);
    Vector a = det_.act(s).col(0);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::clamp(a(i) + t.exploration_std * rng.normal(), -1.0, 1.0);
    return a;
  }

  /// Noise-free action used for evaluation.
  Vector eval_action(const Vector& s) const {
    return stochastic() ? Vector(gauss_.mean_action(s).col(0)) : Vector(det_.act(s).col(0));
  }

  /// Action a probe rollout follows: a policy sample for SAC, mu(s) for TD3.
  Vector policy_action(const Vector& s, RandomStream& rng) const {
    return stochastic() ? Vector(gauss_.sample(s, rng).a.col(0)) : Vector(det_.act(s).col(0));
  }

  double min_q(const Vector& s, const Vector& a) const {
    return std::min(q_values(q1_, s, a)(0), q_values(q2_, s, a)(0));
  }

  /// One gradient step on both critics, then the actor and target updates.
  UpdateStats update(const Batch& b, double tau, RandomStream& rng) {
    const auto n = static_cast<Eigen::Index>(b.size());
    Vector y;
    switch (cfg_.algo) {
      case Algo::aq_td3: {
        const auto& t = std::get<Td3Options>(cfg_.options);
        y = td3_target(q1_target_.net(), q2_target_.net(), det_target_, b.s_next, b.r, b.done, cfg_.discount, t, rng);
        break;
      }
      case Algo::aq_sac:
        y = sac_target(q1_target_.net(), q2_target_.net(), gauss_, b.s_next, b.r, b.done, cfg_.discount,
                       cfg_.sac().entropy_alpha, rng);
        break;
      case Algo::maxbackup_sac:
        y = maxbackup_target(q1_target_.net(), q2_target_.net(), gauss_, b.s_next, b.r, b.done, cfg_.discount,
                             std::get<MaxBackupOptions>(cfg_.options).n_samples, rng);
        break;
    }

    grad_.assign(q1_.num_params(), 0.0);
    const double l1 = critic_loss(q1_, b.s, b.a, y, tau, cfg_.critic_loss, grad_);
    q1_opt_.step(q1_.params(), grad_);
    const double l2 = critic_loss(q2_, b.s, b.a, y, tau, cfg_.critic_loss, grad_);
    q2_opt_.step(q2_.params(), grad_);
    ++updates_;

    UpdateStats st;
    st.critic_loss = 0.5 * (l1 + l2);
    grad_.assign(actor_net().num_params(), 0.0);
    if (cfg_.algo == Algo::aq_td3) {
      const auto& t = std::get<Td3Options>(cfg_.options);
      if (updates_ % t.policy_delay == 0) {
        td3_actor_gradient(det_, q1_, b.s, grad_);
        actor_opt_.step(det_.net().params(), grad_);
        ema_blend(det_target_.net(), det_.net(), cfg_.ema_coeff);
        q1_target_.update(q1_);
        q2_target_.update(q2_);
        st.actor_updated = true;
      }
    } else {
      const Matrix eps = detail::standard_normal(static_cast<Eigen::Index>(adim_), n, rng);
      sac_actor_gradient(gauss_, q1_, q2_, b.s, eps, cfg_.sac().entropy_alpha, grad_);
      actor_opt_.step(gauss_.net().params(), grad_);
      q1_target_.update(q1_);
      q2_target_.update(q2_);
      st.actor_updated = true;
    }
    return st;
  }

  void save_checkpoint(std::ostream& os) const {
    std::vector<std::pair<std::string, const Mlp*>> nets{{"q1", &q1_},
                                                         {"q2", &q2_},
                                                         {"q1_target", &q1_target_.net()},
                                                         {"q2_target", &q2_target_.net()},
                                                         {"actor", &actor_net()}};
    if (!stochastic()) nets.emplace_back("actor_target", &det_target_.net());
    write_checkpoint(os, nets);
  }

  /// Restores network parameters (optimizer moments are not stored).
  void load_checkpoint(std::istream& is) {
    auto nets = read_checkpoint(is);
    auto take = [&](const std::string& name, Mlp& dst) {
      auto it = nets.find(name);
      if (it == nets.end()) throw std::runtime_error("load_checkpoint: missing network '" + name + "'");
      if (it->second.layer_sizes() != dst.layer_sizes())
        throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
      dst = it->second;
    };
    take("q1", q1_);
    take("q2", q2_);
    take("q1_target", q1_target_.net());
    take("q2_target", q2_target_.net());
    take("actor", stochastic() ? gauss_.net() : det_.net());
    if (!stochastic()) take("actor_target", det_target_.net());
  }

 private:
  AgentConfig cfg_;
  std::size_t sdim_, adim_;
  Mlp q1_, q2_;
  TargetTracker q1_target_, q2_target_;
  DeterministicActor det_, det_target_;
  GaussianActor gauss_;
  Adam q1_opt_, q2_opt_, actor_opt_;
  std::size_t updates_ = 0;
  std::vector<double> grad_;
};

// ---------------------------------------------------------------------------
// Probes

struct BiasEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Mean of min(Q1, Q2)(s0, a0) minus the discounted Monte-Carlo return of
/// following the policy from (s0, a0), over the first state-action pair of
/// n_rollouts fresh episodes. Returns the mean and its standard error.
inline BiasEstimate bias_probe(const ContinuousAgent& agent, const ToyEnvSpec& env_spec, std::size_t n_rollouts,
                               RandomStream& rng) {
  if (n_rollouts == 0) throw std::invalid_argument("bias_probe: n_rollouts must be positive");
  const double gamma = agent.config().discount;
  std::vector<double> diffs;
  diffs.reserve(n_rollouts);
  for (std::size_t k = 0; k < n_rollouts; ++k) {
    ToyEnv env(env_spec);
    Vector s = env.reset(rng);
    Vector a = agent.policy_action(s, rng);
    const double q = agent.min_q(s, a);
    double ret = 0.0, disc = 1.0;
    for (;;) {
      const EnvStep st = env.step(a, rng);
      ret += disc * st.reward;
      disc *= gamma;
      if (st.terminal || st.truncated) break;
      s = st.next_state;
      a = agent.policy_action(s, rng);
    }
    diffs.push_back(q - ret);
  }
  BiasEstimate out;
  out.n = diffs.size();
  double sum = 0.0;
  for (double d : diffs) sum += d;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double d : diffs) ss += (d - out.mean) * (d - out.mean);
    out.stderr_ = std::sqrt(ss / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
  }
  return out;
}

/// Mean differential entropy of the squashed policy over the probe states:
/// the Gaussian entropy plus a sampled E[log(1 - tanh(u)^2)] correction.
inline double entropy_probe(const GaussianActor& actor, const Matrix& states, RandomStream& rng,
                            std::size_t n_samples = 64) {
  if (states.cols() == 0) throw std::invalid_argument("entropy_probe: no probe states");
  if (n_samples == 0) throw std::invalid_argument("entropy_probe: n_samples must be positive");
  const Matrix log_std = actor.log_std(states);
  double total = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const GaussianSample smp = actor.sample(states, rng);
    for (Eigen::Index j = 0; j < states.cols(); ++j)
      for (Eigen::Index i = 0; i < smp.u.rows(); ++i) total += log1m_tanh_sq(smp.u(i, j));
  }
  double h = total / static_cast<double>(n_samples);
  for (Eigen::Index j = 0; j < log_std.cols(); ++j)
    for (Eigen::Index i = 0; i < log_std.rows(); ++i) h += gaussian_entropy(log_std(i, j));
  return h / static_cast<double>(states.cols());
}

inline double entropy_probe(const ContinuousAgent& agent, const Matrix& states, RandomStream& rng,
                            std::size_t n_samples = 64) {
  if (!agent.stochastic()) throw std::logic_error("entropy_probe: policy is deterministic");
  return entropy_probe(agent.gaussian_actor(), states, rng, n_samples);
}

/// Mean undiscounted return of noise-free policy rollouts.
inline double evaluate_policy(const ContinuousAgent& agent, const ToyEnvSpec& env_spec, std::size_t episodes,
                              RandomStream& rng) {
  if (episodes == 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  double total = 0.0;
  for (std::size_t k = 0; k < episodes; ++k) {
    ToyEnv env(env_spec);
    Vector s = env.reset(rng);
    for (;;) {
      const EnvStep st = env.step(agent.eval_action(s), rng);
      total += st.reward;
      if (st.terminal || st.truncated) break;
      s = st.next_state;
    }
  }
  return total / static_cast<double>(episodes);
}

// ---------------------------------------------------------------------------
// Training loop

struct ContinuousRunConfig {
  std::size_t total_steps = 50000;
  std::uint64_t seed = 0;
  std::size_t log_every = 1000;
  std::size_t eval_episodes = 10;
  std::size_t probe_rollouts = 32;
  std::size_t entropy_samples = 64;
};

struct ContinuousLogRow {
  std::size_t step = 0;
  double eval_return = 0.0;
  double tau = 0.0;
  double critic_loss = 0.0;  ///< mean over updates since the previous row; NaN if none
  double bias = 0.0;
  double bias_se = 0.0;
  double entropy = 0.0;  ///< NaN for a deterministic policy
};

struct ContinuousRunMetrics {
  std::vector<ContinuousLogRow> rows;
  std::vector<double> tau_trace;  ///< tau applied at every environment step
};

/// Called after each agent update with the environment step index.
using UpdateHook = std::function<void(std::size_t, const ContinuousAgent&)>;

/// Off-policy loop: act, store, sample, update with tau = schedule(t), log.
/// Separate RNG streams drive initialization, the environment, action
/// noise, updates, evaluation and probes, so logging never perturbs training.
inline ContinuousRunMetrics train_continuous(const ToyEnvSpec& env_spec, const AgentConfig& cfg,
                                             const ContinuousRunConfig& run, const UpdateHook& hook = {}) {
  if (run.total_steps == 0) throw std::invalid_argument("train_continuous: total_steps must be positive");
  if (run.log_every == 0) throw std::invalid_argument("train_continuous: log_every must be positive");
  ToyEnv env(env_spec);
  RandomStream init_rng(derive_seed(run.seed, 1, 0));
  RandomStream env_rng(derive_seed(run.seed, 2, 0));
  RandomStream act_rng(derive_seed(run.seed, 3, 0));
  RandomStream update_rng(derive_seed(run.seed, 4, 0));
  RandomStream eval_rng(derive_seed(run.seed, 5, 0));
  RandomStream probe_rng(derive_seed(run.seed, 6, 0));

  ContinuousAgent agent(env.state_dim(), env.action_dim(), cfg, init_rng);
  ReplayBuffer buffer(cfg.buffer_capacity);
  ContinuousRunMetrics out;
  out.tau_trace.reserve(run.total_steps);

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  auto log_row = [&](std::size_t step, double tau) {
    ContinuousLogRow row;
    row.step = step;
    row.tau = tau;
    row.eval_return = evaluate_policy(agent, env_spec, run.eval_episodes, eval_rng);
    row.critic_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : std::numeric_limits<double>::quiet_NaN();
    const BiasEstimate b = bias_probe(agent, env_spec, run.probe_rollouts, probe_rng);
    row.bias = b.mean;
    row.bias_se = b.stderr_;
    if (agent.stochastic()) {
      Matrix states(env.state_dim(), static_cast<Eigen::Index>(run.probe_rollouts));
      for (Eigen::Index j = 0; j < states.cols(); ++j) {
        ToyEnv probe_env(env_spec);
        states.col(j) = probe_env.reset(probe_rng);
      }
      row.entropy = entropy_probe(agent, states, probe_rng, run.entropy_samples);
    } else {
      row.entropy = std::numeric_limits<double>::quiet_NaN();
    }
    out.rows.push_back(row);
    loss_sum = 0.0;
    loss_count = 0;
  };

  const auto& sched = cfg.tau_schedule;
  log_row(0, schedule_value_clamped(sched, 0.0));
  Vector s = env.reset(env_rng);
  for (std::size_t t = 0; t < run.total_steps; ++t) {
    const double tau = schedule_value_clamped(sched, static_cast<double>(t));
    out.tau_trace.push_back(tau);
    Vector a(env.action_dim());
    if (t < cfg.warmup_steps) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = act_rng.uniform(-1.0, 1.0);
    } else {
      a = agent.explore_action(s, act_rng);
    }
    const EnvStep st = env.step(a, env_rng);
    buffer.add({s, a, st.reward, st.next_state, st.terminal});
    s = (st.terminal || st.truncated) ? env.reset(env_rng) : st.next_state;

    if (t + 1 >= cfg.warmup_steps && buffer.size() >= cfg.batch_size) {
      const Batch b = buffer.sample(cfg.batch_size, update_rng);
      const UpdateStats us = agent.update(b, tau, update_rng);
      loss_sum += us.critic_loss;
      ++loss_count;
      if (hook) hook(t, agent);
    }
    const std::size_t done_steps = t + 1;
    if (done_steps % run.log_every == 0 || done_steps == run.total_steps) log_row(done_steps, tau);
  }
  return out;
}

}  // namespace aql
