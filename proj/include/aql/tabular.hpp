#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aql/expectile.hpp"
#include "aql/mdp.hpp"
#include "aql/rng.hpp"

namespace aql {

enum class TargetVariant { sarsa, qlearning, annealed_weight, expectile_tabular };

inline std::string_view to_string(TargetVariant v) {
  switch (v) {
    case TargetVariant::sarsa: return "sarsa";
    case TargetVariant::qlearning: return "qlearning";
    case TargetVariant::annealed_weight: return "annealed_weight";
    case TargetVariant::expectile_tabular: return "expectile_tabular";
  }
  return "?";
}

inline TargetVariant target_variant_from_string(std::string_view s) {
  if (s == "sarsa") return TargetVariant::sarsa;
  if (s == "qlearning") return TargetVariant::qlearning;
  if (s == "annealed_weight" || s == "annealed") return TargetVariant::annealed_weight;
  if (s == "expectile_tabular" || s == "expectile") return TargetVariant::expectile_tabular;
  throw std::invalid_argument("unknown target variant '" + std::string(s) + "'");
}

/// Gaussian perturbation of successor action values, applied only while
/// forming targets.
struct NoiseSpec {
  double sigma = 0.0;
  bool enabled = false;

  static NoiseSpec gaussian(double sigma) { return {sigma, sigma > 0.0}; }
  void validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("NoiseSpec: sigma must be >= 0");
  }
};

/// Critic target rule. annealed_weight takes w(t) from the schedule's
/// weight profile; expectile_tabular takes tau(t) from its values.
struct TargetRule {
  TargetVariant variant = TargetVariant::sarsa;
  std::optional<TauSchedule> schedule;

  void validate() const {
    if (variant == TargetVariant::annealed_weight || variant == TargetVariant::expectile_tabular) {
      if (!schedule) throw std::invalid_argument("TargetRule: " + std::string(to_string(variant)) + " needs a schedule");
      schedule->validate();
    }
    if (variant == TargetVariant::expectile_tabular) {
      if (!(schedule->min_value() >= 0.5 && schedule->max_value() < 1.0))
        throw std::invalid_argument("TargetRule: expectile_tabular needs tau values in [0.5, 1)");
    }
  }
};

/// Q-table and softmax policy logits, both initialised to zero.
class TabularAgent {
 public:
  TabularAgent(std::size_t n_states, std::size_t n_actions, double step_size = 1e-3, double epsilon = 0.1)
      : n_states_(n_states),
        n_actions_(n_actions),
        step_size_(step_size),
        epsilon_(epsilon),
        q_(n_states * n_actions, 0.0),
        logits_(n_states * n_actions, 0.0) {
    if (n_states == 0 || n_actions == 0) throw std::invalid_argument("TabularAgent: empty state or action set");
    if (!(step_size > 0.0)) throw std::invalid_argument("TabularAgent: step_size must be positive");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("TabularAgent: epsilon must lie in [0, 1]");
  }

  explicit TabularAgent(const TabularMdp& mdp, double step_size = 1e-3, double epsilon = 0.1)
      : TabularAgent(mdp.n_states(), mdp.n_actions(), step_size, epsilon) {}

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double step_size() const noexcept { return step_size_; }
  double epsilon() const noexcept { return epsilon_; }

  double q(std::size_t s, std::size_t a) const { return q_.at(index(s, a)); }
  double& q(std::size_t s, std::size_t a) { return q_.at(index(s, a)); }
  double logit(std::size_t s, std::size_t a) const { return logits_.at(index(s, a)); }
  double& logit(std::size_t s, std::size_t a) { return logits_.at(index(s, a)); }
  const std::vector<double>& q_table() const noexcept { return q_; }
  const std::vector<double>& logit_table() const noexcept { return logits_; }

  /// Softmax of the logit row, max-shifted for stability.
  std::vector<double> policy_probs(std::size_t s) const {
    std::vector<double> p(n_actions_);
    const double* row = &logits_.at(index(s, 0));
    const double top = *std::max_element(row, row + n_actions_);
    double total = 0.0;
    for (std::size_t a = 0; a < n_actions_; ++a) total += (p[a] = std::exp(row[a] - top));
    for (double& x : p) x /= total;
    return p;
  }

  /// Full policy table (row-major), usable with exact_policy_q.
  std::vector<double> policy_table() const {
    std::vector<double> out;
    out.reserve(q_.size());
    for (std::size_t s = 0; s < n_states_; ++s) {
      auto row = policy_probs(s);
      out.insert(out.end(), row.begin(), row.end());
    }
    return out;
  }

  /// Uniform random action with probability epsilon, else a softmax sample.
  std::size_t select_action(std::size_t s, RandomStream& rng) const {
    if (epsilon_ > 0.0 && rng.uniform() < epsilon_) return rng.index(n_actions_);
    const auto p = policy_probs(s);
    return rng.categorical(p);
  }

  void update_critic(std::size_t s, std::size_t a, double target) {
    double& v = q(s, a);
    v += step_size_ * (target - v);
  }

  /// Expectile-weighted step: Q += alpha * 2 |tau - 1(u < 0)| u.
  void update_critic_expectile(std::size_t s, std::size_t a, double sampled_target, double tau) {
    if (!(tau >= 0.5 && tau < 1.0)) throw std::invalid_argument("update_critic_expectile: tau must lie in [0.5, 1)");
    double& v = q(s, a);
    v += step_size_ * expectile_loss_grad(tau, sampled_target - v);
  }

  /// Single-sample policy gradient on the logits of state s:
  /// theta_{s,b} += alpha (delta_{ab} - pi(b|s)) q_sa.
  void update_actor(std::size_t s, std::size_t a, double q_sa) {
    const auto p = policy_probs(s);
    for (std::size_t b = 0; b < n_actions_; ++b) logit(s, b) += step_size_ * ((a == b ? 1.0 : 0.0) - p[b]) * q_sa;
  }

  void update_actor(std::size_t s, std::size_t a) { update_actor(s, a, q(s, a)); }

 private:
  std::size_t index(std::size_t s, std::size_t a) const {
    if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("TabularAgent: (s, a) out of range");
    return s * n_actions_ + a;
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  double step_size_;
  double epsilon_;
  std::vector<double> q_;
  std::vector<double> logits_;
};

/// Bootstrapped critic target for one transition at timestep t.
///
/// With noise enabled, one N(0, sigma^2) draw is taken per successor action
/// and shared by both halves of the annealed_weight target. Terminal
/// transitions return r and draw nothing.
inline double compute_target(const TargetRule& rule, const TabularAgent& agent, double discount, const Step& tr,
                             const NoiseSpec& noise, RandomStream& rng, double t) {
  if (tr.done) return tr.reward;
  const std::size_t nA = agent.n_actions();
  std::vector<double> next_q(nA);
  for (std::size_t b = 0; b < nA; ++b) {
    next_q[b] = agent.q(tr.next_state, b);
    if (noise.enabled && noise.sigma > 0.0) next_q[b] += noise.sigma * rng.normal();
  }
  const auto pi = agent.policy_probs(tr.next_state);
  auto sarsa = [&] {
    double v = 0.0;
    for (std::size_t b = 0; b < nA; ++b) v += pi[b] * next_q[b];
    return tr.reward + discount * v;
  };
  auto qlearning = [&] { return tr.reward + discount * *std::max_element(next_q.begin(), next_q.end()); };

  switch (rule.variant) {
    case TargetVariant::sarsa: return sarsa();
    case TargetVariant::qlearning: return qlearning();
    case TargetVariant::annealed_weight: {
      if (!rule.schedule) throw std::invalid_argument("compute_target: annealed_weight needs a schedule");
      const double w = weight_clamped(*rule.schedule, t);
      return w * qlearning() + (1.0 - w) * sarsa();
    }
    case TargetVariant::expectile_tabular: {
      const std::size_t b = rng.categorical(pi);
      return tr.reward + discount * next_q[b];
    }
  }
  throw std::invalid_argument("compute_target: unknown variant");
}

/// Settings of one tabular training run.
struct TabularRunConfig {
  std::size_t steps = 100000;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  double step_size = 1e-3;
  double epsilon = 0.1;
  std::size_t max_episode_len = 100;
  /// State/action pairs whose Q-values are traced.
  std::size_t trace_state = 0;
};

struct TabularLogRow {
  std::size_t step = 0;
  double q0 = 0.0;  ///< Q(trace_state, a0)
  double q1 = 0.0;  ///< Q(trace_state, a1), NaN with a single action
  double episode_return = std::numeric_limits<double>::quiet_NaN();
};

struct TabularRunMetrics {
  std::vector<TabularLogRow> rows;
  TabularAgent agent;

  std::vector<double> q0_trace() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.q0);
    return out;
  }
};

/// Online actor-critic training: one critic and one actor update per
/// environment step. The actor uses the Q-value from before the critic step.
/// Row 0 records the untrained agent; rows follow every `log_every` steps and
/// after the final step.
inline TabularRunMetrics train_tabular(const TabularMdp& mdp, const TargetRule& rule, const NoiseSpec& noise,
                                       const TabularRunConfig& cfg) {
  rule.validate();
  noise.validate();
  if (cfg.log_every == 0) throw std::invalid_argument("train_tabular: log_every must be positive");
  {
    double live = 0.0;
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
      if (!mdp.is_terminal(s)) live += mdp.initial_dist()[s];
    if (!(live > 0.0)) throw std::invalid_argument("train_tabular: initial distribution has no nonterminal mass");
  }
  TabularAgent agent(mdp, cfg.step_size, cfg.epsilon);
  RandomStream env_rng(derive_seed(cfg.seed, 1, 0));
  RandomStream act_rng(derive_seed(cfg.seed, 2, 0));
  RandomStream noise_rng(derive_seed(cfg.seed, 3, 0));

  const std::size_t traced = cfg.trace_state;
  auto snapshot = [&](std::size_t step, double ret) {
    TabularLogRow row;
    row.step = step;
    row.q0 = agent.q(traced, 0);
    row.q1 = mdp.n_actions() > 1 ? agent.q(traced, 1) : std::numeric_limits<double>::quiet_NaN();
    row.episode_return = ret;
    return row;
  };

  TabularRunMetrics out{{}, agent};
  out.rows.push_back(snapshot(0, std::numeric_limits<double>::quiet_NaN()));

  double last_return = std::numeric_limits<double>::quiet_NaN();
  double running_return = 0.0, discount_pow = 1.0;
  std::size_t episode_len = 0;
  std::size_t s = sample_initial_state(mdp, env_rng);
  while (mdp.is_terminal(s)) s = sample_initial_state(mdp, env_rng);

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const std::size_t a = agent.select_action(s, act_rng);
    const Outcome& o = mdp.sample(s, a, env_rng);
    const Step tr{s, a, o.reward, o.next, mdp.is_terminal(o.next)};
    running_return += discount_pow * o.reward;
    discount_pow *= mdp.discount();
    ++episode_len;

    const double target = compute_target(rule, agent, mdp.discount(), tr, noise, noise_rng, static_cast<double>(t));
    const double q_before = agent.q(s, a);
    if (rule.variant == TargetVariant::expectile_tabular)
      agent.update_critic_expectile(s, a, target, schedule_value_clamped(*rule.schedule, static_cast<double>(t)));
    else
      agent.update_critic(s, a, target);
    agent.update_actor(s, a, q_before);

    if (tr.done || episode_len >= cfg.max_episode_len) {
      last_return = running_return;
      running_return = 0.0;
      discount_pow = 1.0;
      episode_len = 0;
      s = sample_initial_state(mdp, env_rng);
      while (mdp.is_terminal(s)) s = sample_initial_state(mdp, env_rng);
    } else {
      s = o.next;
    }

    const std::size_t done_steps = t + 1;
    if (done_steps % cfg.log_every == 0 || done_steps == cfg.steps) out.rows.push_back(snapshot(done_steps, last_return));
  }
  out.agent = agent;
  return out;
}

}  // namespace aql
