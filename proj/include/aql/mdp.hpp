#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aql/rng.hpp"

namespace aql {

/// Raised when an iterative solver exhausts its iteration budget.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, std::size_t iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

/// One possible successor of a state-action pair.
struct Outcome {
  std::size_t next = 0;
  double prob = 0.0;
  double reward = 0.0;
};

/// Finite MDP with tabular transitions and rewards.
///
/// Rewards are attached to outcomes; reward(s, a) is the expected reward
/// of taking `a` in `s`. Terminal states have no outgoing transitions and
/// a value of zero. Immutable after construction.
class TabularMdp {
 public:
  using OutcomeTable = std::vector<std::vector<std::vector<Outcome>>>;

  TabularMdp(std::size_t n_states, std::size_t n_actions, OutcomeTable outcomes,
             std::vector<bool> terminal, double discount, std::vector<double> initial_dist)
      : n_states_(n_states),
        n_actions_(n_actions),
        outcomes_(std::move(outcomes)),
        terminal_(std::move(terminal)),
        discount_(discount),
        initial_(std::move(initial_dist)) {
    validate();
    expected_reward_.assign(n_states_ * n_actions_, 0.0);
    for (std::size_t s = 0; s < n_states_; ++s)
      for (std::size_t a = 0; a < n_actions_; ++a)
        for (const auto& o : outcomes_[s][a]) expected_reward_[s * n_actions_ + a] += o.prob * o.reward;
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double discount() const noexcept { return discount_; }
  bool is_terminal(std::size_t s) const { return terminal_.at(s); }
  const std::vector<Outcome>& outcomes(std::size_t s, std::size_t a) const { return outcomes_.at(s).at(a); }
  const std::vector<double>& initial_dist() const noexcept { return initial_; }
  double reward(std::size_t s, std::size_t a) const { return expected_reward_.at(s * n_actions_ + a); }

  /// Samples a successor of (s, a).
  const Outcome& sample(std::size_t s, std::size_t a, RandomStream& rng) const {
    const auto& row = outcomes(s, a);
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& o : row) {
      acc += o.prob;
      if (u < acc) return o;
    }
    return row.back();
  }

 private:
  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("TabularMdp: " + msg); };
    if (n_states_ == 0) fail("no states");
    if (n_actions_ == 0) fail("no actions");
    if (!(discount_ >= 0.0 && discount_ < 1.0)) fail("discount must lie in [0, 1)");
    if (outcomes_.size() != n_states_) fail("transition table has wrong number of states");
    if (terminal_.size() != n_states_) fail("terminal mask has wrong size");
    if (initial_.size() != n_states_) fail("initial distribution has wrong size");
    check_distribution(initial_, "initial distribution");
    for (std::size_t s = 0; s < n_states_; ++s) {
      if (outcomes_[s].size() != n_actions_) fail("state " + std::to_string(s) + " has wrong number of actions");
      for (std::size_t a = 0; a < n_actions_; ++a) {
        const auto& row = outcomes_[s][a];
        if (terminal_[s]) {
          if (!row.empty()) fail("terminal state " + std::to_string(s) + " has outgoing transitions");
          continue;
        }
        if (row.empty()) fail("nonterminal state " + std::to_string(s) + " has no successors for action " + std::to_string(a));
        double total = 0.0;
        for (const auto& o : row) {
          if (o.next >= n_states_) fail("successor index out of range");
          if (!(o.prob >= 0.0)) fail("negative transition probability");
          if (!std::isfinite(o.reward)) fail("non-finite reward");
          total += o.prob;
        }
        if (std::abs(total - 1.0) > 1e-12) {
          std::ostringstream os;
          os << "transition row (" << s << ", " << a << ") sums to " << total;
          fail(os.str());
        }
      }
    }
  }

  static void check_distribution(const std::vector<double>& p, const std::string& what) {
    double total = 0.0;
    for (double x : p) {
      if (!(x >= 0.0)) throw std::invalid_argument("TabularMdp: negative mass in " + what);
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("TabularMdp: " + what + " does not sum to 1");
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  OutcomeTable outcomes_;
  std::vector<bool> terminal_;
  double discount_;
  std::vector<double> initial_;
  std::vector<double> expected_reward_;
};

/// Rewards of the five-state chain. r1/r2 are earned on reaching s1/s2,
/// r3/r4 on reaching the terminals s3/s4.
struct ChainMdpParams {
  double r1 = 1.0;
  double r2 = 0.5;
  double r3 = 0.5;
  double r4 = 0.0;
  double discount = 0.9;
};

/// s0 --a0--> s1, s0 --a1--> s2; s1 and s2 --a0--> s3, --a1--> s4.
/// Episodes start uniformly in {s0, s1, s2}.
inline TabularMdp build_chain_mdp(const ChainMdpParams& p) {
  constexpr std::size_t kStates = 5, kActions = 2;
  TabularMdp::OutcomeTable t(kStates, std::vector<std::vector<Outcome>>(kActions));
  t[0][0] = {{1, 1.0, p.r1}};
  t[0][1] = {{2, 1.0, p.r2}};
  for (std::size_t s : {1u, 2u}) {
    t[s][0] = {{3, 1.0, p.r3}};
    t[s][1] = {{4, 1.0, p.r4}};
  }
  std::vector<bool> terminal{false, false, false, true, true};
  const double third = 1.0 / 3.0;
  std::vector<double> init{third, third, 1.0 - 2.0 * third, 0.0, 0.0};
  return TabularMdp(kStates, kActions, std::move(t), std::move(terminal), p.discount, std::move(init));
}

/// Action-value and state-value tables, flat row-major over (s, a).
struct ValueTable {
  std::size_t n_actions = 0;
  std::vector<double> q;
  std::vector<double> v;
  double residual = 0.0;
  std::size_t iterations = 0;
  /// Sup-norm residual of every sweep, in order.
  std::vector<double> residual_history;

  double operator()(std::size_t s, std::size_t a) const { return q.at(s * n_actions + a); }
};

namespace detail {

template <class NextValue>
double backup(const TabularMdp& mdp, std::size_t s, std::size_t a, NextValue&& next_value) {
  double total = 0.0;
  for (const auto& o : mdp.outcomes(s, a)) total += o.prob * (o.reward + mdp.discount() * next_value(o.next));
  return total;
}

// Jacobi iteration of `op` until the sup-norm change drops to `tol`.
template <class Operator>
ValueTable iterate_q(const TabularMdp& mdp, double tol, std::size_t max_iters, Operator&& op, const char* name) {
  if (!(tol > 0.0)) throw std::invalid_argument(std::string(name) + ": tol must be positive");
  const std::size_t nS = mdp.n_states(), nA = mdp.n_actions();
  ValueTable out;
  out.n_actions = nA;
  out.q.assign(nS * nA, 0.0);
  std::vector<double> next(nS * nA, 0.0);
  for (std::size_t it = 1; it <= max_iters; ++it) {
    double residual = 0.0;
    for (std::size_t s = 0; s < nS; ++s) {
      for (std::size_t a = 0; a < nA; ++a) {
        const std::size_t i = s * nA + a;
        next[i] = mdp.is_terminal(s) ? 0.0 : op(out.q, s, a);
        residual = std::max(residual, std::abs(next[i] - out.q[i]));
      }
    }
    out.q.swap(next);
    out.residual_history.push_back(residual);
    out.residual = residual;
    out.iterations = it;
    if (residual <= tol) {
      out.v.assign(nS, 0.0);
      for (std::size_t s = 0; s < nS; ++s) {
        if (mdp.is_terminal(s)) continue;
        out.v[s] = *std::max_element(out.q.begin() + s * nA, out.q.begin() + (s + 1) * nA);
      }
      return out;
    }
  }
  std::ostringstream os;
  os << name << ": no convergence after " << max_iters << " iterations (residual " << out.residual << ")";
  throw ConvergenceError(os.str(), out.residual, max_iters);
}

}  // namespace detail

/// Optimal action values by value iteration. The returned table satisfies
/// ||T*Q - Q||_inf <= tol.
inline ValueTable value_iteration(const TabularMdp& mdp, double tol = 1e-12, std::size_t max_iters = 100000) {
  const std::size_t nA = mdp.n_actions();
  return detail::iterate_q(
      mdp, tol, max_iters,
      [&](const std::vector<double>& q, std::size_t s, std::size_t a) {
        return detail::backup(mdp, s, a, [&](std::size_t sn) {
          if (mdp.is_terminal(sn)) return 0.0;
          return *std::max_element(q.begin() + sn * nA, q.begin() + (sn + 1) * nA);
        });
      },
      "value_iteration");
}

/// Q^pi for a stochastic policy given as a row-major [state][action] table.
/// Rows of terminal states are ignored.
inline ValueTable exact_policy_q(const TabularMdp& mdp, const std::vector<double>& policy, double tol = 1e-12,
                                 std::size_t max_iters = 100000) {
  const std::size_t nS = mdp.n_states(), nA = mdp.n_actions();
  if (policy.size() != nS * nA) throw std::invalid_argument("exact_policy_q: policy table has wrong size");
  for (std::size_t s = 0; s < nS; ++s) {
    if (mdp.is_terminal(s)) continue;
    double total = 0.0;
    for (std::size_t a = 0; a < nA; ++a) {
      if (!(policy[s * nA + a] >= 0.0)) throw std::invalid_argument("exact_policy_q: negative probability");
      total += policy[s * nA + a];
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("exact_policy_q: policy row does not sum to 1");
  }
  ValueTable out = detail::iterate_q(
      mdp, tol, max_iters,
      [&](const std::vector<double>& q, std::size_t s, std::size_t a) {
        return detail::backup(mdp, s, a, [&](std::size_t sn) {
          if (mdp.is_terminal(sn)) return 0.0;
          double v = 0.0;
          for (std::size_t b = 0; b < nA; ++b) v += policy[sn * nA + b] * q[sn * nA + b];
          return v;
        });
      },
      "exact_policy_q");
  for (std::size_t s = 0; s < nS; ++s) {
    if (mdp.is_terminal(s)) continue;
    double v = 0.0;
    for (std::size_t a = 0; a < nA; ++a) v += policy[s * nA + a] * out.q[s * nA + a];
    out.v[s] = v;
  }
  return out;
}

/// Greedy deterministic policy table for a value table (ties to the lowest action).
inline std::vector<double> greedy_policy(const TabularMdp& mdp, const ValueTable& values) {
  const std::size_t nS = mdp.n_states(), nA = mdp.n_actions();
  std::vector<double> pi(nS * nA, 0.0);
  for (std::size_t s = 0; s < nS; ++s) {
    auto first = values.q.begin() + s * nA;
    pi[s * nA + static_cast<std::size_t>(std::max_element(first, first + nA) - first)] = 1.0;
  }
  return pi;
}

struct Step {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
  bool done = false;
};

using Trajectory = std::vector<Step>;
using ActionSelector = std::function<std::size_t(std::size_t, RandomStream&)>;

inline std::size_t sample_initial_state(const TabularMdp& mdp, RandomStream& rng) {
  return rng.categorical(mdp.initial_dist());
}

/// Rolls out one episode starting in `start`. Stops at a terminal state or
/// after `max_len` steps.
inline Trajectory run_episode_from(const TabularMdp& mdp, std::size_t start, const ActionSelector& policy,
                                   RandomStream& rng, std::size_t max_len = 100) {
  if (start >= mdp.n_states()) throw std::out_of_range("run_episode: start state out of range");
  Trajectory traj;
  std::size_t s = start;
  while (!mdp.is_terminal(s) && traj.size() < max_len) {
    const std::size_t a = policy(s, rng);
    if (a >= mdp.n_actions()) throw std::out_of_range("run_episode: policy returned an invalid action");
    const Outcome& o = mdp.sample(s, a, rng);
    traj.push_back({s, a, o.reward, o.next, mdp.is_terminal(o.next)});
    s = o.next;
  }
  return traj;
}

/// Rolls out one episode from a state drawn from the initial distribution.
inline Trajectory run_episode(const TabularMdp& mdp, const ActionSelector& policy, RandomStream& rng,
                              std::size_t max_len = 100) {
  const std::size_t start = sample_initial_state(mdp, rng);
  return run_episode_from(mdp, start, policy, rng, max_len);
}

}  // namespace aql
