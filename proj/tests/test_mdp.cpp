#include <gtest/gtest.h>

#include <cmath>

#include "aql/mdp.hpp"
#include "oracles.hpp"

using namespace aql;

namespace {

ChainMdpParams equal_tail() { return {1.0, 0.5, 0.5, 0.5, 0.9}; }

void expect_matches(const ValueTable& vt, const Eigen::MatrixXd& ref, double tol) {
  for (Eigen::Index s = 0; s < ref.rows(); ++s)
    for (Eigen::Index a = 0; a < ref.cols(); ++a) EXPECT_NEAR(vt(s, a), ref(s, a), tol) << "s=" << s << " a=" << a;
}

}  // namespace

TEST(ChainMdp, Structure) {
  const auto m = build_chain_mdp(equal_tail());
  EXPECT_EQ(m.n_states(), 5u);
  EXPECT_EQ(m.n_actions(), 2u);
  EXPECT_DOUBLE_EQ(m.discount(), 0.9);
  EXPECT_TRUE(m.is_terminal(3));
  EXPECT_TRUE(m.is_terminal(4));
  EXPECT_FALSE(m.is_terminal(0));
  EXPECT_EQ(m.outcomes(0, 0).at(0).next, 1u);
  EXPECT_EQ(m.outcomes(0, 1).at(0).next, 2u);
  EXPECT_DOUBLE_EQ(m.reward(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.reward(0, 1), 0.5);
  for (std::size_t s : {1u, 2u}) {
    EXPECT_EQ(m.outcomes(s, 0).at(0).next, 3u);
    EXPECT_EQ(m.outcomes(s, 1).at(0).next, 4u);
    EXPECT_DOUBLE_EQ(m.reward(s, 0), 0.5);
    EXPECT_DOUBLE_EQ(m.reward(s, 1), 0.5);
  }
}

TEST(ChainMdp, NegativeArm) {
  const auto m = build_chain_mdp({0.25, -0.25, 0.5, 0.0, 0.9});
  EXPECT_DOUBLE_EQ(m.reward(0, 1), -0.25);
  const auto vt = value_iteration(m);
  expect_matches(vt, oracle::brute_force_q_star(oracle::chain(0.25, -0.25, 0.5, 0.0, 0.9)), 1e-10);
}

TEST(ChainMdp, RowsNormalized) {
  const auto m = build_chain_mdp(equal_tail());
  for (std::size_t s = 0; s < 5; ++s) {
    if (m.is_terminal(s)) continue;
    for (std::size_t a = 0; a < 2; ++a) {
      double p = 0.0;
      for (const auto& o : m.outcomes(s, a)) p += o.prob;
      EXPECT_NEAR(p, 1.0, 1e-12);
    }
  }
}

TEST(TabularMdpCtor, RejectsBadRows) {
  TabularMdp::OutcomeTable t(2, std::vector<std::vector<Outcome>>(1));
  t[0][0] = {{1, 0.7, 0.0}};
  EXPECT_THROW(TabularMdp(2, 1, t, {false, true}, 0.9, {1.0, 0.0}), std::invalid_argument);
  t[0][0] = {{1, 1.0, 0.0}};
  EXPECT_NO_THROW(TabularMdp(2, 1, t, {false, true}, 0.9, {1.0, 0.0}));
  EXPECT_THROW(TabularMdp(2, 1, t, {false, true}, 1.5, {1.0, 0.0}), std::invalid_argument);
}

TEST(ValueIteration, ChainQStar) {
  const auto vt = value_iteration(build_chain_mdp(equal_tail()));
  EXPECT_NEAR(vt(0, 0), 1.45, 1e-10);
  EXPECT_NEAR(vt(0, 1), 0.95, 1e-10);
  EXPECT_LE(vt.residual, 1e-12);
}

TEST(ValueIteration, MatchesBruteForce) {
  for (const auto& p : {equal_tail(), ChainMdpParams{}, ChainMdpParams{0.3, 0.9, -1.0, 2.0, 0.7}}) {
    const auto vt = value_iteration(build_chain_mdp(p));
    expect_matches(vt, oracle::brute_force_q_star(oracle::chain(p.r1, p.r2, p.r3, p.r4, p.discount)), 1e-10);
  }
}

TEST(ValueIteration, ZeroRewardIsZero) {
  const auto vt = value_iteration(build_chain_mdp({0, 0, 0, 0, 0.9}));
  for (double q : vt.q) EXPECT_EQ(q, 0.0);
}

TEST(ValueIteration, MyopicEqualsReward) {
  const auto m = build_chain_mdp({1.0, 0.5, 0.3, 0.7, 0.0});
  const auto vt = value_iteration(m);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(vt(s, a), m.reward(s, a));
}

TEST(ValueIteration, ResidualsNonincreasing) {
  // a cyclic MDP so that iteration takes many sweeps
  TabularMdp::OutcomeTable t(3, std::vector<std::vector<Outcome>>(2));
  t[0][0] = {{1, 0.5, 1.0}, {0, 0.5, 0.0}};
  t[0][1] = {{2, 1.0, 0.2}};
  t[1][0] = {{0, 1.0, 0.5}};
  t[1][1] = {{2, 0.3, 1.0}, {1, 0.7, -0.1}};
  const TabularMdp m(3, 2, t, {false, false, true}, 0.95, {1.0, 0.0, 0.0});
  const auto vt = value_iteration(m, 1e-10);
  ASSERT_GT(vt.residual_history.size(), 10u);
  for (std::size_t i = 2; i < vt.residual_history.size(); ++i)
    EXPECT_LE(vt.residual_history[i], vt.residual_history[i - 1] + 1e-15);
  EXPECT_LE(vt.residual, 1e-10);
}

TEST(ValueIteration, NonConvergenceReported) {
  const auto m = build_chain_mdp(equal_tail());
  try {
    (void)value_iteration(m, 1e-12, 1);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(PolicyEvaluation, UniformOnEqualTail) {
  const auto m = build_chain_mdp(equal_tail());
  const std::vector<double> uniform(10, 0.5);
  const auto vt = exact_policy_q(m, uniform);
  EXPECT_NEAR(vt(0, 0), 1.45, 1e-10);
  const auto ref = oracle::policy_q(oracle::chain(1, 0.5, 0.5, 0.5, 0.9), std::vector<std::vector<double>>(5, {0.5, 0.5}));
  expect_matches(vt, ref, 1e-10);
}

TEST(PolicyEvaluation, GreedyOptimalEqualsQStar) {
  const auto m = build_chain_mdp(ChainMdpParams{});
  const auto star = value_iteration(m);
  const auto vt = exact_policy_q(m, greedy_policy(m, star));
  for (std::size_t i = 0; i < star.q.size(); ++i) EXPECT_NEAR(vt.q[i], star.q[i], 1e-10);
}

TEST(PolicyEvaluation, BoundedByQStar) {
  const auto m = build_chain_mdp(ChainMdpParams{});
  const auto star = value_iteration(m);
  RandomStream rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pi(10);
    for (std::size_t s = 0; s < 5; ++s) {
      const double p = rng.uniform();
      pi[2 * s] = p;
      pi[2 * s + 1] = 1.0 - p;
    }
    const auto vt = exact_policy_q(m, pi);
    for (std::size_t i = 0; i < vt.q.size(); ++i) EXPECT_LE(vt.q[i], star.q[i] + 1e-12);
  }
}

TEST(PolicyEvaluation, MyopicEqualsReward) {
  const auto m = build_chain_mdp({1.0, 0.5, 0.3, 0.7, 0.0});
  const auto vt = exact_policy_q(m, std::vector<double>(10, 0.5));
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(vt(s, a), m.reward(s, a));
}

TEST(PolicyEvaluation, RejectsBadPolicy) {
  const auto m = build_chain_mdp(ChainMdpParams{});
  EXPECT_THROW(exact_policy_q(m, std::vector<double>(10, 0.3)), std::invalid_argument);
  EXPECT_THROW(exact_policy_q(m, std::vector<double>(4, 0.5)), std::invalid_argument);
}

TEST(Episode, DeterministicA0) {
  const auto m = build_chain_mdp(equal_tail());
  RandomStream rng(0);
  const auto traj = run_episode_from(m, 0, [](std::size_t, RandomStream&) { return std::size_t{0}; }, rng);
  ASSERT_EQ(traj.size(), 2u);
  EXPECT_EQ(traj[0].state, 0u);
  EXPECT_EQ(traj[0].next_state, 1u);
  EXPECT_DOUBLE_EQ(traj[0].reward, 1.0);
  EXPECT_FALSE(traj[0].done);
  EXPECT_EQ(traj[1].state, 1u);
  EXPECT_EQ(traj[1].next_state, 3u);
  EXPECT_DOUBLE_EQ(traj[1].reward, 0.5);
  EXPECT_TRUE(traj[1].done);
}

TEST(Episode, MaxLenOne) {
  const auto m = build_chain_mdp(equal_tail());
  RandomStream rng(0);
  const auto traj = run_episode_from(m, 0, [](std::size_t, RandomStream&) { return std::size_t{1}; }, rng, 1);
  EXPECT_EQ(traj.size(), 1u);
}

TEST(Episode, SeedDeterminism) {
  const auto m = build_chain_mdp(equal_tail());
  auto pol = [](std::size_t, RandomStream& r) { return r.index(2); };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomStream a(seed), b(seed);
    const auto ta = run_episode(m, pol, a), tb = run_episode(m, pol, b);
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
      EXPECT_EQ(ta[i].state, tb[i].state);
      EXPECT_EQ(ta[i].action, tb[i].action);
    }
  }
}
