// Acceptance runner. Each criterion prints one PASS/FAIL line followed by
// the numbers it was judged on. Exit status is nonzero if any criterion
// fails, unless that criterion was named with --allow-fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aql/aql.hpp"
#include "oracles.hpp"

using namespace aql;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSeeds = 20;

std::ostringstream detail_log;

template <class... A>
void note(const char* fmt, A... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  detail_log << "    " << buf << "\n";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static const fs::path d = [] {
    fs::path p = fs::temp_directory_path() / "aql_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::vector<MetricTable> load_cell(const fs::path& dir, const std::string& cell, std::size_t n) {
  std::vector<MetricTable> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(read_csv(dir / cell / ("seed_" + std::to_string(k) + ".csv")));
  return out;
}

std::size_t row_at_step(const MetricTable& t, double step) {
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    if (t.rows[i][0] == step) return i;
  throw std::runtime_error("no logged row at step " + std::to_string(step));
}

std::vector<double> at_row(const std::vector<MetricTable>& runs, const std::string& metric, std::size_t row) {
  std::vector<double> v;
  for (const auto& t : runs) v.push_back(t.rows.at(row)[t.column(metric)]);
  return v;
}

// ---------------------------------------------------------------------------
// chain MDP sweep shared by criteria 1, 2 and 10

constexpr std::size_t kChainSteps = 150000;

std::string chain_cell(const std::string& variant, double sigma) {
  return variant + (sigma == 0.0 ? "_sigma0" : "_sigma0.3");
}

Json chain_sweep_json() {
  Json j = Json::parse(R"({
    "name": "chain_acceptance",
    "kind": "tabular",
    "master_seed": 2024,
    "total_steps": 150000,
    "log_every": 500,
    "base": {
      "mdp": {"type": "chain", "r1": 1.0, "r2": 0.5, "r3": 0.5, "r4": 0.0, "discount": 0.9},
      "target": {"variant": "qlearning"},
      "noise": {"sigma": 0.0},
      "agent": {"step_size": 0.001, "epsilon": 0.1}
    },
    "cells": []
  })");
  j["seeds"] = kSeeds;
  for (const char* variant : {"sarsa", "qlearning", "annealed_weight"})
    for (double sigma : {0.0, 0.3}) {
      Json target = {{"variant", variant}};
      if (std::string(variant) == "annealed_weight")
        target["schedule"] = {{"kind", "linear"}, {"tau_init", 1.0}, {"tau_final", 0.0}, {"horizon", kChainSteps}};
      j["cells"].push_back({{"name", chain_cell(variant, sigma)}, {"set", {{"target", target}, {"noise.sigma", sigma}}}});
    }
  return j;
}

const fs::path& chain_dir() {
  static const fs::path d = [] {
    const auto cfg = parse_sweep_config(chain_sweep_json());
    const fs::path out = work_dir() / "chain";
    const auto res = run_sweep(cfg, out);
    if (!res.failures.empty()) throw std::runtime_error("chain sweep had failed runs: " + res.failures[0].error);
    return out;
  }();
  return d;
}

double chain_q_star() { return value_iteration(build_chain_mdp({1.0, 0.5, 0.5, 0.0, 0.9}))(0, 0); }

// steps_to_band per seed; a run that never settles counts as the full budget
std::vector<double> band_steps(const std::vector<MetricTable>& runs, double q_star, std::size_t* never) {
  std::vector<double> out;
  *never = 0;
  for (const auto& t : runs) {
    std::vector<std::size_t> steps;
    for (const auto& r : t.rows) steps.push_back(static_cast<std::size_t>(r[0]));
    const auto s = steps_to_band(steps, t.series("q0"), q_star, 0.05 * q_star);
    if (!s) ++*never;
    out.push_back(s ? static_cast<double>(*s) : static_cast<double>(kChainSteps));
  }
  return out;
}

// late phase: last 20% of logged rows, averaged per seed
std::vector<double> late_means(const std::vector<MetricTable>& runs) {
  std::vector<double> out;
  for (const auto& t : runs) {
    const auto q = t.series("q0");
    const std::size_t from = q.size() - q.size() / 5;
    double s = 0;
    for (std::size_t i = from; i < q.size(); ++i) s += q[i];
    out.push_back(s / static_cast<double>(q.size() - from));
  }
  return out;
}

bool criterion1() {
  const double qs = chain_q_star();
  std::size_t nq, ns;
  const auto q = band_steps(load_cell(chain_dir(), chain_cell("qlearning", 0.0), kSeeds), qs, &nq);
  const auto s = band_steps(load_cell(chain_dir(), chain_cell("sarsa", 0.0), kSeeds), qs, &ns);
  const auto ciq = bootstrap_ci(q), cis = bootstrap_ci(s);
  note("Q* = %.6f, band = %.6f, seeds = %zu", qs, 0.05 * qs, kSeeds);
  note("qlearning steps_to_band mean %.1f CI [%.1f, %.1f] never %zu", mean(q), ciq.lower, ciq.upper, nq);
  note("sarsa     steps_to_band mean %.1f CI [%.1f, %.1f] never %zu", mean(s), cis.lower, cis.upper, ns);
  return nq == 0 && mean(q) < mean(s) && ciq.upper < cis.lower;
}

bool criterion2() {
  const double qs = chain_q_star(), band = 0.05 * qs;
  const auto ql = late_means(load_cell(chain_dir(), chain_cell("qlearning", 0.3), kSeeds));
  const auto sa_runs = load_cell(chain_dir(), chain_cell("sarsa", 0.3), kSeeds);
  const auto an_runs = load_cell(chain_dir(), chain_cell("annealed_weight", 0.3), kSeeds);
  const auto sa = late_means(sa_runs), an = late_means(an_runs);
  std::size_t ns, na;
  const auto bs = band_steps(sa_runs, qs, &ns), ba = band_steps(an_runs, qs, &na);
  const double excess = mean(ql) - qs, se = standard_error(ql);
  note("qlearning late mean %.5f, excess %.5f = %.1f SE", mean(ql), excess, excess / se);
  note("sarsa     late mean %.5f (|diff| %.5f, band %.5f)", mean(sa), std::abs(mean(sa) - qs), band);
  note("annealed  late mean %.5f (|diff| %.5f, band %.5f)", mean(an), std::abs(mean(an) - qs), band);
  note("steps_to_band annealed %.1f (never %zu) vs sarsa %.1f (never %zu)", mean(ba), na, mean(bs), ns);
  return excess > 3.0 * se && std::abs(mean(sa) - qs) <= band && std::abs(mean(an) - qs) <= band && mean(ba) < mean(bs);
}

bool criterion3() {
  TabularAgent agent(2, 2);
  const TargetRule rule{TargetVariant::qlearning, std::nullopt};
  const Step step{0, 0, 0.0, 1, false};
  const auto noise = NoiseSpec::gaussian(0.3);
  RandomStream rng(derive_seed(7, 3, 0));
  const int n = 1000000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += compute_target(rule, agent, 0.9, step, noise, rng, 0.0);
  const double mc = sum / n, exact = 0.9 * oracle::max_of_two_gaussians_mean(0.3);
  note("Monte-Carlo %.6f vs closed form %.6f (diff %.2e)", mc, exact, std::abs(mc - exact));
  return std::abs(mc - exact) <= 1e-3;
}

bool criterion4() {
  bool ok = true;
  const std::vector<double> two{0.0, 1.0};
  ok &= sample_expectile(two, 0.5) == 0.5;
  const double e9 = sample_expectile(two, 0.9);
  ok &= std::abs(e9 - 0.9) <= 1e-9;
  note("expectile({0,1}, 0.5) = %.17g, expectile({0,1}, 0.9) = %.17g", sample_expectile(two, 0.5), e9);
  RandomStream r(404);
  int mono_bad = 0, equi_bad = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> d(1 + r.index(25));
    for (auto& x : d) x = r.normal(0.0, 4.0);
    double prev = -1e300;
    for (double tau = 0.02; tau < 0.99; tau += 0.06) {
      const double e = sample_expectile(d, tau);
      if (e < prev) ++mono_bad;
      prev = e;
    }
    const double tau = r.uniform(0.05, 0.95), c = r.normal(0.0, 10.0), k = r.uniform(0.1, 10.0);
    const double base = sample_expectile(d, tau);
    std::vector<double> sh = d, sc = d;
    for (auto& x : sh) x += c;
    for (auto& x : sc) x *= k;
    const double e1 = std::abs(sample_expectile(sh, tau) - (base + c));
    const double e2 = std::abs(sample_expectile(sc, tau) - k * base) / std::max(1.0, std::abs(k * base));
    worst = std::max({worst, e1, e2});
    if (e1 > 1e-9 || e2 > 1e-9) ++equi_bad;
  }
  note("1000 datasets: monotonicity violations %d, equivariance violations %d (worst %.2e)", mono_bad, equi_bad, worst);
  return ok && mono_bad == 0 && equi_bad == 0;
}

Mlp random_net(std::vector<std::size_t> sizes, std::uint64_t seed) {
  Mlp net(std::move(sizes));
  RandomStream r(seed);
  net.init(r);
  for (std::size_t l = 0; l < net.num_layers(); ++l)
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias_mut(l)(i) = r.uniform(-0.1, 0.1);
  return net;
}

Matrix randn(Eigen::Index rows, Eigen::Index cols, RandomStream& r) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = r.normal();
  return m;
}

bool criterion5() {
  bool ok = true;
  auto report = [&](const char* what, bool good, double worst) {
    note("%-28s %s (worst relative error past the 1e-6 absolute floor %.2e)", what, good ? "ok" : "MISMATCH", worst);
    ok &= good;
  };
  {
    RandomStream r(1);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      const double tau = r.uniform(0.01, 0.99);
      double u = r.normal(0.0, 2.0);
      if (std::abs(u) < 1e-3) u = 0.25;
      const double h = 1e-6;
      const double fd = (expectile_loss(tau, u + h) - expectile_loss(tau, u - h)) / (2 * h);
      worst = std::max(worst, std::abs(expectile_loss_grad(tau, u) - fd) / std::max(1e-6, std::abs(fd)));
    }
    report("expectile loss", worst <= 1e-4, worst);
  }
  {
    double worst_all = 0;
    bool good = true;
    for (std::size_t hidden : {8u, 32u, 64u}) {
      Mlp net = random_net({3, hidden, hidden, 2}, 100 + hidden);
      RandomStream r(hidden);
      const Matrix x = randn(3, 4, r), g = randn(2, 4, r);
      auto f = [&] { return net.forward(x).cwiseProduct(g).sum(); };
      ForwardCache cache;
      net.forward(x, cache);
      std::vector<double> grad(net.num_params());
      net.backward(cache, g, grad);
      double worst = 0;
      good &= oracle::grad_close(grad, oracle::fd_gradient(f, net.params().data(), net.num_params()), 1e-4, 1e-6, &worst);
      worst_all = std::max(worst_all, worst);
    }
    report("MLP backward", good, worst_all);
  }
  {
    double worst_all = 0;
    bool good = true;
    for (double tau : {0.5, 0.7, 0.9}) {
      Mlp q = random_net({3, 64, 64, 1}, 200);
      RandomStream r(201);
      const Matrix s = randn(2, 8, r), a = randn(1, 8, r);
      const Vector y = randn(8, 1, r);
      std::vector<double> g(q.num_params()), scratch(q.num_params());
      critic_loss(q, s, a, y, tau, CriticLoss::expectile, g);
      auto f = [&] { return critic_loss(q, s, a, y, tau, CriticLoss::expectile, scratch); };
      double worst = 0;
      good &= oracle::grad_close(g, oracle::fd_gradient(f, q.params().data(), q.num_params()), 1e-4, 1e-6, &worst);
      worst_all = std::max(worst_all, worst);
    }
    report("expectile critic loss", good, worst_all);
  }
  {
    DeterministicActor actor(3, 2, {64, 64});
    actor.net() = random_net({3, 64, 64, 2}, 300);
    const Mlp q = random_net({5, 64, 64, 1}, 301);
    RandomStream r(302);
    const Matrix s = randn(3, 6, r);
    std::vector<double> g(actor.net().num_params()), scratch(g.size());
    td3_actor_gradient(actor, q, s, g);
    auto f = [&] { return td3_actor_gradient(actor, q, s, scratch); };
    double worst = 0;
    const bool good = oracle::grad_close(g, oracle::fd_gradient(f, actor.net().params().data(), g.size()), 1e-4, 1e-6, &worst);
    report("deterministic actor", good, worst);
  }
  {
    double worst_all = 0;
    bool good = true;
    for (double alpha : {0.0, 0.2}) {
      GaussianActor actor(3, 2, {64, 64});
      actor.net() = random_net({3, 64, 64, 4}, 400);
      const Mlp q1 = random_net({5, 64, 1}, 401), q2 = random_net({5, 64, 1}, 402);
      RandomStream r(403);
      const Matrix s = randn(3, 6, r), eps = randn(2, 6, r);
      std::vector<double> g(actor.net().num_params()), scratch(g.size());
      sac_actor_gradient(actor, q1, q2, s, eps, alpha, g);
      auto f = [&] { return sac_actor_gradient(actor, q1, q2, s, eps, alpha, scratch); };
      double worst = 0;
      good &= oracle::grad_close(g, oracle::fd_gradient(f, actor.net().params().data(), g.size()), 1e-4, 1e-6, &worst);
      worst_all = std::max(worst_all, worst);
    }
    report("squashed Gaussian actor", good, worst_all);
  }
  return ok;
}

bool criterion6() {
  bool ok = true;
  const double T = 3e6, init = 0.9;
  TauSchedule lin{ScheduleKind::linear, init, 0.5, T, 5.0};
  auto with = [&](ScheduleKind k) {
    TauSchedule s = lin;
    s.kind = k;
    return s;
  };
  const TauSchedule e1 = with(ScheduleKind::exp1), e2 = with(ScheduleKind::exp2), sg = with(ScheduleKind::sigmoid);
  for (const auto& s : {lin, e1, e2, sg}) ok &= schedule_value(s, 0.0) == init && schedule_value(s, T) == 0.5;
  const double mid = schedule_value(lin, T / 2);
  ok &= std::abs(mid - (init + 0.5) / 2) <= 1e-15;
  int order_bad = 0, mono_bad = 0;
  double prev[4] = {1, 1, 1, 1};
  for (int i = 0; i <= 10000; ++i) {
    const double t = T * i / 10000.0;
    const double v[4] = {schedule_value(lin, t), schedule_value(e1, t), schedule_value(e2, t), schedule_value(sg, t)};
    if (i > 0 && i < 10000 && !(v[1] <= v[0] && v[0] <= v[2])) ++order_bad;
    for (int k = 0; k < 4; ++k) {
      if (v[k] > prev[k]) ++mono_bad;
      prev[k] = v[k];
    }
  }
  note("endpoints exact for all kinds: %s; linear midpoint %.17g", ok ? "yes" : "no", mid);
  note("ordering violations %d, monotonicity violations %d over 10001 points", order_bad, mono_bad);
  return ok && order_bad == 0 && mono_bad == 0;
}

bool criterion7() {
  bool ok = true;
  for (Algo algo : {Algo::aq_sac, Algo::aq_td3}) {
    AgentConfig ex;
    ex.algo = algo;
    if (algo == Algo::aq_td3)
      ex.options = Td3Options{};
    else
      ex.options = SacOptions{};
    ex.tau_schedule = TauSchedule::constant(0.5);
    ex.hidden = {64, 64};
    ex.batch_size = 32;
    ex.warmup_steps = 100;
    AgentConfig sq = ex;
    sq.critic_loss = CriticLoss::squared;
    ContinuousRunConfig run;
    run.total_steps = 1000;
    run.log_every = 250;
    run.eval_episodes = 4;
    run.probe_rollouts = 8;
    run.entropy_samples = 8;
    run.seed = 77;
    std::vector<std::vector<double>> pa, pb;
    auto record = [](std::vector<std::vector<double>>& out) {
      return [&out](std::size_t, const ContinuousAgent& ag) {
        std::vector<double> v(ag.q1().params().begin(), ag.q1().params().end());
        v.insert(v.end(), ag.q2().params().begin(), ag.q2().params().end());
        v.insert(v.end(), ag.actor_net().params().begin(), ag.actor_net().params().end());
        out.push_back(std::move(v));
      };
    };
    ToyEnvSpec env;
    env.action_noise_std = 0.1;
    const auto ma = train_continuous(env, ex, run, record(pa));
    const auto mb = train_continuous(env, sq, run, record(pb));
    std::size_t first_diff = pa.size();
    for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i)
      if (pa[i] != pb[i]) {
        first_diff = i;
        break;
      }
    bool same = pa.size() == pb.size() && first_diff == pa.size() && !pa.empty();
    for (std::size_t i = 0; same && i < ma.rows.size(); ++i) same = ma.rows[i].eval_return == mb.rows[i].eval_return;
    note("%s: %zu parameter snapshots compared, %s", std::string(to_string(algo)).c_str(), pa.size(),
         same ? "bit-identical" : "DIVERGED");
    ok &= same;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// two-peak bandit sweep shared by criteria 8 and 9

constexpr std::size_t kBanditSteps = 3000, kBanditWarmup = 500, kBanditLogEvery = 300;

Json bandit_sweep_json() {
  Json j = Json::parse(R"({
    "name": "bandit_acceptance",
    "kind": "continuous",
    "master_seed": 2024,
    "total_steps": 3000,
    "log_every": 300,
    "base": {
      "env": {"kind": "two_peak_bandit", "action_noise_std": 0.1},
      "agent": {
        "algo": "aq_sac",
        "critic_loss": "expectile",
        "hidden": [64, 64],
        "batch_size": 64,
        "learning_rate": 0.0003,
        "warmup_steps": 500,
        "sac": {"entropy_alpha": 0.03}
      },
      "eval": {"episodes": 50, "probe_rollouts": 64, "entropy_samples": 64}
    },
    "cells": [
      {"name": "tau0.5", "set": {"agent.tau_schedule": {"kind": "constant", "tau_init": 0.5}}},
      {"name": "tau0.7", "set": {"agent.tau_schedule": {"kind": "constant", "tau_init": 0.7}}},
      {"name": "tau0.9", "set": {"agent.tau_schedule": {"kind": "constant", "tau_init": 0.9}}},
      {"name": "annealed", "set": {"agent.tau_schedule":
        {"kind": "linear", "tau_init": 0.9, "tau_final": 0.5, "horizon": 1800}}}
    ]
  })");
  j["seeds"] = kSeeds;
  return j;
}

const fs::path& bandit_dir() {
  static const fs::path d = [] {
    const auto cfg = parse_sweep_config(bandit_sweep_json());
    const fs::path out = work_dir() / "bandit";
    const auto res = run_sweep(cfg, out);
    if (!res.failures.empty()) throw std::runtime_error("bandit sweep had failed runs: " + res.failures[0].error);
    return out;
  }();
  return d;
}

std::string fmt_ci(const std::vector<double>& v) {
  const auto ci = bootstrap_ci(v);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.4f (SE %.4f, CI [%.4f, %.4f])", mean(v), standard_error(v), ci.lower, ci.upper);
  return buf;
}

bool criterion8() {
  const auto ann = load_cell(bandit_dir(), "annealed", kSeeds), c05 = load_cell(bandit_dir(), "tau0.5", kSeeds);
  const std::size_t last = ann.front().rows.size() - 1;
  const auto ra = at_row(ann, "eval_return", last), rc = at_row(c05, "eval_return", last);
  const auto ba = at_row(ann, "bias", last), bc = at_row(c05, "bias", last);
  note("final eval return: annealed %s", fmt_ci(ra).c_str());
  note("                   tau=0.5   %s", fmt_ci(rc).c_str());
  note("final bias probe:  annealed %s", fmt_ci(ba).c_str());
  note("                   tau=0.5   %s", fmt_ci(bc).c_str());
  note("|bias difference| %.4f vs 2 SE(tau=0.5) %.4f", std::abs(mean(ba) - mean(bc)), 2 * standard_error(bc));
  return mean(ra) >= mean(rc) && std::abs(mean(ba) - mean(bc)) <= 2.0 * standard_error(bc);
}

bool criterion9() {
  const MetricTable t0 = load_cell(bandit_dir(), "tau0.5", 1).front();
  // early: first logged row after warm-up; mid: half of the step budget
  std::size_t early = 0;
  while (t0.rows.at(early)[0] <= static_cast<double>(kBanditWarmup)) ++early;
  const std::size_t mid = row_at_step(t0, kBanditSteps / 2);
  note("early row at step %.0f, mid row at step %.0f", t0.rows[early][0], t0.rows[mid][0]);
  std::vector<double> bias_means, ent_means;
  for (const char* cell : {"tau0.9", "tau0.7", "tau0.5"}) {
    const auto runs = load_cell(bandit_dir(), cell, kSeeds);
    const auto b = at_row(runs, "bias", mid), h = at_row(runs, "entropy", early);
    note("%s mid bias %s", cell, fmt_ci(b).c_str());
    note("%s early entropy %s", cell, fmt_ci(h).c_str());
    bias_means.push_back(mean(b));
    ent_means.push_back(mean(h));
  }
  const bool bias_ok = bias_means[0] >= bias_means[1] && bias_means[1] >= bias_means[2];
  const bool ent_ok = ent_means[0] >= ent_means[1] && ent_means[1] >= ent_means[2];
  note("bias ordering 0.9 >= 0.7 >= 0.5: %s; entropy ordering 0.9 >= 0.7 >= 0.5: %s", bias_ok ? "holds" : "violated",
       ent_ok ? "holds" : "violated");
  return bias_ok && ent_ok;
}

bool criterion10() {
  std::vector<double> v(10);
  for (int i = 0; i < 10; ++i) v[i] = i + 1;
  const double q = iqm(v);
  note("iqm({1..10}) = %.17g (replication oracle %.17g)", q, oracle::iqm_replicate4(v));
  RandomStream r(1010);
  double width = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(100);
    for (auto& e : x) e = r.normal();
    width += bootstrap_ci(x, 2000, 0.95, Statistic::mean, static_cast<std::uint64_t>(t)).width();
  }
  width /= trials;
  const double clt = 2.0 * 1.959963984540054 / 10.0;
  note("mean bootstrap width %.4f vs CLT %.4f (rel diff %.3f)", width, clt, std::abs(width - clt) / clt);

  const auto cfg = parse_sweep_config(chain_sweep_json());
  const fs::path again = work_dir() / "chain_rerun";
  run_sweep(cfg, again);
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(chain_dir())) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    ++files;
    const fs::path other = again / fs::relative(e.path(), chain_dir());
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
  }
  note("rerun of the chain sweep: %zu metric files compared, %zu differ", files, differ);
  return q == 5.5 && std::abs(width - clt) <= 0.25 * clt && files == cfg.cells.size() * kSeeds && differ == 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> allowed;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--allow-fail" && i + 1 < argc)
      allowed.insert(std::atoi(argv[++i]));
    else if (a == "--only" && i + 1 < argc)
      only.insert(std::atoi(argv[++i]));
    else {
      std::cerr << "usage: acceptance [--only N]... [--allow-fail N]...\n";
      return 2;
    }
  }

  const std::vector<std::pair<const char*, std::function<bool()>>> criteria{
      {"noiseless speed ordering (qlearning before sarsa)", criterion1},
      {"bias ordering under target noise", criterion2},
      {"max-of-two-Gaussians overestimation", criterion3},
      {"expectile oracle suite", criterion4},
      {"gradient checks", criterion5},
      {"tau schedule properties", criterion6},
      {"base-algorithm equivalence at tau=0.5", criterion7},
      {"annealed vs constant tau on two-peak bandit", criterion8},
      {"bias and entropy ordering in fixed tau", criterion9},
      {"harness statistics and reproducibility", criterion10},
  };

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    detail_log.str("");
    try {
      pass = criteria[i].second();
    } catch (const std::exception& e) {
      note("error: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("CRITERION %d: %s  %s (%.1fs)%s\n", id, pass ? "PASS" : "FAIL", criteria[i].first, secs,
                !pass && allowed.count(id) ? "  [known failure]" : "");
    std::fputs(detail_log.str().c_str(), stdout);
    std::fflush(stdout);
    if (!pass && !allowed.count(id)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
