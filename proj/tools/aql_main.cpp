// Command-line front end: run sweeps, aggregate results, emit plot data and
// query the reference oracles.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aql/aql.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRunFailure = 2;

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw aql::ValidationError(what, "not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annealed expectile Q-learning experiments"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run every (cell, seed) pair of a sweep config");
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out_dir;
  run->add_option("config", config_file, "Sweep config (JSON)")->required();
  run->add_option("--seed", seed, "Master seed, overrides the config");
  run->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory (default: config 'out' or runs/<name>)");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Recompute aggregate.json files for a sweep directory");
  std::string agg_dir, agg_stat = "mean";
  agg->add_option("dir", agg_dir, "Sweep output directory")->required();
  agg->add_option("--statistic", agg_stat, "CI statistic")->check(CLI::IsMember({"mean", "iqm"}));

  // plotdata
  auto* plot = app.add_subcommand("plotdata", "Emit tidy CSV series for plotting");
  std::string plot_dir, series, mode = "long", plot_stat = "mean", plot_out;
  plot->add_option("dir", plot_dir, "Sweep output directory")->required();
  plot->add_option("--series", series, "Comma-separated cell:metric items, '*' matches any")->required();
  plot->add_option("--mode", mode, "long or aggregate")->check(CLI::IsMember({"long", "aggregate"}));
  plot->add_option("--statistic", plot_stat, "Point statistic in aggregate mode")->check(CLI::IsMember({"mean", "iqm"}));
  plot->add_option("--out", plot_out, "Write to this file instead of stdout");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Reference computations for spot checks");
  oracle->require_subcommand(1);
  auto* ex = oracle->add_subcommand("expectile", "Sample expectile of a list of values");
  std::string values, weights;
  double tau = 0.5;
  ex->add_option("--values", values, "Comma-separated values")->required();
  ex->add_option("--weights", weights, "Comma-separated non-negative weights");
  ex->add_option("--tau", tau, "Expectile level in (0, 1)")->required();
  auto* vi = oracle->add_subcommand("valueiter", "Optimal Q-values by value iteration");
  std::string mdp_file;
  aql::ChainMdpParams chain;
  vi->add_option("--mdp", mdp_file, "JSON file holding an mdp object (default: chain MDP)");
  vi->add_option("--r1", chain.r1, "Chain reward s0,a0");
  vi->add_option("--r2", chain.r2, "Chain reward s0,a1");
  vi->add_option("--r3", chain.r3, "Chain reward s1/s2,a0");
  vi->add_option("--r4", chain.r4, "Chain reward s1/s2,a1");
  vi->add_option("--discount", chain.discount, "Chain discount");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*run) {
      const aql::SweepConfig cfg = aql::load_sweep_config(config_file);
      std::string dir = out_dir.empty() ? (cfg.out_dir.empty() ? "runs/" + cfg.name : cfg.out_dir) : out_dir;
      aql::SweepOptions opt;
      opt.workers = workers;
      opt.master_seed = seed;
      opt.log = &std::cerr;
      const auto res = aql::run_sweep(cfg, dir, opt);
      std::cout << "completed " << res.completed << ", skipped " << res.skipped << ", failed " << res.failures.size()
                << " -> " << dir << "\n";
      return res.failures.empty() ? kOk : kRunFailure;
    }
    if (*agg) {
      const auto summary = aql::aggregate_dir(agg_dir, aql::statistic_from_string(agg_stat));
      std::cout << summary.dump(2) << "\n";
      return kOk;
    }
    if (*plot) {
      const std::string text =
          aql::emit_plot_data(plot_dir, aql::SeriesSpec::parse(series),
                              mode == "long" ? aql::PlotMode::long_format : aql::PlotMode::aggregate,
                              aql::statistic_from_string(plot_stat));
      if (plot_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream os(plot_out, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + plot_out);
        os << text;
      }
      return kOk;
    }
    if (*ex) {
      const auto v = parse_list(values, "--values");
      const auto w = weights.empty() ? std::vector<double>{} : parse_list(weights, "--weights");
      std::cout << g17(aql::sample_expectile(v, w, tau)) << "\n";
      return kOk;
    }
    if (*vi) {
      const aql::TabularMdp mdp = mdp_file.empty() ? aql::build_chain_mdp(chain)
                                                   : aql::parse_mdp(aql::read_json_file(mdp_file), "mdp");
      const auto vt = aql::value_iteration(mdp);
      aql::Json j = aql::Json::object();
      aql::Json q = aql::Json::array();
      for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        aql::Json row = aql::Json::array();
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) row.push_back(vt(s, a));
        q.push_back(row);
      }
      j["q"] = q;
      j["v"] = vt.v;
      j["iterations"] = vt.iterations;
      j["residual"] = vt.residual;
      std::cout << j.dump(2) << "\n";
      return kOk;
    }
  } catch (const aql::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << "\n";
    return kRunFailure;
  }
  return kOk;
}
