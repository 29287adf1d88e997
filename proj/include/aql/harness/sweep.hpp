#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aql/harness/config.hpp"
#include "aql/harness/stats.hpp"
#include "aql/rng.hpp"

namespace aql {

namespace fs = std::filesystem;

/// Seed for run `seed_index` of a cell: depends only on the master seed,
/// the cell name and the index, so cells never share streams.
inline std::uint64_t run_seed(std::uint64_t master, const std::string& cell, std::uint64_t seed_index) {
  return derive_seed(master, fnv1a(cell), seed_index);
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest text that reads back to the same double; "nan" for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

struct MetricTable {
  std::vector<std::string> columns;     ///< first column is "step"
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::invalid_argument("no metric column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }
  std::vector<double> series(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline void write_csv(const fs::path& file, const MetricTable& t) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + file.string());
}

inline MetricTable read_csv(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  MetricTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(is, line)) throw std::runtime_error(file.string() + ": empty file");
  t.columns = split(line);
  if (t.columns.empty() || t.columns.front() != "step") throw std::runtime_error(file.string() + ": missing step column");
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size())
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": wrong number of fields");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline MetricTable to_table(const TabularRunMetrics& m) {
  MetricTable t{{"step", "q0", "q1", "episode_return"}, {}};
  for (const auto& r : m.rows) t.rows.push_back({static_cast<double>(r.step), r.q0, r.q1, r.episode_return});
  return t;
}

inline MetricTable to_table(const ContinuousRunMetrics& m) {
  MetricTable t{{"step", "eval_return", "tau", "critic_loss", "bias", "bias_se", "entropy"}, {}};
  for (const auto& r : m.rows)
    t.rows.push_back({static_cast<double>(r.step), r.eval_return, r.tau, r.critic_loss, r.bias, r.bias_se, r.entropy});
  return t;
}

/// Trains one (cell, seed) pair and returns its metric table.
inline MetricTable run_cell(const Cell& cell, std::uint64_t seed) {
  if (const auto* t = std::get_if<TabularCell>(&cell.spec)) {
    TabularRunConfig rc = t->run;
    rc.seed = seed;
    return to_table(train_tabular(*t->mdp, t->rule, t->noise, rc));
  }
  const auto& c = std::get<ContinuousCell>(cell.spec);
  ContinuousRunConfig rc = c.run;
  rc.seed = seed;
  return to_table(train_continuous(c.env, c.agent, rc));
}

// ---------------------------------------------------------------------------
// Aggregation

struct SummaryStats {
  std::size_t n = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double iqm = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  Interval ci{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
};

/// Summary of the finite entries of `v`; CI of `stat` by seeded bootstrap.
inline SummaryStats summarize(const std::vector<double>& v, Statistic stat = Statistic::mean,
                              std::size_t resamples = 2000, double level = 0.95) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  SummaryStats s;
  s.n = f.size();
  if (f.empty()) return s;
  s.mean = mean(f);
  s.iqm = iqm(f);
  s.se = standard_error(f);
  s.ci = bootstrap_ci(f, resamples, level, stat, 0);
  return s;
}

inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const SummaryStats& s) {
  Json j = Json::object();
  j["n"] = s.n;
  j["mean"] = json_number(s.mean);
  j["iqm"] = json_number(s.iqm);
  j["stderr"] = json_number(s.se);
  j["ci_lower"] = json_number(s.ci.lower);
  j["ci_upper"] = json_number(s.ci.upper);
  return j;
}

/// Per-seed tables of one cell, in seed order.
struct CellRuns {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricTable> tables;
};

inline std::vector<CellRuns> load_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<fs::path> cell_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) cell_dirs.push_back(e.path());
  std::sort(cell_dirs.begin(), cell_dirs.end());
  std::vector<CellRuns> out;
  for (const auto& cd : cell_dirs) {
    std::vector<std::pair<std::uint64_t, fs::path>> files;
    for (const auto& e : fs::directory_iterator(cd)) {
      const std::string fn = e.path().filename().string();
      if (fn.rfind("seed_", 0) == 0 && e.path().extension() == ".csv")
        files.emplace_back(std::stoull(fn.substr(5, fn.size() - 9)), e.path());
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    CellRuns cr;
    cr.name = cd.filename().string();
    for (const auto& [seed, path] : files) {
      cr.seeds.push_back(seed);
      cr.tables.push_back(read_csv(path));
    }
    out.push_back(std::move(cr));
  }
  return out;
}

/// Q*(trace_state, a0) of a tabular cell's MDP, when its resolved config is known.
inline std::optional<double> tabular_q_star(const Json& resolved) {
  if (!resolved.is_object() || !resolved.contains("mdp")) return std::nullopt;
  const TabularMdp mdp = parse_mdp(resolved.at("mdp"), "mdp");
  std::size_t s = 0;
  if (resolved.contains("agent") && resolved.at("agent").contains("trace_state"))
    s = resolved.at("agent").at("trace_state").get<std::size_t>();
  return value_iteration(mdp)(s, 0);
}

/// Aggregate report of one cell: final-value summaries and per-step traces
/// of every metric, plus time-to-band against Q* for tabular cells.
inline Json aggregate_cell(const CellRuns& runs, const std::optional<double>& q_star, Statistic stat = Statistic::mean) {
  Json j = Json::object();
  j["cell"] = runs.name;
  j["n_seeds"] = runs.tables.size();
  j["statistic"] = std::string(to_string(stat));
  j["ci_level"] = 0.95;
  const auto& cols = runs.tables.front().columns;
  Json metrics = Json::object();
  for (std::size_t c = 1; c < cols.size(); ++c) {
    Json m = Json::object();
    std::vector<double> finals;
    for (const auto& t : runs.tables) {
      if (t.columns != cols) throw std::runtime_error("cell '" + runs.name + "': runs have different columns");
      finals.push_back(t.rows.empty() ? std::numeric_limits<double>::quiet_NaN() : t.rows.back()[c]);
    }
    m["final"] = to_json(summarize(finals, stat));
    Json trace = Json::array();
    const std::size_t n_rows = runs.tables.front().rows.size();
    for (std::size_t r = 0; r < n_rows; ++r) {
      std::vector<double> vals;
      for (const auto& t : runs.tables)
        if (r < t.rows.size()) vals.push_back(t.rows[r][c]);
      Json row = to_json(summarize(vals, stat));
      row["step"] = runs.tables.front().rows[r][0];
      trace.push_back(row);
    }
    m["trace"] = trace;
    metrics[cols[c]] = m;
  }
  j["metrics"] = metrics;
  if (q_star) {
    const double band = 0.05 * std::abs(*q_star);
    Json b = Json::object();
    b["q_star"] = *q_star;
    b["band"] = band;
    std::vector<double> hits;
    std::size_t never = 0;
    for (const auto& t : runs.tables) {
      std::vector<std::size_t> steps;
      for (const auto& r : t.rows) steps.push_back(static_cast<std::size_t>(r[0]));
      const auto k = steps_to_band(steps, t.series("q0"), *q_star, band);
      if (k)
        hits.push_back(static_cast<double>(*k));
      else
        ++never;
    }
    b["steps_to_band"] = to_json(summarize(hits, stat));
    b["never_reached"] = never;
    j["steps_to_band_q0"] = b;
  }
  return j;
}

inline void write_json(const fs::path& file, const Json& j) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << j.dump(2) << '\n';
}

/// Re-aggregates every cell directory under `dir`. Writes
/// <cell>/aggregate.json and a top-level aggregate.json of final values.
inline Json aggregate_dir(const fs::path& dir, Statistic stat = Statistic::mean) {
  const auto runs = load_runs(dir);
  if (runs.empty()) throw std::invalid_argument("no runs found under " + dir.string());
  Json summary = Json::object();
  summary["statistic"] = std::string(to_string(stat));
  Json cells = Json::object();
  for (const auto& cr : runs) {
    std::optional<double> q_star;
    const fs::path cfg = dir / cr.name / "config.json";
    if (fs::exists(cfg)) q_star = tabular_q_star(read_json_file(cfg.string()));
    Json agg = aggregate_cell(cr, q_star, stat);
    write_json(dir / cr.name / "aggregate.json", agg);
    Json finals = Json::object();
    finals["n_seeds"] = agg["n_seeds"];
    for (auto it = agg["metrics"].begin(); it != agg["metrics"].end(); ++it) finals[it.key()] = it.value()["final"];
    if (agg.contains("steps_to_band_q0")) finals["steps_to_band_q0"] = agg["steps_to_band_q0"]["steps_to_band"];
    cells[cr.name] = finals;
  }
  summary["cells"] = cells;
  write_json(dir / "aggregate.json", summary);
  return summary;
}

// ---------------------------------------------------------------------------
// Plot data

/// Series selector: comma-separated "cell:metric" items; either side may be "*".
struct SeriesSpec {
  std::vector<std::pair<std::string, std::string>> items;

  static SeriesSpec parse(const std::string& text) {
    SeriesSpec s;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
        throw ValidationError("--series", "expected cell:metric items, got '" + item + "'");
      s.items.emplace_back(item.substr(0, colon), item.substr(colon + 1));
    }
    if (s.items.empty()) throw ValidationError("--series", "empty series spec");
    return s;
  }
};

enum class PlotMode { long_format, aggregate };

/// Tidy CSV text. Long format: cell,seed,step,metric,value per logged row.
/// Aggregate: cell,step,metric,mean,ci_lower,ci_upper,n. Rows follow the
/// spec order, then seed and step order.
inline std::string emit_plot_data(const fs::path& dir, const SeriesSpec& spec, PlotMode mode = PlotMode::long_format,
                                  Statistic stat = Statistic::mean) {
  const auto runs = load_runs(dir);
  std::ostringstream os;
  os << (mode == PlotMode::long_format ? "cell,seed,step,metric,value\n" : "cell,step,metric,mean,ci_lower,ci_upper,n\n");
  for (const auto& [cell_pat, metric_pat] : spec.items) {
    bool cell_found = false;
    for (const auto& cr : runs) {
      if (cell_pat != "*" && cell_pat != cr.name) continue;
      cell_found = true;
      const auto& cols = cr.tables.front().columns;
      std::vector<std::size_t> metric_cols;
      for (std::size_t c = 1; c < cols.size(); ++c)
        if (metric_pat == "*" || metric_pat == cols[c]) metric_cols.push_back(c);
      if (metric_cols.empty()) throw ValidationError("--series", "cell '" + cr.name + "' has no metric '" + metric_pat + "'");
      for (std::size_t c : metric_cols) {
        if (mode == PlotMode::long_format) {
          for (std::size_t k = 0; k < cr.tables.size(); ++k)
            for (const auto& r : cr.tables[k].rows)
              os << cr.name << ',' << cr.seeds[k] << ',' << format_double(r[0]) << ',' << cols[c] << ','
                 << format_double(r[c]) << '\n';
        } else {
          for (std::size_t r = 0; r < cr.tables.front().rows.size(); ++r) {
            std::vector<double> vals;
            for (const auto& t : cr.tables)
              if (r < t.rows.size()) vals.push_back(t.rows[r][c]);
            const auto s = summarize(vals, stat);
            os << cr.name << ',' << format_double(cr.tables.front().rows[r][0]) << ',' << cols[c] << ','
               << format_double(stat == Statistic::mean ? s.mean : s.iqm) << ',' << format_double(s.ci.lower) << ','
               << format_double(s.ci.upper) << ',' << s.n << '\n';
          }
        }
      }
    }
    if (!cell_found) throw ValidationError("--series", "no cell named '" + cell_pat + "' under " + dir.string());
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Sweep runner

struct RunFailure {
  std::string cell;
  std::uint64_t seed_index = 0;
  std::string error;
};

struct SweepResult {
  std::size_t completed = 0;
  std::size_t skipped = 0;  ///< already in the manifest
  std::vector<RunFailure> failures;
  fs::path out_dir;
};

struct SweepOptions {
  std::size_t workers = 1;
  std::optional<std::uint64_t> master_seed;  ///< overrides the config's master_seed
  std::ostream* log = nullptr;
};

/// Fingerprint of everything that determines a run's output.
inline std::string run_fingerprint(const SweepConfig& cfg, const Cell& cell, std::uint64_t master, std::uint64_t seed) {
  Json j = Json::object();
  j["cell"] = cell.resolved;
  j["kind"] = cfg.kind == ExperimentKind::tabular ? "tabular" : "continuous";
  j["total_steps"] = cfg.total_steps;
  j["log_every"] = cfg.log_every;
  j["master_seed"] = master;
  j["seed"] = seed;
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

/// Runs every (cell, seed) pair on a pool of worker threads. Each run owns
/// its agent and RNG streams and writes <out>/<cell>/seed_<k>.csv. Runs
/// listed in <out>/manifest.json with a matching fingerprint and an existing
/// file are skipped. A failed run is recorded and the sweep continues.
inline SweepResult run_sweep(const SweepConfig& cfg, const fs::path& out_dir, const SweepOptions& opt = {}) {
  const std::uint64_t master = opt.master_seed.value_or(cfg.master_seed);
  fs::create_directories(out_dir);

  Json manifest = Json::object();
  const fs::path manifest_file = out_dir / "manifest.json";
  if (fs::exists(manifest_file)) {
    try {
      manifest = read_json_file(manifest_file.string());
    } catch (const std::exception&) {
      manifest = Json::object();
    }
    if (!manifest.is_object()) manifest = Json::object();
  }
  if (!manifest.contains("runs") || !manifest["runs"].is_object()) manifest["runs"] = Json::object();

  struct Job {
    const Cell* cell;
    std::uint64_t seed_index;
    fs::path file;
    std::string key, fingerprint;
  };
  std::vector<Job> jobs;
  SweepResult result;
  result.out_dir = out_dir;
  for (const auto& cell : cfg.cells) {
    fs::create_directories(out_dir / cell.name);
    write_json(out_dir / cell.name / "config.json", cell.resolved);
    for (auto k : cfg.seeds) {
      Job j{&cell, k, out_dir / cell.name / ("seed_" + std::to_string(k) + ".csv"), cell.name + "/seed_" + std::to_string(k),
            run_fingerprint(cfg, cell, master, k)};
      const auto& runs = manifest["runs"];
      if (runs.contains(j.key) && runs[j.key] == j.fingerprint && fs::exists(j.file)) {
        ++result.skipped;
        continue;
      }
      jobs.push_back(std::move(j));
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::vector<std::optional<std::string>> errors(jobs.size());
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      try {
        const MetricTable t = run_cell(*job.cell, run_seed(master, job.cell->name, job.seed_index));
        write_csv(job.file, t);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      if (opt.log) {
        std::lock_guard<std::mutex> lock(mu);
        *opt.log << (errors[i] ? "FAILED " : "done   ") << job.key << (errors[i] ? ": " + *errors[i] : "") << '\n';
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opt.workers, jobs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) {
      result.failures.push_back({jobs[i].cell->name, jobs[i].seed_index, *errors[i]});
      manifest["runs"].erase(jobs[i].key);
    } else {
      manifest["runs"][jobs[i].key] = jobs[i].fingerprint;
      ++result.completed;
    }
  }
  // Sorted keys keep the manifest byte-stable regardless of completion order.
  Json sorted_runs = Json::object();
  std::vector<std::string> keys;
  for (auto it = manifest["runs"].begin(); it != manifest["runs"].end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end());
  for (const auto& k : keys) sorted_runs[k] = manifest["runs"][k];
  Json m = Json::object();
  m["sweep"] = cfg.name;
  m["master_seed"] = master;
  m["runs"] = sorted_runs;
  write_json(manifest_file, m);

  Json fail = Json::array();
  for (const auto& f : result.failures) fail.push_back({{"cell", f.cell}, {"seed", f.seed_index}, {"error", f.error}});
  if (!fail.empty())
    write_json(out_dir / "failures.json", fail);
  else if (fs::exists(out_dir / "failures.json"))
    fs::remove(out_dir / "failures.json");

  write_json(out_dir / "sweep.json", cfg.source);
  // nothing to aggregate when every run failed
  if (!load_runs(out_dir).empty()) aggregate_dir(out_dir);
  return result;
}

}  // namespace aql
