#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aql/continuous/agent.hpp"
#include "aql/expectile.hpp"
#include "aql/mdp.hpp"
#include "aql/tabular.hpp"

namespace aql {

using Json = nlohmann::ordered_json;

/// Bad configuration. `path()` names the offending key, e.g. "base.noise.sigma".
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string path, const std::string& msg)
      : std::runtime_error(path.empty() ? msg : path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

/// Strict view of a JSON object: every key must be read, or listed as
/// allowed, before finish() is called, otherwise the config is rejected.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_, "expected an object");
  }

  const std::string& path() const noexcept { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return join_path(path_, key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ValidationError(at(key), "missing required key");
    return j_.at(key);
  }
  const Json* optional_raw(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  double number(const std::string& key) { return as_number(raw(key), at(key)); }
  double number(const std::string& key, double def) {
    const Json* v = optional_raw(key);
    return v ? as_number(*v, at(key)) : def;
  }
  std::uint64_t count(const std::string& key) { return as_count(raw(key), at(key)); }
  std::uint64_t count(const std::string& key, std::uint64_t def) {
    const Json* v = optional_raw(key);
    return v ? as_count(*v, at(key)) : def;
  }
  std::string string(const std::string& key) { return as_string(raw(key), at(key)); }
  std::string string(const std::string& key, const std::string& def) {
    const Json* v = optional_raw(key);
    return v ? as_string(*v, at(key)) : def;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(at(it.key()), "unknown key");
  }

  static double as_number(const Json& v, const std::string& path) {
    if (!v.is_number()) throw ValidationError(path, "expected a number");
    return v.get<double>();
  }
  static std::uint64_t as_count(const Json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ValidationError(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  static std::string as_string(const Json& v, const std::string& path) {
    if (!v.is_string()) throw ValidationError(path, "expected a string");
    return v.get<std::string>();
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Runs `fn`, turning invalid_argument from domain validation into a
/// ValidationError anchored at `path`.
template <class F>
auto at_path(const std::string& path, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ValidationError(path, e.what());
  } catch (const std::out_of_range& e) {
    throw ValidationError(path, e.what());
  }
}

}  // namespace detail

inline TauSchedule parse_schedule(const Json& j, const std::string& path) {
  detail::ObjectReader r(j, path);
  TauSchedule s;
  s.kind = detail::at_path(r.at("kind"), [&] { return schedule_kind_from_string(r.string("kind")); });
  s.tau_init = r.number("tau_init");
  s.tau_final = r.number("tau_final", s.kind == ScheduleKind::constant ? s.tau_init : 0.5);
  s.horizon = r.number("horizon", 1.0);
  s.shape = r.number("shape", 5.0);
  r.finish();
  detail::at_path(path, [&] { s.validate(); });
  return s;
}

inline TabularMdp parse_mdp(const Json& j, const std::string& path) {
  detail::ObjectReader r(j, path);
  const std::string type = r.string("type");
  if (type == "chain") {
    ChainMdpParams p;
    p.r1 = r.number("r1", p.r1);
    p.r2 = r.number("r2", p.r2);
    p.r3 = r.number("r3", p.r3);
    p.r4 = r.number("r4", p.r4);
    p.discount = r.number("discount", p.discount);
    r.finish();
    return detail::at_path(path, [&] { return build_chain_mdp(p); });
  }
  if (type != "inline") throw ValidationError(r.at("type"), "expected 'chain' or 'inline'");
  const auto nS = static_cast<std::size_t>(r.count("n_states"));
  const auto nA = static_cast<std::size_t>(r.count("n_actions"));
  const double discount = r.number("discount");
  if (nS == 0 || nA == 0) throw ValidationError(path, "n_states and n_actions must be positive");
  std::vector<bool> terminal(nS, false);
  if (const Json* t = r.optional_raw("terminal")) {
    if (!t->is_array()) throw ValidationError(r.at("terminal"), "expected a list of state indices");
    for (std::size_t i = 0; i < t->size(); ++i) {
      const auto s = detail::ObjectReader::as_count((*t)[i], r.at("terminal") + "[" + std::to_string(i) + "]");
      if (s >= nS) throw ValidationError(r.at("terminal") + "[" + std::to_string(i) + "]", "state out of range");
      terminal[s] = true;
    }
  }
  std::vector<double> initial(nS, 0.0);
  if (const Json* init = r.optional_raw("initial")) {
    if (!init->is_array() || init->size() != nS)
      throw ValidationError(r.at("initial"), "expected a list of n_states probabilities");
    for (std::size_t i = 0; i < nS; ++i)
      initial[i] = detail::ObjectReader::as_number((*init)[i], r.at("initial") + "[" + std::to_string(i) + "]");
  } else {
    initial[0] = 1.0;
  }
  TabularMdp::OutcomeTable table(nS, std::vector<std::vector<Outcome>>(nA));
  const Json& tr = r.raw("transitions");
  if (!tr.is_array()) throw ValidationError(r.at("transitions"), "expected a list of [s, a, s', p, r] rows");
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const std::string rp = r.at("transitions") + "[" + std::to_string(i) + "]";
    const Json& row = tr[i];
    if (!row.is_array() || row.size() != 5) throw ValidationError(rp, "expected [s, a, s', p, r]");
    const auto s = detail::ObjectReader::as_count(row[0], rp + "[0]");
    const auto a = detail::ObjectReader::as_count(row[1], rp + "[1]");
    const auto s2 = detail::ObjectReader::as_count(row[2], rp + "[2]");
    if (s >= nS || a >= nA || s2 >= nS) throw ValidationError(rp, "state or action index out of range");
    table[s][a].push_back({s2, detail::ObjectReader::as_number(row[3], rp + "[3]"),
                           detail::ObjectReader::as_number(row[4], rp + "[4]")});
  }
  r.finish();
  return detail::at_path(path, [&] { return TabularMdp(nS, nA, std::move(table), terminal, discount, initial); });
}

/// One fully resolved tabular cell.
struct TabularCell {
  std::shared_ptr<const TabularMdp> mdp;
  TargetRule rule;
  NoiseSpec noise;
  TabularRunConfig run;  ///< seed filled in per run
};

/// One fully resolved continuous cell.
struct ContinuousCell {
  ToyEnvSpec env;
  AgentConfig agent;
  ContinuousRunConfig run;  ///< seed filled in per run
};

struct Cell {
  std::string name;
  Json resolved;  ///< the merged settings, echoed into the output directory
  std::variant<TabularCell, ContinuousCell> spec;
};

enum class ExperimentKind { tabular, continuous };

struct SweepConfig {
  std::string name;
  ExperimentKind kind = ExperimentKind::tabular;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::size_t total_steps = 0;
  std::size_t log_every = 0;
  std::string out_dir;  ///< empty means the caller picks
  std::vector<Cell> cells;
  Json source;
};

inline TabularCell parse_tabular_cell(const Json& j, const std::string& path, std::size_t total_steps,
                                      std::size_t log_every) {
  detail::ObjectReader r(j, path);
  TabularCell c;
  c.mdp = std::make_shared<const TabularMdp>(parse_mdp(r.raw("mdp"), r.at("mdp")));
  {
    detail::ObjectReader t(r.raw("target"), r.at("target"));
    c.rule.variant = detail::at_path(t.at("variant"), [&] { return target_variant_from_string(t.string("variant")); });
    if (const Json* s = t.optional_raw("schedule")) c.rule.schedule = parse_schedule(*s, t.at("schedule"));
    t.finish();
    detail::at_path(t.path(), [&] { c.rule.validate(); });
  }
  if (const Json* n = r.optional_raw("noise")) {
    detail::ObjectReader nr(*n, r.at("noise"));
    c.noise = NoiseSpec::gaussian(nr.number("sigma", 0.0));
    nr.finish();
    detail::at_path(nr.path(), [&] { c.noise.validate(); });
  }
  if (const Json* a = r.optional_raw("agent")) {
    detail::ObjectReader ar(*a, r.at("agent"));
    c.run.step_size = ar.number("step_size", c.run.step_size);
    c.run.epsilon = ar.number("epsilon", c.run.epsilon);
    c.run.max_episode_len = ar.count("max_episode_len", c.run.max_episode_len);
    c.run.trace_state = ar.count("trace_state", c.run.trace_state);
    ar.finish();
    if (!(c.run.step_size > 0.0)) throw ValidationError(ar.at("step_size"), "must be positive");
    if (!(c.run.epsilon >= 0.0 && c.run.epsilon <= 1.0)) throw ValidationError(ar.at("epsilon"), "must lie in [0, 1]");
    if (c.run.max_episode_len == 0) throw ValidationError(ar.at("max_episode_len"), "must be positive");
    if (c.run.trace_state >= c.mdp->n_states()) throw ValidationError(ar.at("trace_state"), "state out of range");
  }
  r.finish();
  c.run.steps = total_steps;
  c.run.log_every = log_every;
  if (c.rule.schedule && c.rule.schedule->horizon > static_cast<double>(total_steps))
    throw ValidationError(path + ".target.schedule.horizon", "exceeds total_steps");
  return c;
}

inline ContinuousCell parse_continuous_cell(const Json& j, const std::string& path, std::size_t total_steps,
                                            std::size_t log_every) {
  detail::ObjectReader r(j, path);
  ContinuousCell c;
  {
    detail::ObjectReader e(r.raw("env"), r.at("env"));
    c.env.kind = detail::at_path(e.at("kind"), [&] { return env_kind_from_string(e.string("kind")); });
    c.env.action_noise_std = e.number("action_noise_std", 0.0);
    c.env.horizon = e.count("horizon", 0);
    if (const Json* b = e.optional_raw("bandit")) {
      if (c.env.kind != EnvKind::two_peak_bandit) throw ValidationError(e.at("bandit"), "only valid for two_peak_bandit");
      detail::ObjectReader br(*b, e.at("bandit"));
      auto& s = c.env.bandit;
      s.high_center = br.number("high_center", s.high_center);
      s.high_height = br.number("high_height", s.high_height);
      s.high_width = br.number("high_width", s.high_width);
      s.low_center = br.number("low_center", s.low_center);
      s.low_height = br.number("low_height", s.low_height);
      s.low_width = br.number("low_width", s.low_width);
      s.baseline = br.number("baseline", s.baseline);
      br.finish();
    }
    e.finish();
    detail::at_path(e.path(), [&] { ToyEnv check(c.env); });
  }
  {
    detail::ObjectReader a(r.raw("agent"), r.at("agent"));
    auto& g = c.agent;
    g.algo = detail::at_path(a.at("algo"), [&] { return algo_from_string(a.string("algo")); });
    g.critic_loss = detail::at_path(a.at("critic_loss"),
                                    [&] { return critic_loss_from_string(a.string("critic_loss", "expectile")); });
    if (const Json* s = a.optional_raw("tau_schedule")) g.tau_schedule = parse_schedule(*s, a.at("tau_schedule"));
    g.batch_size = a.count("batch_size", g.batch_size);
    g.discount = a.number("discount", g.discount);
    g.ema_coeff = a.number("ema_coeff", g.ema_coeff);
    g.learning_rate = a.number("learning_rate", g.learning_rate);
    if (const Json* h = a.optional_raw("hidden")) {
      if (!h->is_array()) throw ValidationError(a.at("hidden"), "expected a list of layer widths");
      g.hidden.clear();
      for (std::size_t i = 0; i < h->size(); ++i)
        g.hidden.push_back(detail::ObjectReader::as_count((*h)[i], a.at("hidden") + "[" + std::to_string(i) + "]"));
    }
    g.buffer_capacity = a.count("buffer_capacity", g.buffer_capacity);
    g.warmup_steps = a.count("warmup_steps", g.warmup_steps);

    // Exactly the branch matching the algo may appear.
    const char* branch = g.algo == Algo::aq_td3 ? "td3" : g.algo == Algo::aq_sac ? "sac" : "maxbackup";
    for (const char* other : {"td3", "sac", "maxbackup"})
      if (std::string(other) != branch && a.has(other))
        throw ValidationError(a.at(other), std::string("not allowed with algo ") + std::string(to_string(g.algo)));
    const Json* bj = a.optional_raw(branch);
    if (!bj) throw ValidationError(a.at(branch), "missing required key for this algo");
    detail::ObjectReader br(*bj, a.at(branch));
    if (g.algo == Algo::aq_td3) {
      Td3Options t;
      t.exploration_std = br.number("exploration_std", t.exploration_std);
      t.target_noise_std = br.number("target_noise_std", t.target_noise_std);
      t.target_noise_clip = br.number("target_noise_clip", t.target_noise_clip);
      t.policy_delay = br.count("policy_delay", t.policy_delay);
      g.options = t;
    } else {
      SacOptions s;
      s.entropy_alpha = br.number("entropy_alpha", s.entropy_alpha);
      s.log_std_min = br.number("log_std_min", s.log_std_min);
      s.log_std_max = br.number("log_std_max", s.log_std_max);
      if (g.algo == Algo::aq_sac) {
        g.options = s;
      } else {
        MaxBackupOptions m;
        static_cast<SacOptions&>(m) = s;
        m.n_samples = br.count("n_samples", m.n_samples);
        g.options = m;
      }
    }
    br.finish();
    a.finish();
    detail::at_path(a.path(), [&] {
      g.validate();
      if (g.algo != Algo::aq_td3) GaussianActor(1, 1, {1}, g.sac().log_std_min, g.sac().log_std_max);
    });
    if (g.tau_schedule.horizon > static_cast<double>(total_steps) && g.tau_schedule.kind != ScheduleKind::constant)
      throw ValidationError(a.at("tau_schedule.horizon"), "exceeds total_steps");
  }
  if (const Json* e = r.optional_raw("eval")) {
    detail::ObjectReader er(*e, r.at("eval"));
    c.run.eval_episodes = er.count("episodes", c.run.eval_episodes);
    c.run.probe_rollouts = er.count("probe_rollouts", c.run.probe_rollouts);
    c.run.entropy_samples = er.count("entropy_samples", c.run.entropy_samples);
    er.finish();
    if (c.run.eval_episodes == 0 || c.run.probe_rollouts == 0 || c.run.entropy_samples == 0)
      throw ValidationError(er.path(), "counts must be positive");
  }
  r.finish();
  c.run.total_steps = total_steps;
  c.run.log_every = log_every;
  return c;
}

namespace detail {

/// Sets a dotted path inside a JSON object, creating objects on the way.
inline void set_dotted(Json& j, const std::string& dotted, const Json& value, const std::string& where) {
  if (dotted.empty()) throw ValidationError(where, "empty override path");
  Json* cur = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError(where, "malformed override path '" + dotted + "'");
    if (!cur->is_object()) throw ValidationError(where, "override path '" + dotted + "' crosses a non-object");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    if (cur->is_null()) *cur = Json::object();
    start = dot + 1;
  }
}

inline std::string value_label(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) {
    std::ostringstream os;
    os << v.get<double>();
    return os.str();
  }
  return v.dump();
}

inline void check_cell_name(const std::string& name, const std::string& path) {
  if (name.empty()) throw ValidationError(path, "cell name is empty");
  for (char ch : name)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.' || ch == '='))
      throw ValidationError(path, "cell name '" + name + "' may only use letters, digits and _ - . =");
}

}  // namespace detail

/// Parses and validates a sweep configuration. Cells come from an explicit
/// `cells` list, from the cartesian product of a `grid`, or default to one
/// cell named "default".
inline SweepConfig parse_sweep_config(const Json& j) {
  detail::ObjectReader r(j, "");
  SweepConfig cfg;
  cfg.source = j;
  cfg.name = r.string("name", "sweep");
  const std::string kind = r.string("kind");
  if (kind == "tabular")
    cfg.kind = ExperimentKind::tabular;
  else if (kind == "continuous")
    cfg.kind = ExperimentKind::continuous;
  else
    throw ValidationError("kind", "expected 'tabular' or 'continuous'");
  cfg.master_seed = r.count("master_seed", 0);
  const Json& seeds = r.raw("seeds");
  if (seeds.is_number_integer()) {
    const auto n = detail::ObjectReader::as_count(seeds, "seeds");
    for (std::uint64_t i = 0; i < n; ++i) cfg.seeds.push_back(i);
  } else if (seeds.is_array()) {
    for (std::size_t i = 0; i < seeds.size(); ++i)
      cfg.seeds.push_back(detail::ObjectReader::as_count(seeds[i], "seeds[" + std::to_string(i) + "]"));
  } else {
    throw ValidationError("seeds", "expected a count or a list of seed indices");
  }
  if (cfg.seeds.empty()) throw ValidationError("seeds", "no seeds given");
  {
    std::set<std::uint64_t> uniq(cfg.seeds.begin(), cfg.seeds.end());
    if (uniq.size() != cfg.seeds.size()) throw ValidationError("seeds", "seed indices must be distinct");
  }
  cfg.total_steps = r.count("total_steps");
  if (cfg.total_steps == 0) throw ValidationError("total_steps", "must be positive");
  cfg.log_every = r.count("log_every", std::max<std::size_t>(1, cfg.total_steps / 100));
  if (cfg.log_every == 0) throw ValidationError("log_every", "must be positive");
  cfg.out_dir = r.string("out", "");
  const Json& base = r.raw("base");
  if (!base.is_object()) throw ValidationError("base", "expected an object");

  // (name, overrides, path of the overrides) for each cell.
  std::vector<std::tuple<std::string, Json, std::string>> plan;
  const Json* cells = r.optional_raw("cells");
  const Json* grid = r.optional_raw("grid");
  if (cells && grid) throw ValidationError("grid", "use either 'cells' or 'grid', not both");
  if (cells) {
    if (!cells->is_array() || cells->empty()) throw ValidationError("cells", "expected a non-empty list");
    for (std::size_t i = 0; i < cells->size(); ++i) {
      const std::string cp = "cells[" + std::to_string(i) + "]";
      detail::ObjectReader cr((*cells)[i], cp);
      std::string name = cr.string("name");
      Json set = Json::object();
      if (const Json* s = cr.optional_raw("set")) {
        if (!s->is_object()) throw ValidationError(cr.at("set"), "expected an object of dotted paths");
        set = *s;
      }
      cr.finish();
      plan.emplace_back(std::move(name), std::move(set), cp + ".set");
    }
  } else if (grid) {
    if (!grid->is_object() || grid->empty()) throw ValidationError("grid", "expected a non-empty object of value lists");
    std::vector<std::pair<std::string, const Json*>> axes;
    for (auto it = grid->begin(); it != grid->end(); ++it) {
      if (!it.value().is_array() || it.value().empty())
        throw ValidationError("grid." + it.key(), "expected a non-empty list of values");
      axes.emplace_back(it.key(), &it.value());
    }
    std::vector<std::size_t> idx(axes.size(), 0);
    for (;;) {
      Json set = Json::object();
      std::string name;
      for (std::size_t k = 0; k < axes.size(); ++k) {
        const Json& v = (*axes[k].second)[idx[k]];
        set[axes[k].first] = v;
        const auto& key = axes[k].first;
        const auto dot = key.rfind('.');
        if (!name.empty()) name += "_";
        name += (dot == std::string::npos ? key : key.substr(dot + 1)) + "=" + detail::value_label(v);
      }
      plan.emplace_back(name, set, "grid");
      bool advanced = false;
      for (std::size_t k = axes.size(); k-- > 0;) {
        if (++idx[k] < axes[k].second->size()) {
          advanced = true;
          break;
        }
        idx[k] = 0;
      }
      if (!advanced) break;
    }
  } else {
    plan.emplace_back("default", Json::object(), "");
  }
  r.finish();

  std::set<std::string> names;
  for (auto& [name, set, where] : plan) {
    detail::check_cell_name(name, where);
    if (!names.insert(name).second) throw ValidationError(where, "duplicate cell name '" + name + "'");
    Json merged = base;
    for (auto it = set.begin(); it != set.end(); ++it) detail::set_dotted(merged, it.key(), it.value(), where);
    Cell cell;
    cell.name = name;
    cell.resolved = merged;
    const std::string path = "cell '" + name + "' base";
    if (cfg.kind == ExperimentKind::tabular)
      cell.spec = parse_tabular_cell(merged, path, cfg.total_steps, cfg.log_every);
    else
      cell.spec = parse_continuous_cell(merged, path, cfg.total_steps, cfg.log_every);
    cfg.cells.push_back(std::move(cell));
  }
  return cfg;
}

inline Json read_json_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError(file, "cannot open config file");
  try {
    return Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ValidationError(file, std::string("JSON parse error: ") + e.what());
  }
}

inline SweepConfig load_sweep_config(const std::string& file) { return parse_sweep_config(read_json_file(file)); }

}  // namespace aql
