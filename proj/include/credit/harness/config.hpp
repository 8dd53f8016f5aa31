#pragma once

// Experiment configuration (JSON). Top-level keys:
//
//   name          string, used as run_id (default "run")
//   env           {"name": ..., env parameters}
//   algorithm     {"name": td|etd|xetd|et|q|qet|q_options|qet_options, selectivity and variant flags}
//   schedules     {"w": {"base", "decay"}, "z": {...}, "f": {...}}
//   seeds         [int, ...]
//   total_steps | total_episodes
//   eval_every    steps (evaluation) or episodes (control)
//   sweep         {"dotted.path": [values, ...], ...}   (sweep subcommand only)
//   sweep_metric  metric minimized when picking the best sweep cell
//   oracle        {...} oracle-specific knobs
//
// Unknown keys are rejected so typos surface as config errors.

#include <nlohmann/json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "credit/core.hpp"
#include "credit/error.hpp"

namespace credit::harness {

using json = nlohmann::json;

enum class AlgoKind { eval, control, options };

struct AlgorithmConfig {
  std::string name = "td";
  json lambda = 0.0;
  json omega = 1.0;
  json eta = 1.0;
  json interest = 1.0;
  json omega_trace = 1.0;
  std::string coupling = "none";
  double beta_lambda = 0.0;
  double beta_eta = 0.0;
  bool eta_from_omega = false;
  bool omega_from_interest = false;
  double eta_f = 0.0;
  double eta_tilde = 1.0;
  std::optional<bool> clip_rho;
  bool relu = true;
  bool reset_followon_on_restart = true;
  double epsilon = 0.1;
  double epsilon_option = 0.0;
  double init = 0.0;
  std::string evaluate = "target";  // policy whose values are learned: target or behaviour (on-policy)

  AlgoKind kind() const {
    if (name == "q_options" || name == "qet_options") return AlgoKind::options;
    if (name == "q" || name == "qet") return AlgoKind::control;
    return AlgoKind::eval;
  }
};

struct EnvConfig {
  std::string name;
  json params = json::object();
};

struct ExperimentConfig {
  std::string name = "run";
  EnvConfig env;
  AlgorithmConfig algorithm;
  StepSizeSchedule sched_w = StepSizeSchedule::constant(0.1);
  StepSizeSchedule sched_z = StepSizeSchedule::constant(0.1);
  StepSizeSchedule sched_f = StepSizeSchedule::constant(0.1);
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::uint64_t> total_steps;
  std::optional<std::uint64_t> total_episodes;
  std::optional<std::uint64_t> eval_every;  // default: 1000 steps (evaluation) or 1 episode (control)
  std::uint64_t max_episode_steps = 10000;
  json sweep = json::object();
  std::string sweep_metric;
  json oracle = json::object();
  json raw;
};

namespace detail {

inline const std::set<std::string> kEnvNames{"two_state_divergence", "three_state_aliasing", "five_state_chain",
                                             "constant_gamma_chain", "ring_chain", "two_room_corridor",
                                             "open_world", "four_rooms"};
inline const std::set<std::string> kAlgoNames{"td", "etd", "xetd", "et", "q", "qet", "q_options", "qet_options"};

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where, "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
  }
}

template <class T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, std::string("wrong type: ") + e.what());
  }
}

inline double get_number(const json& parent, const std::string& key, const std::string& field, double fallback) {
  if (!parent.contains(key)) return fallback;
  const json& v = parent.at(key);
  if (!v.is_number()) throw ConfigError(field, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(field, "must be finite");
  return d;
}

inline bool get_bool(const json& parent, const std::string& key, const std::string& field, bool fallback) {
  if (!parent.contains(key)) return fallback;
  if (!parent.at(key).is_boolean()) throw ConfigError(field, "must be a boolean");
  return parent.at(key).get<bool>();
}

inline std::uint64_t get_count(const json& parent, const std::string& key, const std::string& field) {
  const json& v = parent.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(field, "must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline void check_range(double v, double lo, double hi, const std::string& field, bool hi_open = false) {
  if (v < lo || (hi_open ? v >= hi : v > hi)) {
    throw ConfigError(field, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + (hi_open ? ")" : "]"));
  }
}

inline StepSizeSchedule parse_schedule(const json& j, const std::string& field) {
  check_keys(j, field, {"base", "decay"});
  StepSizeSchedule s;
  s.base = get_number(j, "base", field + ".base", 0.1);
  s.decay = get_number(j, "decay", field + ".decay", 0.0);
  s.mode = s.decay > 0.0 ? StepSizeSchedule::Mode::power : StepSizeSchedule::Mode::constant;
  if (!(s.base > 0.0)) throw ConfigError(field + ".base", "must be positive");
  if (s.decay < 0.0) throw ConfigError(field + ".decay", "must be nonnegative");
  return s;
}

// Per-state fields accept a number, an array, or a named pattern (checked once the env is known).
inline void check_per_state(const json& v, const std::string& field) {
  if (v.is_number()) {
    if (v.get<double>() < 0.0) throw ConfigError(field, "must be nonnegative");
    return;
  }
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || v[i].get<double>() < 0.0) {
        throw ConfigError(field + "[" + std::to_string(i) + "]", "must be a nonnegative number");
      }
    }
    return;
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "hallways" || s == "omega") return;
    throw ConfigError(field, "unknown pattern '" + s + "'");
  }
  throw ConfigError(field, "must be a number, an array or a pattern name");
}

inline AlgorithmConfig parse_algorithm(const json& j) {
  check_keys(j, "algorithm",
             {"name", "lambda", "omega", "eta", "interest", "omega_trace", "coupling", "beta_lambda", "beta_eta",
              "eta_from_omega", "omega_from_interest", "eta_f", "eta_tilde", "clip_rho", "relu",
              "reset_followon_on_restart", "epsilon", "epsilon_option", "init", "evaluate"});
  AlgorithmConfig a;
  if (!j.contains("name") || !j.at("name").is_string()) throw ConfigError("algorithm.name", "required string");
  a.name = j.at("name").get<std::string>();
  if (!kAlgoNames.count(a.name)) throw ConfigError("algorithm.name", "unknown algorithm '" + a.name + "'");
  for (const char* k : {"lambda", "omega", "eta", "interest", "omega_trace"}) {
    if (!j.contains(k)) continue;
    check_per_state(j.at(k), std::string("algorithm.") + k);
  }
  if (j.contains("lambda")) a.lambda = j.at("lambda");
  if (j.contains("omega")) a.omega = j.at("omega");
  if (j.contains("eta")) a.eta = j.at("eta");
  if (j.contains("interest")) a.interest = j.at("interest");
  if (j.contains("omega_trace")) a.omega_trace = j.at("omega_trace");
  if (j.contains("coupling")) {
    if (!j.at("coupling").is_string()) throw ConfigError("algorithm.coupling", "must be a string");
    a.coupling = j.at("coupling").get<std::string>();
    if (a.coupling != "none" && a.coupling != "omega_from_lambda" && a.coupling != "lambda_from_omega") {
      throw ConfigError("algorithm.coupling", "must be none, omega_from_lambda or lambda_from_omega");
    }
  }
  auto at_most_one = [&](const char* k) {
    if (!j.contains(k)) return;
    const json& v = j.at(k);
    const std::string field = std::string("algorithm.") + k;
    if (v.is_number() && v.get<double>() > 1.0) throw ConfigError(field, "must lie in [0, 1]");
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i].get<double>() > 1.0) throw ConfigError(field + "[" + std::to_string(i) + "]", "must lie in [0, 1]");
      }
    }
  };
  if (a.coupling != "lambda_from_omega") at_most_one("lambda");
  at_most_one("eta");
  at_most_one("omega_trace");
  a.beta_lambda = get_number(j, "beta_lambda", "algorithm.beta_lambda", 0.0);
  check_range(a.beta_lambda, 0.0, 1.0, "algorithm.beta_lambda", true);
  a.beta_eta = get_number(j, "beta_eta", "algorithm.beta_eta", 0.0);
  check_range(a.beta_eta, 0.0, 1.0, "algorithm.beta_eta", true);
  a.eta_from_omega = get_bool(j, "eta_from_omega", "algorithm.eta_from_omega", false);
  a.omega_from_interest = get_bool(j, "omega_from_interest", "algorithm.omega_from_interest", false);
  a.relu = get_bool(j, "relu", "algorithm.relu", true);
  a.reset_followon_on_restart = get_bool(j, "reset_followon_on_restart", "algorithm.reset_followon_on_restart", true);
  if (j.contains("clip_rho")) a.clip_rho = get_bool(j, "clip_rho", "algorithm.clip_rho", false);
  a.init = get_number(j, "init", "algorithm.init", 0.0);

  if (j.contains("eta_f")) {
    if (a.name != "xetd") throw ConfigError("algorithm.eta_f", "only valid with xetd");
    a.eta_f = get_number(j, "eta_f", "algorithm.eta_f", 0.0);
    check_range(a.eta_f, 0.0, 1.0, "algorithm.eta_f");
  }
  if (j.contains("eta_tilde")) {
    if (a.name != "et") throw ConfigError("algorithm.eta_tilde", "only valid with et");
    a.eta_tilde = get_number(j, "eta_tilde", "algorithm.eta_tilde", 1.0);
    check_range(a.eta_tilde, 0.0, 1.0, "algorithm.eta_tilde");
  }
  const bool control = a.kind() != AlgoKind::eval;
  if (j.contains("epsilon")) {
    if (!control) throw ConfigError("algorithm.epsilon", "only valid with control algorithms");
    a.epsilon = get_number(j, "epsilon", "algorithm.epsilon", 0.1);
    check_range(a.epsilon, 0.0, 1.0, "algorithm.epsilon");
  }
  if (j.contains("epsilon_option")) {
    if (a.kind() != AlgoKind::options) throw ConfigError("algorithm.epsilon_option", "only valid with option algorithms");
    a.epsilon_option = get_number(j, "epsilon_option", "algorithm.epsilon_option", 0.0);
    check_range(a.epsilon_option, 0.0, 1.0, "algorithm.epsilon_option");
  }
  if (j.contains("evaluate")) {
    if (control) throw ConfigError("algorithm.evaluate", "only valid with evaluation algorithms");
    a.evaluate = get_as<std::string>(j.at("evaluate"), "algorithm.evaluate");
    if (a.evaluate != "target" && a.evaluate != "behaviour") throw ConfigError("algorithm.evaluate", "must be target or behaviour");
  }
  if (j.contains("relu") && a.name != "xetd") throw ConfigError("algorithm.relu", "only valid with xetd");
  return a;
}

inline EnvConfig parse_env(const json& j) {
  if (!j.is_object()) throw ConfigError("env", "must be an object");
  if (!j.contains("name") || !j.at("name").is_string()) throw ConfigError("env.name", "required string");
  EnvConfig e;
  e.name = j.at("name").get<std::string>();
  if (!kEnvNames.count(e.name)) throw ConfigError("env.name", "unknown environment '" + e.name + "'");
  std::set<std::string> allowed{"name"};
  if (e.name == "two_state_divergence") allowed.insert("gamma");
  if (e.name == "constant_gamma_chain" || e.name == "ring_chain") allowed.insert({"n", "gamma", "p"});
  if (e.name == "two_room_corridor") allowed.insert({"gamma", "p"});
  if (e.name == "open_world") allowed.insert({"eps_r", "eps_p", "eps_o", "width", "height", "gamma", "target"});
  if (e.name == "four_rooms") allowed.insert({"eps_r", "eps_p", "gamma", "reward"});
  check_keys(j, "env", allowed);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string f = "env." + it.key();
    if (it.key() == "name") continue;
    if (it.key() == "target") {
      if (!it->is_string() || (it->get<std::string>() != "up_right" && it->get<std::string>() != "down_left")) {
        throw ConfigError(f, "must be up_right or down_left");
      }
    } else if (!it->is_number()) {
      throw ConfigError(f, "must be a number");
    }
    e.params[it.key()] = *it;
  }
  auto num = [&](const char* k) -> std::optional<double> {
    if (!e.params.contains(k)) return std::nullopt;
    return e.params.at(k).get<double>();
  };
  if (auto v = num("gamma")) check_range(*v, 0.0, 1.0, "env.gamma");
  if (auto v = num("p")) check_range(*v, 0.0, 1.0, "env.p");
  if (auto v = num("eps_p")) check_range(*v, 0.0, 1.0, "env.eps_p");
  if (auto v = num("eps_o")) check_range(*v, 0.0, 1.0, "env.eps_o");
  if (auto v = num("eps_r")) {
    if (!(*v > 0.0 && *v <= 1.0)) throw ConfigError("env.eps_r", "must lie in (0, 1]");
  }
  for (const char* k : {"n", "width", "height"}) {
    if (!e.params.contains(k)) continue;
    const json& v = e.params.at(k);
    if (!v.is_number_integer() || v.get<long long>() < 2) throw ConfigError(std::string("env.") + k, "must be an integer >= 2");
  }
  return e;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  detail::check_keys(j, "",
                     {"name", "env", "algorithm", "schedules", "seeds", "total_steps", "total_episodes", "eval_every",
                      "max_episode_steps", "sweep", "sweep_metric", "oracle"});
  ExperimentConfig c;
  c.raw = j;
  if (j.contains("name")) c.name = detail::get_as<std::string>(j.at("name"), "name");
  if (!j.contains("env")) throw ConfigError("env", "required");
  c.env = detail::parse_env(j.at("env"));
  if (!j.contains("algorithm")) throw ConfigError("algorithm", "required");
  c.algorithm = detail::parse_algorithm(j.at("algorithm"));

  const AlgoKind kind = c.algorithm.kind();
  if (kind == AlgoKind::options && c.env.name != "four_rooms") {
    throw ConfigError("algorithm.name", "option algorithms require env four_rooms");
  }
  if (kind == AlgoKind::control && c.env.name != "four_rooms" && c.env.name != "open_world") {
    throw ConfigError("algorithm.name", "control algorithms require an episodic grid env (four_rooms, open_world)");
  }
  if (kind == AlgoKind::eval && c.env.name == "four_rooms") {
    throw ConfigError("algorithm.name", "four_rooms is a control env");
  }

  if (j.contains("schedules")) {
    const json& s = j.at("schedules");
    detail::check_keys(s, "schedules", {"w", "z", "f"});
    if (s.contains("w")) c.sched_w = detail::parse_schedule(s.at("w"), "schedules.w");
    if (s.contains("z")) c.sched_z = detail::parse_schedule(s.at("z"), "schedules.z");
    if (s.contains("f")) c.sched_f = detail::parse_schedule(s.at("f"), "schedules.f");
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds", "must be a nonempty array of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number_integer() || s[i].get<long long>() < 0) {
        throw ConfigError("seeds[" + std::to_string(i) + "]", "must be a nonnegative integer");
      }
      c.seeds.push_back(s[i].get<std::uint64_t>());
    }
  }
  if (j.contains("total_steps")) c.total_steps = detail::get_count(j, "total_steps", "total_steps");
  if (j.contains("total_episodes")) c.total_episodes = detail::get_count(j, "total_episodes", "total_episodes");
  if (c.total_steps && c.total_episodes) throw ConfigError("total_steps", "give either total_steps or total_episodes");
  if (kind == AlgoKind::eval) {
    if (c.total_episodes) throw ConfigError("total_episodes", "evaluation runs are measured in steps");
    if (!c.total_steps) throw ConfigError("total_steps", "required for evaluation algorithms");
  } else {
    if (c.total_steps) throw ConfigError("total_steps", "control runs are measured in episodes");
    if (!c.total_episodes) throw ConfigError("total_episodes", "required for control algorithms");
  }
  if (j.contains("eval_every")) {
    c.eval_every = detail::get_count(j, "eval_every", "eval_every");
    if (*c.eval_every == 0) throw ConfigError("eval_every", "must be positive");
  }
  if (j.contains("max_episode_steps")) {
    c.max_episode_steps = detail::get_count(j, "max_episode_steps", "max_episode_steps");
    if (c.max_episode_steps == 0) throw ConfigError("max_episode_steps", "must be positive");
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    if (!s.is_object()) throw ConfigError("sweep", "must be an object mapping dotted paths to value lists");
    for (auto it = s.begin(); it != s.end(); ++it) {
      if (!it->is_array() || it->empty()) throw ConfigError("sweep." + it.key(), "must be a nonempty array");
    }
    c.sweep = s;
  }
  if (j.contains("sweep_metric")) c.sweep_metric = detail::get_as<std::string>(j.at("sweep_metric"), "sweep_metric");
  if (j.contains("oracle")) {
    if (!j.at("oracle").is_object()) throw ConfigError("oracle", "must be an object");
    c.oracle = j.at("oracle");
  }
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

/// Sets the value at a dotted path ("algorithm.lambda", "schedules.w.base"), creating objects as needed.
inline void set_dotted(json& j, const std::string& path, const json& value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("sweep." + path, "empty path component");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    if (!cur->is_object()) throw ConfigError("sweep." + path, "path runs through a non-object");
    start = dot + 1;
  }
}

struct SweepCell {
  std::string run_id;
  json assignment;  // path -> value
  ExperimentConfig config;
};

/// Cartesian product over the sweep grid, in lexicographic order of the (sorted) paths. Each cell is
/// re-validated; a config with no sweep yields a single cell.
inline std::vector<SweepCell> expand_sweep(const ExperimentConfig& base) {
  std::vector<std::pair<std::string, json>> axes;
  for (auto it = base.sweep.begin(); it != base.sweep.end(); ++it) axes.emplace_back(it.key(), *it);
  std::vector<SweepCell> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  std::size_t k = 0;
  while (true) {
    json raw = base.raw;
    raw.erase("sweep");
    json assignment = json::object();
    for (std::size_t a = 0; a < axes.size(); ++a) {
      set_dotted(raw, axes[a].first, axes[a].second[idx[a]]);
      assignment[axes[a].first] = axes[a].second[idx[a]];
    }
    SweepCell cell;
    cell.run_id = axes.empty() ? base.name : base.name + "/cell" + std::to_string(k);
    cell.assignment = assignment;
    cell.config = parse_config(raw);
    cell.config.name = cell.run_id;
    out.push_back(std::move(cell));
    ++k;
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

}  // namespace credit::harness
