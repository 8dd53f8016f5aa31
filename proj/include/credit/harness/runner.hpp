#pragma once

// Experiment execution behind the CLI: environment and selectivity construction from a config,
// seeded runs (evaluation and control), the stability analysis report, the oracle checks and
// parameter sweeps.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "credit/analysis.hpp"
#include "credit/control.hpp"
#include "credit/envs.hpp"
#include "credit/evaluation.hpp"
#include "credit/harness/config.hpp"
#include "credit/harness/logging.hpp"
#include "credit/harness/metrics.hpp"

namespace credit::harness {

// ---------------------------------------------------------------------------------------------
// Environments

struct Environment {
  envs::EvalEnv env;
  std::vector<bool> hallways;            // empty when the env has no hallway labels
  std::optional<envs::FourRooms> rooms;  // control envs with options
  std::size_t option_step_cap = 0;
};

namespace detail {

inline double param(const EnvConfig& e, const char* key, double fallback) {
  return e.params.contains(key) ? e.params.at(key).get<double>() : fallback;
}

inline std::size_t param_count(const EnvConfig& e, const char* key, std::size_t fallback) {
  return e.params.contains(key) ? e.params.at(key).get<std::size_t>() : fallback;
}

inline std::size_t grid_diameter(const TabularMdp& mdp) {
  long worst = 0;
  for (StateId s = 0; s < mdp.n_states(); ++s) {
    for (long d : envs::grid_distances(mdp, s)) worst = std::max(worst, d);
  }
  return static_cast<std::size_t>(worst);
}

}  // namespace detail

inline Environment build_environment(const EnvConfig& e) {
  using detail::param;
  using detail::param_count;
  try {
    if (e.name == "two_state_divergence") return {envs::two_state_divergence(param(e, "gamma", 0.9)), {}, {}, 0};
    if (e.name == "three_state_aliasing") return {envs::three_state_aliasing(), {}, {}, 0};
    if (e.name == "five_state_chain") return {envs::five_state_chain(), {}, {}, 0};
    if (e.name == "constant_gamma_chain") {
      return {envs::constant_gamma_chain(param_count(e, "n", 5), param(e, "gamma", 0.9), param(e, "p", 0.5)), {}, {}, 0};
    }
    if (e.name == "ring_chain") {
      return {envs::ring_chain(param_count(e, "n", 4), param(e, "gamma", 0.9), param(e, "p", 0.7)), {}, {}, 0};
    }
    if (e.name == "two_room_corridor") {
      return {envs::two_room_corridor(param(e, "gamma", 0.9), param(e, "p", 0.7)), envs::two_room_corridor_hallways(), {}, 0};
    }
    if (e.name == "open_world") {
      auto ow = envs::open_world(param(e, "eps_r", 1.0), param_count(e, "width", 11), param_count(e, "height", 11),
                                 param(e, "eps_p", 0.05), param(e, "eps_o", 0.2), param(e, "gamma", 0.99));
      if (e.params.contains("target") && e.params.at("target").get<std::string>() == "down_left") {
        ow.env.target = ow.down_left;
      }
      return {std::move(ow.env), {}, {}, 0};
    }
    if (e.name == "four_rooms") {
      auto fr = envs::four_rooms(param(e, "eps_r", 1.0), param(e, "eps_p", 0.0), param(e, "gamma", 0.98),
                                 param(e, "reward", 10.0));
      const std::size_t n = fr.mdp.n_states();
      Environment out{envs::EvalEnv{"four_rooms", fr.mdp, fr.X, TabularPolicy::uniform(n, 4), TabularPolicy::uniform(n, 4)},
                      fr.hallway_states, std::move(fr), 0};
      out.option_step_cap = 4 * detail::grid_diameter(out.env.mdp);
      return out;
    }
  } catch (const DomainError& ex) {
    throw ConfigError("env", ex.what());
  }
  throw ConfigError("env.name", "unknown environment '" + e.name + "'");
}

// ---------------------------------------------------------------------------------------------
// Selectivity

namespace detail {

inline Vector per_state(const json& v, const std::string& field, std::size_t n, const std::vector<bool>& hallways,
                        const Vector* omega) {
  const auto m = static_cast<Eigen::Index>(n);
  if (v.is_number()) return Vector::Constant(m, v.get<double>());
  if (v.is_array()) {
    if (v.size() != n) {
      throw ConfigError(field, "has " + std::to_string(v.size()) + " entries but the env has " + std::to_string(n) + " states");
    }
    Vector out(m);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    return out;
  }
  const auto name = v.get<std::string>();
  if (name == "hallways") {
    if (hallways.empty()) throw ConfigError(field, "the env has no hallways");
    Vector out(m);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = hallways[i] ? 1.0 : 0.0;
    return out;
  }
  if (name == "omega" && omega) return *omega;
  throw ConfigError(field, "pattern '" + name + "' is not valid here");
}

}  // namespace detail

inline SelectivityConfig build_selectivity(const AlgorithmConfig& a, std::size_t n, const std::vector<bool>& hallways) {
  SelectivityConfig cfg = SelectivityConfig::uniform(n);
  cfg.omega = detail::per_state(a.omega, "algorithm.omega", n, hallways, nullptr);
  cfg.lambda = detail::per_state(a.lambda, "algorithm.lambda", n, hallways, nullptr);
  cfg.eta = detail::per_state(a.eta, "algorithm.eta", n, hallways, nullptr);
  cfg.interest = detail::per_state(a.interest, "algorithm.interest", n, hallways, nullptr);
  cfg.omega_trace = detail::per_state(a.omega_trace, "algorithm.omega_trace", n, hallways, &cfg.omega);
  cfg.beta_lambda = a.beta_lambda;
  cfg.beta_eta = a.beta_eta;
  cfg.eta_from_omega = a.eta_from_omega;
  cfg.omega_from_interest_signal = a.omega_from_interest;
  if (a.coupling == "omega_from_lambda") cfg.coupling = Coupling::omega_from_lambda;
  if (a.coupling == "lambda_from_omega") cfg.coupling = Coupling::lambda_from_omega;
  try {
    cfg.validate(n);
  } catch (const Error& ex) {
    throw ConfigError("algorithm", ex.what());
  }
  return cfg;
}

inline EvalAlgorithm eval_algorithm(const std::string& name) {
  if (name == "td") return EvalAlgorithm::td;
  if (name == "etd") return EvalAlgorithm::etd;
  if (name == "xetd") return EvalAlgorithm::xetd;
  if (name == "et") return EvalAlgorithm::et;
  throw ConfigError("algorithm.name", "'" + name + "' is not an evaluation algorithm");
}

inline ControlAlgorithm control_algorithm(const std::string& name) {
  if (name == "q" || name == "q_options") return ControlAlgorithm::q;
  if (name == "qet" || name == "qet_options") return ControlAlgorithm::qet;
  throw ConfigError("algorithm.name", "'" + name + "' is not a control algorithm");
}

// ---------------------------------------------------------------------------------------------
// Single-seed runs

inline constexpr double kDivergenceNorm = 1e100;

/// Off-policy evaluation run measured in steps. Metrics at step 0 and every eval_every steps.
inline std::vector<MetricRow> run_eval_seed(const ExperimentConfig& c, const Environment& E, std::uint64_t seed) {
  const auto& env = E.env;
  const TabularMdp& mdp = env.mdp;
  const std::size_t n = mdp.n_states();
  const TabularPolicy& mu = env.behaviour;
  const TabularPolicy& pi = c.algorithm.evaluate == "behaviour" ? env.behaviour : env.target;
  const bool on_policy = c.algorithm.evaluate == "behaviour";
  const SelectivityConfig sel = build_selectivity(c.algorithm, n, E.hallways);

  const Vector truth = true_values(make_chain(mdp, pi));
  const Vector d = stationary_distribution(make_chain(mdp, mu));

  EvalOptions opts;
  opts.sched_w = c.sched_w;
  opts.sched_z = c.sched_z;
  opts.sched_f = c.sched_f;
  opts.eta_f = c.algorithm.eta_f;
  opts.eta_tilde = c.algorithm.eta_tilde;
  opts.clip_rho = c.algorithm.clip_rho.value_or(false);
  opts.relu_followon = c.algorithm.relu;
  opts.reset_followon_on_restart = c.algorithm.reset_followon_on_restart;
  opts.w_init = c.algorithm.init;
  const EvalAlgorithm algo = eval_algorithm(c.algorithm.name);
  EvalLearnerState st = make_eval_learner(algo, env.X, mdp.discount(), opts);

  RngStream rng(seed, 0);
  StateId s = rng.categorical(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())));
  const std::uint64_t total = *c.total_steps;
  const std::uint64_t every = c.eval_every.value_or(1000);
  const bool emphatic = algo == EvalAlgorithm::etd || algo == EvalAlgorithm::xetd;

  std::vector<MetricRow> rows;
  auto emit = [&](std::uint64_t step, const char* metric, double value) {
    rows.push_back({c.name, seed, c.algorithm.name, c.env.name, step, metric, value});
  };
  RunningStats emph;
  auto record = [&](std::uint64_t step) {
    emit(step, "rmsve", rmsve(st.v, env.X, truth, d));
    emit(step, "weight_norm", st.v.w.norm());
    if (emphatic && emph.count() > 0) {
      emit(step, "followon_mean", emph.mean());
      emit(step, "followon_var", emph.variance());
      emph = RunningStats();
    }
  };
  record(0);
  for (std::uint64_t t = 1; t <= total; ++t) {
    const ActionId a = mu.sample(s, rng);
    const double rho = on_policy ? 1.0 : importance_ratio(pi, mu, s, a);
    const Transition tr = step_action(mdp, s, a, rng);
    eval_step(st, env.X, tr, sel, rho);
    if (emphatic) emph.push(algo == EvalAlgorithm::etd ? st.followon.F : st.fmodel.predict(env.X, tr.state));
    s = tr.successor();
    const double norm = st.v.w.norm();
    if (!std::isfinite(norm) || norm > kDivergenceNorm) {
      log::warn(c.name + " seed " + std::to_string(seed) + ": weights diverged at step " + std::to_string(t));
      emit(t, "weight_norm", norm);
      emit(t, "rmsve", std::numeric_limits<double>::infinity());
      break;
    }
    if (t % every == 0 || t == total) record(t);
  }
  return rows;
}

/// Episodic control run on a restart env: one steps_per_episode / return pair every eval_every episodes.
inline std::vector<MetricRow> run_control_seed(const ExperimentConfig& c, const Environment& E, std::uint64_t seed) {
  const TabularMdp& mdp = E.env.mdp;
  const FeatureMap& X = E.env.X;
  if (!mdp.has_restart()) throw ConfigError("env", "control runs need a restart distribution");
  const bool with_options = c.algorithm.kind() == AlgoKind::options;
  const SelectivityConfig sel = build_selectivity(c.algorithm, mdp.n_states(), E.hallways);

  OptionSet options;
  if (with_options) {
    options = pretrain_options(mdp, E.rooms->option_specs, 0.9, PretrainMode::value_iteration, seed);
    options.validate(mdp.n_states(), mdp.n_actions());
  }
  const std::size_t n_choices = with_options ? options.size() : mdp.n_actions();

  ControlOptions opts;
  opts.sched_w = c.sched_w;
  opts.sched_z = c.sched_z;
  opts.exploration_eps = c.algorithm.epsilon;
  opts.q_init = c.algorithm.init;
  ControlLearnerState st = make_control_learner(control_algorithm(c.algorithm.name), X, n_choices, mdp.discount(), opts);

  RngStream rng(seed, 0);
  const std::uint64_t every = c.eval_every.value_or(1);
  std::vector<MetricRow> rows;
  auto emit = [&](std::uint64_t ep, const char* metric, double value) {
    rows.push_back({c.name, seed, c.algorithm.name, c.env.name, ep, metric, value});
  };

  std::vector<bool> mask_buf;
  auto mask_at = [&](StateId s) -> const std::vector<bool>* {
    if (!with_options) return nullptr;
    mask_buf = options.available(s);
    for (bool b : mask_buf) {
      if (b) return &mask_buf;
    }
    return nullptr;
  };

  StateId s = mdp.sample_restart(rng);
  for (std::uint64_t ep = 1; ep <= *c.total_episodes; ++ep) {
    std::uint64_t steps = 0;
    double ret = 0.0;
    bool done = false;
    while (!done && steps < c.max_episode_steps) {
      if (!with_options) {
        const ActionId a = epsilon_greedy(st.q, X, s, c.algorithm.epsilon, rng);
        const Transition tr = step_action(mdp, s, a, rng);
        control_step(st, X, tr, sel);
        ++steps;
        ret += tr.reward;
        done = tr.restarted;
        s = tr.successor();
        continue;
      }
      const std::vector<bool>* avail = mask_at(s);
      if (!avail) throw NumericalError("no option is available in state " + std::to_string(s));
      const std::vector<bool> choice_mask = *avail;
      const std::size_t o = epsilon_greedy(st.q, X, s, c.algorithm.epsilon, rng, &choice_mask);
      const OptionSegment seg =
          run_option(mdp, options, o, s, rng, c.algorithm.epsilon_option, E.option_step_cap);
      if (seg.capped) log::debug(c.name + ": option " + options[o].name + " hit the step cap");
      if (seg.steps.empty()) throw NumericalError("option '" + options[o].name + "' made no progress");
      for (Transition tr : seg.steps) {
        tr.action = o;
        control_step(st, X, tr, sel, mask_at(tr.next_state));
        ++steps;
        ret += tr.reward;
        if (tr.restarted) done = true;
      }
      s = seg.steps.back().successor();
    }
    if (!done) {
      // Episode cut at max_episode_steps: start over from the restart distribution.
      st.trace.reset();
      st.episode_start = true;
      s = mdp.sample_restart(rng);
    }
    if (!st.q.w.allFinite()) {
      log::warn(c.name + " seed " + std::to_string(seed) + ": non-finite weights in episode " + std::to_string(ep));
      emit(ep, "steps_per_episode", static_cast<double>(steps));
      emit(ep, "return", ret);
      break;
    }
    if (ep % every == 0 || ep == *c.total_episodes) {
      emit(ep, "steps_per_episode", static_cast<double>(steps));
      emit(ep, "return", ret);
    }
  }
  return rows;
}

inline std::vector<MetricRow> run_seed(const ExperimentConfig& c, const Environment& E, std::uint64_t seed) {
  return c.algorithm.kind() == AlgoKind::eval ? run_eval_seed(c, E, seed) : run_control_seed(c, E, seed);
}

// ---------------------------------------------------------------------------------------------
// Parallel execution

/// Runs job(i) for i in [0, n) on up to `threads` workers. Results land in slot i, so the merge order
/// never depends on scheduling. The first exception (lowest index) is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t n, std::size_t threads, const std::function<R(std::size_t)>& job) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < k; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

struct RunResult {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<MetricRow>> per_seed;
  std::vector<AggregateRow> aggregate;

  std::vector<MetricRow> all_rows() const {
    std::vector<MetricRow> out;
    for (const auto& r : per_seed) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
};

inline RunResult run_experiment(const ExperimentConfig& c, std::size_t threads = 1, std::uint64_t seed_offset = 0) {
  const Environment E = build_environment(c.env);
  RunResult res;
  for (auto s : c.seeds) res.seeds.push_back(s + seed_offset);
  log::info("run " + c.name + ": " + c.algorithm.name + " on " + c.env.name + ", " + std::to_string(res.seeds.size()) +
            " seeds");
  res.per_seed = parallel_map<std::vector<MetricRow>>(res.seeds.size(), threads,
                                                      [&](std::size_t i) { return run_seed(c, E, res.seeds[i]); });
  res.aggregate = aggregate(res.all_rows());
  return res;
}

inline json summary_json(const ExperimentConfig& c, const RunResult& r) {
  json j;
  j["run_id"] = c.name;
  j["algo"] = c.algorithm.name;
  j["env"] = c.env.name;
  j["seeds"] = r.seeds;
  json fin = json::object();
  for (const auto& [key, a] : final_values(r.aggregate)) {
    fin[key.second] = {{"step", a.step}, {"mean", a.mean}, {"stderr", a.stderr_}, {"n", a.n}};
  }
  j["final"] = fin;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

/// Writes seed_<k>.csv per seed, aggregate.csv and summary.json under dir.
inline void write_run(const std::filesystem::path& dir, const ExperimentConfig& c, const RunResult& r) {
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    std::ostringstream os;
    write_metric_rows(os, r.per_seed[i]);
    write_text(dir / ("seed_" + std::to_string(r.seeds[i]) + ".csv"), os.str());
  }
  std::ostringstream agg;
  write_aggregate_rows(agg, r.aggregate);
  write_text(dir / "aggregate.csv", agg.str());
  write_text(dir / "summary.json", summary_json(c, r).dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------
// Sweeps

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<RunResult> runs;
  std::string metric;
  std::vector<double> score;  // final aggregate mean of `metric` per cell (NaN if absent)
  std::size_t best = 0;
};

inline std::string default_metric(const ExperimentConfig& c) {
  if (!c.sweep_metric.empty()) return c.sweep_metric;
  return c.algorithm.kind() == AlgoKind::eval ? "rmsve" : "steps_per_episode";
}

/// Lower is better; non-finite scores never win.
inline SweepResult run_sweep(const ExperimentConfig& base, std::size_t threads = 1, std::uint64_t seed_offset = 0) {
  SweepResult sr;
  sr.cells = expand_sweep(base);
  sr.metric = default_metric(base);
  for (const auto& cell : sr.cells) {
    sr.runs.push_back(run_experiment(cell.config, threads, seed_offset));
    const auto fin = final_values(sr.runs.back().aggregate);
    const auto it = fin.find({cell.run_id, sr.metric});
    sr.score.push_back(it == fin.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.mean);
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sr.score.size(); ++i) {
    if (std::isfinite(sr.score[i]) && sr.score[i] < best) {
      best = sr.score[i];
      sr.best = i;
    }
  }
  return sr;
}

inline void write_sweep(const std::filesystem::path& dir, const SweepResult& sr) {
  std::vector<MetricRow> all;
  for (std::size_t i = 0; i < sr.cells.size(); ++i) {
    write_run(dir / ("cell" + std::to_string(i)), sr.cells[i].config, sr.runs[i]);
    const auto rows = sr.runs[i].all_rows();
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::ostringstream os;
  write_metric_rows(os, all);
  write_text(dir / "sweep.csv", os.str());
  json cells = json::array();
  for (std::size_t i = 0; i < sr.cells.size(); ++i) {
    cells.push_back({{"run_id", sr.cells[i].run_id}, {"assignment", sr.cells[i].assignment},
                     {"score", std::isfinite(sr.score[i]) ? json(sr.score[i]) : json(nullptr)}});
  }
  json j{{"metric", sr.metric}, {"cells", cells}};
  if (!sr.cells.empty()) j["best"] = cells[sr.best];
  write_text(dir / "best.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------
// Analysis report

inline json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json analyze(const ExperimentConfig& c) {
  const Environment E = build_environment(c.env);
  if (c.algorithm.kind() != AlgoKind::eval) throw ConfigError("algorithm.name", "analyze needs an evaluation algorithm");
  const SelectivityConfig sel = build_selectivity(c.algorithm, E.env.mdp.n_states(), E.hallways);
  const TabularPolicy& pi = c.algorithm.evaluate == "behaviour" ? E.env.behaviour : E.env.target;
  const StabilityReport rep = analyze_selective_td(E.env.mdp, pi, E.env.behaviour, E.env.X, sel);
  json eig = json::array();
  for (const auto& z : rep.eigenvalues) eig.push_back({z.real(), z.imag()});
  json j;
  j["env"] = c.env.name;
  j["verdict"] = to_string(rep.verdict);
  j["min_real_eigenvalue"] = rep.min_real_eigenvalue;
  j["eigenvalues"] = eig;
  j["key_conditions"] = {{"diagonal_nonnegative", rep.conditions.diagonal_nonnegative},
                         {"offdiagonal_nonpositive", rep.conditions.offdiagonal_nonpositive},
                         {"row_sums_nonnegative", rep.conditions.row_sums_nonnegative},
                         {"column_sums_positive", rep.conditions.column_sums_positive}};
  j["K"] = matrix_json(rep.K);
  j["A"] = matrix_json(rep.A);
  j["b"] = vector_json(rep.b);
  j["d"] = vector_json(rep.d);
  j["rank_deficient"] = rep.rank_deficient;
  j["fixed_point"] = rep.fixed_point ? vector_json(*rep.fixed_point) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------------------------
// Oracles

struct OracleCheck {
  std::string name;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool pass() const { return std::isfinite(deviation) && deviation < tolerance; }
};

struct OracleReport {
  std::string kind;
  std::vector<OracleCheck> checks;
  bool pass() const {
    for (const auto& c : checks) {
      if (!c.pass()) return false;
    }
    return !checks.empty();
  }
  json to_json() const {
    json arr = json::array();
    for (const auto& c : checks) {
      arr.push_back({{"name", c.name}, {"deviation", c.deviation}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
    }
    return {{"kind", kind}, {"pass", pass()}, {"checks", arr}};
  }
};

namespace detail {

inline double oracle_number(const json& o, const char* key, double fallback) {
  if (!o.contains(key)) return fallback;
  if (!o.at(key).is_number()) throw ConfigError(std::string("oracle.") + key, "must be a number");
  return o.at(key).get<double>();
}

/// An episode under `policy` that reaches a gamma = 0 state within max_len steps. Start states are
/// drawn uniformly among states with gamma > 0.
inline std::vector<Transition> terminated_episode(const TabularMdp& mdp, const std::function<ActionId(StateId)>& act,
                                                  std::size_t max_len, RngStream& rng) {
  std::vector<StateId> starts;
  for (StateId s = 0; s < mdp.n_states(); ++s) {
    if (mdp.gamma(s) > 0.0) starts.push_back(s);
  }
  if (starts.empty()) throw ConfigError("env", "every state has gamma = 0");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<Transition> ep;
    StateId s = starts[rng.uniform_index(starts.size())];
    for (std::size_t k = 0; k < max_len; ++k) {
      Transition tr = step_action(mdp, s, act(s), rng);
      ep.push_back(tr);
      if (tr.gamma_next == 0.0) return ep;
      s = tr.next_state;
    }
  }
  throw ConfigError("env", "no episode terminated within " + std::to_string(max_len) + " steps; use an episodic env");
}

inline double relative_deviation(const Vector& a, const Vector& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

}  // namespace detail

/// Frozen-weight forward view vs. the trace (backward) form on random terminated episodes.
inline OracleReport oracle_forward_view(const ExperimentConfig& c, bool q_form) {
  const Environment E = build_environment(c.env);
  const TabularMdp& mdp = E.env.mdp;
  const SelectivityConfig sel = build_selectivity(c.algorithm, mdp.n_states(), E.hallways);
  const auto episodes = static_cast<std::size_t>(detail::oracle_number(c.oracle, "episodes", 100));
  const auto max_len = static_cast<std::size_t>(detail::oracle_number(c.oracle, "max_length", 12));
  const double tol = detail::oracle_number(c.oracle, "tolerance", 1e-10);
  OracleReport rep{q_form ? "q-forward-view" : "forward-view", {}};
  double worst = 0.0;
  RngStream rng(c.seeds.front(), 0x0f0f);
  for (std::size_t i = 0; i < episodes; ++i) {
    if (q_form) {
      LinearQFn q(mdp.n_actions(), E.env.X.n_features());
      for (Eigen::Index k = 0; k < q.w.size(); ++k) q.w(k) = 2.0 * rng.uniform() - 1.0;
      // Half greedy on the frozen Q, half uniform, so episodes reach a terminal state.
      auto act = [&](StateId s) -> ActionId {
        if (rng.uniform() < 0.5) return rng.uniform_index(mdp.n_actions());
        return greedy_action(q.values(E.env.X, s));
      };
      const auto ep = detail::terminated_episode(mdp, act, max_len, rng);
      const Vector fwd = q_forward_view_updates(ep, E.env.X, q, sel, mdp.discount());
      const Vector bwd = q_backward_view_updates(ep, E.env.X, q, sel, mdp.discount());
      worst = std::max(worst, detail::relative_deviation(bwd, fwd));
    } else {
      LinearValueFn v(E.env.X.n_features());
      for (Eigen::Index k = 0; k < v.w.size(); ++k) v.w(k) = 2.0 * rng.uniform() - 1.0;
      auto act = [&](StateId s) { return E.env.target.sample(s, rng); };
      const auto ep = detail::terminated_episode(mdp, act, max_len, rng);
      const Vector fwd = forward_view_updates(ep, E.env.X, v, sel, mdp.discount());
      const Vector bwd = backward_view_updates(ep, E.env.X, v, sel, mdp.discount());
      worst = std::max(worst, detail::relative_deviation(bwd, fwd));
    }
  }
  rep.checks.push_back({"max relative deviation over " + std::to_string(episodes) + " episodes", worst, tol});
  return rep;
}

/// Learned expected follow-on (X-ETD) against the closed form, on states with positive d.
inline OracleReport oracle_expected_followon(const ExperimentConfig& c) {
  if (c.algorithm.name != "xetd") throw ConfigError("algorithm.name", "the expected-followon oracle runs xetd");
  const Environment E = build_environment(c.env);
  const TabularMdp& mdp = E.env.mdp;
  const double tol = detail::oracle_number(c.oracle, "tolerance", 0.05);
  const SelectivityConfig sel = build_selectivity(c.algorithm, mdp.n_states(), E.hallways);
  const TabularPolicy& pi = c.algorithm.evaluate == "behaviour" ? E.env.behaviour : E.env.target;
  const Vector d = stationary_distribution(make_chain(mdp, E.env.behaviour));
  const auto cf = expected_followon_closed_form(policy_kernel(mdp, pi), mdp.discount(), sel.interest, d);

  OracleReport rep{"expected-followon", {}};
  for (std::uint64_t seed : c.seeds) {
    ExperimentConfig one = c;
    one.seeds = {seed};
    EvalOptions opts;
    opts.sched_w = c.sched_w;
    opts.sched_f = c.sched_f;
    opts.eta_f = c.algorithm.eta_f;
    opts.relu_followon = c.algorithm.relu;
    opts.clip_rho = c.algorithm.clip_rho.value_or(false);
    EvalLearnerState st = make_eval_learner(EvalAlgorithm::xetd, E.env.X, mdp.discount(), opts);
    RngStream rng(seed, 0);
    StateId s = rng.categorical(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())));
    const bool on_policy = c.algorithm.evaluate == "behaviour";
    for (std::uint64_t t = 0; t < *c.total_steps; ++t) {
      const ActionId a = E.env.behaviour.sample(s, rng);
      const double rho = on_policy ? 1.0 : importance_ratio(pi, E.env.behaviour, s, a);
      const Transition tr = step_action(mdp, s, a, rng);
      xetd_step(st, E.env.X, tr, sel, rho);
      s = tr.successor();
    }
    double worst = 0.0;
    for (StateId x = 0; x < mdp.n_states(); ++x) {
      if (cf.undefined[x]) continue;
      const double f = cf.f(static_cast<Eigen::Index>(x));
      worst = std::max(worst, std::abs(st.fmodel.predict(E.env.X, x) - f) / std::abs(f));
    }
    rep.checks.push_back({"seed " + std::to_string(seed) + " max relative error of f", worst, tol});
  }
  return rep;
}

/// Expected trace closed form against the Monte-Carlo mean of the instantaneous trace given S_t, and
/// the online ET model against the closed form.
inline OracleReport oracle_expected_trace(const ExperimentConfig& c) {
  if (c.algorithm.name != "et") throw ConfigError("algorithm.name", "the expected-trace oracle runs et");
  const Environment E = build_environment(c.env);
  const TabularMdp& mdp = E.env.mdp;
  const FeatureMap& X = E.env.X;
  const std::size_t n = mdp.n_states();
  const SelectivityConfig sel = build_selectivity(c.algorithm, n, E.hallways);
  const TabularPolicy& pi = E.env.behaviour;  // on-policy
  const PolicyChain chain = make_chain(mdp, pi);
  const Vector d = stationary_distribution(chain);
  const Vector decay = sel.decay_vector(chain.gamma);
  const Vector omega = sel.omega_vector(chain.gamma);
  const Matrix Z = expected_trace_closed_form(chain.P_restart, d, X, omega, decay);
  const double tol_mc = detail::oracle_number(c.oracle, "tolerance", 0.01);
  const double tol_model = detail::oracle_number(c.oracle, "model_tolerance", 0.05);

  OracleReport rep{"expected-trace", {}};
  for (std::uint64_t seed : c.seeds) {
    RngStream rng(seed, 0);
    EvalOptions opts;
    opts.sched_w = c.sched_w;
    opts.sched_z = c.sched_z;
    opts.eta_tilde = c.algorithm.eta_tilde;
    EvalLearnerState st = make_eval_learner(EvalAlgorithm::et, X, mdp.discount(), opts);
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(X.n_features()));
    std::vector<double> visits(n, 0.0);
    Vector e = Vector::Zero(static_cast<Eigen::Index>(X.n_features()));
    bool start = true;
    StateId s = rng.categorical(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())));
    for (std::uint64_t t = 0; t < *c.total_steps; ++t) {
      const Transition tr = sample_transition(mdp, pi, s, rng);
      e *= start ? 0.0 : decay(static_cast<Eigen::Index>(s));
      e.noalias() += omega(static_cast<Eigen::Index>(s)) * X.row(s);
      sum.row(static_cast<Eigen::Index>(s)) += e.transpose();
      visits[s] += 1.0;
      et_step(st, X, tr, sel, 1.0);
      start = tr.restarted;
      if (start) e.setZero();
      s = tr.successor();
    }
    double worst_mc = 0.0, worst_model = 0.0;
    for (StateId x = 0; x < n; ++x) {
      if (d(static_cast<Eigen::Index>(x)) <= 0.0 || visits[x] == 0.0) continue;
      const Vector zx = Z.row(static_cast<Eigen::Index>(x)).transpose();
      const double scale = std::max(zx.norm(), 1e-12);
      const Vector mc = sum.row(static_cast<Eigen::Index>(x)).transpose() / visits[x];
      worst_mc = std::max(worst_mc, (mc - zx).norm() / scale);
      worst_model = std::max(worst_model, (st.ztrace.predict(X, x) - zx).norm() / scale);
    }
    rep.checks.push_back({"seed " + std::to_string(seed) + " closed form vs simulation mean", worst_mc, tol_mc});
    rep.checks.push_back({"seed " + std::to_string(seed) + " online model vs closed form", worst_model, tol_model});
  }
  return rep;
}

inline OracleReport run_oracle(const std::string& kind, const ExperimentConfig& c) {
  if (kind == "forward-view") return oracle_forward_view(c, false);
  if (kind == "q-forward-view") return oracle_forward_view(c, true);
  if (kind == "expected-followon") return oracle_expected_followon(c);
  if (kind == "expected-trace") return oracle_expected_trace(c);
  throw ConfigError("oracle", "unknown oracle kind '" + kind + "'");
}

}  // namespace credit::harness
