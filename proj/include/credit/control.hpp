#pragma once

// Control: Q(lambda, omega) with the max bootstrap inside the lambda-return, QET with state-only
// expected traces, and an options layer for learning over pre-trained room-to-hallway options.

#include <limits>
#include <optional>
#include <vector>

#include "credit/core.hpp"
#include "credit/traces.hpp"

namespace credit {

// ---------------------------------------------------------------------------------------------
// Action selection

/// Greedy action with ties broken by the lowest index, restricted to `mask` when given.
inline ActionId greedy_action(const Vector& q, const std::vector<bool>* mask = nullptr) {
  std::optional<ActionId> best;
  for (Eigen::Index a = 0; a < q.size(); ++a) {
    if (mask && !(*mask)[static_cast<std::size_t>(a)]) continue;
    if (!best || q(a) > q(static_cast<Eigen::Index>(*best))) best = static_cast<ActionId>(a);
  }
  if (!best) throw DomainError("greedy_action: no available action");
  return *best;
}

inline double max_value(const Vector& q, const std::vector<bool>* mask = nullptr) {
  return q(static_cast<Eigen::Index>(greedy_action(q, mask)));
}

/// Argmax with probability 1 - eps, otherwise uniform over the available actions. Always consumes one
/// draw for the coin and one more when exploring.
inline ActionId epsilon_greedy(const LinearQFn& q, const FeatureMap& X, StateId s, double eps, RngStream& rng,
                               const std::vector<bool>* mask = nullptr) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("epsilon_greedy: eps must lie in [0, 1]");
  if (mask) detail::require_dims(mask->size(), q.n_actions, "epsilon_greedy mask");
  const bool explore = rng.uniform() < eps;
  if (explore) {
    if (!mask) return rng.uniform_index(q.n_actions);
    std::vector<ActionId> avail;
    for (std::size_t a = 0; a < q.n_actions; ++a) {
      if ((*mask)[a]) avail.push_back(a);
    }
    if (avail.empty()) throw DomainError("epsilon_greedy: no available action");
    return avail[rng.uniform_index(avail.size())];
  }
  return greedy_action(q.values(X, s), mask);
}

// ---------------------------------------------------------------------------------------------
// Learners

enum class ControlAlgorithm { q, qet };

inline const char* to_string(ControlAlgorithm a) { return a == ControlAlgorithm::q ? "q" : "qet"; }

struct ControlOptions {
  StepSizeSchedule sched_w = StepSizeSchedule::constant(0.1);
  StepSizeSchedule sched_z = StepSizeSchedule::constant(0.1);
  double exploration_eps = 0.1;
  double q_init = 0.0;
};

struct ControlLearnerState {
  ControlAlgorithm algo = ControlAlgorithm::q;
  ControlOptions opts;
  Vector gamma;
  LinearQFn q;
  SelectiveTrace trace;      // over all action blocks
  ExpectedTraceModel ztrace;  // conditioned on the state only
  std::size_t t = 0;
  bool episode_start = true;
  double last_target = 0.0;  // R^lambda of the last step
};

inline ControlLearnerState make_control_learner(ControlAlgorithm algo, const FeatureMap& X, std::size_t n_actions,
                                                Vector gamma, ControlOptions opts = {}) {
  detail::require_dims(static_cast<std::size_t>(gamma.size()), X.n_states(), "make_control_learner gamma");
  opts.sched_w.validate();
  opts.sched_z.validate();
  if (!(opts.exploration_eps >= 0.0 && opts.exploration_eps <= 1.0)) throw DomainError("exploration eps must lie in [0, 1]");
  ControlLearnerState st;
  st.algo = algo;
  st.opts = opts;
  st.gamma = std::move(gamma);
  st.q = LinearQFn(n_actions, X.n_features(), opts.q_init);
  st.trace = SelectiveTrace(st.q.size());
  if (algo == ControlAlgorithm::qet) st.ztrace = ExpectedTraceModel(st.q.size(), X.n_features());
  return st;
}

namespace detail {

// Steps (3)-(5) shared by both learners: target, update, restart.
inline void q_update_tail(ControlLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                          double omega, const std::vector<bool>* next_mask) {
  const StateId s2 = tr.next_state;
  const Vector q_next = st.q.values(X, s2);
  const ActionId a_next = greedy_action(q_next, next_mask);
  const double target = tr.reward + cfg.bootstrap_at(s2, tr.gamma_next) * q_next(static_cast<Eigen::Index>(a_next));
  const double q_sa = st.q.value(X, tr.state, tr.action);
  const double alpha = st.opts.sched_w.at(st.t);
  st.q.w.noalias() += (alpha * target) * st.trace.e;
  st.q.add_gradient(st.q.w, X, tr.state, tr.action, -alpha * omega * q_sa);
  st.last_target = target;
  st.episode_start = false;
  if (tr.restarted) {
    st.trace.reset();
    st.episode_start = true;
  }
}

}  // namespace detail

/// Q(lambda, omega):
///   e <- gamma lambda(S) e + omega(S) grad Q(S, A)
///   R^lambda = R + gamma' (1 - lambda') max_a Q(S', a)
///   w <- w + alpha (R^lambda e - omega(S) Q(S, A) grad Q(S, A))
inline void q_step(ControlLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                   const std::vector<bool>* next_mask = nullptr) {
  detail::check_state(tr.state, X.n_states(), "q_step");
  detail::check_state(tr.next_state, X.n_states(), "q_step");
  ++st.t;
  const StateId s = tr.state;
  const double gs = st.gamma(static_cast<Eigen::Index>(s));
  const double decay = st.episode_start ? 0.0 : cfg.decay_at(s, gs);
  detail::check_decay(decay);
  const double omega = cfg.omega_at(s, gs, tr.interest);
  st.trace.e *= decay;
  st.q.add_gradient(st.trace.e, X, s, tr.action, omega);
  detail::q_update_tail(st, X, tr, cfg, omega, next_mask);
}

/// QET(eta, lambda, omega):
///   (1) Theta <- Theta + alpha_z omega~(S) (gamma lambda(S) e - z(S)) x(S)^T
///   (2) e <- eta gamma lambda(S) e + (1 - eta) z(S) + omega(S) grad Q(S, A)
///   (3)-(5) as in q_step, with a' = argmax Q(S', .) taken before the target.
inline void qet_step(ControlLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                     const std::vector<bool>* next_mask = nullptr) {
  if (st.algo != ControlAlgorithm::qet) throw DomainError("qet_step: learner was not built for expected traces");
  detail::check_state(tr.state, X.n_states(), "qet_step");
  detail::check_state(tr.next_state, X.n_states(), "qet_step");
  ++st.t;
  const StateId s = tr.state;
  const double gs = st.gamma(static_cast<Eigen::Index>(s));
  const double decay = st.episode_start ? 0.0 : cfg.decay_at(s, gs);
  detail::check_decay(decay);
  const double omega = cfg.omega_at(s, gs, tr.interest);
  const double eta = cfg.eta_at(s);

  const Vector carried = decay * st.trace.e;
  expected_trace_regress(st.ztrace, X, s, carried, st.opts.sched_z.at(st.t), cfg.omega_trace_at(s));
  if (eta == 1.0) {
    st.trace.e = carried;
  } else {
    st.trace.e = eta * carried + (1.0 - eta) * st.ztrace.predict(X, s);
  }
  st.q.add_gradient(st.trace.e, X, s, tr.action, omega);
  detail::q_update_tail(st, X, tr, cfg, omega, next_mask);
}

inline void control_step(ControlLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                         const std::vector<bool>* next_mask = nullptr) {
  if (st.algo == ControlAlgorithm::q) {
    q_step(st, X, tr, cfg, next_mask);
  } else {
    qet_step(st, X, tr, cfg, next_mask);
  }
}

/// Forward view of Q(lambda, omega) with frozen weights over a complete episode:
///     sum_t omega_t (G_t - Q(S_t, A_t)) grad Q(S_t, A_t),
///     G_t = R_{t+1} + gamma'(1 - lambda') max_a Q(S_{t+1}, a) + gamma' lambda' G_{t+1}.
inline Vector q_forward_view_updates(const std::vector<Transition>& episode, const FeatureMap& X, const LinearQFn& q,
                                     const SelectivityConfig& cfg, const Vector& gamma) {
  if (episode.empty()) throw DomainError("q_forward_view_updates: empty episode");
  if (episode.back().gamma_next != 0.0) throw DomainError("q_forward_view_updates: episode is not terminated");
  Vector total = Vector::Zero(q.w.size());
  double G = 0.0;
  for (std::size_t k = episode.size(); k-- > 0;) {
    const Transition& tr = episode[k];
    const double decay_next = cfg.decay_at(tr.next_state, tr.gamma_next);
    G = tr.reward + cfg.bootstrap_at(tr.next_state, tr.gamma_next) * max_value(q.values(X, tr.next_state)) + decay_next * G;
    const double omega = cfg.omega_at(tr.state, gamma(static_cast<Eigen::Index>(tr.state)), tr.interest);
    q.add_gradient(total, X, tr.state, tr.action, omega * (G - q.value(X, tr.state, tr.action)));
  }
  return total;
}

/// Trace form of the same sum: sum_t (R^lambda_t e_t - omega_t Q(S_t, A_t) grad Q(S_t, A_t)).
inline Vector q_backward_view_updates(const std::vector<Transition>& episode, const FeatureMap& X, const LinearQFn& q,
                                      const SelectivityConfig& cfg, const Vector& gamma) {
  Vector total = Vector::Zero(q.w.size());
  Vector e = Vector::Zero(q.w.size());
  for (std::size_t k = 0; k < episode.size(); ++k) {
    const Transition& tr = episode[k];
    const double gs = gamma(static_cast<Eigen::Index>(tr.state));
    const double omega = cfg.omega_at(tr.state, gs, tr.interest);
    e *= (k == 0) ? 0.0 : cfg.decay_at(tr.state, gs);
    q.add_gradient(e, X, tr.state, tr.action, omega);
    const double target = tr.reward + cfg.bootstrap_at(tr.next_state, tr.gamma_next) * max_value(q.values(X, tr.next_state));
    total += target * e;
    q.add_gradient(total, X, tr.state, tr.action, -omega * q.value(X, tr.state, tr.action));
  }
  return total;
}

// ---------------------------------------------------------------------------------------------
// Options

struct Option {
  TabularPolicy policy;
  std::vector<bool> termination;
  std::vector<bool> initiation;
  std::string name;
};

struct OptionSet {
  std::vector<Option> options;

  std::size_t size() const noexcept { return options.size(); }
  const Option& operator[](std::size_t o) const { return options.at(o); }

  /// Options whose initiation set contains s.
  std::vector<bool> available(StateId s) const {
    std::vector<bool> m(options.size(), false);
    for (std::size_t o = 0; o < options.size(); ++o) m[o] = options[o].initiation.at(s);
    return m;
  }

  void validate(std::size_t n_states, std::size_t n_actions) const {
    if (options.empty()) throw DomainError("OptionSet: empty");
    for (const auto& o : options) {
      detail::require_dims(o.termination.size(), n_states, "Option termination");
      detail::require_dims(o.initiation.size(), n_states, "Option initiation");
      detail::require_dims(o.policy.n_states(), n_states, "Option policy states");
      detail::require_dims(o.policy.n_actions(), n_actions, "Option policy actions");
      bool any = false;
      for (bool b : o.termination) any = any || b;
      if (!any) throw DomainError("OptionSet: option '" + o.name + "' has an empty termination set");
    }
  }
};

struct OptionSegment {
  std::vector<Transition> steps;
  double discount = 1.0;  // product of gamma(S') over the segment
  double reward = 0.0;    // discounted cumulative reward
  StateId exit_state = 0; // last state reached (the entered terminal state on a restart)
  bool restarted = false;
  bool capped = false;
};

/// Executes option o from s with eps_o random primitive actions until a termination state, a gamma = 0
/// state, or `step_cap` primitive steps.
inline OptionSegment run_option(const TabularMdp& mdp, const OptionSet& options, std::size_t o, StateId s, RngStream& rng,
                                double eps_o, std::size_t step_cap) {
  const Option& opt = options[o];
  detail::check_state(s, mdp.n_states(), "run_option");
  if (!opt.initiation.at(s) && !opt.termination.at(s)) {
    throw DomainError("run_option: state " + std::to_string(s) + " is outside the initiation set of '" + opt.name + "'");
  }
  OptionSegment seg;
  seg.exit_state = s;
  StateId cur = s;
  while (!opt.termination[cur]) {
    if (seg.steps.size() >= step_cap) {
      seg.capped = true;
      break;
    }
    ActionId a;
    if (rng.uniform() < eps_o) {
      a = rng.uniform_index(mdp.n_actions());
    } else {
      a = opt.policy.sample(cur, rng);
    }
    Transition tr = step_action(mdp, cur, a, rng);
    seg.reward += seg.discount * tr.reward;
    seg.discount *= tr.gamma_next;
    seg.steps.push_back(tr);
    seg.exit_state = tr.next_state;
    if (tr.gamma_next == 0.0) {
      seg.restarted = tr.restarted;
      break;
    }
    cur = tr.next_state;
  }
  return seg;
}

/// Per-option subgoal spec for pre-training: the option may start anywhere in `region` and succeeds on
/// reaching `subgoal`.
struct OptionSpec {
  std::vector<bool> region;
  StateId subgoal = 0;
  std::string name;
};

enum class PretrainMode { value_iteration, q_learning };

namespace detail {

// Deterministic-dynamics surrogate: the most likely successor of each (s, a).
inline std::vector<StateId> mode_successors(const TabularMdp& mdp) {
  std::vector<StateId> next(mdp.n_states() * mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      Eigen::Index j;
      mdp.kernel(a).row(static_cast<Eigen::Index>(s)).maxCoeff(&j);
      next[s * mdp.n_actions() + a] = static_cast<StateId>(j);
    }
  }
  return next;
}

}  // namespace detail

/// Learns a greedy policy per option toward its subgoal with intra-option discount gamma_o and reward 1
/// on reaching the subgoal, restricted to the option's region plus the subgoal. Uses the most likely
/// successor of every action, i.e. the dynamics without slip.
inline OptionSet pretrain_options(const TabularMdp& mdp, const std::vector<OptionSpec>& specs, double gamma_o = 0.9,
                                  PretrainMode mode = PretrainMode::value_iteration, std::uint64_t seed = 0,
                                  std::size_t q_learning_steps = 200000) {
  const std::size_t nS = mdp.n_states();
  const std::size_t nA = mdp.n_actions();
  const auto next = detail::mode_successors(mdp);
  OptionSet out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const OptionSpec& sp = specs[k];
    detail::require_dims(sp.region.size(), nS, "OptionSpec region");
    detail::check_state(sp.subgoal, nS, "OptionSpec subgoal");
    auto inside = [&](StateId x) { return x == sp.subgoal || sp.region[x]; };
    Matrix Q = Matrix::Zero(static_cast<Eigen::Index>(nS), static_cast<Eigen::Index>(nA));
    auto backup = [&](StateId x, ActionId a) {
      const StateId y = next[x * nA + a];
      if (y == sp.subgoal) return 1.0;
      if (!inside(y)) return 0.0;
      return gamma_o * Q.row(static_cast<Eigen::Index>(y)).maxCoeff();
    };
    if (mode == PretrainMode::value_iteration) {
      for (std::size_t it = 0; it < 10 * nS + 100; ++it) {
        double change = 0.0;
        for (std::size_t x = 0; x < nS; ++x) {
          if (!sp.region[x] || x == sp.subgoal) continue;
          for (std::size_t a = 0; a < nA; ++a) {
            const double v = backup(x, a);
            change = std::max(change, std::abs(v - Q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a))));
            Q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) = v;
          }
        }
        if (change < 1e-13) break;
      }
    } else {
      RngStream rng(seed, 0x0971 + k);
      std::vector<StateId> starts;
      for (std::size_t x = 0; x < nS; ++x) {
        if (sp.region[x] && x != sp.subgoal) starts.push_back(x);
      }
      if (starts.empty()) throw DomainError("pretrain_options: empty region for '" + sp.name + "'");
      StateId x = starts[rng.uniform_index(starts.size())];
      for (std::size_t i = 0; i < q_learning_steps; ++i) {
        const ActionId a = rng.uniform_index(nA);  // uniform behaviour; Q-learning is off-policy
        const StateId y = next[x * nA + a];
        const double target = backup(x, a);
        auto& qa = Q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a));
        qa += 0.5 * (target - qa);
        x = (y == sp.subgoal || !inside(y)) ? starts[rng.uniform_index(starts.size())] : y;
      }
    }
    Matrix pi = Matrix::Zero(static_cast<Eigen::Index>(nS), static_cast<Eigen::Index>(nA));
    std::vector<bool> term(nS, true);
    std::vector<bool> init(nS, false);
    for (std::size_t x = 0; x < nS; ++x) {
      ActionId a = 0;
      if (sp.region[x] && x != sp.subgoal) {
        const Vector row = Q.row(static_cast<Eigen::Index>(x)).transpose();
        if (row.maxCoeff() <= 0.0) {
          throw DomainError("pretrain_options: subgoal of '" + sp.name + "' unreachable from state " + std::to_string(x));
        }
        // Ties within 1e-12 go to the lowest action so both pretraining modes agree.
        const double best = row.maxCoeff();
        while (row(static_cast<Eigen::Index>(a)) < best - 1e-12) ++a;
        term[x] = false;
        init[x] = true;
      }
      pi(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) = 1.0;
    }
    out.options.push_back(Option{TabularPolicy(std::move(pi)), std::move(term), std::move(init), sp.name});
  }
  return out;
}

}  // namespace credit
