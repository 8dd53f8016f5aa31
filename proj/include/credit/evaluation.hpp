#pragma once

// Online policy evaluation: selective TD(lambda, omega), emphatic TD, emphatic TD with a learned
// expected follow-on, and expected traces. Every learner consumes one Transition per call.
//
// Off-policy ratios: the step is given rho_t = pi(A_t|S_t) / mu(A_t|S_t); the previous ratio is kept
// in the state. Pass rho = 1 for on-policy learning.

#include <optional>
#include <vector>

#include "credit/core.hpp"
#include "credit/traces.hpp"

namespace credit {

enum class EvalAlgorithm { td, etd, xetd, et };

inline const char* to_string(EvalAlgorithm a) {
  switch (a) {
    case EvalAlgorithm::td: return "td";
    case EvalAlgorithm::etd: return "etd";
    case EvalAlgorithm::xetd: return "xetd";
    case EvalAlgorithm::et: return "et";
  }
  return "?";
}

struct EvalOptions {
  StepSizeSchedule sched_w = StepSizeSchedule::constant(0.1);
  StepSizeSchedule sched_z = StepSizeSchedule::constant(0.1);  // expected trace Theta
  StepSizeSchedule sched_f = StepSizeSchedule::constant(0.1);  // expected follow-on phi
  double eta_f = 0.0;       // follow-on target mixing (xetd)
  double eta_tilde = 1.0;   // learning-target trace mixing (et)
  bool clip_rho = false;
  bool relu_followon = true;
  bool reset_followon_on_restart = true;
  double w_init = 0.0;
};

struct EvalLearnerState {
  EvalAlgorithm algo = EvalAlgorithm::td;
  EvalOptions opts;
  Vector gamma;  // per-state discount of the environment
  LinearValueFn v;
  SelectiveTrace trace;
  MixtureTraceState mix;
  FollowOnState followon;
  ExpectedTraceModel ztrace;
  ExpectedFollowOnModel fmodel;
  std::size_t t = 0;
  double rho_prev = 1.0;
  bool episode_start = true;
  std::optional<StateId> prev_state;  // predecessor for the follow-on model
  double emphasis = 0.0;              // weight applied to x(S_t) on the last step (M_t, m_t or omega)
  double last_delta = 0.0;
};

inline EvalLearnerState make_eval_learner(EvalAlgorithm algo, const FeatureMap& X, Vector gamma, EvalOptions opts = {}) {
  detail::require_dims(static_cast<std::size_t>(gamma.size()), X.n_states(), "make_eval_learner gamma");
  opts.sched_w.validate();
  opts.sched_z.validate();
  opts.sched_f.validate();
  if (!(opts.eta_f >= 0.0 && opts.eta_f <= 1.0)) throw DomainError("eta_f must lie in [0, 1]");
  if (!(opts.eta_tilde >= 0.0 && opts.eta_tilde <= 1.0)) throw DomainError("eta_tilde must lie in [0, 1]");
  EvalLearnerState st;
  st.algo = algo;
  st.opts = opts;
  st.gamma = std::move(gamma);
  const std::size_t n = X.n_features();
  st.v = LinearValueFn(n, opts.w_init);
  st.trace = SelectiveTrace(n);
  if (algo == EvalAlgorithm::et) {
    st.mix = MixtureTraceState(n);
    st.ztrace = ExpectedTraceModel(n, n);
  }
  if (algo == EvalAlgorithm::xetd) st.fmodel = ExpectedFollowOnModel(n, opts.relu_followon);
  return st;
}

namespace detail {

inline void add_scaled_features(Vector& out, const FeatureMap& X, StateId s, double scale) {
  for (const auto& [j, x] : X.nonzeros(s)) out(static_cast<Eigen::Index>(j)) += scale * x;
}

inline double td_error(const EvalLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg) {
  const double g = cfg.effective_gamma(tr.next_state, tr.gamma_next);
  return tr.reward + g * st.v.value(X, tr.next_state) - st.v.value(X, tr.state);
}

inline void finish_step(EvalLearnerState& st, const Transition& tr, double rho) {
  st.rho_prev = rho;
  st.episode_start = false;
  st.prev_state = tr.state;
  if (tr.restarted) {
    st.trace.reset();
    if (st.algo == EvalAlgorithm::et) st.mix.reset();
    if (st.opts.reset_followon_on_restart) st.followon.reset();
    st.rho_prev = 1.0;
    st.episode_start = true;
    st.prev_state.reset();
  }
}

inline void begin_step(EvalLearnerState& st, const FeatureMap& X, const Transition& tr) {
  detail::check_state(tr.state, X.n_states(), "eval step");
  detail::check_state(tr.next_state, X.n_states(), "eval step");
  ++st.t;
}

}  // namespace detail

/// Selective TD(lambda, omega): e <- rho_{t-1} gamma lambda e + omega x(S), w <- w + alpha rho_t delta e.
inline double td_step(EvalLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                      double rho = 1.0) {
  detail::begin_step(st, X, tr);
  const StateId s = tr.state;
  const double gs = st.gamma(static_cast<Eigen::Index>(s));
  const double decay = st.episode_start ? 0.0 : cfg.decay_at(s, gs);
  const double omega = cfg.omega_at(s, gs, tr.interest);
  const double rho_now = clip_ratio(rho, st.opts.clip_rho);
  detail::check_decay(decay);
  st.trace.e *= clip_ratio(st.rho_prev, st.opts.clip_rho) * decay;
  detail::add_scaled_features(st.trace.e, X, s, omega);
  st.emphasis = omega;
  const double delta = detail::td_error(st, X, tr, cfg);
  st.v.w.noalias() += (st.opts.sched_w.at(st.t) * rho_now * delta) * st.trace.e;
  st.last_delta = delta;
  detail::finish_step(st, tr, rho);
  return delta;
}

/// Emphatic TD: F <- gamma rho_{t-1} F + i, M <- lambda i + (1 - lambda) F,
/// e <- rho_t (gamma lambda e + M x(S)), w <- w + alpha delta e.
inline double etd_step(EvalLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                       double rho = 1.0) {
  detail::begin_step(st, X, tr);
  const StateId s = tr.state;
  const double gs = st.gamma(static_cast<Eigen::Index>(s));
  const double decay = st.episode_start ? 0.0 : cfg.decay_at(s, gs);
  const double lambda = cfg.lambda_at(s, gs);
  const double interest = cfg.interest_at(s, tr.interest);
  const double rho_now = clip_ratio(rho, st.opts.clip_rho);
  followon_step(st.followon, st.episode_start ? 0.0 : gs, clip_ratio(st.rho_prev, st.opts.clip_rho), interest, lambda);
  st.emphasis = st.followon.M;
  detail::check_decay(decay);
  st.trace.e *= decay;
  detail::add_scaled_features(st.trace.e, X, s, st.followon.M);
  st.trace.e *= rho_now;
  const double delta = detail::td_error(st, X, tr, cfg);
  st.v.w.noalias() += (st.opts.sched_w.at(st.t) * delta) * st.trace.e;
  st.last_delta = delta;
  detail::finish_step(st, tr, rho);
  return delta;
}

/// Emphatic TD whose emphasis uses the learned expected follow-on: m = lambda i + (1 - lambda) f(S).
/// The instantaneous follow-on is still tracked (it is the eta_f > 0 regression target).
inline double xetd_step(EvalLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                        double rho = 1.0) {
  detail::begin_step(st, X, tr);
  const StateId s = tr.state;
  const double gs = st.gamma(static_cast<Eigen::Index>(s));
  const double decay = st.episode_start ? 0.0 : cfg.decay_at(s, gs);
  const double lambda = cfg.lambda_at(s, gs);
  const double interest = cfg.interest_at(s, tr.interest);
  const double rho_now = clip_ratio(rho, st.opts.clip_rho);
  const double rho_prev = clip_ratio(st.rho_prev, st.opts.clip_rho);
  const double gamma_rho_prev = st.episode_start ? 0.0 : gs * rho_prev;

  const double f = st.fmodel.predict(X, s);
  const double m = lambda * interest + (1.0 - lambda) * f;
  st.emphasis = m;
  const double F_prev = st.followon.F;
  followon_step(st.followon, st.episode_start ? 0.0 : gs, rho_prev, interest, lambda);
  expected_followon_update(st.fmodel, X, s, st.episode_start ? std::nullopt : st.prev_state, F_prev, interest,
                           gamma_rho_prev, st.opts.eta_f, st.opts.sched_f.at(st.t));

  detail::check_decay(decay);
  st.trace.e *= decay;
  detail::add_scaled_features(st.trace.e, X, s, m);
  st.trace.e *= rho_now;
  const double delta = detail::td_error(st, X, tr, cfg);
  st.v.w.noalias() += (st.opts.sched_w.at(st.t) * delta) * st.trace.e;
  st.last_delta = delta;
  detail::finish_step(st, tr, rho);
  return delta;
}

/// Expected traces ET(lambda, eta, omega).
///  1. z = Theta x(S).
///  2. target = rho_{t-1} gamma lambda e~_{t-1} + omega x(S); Theta regresses z(S) toward it with weight omega~(S).
///  3. learning trace e~ <- (1 - eta~) z + eta~ target.
///  4. usage trace e <- (1 - eta) z' + eta (rho_{t-1} gamma lambda e + omega x(S)), z' from the updated Theta.
///  5. w <- w + alpha rho_t delta e.
inline double et_step(EvalLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                      double rho = 1.0) {
  if (st.algo != EvalAlgorithm::et) throw DomainError("et_step: learner was not built for expected traces");
  detail::begin_step(st, X, tr);
  const StateId s = tr.state;
  const double gs = st.gamma(static_cast<Eigen::Index>(s));
  const double decay = st.episode_start ? 0.0 : cfg.decay_at(s, gs);
  detail::check_decay(decay);
  const double omega = cfg.omega_at(s, gs, tr.interest);
  const double eta = cfg.eta_at(s);
  const double rho_now = clip_ratio(rho, st.opts.clip_rho);
  const double carry = clip_ratio(st.rho_prev, st.opts.clip_rho) * decay;

  const Vector z = st.ztrace.predict(X, s);
  Vector target = carry * st.mix.e_tilde_eta;
  detail::add_scaled_features(target, X, s, omega);
  expected_trace_regress(st.ztrace, X, s, target, st.opts.sched_z.at(st.t), cfg.omega_trace_at(s));
  st.mix.e_tilde_eta = (1.0 - st.opts.eta_tilde) * z + st.opts.eta_tilde * target;

  const Vector z_post = st.ztrace.predict(X, s);
  Vector inst = carry * st.mix.e_eta;
  detail::add_scaled_features(inst, X, s, omega);
  st.mix.e_eta = (1.0 - eta) * z_post + eta * inst;
  st.emphasis = omega;

  const double delta = detail::td_error(st, X, tr, cfg);
  st.v.w.noalias() += (st.opts.sched_w.at(st.t) * rho_now * delta) * st.mix.e_eta;
  st.last_delta = delta;
  detail::finish_step(st, tr, rho);
  return delta;
}

inline double eval_step(EvalLearnerState& st, const FeatureMap& X, const Transition& tr, const SelectivityConfig& cfg,
                        double rho = 1.0) {
  switch (st.algo) {
    case EvalAlgorithm::td: return td_step(st, X, tr, cfg, rho);
    case EvalAlgorithm::etd: return etd_step(st, X, tr, cfg, rho);
    case EvalAlgorithm::xetd: return xetd_step(st, X, tr, cfg, rho);
    case EvalAlgorithm::et: return et_step(st, X, tr, cfg, rho);
  }
  throw DomainError("eval_step: unknown algorithm");
}

/// Offline forward view with frozen weights over one complete episode:
///     sum_t omega(S_t) (G^lambda_t - V(S_t)) x(S_t),
///     G^lambda_t = R_{t+1} + gamma_{t+1} (1 - lambda_{t+1}) V(S_{t+1}) + gamma_{t+1} lambda_{t+1} G^lambda_{t+1}.
/// The episode must end on a transition into a gamma = 0 state.
inline Vector forward_view_updates(const std::vector<Transition>& episode, const FeatureMap& X, const LinearValueFn& v,
                                   const SelectivityConfig& cfg, const Vector& gamma) {
  if (episode.empty()) throw DomainError("forward_view_updates: empty episode");
  if (episode.back().gamma_next != 0.0) throw DomainError("forward_view_updates: episode is not terminated");
  for (std::size_t k = 1; k < episode.size(); ++k) {
    if (episode[k].state != episode[k - 1].next_state) throw DomainError("forward_view_updates: broken trajectory");
  }
  Vector total = Vector::Zero(v.w.size());
  double G = 0.0;
  for (std::size_t k = episode.size(); k-- > 0;) {
    const Transition& tr = episode[k];
    const double decay_next = cfg.decay_at(tr.next_state, tr.gamma_next);
    const double boot_next = cfg.bootstrap_at(tr.next_state, tr.gamma_next);
    G = tr.reward + boot_next * v.value(X, tr.next_state) + decay_next * G;
    const StateId s = tr.state;
    const double omega = cfg.omega_at(s, gamma(static_cast<Eigen::Index>(s)), tr.interest);
    detail::add_scaled_features(total, X, s, omega * (G - v.value(X, s)));
  }
  return total;
}

/// Backward view with frozen weights: sum_t delta_t e_t, e_t = gamma_t lambda_t e_{t-1} + omega_t x_t.
inline Vector backward_view_updates(const std::vector<Transition>& episode, const FeatureMap& X, const LinearValueFn& v,
                                    const SelectivityConfig& cfg, const Vector& gamma) {
  Vector total = Vector::Zero(v.w.size());
  Vector e = Vector::Zero(v.w.size());
  for (std::size_t k = 0; k < episode.size(); ++k) {
    const Transition& tr = episode[k];
    const StateId s = tr.state;
    const double gs = gamma(static_cast<Eigen::Index>(s));
    e *= (k == 0) ? 0.0 : cfg.decay_at(s, gs);
    detail::add_scaled_features(e, X, s, cfg.omega_at(s, gs, tr.interest));
    const double delta =
        tr.reward + cfg.effective_gamma(tr.next_state, tr.gamma_next) * v.value(X, tr.next_state) - v.value(X, s);
    total += delta * e;
  }
  return total;
}

}  // namespace credit
