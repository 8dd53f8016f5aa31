#pragma once

#include <algorithm>
#include <optional>

#include "credit/core.hpp"

namespace credit {

namespace detail {

inline void check_decay(double decay) {
  if (!(decay >= 0.0 && decay <= 1.0 + 1e-12)) throw DomainError("trace decay gamma*lambda must lie in [0, 1]");
}

inline void check_ratio(double rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw DomainError("importance ratio must be finite and nonnegative");
}

}  // namespace detail

/// Clipped importance ratio min(rho, 1) when clipping is on.
inline double clip_ratio(double rho, bool clip) {
  detail::check_ratio(rho);
  return clip ? std::min(rho, 1.0) : rho;
}

// ---------------------------------------------------------------------------------------------
// Instantaneous traces

struct SelectiveTrace {
  Vector e;

  SelectiveTrace() = default;
  explicit SelectiveTrace(std::size_t n) : e(Vector::Zero(static_cast<Eigen::Index>(n))) {}
  void reset() { e.setZero(); }
};

/// e <- decay * e + omega * grad, with decay = gamma(S_t) lambda(S_t).
inline void accumulate_selective(SelectiveTrace& tr, double decay, double omega, const Eigen::Ref<const Vector>& grad) {
  detail::require_dims(static_cast<std::size_t>(grad.size()), static_cast<std::size_t>(tr.e.size()), "accumulate_selective");
  detail::check_decay(decay);
  tr.e *= decay;
  tr.e.noalias() += omega * grad;
}

inline void accumulate_selective(SelectiveTrace& tr, double gamma, double lambda, double omega,
                                 const Eigen::Ref<const Vector>& grad) {
  accumulate_selective(tr, gamma * lambda, omega, grad);
}

/// e <- rho_hat * decay * e + omega * grad, rho_hat = min(rho_prev, 1) when clipping.
inline void accumulate_offpolicy(SelectiveTrace& tr, double rho_prev, double decay, double omega,
                                 const Eigen::Ref<const Vector>& grad, bool clip_rho) {
  const double rho = clip_ratio(rho_prev, clip_rho);
  detail::check_decay(decay);
  detail::require_dims(static_cast<std::size_t>(grad.size()), static_cast<std::size_t>(tr.e.size()), "accumulate_offpolicy");
  tr.e *= rho * decay;
  tr.e.noalias() += omega * grad;
}

// ---------------------------------------------------------------------------------------------
// Follow-on trace and emphasis

struct FollowOnState {
  double F = 0.0;
  double M = 0.0;
  void reset() { F = 0.0; M = 0.0; }
};

/// F <- gamma rho_prev F + i;  M <- lambda i + (1 - lambda) F.
inline void followon_step(FollowOnState& st, double gamma, double rho_prev, double interest, double lambda) {
  detail::check_ratio(rho_prev);
  if (!(gamma >= 0.0) || !(interest >= 0.0)) throw DomainError("followon_step: gamma and interest must be nonnegative");
  st.F = gamma * rho_prev * st.F + interest;
  st.M = lambda * interest + (1.0 - lambda) * st.F;
  if (!std::isfinite(st.F)) throw NumericalError("followon_step: follow-on trace overflowed");
}

// ---------------------------------------------------------------------------------------------
// Mixture traces

struct MixtureTraceState {
  Vector e_eta;        // usage trace
  Vector e_tilde_eta;  // learning-target trace

  MixtureTraceState() = default;
  explicit MixtureTraceState(std::size_t n)
      : e_eta(Vector::Zero(static_cast<Eigen::Index>(n))), e_tilde_eta(Vector::Zero(static_cast<Eigen::Index>(n))) {}
  void reset() {
    e_eta.setZero();
    e_tilde_eta.setZero();
  }
};

enum class MixtureWhich { usage, learning };

/// trace <- (1 - eta) z + eta (decay * trace + grad). `grad` already carries any omega weighting.
inline void mixture_trace_update(Vector& trace, const Eigen::Ref<const Vector>& z, double eta, double decay,
                                 const Eigen::Ref<const Vector>& grad) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("mixture_trace_step: eta must lie in [0, 1]");
  detail::check_decay(decay);
  detail::require_dims(static_cast<std::size_t>(z.size()), static_cast<std::size_t>(trace.size()), "mixture_trace_step z");
  detail::require_dims(static_cast<std::size_t>(grad.size()), static_cast<std::size_t>(trace.size()), "mixture_trace_step grad");
  trace = (1.0 - eta) * z + eta * (decay * trace + grad);
}

inline void mixture_trace_step(MixtureTraceState& st, const Eigen::Ref<const Vector>& z, double eta, double decay,
                               const Eigen::Ref<const Vector>& grad, MixtureWhich which) {
  mixture_trace_update(which == MixtureWhich::usage ? st.e_eta : st.e_tilde_eta, z, eta, decay, grad);
}

// ---------------------------------------------------------------------------------------------
// Expected trace model z(s) = Theta x(s)

struct ExpectedTraceModel {
  Matrix theta;  // n_params x n_features

  ExpectedTraceModel() = default;
  ExpectedTraceModel(std::size_t n_params, std::size_t n_features)
      : theta(Matrix::Zero(static_cast<Eigen::Index>(n_params), static_cast<Eigen::Index>(n_features))) {}

  std::size_t n_params() const noexcept { return static_cast<std::size_t>(theta.rows()); }

  Vector predict(const FeatureMap& X, StateId s) const {
    detail::require_dims(static_cast<std::size_t>(theta.cols()), X.n_features(), "ExpectedTraceModel::predict");
    Vector z = Vector::Zero(theta.rows());
    for (const auto& [j, x] : X.nonzeros(s)) z.noalias() += x * theta.col(static_cast<Eigen::Index>(j));
    return z;
  }

  void reset() { theta.setZero(); }
};

/// Theta <- Theta + alpha * omega_tilde * (target - z(s)) x(s)^T. Only columns with x_j(s) != 0 change.
inline void expected_trace_regress(ExpectedTraceModel& m, const FeatureMap& X, StateId s,
                                   const Eigen::Ref<const Vector>& target, double alpha, double omega_tilde) {
  detail::require_dims(static_cast<std::size_t>(target.size()), m.n_params(), "expected_trace_regress");
  if (omega_tilde == 0.0 || alpha == 0.0) return;
  const Vector err = target - m.predict(X, s);
  const double scale = alpha * omega_tilde;
  for (const auto& [j, x] : X.nonzeros(s)) m.theta.col(static_cast<Eigen::Index>(j)).noalias() += (scale * x) * err;
}

// ---------------------------------------------------------------------------------------------
// Expected follow-on model f(s) = phi . x(s)

struct ExpectedFollowOnModel {
  Vector phi;
  bool clamp = false;  // ReLU on the output

  ExpectedFollowOnModel() = default;
  explicit ExpectedFollowOnModel(std::size_t n_features, bool relu = false, double init = 0.0)
      : phi(Vector::Constant(static_cast<Eigen::Index>(n_features), init)), clamp(relu) {}

  double raw(const FeatureMap& X, StateId s) const {
    detail::require_dims(static_cast<std::size_t>(phi.size()), X.n_features(), "ExpectedFollowOnModel");
    return X.dot(s, phi);
  }
  double predict(const FeatureMap& X, StateId s) const {
    const double v = raw(X, s);
    return clamp ? std::max(0.0, v) : v;
  }
};

/// Regresses f(S_t) toward
///     i(S_t) + gamma(S_t) rho_{t-1} [ (1 - eta_f) f(S_{t-1}) + eta_f F_{t-1} ].
/// eta_f = 1 regresses on the instantaneous follow-on F_t; eta_f = 0 is backward TD on f.
/// With no predecessor (episode start) the target is the interest alone.
///
/// The gradient is taken through the pre-activation, so a clamped model whose raw output went
/// negative can still recover.
inline double expected_followon_update(ExpectedFollowOnModel& m, const FeatureMap& X, StateId s,
                                       std::optional<StateId> s_prev, double F_prev, double interest,
                                       double gamma_rho_prev, double eta_f, double alpha) {
  if (!(eta_f >= 0.0 && eta_f <= 1.0)) throw DomainError("expected_followon_update: eta_f must lie in [0, 1]");
  double target = interest;
  if (s_prev) {
    const double carried = (1.0 - eta_f) * m.predict(X, *s_prev) + eta_f * F_prev;
    target += gamma_rho_prev * carried;
  }
  const double err = target - m.predict(X, s);
  for (const auto& [j, x] : X.nonzeros(s)) m.phi(static_cast<Eigen::Index>(j)) += alpha * err * x;
  return target;
}

}  // namespace credit
