#pragma once

// Closed-form rules tying the state weighting omega, the trace decay lambda, the discount gamma and
// the trace-bootstrapping parameter eta together so that selective updates stay stable.
//
// Trace code never consumes lambda on its own, only the decay product gamma * lambda. A coupled
// lambda may exceed 1 (when omega = 0), but the product always stays in [0, 1].

#include <cmath>

#include "credit/error.hpp"

namespace credit::couplings {

/// omega = (1 - gamma*lambda) / (1 - gamma): the expected emphasis for constant gamma and unit
/// interest.
inline double omega_from_lambda_const_gamma(double gamma, double lambda) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("omega_from_lambda_const_gamma: gamma must lie in [0, 1)");
  return (1.0 - gamma * lambda) / (1.0 - gamma);
}

/// omega = 1 - gamma*lambda; the normalizer 1/(1 - gamma) is folded into the step size.
inline double omega_from_lambda_unnormalized(double gamma, double lambda) { return 1.0 - gamma * lambda; }

/// lambda = (gamma*omega + 1 - omega) / gamma, the inverse of omega_from_lambda_const_gamma.
inline double lambda_from_omega_const_gamma(double gamma, double omega) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("lambda_from_omega_const_gamma: gamma must lie in (0, 1]");
  return (gamma * omega + (1.0 - omega)) / gamma;
}

/// Decay product gamma*lambda = 1 - omega (1 - beta_lambda) implied by the state-dependent
/// coupling. Zero at soft-terminal states (gamma = 0).
inline double decay_from_omega_dynamic(double gamma, double omega, double beta_lambda) {
  if (!(beta_lambda >= 0.0 && beta_lambda < 1.0)) throw DomainError("beta_lambda must lie in [0, 1)");
  if (gamma == 0.0) return 0.0;
  return 1.0 - omega * (1.0 - beta_lambda);
}

/// lambda = (1 - omega + beta_lambda*omega) / gamma. For gamma = 0 the trace is cut anyway and
/// lambda is reported as 1.
inline double lambda_from_omega_dynamic(double gamma, double omega, double beta_lambda) {
  if (gamma < 0.0) throw DomainError("lambda_from_omega_dynamic: gamma must be nonnegative");
  const double decay = decay_from_omega_dynamic(gamma, omega, beta_lambda);
  if (gamma == 0.0) return 1.0;
  return decay / gamma;
}

/// omega = (1 - gamma*lambda) / (1 - beta_lambda), the forward direction of the dynamic coupling.
/// beta_lambda = gamma recovers the constant-gamma rule, beta_lambda = 0 the unnormalized one.
inline double omega_from_lambda_dynamic(double gamma, double lambda, double beta_lambda) {
  if (!(beta_lambda >= 0.0 && beta_lambda < 1.0)) throw DomainError("beta_lambda must lie in [0, 1)");
  return (1.0 - gamma * lambda) / (1.0 - beta_lambda);
}

/// eta = beta_eta*omega_tilde + (1 - omega_tilde): rely on the expected trace where the trace
/// weighting is high and on the instantaneous trace where it is low.
inline double eta_from_omega(double omega_tilde, double beta_eta) {
  if (!(beta_eta >= 0.0 && beta_eta < 1.0)) throw DomainError("eta_from_omega: beta_eta must lie in [0, 1)");
  if (!(omega_tilde >= 0.0 && omega_tilde <= 1.0)) throw DomainError("eta_from_omega: omega_tilde must lie in [0, 1]");
  return beta_eta * omega_tilde + (1.0 - omega_tilde);
}

}  // namespace credit::couplings
