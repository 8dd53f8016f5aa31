#pragma once

// Exact linear algebra for linear TD with state-dependent gamma, lambda and omega: stationary
// distributions, the key matrix K = D~ (I - P Gamma Lambda)^{-1} (I - P Gamma), the expected update
// A w = b, stability verdicts, closed-form expected traces and follow-ons, and online statistics.
//
// Matrix conventions: P(s, s') is the one-step kernel; Gamma and Lambda act on the *next* state, so
// "P Gamma Lambda" scales column s' by gamma(s') lambda(s'). Callers pass the decay product
// gamma * lambda directly.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "credit/core.hpp"

namespace credit {

inline constexpr double kSolveTol = 1e-10;
inline constexpr double kStabilityMargin = 1e-9;

// ---------------------------------------------------------------------------------------------
// Policy chain

struct PolicyChain {
  Matrix P;          // P_pi(s, s') on the original kernel; entering a gamma = 0 state ends the return
  Matrix P_restart;  // same, with mass entering gamma = 0 states rerouted through the restart distribution
  Vector r;          // expected one-step reward under pi
  Vector gamma;

  std::size_t n_states() const noexcept { return static_cast<std::size_t>(P.rows()); }
};

/// Kernel the agent actually experiences: with a restart distribution, entering a gamma = 0 state is
/// followed by a jump to a restart state. Without one it is the plain kernel.
inline Matrix restart_kernel(const Matrix& P, const Vector& gamma, const std::optional<Vector>& restart) {
  if (!restart) return P;
  Matrix Pe = P;
  Vector ending = Vector::Zero(P.rows());
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    if (gamma(j) != 0.0) continue;
    ending += P.col(j);
    Pe.col(j).setZero();
  }
  Pe.noalias() += ending * restart->transpose();
  return Pe;
}

inline PolicyChain make_chain(const TabularMdp& mdp, const TabularPolicy& pi) {
  PolicyChain c;
  c.P = policy_kernel(mdp, pi);
  c.r = policy_reward(mdp, pi);
  c.gamma = mdp.discount();
  c.P_restart = restart_kernel(c.P, c.gamma, mdp.restart());
  return c;
}

// ---------------------------------------------------------------------------------------------
// Stationary distribution

namespace detail {

inline std::vector<std::vector<bool>> reachability(const Matrix& P) {
  const auto n = static_cast<std::size_t>(P.rows());
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> stack{s};
    reach[s][s] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        if (P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0.0 && !reach[s][v]) {
          reach[s][v] = true;
          stack.push_back(v);
        }
      }
    }
  }
  return reach;
}

}  // namespace detail

/// Closed communicating classes of a Markov kernel.
inline std::vector<std::vector<StateId>> closed_classes(const Matrix& P) {
  const auto reach = detail::reachability(P);
  const std::size_t n = reach.size();
  std::vector<bool> seen(n, false);
  std::vector<std::vector<StateId>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<StateId> cls;
    bool closed = true;
    for (std::size_t v = 0; v < n; ++v) {
      if (reach[s][v] && reach[v][s]) cls.push_back(v);
      else if (reach[s][v]) closed = false;
    }
    for (StateId v : cls) seen[v] = true;
    if (closed) out.push_back(std::move(cls));
  }
  return out;
}

/// d P = d, sum d = 1. States outside the unique closed class get d = 0. Throws NumericalError when
/// the chain has more than one closed class.
inline Vector stationary_distribution(const Matrix& P) {
  if (P.rows() != P.cols()) throw DimensionError("stationary_distribution: kernel must be square");
  const auto classes = closed_classes(P);
  if (classes.size() != 1) {
    std::string msg = "stationary_distribution: chain has " + std::to_string(classes.size()) + " closed classes:";
    for (const auto& c : classes) {
      msg += " {";
      for (std::size_t k = 0; k < c.size(); ++k) msg += (k ? "," : "") + std::to_string(c[k]);
      msg += "}";
    }
    throw NumericalError(msg);
  }
  const Eigen::Index n = P.rows();
  Matrix M = P.transpose() - Matrix::Identity(n, n);
  M.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector d = M.fullPivLu().solve(rhs);
  for (Eigen::Index s = 0; s < n; ++s) d(s) = std::max(0.0, d(s));
  d /= d.sum();
  const double res = (P.transpose() * d - d).lpNorm<Eigen::Infinity>();
  if (!(res <= kSolveTol)) throw NumericalError("stationary_distribution: residual " + std::to_string(res));
  return d;
}

inline Vector stationary_distribution(const PolicyChain& c) { return stationary_distribution(c.P_restart); }

/// Power iteration on the lazy chain (I + P) / 2, which converges for periodic chains too.
inline Vector stationary_distribution_power(const Matrix& P, double tol = 1e-14, std::size_t max_iter = 1000000) {
  const Eigen::Index n = P.rows();
  Vector d = Vector::Constant(n, 1.0 / static_cast<double>(n));
  const Matrix L = 0.5 * (P.transpose() + Matrix::Identity(n, n));
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vector next = L * d;
    next /= next.sum();
    const double change = (next - d).lpNorm<Eigen::Infinity>();
    d = std::move(next);
    if (change < tol) return d;
  }
  throw NumericalError("stationary_distribution_power: no convergence");
}

// ---------------------------------------------------------------------------------------------
// Key matrix, A, b

struct KeyConditions {
  bool diagonal_nonnegative = false;
  bool offdiagonal_nonpositive = false;
  bool row_sums_nonnegative = false;
  bool column_sums_positive = false;
  bool all() const { return diagonal_nonnegative && offdiagonal_nonpositive && row_sums_nonnegative && column_sums_positive; }
};

namespace detail {

inline Matrix resolvent(const Matrix& P, const Vector& decay) {
  const Eigen::Index n = P.rows();
  const Matrix M = Matrix::Identity(n, n) - P * decay.asDiagonal();
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) throw NumericalError("(I - P Gamma Lambda) is singular");
  Matrix R = lu.inverse();
  if (!R.allFinite()) throw NumericalError("(I - P Gamma Lambda)^{-1} is not finite");
  return R;
}

}  // namespace detail

/// K = diag(d * omega) (I - P diag(decay))^{-1} (I - P diag(gamma)).
inline Matrix key_matrix(const Matrix& P, const Vector& gamma, const Vector& decay, const Vector& omega, const Vector& d) {
  const Eigen::Index n = P.rows();
  detail::require_dims(static_cast<std::size_t>(gamma.size()), static_cast<std::size_t>(n), "key_matrix gamma");
  detail::require_dims(static_cast<std::size_t>(decay.size()), static_cast<std::size_t>(n), "key_matrix decay");
  detail::require_dims(static_cast<std::size_t>(omega.size()), static_cast<std::size_t>(n), "key_matrix omega");
  detail::require_dims(static_cast<std::size_t>(d.size()), static_cast<std::size_t>(n), "key_matrix d");
  const Vector dt = d.cwiseProduct(omega);
  return dt.asDiagonal() * detail::resolvent(P, decay) * (Matrix::Identity(n, n) - P * gamma.asDiagonal());
}

inline KeyConditions key_conditions(const Matrix& K, double tol = kSolveTol) {
  KeyConditions c;
  const Eigen::Index n = K.rows();
  c.diagonal_nonnegative = (K.diagonal().array() >= -tol).all();
  c.offdiagonal_nonpositive = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && K(i, j) > tol) c.offdiagonal_nonpositive = false;
    }
  }
  c.row_sums_nonnegative = (K.rowwise().sum().array() >= -tol).all();
  c.column_sums_positive = (K.colwise().sum().array() > tol).all();
  return c;
}

/// P^lambda = (I - P Gamma Lambda)^{-1} P Gamma (I - Lambda), so that
/// (I - P Gamma Lambda)^{-1} (I - P Gamma) = I - P^lambda.
inline Matrix p_lambda(const Matrix& P, const Vector& gamma, const Vector& decay) {
  return detail::resolvent(P, decay) * P * (gamma - decay).asDiagonal();
}

struct ExpectedUpdate {
  Matrix A;
  Vector b;
  bool rank_deficient = false;
};

/// A = X^T K X, b = X^T D~ (I - P Gamma Lambda)^{-1} r.
inline ExpectedUpdate build_ab(const Matrix& P, const Vector& r, const Vector& gamma, const Vector& decay,
                               const Vector& omega, const Vector& d, const FeatureMap& X) {
  detail::require_dims(X.n_states(), static_cast<std::size_t>(P.rows()), "build_ab features");
  const Matrix K = key_matrix(P, gamma, decay, omega, d);
  const Vector dt = d.cwiseProduct(omega);
  ExpectedUpdate out;
  out.A = X.matrix().transpose() * K * X.matrix();
  out.b = X.matrix().transpose() * (dt.asDiagonal() * (detail::resolvent(P, decay) * r));
  out.rank_deficient = !X.full_column_rank();
  return out;
}

// ---------------------------------------------------------------------------------------------
// Stability and fixed points

enum class Verdict { stable, unstable, marginal };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::stable: return "stable";
    case Verdict::unstable: return "unstable";
    case Verdict::marginal: return "marginal";
  }
  return "?";
}

struct StabilityReport {
  Matrix K;
  Matrix A;
  Vector b;
  Vector d;
  std::vector<std::complex<double>> eigenvalues;
  double min_real_eigenvalue = 0.0;
  Verdict verdict = Verdict::marginal;
  KeyConditions conditions;
  bool rank_deficient = false;
  std::optional<Vector> fixed_point;
};

inline Verdict stability_verdict(double min_real, double margin = kStabilityMargin) {
  if (min_real > margin) return Verdict::stable;
  if (min_real < -margin) return Verdict::unstable;
  return Verdict::marginal;
}

/// Verdict from the smallest real part among the eigenvalues of A.
inline StabilityReport stability_check(const Matrix& A, double margin = kStabilityMargin) {
  if (A.rows() != A.cols() || A.rows() == 0) throw DimensionError("stability_check: A must be square and nonempty");
  StabilityReport rep;
  rep.A = A;
  Eigen::EigenSolver<Matrix> es(A, false);
  if (es.info() != Eigen::Success) throw NumericalError("stability_check: eigen decomposition failed");
  rep.min_real_eigenvalue = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const std::complex<double> ev = es.eigenvalues()(i);
    rep.eigenvalues.push_back(ev);
    rep.min_real_eigenvalue = std::min(rep.min_real_eigenvalue, ev.real());
  }
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(),
            [](auto x, auto y) { return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag(); });
  rep.verdict = stability_verdict(rep.min_real_eigenvalue, margin);
  return rep;
}

/// Solves A w = b; throws on a singular A or a residual above tolerance.
inline Vector fixed_point(const Matrix& A, const Vector& b) {
  detail::require_dims(static_cast<std::size_t>(b.size()), static_cast<std::size_t>(A.rows()), "fixed_point");
  Eigen::FullPivLU<Matrix> lu(A);
  if (!lu.isInvertible()) throw NumericalError("fixed_point: A is singular");
  Vector w = lu.solve(b);
  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  const double res = (A * w - b).lpNorm<Eigen::Infinity>();
  if (!(res <= kSolveTol * scale)) throw NumericalError("fixed_point: residual " + std::to_string(res));
  return w;
}

/// Full analysis of selective TD for target pi under behaviour mu (pass pi twice when on-policy).
inline StabilityReport analyze_selective_td(const TabularMdp& mdp, const TabularPolicy& target,
                                            const TabularPolicy& behaviour, const FeatureMap& X,
                                            const SelectivityConfig& cfg) {
  cfg.validate(mdp.n_states());
  const PolicyChain pc = make_chain(mdp, target);
  const Vector d = stationary_distribution(make_chain(mdp, behaviour));
  const Vector gamma = cfg.effective_gamma_vector(pc.gamma);
  const Vector decay = cfg.decay_vector(pc.gamma);
  const Vector omega = cfg.omega_vector(pc.gamma);
  const ExpectedUpdate ab = build_ab(pc.P, pc.r, gamma, decay, omega, d, X);
  StabilityReport rep = stability_check(ab.A);
  rep.K = key_matrix(pc.P, gamma, decay, omega, d);
  rep.b = ab.b;
  rep.d = d;
  rep.conditions = key_conditions(rep.K);
  rep.rank_deficient = ab.rank_deficient;
  if (!ab.rank_deficient) {
    try {
      rep.fixed_point = fixed_point(ab.A, ab.b);
    } catch (const NumericalError&) {
      rep.fixed_point.reset();
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Values, follow-ons, expected traces

/// V = (I - P Gamma)^{-1} r.
inline Vector true_values(const Matrix& P, const Vector& gamma, const Vector& r) {
  const Eigen::Index n = P.rows();
  const Matrix M = Matrix::Identity(n, n) - P * gamma.asDiagonal();
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) throw NumericalError("true_values: (I - P Gamma) is singular");
  Vector v = lu.solve(r);
  const double res = (M * v - r).lpNorm<Eigen::Infinity>();
  if (!(res <= kSolveTol * std::max(1.0, v.lpNorm<Eigen::Infinity>()))) {
    throw NumericalError("true_values: Bellman residual " + std::to_string(res));
  }
  return v;
}

inline Vector true_values(const PolicyChain& c) { return true_values(c.P, c.gamma, c.r); }

struct FollowOnClosedForm {
  Vector f;                // expected follow-on per state (NaN where d = 0)
  Vector d_f;              // follow-on weighted distribution
  std::vector<bool> undefined;
};

/// d^f = (I - Gamma P^T)^{-1} (i . d), f = d^f / d. P is the target-policy kernel and d the behaviour
/// stationary distribution.
inline FollowOnClosedForm expected_followon_closed_form(const Matrix& P, const Vector& gamma, const Vector& interest,
                                                        const Vector& d) {
  const Eigen::Index n = P.rows();
  const Matrix M = Matrix::Identity(n, n) - gamma.asDiagonal() * P.transpose();
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) throw NumericalError("expected_followon_closed_form: (I - Gamma P^T) is singular");
  FollowOnClosedForm out;
  out.d_f = lu.solve(interest.cwiseProduct(d));
  out.f = Vector(n);
  out.undefined.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index s = 0; s < n; ++s) {
    if (d(s) > 0.0) {
      out.f(s) = out.d_f(s) / d(s);
    } else {
      out.f(s) = std::numeric_limits<double>::quiet_NaN();
      out.undefined[static_cast<std::size_t>(s)] = true;
    }
  }
  return out;
}

enum class TraceConvention { et, qet };
enum class BackwardKernel { reweighted, literal };

/// B(s, s~) = d(s~) P(s~, s) / d(s): the distribution of the predecessor s~ given S_t = s. Rows for
/// d(s) = 0 are zero. `literal` uses P^T instead.
inline Matrix backward_kernel(const Matrix& P, const Vector& d, BackwardKernel kind = BackwardKernel::reweighted) {
  if (kind == BackwardKernel::literal) return P.transpose();
  const Eigen::Index n = P.rows();
  Matrix B = Matrix::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    if (d(s) <= 0.0) continue;
    for (Eigen::Index k = 0; k < n; ++k) B(s, k) = d(k) * P(k, s) / d(s);
  }
  return B;
}

/// Solves z(s) = omega(s) x(s) + decay(s) sum_s~ B(s, s~) z(s~) for Z (n_states x n_features).
/// The qet convention returns decay(s) sum_s~ B(s, s~) z(s~), i.e. the decayed previous trace.
inline Matrix expected_trace_closed_form(const Matrix& P, const Vector& d, const FeatureMap& X, const Vector& omega,
                                         const Vector& decay, TraceConvention conv = TraceConvention::et,
                                         BackwardKernel kind = BackwardKernel::reweighted) {
  const Eigen::Index n = P.rows();
  const Matrix B = backward_kernel(P, d, kind);
  const Matrix M = Matrix::Identity(n, n) - decay.asDiagonal() * B;
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) throw NumericalError("expected_trace_closed_form: singular system");
  const Matrix rhs = omega.asDiagonal() * X.matrix();
  Matrix Z = lu.solve(rhs);
  const double res = (M * Z - rhs).lpNorm<Eigen::Infinity>();
  if (!(res <= kSolveTol * std::max(1.0, Z.lpNorm<Eigen::Infinity>()))) {
    throw NumericalError("expected_trace_closed_form: residual " + std::to_string(res));
  }
  if (conv == TraceConvention::qet) return decay.asDiagonal() * (B * Z);
  return Z;
}

/// Worst relative residual over states with d > 0 of
///     z(s) = omega(s) x(s) + (1 - omega(s)) sum_s~ B(s, s~) z(s~),
/// valid when omega = 1 - gamma lambda.
inline double backward_option_residual(const Matrix& Z, const Matrix& P, const Vector& d, const FeatureMap& X,
                                       const Vector& omega, const Vector& decay,
                                       BackwardKernel kind = BackwardKernel::reweighted) {
  const Eigen::Index n = P.rows();
  detail::require_dims(static_cast<std::size_t>(Z.rows()), static_cast<std::size_t>(n), "backward_option_residual");
  for (Eigen::Index s = 0; s < n; ++s) {
    if (std::abs(omega(s) - (1.0 - decay(s))) > 1e-12) {
      throw DomainError("backward_option_residual: omega(" + std::to_string(s) + ") != 1 - gamma lambda");
    }
  }
  const Matrix B = backward_kernel(P, d, kind);
  const Matrix pred = omega.asDiagonal() * X.matrix() + (Vector::Ones(n) - omega).asDiagonal() * (B * Z);
  double worst = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (d(s) <= 0.0) continue;
    const double scale = std::max(Z.row(s).norm(), 1e-12);
    worst = std::max(worst, (Z.row(s) - pred.row(s)).norm() / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------------------------
// Errors and statistics

/// sqrt(sum_s d(s) (v(s) - truth(s))^2).
inline double rmsve(const Vector& v, const Vector& truth, const Vector& weighting) {
  detail::require_dims(static_cast<std::size_t>(v.size()), static_cast<std::size_t>(truth.size()), "rmsve");
  detail::require_dims(static_cast<std::size_t>(weighting.size()), static_cast<std::size_t>(truth.size()), "rmsve weighting");
  if (std::abs(weighting.sum() - 1.0) > 1e-9) throw DomainError("rmsve: weighting must sum to 1");
  return std::sqrt(weighting.dot((v - truth).cwiseAbs2()));
}

inline double rmsve(const LinearValueFn& v, const FeatureMap& X, const Vector& truth, const Vector& weighting) {
  return rmsve(v.values(X), truth, weighting);
}

/// Welford's single-pass mean and variance.
class RunningStats {
 public:
  void push(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ ? m2_ / static_cast<double>(n_) : 0.0; }
  double sample_variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr_of_mean() const noexcept { return n_ > 1 ? std::sqrt(sample_variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Per-state running statistics of a scalar stream, e.g. the emphasis applied at each visit.
class StateConditionedStats {
 public:
  explicit StateConditionedStats(std::size_t n_states) : per_state_(n_states) {}

  void push(StateId s, double x) {
    per_state_.at(s).push(x);
    overall_.push(x);
  }
  const RunningStats& state(StateId s) const { return per_state_.at(s); }
  const RunningStats& overall() const noexcept { return overall_; }

  /// sum_s p(s) Var(x | S = s) with p the empirical visit frequencies.
  double within_state_variance() const {
    const double n = static_cast<double>(overall_.count());
    if (n == 0.0) return 0.0;
    double v = 0.0;
    for (const auto& st : per_state_) v += static_cast<double>(st.count()) / n * st.variance();
    return v;
  }

 private:
  std::vector<RunningStats> per_state_;
  RunningStats overall_;
};

}  // namespace credit
