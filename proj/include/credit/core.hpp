#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "credit/couplings.hpp"
#include "credit/error.hpp"
#include "credit/random.hpp"

namespace credit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using StateId = std::size_t;
using ActionId = std::size_t;

inline constexpr double kProbTol = 1e-12;

namespace detail {

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline void check_state(StateId s, std::size_t n, const char* who) {
  if (s >= n) {
    throw DomainError(std::string(who) + ": state " + std::to_string(s) + " out of range [0, " + std::to_string(n) + ")");
  }
}

inline void check_distribution(const Eigen::Ref<const Vector>& p, const std::string& who) {
  if (!p.allFinite() || (p.array() < 0.0).any()) throw DomainError(who + ": entries must be finite and nonnegative");
  if (std::abs(p.sum() - 1.0) > kProbTol) throw DomainError(who + ": must sum to 1 (got " + std::to_string(p.sum()) + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Rewards

/// Point mass, or a Bernoulli payout paying `magnitude` with probability `prob` and 0 otherwise.
struct RewardSpec {
  enum class Kind { point, bernoulli };
  Kind kind = Kind::point;
  double magnitude = 0.0;
  double prob = 1.0;

  static RewardSpec point(double v) { return {Kind::point, v, 1.0}; }
  static RewardSpec bernoulli(double magnitude, double prob) {
    if (!(prob > 0.0 && prob <= 1.0)) throw DomainError("RewardSpec::bernoulli: probability must lie in (0, 1]");
    return {Kind::bernoulli, magnitude, prob};
  }
  /// Payout c/eps with probability eps, so the mean stays c.
  static RewardSpec sparse(double mean, double eps) { return bernoulli(mean / eps, eps); }

  double mean() const { return kind == Kind::point ? magnitude : magnitude * prob; }
  double variance() const { return kind == Kind::point ? 0.0 : magnitude * magnitude * prob * (1.0 - prob); }
  bool is_zero() const { return magnitude == 0.0; }

  // Bernoulli specs always consume exactly one draw, point specs none.
  double sample(RngStream& rng) const {
    if (kind == Kind::point) return magnitude;
    return rng.uniform() < prob ? magnitude : 0.0;
  }
};

// ---------------------------------------------------------------------------------------------
// MDP

/// Finite MDP with state-dependent discount. Entering a state with gamma = 0 ends the return; if a
/// restart distribution is present the agent is then teleported to a fresh start state.
///
/// Rewards are the sum of a per-(s, a) spec and an optional spec paid on entering s'.
class TabularMdp {
 public:
  TabularMdp(std::vector<Matrix> kernel, std::vector<RewardSpec> action_reward, Vector discount,
             std::optional<Vector> restart = std::nullopt, std::vector<RewardSpec> arrival_reward = {})
      : kernel_(std::move(kernel)),
        action_reward_(std::move(action_reward)),
        arrival_reward_(std::move(arrival_reward)),
        discount_(std::move(discount)),
        restart_(std::move(restart)) {
    if (kernel_.empty()) throw DimensionError("TabularMdp: need at least one action");
    n_states_ = static_cast<std::size_t>(kernel_.front().rows());
    n_actions_ = kernel_.size();
    if (n_states_ == 0) throw DimensionError("TabularMdp: need at least one state");
    for (std::size_t a = 0; a < n_actions_; ++a) {
      const Matrix& P = kernel_[a];
      detail::require_dims(static_cast<std::size_t>(P.rows()), n_states_, "TabularMdp kernel rows");
      detail::require_dims(static_cast<std::size_t>(P.cols()), n_states_, "TabularMdp kernel cols");
      for (std::size_t s = 0; s < n_states_; ++s) {
        detail::check_distribution(P.row(static_cast<Eigen::Index>(s)).transpose(),
                                   "TabularMdp P(.|" + std::to_string(s) + "," + std::to_string(a) + ")");
      }
    }
    detail::require_dims(action_reward_.size(), n_states_ * n_actions_, "TabularMdp action rewards");
    if (arrival_reward_.empty()) arrival_reward_.assign(n_states_, RewardSpec::point(0.0));
    detail::require_dims(arrival_reward_.size(), n_states_, "TabularMdp arrival rewards");
    detail::require_dims(static_cast<std::size_t>(discount_.size()), n_states_, "TabularMdp discount");
    if (!discount_.allFinite() || (discount_.array() < 0.0).any() || (discount_.array() > 1.0).any()) {
      throw DomainError("TabularMdp: discount must lie in [0, 1]");
    }
    if (restart_) {
      detail::require_dims(static_cast<std::size_t>(restart_->size()), n_states_, "TabularMdp restart");
      detail::check_distribution(*restart_, "TabularMdp restart");
    }
    build_sampler();
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  const Matrix& kernel(ActionId a) const { return kernel_.at(a); }
  double transition_prob(StateId s, ActionId a, StateId s2) const {
    return kernel_.at(a)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2));
  }
  const RewardSpec& action_reward(StateId s, ActionId a) const { return action_reward_.at(s * n_actions_ + a); }
  const RewardSpec& arrival_reward(StateId s) const { return arrival_reward_.at(s); }
  const Vector& discount() const noexcept { return discount_; }
  double gamma(StateId s) const { return discount_(static_cast<Eigen::Index>(s)); }
  bool has_restart() const noexcept { return restart_.has_value(); }
  const std::optional<Vector>& restart() const noexcept { return restart_; }

  /// E[R | s, a] including the arrival reward of the successor.
  double expected_reward(StateId s, ActionId a) const {
    double r = action_reward(s, a).mean();
    const Matrix& P = kernel_[a];
    for (std::size_t s2 = 0; s2 < n_states_; ++s2) {
      const double p = P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2));
      if (p != 0.0) r += p * arrival_reward_[s2].mean();
    }
    return r;
  }

  StateId sample_next(StateId s, ActionId a, RngStream& rng) const {
    const auto& row = sampler_[s * n_actions_ + a];
    const double u = rng.uniform();
    for (const auto& [s2, cum] : row) {
      if (u < cum) return s2;
    }
    return row.back().first;
  }

  StateId sample_restart(RngStream& rng) const {
    if (!restart_) throw DomainError("TabularMdp: no restart distribution");
    return rng.categorical(std::span<const double>(restart_->data(), static_cast<std::size_t>(restart_->size())));
  }

 private:
  void build_sampler() {
    sampler_.resize(n_states_ * n_actions_);
    for (std::size_t s = 0; s < n_states_; ++s) {
      for (std::size_t a = 0; a < n_actions_; ++a) {
        auto& row = sampler_[s * n_actions_ + a];
        double acc = 0.0;
        for (std::size_t s2 = 0; s2 < n_states_; ++s2) {
          const double p = kernel_[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2));
          if (p <= 0.0) continue;
          acc += p;
          row.emplace_back(s2, acc);
        }
      }
    }
  }

  std::vector<Matrix> kernel_;
  std::vector<RewardSpec> action_reward_;
  std::vector<RewardSpec> arrival_reward_;
  Vector discount_;
  std::optional<Vector> restart_;
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<std::vector<std::pair<StateId, double>>> sampler_;
};

// ---------------------------------------------------------------------------------------------
// Policy

class TabularPolicy {
 public:
  explicit TabularPolicy(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw DimensionError("TabularPolicy: empty matrix");
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
      detail::check_distribution(probs_.row(s).transpose(), "TabularPolicy row " + std::to_string(s));
    }
  }

  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions) {
    return TabularPolicy(Matrix::Constant(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions),
                                          1.0 / static_cast<double>(n_actions)));
  }

  std::size_t n_states() const noexcept { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t n_actions() const noexcept { return static_cast<std::size_t>(probs_.cols()); }
  const Matrix& probs() const noexcept { return probs_; }
  double prob(StateId s, ActionId a) const {
    detail::check_state(s, n_states(), "TabularPolicy::prob");
    return probs_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }

  ActionId sample(StateId s, RngStream& rng) const {
    detail::check_state(s, n_states(), "TabularPolicy::sample");
    const double u = rng.uniform();
    double acc = 0.0;
    ActionId last = 0;
    for (Eigen::Index a = 0; a < probs_.cols(); ++a) {
      const double p = probs_(static_cast<Eigen::Index>(s), a);
      if (p <= 0.0) continue;
      acc += p;
      last = static_cast<ActionId>(a);
      if (u < acc) return last;
    }
    return last;
  }

 private:
  Matrix probs_;
};

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s, a).
inline Matrix policy_kernel(const TabularMdp& mdp, const TabularPolicy& pi) {
  detail::require_dims(pi.n_states(), mdp.n_states(), "policy_kernel states");
  detail::require_dims(pi.n_actions(), mdp.n_actions(), "policy_kernel actions");
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Matrix P = Matrix::Zero(n, n);
  for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
    P += pi.probs().col(static_cast<Eigen::Index>(a)).asDiagonal() * mdp.kernel(a);
  }
  return P;
}

/// Expected one-step reward under pi, arrival rewards included.
inline Vector policy_reward(const TabularMdp& mdp, const TabularPolicy& pi) {
  Vector r = Vector::Zero(static_cast<Eigen::Index>(mdp.n_states()));
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double p = pi.prob(s, a);
      if (p != 0.0) r(static_cast<Eigen::Index>(s)) += p * mdp.expected_reward(s, a);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Features and linear function approximators

class FeatureMap {
 public:
  explicit FeatureMap(Matrix X) : X_(std::move(X)) {
    if (X_.rows() == 0 || X_.cols() == 0) throw DimensionError("FeatureMap: empty matrix");
    if (!X_.allFinite()) throw DomainError("FeatureMap: entries must be finite");
    nonzeros_.resize(static_cast<std::size_t>(X_.rows()));
    for (Eigen::Index s = 0; s < X_.rows(); ++s) {
      for (Eigen::Index j = 0; j < X_.cols(); ++j) {
        if (X_(s, j) != 0.0) nonzeros_[static_cast<std::size_t>(s)].emplace_back(static_cast<std::size_t>(j), X_(s, j));
      }
    }
  }

  static FeatureMap one_hot(std::size_t n) {
    return FeatureMap(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  }

  std::size_t n_states() const noexcept { return static_cast<std::size_t>(X_.rows()); }
  std::size_t n_features() const noexcept { return static_cast<std::size_t>(X_.cols()); }
  const Matrix& matrix() const noexcept { return X_; }
  Vector row(StateId s) const {
    detail::check_state(s, n_states(), "FeatureMap::row");
    return X_.row(static_cast<Eigen::Index>(s)).transpose();
  }
  const std::vector<std::pair<std::size_t, double>>& nonzeros(StateId s) const {
    detail::check_state(s, n_states(), "FeatureMap::nonzeros");
    return nonzeros_[s];
  }
  double dot(StateId s, const Eigen::Ref<const Vector>& w) const {
    double v = 0.0;
    for (const auto& [j, x] : nonzeros(s)) v += x * w(static_cast<Eigen::Index>(j));
    return v;
  }
  bool full_column_rank() const {
    Eigen::FullPivLU<Matrix> lu(X_);
    return lu.rank() == X_.cols();
  }

 private:
  Matrix X_;
  std::vector<std::vector<std::pair<std::size_t, double>>> nonzeros_;
};

/// V(s) = w . x(s).
struct LinearValueFn {
  Vector w;

  LinearValueFn() = default;
  explicit LinearValueFn(std::size_t n_features, double init = 0.0)
      : w(Vector::Constant(static_cast<Eigen::Index>(n_features), init)) {}
  explicit LinearValueFn(Vector weights) : w(std::move(weights)) {}

  std::size_t size() const noexcept { return static_cast<std::size_t>(w.size()); }
  double value(const FeatureMap& X, StateId s) const {
    detail::require_dims(size(), X.n_features(), "LinearValueFn::value");
    return X.dot(s, w);
  }
  Vector gradient(const FeatureMap& X, StateId s) const {
    detail::require_dims(size(), X.n_features(), "LinearValueFn::gradient");
    return X.row(s);
  }
  Vector values(const FeatureMap& X) const {
    detail::require_dims(size(), X.n_features(), "LinearValueFn::values");
    return X.matrix() * w;
  }
};

/// Q(s, a) = w_a . x(s), stored as one flat vector of n_actions blocks of n_features.
struct LinearQFn {
  std::size_t n_actions = 0;
  std::size_t n_features = 0;
  Vector w;

  LinearQFn() = default;
  LinearQFn(std::size_t actions, std::size_t features, double init = 0.0)
      : n_actions(actions), n_features(features), w(Vector::Constant(static_cast<Eigen::Index>(actions * features), init)) {
    if (actions == 0 || features == 0) throw DimensionError("LinearQFn: empty");
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(w.size()); }
  Eigen::Index offset(ActionId a) const {
    if (a >= n_actions) throw DomainError("LinearQFn: action " + std::to_string(a) + " out of range");
    return static_cast<Eigen::Index>(a * n_features);
  }
  auto block(ActionId a) { return w.segment(offset(a), static_cast<Eigen::Index>(n_features)); }
  auto block(ActionId a) const { return w.segment(offset(a), static_cast<Eigen::Index>(n_features)); }

  double value(const FeatureMap& X, StateId s, ActionId a) const {
    detail::require_dims(n_features, X.n_features(), "LinearQFn::value");
    const Eigen::Index off = offset(a);
    double v = 0.0;
    for (const auto& [j, x] : X.nonzeros(s)) v += x * w(off + static_cast<Eigen::Index>(j));
    return v;
  }
  Vector values(const FeatureMap& X, StateId s) const {
    Vector q(static_cast<Eigen::Index>(n_actions));
    for (std::size_t a = 0; a < n_actions; ++a) q(static_cast<Eigen::Index>(a)) = value(X, s, a);
    return q;
  }
  /// Full-length gradient; only block a is nonzero.
  Vector gradient(const FeatureMap& X, StateId s, ActionId a) const {
    Vector g = Vector::Zero(w.size());
    add_gradient(g, X, s, a, 1.0);
    return g;
  }
  /// out += scale * grad Q(s, a) without materializing the gradient.
  void add_gradient(Vector& out, const FeatureMap& X, StateId s, ActionId a, double scale) const {
    detail::require_dims(static_cast<std::size_t>(out.size()), size(), "LinearQFn::add_gradient");
    const Eigen::Index off = offset(a);
    for (const auto& [j, x] : X.nonzeros(s)) out(off + static_cast<Eigen::Index>(j)) += scale * x;
  }
};

// ---------------------------------------------------------------------------------------------
// Selectivity

enum class Coupling {
  none,               // omega, lambda as stored
  omega_from_lambda,  // omega = (1 - gamma*lambda) / (1 - beta_lambda)
  lambda_from_omega,  // gamma*lambda = 1 - omega (1 - beta_lambda)
};

inline const char* to_string(Coupling c) {
  switch (c) {
    case Coupling::none: return "none";
    case Coupling::omega_from_lambda: return "omega_from_lambda";
    case Coupling::lambda_from_omega: return "lambda_from_omega";
  }
  return "?";
}

/// Per-state omega, lambda, eta, interest and trace weighting omega_tilde, plus the coupling rules.
/// Coupled quantities are derived on every query and never cached.
struct SelectivityConfig {
  Vector omega;
  Vector lambda;
  Vector eta;
  Vector interest;
  Vector omega_trace;  // omega_tilde: weight of the expected-trace regression, and the input to eta_from_omega
  double beta_lambda = 0.0;
  double beta_eta = 0.0;
  Coupling coupling = Coupling::none;
  bool eta_from_omega = false;
  bool omega_from_interest_signal = false;  // a per-step interest carried on the transition overrides omega

  static SelectivityConfig uniform(std::size_t n, double lambda = 0.0, double omega = 1.0, double eta = 1.0) {
    const auto m = static_cast<Eigen::Index>(n);
    SelectivityConfig c;
    c.omega = Vector::Constant(m, omega);
    c.lambda = Vector::Constant(m, lambda);
    c.eta = Vector::Constant(m, eta);
    c.interest = Vector::Ones(m);
    c.omega_trace = Vector::Ones(m);
    return c;
  }

  std::size_t n_states() const noexcept { return static_cast<std::size_t>(omega.size()); }

  void validate(std::size_t n) const {
    detail::require_dims(static_cast<std::size_t>(omega.size()), n, "SelectivityConfig omega");
    detail::require_dims(static_cast<std::size_t>(lambda.size()), n, "SelectivityConfig lambda");
    detail::require_dims(static_cast<std::size_t>(eta.size()), n, "SelectivityConfig eta");
    detail::require_dims(static_cast<std::size_t>(interest.size()), n, "SelectivityConfig interest");
    detail::require_dims(static_cast<std::size_t>(omega_trace.size()), n, "SelectivityConfig omega_trace");
    auto nonneg = [](const Vector& v) { return v.allFinite() && (v.array() >= 0.0).all(); };
    if (!nonneg(omega) || !nonneg(lambda) || !nonneg(eta) || !nonneg(interest) || !nonneg(omega_trace)) {
      throw DomainError("SelectivityConfig: per-state values must be finite and nonnegative");
    }
    if (coupling != Coupling::lambda_from_omega && (lambda.array() > 1.0).any()) {
      throw DomainError("SelectivityConfig: lambda > 1 is only allowed when derived from omega");
    }
    if ((eta.array() > 1.0).any()) throw DomainError("SelectivityConfig: eta must lie in [0, 1]");
    if ((omega_trace.array() > 1.0).any()) throw DomainError("SelectivityConfig: omega_trace must lie in [0, 1]");
    if (!(beta_lambda >= 0.0 && beta_lambda < 1.0)) throw DomainError("SelectivityConfig: beta_lambda must lie in [0, 1)");
    if (!(beta_eta >= 0.0 && beta_eta < 1.0)) throw DomainError("SelectivityConfig: beta_eta must lie in [0, 1)");
  }

  double omega_at(StateId s, double gamma_s, std::optional<double> signal = std::nullopt) const {
    if (omega_from_interest_signal && signal) return *signal;
    if (coupling == Coupling::omega_from_lambda) {
      return couplings::omega_from_lambda_dynamic(gamma_s, lambda(static_cast<Eigen::Index>(s)), beta_lambda);
    }
    return omega(static_cast<Eigen::Index>(s));
  }

  double lambda_at(StateId s, double gamma_s) const {
    if (coupling == Coupling::lambda_from_omega) {
      return couplings::lambda_from_omega_dynamic(gamma_s, omega(static_cast<Eigen::Index>(s)), beta_lambda);
    }
    return lambda(static_cast<Eigen::Index>(s));
  }

  /// gamma(s) * lambda(s), the only form in which trace code consumes lambda.
  double decay_at(StateId s, double gamma_s) const {
    if (coupling == Coupling::lambda_from_omega) {
      return couplings::decay_from_omega_dynamic(gamma_s, omega(static_cast<Eigen::Index>(s)), beta_lambda);
    }
    return gamma_s * lambda(static_cast<Eigen::Index>(s));
  }

  /// Discount actually applied at s. A coupled lambda above 1 (omega < 1 with gamma < decay) marks s
  /// as part of a temporally extended transition: s is then treated with gamma = lambda = 1 up to the
  /// decay product, so the discount becomes max(gamma, gamma*lambda) and the bootstrap weight stays >= 0.
  double effective_gamma(StateId s, double gamma_s) const { return std::max(gamma_s, decay_at(s, gamma_s)); }

  /// gamma(s) (1 - lambda(s)), the bootstrap weight of the lambda-return target.
  double bootstrap_at(StateId s, double gamma_s) const { return effective_gamma(s, gamma_s) - decay_at(s, gamma_s); }

  double eta_at(StateId s) const {
    if (eta_from_omega) return couplings::eta_from_omega(omega_trace(static_cast<Eigen::Index>(s)), beta_eta);
    return eta(static_cast<Eigen::Index>(s));
  }

  double interest_at(StateId s, std::optional<double> signal = std::nullopt) const {
    if (signal) return *signal;
    return interest(static_cast<Eigen::Index>(s));
  }

  double omega_trace_at(StateId s) const { return omega_trace(static_cast<Eigen::Index>(s)); }

  /// Dense vectors of the effective per-state quantities, for the analysis module.
  Vector omega_vector(const Vector& gamma) const {
    Vector v(omega.size());
    for (Eigen::Index s = 0; s < v.size(); ++s) v(s) = omega_at(static_cast<StateId>(s), gamma(s));
    return v;
  }
  Vector decay_vector(const Vector& gamma) const {
    Vector v(omega.size());
    for (Eigen::Index s = 0; s < v.size(); ++s) v(s) = decay_at(static_cast<StateId>(s), gamma(s));
    return v;
  }
  Vector effective_gamma_vector(const Vector& gamma) const {
    Vector v(omega.size());
    for (Eigen::Index s = 0; s < v.size(); ++s) v(s) = effective_gamma(static_cast<StateId>(s), gamma(s));
    return v;
  }
};

// ---------------------------------------------------------------------------------------------
// Step sizes

struct StepSizeSchedule {
  enum class Mode { constant, power };
  double base = 0.1;
  double decay = 0.0;
  Mode mode = Mode::constant;

  static StepSizeSchedule constant(double a) { return {a, 0.0, Mode::constant}; }
  static StepSizeSchedule power(double a, double d) { return {a, d, Mode::power}; }

  void validate() const {
    if (!(base > 0.0) || !std::isfinite(base)) throw DomainError("StepSizeSchedule: base must be positive");
    if (!(decay >= 0.0) || !std::isfinite(decay)) throw DomainError("StepSizeSchedule: decay must be nonnegative");
  }

  double at(std::size_t t) const {
    if (t == 0) throw DomainError("StepSizeSchedule: t must be >= 1");
    if (mode == Mode::constant || decay == 0.0) return base;
    return base / std::pow(static_cast<double>(t), decay);
  }
};

inline double step_size(const StepSizeSchedule& sched, std::size_t t) { return sched.at(t); }

// ---------------------------------------------------------------------------------------------
// Transitions

struct Transition {
  StateId state = 0;
  ActionId action = 0;
  double reward = 0.0;
  StateId next_state = 0;
  double gamma_next = 0.0;
  bool restarted = false;
  StateId restart_state = 0;         // valid when restarted
  std::optional<double> interest;    // per-step interest signal emitted by the environment

  /// The state the agent acts from next.
  StateId successor() const noexcept { return restarted ? restart_state : next_state; }
};

/// Executes action a from s. Draw order: successor, action reward, arrival reward, restart.
inline Transition step_action(const TabularMdp& mdp, StateId s, ActionId a, RngStream& rng) {
  detail::check_state(s, mdp.n_states(), "step_action");
  if (a >= mdp.n_actions()) throw DomainError("step_action: action out of range");
  Transition tr;
  tr.state = s;
  tr.action = a;
  tr.next_state = mdp.sample_next(s, a, rng);
  tr.reward = mdp.action_reward(s, a).sample(rng);
  tr.reward += mdp.arrival_reward(tr.next_state).sample(rng);
  tr.gamma_next = mdp.gamma(tr.next_state);
  if (mdp.has_restart() && tr.gamma_next == 0.0) {
    tr.restarted = true;
    tr.restart_state = mdp.sample_restart(rng);
  }
  return tr;
}

inline Transition sample_transition(const TabularMdp& mdp, const TabularPolicy& policy, StateId s, RngStream& rng) {
  detail::check_state(s, mdp.n_states(), "sample_transition");
  detail::require_dims(policy.n_states(), mdp.n_states(), "sample_transition policy states");
  detail::require_dims(policy.n_actions(), mdp.n_actions(), "sample_transition policy actions");
  const ActionId a = policy.sample(s, rng);
  return step_action(mdp, s, a, rng);
}

/// pi(a|s) / mu(a|s).
inline double importance_ratio(const TabularPolicy& target, const TabularPolicy& behaviour, StateId s, ActionId a) {
  const double m = behaviour.prob(s, a);
  if (m <= 0.0) throw DomainError("importance_ratio: behaviour probability is zero for a sampled action");
  return target.prob(s, a) / m;
}

}  // namespace credit
