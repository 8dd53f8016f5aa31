#include <gtest/gtest.h>

#include "credit/credit.hpp"
#include "oracles.hpp"

using namespace credit;

TEST(Stationary, MatchesPowerIteration) {
  RngStream rng(1);
  for (int k = 0; k < 5; ++k) {
    const auto env = envs::random_mdp(3 + k, 2, rng);
    const PolicyChain c = make_chain(env.mdp, env.target);
    const Vector d = stationary_distribution(c);
    EXPECT_LT((d - oracle::stationary_by_iteration(c.P_restart, 5000)).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_NEAR(d.sum(), 1.0, 1e-14);
  }
}

TEST(Stationary, TransientStatesGetZero) {
  Matrix P(3, 3);
  P << 0, 1, 0, 0, 0, 1, 0, 1, 0;
  const Vector d = stationary_distribution(P);
  EXPECT_EQ(d(0), 0.0);
  EXPECT_NEAR(d(1), 0.5, 1e-14);
  EXPECT_NEAR(d(2), 0.5, 1e-14);
  Matrix two = Matrix::Identity(2, 2);
  EXPECT_ANY_THROW(stationary_distribution(two));
}

TEST(RestartKernel, ReroutesTerminalMass) {
  const auto env = envs::three_state_aliasing();
  const PolicyChain c = make_chain(env.mdp, env.target);
  EXPECT_LT((c.P_restart - Matrix::Constant(3, 3, 1.0 / 3.0)).lpNorm<Eigen::Infinity>(), 1e-15);

  const auto ow = envs::open_world(1.0);
  const PolicyChain o = make_chain(ow.env.mdp, ow.env.behaviour);
  EXPECT_LT((o.P_restart.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  for (StateId s = 0; s < ow.env.mdp.n_states(); ++s) {
    if (ow.env.mdp.gamma(s) == 0.0) {
      EXPECT_EQ(o.P_restart.col(static_cast<Eigen::Index>(s)).sum(), 0.0);
    }
  }
}

TEST(TwoState, HandDerivedExpectedUpdate) {
  const auto env = envs::two_state_divergence(0.9);
  // A = sum_s d(s) omega(s) x(s) (x(s) - gamma x(s')) with d = (1/2, 1/2), x = (1, 2).
  auto cfg = SelectivityConfig::uniform(2);
  cfg.omega << 1.0, 0.0;
  const auto bad = analyze_selective_td(env.mdp, env.target, env.behaviour, env.X, cfg);
  EXPECT_NEAR(bad.A(0, 0), 0.5 * (1.0 - 1.8), 1e-15);
  EXPECT_EQ(bad.verdict, Verdict::unstable);
  EXPECT_FALSE(bad.conditions.column_sums_positive);
  cfg.omega << 1.0, 1.0;
  const auto good = analyze_selective_td(env.mdp, env.target, env.behaviour, env.X, cfg);
  EXPECT_NEAR(good.A(0, 0), 0.5 * (1.0 - 1.8) + 0.5 * 2.0 * (2.0 - 0.9), 1e-15);
  EXPECT_EQ(good.verdict, Verdict::stable);
}

TEST(ExpectedUpdate, MatchesSimulatedAverage) {
  RngStream gen(9);
  const auto env = envs::random_mdp(4, 2, gen, 0.9);
  SelectivityConfig cfg = SelectivityConfig::uniform(4, 0.6);
  for (Eigen::Index s = 0; s < 4; ++s) cfg.omega(s) = 0.2 + gen.uniform();
  Matrix Xm(4, 2);
  for (Eigen::Index s = 0; s < 4; ++s) Xm.row(s) << 1.0 + gen.uniform(), gen.uniform();
  const FeatureMap X(Xm);
  const auto rep = analyze_selective_td(env.mdp, env.target, env.behaviour, X, cfg);

  Matrix A = Matrix::Zero(2, 2);
  Vector b = Vector::Zero(2), e = Vector::Zero(2);
  RngStream rng(10);
  StateId s = 0;
  const int T = 400000;
  for (int t = 0; t < T; ++t) {
    const Transition tr = sample_transition(env.mdp, env.target, s, rng);
    e = (t == 0 ? 0.0 : env.mdp.gamma(s) * 0.6) * e + cfg.omega(static_cast<Eigen::Index>(s)) * X.row(s);
    A += e * (X.row(s) - tr.gamma_next * X.row(tr.next_state)).transpose();
    b += tr.reward * e;
    s = tr.successor();
  }
  A /= T;
  b /= T;
  EXPECT_LT((A - rep.A).norm() / rep.A.norm(), 0.02);
  EXPECT_LT((b - rep.b).norm() / rep.b.norm(), 0.03);
}

TEST(KeyMatrix, PLambdaIdentity) {
  RngStream rng(2);
  const auto env = envs::random_mdp(6, 1, rng);
  const PolicyChain c = make_chain(env.mdp, env.target);
  Vector decay(6);
  for (Eigen::Index s = 0; s < 6; ++s) decay(s) = c.gamma(s) * rng.uniform();
  const Matrix lhs = detail::resolvent(c.P, decay) * (Matrix::Identity(6, 6) - c.P * c.gamma.asDiagonal());
  EXPECT_LT((lhs - (Matrix::Identity(6, 6) - p_lambda(c.P, c.gamma, decay))).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(KeyMatrix, CoupledWeightingIsPositive) {
  RngStream rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto env = envs::random_mdp(5, 2, rng);
    auto cfg = SelectivityConfig::uniform(5);
    for (Eigen::Index s = 0; s < 5; ++s) cfg.lambda(s) = rng.uniform();
    cfg.coupling = Coupling::omega_from_lambda;
    const auto rep = analyze_selective_td(env.mdp, env.target, env.behaviour, FeatureMap::one_hot(5), cfg);
    EXPECT_TRUE(rep.conditions.all());
    EXPECT_EQ(rep.verdict, Verdict::stable);
  }
}

TEST(FixedPoint, SingularSystemThrows) {
  Matrix A(2, 2);
  A << 1, 2, 2, 4;
  EXPECT_THROW(fixed_point(A, Vector::Ones(2)), NumericalError);
  EXPECT_EQ(stability_verdict(1e-12), Verdict::marginal);
  EXPECT_EQ(stability_verdict(-1e-3), Verdict::unstable);
}

TEST(Values, MatchValueIteration) {
  RngStream rng(4);
  const auto env = envs::random_mdp(7, 3, rng, 0.95);
  const PolicyChain c = make_chain(env.mdp, env.target);
  EXPECT_LT((true_values(c) - oracle::values_by_iteration(c.P, c.gamma, c.r)).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(FollowOn, ClosedFormMatchesIteration) {
  const auto env = envs::five_state_chain();
  const Matrix P = policy_kernel(env.mdp, env.target);
  const Vector d = stationary_distribution(make_chain(env.mdp, env.behaviour));
  const Vector i = (Vector(5) << 1.0, 0.5, 1.0, 0.0, 2.0).finished();
  const auto cf = expected_followon_closed_form(P, env.mdp.discount(), i, d);
  Vector df = Vector::Zero(5);
  for (int k = 0; k < 5000; ++k) df = i.cwiseProduct(d) + env.mdp.discount().asDiagonal() * (P.transpose() * df);
  EXPECT_LT((cf.d_f - df).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LT((cf.f - df.cwiseQuotient(d)).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(ExpectedTrace, ClosedFormMatchesIteration) {
  const auto env = envs::ring_chain(5, 0.9, 0.8);
  const PolicyChain c = make_chain(env.mdp, env.target);
  const Vector d = stationary_distribution(c);
  const Vector omega = (Vector(5) << 1.0, 0.2, 0.7, 0.0, 0.5).finished();
  const Vector decay = Vector::Constant(5, 0.9 * 0.8);
  const Matrix Z = expected_trace_closed_form(c.P_restart, d, env.X, omega, decay);
  // B(s, k) = d(k) P(k, s) / d(s), written out entry by entry.
  Matrix B(5, 5);
  for (int s = 0; s < 5; ++s) {
    for (int k = 0; k < 5; ++k) B(s, k) = d(k) * c.P(k, s) / d(s);
  }
  Matrix it = Matrix::Zero(5, 5);
  for (int n = 0; n < 2000; ++n) it = omega.asDiagonal() * env.X.matrix() + decay.asDiagonal() * (B * it);
  EXPECT_LT((Z - it).lpNorm<Eigen::Infinity>(), 1e-12);
  const Matrix Zq = expected_trace_closed_form(c.P_restart, d, env.X, omega, decay, TraceConvention::qet);
  EXPECT_LT((Zq - decay.asDiagonal() * (B * it)).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_THROW(backward_option_residual(Z, c.P_restart, d, env.X, omega, decay), DomainError);
}

TEST(Stats, RunningAndConditioned) {
  const std::vector<double> x{1.0, 4.0, 2.5, -3.0, 7.25, 0.0};
  RunningStats r;
  for (double v : x) r.push(v);
  EXPECT_NEAR(r.sample_variance(), oracle::sample_variance(x), 1e-12);
  EXPECT_NEAR(r.mean(), 11.75 / 6.0, 1e-14);
  StateConditionedStats c(2);
  c.push(0, 1.0);
  c.push(0, 3.0);
  c.push(1, 10.0);
  c.push(1, 10.0);
  EXPECT_DOUBLE_EQ(c.within_state_variance(), 0.5 * 1.0);
  EXPECT_GT(c.overall().variance(), 10.0);
  const Vector v = (Vector(2) << 1.0, 3.0).finished(), t = (Vector(2) << 0.0, 0.0).finished();
  EXPECT_DOUBLE_EQ(rmsve(v, t, (Vector(2) << 0.5, 0.5).finished()), std::sqrt(5.0));
}
