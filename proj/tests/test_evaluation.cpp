#include <gtest/gtest.h>

#include "credit/credit.hpp"
#include "oracles.hpp"

using namespace credit;

namespace {

// Random walk on 0..6 with gamma = 0 at both ends (self-loops there) and 0.9 inside; two actions
// with random rewards.
envs::EvalEnv episodic_walk(RngStream& rng) {
  const Eigen::Index n = 7;
  Matrix L = Matrix::Zero(n, n), R = Matrix::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const bool end = s == 0 || s == n - 1;
    L(s, end ? s : s - 1) = 1.0;
    R(s, end ? s : s + 1) = 1.0;
  }
  std::vector<RewardSpec> r;
  for (int k = 0; k < 2 * n; ++k) r.push_back(RewardSpec::point(2.0 * rng.uniform() - 1.0));
  Vector gamma = Vector::Constant(n, 0.9);
  gamma(0) = gamma(n - 1) = 0.0;
  Matrix X(n, 3);
  for (Eigen::Index s = 0; s < n; ++s) X.row(s) << 1.0, static_cast<double>(s) / 6.0, rng.uniform();
  auto pi = TabularPolicy::uniform(static_cast<std::size_t>(n), 2);
  return {"walk", TabularMdp({L, R}, r, gamma), FeatureMap(X), pi, pi};
}

std::vector<Transition> walk_episode(const envs::EvalEnv& env, RngStream& rng) {
  std::vector<Transition> ep;
  StateId s = 3;
  while (true) {
    ep.push_back(sample_transition(env.mdp, env.target, s, rng));
    if (ep.back().gamma_next == 0.0) return ep;
    s = ep.back().next_state;
  }
}

TabularPolicy random_policy(std::size_t n, std::size_t k, RngStream& rng) {
  Matrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    for (Eigen::Index a = 0; a < p.cols(); ++a) p(s, a) = 0.1 + rng.uniform();
    p.row(s) /= p.row(s).sum();
  }
  return TabularPolicy(p);
}

}  // namespace

TEST(TD, ZeroLambdaIsTabularTD0) {
  const auto env = envs::ring_chain(5, 0.8, 0.6);
  const auto cfg = SelectivityConfig::uniform(5);
  EvalOptions opts;
  opts.sched_w = StepSizeSchedule::constant(0.1);
  auto st = make_eval_learner(EvalAlgorithm::td, env.X, env.mdp.discount(), opts);
  std::vector<double> V(5, 0.0);
  RngStream rng(4);
  StateId s = 0;
  for (int t = 0; t < 2000; ++t) {
    const Transition tr = sample_transition(env.mdp, env.target, s, rng);
    td_step(st, env.X, tr, cfg);
    V[tr.state] += 0.1 * (tr.reward + 0.8 * V[tr.next_state] - V[tr.state]);
    s = tr.successor();
  }
  for (StateId x = 0; x < 5; ++x) EXPECT_NEAR(st.v.w(static_cast<Eigen::Index>(x)), V[x], 1e-12);
}

TEST(TD, OffPolicyTraceMatchesExplicitSum) {
  RngStream gen(17);
  const auto env = envs::random_mdp(5, 3, gen, 0.9);
  const TabularPolicy mu = random_policy(5, 3, gen);
  SelectivityConfig cfg = SelectivityConfig::uniform(5);
  for (Eigen::Index s = 0; s < 5; ++s) {
    cfg.lambda(s) = gen.uniform();
    cfg.omega(s) = gen.uniform();
  }
  Matrix X(5, 2);
  for (Eigen::Index s = 0; s < 5; ++s) X.row(s) << gen.uniform(), gen.uniform();
  const FeatureMap F(X);
  EvalOptions opts;
  opts.sched_w = StepSizeSchedule::power(0.05, 0.3);
  auto st = make_eval_learner(EvalAlgorithm::td, F, env.mdp.discount(), opts);

  Vector w = Vector::Zero(2);
  std::vector<StateId> states;
  std::vector<double> rhos;
  RngStream rng(2);
  StateId s = 0;
  for (std::size_t t = 1; t <= 300; ++t) {
    const ActionId a = mu.sample(s, rng);
    const double rho = importance_ratio(env.target, mu, s, a);
    const Transition tr = step_action(env.mdp, s, a, rng);
    td_step(st, F, tr, cfg, rho);
    states.push_back(s);
    rhos.push_back(rho);
    Vector e = Vector::Zero(2);
    for (std::size_t k = 0; k < states.size(); ++k) {
      double prod = 1.0;
      for (std::size_t j = k + 1; j < states.size(); ++j) {
        prod *= rhos[j - 1] * env.mdp.gamma(states[j]) * cfg.lambda(static_cast<Eigen::Index>(states[j]));
      }
      e += prod * cfg.omega(static_cast<Eigen::Index>(states[k])) * F.row(states[k]);
    }
    const double delta = tr.reward + env.mdp.gamma(tr.next_state) * F.row(tr.next_state).dot(w) - F.row(s).dot(w);
    w += opts.sched_w.at(t) * rho * delta * e;
    s = tr.successor();
  }
  EXPECT_LT((st.v.w - w).norm(), 1e-10 * std::max(1.0, w.norm()));
}

TEST(TD, RestartCutsTheTrace) {
  const auto env = envs::three_state_aliasing();
  auto with = SelectivityConfig::uniform(3, 0.9);
  auto without = SelectivityConfig::uniform(3, 0.0);
  auto a = make_eval_learner(EvalAlgorithm::td, env.X, env.mdp.discount());
  auto b = make_eval_learner(EvalAlgorithm::td, env.X, env.mdp.discount());
  RngStream rng(1);
  StateId s = 0;
  for (int t = 0; t < 500; ++t) {
    const Transition tr = sample_transition(env.mdp, env.target, s, rng);
    ASSERT_TRUE(tr.restarted);
    td_step(a, env.X, tr, with);
    td_step(b, env.X, tr, without);
    s = tr.successor();
  }
  EXPECT_EQ(a.v.w, b.v.w);
}

TEST(ETD, MatchesHandWrittenRecursion) {
  const auto env = envs::five_state_chain();
  const auto cfg = SelectivityConfig::uniform(5, 0.4);
  EvalOptions opts;
  opts.sched_w = StepSizeSchedule::constant(0.02);
  auto st = make_eval_learner(EvalAlgorithm::etd, env.X, env.mdp.discount(), opts);
  Vector w = Vector::Zero(3), e = Vector::Zero(3);
  double F = 0.0, rho_prev = 1.0;
  bool first = true;
  RngStream rng(6);
  StateId s = 2;
  for (int t = 0; t < 3000; ++t) {
    const ActionId a = env.behaviour.sample(s, rng);
    const double rho = importance_ratio(env.target, env.behaviour, s, a);
    const Transition tr = step_action(env.mdp, s, a, rng);
    etd_step(st, env.X, tr, cfg, rho);
    const double g = first ? 0.0 : env.mdp.gamma(s);
    F = g * rho_prev * F + 1.0;
    const double M = 0.4 + 0.6 * F;
    e = rho * (g * 0.4 * e + M * env.X.row(s));
    const double delta = tr.reward + env.mdp.gamma(tr.next_state) * env.X.row(tr.next_state).dot(w) - env.X.row(s).dot(w);
    w += 0.02 * delta * e;
    rho_prev = rho;
    first = false;
    s = tr.successor();
  }
  EXPECT_LT((st.v.w - w).norm(), 1e-10 * w.norm());
  EXPECT_NEAR(st.followon.F, F, 1e-12 * F);
}

TEST(XETD, EmphasisUsesTheLearnedFollowOn) {
  const auto env = envs::constant_gamma_chain(4, 0.5);
  const auto cfg = SelectivityConfig::uniform(4, 0.25);
  auto st = make_eval_learner(EvalAlgorithm::xetd, env.X, env.mdp.discount());
  st.fmodel.phi << 2.0, 3.0, 4.0, 5.0;
  RngStream rng(1);
  const Transition tr = sample_transition(env.mdp, env.target, 2, rng);
  xetd_step(st, env.X, tr, cfg);
  EXPECT_DOUBLE_EQ(st.emphasis, 0.25 + 0.75 * 4.0);
}

TEST(ET, FullEtaEqualsSelectiveTD) {
  RngStream gen(23);
  const auto env = envs::random_mdp(6, 2, gen, 0.95);
  const TabularPolicy mu = random_policy(6, 2, gen);
  SelectivityConfig cfg = SelectivityConfig::uniform(6, 0.0, 1.0, 1.0);
  for (Eigen::Index s = 0; s < 6; ++s) {
    cfg.lambda(s) = gen.uniform();
    cfg.omega(s) = gen.uniform();
  }
  EvalOptions opts;
  opts.sched_w = StepSizeSchedule::constant(0.05);
  auto td = make_eval_learner(EvalAlgorithm::td, env.X, env.mdp.discount(), opts);
  auto et = make_eval_learner(EvalAlgorithm::et, env.X, env.mdp.discount(), opts);
  RngStream rng(3);
  StateId s = 0;
  for (int t = 0; t < 5000; ++t) {
    const ActionId a = mu.sample(s, rng);
    const double rho = importance_ratio(env.target, mu, s, a);
    const Transition tr = step_action(env.mdp, s, a, rng);
    td_step(td, env.X, tr, cfg, rho);
    et_step(et, env.X, tr, cfg, rho);
    s = tr.successor();
  }
  EXPECT_LT((td.v.w - et.v.w).norm(), 1e-10 * td.v.w.norm());
}

TEST(ET, ZeroEtaUsesTheModelTrace) {
  const auto env = envs::ring_chain(4);
  const auto cfg = SelectivityConfig::uniform(4, 0.5, 1.0, 0.0);
  EvalOptions opts;
  opts.sched_z = StepSizeSchedule::constant(0.3);
  auto st = make_eval_learner(EvalAlgorithm::et, env.X, env.mdp.discount(), opts);
  RngStream rng(8);
  StateId s = 0;
  for (int t = 0; t < 50; ++t) {
    const Transition tr = sample_transition(env.mdp, env.target, s, rng);
    et_step(st, env.X, tr, cfg);
    EXPECT_LT((st.mix.e_eta - st.ztrace.predict(env.X, tr.state)).norm(), 1e-14);
    s = tr.successor();
  }
}

TEST(ET, RejectsOtherLearners) {
  const auto env = envs::ring_chain(4);
  auto st = make_eval_learner(EvalAlgorithm::td, env.X, env.mdp.discount());
  Transition tr;
  EXPECT_THROW(et_step(st, env.X, tr, SelectivityConfig::uniform(4)), DomainError);
  EvalOptions bad;
  bad.eta_f = 2.0;
  EXPECT_THROW(make_eval_learner(EvalAlgorithm::xetd, env.X, env.mdp.discount(), bad), DomainError);
}

TEST(ForwardView, MatchesNStepLambdaReturn) {
  RngStream rng(31);
  const auto env = episodic_walk(rng);
  for (int i = 0; i < 50; ++i) {
    const double lambda = rng.uniform();
    SelectivityConfig cfg = SelectivityConfig::uniform(7, lambda);
    for (Eigen::Index s = 0; s < 7; ++s) cfg.omega(s) = rng.uniform();
    LinearValueFn v(3);
    for (Eigen::Index k = 0; k < 3; ++k) v.w(k) = 2.0 * rng.uniform() - 1.0;
    const auto ep = walk_episode(env, rng);
    const Vector want = oracle::lambda_return_update(ep, env.X, v.w, lambda, cfg.omega);
    const Vector fwd = forward_view_updates(ep, env.X, v, cfg, env.mdp.discount());
    const Vector bwd = backward_view_updates(ep, env.X, v, cfg, env.mdp.discount());
    const double scale = std::max(1.0, want.norm());
    EXPECT_LT((fwd - want).norm() / scale, 1e-10);
    EXPECT_LT((bwd - want).norm() / scale, 1e-10);
  }
}

TEST(ForwardView, RejectsUnterminatedEpisodes) {
  const auto env = envs::ring_chain(4);
  RngStream rng(1);
  const std::vector<Transition> ep{sample_transition(env.mdp, env.target, 0, rng)};
  EXPECT_THROW(forward_view_updates(ep, env.X, LinearValueFn(4), SelectivityConfig::uniform(4), env.mdp.discount()),
               DomainError);
}
