#include <gtest/gtest.h>

#include "credit/credit.hpp"
#include "oracles.hpp"

using namespace credit;

TEST(Greedy, LowestIndexWinsTiesAndMasksApply) {
  const Vector q = (Vector(4) << 1.0, 3.0, 3.0, 2.0).finished();
  EXPECT_EQ(greedy_action(q), 1u);
  const std::vector<bool> mask{true, false, true, true};
  EXPECT_EQ(greedy_action(q, &mask), 2u);
  EXPECT_DOUBLE_EQ(max_value(q, &mask), 3.0);
  const std::vector<bool> none(4, false);
  EXPECT_THROW(greedy_action(q, &none), DomainError);
}

TEST(EpsilonGreedy, FrequenciesMatch) {
  LinearQFn q(4, 1);
  q.w << 0.0, 0.0, 1.0, 0.0;
  const FeatureMap X = FeatureMap::one_hot(1);
  RngStream rng(12);
  std::vector<double> counts(4, 0.0);
  for (int i = 0; i < 40000; ++i) counts[epsilon_greedy(q, X, 0, 0.3, rng)] += 1.0;
  EXPECT_LT(oracle::chi_square(counts, {0.075, 0.075, 0.775, 0.075}), 16.27);

  const std::vector<bool> mask{true, true, false, false};
  std::vector<double> masked(4, 0.0);
  for (int i = 0; i < 40000; ++i) masked[epsilon_greedy(q, X, 0, 0.5, rng, &mask)] += 1.0;
  EXPECT_EQ(masked[2] + masked[3], 0.0);
  EXPECT_LT(oracle::chi_square({masked[0], masked[1]}, {0.75, 0.25}), 10.83);
  EXPECT_THROW(epsilon_greedy(q, X, 0, 1.5, rng), DomainError);
}

TEST(QLambda, ZeroLambdaIsTabularQLearning) {
  const auto fr = envs::four_rooms(1.0);
  const auto cfg = SelectivityConfig::uniform(fr.mdp.n_states());
  ControlOptions opts;
  opts.sched_w = StepSizeSchedule::constant(0.5);
  auto st = make_control_learner(ControlAlgorithm::q, fr.X, 4, fr.mdp.discount(), opts);
  Matrix Q = Matrix::Zero(static_cast<Eigen::Index>(fr.mdp.n_states()), 4);
  RngStream rng(2);
  StateId s = fr.mdp.sample_restart(rng);
  for (int t = 0; t < 20000; ++t) {
    const ActionId a = rng.uniform_index(4);
    const Transition tr = step_action(fr.mdp, s, a, rng);
    q_step(st, fr.X, tr, cfg);
    const auto si = static_cast<Eigen::Index>(tr.state), ai = static_cast<Eigen::Index>(a);
    const double target = tr.reward + tr.gamma_next * Q.row(static_cast<Eigen::Index>(tr.next_state)).maxCoeff();
    Q(si, ai) += 0.5 * (target - Q(si, ai));
    s = tr.successor();
  }
  for (StateId x = 0; x < fr.mdp.n_states(); ++x) {
    for (ActionId a = 0; a < 4; ++a) {
      EXPECT_NEAR(st.q.value(fr.X, x, a), Q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)), 1e-10);
    }
  }
}

TEST(QET, FullEtaEqualsQLambda) {
  const auto fr = envs::four_rooms(0.5);
  auto cfg = envs::hallway_selectivity(fr.hallway_states, 0.9, 0.0, false);
  cfg.eta.setOnes();
  ControlOptions opts;
  opts.sched_w = StepSizeSchedule::power(1.0, 0.2);
  auto q = make_control_learner(ControlAlgorithm::q, fr.X, 4, fr.mdp.discount(), opts);
  auto qet = make_control_learner(ControlAlgorithm::qet, fr.X, 4, fr.mdp.discount(), opts);
  RngStream rng(5);
  StateId s = fr.mdp.sample_restart(rng);
  for (int t = 0; t < 20000; ++t) {
    const Transition tr = step_action(fr.mdp, s, rng.uniform_index(4), rng);
    q_step(q, fr.X, tr, cfg);
    qet_step(qet, fr.X, tr, cfg);
    s = tr.successor();
  }
  EXPECT_LT((q.q.w - qet.q.w).norm(), 1e-10 * std::max(1.0, q.q.w.norm()));
}

TEST(QET, ModelRegressesTheDecayedTrace) {
  const auto env = envs::ring_chain(3);
  auto cfg = SelectivityConfig::uniform(3, 0.5, 1.0, 0.0);
  ControlOptions opts;
  opts.sched_z = StepSizeSchedule::constant(1.0);
  auto st = make_control_learner(ControlAlgorithm::qet, env.X, 1, env.mdp.discount(), opts);
  RngStream rng(1);
  StateId s = 0;
  for (int t = 0; t < 20; ++t) {
    const Transition tr = sample_transition(env.mdp, env.target, s, rng);
    const Vector carried = (t == 0 ? 0.0 : 0.45) * st.trace.e;
    qet_step(st, env.X, tr, cfg);
    // alpha_z = 1 makes z(S) equal to its target, so eta = 0 leaves e = carried + grad Q.
    Vector want = carried;
    st.q.add_gradient(want, env.X, tr.state, 0, 1.0);
    EXPECT_LT((st.trace.e - want).norm(), 1e-12);
    s = tr.successor();
  }
}

TEST(QForwardView, TraceFormAgrees) {
  const auto env = envs::five_state_chain();
  RngStream rng(3);
  for (int i = 0; i < 30; ++i) {
    SelectivityConfig cfg = SelectivityConfig::uniform(5);
    for (Eigen::Index s = 0; s < 5; ++s) {
      cfg.lambda(s) = rng.uniform();
      cfg.omega(s) = rng.uniform();
    }
    LinearQFn q(2, 3);
    for (Eigen::Index k = 0; k < q.w.size(); ++k) q.w(k) = 2.0 * rng.uniform() - 1.0;
    std::vector<Transition> ep;
    StateId s = 2;
    while (ep.empty() || ep.back().gamma_next != 0.0) {
      ep.push_back(step_action(env.mdp, s, rng.uniform_index(2), rng));
      s = ep.back().next_state;
    }
    const Vector f = q_forward_view_updates(ep, env.X, q, cfg, env.mdp.discount());
    const Vector b = q_backward_view_updates(ep, env.X, q, cfg, env.mdp.discount());
    EXPECT_LT((f - b).norm(), 1e-10 * std::max(1.0, f.norm()));
  }
}

TEST(Options, PretrainedOptionsTakeShortestPaths) {
  const auto fr = envs::four_rooms(1.0);
  const OptionSet opts = pretrain_options(fr.mdp, fr.option_specs, 0.9);
  ASSERT_EQ(opts.size(), 8u);
  RngStream rng(1);
  for (std::size_t o = 0; o < opts.size(); ++o) {
    const auto& sp = fr.option_specs[o];
    std::vector<bool> allowed = sp.region;
    allowed[sp.subgoal] = true;
    const auto dist = oracle::bfs_to(fr.mdp, sp.subgoal, allowed);
    for (StateId s = 0; s < fr.mdp.n_states(); ++s) {
      if (!opts[o].initiation[s]) continue;
      ASSERT_GT(dist[s], 0) << opts[o].name << " " << s;
      const OptionSegment seg = run_option(fr.mdp, opts, o, s, rng, 0.0, 1000);
      EXPECT_FALSE(seg.capped);
      EXPECT_EQ(seg.exit_state, sp.subgoal);
      EXPECT_EQ(static_cast<long>(seg.steps.size()), dist[s]) << opts[o].name << " from " << s;
    }
  }
}

TEST(Options, PretrainingModesAgree) {
  const auto fr = envs::four_rooms(1.0);
  const OptionSet vi = pretrain_options(fr.mdp, fr.option_specs, 0.9, PretrainMode::value_iteration);
  const OptionSet ql = pretrain_options(fr.mdp, fr.option_specs, 0.9, PretrainMode::q_learning, 3);
  for (std::size_t o = 0; o < vi.size(); ++o) EXPECT_EQ(vi[o].policy.probs(), ql[o].policy.probs()) << vi[o].name;
}

TEST(Options, SegmentBookkeeping) {
  const auto fr = envs::four_rooms(1.0);
  const OptionSet opts = pretrain_options(fr.mdp, fr.option_specs, 0.9);
  RngStream rng(4);
  std::size_t o = 0;
  StateId start = 0;
  while (!opts[o].initiation[start]) ++start;
  const OptionSegment capped = run_option(fr.mdp, opts, o, start, rng, 0.0, 1);
  EXPECT_EQ(capped.steps.size(), 1u);
  const OptionSegment seg = run_option(fr.mdp, opts, o, start, rng, 0.0, 1000);
  EXPECT_NEAR(seg.discount, std::pow(0.98, static_cast<double>(seg.steps.size() - 1)) * fr.mdp.gamma(seg.exit_state),
              1e-12);
  StateId outside = 0;
  while (opts[o].initiation[outside] || !opts[o].termination[outside]) ++outside;
  EXPECT_TRUE(run_option(fr.mdp, opts, o, outside, rng, 0.0, 10).steps.empty());
  OptionSet odd = opts;
  odd.options[o].termination[outside] = false;
  EXPECT_THROW(run_option(fr.mdp, odd, o, outside, rng, 0.0, 10), DomainError);
}
