// Two ways to look at selective TD on the two-state example: the exact stability analysis and an
// online run. Removing the weight on the second state makes TD(0) diverge; the coupled weighting
// omega = 1 - gamma lambda keeps it stable.

#include <cstdio>

#include "credit/credit.hpp"

int main() {
  using namespace credit;
  const envs::EvalEnv env = envs::two_state_divergence(0.9);
  const std::size_t n = env.mdp.n_states();

  for (const auto& [label, omega2] : {std::pair{"omega = (1, 0)", 0.0}, std::pair{"omega = (1, 1)", 1.0}}) {
    SelectivityConfig cfg = SelectivityConfig::uniform(n, 0.0, 1.0);
    cfg.omega(1) = omega2;
    const StabilityReport rep = analyze_selective_td(env.mdp, env.target, env.behaviour, env.X, cfg);

    EvalOptions opts;
    opts.sched_w = StepSizeSchedule::constant(0.1);
    opts.w_init = 1.0;
    EvalLearnerState st = make_eval_learner(EvalAlgorithm::td, env.X, env.mdp.discount(), opts);
    RngStream rng(1);
    StateId s = 0;
    for (int t = 0; t < 200; ++t) {
      const Transition tr = sample_transition(env.mdp, env.target, s, rng);
      td_step(st, env.X, tr, cfg);
      s = tr.successor();
    }
    std::printf("%s: verdict %s, min Re eig(A) = %.4f, |w| after 200 steps = %.4g\n", label, to_string(rep.verdict),
                rep.min_real_eigenvalue, st.v.w.norm());
  }
  return 0;
}
