#include <gtest/gtest.h>

#include "credit/credit.hpp"

using namespace credit;
using namespace credit::couplings;

TEST(Couplings, ConstantGammaRulesAreInverse) {
  for (double g : {0.1, 0.5, 0.9, 0.99}) {
    for (double l : {0.0, 0.3, 0.8, 1.0}) {
      const double w = omega_from_lambda_const_gamma(g, l);
      EXPECT_NEAR(lambda_from_omega_const_gamma(g, w), l, 1e-12) << g << " " << l;
    }
  }
  EXPECT_DOUBLE_EQ(omega_from_lambda_const_gamma(0.9, 1.0), 1.0);
  EXPECT_NEAR(omega_from_lambda_const_gamma(0.9, 0.0), 10.0, 1e-12);
  EXPECT_THROW(omega_from_lambda_const_gamma(1.0, 0.5), DomainError);
}

TEST(Couplings, DynamicRuleReducesToTheOthers) {
  for (double g : {0.5, 0.9}) {
    for (double l : {0.0, 0.4, 1.0}) {
      EXPECT_NEAR(omega_from_lambda_dynamic(g, l, g), omega_from_lambda_const_gamma(g, l), 1e-12);
      EXPECT_NEAR(omega_from_lambda_dynamic(g, l, 0.0), omega_from_lambda_unnormalized(g, l), 1e-15);
    }
  }
}

TEST(Couplings, DecayFromOmega) {
  EXPECT_DOUBLE_EQ(decay_from_omega_dynamic(0.9, 1.0, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(decay_from_omega_dynamic(0.9, 0.0, 0.3), 1.0);
  EXPECT_DOUBLE_EQ(decay_from_omega_dynamic(0.0, 0.5, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(lambda_from_omega_dynamic(0.0, 0.5, 0.3), 1.0);
  EXPECT_NEAR(lambda_from_omega_dynamic(0.8, 0.5, 0.2), 0.6 / 0.8, 1e-15);
  // Forward and inverse directions agree wherever both are defined.
  for (double g : {0.5, 0.9}) {
    for (double w : {0.2, 0.7, 1.0}) {
      const double l = lambda_from_omega_dynamic(g, w, 0.1);
      if (l <= 1.0) {
        EXPECT_NEAR(omega_from_lambda_dynamic(g, l, 0.1), w, 1e-12);
      }
    }
  }
  EXPECT_THROW(decay_from_omega_dynamic(0.9, 0.5, 1.0), DomainError);
}

TEST(Couplings, EtaFromOmega) {
  EXPECT_DOUBLE_EQ(eta_from_omega(1.0, 0.25), 0.25);
  EXPECT_DOUBLE_EQ(eta_from_omega(0.0, 0.25), 1.0);
  EXPECT_DOUBLE_EQ(eta_from_omega(0.5, 0.0), 0.5);
  EXPECT_THROW(eta_from_omega(1.5, 0.0), DomainError);
  EXPECT_THROW(eta_from_omega(0.5, 1.0), DomainError);
}

TEST(Couplings, SelectivityUsesTheCouplingOnEveryQuery) {
  auto c = SelectivityConfig::uniform(2, 0.5, 1.0);
  c.coupling = Coupling::omega_from_lambda;
  EXPECT_DOUBLE_EQ(c.omega_at(0, 0.8), 1.0 - 0.4);
  c.lambda(0) = 0.0;
  EXPECT_DOUBLE_EQ(c.omega_at(0, 0.8), 1.0);

  auto h = envs::hallway_selectivity({true, false}, 0.9, 0.2);
  EXPECT_DOUBLE_EQ(h.decay_at(0, 0.98), 0.9);
  EXPECT_DOUBLE_EQ(h.decay_at(1, 0.98), 1.0);
  EXPECT_NEAR(h.bootstrap_at(0, 0.98), 0.08, 1e-15);
  EXPECT_DOUBLE_EQ(h.eta_at(0), 0.2);
  EXPECT_DOUBLE_EQ(h.eta_at(1), 1.0);
}
