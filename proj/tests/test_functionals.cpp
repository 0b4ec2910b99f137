#include <gtest/gtest.h>

#include <cmath>

#include "renewal_lab/functionals.hpp"

using namespace renewal_lab;

TEST(Functionals, TwoSidedLogClosedFormPoint) {
  auto m = make_two_sided_log(0.75);
  const double x = std::expm1(10.0);
  auto r = functional_profile(m, x);
  EXPECT_NEAR(r.ell, 10.0, 1e-12);
  EXPECT_NEAR(r.A, 5.0, 1e-12);
  EXPECT_NEAR(r.m, 2.5, 1e-10);
  EXPECT_NEAR(r.r_plus, 0.3, 1e-11);
  EXPECT_NEAR(r.r_minus, 0.1, 1e-11);
  EXPECT_EQ(r.completion, "analytic");
  EXPECT_LT(r.err_bound.m, 1e-10);
}

TEST(Functionals, NumericPathMatchesClosedForm) {
  auto m = make_two_sided_log(0.75);
  Cumulative num(m, false);
  for (double x = 1.0; x <= 1e6; x *= 3.7)
    EXPECT_NEAR(num.ell(x) / std::log1p(x), 1.0, 1e-8) << x;
  EXPECT_NEAR(num.A(1e6) / (0.5 * std::log1p(1e6)), 1.0, 1e-8);

  QuadratureConfig q;
  q.use_annotations = false;
  q.rel_tol = 1e-8;
  auto r = functional_profile(m, 100.0, q);
  auto exact = functional_profile(m, 100.0);
  EXPECT_EQ(r.completion, "cauchy");
  EXPECT_LT(r.err_bound.m, 0.1);
  EXPECT_NEAR(r.m / exact.m, 1.0, 2.0 * r.err_bound.m);
  EXPECT_NEAR(r.r_plus / exact.r_plus, 1.0, 2.0 * r.err_bound.r_plus);
}

TEST(Functionals, HalvingToleranceStaysWithinBound) {
  auto m = make_two_sided_log(0.75);
  QuadratureConfig q;
  q.use_annotations = false;
  q.rel_tol = 1e-8;
  auto a = functional_profile(m, 50.0, q);
  q.rel_tol = 5e-9;
  auto b = functional_profile(m, 50.0, q);
  EXPECT_LE(std::fabs(b.m / a.m - 1.0), a.err_bound.m);
  EXPECT_LE(std::fabs(b.r_plus / a.r_plus - 1.0), a.err_bound.r_plus);
  EXPECT_LE(std::fabs(b.ell / a.ell - 1.0), 1e-12);
}

TEST(Functionals, HarmonicNumberAtTen) {
  auto m = make_harmonic1();
  auto r = functional_profile(m, 10.0);
  EXPECT_NEAR(r.ell, 7381.0 / 2520.0, 1e-12);
  EXPECT_NEAR(r.ell, 2.9289682539, 1e-10);
  Cumulative num(m, false);
  EXPECT_NEAR(num.ell(10.0), 7381.0 / 2520.0, 1e-14);
  EXPECT_NEAR(num.ell(10.5), 7381.0 / 2520.0 + 0.5 / 11, 1e-14);
}

TEST(Functionals, NonnegativeModelsCollapse) {
  for (double x : {10.0, 123.4, 5000.0}) {
    auto r = functional_profile(make_harmonic1(), x);
    EXPECT_EQ(r.r_minus, 0.0);
    EXPECT_NEAR(r.r_plus * r.ell, 1.0, 1e-11);
    EXPECT_NEAR(r.r_plus * r.A, 1.0, 1e-11);
    EXPECT_NEAR(r.m / r.ell, 1.0, 1e-11);
  }
  auto r = functional_profile(make_two_sided_log(1.0), 77.0);
  EXPECT_EQ(r.r_minus, 0.0);
  EXPECT_NEAR(r.r_plus * r.ell, 1.0, 1e-11);
}

TEST(Functionals, HarmonicLatticeNumericTails) {
  auto m = make_harmonic1();
  QuadratureConfig q;
  q.use_annotations = false;
  auto r = functional_profile(m, 100.0, q);
  const double H100 = 5.18737751763962;
  EXPECT_NEAR(r.ell, H100, 1e-12);
  EXPECT_NEAR(r.m / H100, 1.0, 2.0 * r.err_bound.m);
}

TEST(Functionals, C2NonconvergentForM) {
  try {
    functional_profile(make_c2_ha_only(0.75), 100.0);
    FAIL() << "expected nonconvergence";
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::nonconvergent);
    EXPECT_NE(std::string(e.what()).find("for m"), std::string::npos);
  }
  QuadratureConfig q;
  q.use_annotations = false;
  EXPECT_THROW(functional_profile(make_c2_ha_only(0.75), 100.0, q), error);
}

TEST(Functionals, C1MatchesOracle) {
  // mpmath: closed-form A, ell and int over s = log(e+t) of s^2/A(s)^2
  auto r = functional_profile(make_c1_hb_only(0.75), 1e4);
  EXPECT_NEAR(r.A, 26.466207045919799554, 1e-10);
  EXPECT_NEAR(r.ell, 260.04718665320070238, 1e-9);
  EXPECT_NEAR(1.0 / r.m, 2.0639496312232843822, 1e-9);
}

TEST(Functionals, NotPositivelyStable) {
  EXPECT_THROW(functional_profile(make_two_sided_log(0.3), 10.0), error);
  EXPECT_THROW(functional_profile(make_two_sided_log(0.5), 10.0), error);
  EXPECT_THROW(functional_profile(make_harmonic1(), 0.0), error);
  EXPECT_THROW(functional_profile(make_c1_hb_only(0.75), 5.0), error);
}

TEST(Functionals, SlowVariationProbe) {
  Cumulative c(make_two_sided_log(0.75));
  const double x = std::ldexp(1.0, 20);
  const double ratio = c.A(2 * x) / c.A(x);
  EXPECT_NEAR(ratio, 1.0, 0.05);
  EXPECT_NEAR(ratio, 1.0 + std::log(2.0) / std::log1p(x), 1e-6);
}

TEST(Functionals, IdentityAuditTwoSided) {
  auto rep = identity_audit(make_two_sided_log(0.75), {1e2, 1e3, 1e4}, 1e-6);
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.rows.size(), 15u);
  for (const auto& r : rep.rows) {
    EXPECT_TRUE(std::isfinite(r.residual));
    EXPECT_LT(r.residual, 1e-6) << r.identity << " at " << r.x;
  }
}

TEST(Functionals, IdentityAuditHarmonic) {
  auto m = make_harmonic1();
  auto rep = identity_audit(m, {1e2, 1e3, 1e4}, 1e-6);
  EXPECT_TRUE(rep.pass());
  for (double x : {1e2, 1e3, 1e4}) EXPECT_EQ(functional_profile(m, x).r_minus, 0.0);
}

TEST(Functionals, IdentityAuditC1OrderingNotApplicable) {
  auto rep = identity_audit(make_c1_hb_only(0.75), {1e2, 1e3}, 1e-6);
  int na = 0;
  for (const auto& r : rep.rows)
    if (r.identity == "m<=A<=ell") {
      EXPECT_FALSE(r.applicable);
      EXPECT_EQ(r.note, "not applicable, (Ha) fails");
      ++na;
    }
  EXPECT_EQ(na, 2);
  EXPECT_TRUE(rep.pass());
}
