#include <gtest/gtest.h>

#include <cmath>

#include "renewal_lab/conditions.hpp"

using namespace renewal_lab;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FamilySpec fam(const std::string& f, double p = kNaN, double delta = kNaN) {
  FamilySpec s;
  s.family = f;
  s.p = p;
  s.delta = delta;
  return s;
}

DistributionModel two_sided(double p) { return build_model(fam("two_sided_log", p)); }

}  // namespace

TEST(Conditions, HarmonicAnalyticVerdicts) {
  auto m = build_model(fam("harmonic1"));
  auto r = classify(m, 1e6);
  EXPECT_EQ(r.ha.verdict, Verdict::holds);
  EXPECT_EQ(r.hb.verdict, Verdict::holds);
  EXPECT_EQ(r.transient.verdict, Verdict::holds);
  EXPECT_EQ(r.ha.provenance, "analytic");
  ASSERT_TRUE(r.hc_kappa);
  EXPECT_DOUBLE_EQ(*r.hc_kappa, 1.0);
  EXPECT_EQ(r.regime, "p>1/2");
  EXPECT_TRUE(r.A_over_m_to_one);
  EXPECT_TRUE(r.ell_over_m_to_one);
}

TEST(Conditions, EmpiricalAgreesWithAnalytic) {
  ClassifyOptions o;
  o.use_annotations = false;
  auto h = classify(build_model(fam("harmonic1")), 1e6, o);
  EXPECT_EQ(h.ha.verdict, Verdict::holds);
  EXPECT_EQ(h.hb.verdict, Verdict::holds);
  EXPECT_EQ(h.transient.verdict, Verdict::holds);
  auto c1 = classify(build_model(fam("c1_hb_only", kNaN, 0.75)), 1e6, o);
  EXPECT_EQ(c1.ha.verdict, Verdict::fails);
  EXPECT_EQ(c1.hb.verdict, Verdict::holds);
  auto ts = classify(two_sided(0.75), 1e6, o);
  EXPECT_EQ(ts.ha.verdict, Verdict::holds);
  EXPECT_EQ(ts.hb.verdict, Verdict::holds);
  EXPECT_EQ(ts.transient.verdict, Verdict::holds);
}

TEST(Conditions, C2EmpiricalHbIsNotConvergent) {
  ClassifyOptions o;
  o.use_annotations = false;
  auto r = classify(build_model(fam("c2_ha_only", kNaN, 0.75)), 1e6, o);
  EXPECT_EQ(r.ha.verdict, Verdict::holds);
  EXPECT_NE(r.hb.verdict, Verdict::holds);
  auto a = classify(build_model(fam("c2_ha_only", kNaN, 0.75)), 1e6);
  EXPECT_EQ(a.hb.verdict, Verdict::fails);
  EXPECT_EQ(a.transient.verdict, Verdict::fails);
  EXPECT_EQ(a.hb.empirical == Verdict::holds, false);
}

TEST(Conditions, KappaConsistency) {
  for (double p : {0.6, 0.75, 0.9}) {
    ClassifyOptions o;
    o.use_annotations = false;
    auto r = classify(two_sided(p), 1e6, o);
    ASSERT_TRUE(r.hc_kappa) << p;
    EXPECT_NEAR(*r.hc_kappa, 2 * p - 1, 0.02) << p;
    auto a = classify(two_sided(p), 1e6);
    EXPECT_DOUBLE_EQ(*a.hc_kappa, 2 * p - 1);
  }
}

TEST(Conditions, TransienceImplication) {
  for (auto fs : {fam("harmonic1"),
                  fam("two_sided_log", 0.6),
                  fam("c1_hb_only", kNaN, 0.75),
                  fam("c2_ha_only", kNaN, 0.75)}) {
    for (bool ann : {true, false}) {
      ClassifyOptions o;
      o.use_annotations = ann;
      auto r = classify(build_model(fs), 1e5, o);
      if (r.ha.verdict == Verdict::holds && r.hb.verdict == Verdict::holds) {
        EXPECT_EQ(r.transient.verdict, Verdict::holds) << fs.family;
      }
    }
  }
}

TEST(Conditions, SymmetricRegime) {
  auto r = classify(two_sided(0.5), 1e6);
  EXPECT_EQ(r.regime, "p=1/2 & rho in (0,1)");
  EXPECT_EQ(r.transient.verdict, Verdict::fails);
  EXPECT_EQ(classify(two_sided(0.3), 1e6).regime, "not-4.3");
}

TEST(Conditions, RejectsSmallHorizon) {
  auto m = two_sided(0.75);
  EXPECT_THROW(classify(m, 100.0), error);
}

TEST(Conditions, NormingHarmonic) {
  auto m = build_model(fam("harmonic1"));
  Cumulative cum(m);
  for (long long n : {10LL, 100LL, 1000LL}) {
    auto r = estimate_norming(m, n);
    EXPECT_LT(std::fabs(n * cum.A(r.lambda) - r.lambda) / r.lambda, 1e-10);
    EXPECT_GT(r.trajectory.size(), 1u);
  }
}

TEST(Conditions, NormingTwoSided) {
  auto r = estimate_norming(two_sided(0.75), 1000);
  EXPECT_NEAR(r.lambda, 4168.4, 5.0);
}

TEST(Conditions, NormingRequiresHa) {
  auto m = build_model(fam("c1_hb_only", kNaN, 0.75));
  try {
    estimate_norming(m, 100);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::precondition);
  }
}

TEST(Conditions, RhoHarmonicIsOne) {
  auto m = build_model(fam("harmonic1"));
  for (const auto& e : estimate_rho(m, {1, 10, 100}, 1000, 7)) EXPECT_DOUBLE_EQ(e.rho, 1.0);
}

TEST(Conditions, RhoSymmetric) {
  auto r = estimate_rho(two_sided(0.5), {10, 100}, 20000, 11, 4);
  for (const auto& e : r) EXPECT_LT(std::fabs(e.rho - 0.5), 3.0 * std::max(e.stderr_, 0.5 / std::sqrt(20000.0)));
}

TEST(Conditions, RhoIncreasesForPositiveDrift) {
  auto r = estimate_rho(two_sided(0.75), {10, 100, 1000}, 4000, 3, 4);
  EXPECT_LT(r[0].rho, r[1].rho);
  EXPECT_LT(r[1].rho, r[2].rho);
}

TEST(Conditions, RhoDeterministicAcrossJobs) {
  auto m = two_sided(0.75);
  auto a = estimate_rho(m, {50}, 3000, 5, 1);
  auto b = estimate_rho(m, {50}, 3000, 5, 8);
  EXPECT_EQ(a[0].rho, b[0].rho);
  EXPECT_THROW(estimate_rho(m, {50}, 999, 5), error);
}
