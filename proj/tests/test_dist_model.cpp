#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "renewal_lab/dist_model.hpp"

using namespace renewal_lab;

TEST(DistModel, HarmonicTailIsReciprocal) {
  auto m = make_harmonic1();
  for (int n = 0; n <= 50; ++n) EXPECT_DOUBLE_EQ(m.tail_pos(n), 1.0 / (n + 1));
  auto t0 = tails(m, 0.0);
  EXPECT_DOUBLE_EQ(t0.H, 1.0);
  EXPECT_DOUBLE_EQ(t0.K, 1.0);
  // partial sum of 1/(k(k+1)) over k > 9
  double s = 0.0;
  for (int k = 100000; k >= 10; --k) s += 1.0 / (double(k) * (k + 1));
  s += 1.0 / 100001;
  EXPECT_NEAR(tails(m, 9.5).H, s, 1e-15);
  EXPECT_DOUBLE_EQ(tails(m, 9.5).H, 0.1);
}

TEST(DistModel, TwoSidedLogTailRecord) {
  auto m = make_two_sided_log(0.75);
  auto t = tails(m, 9.0);
  EXPECT_DOUBLE_EQ(t.Fbar, 0.075);
  EXPECT_DOUBLE_EQ(t.Fneg, 0.025);
  EXPECT_DOUBLE_EQ(t.H, 0.1);
  EXPECT_DOUBLE_EQ(t.K, 0.05);
  auto sym = make_two_sided_log(0.5);
  for (double x : {0.0, 0.3, 7.0, 1e9}) EXPECT_EQ(tails(sym, x).K, 0.0);
}

TEST(DistModel, InvalidParameters) {
  EXPECT_THROW(make_two_sided_log(1.2), error);
  EXPECT_THROW(make_two_sided_log(-0.1), error);
  EXPECT_THROW(make_c1_hb_only(0.5), error);
  EXPECT_THROW(make_c2_ha_only(1.0), error);
  EXPECT_THROW(tails(make_harmonic1(), -1.0), error);
  try {
    make_two_sided_log(1.2);
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_parameter);
  }
}

TEST(DistModel, SamplerBoundaryConventions) {
  auto m = make_two_sided_log(0.75);
  EXPECT_DOUBLE_EQ(step_from_uniform(m, 0.25), 0.0);
  EXPECT_LT(step_from_uniform(m, 0.2499), 0.0);
  EXPECT_DOUBLE_EQ(step_from_uniform(m, 0.9), 0.75 / 0.1 - 1.0);
  auto h = make_harmonic1();
  for (double u : {1e-9, 0.1, 0.25, 0.4999, 0.5}) EXPECT_EQ(step_from_uniform(h, u), 1.0);
  EXPECT_EQ(step_from_uniform(h, 0.6), 2.0);
  EXPECT_EQ(step_from_uniform(h, 0.99), 99.0);
}

TEST(DistModel, LatticePmf) {
  auto h = make_harmonic1();
  EXPECT_DOUBLE_EQ(lattice_pmf(h, 1), 0.5);
  EXPECT_DOUBLE_EQ(lattice_pmf(h, 3), 1.0 / 12);
  EXPECT_EQ(lattice_pmf(h, 0), 0.0);
  EXPECT_DOUBLE_EQ(lattice_pmf(make_finite_mean_baseline(), 2), 0.5);
  EXPECT_THROW(lattice_pmf(make_two_sided_log(0.75), 1), error);
  for (int n = 0; n <= 10000; ++n)
    EXPECT_NEAR(h.tail_pos(n) - h.tail_pos(n + 1), h.pmf(n + 1), 1e-12);
}

TEST(DistModel, MonotoneTailsAllFamilies) {
  for (auto m : {make_harmonic1(), make_finite_mean_baseline(), make_two_sided_log(0.75),
                 make_c1_hb_only(0.75), make_c2_ha_only(0.75), make_c1_hb_only(1.0)}) {
    double pp = 2, pn = 2;
    for (double x = 0; x < 1e8; x = x < 4 ? x + 0.01 : x * 1.01) {
      auto t = tails(m, x);
      EXPECT_LE(t.Fbar, pp) << m.id << " x=" << x;
      EXPECT_LE(t.Fneg, pn) << m.id << " x=" << x;
      EXPECT_LE(std::fabs(t.K), t.H);
      EXPECT_EQ(t.H, m.tail_pos(x) + m.tail_neg(x));
      pp = t.Fbar;
      pn = t.Fneg;
    }
    EXPECT_LE(m.tail_pos(0) + m.tail_neg(0), 1.0);
  }
}

TEST(DistModel, C1SupportFloorMatchesOracle) {
  // last sign change of the derivative of the negative tail, solved with mpmath
  auto m = make_c1_hb_only(0.75);
  EXPECT_NEAR(m.support_floor, 10.2035520643654141, 1e-9);
  EXPECT_EQ(m.tail_pos(0.0), m.tail_pos(m.support_floor));
  EXPECT_NEAR(tails(m, 0.0).H, 0.50674413461826126, 1e-12);
  EXPECT_EQ(make_c2_ha_only(0.75).support_floor, 0.0);
}

TEST(DistModel, SamplerMatchesTails) {
  for (auto m : {make_harmonic1(), make_two_sided_log(0.75), make_c1_hb_only(0.75), make_c2_ha_only(0.75)}) {
    Rng rng(12345, 7);
    const int n = 100000;
    int exceed = 0;
    for (int i = 0; i < n; ++i)
      if (std::fabs(sample_step(m, rng)) > 10.0) ++exceed;
    const double p = tails(m, 10.0).H;
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(double(exceed) / n, p, 4 * se) << m.id;
  }
}

TEST(DistModel, SamplerDeterministic) {
  auto m = make_two_sided_log(0.75);
  Rng a(99, 3), b(99, 3), c(99, 4);
  bool differ = false;
  for (int i = 0; i < 100; ++i) {
    const double x = sample_step(m, a);
    EXPECT_EQ(x, sample_step(m, b));
    if (x != sample_step(m, c)) differ = true;
  }
  EXPECT_TRUE(differ);
}

TEST(DistModel, HarmonicAbsoluteMeanGrows) {
  auto m = make_harmonic1();
  Rng rng(2024);
  double s = 0.0;
  double at_1e4 = 0.0;
  for (int i = 1; i <= 1000000; ++i) {
    s += std::fabs(sample_step(m, rng));
    if (i == 10000) at_1e4 = s / i;
  }
  const double at_1e6 = s / 1e6;
  // partial sums of n*pmf(n) up to the sample size grow like log n
  EXPECT_GT(at_1e6, at_1e4 + 1.0);
  EXPECT_GT(at_1e6, 0.5 * std::log(1e6));
}

TEST(DistModel, FamilySpecParsing) {
  std::istringstream in("# model\nfamily = two_sided_log\np: 0.75\n");
  auto s = FamilySpec::parse(in);
  auto m = build_model(s);
  EXPECT_EQ(m.id, "two_sided_log");
  EXPECT_DOUBLE_EQ(m.tail_pos(9.0), 0.075);
  std::istringstream bad("family = harmonic1\ncolour = red\n");
  EXPECT_THROW(FamilySpec::parse(bad), error);
  FamilySpec miss;
  miss.family = "c1_hb_only";
  EXPECT_THROW(build_model(miss), error);
  EXPECT_NE(make_two_sided_log(0.75).hash, make_two_sided_log(0.6).hash);
  EXPECT_EQ(make_two_sided_log(0.75).hash, make_two_sided_log(0.75).hash);
}

TEST(DistModel, SupportFloorOverrideHoldsTailsConstant) {
  FamilySpec s;
  s.family = "two_sided_log";
  s.p = 0.75;
  s.support_floor = 4.0;
  auto m = build_model(s);
  EXPECT_DOUBLE_EQ(m.tail_pos(0.0), 0.15);
  EXPECT_DOUBLE_EQ(m.tail_pos(9.0), 0.075);
  EXPECT_FALSE(bool(m.ann.ell));
  s.support_floor = -1.0;
  EXPECT_THROW(build_model(s), error);
}

TEST(DistModel, UserModelRejectsIncreasingTail) {
  EXPECT_THROW(make_user_model("bad", Kind::continuous, 1.0, [](double x) { return std::min(1.0, 0.1 + 0.01 * x); },
                               [](double) { return 0.0; }),
               error);
  auto ok = make_user_model("geom", Kind::lattice, 1.0, [](double x) { return std::pow(0.5, std::floor(x)); },
                            [](double) { return 0.0; });
  EXPECT_NEAR(ok.pmf(1), 0.5, 1e-15);
  EXPECT_NEAR(ok.pmf(3), 0.125, 1e-15);
  EXPECT_EQ(step_from_uniform(ok, 0.3), 1.0);
  EXPECT_EQ(step_from_uniform(ok, 0.6), 2.0);
}
