#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "renewal_lab/charfn.hpp"

using namespace renewal_lab;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPi = std::numbers::pi;

DistributionModel model(const std::string& f, double p = kNaN, double delta = kNaN) {
  FamilySpec s;
  s.family = f;
  s.p = p;
  s.delta = delta;
  return build_model(s);
}

// sum 1/(n(n+1)) z^n = 1 + (1-z) log(1-z) / z
cplx harmonic_oracle(double theta) {
  const cplx z = std::polar(1.0, theta);
  return -(1.0 - z) * std::log(1.0 - z) / z;
}

}  // namespace

TEST(Charfn, HarmonicSeriesMatchesClosedForm) {
  auto m = model("harmonic1");
  for (double t : {3.0, 1.0, 0.3, 0.05, 0.0101, 0.0099, 1e-3, 1e-4}) {
    const cplx ex = harmonic_oracle(t);
    EXPECT_LT(std::abs(one_minus_phi(m, t, PhiMethod::series).value - ex), 1e-9) << t;
    EXPECT_LT(std::abs(one_minus_phi(m, t, PhiMethod::tail_integral).value - ex), 1e-9) << t;
  }
}

TEST(Charfn, LatticeTailFormAgreesWithSeries) {
  auto m = model("harmonic1");
  for (double t = 1e-4; t <= 3.0; t *= 1.7) {
    const auto a = one_minus_phi(m, t, PhiMethod::series);
    const auto b = one_minus_phi(m, t, PhiMethod::tail_integral);
    EXPECT_LT(std::abs(a.value - b.value), 1e-8) << t;
  }
}

TEST(Charfn, HarmonicSmallTheta) {
  auto m = model("harmonic1");
  Cumulative cum(m);
  const auto w = one_minus_phi(m, 1e-3);
  const double pred = -1e-3 * cum.ell(1000.0);
  EXPECT_NEAR(pred, -7.49e-3, 1e-4);
  EXPECT_LT(std::fabs(w.value.imag() / pred - 1.0), 0.2);
  const auto r = resolvent(m, 1e-3);
  EXPECT_LT(std::fabs(r.S / 1.336e2 - 1.0), 0.2);
}

TEST(Charfn, SymmetricModelIsReal) {
  auto m = model("two_sided_log", 0.5);
  for (double t : {1.0, 0.1, 0.01}) EXPECT_EQ(one_minus_phi(m, t).value.imag(), 0.0);
  EXPECT_EQ(resolvent(m, 0.01).S, 0.0);
}

TEST(Charfn, Parity) {
  for (auto m : {model("harmonic1"), model("two_sided_log", 0.75), model("c1_hb_only", kNaN, 0.75)}) {
    for (double t : {2.0, 0.5, 0.03, 1e-3}) {
      const auto a = resolvent(m, t), b = resolvent(m, -t);
      EXPECT_LE(std::fabs(a.C - b.C), 1e-12 * std::fabs(a.C)) << m.id << " " << t;
      EXPECT_LE(std::fabs(a.S + b.S), 1e-12 * std::fabs(a.S)) << m.id << " " << t;
      const auto p = one_minus_phi(m, t), q = one_minus_phi(m, -t);
      EXPECT_LE(std::abs(q.value - std::conj(p.value)), 1e-12 * std::abs(p.value));
    }
  }
}

TEST(Charfn, CPositive) {
  for (auto m : {model("harmonic1"), model("finite_mean_baseline"), model("two_sided_log", 0.75),
                 model("two_sided_log", 0.5), model("c1_hb_only", kNaN, 0.75), model("c2_ha_only", kNaN, 0.75)})
    for (double t : {0.01, 0.1, 1.0}) EXPECT_GT(resolvent(m, t).C, 0.0) << m.id << " " << t;
}

TEST(Charfn, ResolventIsReciprocal) {
  auto m = model("two_sided_log", 0.75);
  const auto r = resolvent(m, 0.2);
  EXPECT_LT(std::abs(cplx(r.C, r.S) * r.one_minus_phi - 1.0), 1e-13);
  EXPECT_GT(r.quad_err, 0.0);
}

TEST(Charfn, ContinuousAgreesWithLatticeLimit) {
  // two_sided_log at large theta: compare the tail form with a fine direct integral of the tails
  auto m = model("two_sided_log", 0.75);
  const double t = 0.7;
  auto f = [&](double x) { return (m.tail_pos(x) + m.tail_neg(x)) * std::sin(t * x); };
  const double re = t * integrate_panels(f, geometric_breaks(0.0, 2000.0 * kPi / t, 1e-3, 1.5), 0.0, 1e-13).value;
  // truncated at an even number of half-periods; remainder is below the last block size
  EXPECT_NEAR(one_minus_phi(m, t).value.real(), re, 2e-4);
}

TEST(Charfn, Preconditions) {
  auto m = model("harmonic1");
  EXPECT_THROW(one_minus_phi(m, 0.0), error);
  EXPECT_THROW(one_minus_phi(m, 3.5), error);
  EXPECT_THROW(one_minus_phi(model("two_sided_log", 0.75), 0.1, PhiMethod::series), error);
  EXPECT_THROW(cumulative_C(m, -1.0), error);
  EXPECT_THROW(asymptotic_diagnostics(m, {1e-2, 1e-1}), error);
  EXPECT_THROW(asymptotic_diagnostics(m, {2.0}), error);
}

TEST(Charfn, CumulativeHarmonic) {
  auto m = model("harmonic1");
  Cumulative cum(m);
  const auto j = cumulative_C(m, 1e-4);
  const double jl = j.J * cum.ell(1e4);
  EXPECT_GE(jl, 1.33);
  EXPECT_LE(jl, 1.81);
}

TEST(Charfn, CumulativePeriodIdentityMatchesDirect) {
  // finite mean: J(theta) = int_0^theta C, with C(0+) = E X^2 / (2 mu^2)
  auto m = model("finite_mean_baseline");
  const auto j = cumulative_C(m, 1e-3);
  auto C = [&](double u) { return resolvent(m, u).C; };
  const double direct = integrate(C, 1e-7, 1e-3, 0.0, 1e-10).value + 1e-7 * 2.5 / (2 * 2.25);
  EXPECT_NEAR(j.J, direct, 1e-10);
}

TEST(Charfn, CumulativeTwoSidedTrend) {
  auto m = model("two_sided_log", 0.75);
  const auto r = cumulative_C_grid(m, {1e-2, 1e-3, 1e-4});
  ASSERT_EQ(r.points.size(), 3u);
  std::vector<double> ratio;
  for (const auto& p : r.points) ratio.push_back(p.J * functional_profile(m, 1.0 / p.theta).m / (kPi / 2));
  // points are ascending in theta
  for (double v : ratio) EXPECT_NEAR(v, 1.0, 0.05);
  EXPECT_LT(r.completion, 0.1 * r.points.front().J);
}

TEST(Charfn, CumulativeDivergenceReported) {
  auto m = model("c2_ha_only", kNaN, 0.75);
  try {
    cumulative_C(m, 1e-2);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::nonconvergent);
  }
}

TEST(Charfn, DiagnosticsTwoSided) {
  auto m = model("two_sided_log", 0.75);
  const auto d = asymptotic_diagnostics(m, {1e-1, 1e-2, 1e-3, 1e-4, 1e-5});
  ASSERT_EQ(d.rows.size(), 5u);
  EXPECT_LT(std::fabs(d.rows.back().phi_abs_ratio - 1.0), 0.1);
  EXPECT_EQ(d.summable, Verdict::holds);
  for (const auto& r : d.rows) {
    EXPECT_TRUE(std::isfinite(r.phi_abs_ratio));
    EXPECT_TRUE(std::isfinite(r.J));
    EXPECT_TRUE(r.J_m_ratio.has_value());
    EXPECT_FALSE(r.S_theta_ell.has_value());
  }
  for (std::size_t i = 1; i < d.rows.size(); ++i) EXPECT_GE(d.rows[i].summable_partial, d.rows[i - 1].summable_partial);
}

TEST(Charfn, DiagnosticsHarmonicSTrend) {
  auto m = model("harmonic1");
  Cumulative cum(m);
  const auto d = asymptotic_diagnostics(m, {1e-1, 1e-2, 1e-3});
  for (const auto& r : d.rows) {
    ASSERT_TRUE(r.S_theta_ell.has_value());
    const cplx exact = 1.0 / harmonic_oracle(r.theta);
    EXPECT_NEAR(*r.S_theta_ell, exact.imag() * r.theta * cum.ell(1.0 / r.theta), 1e-9);
  }
  // S theta ell overshoots 1 near theta = 1e-4 and then decreases toward 1
  double prev = std::numeric_limits<double>::infinity();
  for (double t : {1e-4, 1e-5, 3e-6}) {
    const double v = resolvent(m, t).S * t * cum.ell(1.0 / t);
    EXPECT_LT(std::fabs(v - 1.0), prev) << t;
    EXPECT_LT(std::fabs(v - 1.0), 0.05) << t;
    prev = std::fabs(v - 1.0);
  }
}

TEST(Charfn, DiagnosticsExtrapolatedBelowThetaMin) {
  auto m = model("two_sided_log", 0.75);
  const auto d = asymptotic_diagnostics(m, {1e-6, 1e-8});
  EXPECT_FALSE(d.rows[0].extrapolated);
  EXPECT_TRUE(d.rows[1].extrapolated);
  EXPECT_TRUE(std::isfinite(d.rows[1].J));
}
