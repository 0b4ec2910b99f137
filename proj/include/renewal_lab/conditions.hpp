#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dist_model.hpp"
#include "functionals.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace renewal_lab {

enum class Verdict { holds, fails, inconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct TrendPoint {
  double x = 0.0;
  double value = 0.0;
};

struct ConditionVerdict {
  Verdict verdict = Verdict::inconclusive;
  std::string provenance = "empirical";  // or "analytic"
  Verdict empirical = Verdict::inconclusive;
  std::string rule;
  std::vector<TrendPoint> trend;
  double statistic = 0.0;  // growth per decade, block slope, ...
};

struct RhoEstimate {
  long long n = 0;
  double rho = 0.0;
  double stderr_ = 0.0;
};

struct ConditionReport {
  std::string model_id;
  double x_max = 0.0;
  ConditionVerdict ha, hb, hc, transient;
  std::optional<double> hc_kappa;
  std::string kappa_method;
  std::string regime = "not-4.3";
  std::vector<TrendPoint> abs_A_over_L;
  std::vector<RhoEstimate> rho_trend;
  std::vector<TrendPoint> A_over_m, ell_over_m;
  bool A_over_m_to_one = false;
  bool ell_over_m_to_one = false;
};

struct ClassifyOptions {
  int points_per_decade = 4;
  double x_min = 10.0;
  double ha_growth = 1.05;        // per decade, over the top two decades
  double hb_converge_slope = 1.25;
  double hb_diverge_slope = 0.75;
  int hb_blocks = 5;
  bool use_annotations = true;
  std::vector<long long> rho_grid;  // empty: no Spitzer estimates
  long long rho_walks = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

namespace detail {

inline std::vector<double> log_grid(double lo, double hi, int per_decade) {
  std::vector<double> g;
  const double d0 = std::log10(lo), d1 = std::log10(hi);
  const int n = static_cast<int>(std::floor((d1 - d0) * per_decade + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(std::pow(10.0, d1 - (n - i) / static_cast<double>(per_decade)));
  return g;
}

inline bool strictly_monotone(const std::vector<TrendPoint>& t, std::size_t from, bool increasing) {
  for (std::size_t i = from + 1; i < t.size(); ++i) {
    const double a = t[i - 1].value, b = t[i].value;
    if (increasing ? !(b > a) : !(b < a)) return false;
  }
  return true;
}

// int_a^b w(t)/D(t)^2 dt with D piecewise given by the cumulative
template <class W, class D>
double block_integral(const Cumulative& cum, double a, double b, W&& w, D&& den) {
  const auto& m = cum.model();
  if (m.is_lattice()) {
    // within a lattice cell tails are constant; D is evaluated at the cell ends
    const double s = m.span;
    double sum = 0.0, t = a;
    while (t < b) {
      const double k = std::floor(t / s + 1e-12);
      const double t1 = std::min(b, (k + 1) * s);
      const double d0 = den(t), d1 = den(t1);
      sum += w(k * s) * (t1 - t) / (d0 * d1);
      t = t1;
    }
    return sum;
  }
  auto f = [&](double t) { const double d = den(t); return w(t) / (d * d); };
  return integrate_panels(f, geometric_breaks(a, b, a, 1.25), 0.0, 1e-10).value;
}

struct BlockRule {
  Verdict verdict = Verdict::inconclusive;
  double slope = 0.0;
};

// dyadic block sums B_k; least-squares slope of -log B against log k
inline BlockRule block_rule(const std::vector<TrendPoint>& blocks, int use, double conv, double div) {
  BlockRule r;
  const int n = static_cast<int>(blocks.size());
  if (n < 2) return r;
  use = std::min(use, n);
  bool all_zero_tail = true;
  for (int i = n - use; i < n; ++i)
    if (blocks[i].value > 0.0) all_zero_tail = false;
  if (all_zero_tail) {
    r.verdict = Verdict::holds;
    r.slope = std::numeric_limits<double>::infinity();
    return r;
  }
  bool nondecreasing = true;
  for (int i = n - use + 1; i < n; ++i)
    if (blocks[i].value < blocks[i - 1].value) nondecreasing = false;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = n - use; i < n; ++i) {
    const double lx = std::log(blocks[i].x), ly = std::log(std::max(blocks[i].value, 1e-300));
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  const double slope = -(use * sxy - sx * sy) / (use * sxx - sx * sx);
  r.slope = slope;
  if (nondecreasing || slope <= div) r.verdict = Verdict::fails;
  else if (slope >= conv) r.verdict = Verdict::holds;
  return r;
}

}  // namespace detail

inline std::vector<RhoEstimate> estimate_rho(const DistributionModel& m, std::vector<long long> n_grid, long long M,
                                             std::uint64_t seed, int jobs = 1) {
  if (M < 1000) throw error(errc::precondition, "estimate_rho: need at least 1000 walks");
  std::sort(n_grid.begin(), n_grid.end());
  n_grid.erase(std::unique(n_grid.begin(), n_grid.end()), n_grid.end());
  if (n_grid.empty() || n_grid.front() < 1) throw error(errc::invalid_parameter, "estimate_rho: n must be >= 1");
  const long long nmax = n_grid.back();
  constexpr long long chunk = 1024;
  const long long nchunks = (M + chunk - 1) / chunk;
  std::vector<std::vector<long long>> counts(nchunks, std::vector<long long>(n_grid.size(), 0));
  for_each_chunk(M, chunk, jobs, [&](std::int64_t c, std::int64_t b, std::int64_t e) {
    auto& cnt = counts[c];
    for (std::int64_t r = b; r < e; ++r) {
      Rng rng(seed, static_cast<std::uint64_t>(r));
      double s = 0.0;
      std::size_t gi = 0;
      for (long long n = 1; n <= nmax; ++n) {
        s += sample_step(m, rng);
        if (n == n_grid[gi]) {
          if (s > 0.0) ++cnt[gi];
          ++gi;
        }
      }
    }
  });
  std::vector<RhoEstimate> out;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    long long tot = 0;
    for (const auto& c : counts) tot += c[i];
    RhoEstimate e;
    e.n = n_grid[i];
    e.rho = static_cast<double>(tot) / M;
    e.stderr_ = std::sqrt(e.rho * (1.0 - e.rho) / M);
    out.push_back(e);
  }
  return out;
}

struct NormingResult {
  double lambda = 0.0;
  int iterations = 0;
  std::vector<double> trajectory;
};

inline NormingResult estimate_norming(const DistributionModel& m, long long n, int max_iter = 500) {
  if (n < 1) throw error(errc::invalid_parameter, "estimate_norming: n must be >= 1");
  if (m.ann.ha && !*m.ann.ha) throw error(errc::precondition, "estimate_norming: (Ha) fails for this model");
  Cumulative cum(m);
  NormingResult r;
  double lam = static_cast<double>(n), omega = 1.0;
  double prev_res = std::numeric_limits<double>::infinity();
  r.trajectory.push_back(lam);
  for (int it = 1; it <= max_iter; ++it) {
    const double target = static_cast<double>(n) * cum.A(lam);
    if (!(target > 0.0))
      throw error(errc::nonconvergent, "estimate_norming: n A(lambda) is not positive", r.trajectory);
    const double res = std::fabs(target - lam) / lam;
    if (res > prev_res) omega = std::max(omega * 0.5, 1.0 / 64);
    prev_res = res;
    lam = (1.0 - omega) * lam + omega * target;
    r.trajectory.push_back(lam);
    r.iterations = it;
    if (res < 1e-10 || std::fabs(static_cast<double>(n) * cum.A(lam) - lam) / lam < 1e-10) {
      r.lambda = lam;
      return r;
    }
  }
  throw error(errc::nonconvergent, "estimate_norming: no convergence within the iteration cap", r.trajectory);
}

inline ConditionReport classify(const DistributionModel& m, double x_max, const ClassifyOptions& o = {}) {
  if (!(x_max >= 1e3)) throw error(errc::precondition, "classify: x_max must be at least 1e3");
  ConditionReport rep;
  rep.model_id = m.id;
  rep.x_max = x_max;
  Cumulative cum(m, o.use_annotations);
  const double lo = std::max(o.x_min, 2.0 * m.support_floor + 1.0);
  const auto grid = detail::log_grid(lo, x_max, o.points_per_decade);
  std::size_t top = 0;
  while (top < grid.size() && grid[top] < x_max / 100.0 * (1 - 1e-12)) ++top;

  // (Ha): A / (x H)
  for (double x : grid) {
    const double h = cum.H(x);
    const double a = cum.A(x);
    const double q = h > 0.0 ? a / (x * h) : (a > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    rep.ha.trend.push_back({x, q});
  }
  {
    auto& v = rep.ha;
    v.rule = "top two decades: strictly increasing with growth >= " + format_real(o.ha_growth) +
             " per decade -> holds; strictly decreasing -> fails";
    const double q1 = v.trend.back().value, q0 = v.trend[top].value;
    if (std::isinf(q1) && q1 > 0) {
      v.empirical = Verdict::holds;
      v.statistic = q1;
    } else if (q0 > 0.0 && q1 > 0.0) {
      v.statistic = std::sqrt(q1 / q0);
      if (detail::strictly_monotone(v.trend, top, true) && v.statistic >= o.ha_growth) v.empirical = Verdict::holds;
      else if (detail::strictly_monotone(v.trend, top, false)) v.empirical = Verdict::fails;
    } else if (q1 <= 0.0) {
      v.empirical = Verdict::fails;
    }
  }

  // (Hb): dyadic blocks of int H/A^2
  {
    auto& v = rep.hb;
    v.rule = "dyadic blocks of int H/A^2: slope of -log B_k vs log k over last " + std::to_string(o.hb_blocks) +
             " blocks >= " + format_real(o.hb_converge_slope) + " -> convergent; <= " +
             format_real(o.hb_diverge_slope) + " or nondecreasing -> divergent";
    const int k0 = static_cast<int>(std::ceil(std::log2(std::max(lo, 2.0))));
    const int k1 = static_cast<int>(std::floor(std::log2(x_max))) - 1;
    bool positive = true;
    for (int k = k0; k <= k1; ++k) {
      const double a = std::ldexp(1.0, k), b = 2 * a;
      if (!(cum.A(a) > 0.0)) {
        positive = false;
        v.trend.push_back({static_cast<double>(k), std::numeric_limits<double>::infinity()});
        continue;
      }
      const double B = detail::block_integral(cum, a, b, [&](double t) { return cum.H(t); },
                                              [&](double t) { return cum.A(t); });
      v.trend.push_back({static_cast<double>(k), B});
    }
    if (positive) {
      auto br = detail::block_rule(v.trend, o.hb_blocks, o.hb_converge_slope, o.hb_diverge_slope);
      v.empirical = br.verdict;
      v.statistic = br.slope;
    } else {
      v.empirical = Verdict::fails;
    }
  }

  auto settle = [&](ConditionVerdict& v, const std::optional<bool>& ann) {
    if (o.use_annotations && ann) {
      v.verdict = *ann ? Verdict::holds : Verdict::fails;
      v.provenance = "analytic";
    } else {
      v.verdict = v.empirical;
      v.provenance = "empirical";
    }
  };
  settle(rep.ha, m.ann.ha);
  settle(rep.hb, m.ann.hb);

  // m/A, A/m and ell/m on the grid where m is available
  bool have_m = rep.hb.verdict != Verdict::fails;
  if (have_m) {
    QuadratureConfig q;
    q.use_annotations = o.use_annotations;
    q.rel_tol = 1e-9;
    try {
      for (std::size_t i = top; i < grid.size(); ++i) {
        const double x = grid[i];
        const auto r = functional_profile(m, x, q);
        rep.A_over_m.push_back({x, r.A / r.m});
        rep.ell_over_m.push_back({x, r.ell / r.m});
        rep.hc.trend.push_back({x, r.m / r.A});
      }
    } catch (const error&) {
      have_m = false;
      rep.A_over_m.clear();
      rep.ell_over_m.clear();
      rep.hc.trend.clear();
    }
  }
  auto tends_to_one = [](const std::vector<TrendPoint>& t) {
    if (t.size() < 2) return false;
    const double d1 = std::fabs(t.back().value - 1.0), d0 = std::fabs(t.front().value - 1.0);
    return d1 < 0.02 && d1 <= d0 + 1e-12;
  };
  rep.A_over_m_to_one = tends_to_one(rep.A_over_m);
  rep.ell_over_m_to_one = tends_to_one(rep.ell_over_m);

  // (Hc)
  {
    auto& v = rep.hc;
    v.rule = "A/ell stable over the top two decades (change < 0.01) and > 0.05 -> kappa = A/ell; "
             "else m/A stable (change < 0.01) -> kappa = m/A(x_max)";
    const double r1 = cum.A(grid.back()) / cum.ell(grid.back());
    const double r0 = cum.A(grid[top]) / cum.ell(grid[top]);
    std::optional<double> emp;
    std::string method;
    if (std::fabs(r1 - r0) < 0.01 && r1 > 0.05) {
      emp = r1;
      method = "A/ell shortcut";
    } else if (have_m && !v.trend.empty() && std::fabs(v.trend.back().value - v.trend.front().value) < 0.01) {
      emp = v.trend.back().value;
      method = "m/A at x_max";
    }
    v.statistic = have_m && !v.trend.empty() ? v.trend.back().value : r1;
    v.empirical = emp ? Verdict::holds : Verdict::inconclusive;
    if (rep.hb.verdict == Verdict::fails) v.empirical = Verdict::fails;
    if (o.use_annotations && m.ann.kappa) {
      v.verdict = Verdict::holds;
      v.provenance = "analytic";
      rep.hc_kappa = *m.ann.kappa;
      rep.kappa_method = "analytic";
    } else {
      v.verdict = v.empirical;
      v.provenance = "empirical";
      if (emp) {
        rep.hc_kappa = std::clamp(*emp, 0.0, 1.0);
        rep.kappa_method = method;
      }
    }
  }

  // regime from the L annotation
  if (m.ann.balance_p && m.ann.L) {
    const double p = *m.ann.balance_p;
    for (std::size_t i = top; i < grid.size(); ++i)
      rep.abs_A_over_L.push_back({grid[i], std::fabs(cum.A(grid[i])) / m.ann.L(grid[i])});
    if (p > 0.5) {
      rep.regime = "p>1/2";
    } else if (p == 0.5) {
      const double g = rep.abs_A_over_L.front().value > 0.0
                           ? std::sqrt(rep.abs_A_over_L.back().value / rep.abs_A_over_L.front().value)
                           : 1.0;
      const bool growing = detail::strictly_monotone(rep.abs_A_over_L, 0, true) && g >= o.ha_growth;
      rep.regime = growing ? "p=1/2 & rho->0 or 1" : "p=1/2 & rho in (0,1)";
    }
  }

  // transience
  {
    auto& v = rep.transient;
    if (rep.ha.verdict == Verdict::holds && rep.hb.verdict != Verdict::inconclusive) {
      v.empirical = rep.hb.verdict;
      v.rule = "under (Ha): transient iff (Hb)";
    } else if (m.ann.L && rep.regime != "not-4.3") {
      v.rule = "criterion int H/(L v |A|)^2 < inf by the dyadic block rule";
      const int k0 = static_cast<int>(std::ceil(std::log2(std::max(lo, 2.0))));
      const int k1 = static_cast<int>(std::floor(std::log2(x_max))) - 1;
      for (int k = k0; k <= k1; ++k) {
        const double a = std::ldexp(1.0, k);
        auto den = [&](double t) { return std::max(m.ann.L(t), std::fabs(cum.A(t))); };
        const double B = detail::block_integral(cum, a, 2 * a, [&](double t) { return cum.H(t); }, den);
        v.trend.push_back({static_cast<double>(k), B});
      }
      auto br = detail::block_rule(v.trend, o.hb_blocks, o.hb_converge_slope, o.hb_diverge_slope);
      v.empirical = br.verdict;
      v.statistic = br.slope;
    } else {
      v.rule = "no applicable criterion";
    }
    if (o.use_annotations && m.ann.transient) {
      v.verdict = *m.ann.transient ? Verdict::holds : Verdict::fails;
      v.provenance = "analytic";
    } else {
      v.verdict = v.empirical;
      v.provenance = "empirical";
    }
    if (rep.ha.verdict == Verdict::holds && rep.hb.verdict == Verdict::holds) v.verdict = Verdict::holds;
    if (rep.ha.verdict == Verdict::holds && rep.hb.verdict == Verdict::fails) v.verdict = Verdict::fails;
  }

  if (!o.rho_grid.empty() && o.rho_walks > 0) rep.rho_trend = estimate_rho(m, o.rho_grid, o.rho_walks, o.seed, o.jobs);
  return rep;
}

}  // namespace renewal_lab
