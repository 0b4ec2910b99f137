#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "conditions.hpp"
#include "dist_model.hpp"
#include "functionals.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace renewal_lab {

using cplx = std::complex<double>;

enum class PhiMethod { automatic, series, tail_integral };

struct CharfnOptions {
  double rel_tol = 1e-12;
  int max_blocks = 64;
  double euler_threshold = 1e-2;  // lattice: Euler tail above, half-period blocks below
  double theta_min = 1e-7;        // no direct 1/(1-phi) below this
  double theta_floor = 1e-100;    // cumulative_C dyadic floor, continuous models
  double lattice_theta_floor = 1e-6;
  double cumulative_rel_tol = 1e-9;
  int jobs = 1;
  bool use_annotations = true;  // closed-form 1 - phi when the model carries one
};

struct PhiValue {
  cplx value;
  double err = 0.0;
  int blocks = 0;
};

struct ResolventSample {
  double theta = 0.0;
  cplx one_minus_phi;
  double C = 0.0;
  double S = 0.0;
  double quad_err = 0.0;
};

namespace detail {

inline double pi() { return std::numbers::pi; }

// accelerated sum of complex alternating blocks, real and imaginary parts separately
template <class Block>
PhiValue accelerate_complex(Block&& block, const CharfnOptions& o, const char* what) {
  std::vector<cplx> cache;
  auto get = [&](int k) {
    while (static_cast<int>(cache.size()) <= k) cache.push_back(block(static_cast<int>(cache.size())));
    return cache[k];
  };
  const double scale = std::abs(get(0)) + std::abs(get(1));
  const double abs_tol = o.rel_tol * scale;
  auto re = accelerate_alternating([&](int k) { return get(k).real(); }, o.rel_tol, abs_tol, o.max_blocks);
  auto im = accelerate_alternating([&](int k) { return get(k).imag(); }, o.rel_tol, abs_tol, o.max_blocks);
  PhiValue v;
  v.value = {re.value, im.value};
  v.err = re.err + im.err;
  v.blocks = std::max(re.blocks, im.blocks);
  if (v.err > 1e-6 * std::abs(v.value) + 1e3 * abs_tol) {
    std::vector<double> trace = re.trace;
    trace.insert(trace.end(), im.trace.begin(), im.trace.end());
    throw error(errc::nonconvergent, std::string(what) + ": oscillatory series did not converge", trace);
  }
  return v;
}

// sum_{n >= n0} c(n) w^n, w = e^{i alpha}, alpha in (0, pi]; direct to N then Euler tail
template <class Coef>
cplx euler_series(Coef&& c, long long n0, double alpha, double* err) {
  const long long N = n0 + static_cast<long long>(std::ceil(400.0 / alpha));
  cplx s = 0.0;
  for (long long n = n0; n < N; ++n) s += c(n) * std::polar(1.0, alpha * static_cast<double>(n));
  const cplx w = std::polar(1.0, alpha);
  const cplx q = w / (1.0 - w);
  double d[5];
  for (int j = 0; j < 5; ++j) d[j] = c(N + j);
  cplx tail = 0.0, qk = 1.0;
  for (int k = 0; k < 5; ++k) {
    tail += qk * d[0];
    for (int j = 0; j + 1 < 5 - k; ++j) d[j] = d[j + 1] - d[j];
    qk *= q;
  }
  tail *= std::polar(1.0, alpha * static_cast<double>(N)) / (1.0 - w);
  if (err) *err = std::abs(qk * d[0]) / std::abs(1.0 - w) + 1e-15 * std::abs(s);
  return s + tail;
}

// one side of the direct lattice series: sum_{n >= 1} p(n) (1 - w^n)
template <class P>
PhiValue lattice_side_series(P&& p, double side_mass_beyond, double alpha, long long nmax_direct,
                             const CharfnOptions& o, const std::function<double(long long)>& mass_from) {
  PhiValue out;
  if (side_mass_beyond == 0.0) return out;
  auto one_minus_w = [&](long long n) {
    const double h = 0.5 * alpha * static_cast<double>(n);
    return cplx(0.0, -2.0 * std::sin(h)) * std::polar(1.0, h);
  };
  if (alpha >= o.euler_threshold) {
    const long long N = 1 + static_cast<long long>(std::ceil(400.0 / alpha));
    cplx s = 0.0;
    for (long long n = 1; n < N; ++n) s += p(n) * one_minus_w(n);
    double e = 0.0;
    const cplx osc = euler_series(p, N, alpha, &e);
    out.value = s + mass_from(N) - osc;
    out.err = e;
    out.blocks = 1;
    return out;
  }
  (void)nmax_direct;
  const double period = pi() / alpha;
  auto bound = [&](int k) { return static_cast<long long>(std::floor(k * period)); };
  const long long b1 = std::max<long long>(1, bound(1));
  out = accelerate_complex(
      [&](int k) {
        cplx s = 0.0;
        if (k == 0) {
          for (long long n = 1; n <= b1; ++n) s += p(n) * one_minus_w(n);
          s += mass_from(b1 + 1);
          return s;
        }
        const long long lo = std::max(b1, bound(k)) + 1, hi = std::max(b1, bound(k + 1));
        for (long long n = lo; n <= hi; ++n) s -= p(n) * std::polar(1.0, alpha * static_cast<double>(n));
        return s;
      },
      o, "one_minus_phi");
  return out;
}

inline PhiValue lattice_series(const DistributionModel& m, double theta, const CharfnOptions& o) {
  const double s = m.span, alpha = theta * s;
  auto pos_mass = [&](long long n) { return m.tail_pos((n - 0.5) * s); };
  auto neg_mass = [&](long long n) { return m.tail_neg((n - 0.5) * s); };
  auto pp = [&](long long n) { return m.pmf(n); };
  auto pn = [&](long long n) { return m.pmf(-n); };
  PhiValue a = lattice_side_series(pp, m.tail_pos(0.0), alpha, 0, o, pos_mass);
  PhiValue b = lattice_side_series(pn, m.tail_neg(0.0), alpha, 0, o, neg_mass);
  return {a.value + std::conj(b.value), a.err + b.err, std::max(a.blocks, b.blocks)};
}

// theta int H sin(theta x) dx - i theta int K cos(theta x) dx with piecewise-constant lattice tails
inline PhiValue lattice_tail_form(const DistributionModel& m, double theta, const CharfnOptions& o) {
  const double s = m.span, beta = theta * s;
  auto Hn = [&](long long n) { return m.tail_pos(n * s) + m.tail_neg(n * s); };
  auto Kn = [&](long long n) { return m.tail_pos(n * s) - m.tail_neg(n * s); };
  if (beta >= o.euler_threshold) {
    double eh = 0.0, ek = 0.0;
    const cplx sh = euler_series(Hn, 0, beta, &eh) * std::polar(1.0, 0.5 * beta);
    const cplx sk = euler_series(Kn, 0, beta, &ek) * std::polar(1.0, 0.5 * beta);
    const double f = 2.0 * std::sin(0.5 * beta);
    return {cplx(f * sh.imag(), -f * sk.real()), f * (eh + ek), 1};
  }
  const double period = pi() / theta;
  return accelerate_complex(
      [&](int k) {
        const double x0 = k * period, x1 = (k + 1) * period;
        long long n = static_cast<long long>(std::floor(x0 / s));
        double re = 0.0, im = 0.0;
        for (; n * s < x1; ++n) {
          const double c0 = std::max(n * s, x0), c1 = std::min((n + 1) * s, x1);
          if (c1 <= c0) continue;
          const double mid = 0.5 * theta * (c0 + c1), half = std::sin(0.5 * theta * (c1 - c0));
          re += 2.0 * Hn(n) * std::sin(mid) * half;
          im -= 2.0 * Kn(n) * std::cos(mid) * half;
        }
        return cplx(re, im);
      },
      o, "one_minus_phi");
}

inline PhiValue continuous_tail_form(const DistributionModel& m, double theta, const CharfnOptions& o) {
  auto f = [&](double y) {
    const double x = y / theta;
    const double tp = m.tail_pos(x), tn = m.tail_neg(x);
    return cplx((tp + tn) * std::sin(y), -(tp - tn) * std::cos(y));
  };
  const double quad_rel = std::max(o.rel_tol * 0.1, 1e-13);
  return accelerate_complex(
      [&](int k) {
        if (k == 0) {
          std::vector<double> br{0.0};
          const double ymax = pi();
          const double lo = std::max(m.support_floor, 1e-3) * theta;
          if (m.support_floor > 0.0 && m.support_floor * theta < ymax) br.push_back(m.support_floor * theta);
          for (double y = lo; y < ymax; y *= 2.0)
            if (y > br.back()) br.push_back(y);
          br.push_back(ymax);
          return integrate_panels(f, br, 0.0, quad_rel).value;
        }
        return integrate(f, k * pi(), (k + 1) * pi(), 0.0, quad_rel).value;
      },
      o, "one_minus_phi");
}

}  // namespace detail

inline PhiValue one_minus_phi(const DistributionModel& m, double theta, PhiMethod method = PhiMethod::automatic,
                              const CharfnOptions& o = {}) {
  if (theta == 0.0 || !std::isfinite(theta)) throw error(errc::invalid_parameter, "one_minus_phi: theta must be nonzero");
  if (m.is_lattice() && std::fabs(theta) * m.span > detail::pi() * (1 + 1e-12))
    throw error(errc::precondition, "one_minus_phi: |theta| exceeds pi/span for a lattice model");
  const double t = std::fabs(theta);
  PhiValue v;
  if (method == PhiMethod::automatic && o.use_annotations && m.ann.one_minus_phi) {
    v.value = m.ann.one_minus_phi(t);
    v.err = 4 * std::numeric_limits<double>::epsilon() * std::abs(v.value);
  } else if (m.is_lattice()) {
    const bool series = method == PhiMethod::series ||
                        (method == PhiMethod::automatic && t * m.span >= o.euler_threshold);
    v = series ? detail::lattice_series(m, t, o) : detail::lattice_tail_form(m, t, o);
  } else {
    if (method == PhiMethod::series) throw error(errc::precondition, "one_minus_phi: series form needs a lattice model");
    v = detail::continuous_tail_form(m, t, o);
  }
  if (theta < 0.0) v.value = std::conj(v.value);
  return v;
}

namespace detail {

inline ResolventSample resolvent_of(double theta, const PhiValue& w) {
  const double mag = std::abs(w.value);
  const cplx r = 1.0 / w.value;
  ResolventSample s;
  s.theta = theta;
  s.one_minus_phi = w.value;
  s.C = r.real();
  s.S = r.imag();
  s.quad_err = w.err / (mag * mag) + 4 * std::numeric_limits<double>::epsilon() * std::abs(r);
  return s;
}

}  // namespace detail

inline ResolventSample resolvent(const DistributionModel& m, double theta, PhiMethod method = PhiMethod::automatic,
                                 const CharfnOptions& o = {}) {
  const PhiValue w = one_minus_phi(m, theta, method, o);
  if (std::abs(w.value) < 1e-14) throw error(errc::precondition, "resolvent: |1-phi| below 1e-14, use the asymptotic branch");
  return detail::resolvent_of(theta, w);
}

struct CumulativeCPoint {
  double theta = 0.0;
  double J = 0.0;
  double err = 0.0;
};

struct CumulativeCResult {
  std::vector<CumulativeCPoint> points;
  std::string method;
  std::vector<TrendPoint> blocks;  // dyadic blocks (log2(1/u), contribution)
  double completion = 0.0;
};

// J(theta) = int_0^theta C for each theta of the grid
inline CumulativeCResult cumulative_C_grid(const DistributionModel& m, std::vector<double> grid,
                                           const CharfnOptions& o = {}) {
  if (grid.empty()) throw error(errc::invalid_parameter, "cumulative_C: empty grid");
  for (double t : grid)
    if (!(t > 0.0)) throw error(errc::invalid_parameter, "cumulative_C: theta must be > 0");
  std::sort(grid.begin(), grid.end());
  if (m.is_lattice() && grid.back() * m.span > detail::pi() * (1 + 1e-12))
    throw error(errc::precondition, "cumulative_C: theta exceeds pi/span");
  // tail-integral form carries no cancellation, so C is taken below theta_min here
  auto C = [&](double u) { return detail::resolvent_of(u, one_minus_phi(m, u, PhiMethod::automatic, o)).C; };
  CumulativeCResult out;
  const double rt = o.cumulative_rel_tol;

  const bool periodic = m.is_lattice() && m.nonnegative && m.ann.transient && *m.ann.transient;
  if (periodic) {
    // period identity: int_0^{pi/s} C = pi U{0}/s - pi/(2 mu)
    out.method = "period identity";
    const double s = m.span;
    const double U0 = 1.0 / (1.0 - m.pmf(0));
    double total = detail::pi() * U0 / s;
    if (m.ann.mean) total -= detail::pi() / (2.0 * *m.ann.mean);
    std::vector<double> pts = grid;
    pts.push_back(detail::pi() / s);
    std::vector<double> acc(pts.size(), 0.0), errs(pts.size(), 0.0);
    for (int i = static_cast<int>(pts.size()) - 2; i >= 0; --i) {
      auto q = integrate_panels(C, geometric_breaks(pts[i], pts[i + 1], pts[i], 2.0), 0.0, rt);
      acc[i] = acc[i + 1] + q.value;
      errs[i] = errs[i + 1] + q.err;
    }
    for (std::size_t i = 0; i < grid.size(); ++i)
      out.points.push_back({grid[i], total - acc[i], errs[i] + 1e-14 * total});
    return out;
  }

  out.method = "dyadic blocks with completion";
  const double floor = m.is_lattice() ? o.lattice_theta_floor : o.theta_floor;
  const double t0 = grid.front();
  double J0 = 0.0, err0 = 0.0;
  std::vector<double> B;
  double hi = t0;
  bool done = false;
  while (!done) {
    const double lo = 0.5 * hi;
    auto q = integrate(C, lo, hi, 0.0, rt);
    B.push_back(q.value);
    out.blocks.push_back({std::log2(1.0 / lo), q.value});
    J0 += q.value;
    err0 += q.err;
    hi = lo;
    const int nb = static_cast<int>(B.size());
    if (nb >= 40 && nb % 20 == 0) {
      auto br = detail::block_rule(out.blocks, 5, 1.25, 0.75);
      if (br.verdict == Verdict::fails)
        throw error(errc::nonconvergent, "cumulative_C: divergence near 0 (dyadic blocks of C not summable)", B);
    }
    if (q.value < 1e-3 * rt * J0 && nb >= 8) {
      err0 += q.value;
      done = true;
    } else if (lo <= floor) {
      auto br = detail::block_rule(out.blocks, 5, 1.25, 0.75);
      if (br.verdict == Verdict::fails)
        throw error(errc::nonconvergent, "cumulative_C: divergence near 0 (dyadic blocks of C not summable)", B);
      QuadratureConfig qc;
      qc.rel_tol = 1e-10;
      const auto fr = functional_profile(m, 1.0 / lo, qc);
      out.completion = detail::pi() / (2.0 * fr.m);
      J0 += out.completion;
      err0 += 0.1 * out.completion + fr.err_bound.m / (fr.m * fr.m);
      done = true;
    }
  }
  double acc = J0, acc_err = err0, prev = t0;
  out.points.push_back({t0, acc, acc_err});
  for (std::size_t i = 1; i < grid.size(); ++i) {
    auto q = integrate_panels(C, geometric_breaks(prev, grid[i], prev, 2.0), 0.0, rt);
    acc += q.value;
    acc_err += q.err;
    out.points.push_back({grid[i], acc, acc_err});
    prev = grid[i];
  }
  return out;
}

inline CumulativeCPoint cumulative_C(const DistributionModel& m, double theta, const CharfnOptions& o = {}) {
  return cumulative_C_grid(m, {theta}, o).points.front();
}

struct DiagnosticsRow {
  double theta = 0.0;
  bool extrapolated = false;
  double phi_abs_ratio = 0.0, phi_abs_err = 0.0;  // |1-phi| / (theta |A(1/theta)|)
  double phi_im_ratio = 0.0, phi_im_err = 0.0;    // Im(1-phi) / (-theta A(1/theta))
  double J = 0.0, J_err = 0.0;
  double J_ell_ratio = 0.0;                       // J ell(1/theta) / (pi/2)
  std::optional<double> J_m_ratio;                // J m(1/theta) / (pi/2)
  std::optional<double> S_theta_ell;              // one-sided models
  double S_err = 0.0;
  double summable_partial = 0.0, summable_err = 0.0;  // int_theta^1 [C + |u S|]
};

struct DiagnosticsTable {
  std::string model_id;
  std::vector<DiagnosticsRow> rows;
  std::vector<TrendPoint> summable_blocks;
  Verdict summable = Verdict::inconclusive;
  double summable_slope = 0.0;
};

inline DiagnosticsTable asymptotic_diagnostics(const DistributionModel& m, const std::vector<double>& theta_grid,
                                               const CharfnOptions& o = {}) {
  if (theta_grid.empty()) throw error(errc::invalid_parameter, "asymptotic_diagnostics: empty grid");
  for (std::size_t i = 0; i < theta_grid.size(); ++i) {
    if (!(theta_grid[i] > 0.0 && theta_grid[i] <= 1.0))
      throw error(errc::precondition, "asymptotic_diagnostics: theta grid must lie in (0, 1]");
    if (i > 0 && !(theta_grid[i] < theta_grid[i - 1]))
      throw error(errc::precondition, "asymptotic_diagnostics: theta grid must be decreasing");
  }
  DiagnosticsTable tab;
  tab.model_id = m.id;
  const std::size_t n = theta_grid.size();
  tab.rows.resize(n);
  Cumulative cum(m);
  std::vector<std::optional<ResolventSample>> rs(n);
  for_each_chunk(static_cast<std::int64_t>(n), 1, o.jobs, [&](std::int64_t, std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i)
      if (theta_grid[i] >= o.theta_min) rs[i] = resolvent(m, theta_grid[i], PhiMethod::automatic, o);
  });
  const auto J = cumulative_C_grid(m, theta_grid, o);
  QuadratureConfig qc;
  qc.rel_tol = 1e-10;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = tab.rows[i];
    const double t = theta_grid[i], x = 1.0 / t;
    r.theta = t;
    const double A = cum.A(x), ell = cum.ell(x);
    if (rs[i]) {
      const auto& s = *rs[i];
      const double phi_err = s.quad_err * std::norm(s.one_minus_phi);
      r.phi_abs_ratio = std::abs(s.one_minus_phi) / (t * std::fabs(A));
      r.phi_abs_err = phi_err / (t * std::fabs(A));
      r.phi_im_ratio = s.one_minus_phi.imag() / (-t * A);
      r.phi_im_err = phi_err / (t * std::fabs(A));
      if (m.nonnegative) {
        r.S_theta_ell = s.S * t * ell;
        r.S_err = s.quad_err * t * ell;
      }
    } else {
      r.extrapolated = true;
      r.phi_abs_ratio = 1.0;
      r.phi_im_ratio = 1.0;
      if (m.nonnegative) r.S_theta_ell = 1.0;
    }
    for (const auto& p : J.points)
      if (p.theta == t) {
        r.J = p.J;
        r.J_err = p.err;
      }
    r.J_ell_ratio = r.J * ell / (detail::pi() / 2);
    try {
      const auto fr = functional_profile(m, x, qc);
      if (std::isfinite(fr.m) && fr.m > 0.0) r.J_m_ratio = r.J * fr.m / (detail::pi() / 2);
    } catch (const error&) {
    }
  }
  // int_theta^1 [C + |u S|] by dyadic blocks from 1 down to the smallest grid point
  auto g = [&](double u) {
    const auto s = resolvent(m, u, PhiMethod::automatic, o);
    return s.C + std::fabs(u * s.S);
  };
  std::vector<double> edges{1.0};
  while (edges.back() > theta_grid.back() * (1 + 1e-12)) edges.push_back(std::max(0.5 * edges.back(), theta_grid.back()));
  for (double t : theta_grid)
    if (std::find(edges.begin(), edges.end(), t) == edges.end()) edges.push_back(t);
  std::sort(edges.begin(), edges.end(), std::greater<>());
  double acc = 0.0, acc_err = 0.0;
  std::vector<std::pair<double, double>> partial{{1.0, 0.0}};
  std::vector<double> partial_err{0.0};
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    auto q = integrate(g, edges[k + 1], edges[k], 0.0, 1e-9);
    acc += q.value;
    acc_err += q.err;
    partial.push_back({edges[k + 1], acc});
    partial_err.push_back(acc_err);
  }
  for (auto& r : tab.rows)
    for (std::size_t k = 0; k < partial.size(); ++k)
      if (partial[k].first == r.theta) {
        r.summable_partial = partial[k].second;
        r.summable_err = partial_err[k];
      }
  // block verdict on dyadic blocks [2^{-k-1}, 2^{-k}]
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double lk = std::log2(1.0 / edges[k]);
    if (std::fabs(lk - std::round(lk)) > 1e-9 || std::fabs(std::log2(edges[k] / edges[k + 1]) - 1.0) > 1e-9) continue;
    tab.summable_blocks.push_back({lk + 1.0, partial[k + 1].second - partial[k].second});
  }
  const auto br = detail::block_rule(tab.summable_blocks, 5, 1.25, 0.75);
  tab.summable = br.verdict;
  tab.summable_slope = br.slope;
  return tab;
}

}  // namespace renewal_lab
