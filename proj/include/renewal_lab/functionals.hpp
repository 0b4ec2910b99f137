#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dist_model.hpp"
#include "quadrature.hpp"

namespace renewal_lab {

struct QuadratureConfig {
  double rel_tol = 1e-12;
  bool use_annotations = true;
  double completion_factor = 1024.0;         // continuous: numeric range [x, x*factor]
  double lattice_completion_factor = 16.0;   // lattice: exact cell sums over [x, x*factor]
  int max_blocks = 1000;                     // dyadic blocks without a closed-form completion
  int extrapolate_after = 60;                // continuous: dyadic blocks before extrapolating
};

// ell(x) and A(x), closed form when annotated, otherwise cached node sums
// plus a local Gauss-Kronrod piece.
class Cumulative {
 public:
  explicit Cumulative(const DistributionModel& m, bool use_annotations = true)
      : m_(m), closed_(use_annotations && m.ann.ell && m.ann.A) {}

  bool closed_form() const { return closed_; }

  double ell(double x) const { return closed_ ? m_.ann.ell(x) : eval(x, true); }
  double A(double x) const { return closed_ ? m_.ann.A(x) : eval(x, false); }
  double H(double x) const { return m_.tail_pos(x) + m_.tail_neg(x); }
  double K(double x) const { return m_.tail_pos(x) - m_.tail_neg(x); }

  const DistributionModel& model() const { return m_; }

  static constexpr long long kLatticeCap = 1LL << 22;

 private:
  double eval(double x, bool want_ell) const {
    if (x <= 0.0) return 0.0;
    if (m_.is_lattice()) return eval_lattice(x, want_ell);
    extend(x);
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - nodes_.begin()) - 1;
    const double base = want_ell ? ell_at_[i] : A_at_[i];
    if (x == nodes_[i]) return base;
    auto f = [&](double t) { return want_ell ? H(t) : K(t); };
    return base + integrate(f, nodes_[i], x, 0.0, 1e-13).value;
  }

  void extend(double x) const {
    if (nodes_.empty()) {
      nodes_.push_back(0.0);
      ell_at_.push_back(0.0);
      A_at_.push_back(0.0);
      if (m_.support_floor > 0.0) push_node(m_.support_floor);
      push_node(std::max(1.0, 2.0 * m_.support_floor));
    }
    while (nodes_.back() < x) push_node(2.0 * nodes_.back());
  }

  void push_node(double b) const {
    const double a = nodes_.back();
    auto h = [&](double t) { return H(t); };
    auto k = [&](double t) { return K(t); };
    ell_at_.push_back(ell_at_.back() + integrate(h, a, b, 0.0, 1e-13).value);
    A_at_.push_back(A_at_.back() + integrate(k, a, b, 0.0, 1e-13).value);
    nodes_.push_back(b);
  }

  double eval_lattice(double x, bool want_ell) const {
    const double s = m_.span;
    const double q = std::floor(x / s);
    if (q >= static_cast<double>(kLatticeCap))
      throw error(errc::coverage, "cumulative tail sum beyond the lattice cache; supply a closed form");
    const auto n = static_cast<long long>(q);
    while (static_cast<long long>(cum_ell_.size()) <= n + 1) {
      const long long k = static_cast<long long>(cum_ell_.size());
      if (k == 0) {
        cum_ell_.push_back(0.0);
        cum_A_.push_back(0.0);
        continue;
      }
      const double t = (k - 1) * s;
      cum_ell_.push_back(cum_ell_.back() + s * H(t));
      cum_A_.push_back(cum_A_.back() + s * K(t));
    }
    const double frac = x - n * s;
    const double t = n * s;
    return want_ell ? cum_ell_[n] + frac * H(t) : cum_A_[n] + frac * K(t);
  }

  const DistributionModel& m_;
  bool closed_;
  mutable std::vector<double> nodes_, ell_at_, A_at_;
  mutable std::vector<double> cum_ell_, cum_A_;
};

struct FieldErrors {
  double ell = 0.0, A = 0.0, m = 0.0, r_plus = 0.0, r_minus = 0.0;
};

struct FunctionalRecord {
  double x = 0.0;
  double ell = 0.0, A = 0.0, m = 0.0, r_plus = 0.0, r_minus = 0.0;
  FieldErrors err_bound;     // relative
  std::string completion;    // "analytic" or "cauchy"
};

// The four tail integrals over [x, inf) against 1/A^2 (three of them) and 1/ell^2.
struct TailIntegrals {
  double inv_m = 0.0, r_plus = 0.0, r_minus = 0.0, inv_ell = 0.0;
  double err_inv_m = 0.0, err_r_plus = 0.0, err_r_minus = 0.0, err_inv_ell = 0.0;
  std::string completion;
  int blocks = 0;
};

namespace detail {

// four integrands sharing one evaluation of A and ell
struct Quad4 {
  double v[4] = {0, 0, 0, 0};
  Quad4& operator+=(const Quad4& o) { for (int i = 0; i < 4; ++i) v[i] += o.v[i]; return *this; }
  Quad4 operator+(const Quad4& o) const { Quad4 r = *this; return r += o; }
  Quad4 operator-(const Quad4& o) const { Quad4 r = *this; for (int i = 0; i < 4; ++i) r.v[i] -= o.v[i]; return r; }
  Quad4 operator*(double c) const { Quad4 r = *this; for (double& x : r.v) x *= c; return r; }
  double norm_inf() const { return std::max({std::fabs(v[0]), std::fabs(v[1]), std::fabs(v[2]), std::fabs(v[3])}); }
};

inline bool has_completion(const DistributionModel& m, bool use) {
  return use && m.ann.inv_m_tail && m.ann.r_plus_tail && m.ann.r_minus_tail && m.ann.inv_ell_tail;
}

// Remainder of a series of dyadic block values decaying like k^-s.
struct PowerTail {
  double remainder = 0.0;
  double err = 0.0;
  double slope = 0.0;
  bool convergent = false;
};

// Levin u-transform of the partial sums over the last k blocks; returns limit minus the last partial sum
inline double levin_remainder(const std::vector<double>& blocks, double beta, int k = 6) {
  const int n = static_cast<int>(blocks.size());
  if (n < k + 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> S(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) S[i] = s += blocks[i];
  const int b = n - k - 1;
  double num = 0.0, den = 0.0, binom = 1.0;
  for (int j = 0; j <= k; ++j) {
    const int m = b + j;
    if (blocks[m] == 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double w = (j % 2 ? -1.0 : 1.0) * binom * std::pow((m + beta) / (b + k + beta), k - 1) / ((m + beta) * blocks[m]);
    num += w * S[m];
    den += w;
    binom = binom * (k - j) / (j + 1);
  }
  return num / den - S[n - 1];
}

inline PowerTail power_tail(const std::vector<double>& blocks, int first_k) {
  PowerTail out;
  const int n = static_cast<int>(blocks.size());
  if (n < 12) return out;
  const double b1 = blocks[n - 1], b0 = blocks[n - 11];
  if (b1 <= 0.0) {
    out.convergent = true;
    out.slope = std::numeric_limits<double>::infinity();
    return out;
  }
  const double k1 = first_k + n, k0 = first_k + n - 10;
  out.slope = std::log(b0 / b1) / std::log(k1 / k0);
  if (out.slope > 1.05) {
    out.convergent = true;
    const double pw = b1 * (k1 / (out.slope - 1.0) - 0.5 + out.slope / (12.0 * k1));
    const double l6 = levin_remainder(blocks, first_k + 1.0, 6);
    const double l5 = levin_remainder(blocks, first_k + 1.0, 5);
    // same transform with the last ten blocks withheld
    std::vector<double> head(blocks.begin(), blocks.end() - 10);
    double withheld = 0.0;
    for (auto it = blocks.end() - 10; it != blocks.end(); ++it) withheld += *it;
    const double l6s = levin_remainder(head, first_k + 1.0, 6) - withheld;
    if (std::isfinite(l6) && l6 >= 0.0 && std::isfinite(l5) && std::isfinite(l6s)) {
      out.remainder = l6;
      // the transform assumes an expansion in integer powers of 1/k; the power-law fit does not
      out.err = std::max({std::fabs(l6 - l5), std::fabs(l6 - l6s), std::fabs(l6 - pw)});
      if (out.err > 0.5 * l6) {
        out.remainder = pw;
        out.err = 0.5 * pw;
      }
    } else {
      out.remainder = pw;
      out.err = 0.5 * pw;
    }
  }
  return out;
}

inline TailIntegrals tails_lattice(const Cumulative& cum, double x, const QuadratureConfig& q) {
  const auto& m = cum.model();
  const double s = m.span;
  const bool complete = has_completion(m, q.use_annotations);
  TailIntegrals out;
  out.completion = complete ? "analytic" : "cauchy";
  double a = cum.A(x), l = cum.ell(x);
  double t = x;
  long long k = static_cast<long long>(std::floor(x / s));
  double sm = 0.0, sp = 0.0, sn = 0.0, se = 0.0;
  const double t_end = complete ? std::max(x * q.lattice_completion_factor, x + 64.0 * s) : 0.0;
  double block_end = 2.0 * std::max(x, s);
  double block_start_sum = 0.0;
  std::vector<double> blocks;
  const int first_k = static_cast<int>(std::floor(std::log2(std::max(x, s))));
  for (;;) {
    const double t1 = (k + 1) * s;
    const double d = t1 - t;
    const double pos = m.tail_pos(k * s), neg = m.tail_neg(k * s);
    const double a1 = a + d * (pos - neg), l1 = l + d * (pos + neg);
    if (a <= 0.0 || a1 <= 0.0)
      throw error(errc::precondition, "A(t) is not positive on [x, inf): model is not positively relatively stable");
    const double wa = d / (a * a1), wl = d / (l * l1);
    sm += (pos + neg) * wa;
    sp += pos * wa;
    sn += neg * wa;
    se += (pos + neg) * wl;
    a = a1;
    l = l1;
    t = t1;
    ++k;
    if (complete) {
      if (t >= t_end) break;
      continue;
    }
    if (t >= block_end) {
      blocks.push_back(sm - block_start_sum);
      block_start_sum = sm;
      block_end *= 2.0;
      const double last = blocks.back();
      if (last <= q.rel_tol * sm && blocks.size() >= 12) break;
      if (t >= static_cast<double>(Cumulative::kLatticeCap) * s) break;
    }
  }
  out.blocks = static_cast<int>(blocks.size());
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (complete) {
    out.inv_m = sm + m.ann.inv_m_tail(t);
    out.r_plus = sp + m.ann.r_plus_tail(t);
    out.r_minus = sn + m.ann.r_minus_tail(t);
    out.inv_ell = se + m.ann.inv_ell_tail(t);
    const double n_cells = (t - x) / s + 1.0;
    const double rel = 4.0 * eps * std::sqrt(n_cells) + 8.0 * eps;
    out.err_inv_m = rel * out.inv_m;
    out.err_r_plus = rel * out.r_plus;
    out.err_r_minus = rel * out.r_minus;
    out.err_inv_ell = rel * out.inv_ell;
    return out;
  }
  auto pt = power_tail(blocks, first_k);
  if (!pt.convergent)
    throw error(errc::nonconvergent, "nonconvergent tail integral for m", blocks);
  const double frac = sm > 0.0 ? pt.remainder / sm : 0.0;
  out.inv_m = sm * (1.0 + frac);
  out.r_plus = sp * (1.0 + frac);
  out.r_minus = sn * (1.0 + frac);
  out.inv_ell = se * (1.0 + frac);
  const double ef = sm > 0.0 ? pt.err / sm : 0.0;
  out.err_inv_m = ef * out.inv_m;
  out.err_r_plus = ef * out.r_plus;
  out.err_r_minus = ef * out.r_minus;
  out.err_inv_ell = ef * out.inv_ell;
  return out;
}

inline TailIntegrals tails_continuous(const Cumulative& cum, double x, const QuadratureConfig& q) {
  const auto& m = cum.model();
  const bool complete = has_completion(m, q.use_annotations);
  TailIntegrals out;
  out.completion = complete ? "analytic" : "cauchy";
  // components: H/A^2, (1-F)/A^2, F(-t)/A^2, H/ell^2
  auto f4 = [&](double t) {
    const double a = cum.A(t), l = cum.ell(t);
    const double p = m.tail_pos(t), n = m.tail_neg(t);
    Quad4 r;
    r.v[0] = (p + n) / (a * a);
    r.v[1] = p / (a * a);
    r.v[2] = n / (a * a);
    r.v[3] = (p + n) / (l * l);
    return r;
  };
  if (!(cum.A(x) > 0.0))
    throw error(errc::precondition, "A(t) is not positive on [x, inf): model is not positively relatively stable");
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (complete) {
    const double T = x * q.completion_factor;
    if (!(m.ann.A(T) > 0.0))
      throw error(errc::precondition, "A(t) is not positive on [x, inf): model is not positively relatively stable");
    const auto br = geometric_breaks(x, T, x, 2.0);
    auto r = integrate_panels(f4, br, 0.0, q.rel_tol * 0.1);
    out.blocks = static_cast<int>(br.size()) - 1;
    out.inv_m = r.value.v[0] + m.ann.inv_m_tail(T);
    out.r_plus = r.value.v[1] + m.ann.r_plus_tail(T);
    out.r_minus = r.value.v[2] + m.ann.r_minus_tail(T);
    out.inv_ell = r.value.v[3] + m.ann.inv_ell_tail(T);
    out.err_inv_m = r.err + 16 * eps * out.inv_m;
    out.err_r_plus = r.err + 16 * eps * out.r_plus;
    out.err_r_minus = r.err + 16 * eps * out.r_minus;
    out.err_inv_ell = r.err + 16 * eps * out.inv_ell;
    return out;
  }
  std::vector<double> blocks;
  Quad4 sum;
  double qerr = 0.0;
  double a = x;
  const int first_k = static_cast<int>(std::floor(std::log2(std::max(x, 1.0))));
  for (int b = 0; b < q.max_blocks && 2.0 * a < 1e300; ++b, a *= 2.0) {
    auto r = integrate(f4, a, 2 * a, 0.0, q.rel_tol * 0.1);
    sum += r.value;
    qerr += r.err;
    blocks.push_back(r.value.v[0]);
    if (r.value.v[0] < q.rel_tol * sum.v[0] && blocks.size() >= 12) break;
    if (b == q.extrapolate_after) break;  // slow decay: extrapolate from here
  }
  out.blocks = static_cast<int>(blocks.size());
  auto pt = power_tail(blocks, first_k);
  if (!pt.convergent)
    throw error(errc::nonconvergent, "nonconvergent tail integral for m", blocks);
  const double frac = sum.v[0] > 0.0 ? pt.remainder / sum.v[0] : 0.0;
  out.inv_m = sum.v[0] * (1.0 + frac);
  out.r_plus = sum.v[1] * (1.0 + frac);
  out.r_minus = sum.v[2] * (1.0 + frac);
  out.inv_ell = sum.v[3] * (1.0 + frac);
  const double ef = sum.v[0] > 0.0 ? pt.err / sum.v[0] : 0.0;
  out.err_inv_m = qerr + ef * out.inv_m;
  out.err_r_plus = qerr + ef * out.r_plus;
  out.err_r_minus = qerr + ef * out.r_minus;
  out.err_inv_ell = qerr + ef * out.inv_ell;
  return out;
}

}  // namespace detail

inline TailIntegrals tail_integrals(const Cumulative& cum, double x, const QuadratureConfig& q = {}) {
  const auto& m = cum.model();
  if (q.use_annotations && m.ann.hb && !*m.ann.hb)
    throw error(errc::nonconvergent, "nonconvergent tail integral for m");
  return m.is_lattice() ? detail::tails_lattice(cum, x, q) : detail::tails_continuous(cum, x, q);
}

inline FunctionalRecord functional_profile(const DistributionModel& m, double x,
                                           const QuadratureConfig& q = {}) {
  if (!(x > 0.0) || x < m.support_floor)
    throw error(errc::precondition, "functional_profile: x must be positive and at least support_floor");
  Cumulative cum(m, q.use_annotations);
  FunctionalRecord r;
  r.x = x;
  r.ell = cum.ell(x);
  r.A = cum.A(x);
  if (!(r.A > 0.0))
    throw error(errc::precondition, "A(x) <= 0: model is not positively relatively stable");
  auto t = tail_integrals(cum, x, q);
  r.m = 1.0 / t.inv_m;
  r.r_plus = t.r_plus;
  r.r_minus = t.r_minus;
  r.completion = t.completion;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double cum_err = cum.closed_form() ? 4 * eps : 1e-13;
  r.err_bound.ell = cum_err;
  r.err_bound.A = cum_err;
  auto rel = [](double e, double v) { return v != 0.0 ? e / std::fabs(v) : e; };
  r.err_bound.m = rel(t.err_inv_m, t.inv_m) + 2 * cum_err;
  r.err_bound.r_plus = rel(t.err_r_plus, t.r_plus) + 2 * cum_err;
  r.err_bound.r_minus = rel(t.err_r_minus, t.r_minus) + 2 * cum_err;
  return r;
}

struct IdentityRow {
  std::string identity;
  double x = 0.0;
  double residual = 0.0;  // relative
  bool applicable = true;
  bool pass = true;
  std::string note;
};

struct IdentityReport {
  std::vector<double> grid;
  double tol = 0.0;
  std::vector<IdentityRow> rows;

  bool pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const IdentityRow& r) { return r.pass; });
  }
};

namespace detail {

// f = ell + A^2/m; returns relative residual of f' against 2AK/m
inline double remark4_residual(const DistributionModel& m, double x, const QuadratureConfig& q) {
  double c = x, h = 1e-3 * x;
  if (m.is_lattice()) {
    c = (std::floor(x / m.span) + 0.5) * m.span;
    h = 0.25 * m.span;
  }
  Cumulative cum(m, q.use_annotations);
  auto f = [&](double t) {
    const double a = cum.A(t);
    const double inv_m = tail_integrals(cum, t, q).inv_m;
    return cum.ell(t) + a * a * inv_m;
  };
  auto d = [&](double step) { return (f(c + step) - f(c - step)) / (2 * step); };
  const double deriv = (4.0 * d(0.5 * h) - d(h)) / 3.0;
  const double a = cum.A(c);
  const double inv_m = tail_integrals(cum, c, q).inv_m;
  const double rhs = 2.0 * a * inv_m * cum.K(c);
  return std::fabs(deriv - rhs) / std::fabs(rhs);
}

}  // namespace detail

inline IdentityReport identity_audit(const DistributionModel& m, const std::vector<double>& grid, double tol,
                                     const QuadratureConfig& q = {}) {
  IdentityReport rep;
  rep.grid = grid;
  rep.tol = tol;
  const bool ha_fails = m.ann.ha && !*m.ann.ha;
  for (double x : grid) {
    const auto r = functional_profile(m, x, q);
    Cumulative cum(m, q.use_annotations);
    const auto t = tail_integrals(cum, x, q);
    auto push = [&](std::string id, double res, double slack) {
      IdentityRow row;
      row.identity = std::move(id);
      row.x = x;
      row.residual = res;
      row.pass = std::isfinite(res) && res <= tol + slack;
      rep.rows.push_back(row);
    };
    push("r_plus-r_minus=1/A", std::fabs((r.r_plus - r.r_minus) * r.A - 1.0),
         r.err_bound.r_plus + r.err_bound.r_minus);
    push("r_plus+r_minus=1/m", std::fabs((r.r_plus + r.r_minus) * r.m - 1.0),
         r.err_bound.r_plus + r.err_bound.r_minus + r.err_bound.m);
    push("int_x^inf H/ell^2=1/ell", std::fabs(t.inv_ell * r.ell - 1.0), t.err_inv_ell / t.inv_ell);
    if (ha_fails) {
      IdentityRow row;
      row.identity = "m<=A<=ell";
      row.x = x;
      row.residual = 0.0;
      row.applicable = false;
      row.note = "not applicable, (Ha) fails";
      rep.rows.push_back(row);
    } else {
      const double res = std::max({0.0, (r.m - r.A) / r.A, (r.A - r.ell) / r.ell});
      push("m<=A<=ell", res, r.err_bound.m);
    }
    push("d/dx[ell+A^2/m]=2AK/m", detail::remark4_residual(m, x, q), 0.0);
  }
  return rep;
}

}  // namespace renewal_lab
