#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <queue>
#include <type_traits>
#include <vector>

namespace renewal_lab {

template <class V>
struct QuadResult {
  V value{};
  double err = 0.0;
  long evals = 0;
  bool converged = true;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21)
inline constexpr double kXgk[11] = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr double kWgk[11] = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr double kWg[5] = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

inline double magnitude(double v) { return std::fabs(v); }
inline double magnitude(const std::complex<double>& v) { return std::abs(v); }
template <class V>
  requires requires(const V& v) { v.norm_inf(); }
double magnitude(const V& v) {
  return v.norm_inf();
}

}  // namespace detail

template <class F>
auto gk21(F&& f, double a, double b) {
  using V = std::decay_t<decltype(f(a))>;
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const V fc = f(c);
  V resk = fc * detail::kWgk[10];
  V resg{};
  V fv1[10], fv2[10];
  for (int j = 0; j < 10; ++j) {
    const double dx = h * detail::kXgk[j];
    fv1[j] = f(c - dx);
    fv2[j] = f(c + dx);
    const V s = fv1[j] + fv2[j];
    resk += s * detail::kWgk[j];
    if (j % 2 == 1) resg += s * detail::kWg[j / 2];
  }
  const V mean = resk * 0.5;
  double resabs = detail::kWgk[10] * detail::magnitude(fc);
  double resasc = detail::kWgk[10] * detail::magnitude(fc - mean);
  for (int j = 0; j < 10; ++j) {
    resabs += detail::kWgk[j] * (detail::magnitude(fv1[j]) + detail::magnitude(fv2[j]));
    resasc += detail::kWgk[j] *
              (detail::magnitude(fv1[j] - mean) + detail::magnitude(fv2[j] - mean));
  }
  const double ah = std::fabs(h);
  resabs *= ah;
  resasc *= ah;
  double err = detail::magnitude((resk - resg) * h);
  if (resasc != 0.0 && err != 0.0)
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps))
    err = std::max(50.0 * eps * resabs, err);
  QuadResult<V> r;
  r.value = resk * h;
  r.err = err;
  r.evals = 21;
  return r;
}

// Global adaptive bisection seeded with an initial partition.
template <class F>
auto integrate_panels(F&& f, const std::vector<double>& breaks, double abs_tol,
                      double rel_tol, int max_intervals = 4000) {
  using V = std::decay_t<decltype(f(breaks.front()))>;
  struct Piece {
    double a, b;
    QuadResult<V> q;
    bool operator<(const Piece& o) const { return q.err < o.q.err; }
  };
  std::priority_queue<Piece> heap;
  QuadResult<V> total;
  // below this the Kronrod roundoff floor can never be met
  rel_tol = std::max(rel_tol, 100.0 * std::numeric_limits<double>::epsilon());
  V sum{};
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    auto q = gk21(f, breaks[i], breaks[i + 1]);
    total.evals += q.evals;
    sum += q.value;
    err += q.err;
    heap.push({breaks[i], breaks[i + 1], q});
  }
  while (!heap.empty() &&
         err > std::max(abs_tol, rel_tol * detail::magnitude(sum))) {
    if (static_cast<int>(heap.size()) >= max_intervals) {
      total.converged = false;
      break;
    }
    Piece p = heap.top();
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > p.a && mid < p.b)) {
      total.converged = false;
      break;
    }
    heap.pop();
    auto l = gk21(f, p.a, mid);
    auto r = gk21(f, mid, p.b);
    total.evals += l.evals + r.evals;
    sum += l.value + r.value - p.q.value;
    err += l.err + r.err - p.q.err;
    heap.push({p.a, mid, l});
    heap.push({mid, p.b, r});
  }
  // re-sum to drop accumulated cancellation in the running totals
  sum = V{};
  err = 0.0;
  std::vector<Piece> pieces;
  pieces.reserve(heap.size());
  while (!heap.empty()) {
    pieces.push_back(heap.top());
    heap.pop();
  }
  std::sort(pieces.begin(), pieces.end(),
            [](const Piece& x, const Piece& y) { return x.a < y.a; });
  for (const auto& p : pieces) {
    sum += p.q.value;
    err += p.q.err;
  }
  total.value = sum;
  total.err = err;
  return total;
}

template <class F>
auto integrate(F&& f, double a, double b, double abs_tol, double rel_tol,
               int max_intervals = 4000) {
  return integrate_panels(std::forward<F>(f), std::vector<double>{a, b}, abs_tol,
                          rel_tol, max_intervals);
}

// Breakpoints 0, lo, lo*r, lo*r^2, ..., b for integrands varying on a log scale.
inline std::vector<double> geometric_breaks(double a, double b, double lo = 1.0,
                                            double ratio = 2.0) {
  std::vector<double> br{a};
  double x = std::max(a, lo);
  if (x > a && x < b) br.push_back(x);
  for (x *= ratio; x < b; x *= ratio)
    if (x > br.back()) br.push_back(x);
  br.push_back(b);
  return br;
}

struct SeriesResult {
  double value = 0.0;
  double err = 0.0;
  int blocks = 0;
  bool converged = false;
  std::vector<double> trace;  // raw partial sums
};

// Sum of block values b(0), b(1), ... that eventually alternate in sign with
// decreasing magnitude. Partial sums are accelerated by iterated pairwise
// averaging over the trailing window.
template <class Block>
SeriesResult accelerate_alternating(Block&& block, double rel_tol, double abs_tol,
                                    int max_blocks = 64, int min_blocks = 6,
                                    int window = 24) {
  SeriesResult out;
  std::vector<double> partial;
  double s = 0.0, prev = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> work;
  for (int k = 0; k < max_blocks; ++k) {
    s += block(k);
    partial.push_back(s);
    const int n = static_cast<int>(partial.size());
    const int w = std::min(n, window);
    work.assign(partial.end() - w, partial.end());
    for (int len = w; len > 1; --len)
      for (int i = 0; i + 1 < len; ++i) work[i] = 0.5 * (work[i] + work[i + 1]);
    const double est = work[0];
    out.blocks = n;
    out.value = est;
    if (n >= min_blocks && std::isfinite(prev)) {
      const double inc = std::fabs(est - prev);
      out.err = 2.0 * inc;
      if (inc <= std::max(abs_tol, rel_tol * std::fabs(est))) {
        out.converged = true;
        break;
      }
    }
    prev = est;
  }
  out.trace = std::move(partial);
  return out;
}

}  // namespace renewal_lab
