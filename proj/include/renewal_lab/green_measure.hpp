#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "charfn.hpp"
#include "conditions.hpp"
#include "config.hpp"
#include "dist_model.hpp"
#include "fft.hpp"
#include "functionals.hpp"
#include "json.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace renewal_lab {

// Lattice Green table -------------------------------------------------------

struct GreenTable {
  std::string model_id;
  std::string model_hash;
  double span = 1.0;
  bool nonnegative = false;
  long long n_lo = 0, n_hi = 0;
  std::vector<double> U;  // U[n - n_lo]
  long long iterations = 0;
  double leaked_bound = 0.0;  // additive error bound per entry
  double eps_stop = 0.0;
  std::string engine;
  std::string stop_reason;
  long long margin_lo = 0, margin_hi = 0;
  std::vector<double> in_range_mass;  // per iteration, two-sided engine
  std::vector<double> range_total;    // sum of U over the range after each iteration

  bool contains(long long n) const { return n >= n_lo && n <= n_hi; }
  double at(long long n) const {
    if (contains(n)) return U[static_cast<std::size_t>(n - n_lo)];
    if (nonnegative && n < 0) return 0.0;
    throw error(errc::coverage, "green table does not cover n = " + std::to_string(n));
  }
};

enum class ConvolutionEngine { automatic, recursion, two_sided };

struct ConvolutionOptions {
  double eps_stop = 1e-13;
  long long max_iter = 200000;
  ConvolutionEngine engine = ConvolutionEngine::automatic;
  bool override_transient = false;
  long long margin = -1;  // -1: automatic
  long long margin_cap = 1LL << 21;
  int stop_run = 20;
};

namespace detail {

inline void require_transient(const DistributionModel& m, bool override_transient) {
  if (override_transient) return;
  if (m.ann.transient) {
    if (!*m.ann.transient) throw error(errc::precondition, "model is recurrent; the Green measure is infinite");
    return;
  }
  ClassifyOptions o;
  const auto r = classify(m, 1e5, o);
  if (r.transient.verdict != Verdict::holds)
    throw error(errc::precondition, "transience not established by classify; pass an override to proceed");
}

// U{n} (1 - p0) = delta_{n0} + sum_{k=1..n} p(k) U{n-k}, divide and conquer over FFT blocks
inline std::vector<double> renewal_recursion(const std::vector<double>& p, long long N) {
  const std::size_t n = static_cast<std::size_t>(N + 1);
  std::vector<double> U(n, 0.0), acc(n, 0.0);
  const double inv = 1.0 / (1.0 - p[0]);
  FftPool pool;
  std::vector<double> buf;
  auto solve = [&](auto&& self, std::size_t l, std::size_t r) -> void {
    if (r - l <= 128) {
      for (std::size_t i = l; i < r; ++i) {
        double s = acc[i] + (i == 0 ? 1.0 : 0.0);
        for (std::size_t j = l; j < i; ++j) s += p[i - j] * U[j];
        U[i] = std::max(0.0, s * inv);
      }
      return;
    }
    const std::size_t mid = l + (r - l) / 2;
    self(self, l, mid);
    // contributions of U[l, mid) to acc[mid, r): offsets 1 .. r - l - 1
    const std::size_t la = mid - l, lb = r - l;
    auto& f = pool.get(FftConvolver::good_size(la + lb));
    f.convolve(U.data() + l, la, p.data(), lb, buf);
    for (std::size_t i = mid; i < r; ++i) acc[i] += buf[i - l];
    self(self, mid, r);
  };
  solve(solve, 0, n);
  return U;
}

}  // namespace detail

inline GreenTable green_convolution(const DistributionModel& m, long long n_lo, long long n_hi,
                                    const ConvolutionOptions& o = {}) {
  if (!m.is_lattice()) throw error(errc::precondition, "green_convolution needs a lattice model");
  if (n_lo > n_hi) throw error(errc::invalid_parameter, "green_convolution: inconsistent range");
  if (!(o.eps_stop > 0.0)) throw error(errc::invalid_parameter, "green_convolution: eps_stop must be > 0");
  detail::require_transient(m, o.override_transient);
  GreenTable t;
  t.model_id = m.id;
  t.model_hash = hex64(m.hash);
  t.span = m.span;
  t.nonnegative = m.nonnegative;
  t.n_lo = n_lo;
  t.n_hi = n_hi;
  t.eps_stop = o.eps_stop;
  ConvolutionEngine eng = o.engine;
  if (eng == ConvolutionEngine::automatic)
    eng = m.nonnegative ? ConvolutionEngine::recursion : ConvolutionEngine::two_sided;

  if (eng == ConvolutionEngine::recursion) {
    if (!m.nonnegative) throw error(errc::precondition, "renewal recursion needs nonnegative steps");
    t.engine = "recursion";
    t.stop_reason = "exact";
    t.U.assign(static_cast<std::size_t>(n_hi - n_lo + 1), 0.0);
    if (n_hi < 0) return t;
    std::vector<double> p(static_cast<std::size_t>(n_hi + 1));
    for (long long k = 0; k <= n_hi; ++k) p[k] = m.pmf(k);
    const auto U = detail::renewal_recursion(p, n_hi);
    for (long long n = std::max(n_lo, 0LL); n <= n_hi; ++n) t.U[n - n_lo] = U[n];
    t.iterations = n_hi;
    return t;
  }

  // two-sided engine: iterate the step law on a padded window
  t.engine = "two_sided";
  const bool goes_left = m.tail_neg(0.0) > 0.0, goes_right = m.tail_pos(0.0) > 0.0;
  long long margin = o.margin >= 0 ? o.margin
                                   : std::min(o.margin_cap, 10 * std::max({std::llabs(n_lo), std::llabs(n_hi), 1LL}));
  // re-entry is only possible from the side the walk can come back from
  t.margin_lo = (goes_left && goes_right) ? margin : 0;
  t.margin_hi = (goes_left && goes_right) ? margin : 0;
  const long long w_lo = std::min(n_lo, 0LL) - t.margin_lo, w_hi = std::max(n_hi, 0LL) + t.margin_hi;
  const long long W = w_hi - w_lo + 1;
  // kernel offsets in [-(W-1), W-1]
  const long long L = W - 1;
  std::vector<double> kernel(static_cast<std::size_t>(2 * L + 1));
  for (long long d = -L; d <= L; ++d) kernel[d + L] = m.pmf(d);
  const bool use_fft = static_cast<double>(W) * static_cast<double>(2 * L + 1) > 4e6;
  FftConvolver* fft = nullptr;
  std::unique_ptr<FftConvolver> fft_owner;
  std::vector<std::complex<double>> kspec;
  if (use_fft) {
    fft_owner = std::make_unique<FftConvolver>(FftConvolver::good_size(static_cast<std::size_t>(W + 2 * L + 1)));
    fft = fft_owner.get();
    kspec = fft->spectrum(kernel.data(), kernel.size());
  }
  std::vector<double> cur(static_cast<std::size_t>(W), 0.0), nxt(static_cast<std::size_t>(W)), acc(cur.size(), 0.0),
      buf;
  cur[-w_lo] = 1.0;
  auto in_range = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (long long n = n_lo; n <= n_hi; ++n) s += v[n - w_lo];
    return s;
  };
  for (std::size_t i = 0; i < cur.size(); ++i) acc[i] += cur[i];
  t.in_range_mass.push_back(in_range(cur));
  t.range_total.push_back(in_range(acc));
  double leaked = 0.0;
  int run = 0;
  long long k = 0;
  for (k = 1; k <= o.max_iter; ++k) {
    double before = 0.0;
    for (double v : cur) before += v;
    if (use_fft) {
      fft->convolve(cur.data(), cur.size(), kspec, buf);
      // full linear index j corresponds to window offset j - L
      for (long long i = 0; i < W; ++i) nxt[i] = std::max(0.0, buf[i + L]);
    } else {
      std::fill(nxt.begin(), nxt.end(), 0.0);
      for (long long j = 0; j < W; ++j) {
        const double c = cur[j];
        if (c == 0.0) continue;
        for (long long i = 0; i < W; ++i) nxt[i] += c * kernel[i - j + L];
      }
    }
    double after = 0.0;
    for (double v : nxt) after += v;
    // mass that left the window; one-sided walks never come back from the far side
    const double lost = std::max(0.0, before - after);
    if (goes_left && goes_right) leaked += lost;
    cur.swap(nxt);
    for (std::size_t i = 0; i < cur.size(); ++i) acc[i] += cur[i];
    const double r = in_range(cur);
    t.in_range_mass.push_back(r);
    t.range_total.push_back(in_range(acc));
    run = r < o.eps_stop ? run + 1 : 0;
    if (run >= o.stop_run) {
      const auto& h = t.in_range_mass;
      const std::size_t n = h.size(), back = std::max<std::size_t>(o.stop_run, n / 10);
      if (h[n - 1] <= h[n - 1 - std::min(back, n - 1)]) break;
    }
    if (after == 0.0) break;
  }
  if (k > o.max_iter)
    throw error(errc::nonconvergent, "green_convolution: in-range mass did not decay within max_iter", t.in_range_mass);
  t.iterations = std::min(k, o.max_iter);
  t.stop_reason = "in-range mass below eps_stop for " + std::to_string(o.stop_run) + " iterations";
  // remaining mass that can still reach the range
  double residual = 0.0;
  for (long long i = 0; i < W; ++i) {
    const long long n = w_lo + i;
    if (goes_left && goes_right) residual += cur[i];
    else if (goes_right && n <= n_hi) residual += cur[i];
    else if (goes_left && n >= n_lo) residual += cur[i];
  }
  const double U0 = acc[-w_lo];
  t.leaked_bound = (leaked + residual) * U0;
  t.U.resize(static_cast<std::size_t>(n_hi - n_lo + 1));
  for (long long n = n_lo; n <= n_hi; ++n) t.U[n - n_lo] = acc[n - w_lo];
  return t;
}

// Monte Carlo ---------------------------------------------------------------

struct Window {
  double lo = 0.0, hi = 0.0;  // [lo, hi)
};

struct GreenEstimate {
  std::vector<Window> windows;
  std::vector<double> mean, stderr_, post_horizon;  // post_horizon: visits in [T/10, T) per walk
  long long walks = 0;
  long long horizon = 0;
  std::uint64_t seed = 0;
  std::string estimator = "direct";
};

struct MonteCarloOptions {
  long long horizon = 0;  // 0: 20 x_max / A(x_max)
  int jobs = 1;
  bool conditional = false;  // continuous models: sum of one-step hitting probabilities
};

inline long long default_horizon(const DistributionModel& m, const std::vector<Window>& w) {
  double xmax = 0.0;
  for (const auto& x : w) xmax = std::max({xmax, std::fabs(x.lo), std::fabs(x.hi)});
  xmax = std::max(xmax, std::max(1.0, m.support_floor));
  Cumulative cum(m);
  const double A = cum.A(xmax);
  if (!(A > 0.0)) throw error(errc::precondition, "green_monte_carlo: A(x_max) <= 0, no default horizon");
  return std::max(1LL, static_cast<long long>(std::ceil(20.0 * xmax / A)));
}

inline GreenEstimate green_monte_carlo(const DistributionModel& m, const std::vector<Window>& windows, long long M,
                                       long long T, std::uint64_t seed, const MonteCarloOptions& o = {}) {
  if (M < 2) throw error(errc::invalid_parameter, "green_monte_carlo: need at least 2 walks");
  for (const auto& w : windows)
    if (!(w.hi >= w.lo)) throw error(errc::invalid_parameter, "green_monte_carlo: window with hi < lo");
  if (o.conditional && m.is_lattice())
    throw error(errc::precondition, "green_monte_carlo: conditional estimator needs a continuous model");
  if (T <= 0) T = o.horizon > 0 ? o.horizon : default_horizon(m, windows);
  GreenEstimate g;
  g.windows = windows;
  g.walks = M;
  g.horizon = T;
  g.seed = seed;
  g.estimator = o.conditional ? "conditional" : "direct";
  const std::size_t nw = windows.size();
  constexpr long long chunk = 1024;
  const long long nchunks = (M + chunk - 1) / chunk;
  struct Partial {
    std::vector<double> s, s2, post;
  };
  std::vector<Partial> parts(static_cast<std::size_t>(nchunks), Partial{std::vector<double>(nw, 0.0),
                                                                         std::vector<double>(nw, 0.0),
                                                                         std::vector<double>(nw, 0.0)});
  const long long t_post = T / 10;
  // P(X >= t) for a continuous law
  auto ge = [&](double t) { return t > 0.0 ? m.tail_pos(t) : 1.0 - m.tail_neg(-t); };
  for_each_chunk(M, chunk, o.jobs, [&](std::int64_t c, std::int64_t b, std::int64_t e) {
    auto& P = parts[static_cast<std::size_t>(c)];
    std::vector<double> cnt(nw), post(nw);
    for (std::int64_t r = b; r < e; ++r) {
      Rng rng(seed, static_cast<std::uint64_t>(r));
      std::fill(cnt.begin(), cnt.end(), 0.0);
      std::fill(post.begin(), post.end(), 0.0);
      double s = 0.0;
      for (long long n = 0; n < T; ++n) {
        if (o.conditional) {
          if (n == 0)
            for (std::size_t i = 0; i < nw; ++i)
              if (0.0 >= windows[i].lo && 0.0 < windows[i].hi) cnt[i] += 1.0;
          if (n + 1 < T)
            for (std::size_t i = 0; i < nw; ++i) {
              const double q = ge(windows[i].lo - s) - ge(windows[i].hi - s);
              cnt[i] += q;
              if (n + 1 >= t_post) post[i] += q;
            }
        } else {
          for (std::size_t i = 0; i < nw; ++i)
            if (s >= windows[i].lo && s < windows[i].hi) {
              cnt[i] += 1.0;
              if (n >= t_post) post[i] += 1.0;
            }
        }
        s += sample_step(m, rng);
      }
      for (std::size_t i = 0; i < nw; ++i) {
        P.s[i] += cnt[i];
        P.s2[i] += cnt[i] * cnt[i];
        P.post[i] += post[i];
      }
    }
  });
  g.mean.assign(nw, 0.0);
  g.stderr_.assign(nw, 0.0);
  g.post_horizon.assign(nw, 0.0);
  for (std::size_t i = 0; i < nw; ++i) {
    double s = 0.0, s2 = 0.0, p = 0.0;
    for (const auto& P : parts) {
      s += P.s[i];
      s2 += P.s2[i];
      p += P.post[i];
    }
    const double mean = s / M;
    const double var = std::max(0.0, (s2 - M * mean * mean) / (M - 1));
    g.mean[i] = mean;
    g.stderr_[i] = std::sqrt(var / M);
    g.post_horizon[i] = p / M;
  }
  return g;
}

// Symmetrization ------------------------------------------------------------

struct SymmetrizedTables {
  long long N = 0;  // range [-N, N]
  std::vector<double> V, Vstar;  // index n + N
  double at_V(long long n) const { return V.at(static_cast<std::size_t>(n + N)); }
  double at_Vstar(long long n) const { return Vstar.at(static_cast<std::size_t>(n + N)); }
  double span = 1.0;
  double U0 = 1.0;
};

inline SymmetrizedTables symmetrize(const GreenTable& t) {
  if (t.n_lo != -t.n_hi) throw error(errc::precondition, "symmetrize: table range is not symmetric about 0");
  const long long N = t.n_hi;
  SymmetrizedTables s;
  s.N = N;
  s.span = t.span;
  s.U0 = t.at(0);
  s.V.resize(static_cast<std::size_t>(2 * N + 1));
  s.Vstar.resize(s.V.size());
  for (long long n = -N; n <= N; ++n) {
    const double a = t.at(n), b = t.at(-n);
    s.V[n + N] = 0.5 * (a + b);
    s.Vstar[n + N] = n == 0 ? 0.0 : 0.5 * (a - b);
  }
  return s;
}

// Smoothing -----------------------------------------------------------------

namespace detail {

inline double ghat(double a, double x) {
  const double h = 0.5 * a * x;
  if (std::fabs(h) < 1e-8) return 1.0 - h * h / 3.0;
  const double s = std::sin(h) / h;
  return s * s;
}

inline double gtri(double a, double v) { return std::max(0.0, (1.0 - std::fabs(v) / a) / a); }

struct SmoothSource {
  long long lo, hi;                     // known lattice indices
  std::function<double(long long)> at;  // value on [lo, hi]
  bool zero_left = false;               // exactly zero below lo
  double sup = 1.0;                     // bound on |value| outside [lo, hi]
  double span = 1.0;
};

struct SmoothedRaw {
  cplx value;
  double bound;
};

inline SmoothedRaw smooth_sum(const SmoothSource& src, double x, double a, double theta, double rel_tol) {
  if (!(a > 0.0)) throw error(errc::invalid_parameter, "smoothed_window: a must be > 0");
  cplx s = 0.0;
  for (long long n = src.lo; n <= src.hi; ++n) {
    const double v = src.at(n);
    if (v == 0.0) continue;
    const double xi = n * src.span - x;
    s += v * ghat(a, xi) * std::polar(1.0, theta * xi);
  }
  // sum_{xi > D} ghat <= 4 / (a^2 s) * (1/D + 1/s) on a lattice of step s
  auto tail = [&](double D) {
    if (D <= src.span) return std::numeric_limits<double>::infinity();
    return 4.0 / (a * a * src.span) * (1.0 / (D - src.span) + 0.0);
  };
  double bound = src.sup * tail(src.hi * src.span - x);
  if (!src.zero_left) bound += src.sup * tail(x - src.lo * src.span);
  if (!(bound <= rel_tol * std::abs(s)))
    throw error(errc::coverage, "smoothed_window: insufficient table coverage around x = " + format_real(x));
  const double c = 1.0 / (2.0 * std::numbers::pi);
  return {s * c, bound * c};
}

}  // namespace detail

enum class TablePart { U, V, Vstar };

struct SmoothedValue {
  cplx value;
  double truncation_bound = 0.0;
};

inline SmoothedValue smoothed_window(const GreenTable& t, double x, double a, double theta,
                                     TablePart part = TablePart::U, double rel_tol = 1e-4) {
  detail::SmoothSource src;
  src.span = t.span;
  const double U0 = t.contains(0) ? t.at(0) : 1.0;
  for (double v : t.U) src.sup = std::max(src.sup, v);
  src.sup = std::max(src.sup, U0);
  if (part == TablePart::U) {
    src.lo = t.n_lo;
    src.hi = t.n_hi;
    src.zero_left = t.nonnegative && t.n_lo <= 0;
    src.at = [&t](long long n) { return t.at(n); };
  } else {
    const auto* tp = &t;
    const long long N = std::min(t.n_hi, t.nonnegative && t.n_lo <= 0 ? t.n_hi : -t.n_lo);
    if (N < 0) throw error(errc::coverage, "smoothed_window: table does not cover a symmetric range");
    src.lo = -N;
    src.hi = N;
    const bool odd = part == TablePart::Vstar;
    src.at = [tp, odd](long long n) {
      const double a = tp->at(n), b = tp->at(-n);
      return odd ? 0.5 * (a - b) : 0.5 * (a + b);
    };
  }
  const auto r = detail::smooth_sum(src, x, a, theta, rel_tol);
  return {r.value, r.bound};
}

inline SmoothedValue smoothed_window(const SymmetrizedTables& s, double x, double a, double theta, bool odd,
                                     double rel_tol = 1e-4) {
  detail::SmoothSource src;
  src.span = s.span;
  src.lo = -s.N;
  src.hi = s.N;
  src.sup = std::max(1.0, s.U0);
  src.at = [&s, odd](long long n) { return odd ? s.at_Vstar(n) : s.at_V(n); };
  const auto r = detail::smooth_sum(src, x, a, theta, rel_tol);
  return {r.value, r.bound};
}

enum class SmoothMode { full, cosine, sine };

struct FourierOptions {
  double split_M = 8.0;        // near region |u| < M/|x|
  double u_min_factor = 1e-3;  // u_min = factor / |x|
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  bool check_hypotheses = true;
  CharfnOptions charfn;
};

struct FourierSmoothed {
  cplx value;
  double err = 0.0;
  double delta = 0.0, u_min = 0.0;
  cplx near_part, outer_part;
};

namespace detail {

struct CS {
  cplx c, s;
  CS& operator+=(const CS& o) { c += o.c; s += o.s; return *this; }
  CS operator+(const CS& o) const { CS r = *this; return r += o; }
  CS operator-(const CS& o) const { return {c - o.c, s - o.s}; }
  CS operator*(double k) const { return {c * k, s * k}; }
  double norm_inf() const { return std::max(std::abs(c), std::abs(s)); }
};

}  // namespace detail

// (1/2pi) int g_a(theta-u) e^{-ixu} [C(u) + i S(u)] du
inline FourierSmoothed fourier_smoothed(const DistributionModel& m, double x, double a, double theta, SmoothMode mode,
                                        const FourierOptions& o = {}) {
  if (x == 0.0 || !std::isfinite(x)) throw error(errc::invalid_parameter, "fourier_smoothed: x must be nonzero");
  if (!(a > 0.0)) throw error(errc::invalid_parameter, "fourier_smoothed: a must be > 0");
  if (o.check_hypotheses) {
    if ((m.ann.transient && !*m.ann.transient) || (m.ann.ha && !*m.ann.ha))
      throw error(errc::precondition, "fourier_smoothed: needs a transient model with (Ha)");
  }
  if (m.is_lattice() && std::fabs(theta) + a > std::numbers::pi / m.span * (1 + 1e-12))
    throw error(errc::precondition, "fourier_smoothed: |theta| + a exceeds pi/span");
  const double ax = std::fabs(x);
  auto g = [&](double v) { return detail::gtri(a, v); };
  auto G = [&](double u) { return g(theta - u) * std::polar(1.0, -x * u); };
  auto R = [&](double u) { return detail::resolvent_of(u, one_minus_phi(m, u, PhiMethod::automatic, o.charfn)); };
  FourierSmoothed out;
  double delta = o.split_M / ax;
  if (theta == 0.0) delta = std::min(delta, a);
  else delta = std::min({delta, a - std::fabs(theta), 0.5 * std::fabs(theta)});
  if (delta < 0.0) delta = 0.0;
  out.delta = delta;
  detail::CS near{}, outer{};
  double err = 0.0;
  if (delta > 0.0) {
    const double u_min = std::min(o.u_min_factor / ax, 0.5 * delta);
    out.u_min = u_min;
    const double g0 = g(theta);
    const double gp = theta == 0.0 ? 0.0 : -(theta > 0 ? 1.0 : -1.0) / (a * a);
    const auto J = cumulative_C(m, delta, o.charfn);
    auto f = [&](double u) {
      const auto r = R(u);
      const cplx gp_ = G(u), gm = G(-u);
      return detail::CS{r.C * (gp_ + gm - 2.0 * g0), cplx(0.0, 1.0) * r.S * (gp_ - gm)};
    };
    auto q = integrate_panels(f, geometric_breaks(u_min, delta, u_min, 2.0), o.abs_tol, o.rel_tol);
    near = q.value;
    near.c += 2.0 * g0 * J.J;
    // (0, u_min]: u S(u) taken constant, sin(xu) ~ xu
    const auto r0 = R(u_min);
    const double v0 = u_min * r0.S;
    const cplx small = v0 * u_min * cplx(2.0 * g0 * x, -2.0 * gp);
    near.s += small;
    err += q.err + 2.0 * g0 * J.err + 0.1 * std::abs(small) +
           J.J * (g0 * x * x * u_min * u_min + 2.0 * std::fabs(gp) * (1.0 + ax * u_min) * u_min);
  }
  // outer region with breaks at kinks and half periods
  auto fo = [&](double u) {
    const auto r = R(u);
    const cplx gu = G(u);
    return detail::CS{gu * r.C, cplx(0.0, 1.0) * gu * r.S};
  };
  auto piece = [&](double lo, double hi) {
    if (!(hi > lo)) return;
    std::vector<double> br{lo};
    const double hp = std::numbers::pi / ax;
    for (double u = std::ceil(lo / hp) * hp; u < hi; u += hp)
      if (u > br.back() + 1e-12 * hp) br.push_back(u);
    if (theta > lo && theta < hi) {
      br.push_back(theta);
      std::sort(br.begin(), br.end());
    }
    br.push_back(hi);
    auto q = integrate_panels(fo, br, o.abs_tol, o.rel_tol);
    outer += q.value;
    err += q.err;
  };
  piece(theta - a, delta > 0.0 ? -delta : std::min(0.0, theta + a));
  piece(delta > 0.0 ? delta : std::max(0.0, theta - a), theta + a);
  const double c = 1.0 / (2.0 * std::numbers::pi);
  auto pick = [&](const detail::CS& v) {
    switch (mode) {
      case SmoothMode::cosine: return v.c;
      case SmoothMode::sine: return v.s;
      default: return v.c + v.s;
    }
  };
  out.near_part = pick(near) * c;
  out.outer_part = pick(outer) * c;
  out.value = out.near_part + out.outer_part;
  out.err = err * c;
  return out;
}

// Persistence ---------------------------------------------------------------

inline void write_table(const GreenTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw error(errc::io, "cannot write " + path);
  f << "# renewal_lab green table v1\n";
  f << "# model_id: " << t.model_id << "\n";
  f << "# model_hash: " << t.model_hash << "\n";
  f << "# span: " << format_real(t.span) << "\n";
  f << "# nonnegative: " << (t.nonnegative ? 1 : 0) << "\n";
  f << "# n_lo: " << t.n_lo << "\n";
  f << "# n_hi: " << t.n_hi << "\n";
  f << "# eps_stop: " << format_real(t.eps_stop) << "\n";
  f << "# leaked_bound: " << format_real(t.leaked_bound) << "\n";
  f << "# iterations: " << t.iterations << "\n";
  f << "# engine: " << t.engine << "\n";
  f << "n U\n";
  for (long long n = t.n_lo; n <= t.n_hi; ++n) f << n << " " << format_real(t.U[n - t.n_lo]) << "\n";
  if (!f) throw error(errc::io, "write failed for " + path);
  nlohmann::ordered_json j;
  j["model_id"] = t.model_id;
  j["model_hash"] = t.model_hash;
  j["engine"] = t.engine;
  j["stop_reason"] = t.stop_reason;
  j["iterations"] = t.iterations;
  j["leaked_bound"] = t.leaked_bound;
  j["eps_stop"] = t.eps_stop;
  j["margin_lo"] = t.margin_lo;
  j["margin_hi"] = t.margin_hi;
  j["in_range_mass"] = t.in_range_mass;
  std::ofstream js(path + ".json");
  if (!js) throw error(errc::io, "cannot write " + path + ".json");
  js << j.dump(2) << "\n";
}

inline GreenTable read_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw error(errc::io, "cannot read " + path);
  GreenTable t;
  std::string line;
  bool header_done = false;
  while (std::getline(f, line)) {
    if (line.rfind("# ", 0) == 0) {
      const auto c = line.find(": ");
      if (c == std::string::npos) continue;
      const std::string k = line.substr(2, c - 2), v = line.substr(c + 2);
      if (k == "model_id") t.model_id = v;
      else if (k == "model_hash") t.model_hash = v;
      else if (k == "span") t.span = parse_real(k, v);
      else if (k == "nonnegative") t.nonnegative = v == "1";
      else if (k == "n_lo") t.n_lo = std::stoll(v);
      else if (k == "n_hi") t.n_hi = std::stoll(v);
      else if (k == "eps_stop") t.eps_stop = parse_real(k, v);
      else if (k == "leaked_bound") t.leaked_bound = parse_real(k, v);
      else if (k == "iterations") t.iterations = std::stoll(v);
      else if (k == "engine") t.engine = v;
      continue;
    }
    if (!header_done) {
      header_done = true;
      t.U.assign(static_cast<std::size_t>(t.n_hi - t.n_lo + 1), 0.0);
      continue;
    }
    std::istringstream is(line);
    long long n;
    std::string u;
    if (!(is >> n >> u) || !t.contains(n)) throw error(errc::io, "malformed row in " + path);
    t.U[n - t.n_lo] = parse_real("U", u);
  }
  std::ifstream js(path + ".json");
  if (js) {
    const auto j = nlohmann::json::parse(js, nullptr, false);
    if (!j.is_discarded()) {
      t.stop_reason = j.value("stop_reason", "");
      t.margin_lo = j.value("margin_lo", 0LL);
      t.margin_hi = j.value("margin_hi", 0LL);
      if (j.contains("in_range_mass")) t.in_range_mass = j["in_range_mass"].get<std::vector<double>>();
    }
  }
  return t;
}

inline std::string cache_dir() {
  if (const char* e = std::getenv("RENEWAL_LAB_CACHE"); e && *e) return e;
  return (std::filesystem::temp_directory_path() / "renewal_lab_cache").string();
}

inline GreenTable cached_green_convolution(const DistributionModel& m, long long n_lo, long long n_hi,
                                           const ConvolutionOptions& o = {}, std::string dir = "") {
  if (dir.empty()) dir = cache_dir();
  const std::string key = hex64(m.hash) + ";" + std::to_string(n_lo) + ";" + std::to_string(n_hi) + ";" +
                          format_real(o.eps_stop) + ";" + std::to_string(static_cast<int>(o.engine));
  const std::string path = (std::filesystem::path(dir) / ("green_" + hex64(fnv1a(key)) + ".dat")).string();
  if (std::filesystem::exists(path)) {
    auto t = read_table(path);
    if (t.model_hash == hex64(m.hash) && t.n_lo == n_lo && t.n_hi == n_hi) return t;
  }
  auto t = green_convolution(m, n_lo, n_hi, o);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!ec) {
    const std::string tmp = path + ".tmp";
    try {
      write_table(t, tmp);
      std::filesystem::rename(tmp + ".json", path + ".json", ec);
      std::filesystem::rename(tmp, path, ec);
    } catch (const error&) {
    }
  }
  return t;
}

}  // namespace renewal_lab
