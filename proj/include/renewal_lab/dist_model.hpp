#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace renewal_lab {

enum class Kind { lattice, continuous };

struct TailRecord {
  double x = 0.0;
  double Fbar = 0.0;  // 1 - F(x)
  double Fneg = 0.0;  // F(-x-0)
  double H = 0.0;
  double K = 0.0;
};

using RealFn = std::function<double(double)>;

// Closed forms known for a family. Tail completions are the integrals over
// [T, inf) and are only used for T >= support_floor.
struct Annotations {
  RealFn ell, A;
  RealFn inv_m_tail;    // int_T^inf H / A^2
  RealFn r_plus_tail;   // int_T^inf (1-F) / A^2
  RealFn r_minus_tail;  // int_T^inf F(-t) / A^2
  RealFn inv_ell_tail;  // int_T^inf H / ell^2
  std::optional<double> kappa;
  std::optional<bool> ha, hb, transient;
  std::optional<double> mean;
  // two-sided tails ~ p L(x)/x and (1-p) L(x)/x
  std::optional<double> balance_p;
  RealFn L;
  // closed-form 1 - phi(theta) for theta in (0, pi/span]
  std::function<std::complex<double>(double)> one_minus_phi;
};

struct DistributionModel {
  std::string id;
  Kind kind = Kind::continuous;
  double span = 1.0;
  RealFn tail_pos;
  RealFn tail_neg;
  std::function<double(long long)> pmf;  // lattice: P(X = n*span)
  RealFn quantile;                       // inverse cdf on (0,1)
  Annotations ann;
  double support_floor = 0.0;
  bool nonnegative = false;     // tail_neg identically 0
  bool nonpositive = false;     // tail_pos identically 0
  std::string canonical;        // family + parameters, used for hashing
  std::uint64_t hash = 0;

  bool is_lattice() const { return kind == Kind::lattice; }
};

struct FamilySpec {
  std::string family;
  double p = std::numeric_limits<double>::quiet_NaN();
  double delta = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> support_floor;

  static FamilySpec from_map(const std::map<std::string, std::string>& kv) {
    FamilySpec s;
    for (const auto& [k, v] : kv) {
      if (k == "family") s.family = v;
      else if (k == "p") s.p = parse_real(k, v);
      else if (k == "delta") s.delta = parse_real(k, v);
      else if (k == "support_floor") s.support_floor = parse_real(k, v);
      else throw error(errc::invalid_parameter, "unknown model key '" + k + "'");
    }
    if (s.family.empty()) throw error(errc::invalid_parameter, "missing 'family'");
    return s;
  }

  static FamilySpec parse(std::istream& in) { return from_map(parse_key_values(in)); }
};

inline TailRecord tails(const DistributionModel& m, double x) {
  if (!(x >= 0.0)) throw error(errc::invalid_parameter, "tails: x must be >= 0");
  TailRecord t;
  t.x = x;
  t.Fbar = m.tail_pos(x);
  t.Fneg = m.tail_neg(x);
  t.H = t.Fbar + t.Fneg;
  t.K = t.Fbar - t.Fneg;
  return t;
}

inline double H_of(const DistributionModel& m, double x) { return m.tail_pos(x) + m.tail_neg(x); }
inline double K_of(const DistributionModel& m, double x) { return m.tail_pos(x) - m.tail_neg(x); }

inline double lattice_pmf(const DistributionModel& m, long long n) {
  if (!m.is_lattice()) throw error(errc::precondition, "lattice_pmf on a continuous model");
  return m.pmf(n);
}

inline double step_from_uniform(const DistributionModel& m, double u) { return m.quantile(u); }

inline double sample_step(const DistributionModel& m, Rng& rng) { return m.quantile(rng.uniform()); }

namespace detail {

inline double harmonic_number(double n) {
  if (n < 32.0) {
    double s = 0.0;
    for (int k = static_cast<int>(n); k >= 1; --k) s += 1.0 / k;
    return s;
  }
  const double r = 1.0 / n, r2 = r * r;
  return std::log(n) + std::numbers::egamma + 0.5 * r -
         r2 * (1.0 / 12 - r2 * (1.0 / 120 - r2 * (1.0 / 252 - r2 / 240)));
}

// int_S^inf f(s) ds for f(s) ~ s^-q, q > 1, via s = S w^{-1/(q-1)}
template <class F>
double algebraic_tail(F&& f, double S, double q) {
  const double e = 1.0 / (q - 1.0);
  auto g = [&](double w) {
    if (w <= 0.0) return 0.0;
    const double s = S * std::pow(w, -e);
    return f(s) * S * e * std::pow(w, -e - 1.0);
  };
  return integrate(g, 0.0, 1.0, 0.0, 1e-13).value;
}

inline void finish(DistributionModel& m) {
  m.hash = fnv1a(m.canonical);
}

inline std::string param_string(const std::string& fam, std::initializer_list<std::pair<const char*, double>> ps) {
  std::string s = "family=" + fam;
  for (const auto& [k, v] : ps) s += std::string(";") + k + "=" + format_real(v);
  return s;
}

// Smallest x with inverse cdf u for models given only by tails.
inline double generic_quantile(const DistributionModel& m, double u) {
  // F(x) = P(X <= x)
  auto cdf = [&](double x) {
    if (x >= 0.0) return 1.0 - m.tail_pos(x);
    if (m.is_lattice()) {
      const double nxt = x + m.span;
      return nxt > 0.0 ? 1.0 - m.tail_pos(0.0) : m.tail_neg(-nxt);
    }
    return m.tail_neg(-x);
  };
  double lo, hi;
  if (cdf(0.0) >= u) {
    hi = 0.0;
    lo = -1.0;
    while (cdf(lo) >= u) {
      hi = lo;
      lo *= 2.0;
      if (lo < -1e300) return lo;
    }
  } else {
    lo = 0.0;
    hi = 1.0;
    while (cdf(hi) < u) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e300) return hi;
    }
  }
  if (m.is_lattice()) {
    long long a = static_cast<long long>(std::floor(lo / m.span));
    long long b = static_cast<long long>(std::ceil(hi / m.span));
    while (b - a > 1) {
      const long long c = a + (b - a) / 2;
      if (cdf(c * m.span) >= u) b = c;
      else a = c;
    }
    return b * m.span;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::fabs(hi)); ++it) {
    const double c = 0.5 * (lo + hi);
    if (cdf(c) >= u) hi = c;
    else lo = c;
  }
  return hi;
}

}  // namespace detail

// Models ------------------------------------------------------------------

inline DistributionModel make_harmonic1() {
  DistributionModel m;
  m.id = "harmonic1";
  m.kind = Kind::lattice;
  m.span = 1.0;
  m.pmf = [](long long n) { return n >= 1 ? 1.0 / (static_cast<double>(n) * (n + 1.0)) : 0.0; };
  m.tail_pos = [](double x) { return 1.0 / (std::floor(x) + 1.0); };
  m.tail_neg = [](double) { return 0.0; };
  m.quantile = [](double u) { return std::ceil(1.0 / (1.0 - u)) - 1.0; };
  m.nonnegative = true;
  auto ell = [](double x) {
    const double k = std::floor(x);
    return detail::harmonic_number(k) + (x - k) / (k + 1.0);
  };
  m.ann.ell = ell;
  m.ann.A = ell;
  m.ann.inv_m_tail = [ell](double t) { return 1.0 / ell(t); };
  m.ann.r_plus_tail = m.ann.inv_m_tail;
  m.ann.r_minus_tail = [](double) { return 0.0; };
  m.ann.inv_ell_tail = m.ann.inv_m_tail;
  m.ann.kappa = 1.0;
  m.ann.ha = true;
  m.ann.hb = true;
  m.ann.transient = true;
  m.ann.balance_p = 1.0;
  m.ann.L = [](double) { return 1.0; };
  m.ann.one_minus_phi = [](double t) {
    const std::complex<double> z = std::polar(1.0, t);
    return -(1.0 - z) * std::log(1.0 - z) / z;
  };
  m.canonical = "family=harmonic1";
  detail::finish(m);
  return m;
}

inline DistributionModel make_finite_mean_baseline() {
  DistributionModel m;
  m.id = "finite_mean_baseline";
  m.kind = Kind::lattice;
  m.span = 1.0;
  m.pmf = [](long long n) { return (n == 1 || n == 2) ? 0.5 : 0.0; };
  m.tail_pos = [](double x) { return x < 1.0 ? 1.0 : (x < 2.0 ? 0.5 : 0.0); };
  m.tail_neg = [](double) { return 0.0; };
  m.quantile = [](double u) { return u <= 0.5 ? 1.0 : 2.0; };
  m.nonnegative = true;
  auto ell = [](double x) { return std::min(x, 1.0) + 0.5 * std::clamp(x - 1.0, 0.0, 1.0); };
  m.ann.ell = ell;
  m.ann.A = ell;
  m.ann.kappa = 1.0;
  m.ann.ha = true;
  m.ann.hb = true;
  m.ann.transient = true;
  m.ann.mean = 1.5;
  m.ann.one_minus_phi = [](double t) {
    const std::complex<double> z = std::polar(1.0, t);
    return 1.0 - 0.5 * (z + z * z);
  };
  m.canonical = "family=finite_mean_baseline";
  detail::finish(m);
  return m;
}

inline DistributionModel make_two_sided_log(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw error(errc::invalid_parameter, "two_sided_log: p must lie in [0,1], got " + format_real(p));
  DistributionModel m;
  m.id = "two_sided_log";
  m.kind = Kind::continuous;
  m.tail_pos = [p](double x) { return p / (1.0 + x); };
  m.tail_neg = [p](double x) { return (1.0 - p) / (1.0 + x); };
  m.quantile = [p](double u) { return u >= 1.0 - p ? p / (1.0 - u) - 1.0 : 1.0 - (1.0 - p) / u; };
  m.nonnegative = (p == 1.0);
  m.nonpositive = (p == 0.0);
  const double c = 2.0 * p - 1.0;
  m.ann.ell = [](double x) { return std::log1p(x); };
  m.ann.A = [c](double x) { return c * std::log1p(x); };
  m.ann.inv_ell_tail = [](double t) { return 1.0 / std::log1p(t); };
  if (c != 0.0) {
    m.ann.inv_m_tail = [c](double t) { return 1.0 / (c * c * std::log1p(t)); };
    m.ann.r_plus_tail = [c, p](double t) { return p / (c * c * std::log1p(t)); };
    m.ann.r_minus_tail = [c, p](double t) { return (1.0 - p) / (c * c * std::log1p(t)); };
    m.ann.hb = true;
    m.ann.transient = true;
  } else {
    m.ann.hb = false;
    m.ann.transient = false;
  }
  m.ann.ha = c > 0.0;
  if (c > 0.0) m.ann.kappa = c;
  m.ann.balance_p = p;
  m.ann.L = [](double) { return 1.0; };
  m.canonical = detail::param_string("two_sided_log", {{"p", p}});
  detail::finish(m);
  return m;
}

// Regularly varying p = 1/2 shapes with L(x) = log(e+x).
// c1: H = L^2/(e+x), K = L^delta/(e+x);  c2: H = e/(e+x), K = L^-delta/(e+x).
inline DistributionModel make_c1_hb_only(double delta) {
  if (!(delta > 0.5 && delta <= 1.0))
    throw error(errc::invalid_parameter, "c1_hb_only: delta must lie in (1/2,1], got " + format_real(delta));
  const double e = std::numbers::e;
  // derivative signs of (L^2 +- L^delta) e^-L in L, times e^L
  auto dpos = [delta](double L) { return 2 * L - L * L + delta * std::pow(L, delta - 1) - std::pow(L, delta); };
  auto dneg = [delta](double L) { return 2 * L - L * L - delta * std::pow(L, delta - 1) + std::pow(L, delta); };
  auto last_root = [](auto f) {
    // f > 0 somewhere in [1,3], f < 0 for L >= 4
    double lo = 1.0, hi = 4.0;
    for (double L = 4.0; L >= 1.0; L -= 1.0 / 64) {
      if (f(L) > 0.0) {
        lo = L;
        hi = L + 1.0 / 64;
        break;
      }
    }
    for (int i = 0; i < 200; ++i) {
      const double c = 0.5 * (lo + hi);
      if (f(c) > 0.0) lo = c;
      else hi = c;
    }
    return hi;
  };
  const double L0 = std::max(last_root(dpos), last_root(dneg));
  const double x0 = std::exp(L0) - e;
  auto Lf = [e](double x) { return std::log(e + x); };
  auto Hs = [](double s) { return s * s; };
  auto Ks = [delta](double s) { return std::pow(s, delta); };
  const double H0 = L0 * L0 / (e + x0), K0 = std::pow(L0, delta) / (e + x0);

  DistributionModel m;
  m.id = "c1_hb_only";
  m.kind = Kind::continuous;
  m.support_floor = x0;
  m.tail_pos = [=](double x) {
    const double y = std::max(x, x0);
    const double s = Lf(y);
    return 0.5 * (Hs(s) + Ks(s)) / (e + y);
  };
  m.tail_neg = [=](double x) {
    const double y = std::max(x, x0);
    const double s = Lf(y);
    return 0.5 * (Hs(s) - Ks(s)) / (e + y);
  };
  const double ell0 = x0 * H0, A0 = x0 * K0;
  const double cell = ell0 - L0 * L0 * L0 / 3.0;
  const double cA = A0 - std::pow(L0, delta + 1) / (delta + 1);
  auto ell = [=](double x) { return x < x0 ? x * H0 : cell + std::pow(Lf(x), 3) / 3.0; };
  auto A = [=](double x) { return x < x0 ? x * K0 : cA + std::pow(Lf(x), delta + 1) / (delta + 1); };
  auto As = [=](double s) { return cA + std::pow(s, delta + 1) / (delta + 1); };
  m.ann.ell = ell;
  m.ann.A = A;
  const double q = 2.0 * delta;
  m.ann.inv_m_tail = [=](double t) {
    return detail::algebraic_tail([&](double s) { return Hs(s) / (As(s) * As(s)); }, Lf(t), q);
  };
  m.ann.r_plus_tail = [=](double t) {
    return detail::algebraic_tail([&](double s) { return 0.5 * (Hs(s) + Ks(s)) / (As(s) * As(s)); }, Lf(t), q);
  };
  m.ann.r_minus_tail = [=](double t) {
    return detail::algebraic_tail([&](double s) { return 0.5 * (Hs(s) - Ks(s)) / (As(s) * As(s)); }, Lf(t), q);
  };
  m.ann.inv_ell_tail = [ell](double t) { return 1.0 / ell(t); };
  m.ann.kappa = 0.0;
  m.ann.ha = false;
  m.ann.hb = true;
  m.ann.transient = true;
  m.ann.balance_p = 0.5;
  m.ann.L = [Lf](double x) { const double s = Lf(x); return s * s; };
  // atom at 0 carries 1 - H(x0)
  m.quantile = [=](double u) {
    const double Fneg0 = 0.5 * (H0 - K0), Fpos0 = 0.5 * (H0 + K0);
    if (u <= Fneg0) {
      // solve tail_neg(y) = u on y >= x0, X = -y
      double lo = x0, hi = x0 + 1.0;
      auto tn = [&](double y) { const double s = Lf(y); return 0.5 * (Hs(s) - Ks(s)) / (e + y); };
      while (tn(hi) >= u) { lo = hi; hi = 2 * hi + 1.0; if (hi > 1e300) return -hi; }
      for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double c = 0.5 * (lo + hi);
        if (tn(c) >= u) lo = c; else hi = c;
      }
      return -hi;
    }
    if (u <= 1.0 - Fpos0) return 0.0;
    const double v = 1.0 - u;
    double lo = x0, hi = x0 + 1.0;
    auto tp = [&](double y) { const double s = Lf(y); return 0.5 * (Hs(s) + Ks(s)) / (e + y); };
    while (tp(hi) > v) { lo = hi; hi = 2 * hi + 1.0; if (hi > 1e300) return hi; }
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
      const double c = 0.5 * (lo + hi);
      if (tp(c) > v) lo = c; else hi = c;
    }
    return hi;
  };
  m.canonical = detail::param_string("c1_hb_only", {{"delta", delta}});
  detail::finish(m);
  return m;
}

inline DistributionModel make_c2_ha_only(double delta) {
  if (!(delta > 0.5 && delta < 1.0))
    throw error(errc::invalid_parameter, "c2_ha_only: delta must lie in (1/2,1), got " + format_real(delta));
  const double e = std::numbers::e;
  auto Lf = [e](double x) { return std::log(e + x); };
  DistributionModel m;
  m.id = "c2_ha_only";
  m.kind = Kind::continuous;
  m.tail_pos = [=](double x) { return 0.5 * (e + std::pow(Lf(x), -delta)) / (e + x); };
  m.tail_neg = [=](double x) { return 0.5 * (e - std::pow(Lf(x), -delta)) / (e + x); };
  m.ann.ell = [=](double x) { return e * (Lf(x) - 1.0); };
  m.ann.A = [=](double x) { return (std::pow(Lf(x), 1.0 - delta) - 1.0) / (1.0 - delta); };
  m.ann.inv_ell_tail = [=](double t) { return 1.0 / (e * (Lf(t) - 1.0)); };
  m.ann.ha = true;
  m.ann.hb = false;
  m.ann.transient = false;
  m.ann.balance_p = 0.5;
  m.ann.L = [e](double) { return e; };
  m.quantile = [m](double u) { return detail::generic_quantile(m, u); };
  m.canonical = detail::param_string("c2_ha_only", {{"delta", delta}});
  detail::finish(m);
  return m;
}

// User-supplied tails; checked for range and monotonicity on a probe grid.
inline DistributionModel make_user_model(const std::string& id, Kind kind, double span, RealFn tail_pos,
                                         RealFn tail_neg, std::function<double(long long)> pmf = {},
                                         double support_floor = 0.0) {
  DistributionModel m;
  m.id = id;
  m.kind = kind;
  m.span = span;
  m.tail_pos = std::move(tail_pos);
  m.tail_neg = std::move(tail_neg);
  m.support_floor = support_floor;
  if (kind == Kind::lattice) {
    if (!(span > 0.0)) throw error(errc::invalid_parameter, "lattice span must be positive");
    if (!pmf) {
      auto tp = m.tail_pos, tn = m.tail_neg;
      const double sp = span;
      pmf = [tp, tn, sp](long long n) {
        if (n > 0) return tp((n - 1) * sp) - tp(n * sp);
        if (n < 0) return tn((-n - 1) * sp) - tn(-n * sp);
        return 1.0 - tp(0.0) - tn(0.0);
      };
    }
    m.pmf = std::move(pmf);
  }
  double prev_p = 2.0, prev_n = 2.0;
  for (double x = 0.0; x < 1e12; x = (x < 1.0 ? x + 0.125 : x * 1.0625)) {
    const double a = m.tail_pos(x), b = m.tail_neg(x);
    if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0))
      throw error(errc::invalid_parameter, id + ": tail value outside [0,1] at x=" + format_real(x));
    if (a > prev_p || b > prev_n)
      throw error(errc::invalid_parameter, id + ": tails not monotone near x=" + format_real(x));
    prev_p = a;
    prev_n = b;
  }
  if (m.tail_pos(0.0) + m.tail_neg(0.0) > 1.0 + 1e-15)
    throw error(errc::invalid_parameter, id + ": tail_pos(0)+tail_neg(0) exceeds 1");
  m.nonnegative = m.tail_neg(0.0) == 0.0 && m.tail_neg(1e-300) == 0.0;
  m.nonpositive = m.tail_pos(0.0) == 0.0;
  m.quantile = [mm = m](double u) { return detail::generic_quantile(mm, u); };
  m.canonical = "family=user;id=" + id;
  detail::finish(m);
  return m;
}

inline DistributionModel build_model(const FamilySpec& s) {
  auto need = [&](double v, const char* name) {
    if (std::isnan(v))
      throw error(errc::invalid_parameter, s.family + ": missing parameter '" + name + "'");
    return v;
  };
  DistributionModel m;
  if (s.family == "harmonic1") m = make_harmonic1();
  else if (s.family == "finite_mean_baseline") m = make_finite_mean_baseline();
  else if (s.family == "two_sided_log") m = make_two_sided_log(need(s.p, "p"));
  else if (s.family == "c1_hb_only") m = make_c1_hb_only(need(s.delta, "delta"));
  else if (s.family == "c2_ha_only") m = make_c2_ha_only(need(s.delta, "delta"));
  else throw error(errc::invalid_parameter, "unknown family '" + s.family + "'");
  if (s.support_floor && *s.support_floor != m.support_floor) {
    const double x0 = *s.support_floor;
    if (!(x0 > m.support_floor))
      throw error(errc::invalid_parameter,
                  "support_floor below the family minimum " + format_real(m.support_floor));
    auto tp = m.tail_pos, tn = m.tail_neg;
    RealFn pos = [tp, x0](double x) { return tp(std::max(x, x0)); };
    RealFn neg = [tn, x0](double x) { return tn(std::max(x, x0)); };
    Annotations keep;
    keep.ha = m.ann.ha;
    keep.hb = m.ann.hb;
    keep.transient = m.ann.transient;
    keep.kappa = m.ann.kappa;
    keep.balance_p = m.ann.balance_p;
    keep.L = m.ann.L;
    auto canon = m.canonical + ";support_floor=" + format_real(x0);
    m = make_user_model(m.id, m.kind, m.span, pos, neg, {}, x0);
    m.ann = keep;
    m.canonical = canon;
    detail::finish(m);
  }
  return m;
}

}  // namespace renewal_lab
