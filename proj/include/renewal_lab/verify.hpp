#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "charfn.hpp"
#include "conditions.hpp"
#include "config.hpp"
#include "dist_model.hpp"
#include "functionals.hpp"
#include "green_measure.hpp"
#include "json.hpp"

namespace renewal_lab {

enum class Engine { convolution, montecarlo, fourier };

inline std::string engine_name(Engine e) {
  switch (e) {
    case Engine::convolution: return "convolution";
    case Engine::montecarlo: return "montecarlo";
    default: return "fourier";
  }
}

inline Engine parse_engine(const std::string& s) {
  if (s == "convolution") return Engine::convolution;
  if (s == "montecarlo") return Engine::montecarlo;
  if (s == "fourier") return Engine::fourier;
  throw error(errc::invalid_parameter, "unknown engine '" + s + "'");
}

struct ComparisonRow {
  double x = 0.0;
  std::string side;  // "+" or "-"
  double measured = 0.0, measured_err = 0.0;
  double predicted = 0.0;
  double ratio = 0.0, ratio_err = 0.0;
  std::string method;
  bool in_band = false;
};

struct ComparisonTable {
  std::string model_id, model_hash, suite, engine;
  double h = 1.0;
  std::string predicted_label;
  std::string band_rule;
  std::vector<ComparisonRow> rows;
  Verdict trend = Verdict::inconclusive;
  bool pass = false;
  std::vector<std::string> notes;
};

struct SuiteOptions {
  std::vector<Engine> engines{Engine::convolution};
  long long walks = 100000;
  long long horizon = 0;  // 0: default horizon
  std::uint64_t seed = 1;
  int jobs = 1;
  double fourier_a = 1.0;
  bool negative_side = true;
  double band = 0.25;
  double negative_band = 0.25;
  long long max_table_points = 10000000;
  double eps_stop = 1e-13;
};

struct SuiteResult {
  std::string suite;
  std::vector<ComparisonTable> tables;
  bool coherent = true;
  std::vector<std::string> coherence_notes;
  bool pass = false;
};

// log-spaced grid with k points per decade, decades included exactly
inline std::vector<double> decade_grid(double x_min, double x_max, int per_decade = 4) {
  if (!(x_min > 0.0) || !(x_max >= x_min) || per_decade < 1)
    throw error(errc::invalid_parameter, "decade_grid: need 0 < x_min <= x_max");
  std::vector<double> g;
  const double a = std::log10(x_min), b = std::log10(x_max);
  const long long n = static_cast<long long>(std::floor((b - a) * per_decade + 1e-9));
  for (long long i = 0; i <= n; ++i) {
    const double e = a + static_cast<double>(i) / per_decade;
    const double r = std::round(e);
    g.push_back(std::fabs(e - r) < 1e-9 ? std::pow(10.0, r) : std::pow(10.0, e));
  }
  if (g.back() < x_max * (1 - 1e-12)) g.push_back(x_max);
  return g;
}

namespace detail {

struct Measured {
  double value, err;
  std::string method;
};

// U[x, x+h) / h per window by one engine
inline std::vector<Measured> measure(const DistributionModel& m, const std::vector<Window>& w, double h, Engine e,
                                     const SuiteOptions& o) {
  std::vector<Measured> out;
  if (e == Engine::convolution) {
    if (!m.is_lattice()) throw error(errc::precondition, "convolution engine needs a lattice model");
    long long lo = 0, hi = 0;
    for (const auto& x : w) {
      lo = std::min(lo, static_cast<long long>(std::ceil(x.lo / m.span - 1e-9)));
      hi = std::max(hi, static_cast<long long>(std::ceil(x.hi / m.span - 1e-9)) - 1);
    }
    if (m.nonnegative) lo = 0;
    if (hi - lo + 1 > o.max_table_points)
      throw error(errc::precondition, "convolution table would exceed " + std::to_string(o.max_table_points) + " points");
    ConvolutionOptions co;
    co.eps_stop = o.eps_stop;
    const auto t = green_convolution(m, lo, hi, co);
    for (const auto& x : w) {
      double s = 0.0;
      long long cnt = 0;
      for (long long n = static_cast<long long>(std::ceil(x.lo / m.span - 1e-9)); n * m.span < x.hi - 1e-9 * m.span;
           ++n) {
        s += t.at(n);
        ++cnt;
      }
      out.push_back({s / h, (t.leaked_bound * static_cast<double>(cnt) + 1e-14 * s) / h, "convolution/" + t.engine});
    }
  } else if (e == Engine::montecarlo) {
    MonteCarloOptions mo;
    mo.jobs = o.jobs;
    const auto g = green_monte_carlo(m, w, o.walks, o.horizon, o.seed, mo);
    for (std::size_t i = 0; i < w.size(); ++i)
      out.push_back({g.mean[i] / h, g.stderr_[i] / h,
                     "montecarlo M=" + std::to_string(g.walks) + " T=" + std::to_string(g.horizon)});
  } else {
    // a * smoothed window at theta = 0 tends to the local density of U
    for (const auto& x : w) {
      const auto r = fourier_smoothed(m, x.lo, o.fourier_a, 0.0, SmoothMode::full);
      out.push_back({o.fourier_a * r.value.real(), o.fourier_a * r.err, "fourier a=" + format_real(o.fourier_a)});
    }
  }
  return out;
}

inline Verdict decade_trend(const std::vector<ComparisonRow>& rows, const std::string& side) {
  std::vector<const ComparisonRow*> r;
  for (const auto& x : rows)
    if (x.side == side) r.push_back(&x);
  if (r.empty()) return Verdict::inconclusive;
  const double last = r.back()->x;
  std::vector<double> dist;
  for (int k = 3; k >= 0; --k) {
    const double target = last / std::pow(10.0, k);
    for (const auto* p : r)
      if (std::fabs(std::log10(p->x / target)) < 1e-6) dist.push_back(std::fabs(p->ratio - 1.0));
  }
  if (dist.size() < 2) return Verdict::inconclusive;
  for (std::size_t i = 1; i < dist.size(); ++i)
    if (!(dist[i] < dist[i - 1]) && dist[i] > 1e-12) return Verdict::fails;
  return Verdict::holds;
}

struct Prediction {
  double value;
  std::string label;
};

inline SuiteResult run_suite(const DistributionModel& m, const std::string& suite, const std::vector<double>& x_grid,
                             double h, const SuiteOptions& o,
                             const std::function<Prediction(double, bool)>& predict, double neg_band_abs_factor,
                             bool include_negative) {
  if (!(h > 0.0)) throw error(errc::invalid_parameter, suite + ": h must be > 0");
  if (x_grid.empty()) throw error(errc::invalid_parameter, suite + ": empty x grid");
  SuiteResult res;
  res.suite = suite;
  std::vector<Window> w;
  std::vector<std::pair<double, bool>> keys;
  for (double x : x_grid) {
    w.push_back({x, x + h});
    keys.push_back({x, true});
  }
  if (include_negative)
    for (double x : x_grid) {
      w.push_back({-x, -x + h});
      keys.push_back({x, false});
    }
  std::vector<std::vector<Measured>> all;
  for (Engine e : o.engines) {
    const auto meas = measure(m, w, h, e, o);
    all.push_back(meas);
    ComparisonTable t;
    t.model_id = m.id;
    t.model_hash = hex64(m.hash);
    t.suite = suite;
    t.engine = engine_name(e);
    t.h = h;
    t.band_rule = "positive: |ratio-1| <= " + format_real(o.band) + " + 3 ratio_err";
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto [x, pos] = keys[i];
      const auto p = predict(x, pos);
      if (pos) t.predicted_label = p.label;
      ComparisonRow r;
      r.x = x;
      r.side = pos ? "+" : "-";
      r.measured = meas[i].value;
      r.measured_err = meas[i].err;
      r.predicted = p.value;
      r.method = meas[i].method;
      r.ratio = p.value > 0.0 ? r.measured / p.value : std::numeric_limits<double>::quiet_NaN();
      r.ratio_err = p.value > 0.0 ? r.measured_err / p.value : std::numeric_limits<double>::quiet_NaN();
      if (pos) {
        r.in_band = std::fabs(r.ratio - 1.0) <= o.band + 3.0 * r.ratio_err;
      } else if (neg_band_abs_factor > 0.0) {
        // o-term folded into an absolute band scaled by the positive-side prediction
        const double slack = std::max(3.0 * r.measured_err, neg_band_abs_factor * predict(x, true).value);
        r.in_band = std::fabs(r.measured - p.value) <= slack;
      } else {
        r.in_band = std::fabs(r.ratio - 1.0) <= o.negative_band + 3.0 * r.ratio_err;
      }
      t.rows.push_back(r);
    }
    if (include_negative)
      t.band_rule += neg_band_abs_factor > 0.0
                         ? "; negative: |measured-predicted| <= max(3 err, " + format_real(neg_band_abs_factor) +
                               " r_plus(|x|))"
                         : "; negative: |ratio-1| <= " + format_real(o.negative_band) + " + 3 ratio_err";
    t.trend = decade_trend(t.rows, "+");
    const ComparisonRow* last_pos = nullptr;
    const ComparisonRow* last_neg = nullptr;
    for (const auto& r : t.rows) (r.side == "+" ? last_pos : last_neg) = &r;
    t.pass = last_pos && last_pos->in_band && t.trend != Verdict::fails && (!last_neg || last_neg->in_band);
    res.tables.push_back(std::move(t));
  }
  // engines measuring the same window must agree before ratios mean anything
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b)
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = std::fabs(all[a][i].value - all[b][i].value);
        const double tol = 3.0 * std::hypot(all[a][i].err, all[b][i].err) + 1e-12;
        if (d > tol) {
          res.coherent = false;
          res.coherence_notes.push_back(engine_name(o.engines[a]) + " vs " + engine_name(o.engines[b]) +
                                        " disagree at x=" + format_real(w[i].lo));
        }
      }
  res.pass = res.coherent;
  for (const auto& t : res.tables) res.pass = res.pass && t.pass;
  return res;
}

inline void require_hypotheses(const DistributionModel& m, const std::string& what) {
  ClassifyOptions co;
  const auto c = classify(m, 1e6, co);
  if (c.ha.verdict != Verdict::holds || c.hb.verdict != Verdict::holds)
    throw error(errc::precondition, what + ": needs (Ha) and (Hb) to hold");
}

}  // namespace detail

// measured U[x,x+h)/h against r_plus(x) and r_minus(|x|)
inline SuiteResult theorem_suite(const DistributionModel& m, const std::vector<double>& x_grid, double h,
                                 const SuiteOptions& o = {}) {
  detail::require_hypotheses(m, "theorem_suite");
  auto predict = [&](double x, bool pos) {
    const auto f = functional_profile(m, x);
    return detail::Prediction{pos ? f.r_plus : f.r_minus, pos ? "r_plus(x)" : "r_minus(|x|)"};
  };
  const bool neg = o.negative_side && !m.nonnegative;
  return detail::run_suite(m, "theorem", x_grid, h, o, predict, 0.25, neg);
}

// m(|x|) U/h against (1 +- kappa)/2
inline SuiteResult corollary1_suite(const DistributionModel& m, const std::vector<double>& x_grid, double h,
                                    const SuiteOptions& o = {}) {
  detail::require_hypotheses(m, "corollary1_suite");
  ClassifyOptions co;
  const auto c = classify(m, 1e6, co);
  if (!c.hc_kappa) throw error(errc::precondition, "corollary1_suite: (Hc) does not hold");
  const double kappa = *c.hc_kappa;
  auto predict = [&](double x, bool pos) {
    const auto f = functional_profile(m, x);
    return detail::Prediction{0.5 * (pos ? 1.0 + kappa : 1.0 - kappa) / f.m, pos ? "(1+kappa)/(2m(x))" : "(1-kappa)/(2m(|x|))"};
  };
  const bool neg = o.negative_side && !m.nonnegative;
  auto r = detail::run_suite(m, "corollary1", x_grid, h, o, predict, 0.0, neg);
  for (auto& t : r.tables) t.notes.push_back("kappa=" + format_real(kappa));
  return r;
}

// ell(x) U[x,x+h) against h
inline SuiteResult corollary2_suite(const DistributionModel& m, const std::vector<double>& x_grid, double h,
                                    const SuiteOptions& o = {}) {
  if (!m.nonnegative) throw error(errc::precondition, "corollary2_suite: needs nonnegative steps");
  detail::require_hypotheses(m, "corollary2_suite");
  Cumulative cum(m);
  auto predict = [&](double x, bool) { return detail::Prediction{1.0 / cum.ell(x), "1/ell(x)"}; };
  return detail::run_suite(m, "corollary2", x_grid, h, o, predict, 0.0, false);
}

struct RelativeStability {
  std::string model_id;
  long long n = 0, walks = 0;
  double lambda = 0.0;
  double mean = 0.0, stderr_ = 0.0;
  double median = 0.0, median_lo = 0.0, median_hi = 0.0;  // 3-sigma order-statistic interval
  double band = 0.1;
  bool pass = false;
};

// S_n / lambda_n over M walks; the verdict uses the median since the mean is dominated by rare large jumps
inline RelativeStability relative_stability(const DistributionModel& m, long long n, long long M, std::uint64_t seed,
                                            int jobs = 1) {
  if (n < 1 || M < 100) throw error(errc::invalid_parameter, "relative_stability: need n >= 1 and M >= 100");
  RelativeStability r;
  r.model_id = m.id;
  r.n = n;
  r.walks = M;
  r.lambda = estimate_norming(m, n).lambda;
  std::vector<double> v(static_cast<std::size_t>(M));
  for_each_chunk(M, 1024, jobs, [&](std::int64_t, std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      Rng rng(seed, static_cast<std::uint64_t>(i));
      double s = 0.0;
      for (long long k = 0; k < n; ++k) s += sample_step(m, rng);
      v[i] = s / r.lambda;
    }
  });
  double s = 0.0, s2 = 0.0;
  for (double x : v) {
    s += x;
    s2 += x * x;
  }
  r.mean = s / M;
  r.stderr_ = std::sqrt(std::max(0.0, (s2 - M * r.mean * r.mean) / (M - 1)) / M);
  std::sort(v.begin(), v.end());
  auto q = [&](double k) { return v[static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(M - 1)))]; };
  const double half = 0.5 * M, sd = 1.5 * std::sqrt(static_cast<double>(M));
  r.median = q(half);
  r.median_lo = q(std::floor(half - sd));
  r.median_hi = q(std::ceil(half + sd));
  r.pass = r.median_hi >= 1.0 - r.band && r.median_lo <= 1.0 + r.band;
  return r;
}

struct BaselineResult {
  SuiteResult suite;
  RelativeStability stability;
  bool pass = false;
};

// finite-mean baseline through the recursion engine plus the relative stability diagnostic
inline BaselineResult baseline_suite(std::uint64_t seed = 1, long long stability_walks = 10000, int jobs = 1) {
  FamilySpec f;
  f.family = "finite_mean_baseline";
  const auto m = build_model(f);
  SuiteOptions o;
  o.band = 0.01;
  o.engines = {Engine::convolution};
  auto predict = [](double, bool) { return detail::Prediction{1.0 / 1.5, "1/EX"}; };
  BaselineResult b;
  b.suite = detail::run_suite(m, "baseline", {10.0, 100.0, 1000.0}, 1.0, o, predict, 0.0, false);
  FamilySpec t;
  t.family = "two_sided_log";
  t.p = 0.75;
  b.stability = relative_stability(build_model(t), 1000, stability_walks, seed, jobs);
  b.pass = b.suite.pass && b.stability.pass;
  return b;
}

struct RemarkRow {
  double x = 0.0;
  double A_over_m = 0.0, ell_over_m = 0.0, s_statistic = 0.0;  // s_statistic = m ell / A^2
  double u_ratio = 0.0, u_ratio_err = 0.0;                     // U[-x,-x+h) / U[x,x+h)
  double predicted_ratio = 0.0;                                // r_minus / r_plus
};

struct RemarkReport {
  std::string model_id;
  std::vector<RemarkRow> rows;
  bool A_over_m_to_one = false;
  double limit_ratio = 0.0;
  double s_sup = 0.0;
  std::string rule;
  bool pass = false;
};

inline RemarkReport remark_equivalences(const DistributionModel& m, const std::vector<double>& x_grid, double h,
                                        const SuiteOptions& o = {}) {
  detail::require_hypotheses(m, "remark_equivalences");
  ClassifyOptions co;
  const auto c = classify(m, 1e6, co);
  RemarkReport rep;
  rep.model_id = m.id;
  rep.A_over_m_to_one = c.A_over_m_to_one;
  std::vector<Window> w;
  for (double x : x_grid) w.push_back({x, x + h});
  for (double x : x_grid) w.push_back({-x, -x + h});
  std::vector<detail::Measured> meas;
  if (!m.nonnegative) {
    Engine e = m.is_lattice() ? Engine::convolution : Engine::montecarlo;
    if (!o.engines.empty() && o.engines.front() != Engine::fourier) e = o.engines.front();
    meas = detail::measure(m, w, h, e, o);
  }
  const std::size_t n = x_grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = functional_profile(m, x_grid[i]);
    RemarkRow r;
    r.x = x_grid[i];
    r.A_over_m = f.A / f.m;
    r.ell_over_m = f.ell / f.m;
    r.s_statistic = f.m * f.ell / (f.A * f.A);
    r.predicted_ratio = f.r_minus / f.r_plus;
    if (!meas.empty()) {
      const auto& p = meas[i];
      const auto& q = meas[i + n];
      r.u_ratio = p.value > 0.0 ? q.value / p.value : std::numeric_limits<double>::infinity();
      r.u_ratio_err = p.value > 0.0 ? r.u_ratio * std::hypot(q.err / std::max(q.value, 1e-300), p.err / p.value) : 0.0;
    }
    rep.s_sup = std::max(rep.s_sup, r.s_statistic);
    rep.rows.push_back(r);
  }
  rep.limit_ratio = c.hc_kappa ? (1.0 - *c.hc_kappa) / (1.0 + *c.hc_kappa) : rep.rows.back().predicted_ratio;
  if (m.nonnegative) {
    rep.rule = "one-sided: U on the negative axis vanishes and A = m";
    rep.pass = true;
  } else if (rep.A_over_m_to_one) {
    rep.rule = "A/m -> 1 requires the measured U ratio to decrease toward 0";
    rep.pass = rep.rows.back().u_ratio <= rep.rows.front().u_ratio + 3.0 * rep.rows.front().u_ratio_err;
  } else {
    rep.rule = "A/m -> 1 fails so the measured U ratio stays above half of lim r_minus/r_plus";
    rep.pass = true;
    for (const auto& r : rep.rows) rep.pass = rep.pass && r.u_ratio + 3.0 * r.u_ratio_err > 0.5 * rep.limit_ratio;
  }
  return rep;
}

// Reports -------------------------------------------------------------------

using Metadata = std::map<std::string, std::string>;

inline nlohmann::ordered_json to_json(const ComparisonTable& t, const Metadata& meta = {}) {
  nlohmann::ordered_json j;
  j["schema"] = "renewal_lab.comparison.v1";
  j["model_id"] = t.model_id;
  j["model_hash"] = t.model_hash;
  j["suite"] = t.suite;
  j["engine"] = t.engine;
  j["h"] = t.h;
  j["predicted"] = t.predicted_label;
  j["band_rule"] = t.band_rule;
  j["trend"] = verdict_name(t.trend);
  j["pass"] = t.pass;
  j["notes"] = t.notes;
  j["config"] = meta;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"x", r.x},
                    {"side", r.side},
                    {"measured", r.measured},
                    {"measured_err", r.measured_err},
                    {"predicted", r.predicted},
                    {"ratio", r.ratio},
                    {"ratio_err", r.ratio_err},
                    {"method", r.method},
                    {"in_band", r.in_band}});
  return j;
}

inline ComparisonTable table_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "renewal_lab.comparison.v1")
    throw error(errc::io, "not a renewal_lab comparison table");
  ComparisonTable t;
  t.model_id = j.at("model_id");
  t.model_hash = j.at("model_hash");
  t.suite = j.at("suite");
  t.engine = j.at("engine");
  t.h = j.at("h");
  t.predicted_label = j.at("predicted");
  t.band_rule = j.at("band_rule");
  const std::string tr = j.at("trend");
  t.trend = tr == "holds" ? Verdict::holds : tr == "fails" ? Verdict::fails : Verdict::inconclusive;
  t.pass = j.at("pass");
  t.notes = j.at("notes").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    ComparisonRow x;
    x.x = r.at("x");
    x.side = r.at("side");
    x.measured = r.at("measured");
    x.measured_err = r.at("measured_err");
    x.predicted = r.at("predicted");
    x.ratio = r.at("ratio");
    x.ratio_err = r.at("ratio_err");
    x.method = r.at("method");
    x.in_band = r.at("in_band");
    t.rows.push_back(x);
  }
  return t;
}

inline const char* kCsvHeader = "x,side,measured,measured_err,predicted,ratio,ratio_err,method,in_band";

inline std::string to_csv(const ComparisonTable& t, const Metadata& meta = {}) {
  std::ostringstream s;
  for (const auto& [k, v] : meta) s << "# " << k << "=" << v << "\n";
  s << "# model_id=" << t.model_id << "\n# suite=" << t.suite << "\n# engine=" << t.engine
    << "\n# trend=" << verdict_name(t.trend) << "\n# pass=" << (t.pass ? 1 : 0) << "\n";
  s << kCsvHeader << "\n";
  for (const auto& r : t.rows)
    s << format_real(r.x) << "," << r.side << "," << format_real(r.measured) << "," << format_real(r.measured_err)
      << "," << format_real(r.predicted) << "," << format_real(r.ratio) << "," << format_real(r.ratio_err) << ","
      << r.method << "," << (r.in_band ? 1 : 0) << "\n";
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw error(errc::io, "cannot write " + p.string());
  f << body;
  if (!f) throw error(errc::io, "write failed for " + p.string());
}

// one file per table plus a two-column x/ratio file per side
inline std::vector<std::string> report_emit(const SuiteResult& r, const std::string& format, const std::string& out_dir,
                                            const Metadata& meta = {}) {
  if (format != "csv" && format != "json") throw error(errc::invalid_parameter, "format must be csv or json");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw error(errc::io, "cannot create directory " + out_dir);
  std::vector<std::string> files;
  for (const auto& t : r.tables) {
    const std::string stem = t.model_hash + "_" + t.suite + "_" + t.engine;
    const auto base = std::filesystem::path(out_dir) / stem;
    const std::string body = format == "csv" ? to_csv(t, meta) : to_json(t, meta).dump(2) + "\n";
    const auto main = base.string() + "." + format;
    write_file(main, body);
    files.push_back(main);
    for (const std::string side : {"+", "-"}) {
      std::ostringstream d;
      bool any = false;
      d << "# x ratio\n";
      for (const auto& row : t.rows)
        if (row.side == side) {
          d << format_real(row.x) << " " << format_real(row.ratio) << "\n";
          any = true;
        }
      if (!any) continue;
      const auto dat = base.string() + (side == "+" ? "_pos" : "_neg") + ".dat";
      write_file(dat, d.str());
      files.push_back(dat);
    }
  }
  return files;
}

}  // namespace renewal_lab
