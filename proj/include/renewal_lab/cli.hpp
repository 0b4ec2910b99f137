#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "charfn.hpp"
#include "conditions.hpp"
#include "config.hpp"
#include "dist_model.hpp"
#include "functionals.hpp"
#include "green_measure.hpp"
#include "json.hpp"
#include "verify.hpp"

namespace renewal_lab {

namespace cli {

using json = nlohmann::ordered_json;

enum exit_code { ok = 0, suite_failed = 1, usage = 2, numeric = 3 };

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> k{"family", "p",     "delta",  "support_floor", "h",    "xmax",
                                          "xmin",   "grid",  "tol",    "seed",          "engine", "jobs",
                                          "out",    "format", "suite", "walks",         "horizon", "a",
                                          "theta",  "mode",  "eps_stop"};
  return k;
}

// effective configuration: config file overlaid by flags
struct RunConfig {
  std::string subcommand;
  std::map<std::string, std::string> kv;

  bool has(const std::string& k) const { return kv.count(k) > 0; }
  std::string str(const std::string& k, const std::string& def = "") const {
    auto it = kv.find(k);
    return it == kv.end() ? def : it->second;
  }
  double real(const std::string& k, double def) const { return has(k) ? parse_real(k, kv.at(k)) : def; }
  long long integer(const std::string& k, long long def) const {
    if (!has(k)) return def;
    const double v = parse_real(k, kv.at(k));
    if (v != std::floor(v) || std::fabs(v) > 9e15) throw error(errc::invalid_parameter, "'" + k + "' must be an integer");
    return static_cast<long long>(v);
  }
  std::vector<double> grid(const std::vector<double>& def) const {
    if (!has("grid")) return def;
    std::vector<double> g;
    std::stringstream s(kv.at("grid"));
    std::string item;
    while (std::getline(s, item, ',')) {
      const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
      if (b == std::string::npos) throw error(errc::invalid_parameter, "'grid' has an empty entry");
      g.push_back(parse_real("grid", item.substr(b, e - b + 1)));
    }
    if (g.empty()) throw error(errc::invalid_parameter, "'grid' is empty");
    return g;
  }
  json echo() const {
    json j;
    j["subcommand"] = subcommand;
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
  }
  Metadata metadata() const {
    Metadata m{{"subcommand", subcommand}};
    for (const auto& [k, v] : kv) m[k] = v;
    return m;
  }
};

inline void validate(const RunConfig& c) {
  for (const auto& [k, v] : c.kv)
    if (std::find(known_keys().begin(), known_keys().end(), k) == known_keys().end())
      throw error(errc::invalid_parameter, "unknown key '" + k + "'");
  for (const char* k : {"tol", "h", "xmax", "eps_stop", "a"})
    if (c.has(k) && !(c.real(k, 0.0) > 0.0)) throw error(errc::invalid_parameter, std::string("'") + k + "' must be > 0");
  if (c.has("jobs") && c.integer("jobs", 1) < 1) throw error(errc::invalid_parameter, "'jobs' must be >= 1");
  if (c.has("walks") && c.integer("walks", 2) < 2) throw error(errc::invalid_parameter, "'walks' must be >= 2");
  if (c.has("format") && c.str("format") != "csv" && c.str("format") != "json")
    throw error(errc::invalid_parameter, "'format' must be csv or json");
  if (c.has("engine")) parse_engine(c.str("engine"));
}

inline DistributionModel model_of(const RunConfig& c) {
  if (!c.has("family")) throw error(errc::invalid_parameter, "missing --family");
  std::map<std::string, std::string> kv;
  for (const char* k : {"family", "p", "delta", "support_floor"})
    if (c.has(k)) kv[k] = c.str(k);
  return build_model(FamilySpec::from_map(kv));
}

inline std::uint64_t seed_of(const RunConfig& c, const std::string& why) {
  if (!c.has("seed")) throw error(errc::invalid_parameter, why + " needs --seed");
  const long long s = c.integer("seed", 0);
  if (s < 0) throw error(errc::invalid_parameter, "'seed' must be >= 0");
  return static_cast<std::uint64_t>(s);
}

inline json verdict_json(const ConditionVerdict& v) {
  json j;
  j["verdict"] = verdict_name(v.verdict);
  j["provenance"] = v.provenance;
  j["empirical"] = verdict_name(v.empirical);
  j["rule"] = v.rule;
  j["statistic"] = v.statistic;
  return j;
}

// rows of named columns rendered as csv or json
struct Rows {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline std::string render(const RunConfig& c, const std::string& kind, const json& head, const Rows& r) {
  if (c.str("format", "json") == "csv") {
    std::ostringstream s;
    for (const auto& [k, v] : c.metadata()) s << "# " << k << "=" << v << "\n";
    for (auto it = head.begin(); it != head.end(); ++it)
      s << "# " << it.key() << "=" << (it->is_string() ? it->get<std::string>() : it->dump()) << "\n";
    for (std::size_t i = 0; i < r.columns.size(); ++i) s << (i ? "," : "") << r.columns[i];
    s << "\n";
    for (const auto& row : r.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) s << (i ? "," : "") << row[i];
      s << "\n";
    }
    return s.str();
  }
  json j;
  j["kind"] = kind;
  j["config"] = c.echo();
  for (auto it = head.begin(); it != head.end(); ++it) j[it.key()] = *it;
  auto& arr = j["rows"] = json::array();
  for (const auto& row : r.rows) {
    json o;
    for (std::size_t i = 0; i < row.size(); ++i) o[r.columns[i]] = row[i];
    arr.push_back(o);
  }
  return j.dump(2) + "\n";
}

inline void emit(const RunConfig& c, const std::string& name, const std::string& body, std::ostream& out) {
  if (!c.has("out")) {
    out << body;
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(c.str("out"), ec);
  if (ec) throw error(errc::io, "cannot create directory " + c.str("out"));
  const auto p = std::filesystem::path(c.str("out")) / (name + "." + c.str("format", "json"));
  write_file(p, body);
  out << p.string() << "\n";
}

inline int cmd_classify(const RunConfig& c, std::ostream& out) {
  const auto m = model_of(c);
  ClassifyOptions o;
  o.jobs = static_cast<int>(c.integer("jobs", 1));
  if (c.has("walks")) {
    o.rho_grid = {10, 100, 1000};
    o.rho_walks = c.integer("walks", 0);
    o.seed = seed_of(c, "Spitzer estimates");
  }
  const auto r = classify(m, c.real("xmax", 1e6), o);
  json j;
  j["kind"] = "classify";
  j["config"] = c.echo();
  j["model_id"] = r.model_id;
  j["model_hash"] = hex64(m.hash);
  j["x_max"] = r.x_max;
  j["ha"] = verdict_json(r.ha);
  j["hb"] = verdict_json(r.hb);
  j["hc"] = verdict_json(r.hc);
  j["transient"] = verdict_json(r.transient);
  j["kappa"] = r.hc_kappa ? json(*r.hc_kappa) : json(nullptr);
  j["kappa_method"] = r.kappa_method;
  j["regime"] = r.regime;
  j["A_over_m_to_one"] = r.A_over_m_to_one;
  j["ell_over_m_to_one"] = r.ell_over_m_to_one;
  auto& rho = j["rho"] = json::array();
  for (const auto& e : r.rho_trend) rho.push_back({{"n", e.n}, {"rho", e.rho}, {"stderr", e.stderr_}});
  emit(c, hex64(m.hash) + "_classify", j.dump(2) + "\n", out);
  return ok;
}

inline int cmd_functionals(const RunConfig& c, std::ostream& out) {
  const auto m = model_of(c);
  QuadratureConfig q;
  q.rel_tol = c.real("tol", q.rel_tol);
  Rows r{{"x", "ell", "A", "m", "r_plus", "r_minus", "err_ell", "err_A", "err_m", "err_r_plus", "err_r_minus",
          "completion"},
         {}};
  for (double x : c.grid(decade_grid(std::max(1.0, c.real("xmin", 10.0)), c.real("xmax", 1e6), 1))) {
    const auto f = functional_profile(m, x, q);
    r.rows.push_back({format_real(f.x), format_real(f.ell), format_real(f.A), format_real(f.m), format_real(f.r_plus),
                      format_real(f.r_minus), format_real(f.err_bound.ell), format_real(f.err_bound.A),
                      format_real(f.err_bound.m), format_real(f.err_bound.r_plus), format_real(f.err_bound.r_minus),
                      f.completion});
  }
  json head{{"model_id", m.id}, {"model_hash", hex64(m.hash)}};
  emit(c, hex64(m.hash) + "_functionals", render(c, "functionals", head, r), out);
  return ok;
}

inline int cmd_charfn(const RunConfig& c, std::ostream& out) {
  const auto m = model_of(c);
  CharfnOptions o;
  o.rel_tol = c.real("tol", o.rel_tol);
  o.jobs = static_cast<int>(c.integer("jobs", 1));
  const auto d = asymptotic_diagnostics(m, c.grid({1e-1, 1e-2, 1e-3, 1e-4}), o);
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("NA"); };
  Rows r{{"theta", "extrapolated", "phi_abs_ratio", "phi_abs_err", "phi_im_ratio", "phi_im_err", "J", "J_err",
          "J_ell_ratio", "J_m_ratio", "S_theta_ell", "summable_partial"},
         {}};
  for (const auto& x : d.rows)
    r.rows.push_back({format_real(x.theta), x.extrapolated ? "1" : "0", format_real(x.phi_abs_ratio),
                      format_real(x.phi_abs_err), format_real(x.phi_im_ratio), format_real(x.phi_im_err),
                      format_real(x.J), format_real(x.J_err), format_real(x.J_ell_ratio), opt(x.J_m_ratio),
                      opt(x.S_theta_ell), format_real(x.summable_partial)});
  json head{{"model_id", m.id}, {"model_hash", hex64(m.hash)}, {"summable", verdict_name(d.summable)}};
  emit(c, hex64(m.hash) + "_charfn", render(c, "charfn", head, r), out);
  return ok;
}

inline int cmd_green(const RunConfig& c, std::ostream& out) {
  const auto m = model_of(c);
  const Engine e = c.has("engine") ? parse_engine(c.str("engine"))
                                   : (m.is_lattice() ? Engine::convolution : Engine::montecarlo);
  const double h = c.real("h", 1.0);
  const auto xs = c.grid({c.real("xmax", 100.0)});
  Rows r{{"x", "h", "U", "err", "method"}, {}};
  json head{{"model_id", m.id}, {"model_hash", hex64(m.hash)}, {"engine", engine_name(e)}};
  if (e == Engine::fourier) {
    const double a = c.real("a", 1.0), theta = c.real("theta", 0.0);
    const std::string mode = c.str("mode", "full");
    if (mode != "full" && mode != "cosine" && mode != "sine")
      throw error(errc::invalid_parameter, "'mode' must be full, cosine or sine");
    const SmoothMode sm = mode == "cosine" ? SmoothMode::cosine : mode == "sine" ? SmoothMode::sine : SmoothMode::full;
    r.columns = {"x", "a", "theta", "re", "im", "err"};
    for (double x : xs) {
      const auto v = fourier_smoothed(m, x, a, theta, sm);
      r.rows.push_back({format_real(x), format_real(a), format_real(theta), format_real(v.value.real()),
                        format_real(v.value.imag()), format_real(v.err)});
    }
  } else {
    std::vector<Window> w;
    for (double x : xs) w.push_back({x, x + h});
    SuiteOptions o;
    o.jobs = static_cast<int>(c.integer("jobs", 1));
    o.eps_stop = c.real("eps_stop", o.eps_stop);
    if (e == Engine::montecarlo) {
      o.seed = seed_of(c, "the montecarlo engine");
      o.walks = c.integer("walks", 100000);
      o.horizon = c.integer("horizon", 0);
    }
    const auto meas = detail::measure(m, w, h, e, o);
    for (std::size_t i = 0; i < w.size(); ++i)
      r.rows.push_back({format_real(xs[i]), format_real(h), format_real(meas[i].value * h),
                        format_real(meas[i].err * h), meas[i].method});
  }
  emit(c, hex64(m.hash) + "_green_" + engine_name(e), render(c, "green", head, r), out);
  return ok;
}

inline std::string suite_text(const SuiteResult& r, const RunConfig& c) {
  std::string s;
  for (const auto& t : r.tables)
    s += c.str("format", "csv") == "json" ? to_json(t, c.metadata()).dump(2) + "\n" : to_csv(t, c.metadata());
  return s;
}

inline int cmd_verify(const RunConfig& c, std::ostream& out) {
  const std::string suite = c.str("suite", "theorem");
  const int jobs = static_cast<int>(c.integer("jobs", 1));
  if (suite == "baseline") {
    const auto b = baseline_suite(seed_of(c, "the baseline suite"), c.integer("walks", 10000), jobs);
    json j;
    j["kind"] = "verify";
    j["config"] = c.echo();
    j["suite"] = "baseline";
    j["table"] = to_json(b.suite.tables[0]);
    const auto& s = b.stability;
    j["relative_stability"] = {{"model_id", s.model_id}, {"n", s.n},           {"walks", s.walks},
                               {"lambda", s.lambda},     {"mean", s.mean},     {"stderr", s.stderr_},
                               {"median", s.median},     {"median_lo", s.median_lo}, {"median_hi", s.median_hi},
                               {"band", s.band},         {"pass", s.pass}};
    j["pass"] = b.pass;
    emit(c, "baseline_verify", j.dump(2) + "\n", out);
    return b.pass ? ok : suite_failed;
  }
  const auto m = model_of(c);
  SuiteOptions o;
  o.jobs = jobs;
  o.eps_stop = c.real("eps_stop", o.eps_stop);
  const Engine e = c.has("engine") ? parse_engine(c.str("engine"))
                                   : (m.is_lattice() ? Engine::convolution : Engine::montecarlo);
  o.engines = {e};
  if (e == Engine::montecarlo) {
    o.seed = seed_of(c, "the montecarlo engine");
    o.walks = c.integer("walks", 100000);
    o.horizon = c.integer("horizon", 0);
  }
  o.fourier_a = c.real("a", 1.0);
  const double h = c.real("h", 1.0);
  const auto grid = c.grid(decade_grid(c.real("xmin", 100.0), c.real("xmax", 1e4), 4));
  if (suite == "remark") {
    const auto r = remark_equivalences(m, grid, h, o);
    json j;
    j["kind"] = "verify";
    j["config"] = c.echo();
    j["suite"] = "remark";
    j["model_id"] = r.model_id;
    j["A_over_m_to_one"] = r.A_over_m_to_one;
    j["limit_ratio"] = r.limit_ratio;
    j["s_sup"] = r.s_sup;
    j["rule"] = r.rule;
    auto& rows = j["rows"] = json::array();
    for (const auto& x : r.rows)
      rows.push_back({{"x", x.x},
                      {"A_over_m", x.A_over_m},
                      {"ell_over_m", x.ell_over_m},
                      {"s_statistic", x.s_statistic},
                      {"u_ratio", x.u_ratio},
                      {"u_ratio_err", x.u_ratio_err},
                      {"predicted_ratio", x.predicted_ratio}});
    j["pass"] = r.pass;
    emit(c, hex64(m.hash) + "_remark", j.dump(2) + "\n", out);
    return r.pass ? ok : suite_failed;
  }
  SuiteResult r;
  if (suite == "theorem") r = theorem_suite(m, grid, h, o);
  else if (suite == "corollary1") r = corollary1_suite(m, grid, h, o);
  else if (suite == "corollary2") r = corollary2_suite(m, grid, h, o);
  else throw error(errc::invalid_parameter, "unknown suite '" + suite + "'");
  if (c.has("out")) {
    for (const auto& f : report_emit(r, c.str("format", "csv"), c.str("out"), c.metadata())) out << f << "\n";
  } else {
    out << suite_text(r, c);
  }
  return r.pass ? ok : suite_failed;
}

inline int exit_for(errc e) {
  switch (e) {
    case errc::nonconvergent:
    case errc::coverage: return numeric;
    default: return usage;
  }
}

inline void report_error(std::ostream& err, const std::string& code, const std::string& msg, int exit,
                         const std::vector<double>& trace = {}) {
  json j;
  j["error"] = code;
  j["message"] = msg;
  j["exit_code"] = exit;
  if (!trace.empty()) j["trace"] = trace;
  err << j.dump() << "\n";
}

}  // namespace cli

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"renewal_lab: renewal measures of relatively stable random walks"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help");
  std::map<std::string, std::string> flags;
  std::string config_path;
  const std::vector<std::pair<std::string, std::string>> flag_help{
      {"family", "distribution family"},
      {"p", "two_sided_log weight"},
      {"delta", "c1/c2 exponent"},
      {"support_floor", "lower end of the tail domain"},
      {"h", "window length"},
      {"xmax", "largest x"},
      {"xmin", "smallest x"},
      {"grid", "comma separated x or theta values"},
      {"tol", "relative tolerance"},
      {"seed", "random seed"},
      {"engine", "convolution, montecarlo or fourier"},
      {"jobs", "worker threads"},
      {"out", "output directory"},
      {"format", "csv or json"},
      {"suite", "theorem, corollary1, corollary2, baseline or remark"},
      {"walks", "Monte Carlo walks"},
      {"horizon", "Monte Carlo steps per walk"},
      {"a", "smoothing kernel half width"},
      {"theta", "smoothing frequency"},
      {"mode", "full, cosine or sine"},
      {"eps_stop", "convolution stopping threshold"}};
  std::map<std::string, CLI::App*> subs;
  const std::pair<const char*, const char*> commands[] = {
      {"classify", "check (Ha), (Hb), transience and kappa"},
      {"functionals", "tail functionals ell, A, m, r+ and r- on a grid"},
      {"charfn", "1 - phi, C, S and J on a theta grid"},
      {"green", "renewal measure windows by convolution, Monte Carlo or smoothing"},
      {"verify", "measured vs predicted comparison suites"}};
  for (const auto& [name, what] : commands) {
    auto* s = app.add_subcommand(name, what);
    s->set_help_flag("--help", "print help");
    s->add_option("--config", config_path, "key = value file; flags override it");
    for (const auto& [k, h] : flag_help) s->add_option("--" + k, flags[k], h);
    subs[name] = s;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what(), usage);
    return usage;
  }
  RunConfig c;
  for (const auto& [name, s] : subs)
    if (s->parsed()) c.subcommand = name;
  try {
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw error(errc::io, "cannot read config " + config_path);
      c.kv = parse_key_values(f);
    }
    const auto* s = subs.at(c.subcommand);
    for (const auto& [k, v] : flags)
      if (s->get_option("--" + k)->count() > 0) c.kv[k] = v;
    validate(c);
    if (c.subcommand == "classify") return cmd_classify(c, out);
    if (c.subcommand == "functionals") return cmd_functionals(c, out);
    if (c.subcommand == "charfn") return cmd_charfn(c, out);
    if (c.subcommand == "green") return cmd_green(c, out);
    return cmd_verify(c, out);
  } catch (const error& e) {
    const int code = exit_for(e.code());
    report_error(err, errc_name(e.code()), e.what(), code, e.trace());
    return code;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what(), numeric);
    return numeric;
  }
}

}  // namespace renewal_lab
