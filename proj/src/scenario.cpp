#include "singmix/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "singmix/dissipativity.hpp"
#include "singmix/error.hpp"
#include "singmix/suspension.hpp"

namespace singmix {

namespace {

using json = nlohmann::json;

[[noreturn]] void usage(const std::string& what) { throw Error(ErrorCode::UsageError, what); }

bool same_kind(const json& d, const json& v) {
  if (d.is_null()) return true;
  if (d.is_number()) return v.is_number();
  if (d.is_boolean()) return v.is_boolean();
  if (d.is_string()) return v.is_string();
  if (d.is_array()) return v.is_array();
  if (d.is_object()) return v.is_object();
  return false;
}

// User values over defaults; objects recurse unless their path is opaque.
json overlay(const json& defaults, const json& user, const std::string& path, const std::set<std::string>& opaque) {
  if (!user.is_object()) usage((path.empty() ? std::string("config") : path) + " must be an object");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) usage("unknown key '" + key + "'");
    const json& d = defaults[it.key()];
    if (!same_kind(d, *it)) usage("wrong type for '" + key + "'");
    if (d.is_object() && !opaque.contains(key)) {
      out[it.key()] = overlay(d, *it, key, opaque);
    } else {
      out[it.key()] = *it;
    }
  }
  return out;
}

// String member of a user sub-object, falling back to `fallback`.
std::string peek(const json& user, const std::string& section, const std::string& key, const std::string& fallback) {
  const json* s = &user;
  if (!section.empty()) {
    if (!user.contains(section) || !user[section].is_object()) return fallback;
    s = &user[section];
  }
  if (s->contains(key) && (*s)[key].is_string()) return (*s)[key].get<std::string>();
  return fallback;
}

double num(const json& j, const char* key) { return j.at(key).get<double>(); }

std::size_t count(const json& j, const char* key, std::size_t min = 1) {
  const double v = j.at(key).get<double>();
  if (!(v >= static_cast<double>(min)) || v != std::floor(v) || v > 1e15) {
    usage(std::string("'") + key + "' must be an integer >= " + std::to_string(min));
  }
  return static_cast<std::size_t>(v);
}

Vec vec(const json& j, const char* key, int dim) {
  const json& a = j.at(key);
  if (!a.is_array() || static_cast<int>(a.size()) != dim) usage(std::string("'") + key + "' needs " + std::to_string(dim) + " numbers");
  Vec v(dim);
  for (int i = 0; i < dim; ++i) {
    if (!a[i].is_number()) usage(std::string("'") + key + "' needs numbers");
    v[i] = a[i].get<double>();
  }
  return v;
}

std::vector<double> t_grid(const json& c) {
  const double step = num(c, "t_step"), t_max = num(c, "t_max");
  if (!(step > 0.0) || !(t_max >= 0.0)) usage("t_step must be positive and t_max non-negative");
  std::vector<double> g;
  for (long i = 0; step * static_cast<double>(i) <= t_max * (1 + 1e-12); ++i) g.push_back(step * static_cast<double>(i));
  return g;
}

json fit_json(const ExpFit& f) {
  return {{"c", f.rate}, {"C", f.prefactor}, {"window", {f.t_lo, f.t_hi}}, {"r2", f.r2}, {"accepted", f.accepted},
          {"points", f.points}};
}

std::string verdict(bool ok) { return ok ? "pass" : "fail"; }

// ---- shared config blocks

json map_defaults() { return {{"family", "doubling"}, {"params", json::object()}}; }

json induction_defaults(const std::string& family) {
  if (family == "doubling") {
    return {{"base_point", 0.5}, {"base_radius", 0.5}, {"margin", 0.0}, {"return_cap", 40}, {"sigma", 0.75},
            {"b", 0.25}, {"delta1", 0.1}, {"coverage_floor", 0.99}};
  }
  const InductionOptions o;
  return {{"base_point", nullptr}, {"base_radius", o.base_radius}, {"margin", o.margin}, {"return_cap", o.return_cap},
          {"sigma", o.sigma}, {"b", o.b}, {"delta1", o.delta1}, {"coverage_floor", o.coverage_floor}};
}

json roof_defaults() {
  return {{"kind", "square"}, {"amplitude", 0.1}, {"g1", 0.5}, {"g2", 1.0}, {"lambda1", 1.0}};
}

json transfer_defaults() {
  const TransferOptions o;
  return {{"nodes", o.nodes}, {"max_branches", o.max_branches}, {"truncation_tolerance", o.truncation_tolerance}};
}

json model_defaults() {
  const GeometricLorenzModel m;
  return {{"lambda1", m.lambda1}, {"lambda2", m.lambda2}, {"lambda3", m.lambda3}, {"c", m.c},
          {"kappa", m.kappa},     {"nu", m.nu},           {"g1", m.g1},           {"g2", m.g2},
          {"gamma_radius", m.gamma_radius}};
}

json field_default() { return {{"name", "lorenz-classical"}}; }

// map, induction and roof
json base_defaults(const json& user) {
  const std::string family = peek(user, "map", "family", "doubling");
  return {{"map", map_defaults()}, {"induction", induction_defaults(family)}, {"roof", roof_defaults()}};
}

PiecewiseExpandingMap make_map(const json& m) {
  std::map<std::string, double> params;
  for (const auto& [k, v] : m.at("params").items()) {
    if (!v.is_number()) usage("map parameter '" + k + "' must be a number");
    params[k] = v.get<double>();
  }
  try {
    return map_from_config(m.at("family").get<std::string>(), params);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidInput) usage(e.what());
    throw;
  }
}

InducedMarkovMap make_induced(const PiecewiseExpandingMap& f, const json& c) {
  InductionOptions o;
  const json& bp = c.at("base_point");
  if (!bp.is_null() && !bp.is_number()) usage("'induction.base_point' must be a number or null");
  o.base_point = bp.is_null() ? NAN : bp.get<double>();
  o.base_radius = num(c, "base_radius");
  o.margin = num(c, "margin");
  o.return_cap = static_cast<int>(count(c, "return_cap"));
  o.sigma = num(c, "sigma");
  o.b = num(c, "b");
  o.delta1 = num(c, "delta1");
  o.coverage_floor = num(c, "coverage_floor");
  return build_induced_map(f, o);
}

RoofFunction make_roof(const json& c, const PiecewiseExpandingMap& f) {
  const std::string kind = c.at("kind").get<std::string>();
  if (kind == "square") return {[](double x) { return x * x; }, [](double x) { return 2 * x; }};
  if (kind == "unit") return unit_roof();
  if (kind == "model") return model_roof(num(c, "g1"), num(c, "g2"), num(c, "lambda1"));
  if (kind == "coboundary") {
    // 1 + phi - phi o f with phi = a sin(2 pi x)
    const double a = num(c, "amplitude"), w = 2 * std::numbers::pi;
    return {[=](double x) { return 1.0 + a * std::sin(w * x) - a * std::sin(w * f(x)); },
            [=](double x) { return a * w * std::cos(w * x) - a * w * std::cos(w * f(x)) * f.derivative(x); }};
  }
  usage("unknown roof kind '" + kind + "'");
}

TransferOptions make_transfer(const json& c) {
  TransferOptions o;
  o.nodes = count(c, "nodes", 3);
  o.max_branches = count(c, "max_branches");
  o.truncation_tolerance = num(c, "truncation_tolerance");
  return o;
}

GeometricLorenzModel make_model(const json& c) {
  GeometricLorenzModel m;
  m.lambda1 = num(c, "lambda1");
  m.lambda2 = num(c, "lambda2");
  m.lambda3 = num(c, "lambda3");
  m.c = num(c, "c");
  m.kappa = num(c, "kappa");
  m.nu = num(c, "nu");
  m.g1 = num(c, "g1");
  m.g2 = num(c, "g2");
  m.gamma_radius = num(c, "gamma_radius");
  return m;
}

VectorField make_field(const json& c) {
  try {
    return field_from_json_text(c.at("field").dump());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidInput || e.code() == ErrorCode::InvalidField) usage(e.what());
    throw;
  }
}

FlowObservable flow_observable(const std::string& name, int dim) {
  if (name == "one") return [](const Vec&) { return 1.0; };
  static const std::map<std::string, int> coord{{"x", 0}, {"y", 1}, {"z", 2}};
  const auto it = coord.find(name);
  if (it == coord.end() || it->second >= dim) usage("unknown flow observable '" + name + "'");
  const int i = it->second;
  return [i](const Vec& v) { return v[i]; };
}

SuspensionObservable suspension_observable(const std::string& name, const SuspensionSemiflow& s) {
  // sin(pi u / r(x)) vanishes at both ends of a fiber, so it is continuous on the suspension
  if (name == "arch") return [&s](const SuspensionPoint& p) { return std::sin(std::numbers::pi * p.u / s.roof(p.x)); };
  if (name == "one") return [](const SuspensionPoint&) { return 1.0; };
  if (name == "x2") return [](const SuspensionPoint& p) { return p.x * p.x; };
  usage("unknown suspension observable '" + name + "'");
}

// ---- suspension setups

json suspension_defaults(const json& user) {
  json d = base_defaults(user);
  d["fiber"] = {{"kind", "none"}, {"gamma", 0.5}};
  d["transfer"] = transfer_defaults();
  d["samples"] = 1'000'000;
  d["batches"] = 64;
  d["min_r2"] = 0.9;
  d["burn_in"] = 60;
  return d;
}

json flow_defaults() {
  const FlowOptions o;
  return {{"field", field_default()}, {"x0", {1.0, 1.0, 20.0}}, {"dt", o.dt},     {"transient", o.transient},
          {"tol", o.tol},           {"batches", o.batches},     {"fit_from", o.fit_from}, {"min_r2", o.min_r2}};
}

FlowOptions make_flow_options(const json& c) {
  FlowOptions o;
  o.dt = num(c, "dt");
  o.transient = num(c, "transient");
  o.tol = num(c, "tol");
  o.batches = count(c, "batches", 2);
  o.fit_from = num(c, "fit_from");
  o.min_r2 = num(c, "min_r2");
  return o;
}

// Everything a suspension estimator needs, built once with stable addresses.
struct SuspensionSetup {
  PiecewiseExpandingMap f;
  InducedMarkovMap F;
  SuspensionSemiflow flow;
  Eigenpair density;
  InvariantSampler sampler;
  MonteCarloOptions mc;
  std::vector<std::string> warnings;

  static FiberMap fiber(const json& c, const PiecewiseExpandingMap& f) {
    const std::string kind = c.at("kind").get<std::string>();
    if (kind == "none") return FiberMap::none();
    if (kind == "affine") return FiberMap::affine(f, num(c, "gamma"));
    usage("unknown fiber kind '" + kind + "'");
  }

  SuspensionSetup(const json& c, std::uint64_t seed)
      : f(make_map(c.at("map"))),
        F(make_induced(f, c.at("induction"))),
        flow(F, make_roof(c.at("roof"), f), fiber(c.at("fiber"), f)),
        density(leading_eigenpair(TransferOperator(F, unit_roof(), 0.0, make_transfer(c.at("transfer"))))),
        sampler(flow, density, static_cast<int>(count(c, "burn_in", 0))) {
    mc.samples = count(c, "samples", 2);
    mc.batches = count(c, "batches", 2);
    mc.seed = seed;
    mc.min_r2 = num(c, "min_r2");
    warnings = sampler.warnings();
    warnings.insert(warnings.end(), density.warnings.begin(), density.warnings.end());
  }
};

json series_results(const CorrelationSeries& s) {
  return {{"no_signal", s.no_signal}, {"noise_bound", s.noise_bound}, {"nondecaying", s.nondecaying},
          {"period", s.period},       {"samples", s.samples},         {"dropped", s.dropped}};
}

std::string expectation(const json& c, std::initializer_list<const char*> allowed) {
  const std::string e = c.at("expect").get<std::string>();
  for (const char* a : allowed) {
    if (e == a) return e;
  }
  usage("unknown expectation '" + e + "'");
}

// ---- scenarios

struct Context {
  json config;
  std::uint64_t seed = 0;
  ReportBundle* out = nullptr;

  json& summary() { return out->summary; }
  void table(const std::string& name, std::string csv) { out->tables.emplace_back(name, std::move(csv)); }
};

struct Scenario {
  bool stochastic = false;
  std::function<json(const json&)> defaults;
  std::set<std::string> opaque;
  std::function<void(Context&)> run;
};

json eigen_json(const std::vector<std::complex<double>>& ev) {
  json a = json::array();
  for (const auto& z : ev) a.push_back({z.real(), z.imag()});
  return a;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void lorenz_dissipativity(Context& ctx) {
  const json& c = ctx.config;
  const VectorField vf = make_field(c);
  const int d = vf.dimension();
  const Box box{vec(c.at("search_box"), "lo", d), vec(c.at("search_box"), "hi", d)};
  const auto search = classify_equilibria(vf, box, static_cast<int>(count(c, "newton_seeds")));
  const auto samples = attractor_samples(vf, vec(c, "x0", d), count(c, "samples"), num(c, "spacing"),
                                         num(c, "transient"), num(c, "tol"));
  DissipativityOptions o;
  o.ell = num(c, "ell");
  o.inflation = num(c, "inflation");
  const auto rep = strong_dissipativity_report(vf, search.equilibria, num(c, "q"), samples, o);

  json eqs = json::array();
  for (const auto& e : search.equilibria) {
    eqs.push_back({{"location", vec_json(e.location)},
                   {"eigenvalues", eigen_json(e.eigenvalues)},
                   {"class", std::string(to_string(e.classification))},
                   {"stable_dim", e.stable_dim}});
  }
  json margins = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "equilibrium,margin,base,top_real\n";
  for (std::size_t i = 0; i < rep.condition_a.size(); ++i) {
    const auto& m = rep.condition_a[i];
    margins.push_back({{"location", vec_json(m.location)}, {"margin", m.margin}, {"base", m.base}, {"top_real", m.top_real}});
    csv << i << ',' << m.margin << ',' << m.base << ',' << m.top_real << '\n';
  }
  ctx.table("condition_a.csv", csv.str());
  auto& s = ctx.summary();
  s["results"] = {{"equilibria", eqs},
                  {"condition_a", margins},
                  {"condition_a_vacuous", rep.condition_a_vacuous},
                  {"condition_b", rep.condition_b},
                  {"condition_b_sampled", rep.condition_b_sampled},
                  {"sample_count", rep.sample_count},
                  {"q_max_a", rep.q_max_a},
                  {"ell", rep.ell},
                  {"ell_basis", rep.ell_basis},
                  {"stable_dim", rep.stable_dim}};
  s["verdict"] = verdict(rep.pass);
}

json quotient_defaults(const json& user) {
  const std::string source = peek(user, "", "source", "model");
  json d = {{"source", source}};
  if (source == "model") {
    d["model"] = model_defaults();
    d["integrated"] = false;
    d["grid"] = {{"lo", -1.0}, {"hi", 1.0}, {"centers", {0.0}}, {"uniform_points", 201}, {"levels", 30}};
  } else if (source == "lorenz") {
    d["field"] = field_default();
    d["grid"] = {{"lo", -10.0}, {"hi", 10.0}, {"centers", {0.0}}, {"uniform_points", 41}, {"levels", 4}};
  } else if (source == "map") {
    d["map"] = map_defaults();
    // null centers: the interior branch endpoints of the map
    d["grid"] = {{"lo", nullptr}, {"hi", nullptr}, {"centers", nullptr}, {"uniform_points", 201}, {"levels", 20}};
  } else {
    usage("unknown quotient source '" + source + "'");
  }
  return d;
}

void quotient_map(Context& ctx) {
  json& c = ctx.config;
  const std::string source = c.at("source").get<std::string>();
  json& g = c["grid"];
  std::optional<VectorField> vf;
  std::optional<PiecewiseExpandingMap> f;
  QuotientFn fn;
  if (source == "model") {
    fn = model_quotient(make_model(c.at("model")), c.at("integrated").get<bool>());
  } else if (source == "lorenz") {
    vf.emplace(make_field(c));
    auto sq = std::make_shared<SectionQuotient>(lorenz_section_quotient(*vf));
    fn = [sq](double u) { return (*sq)(u); };
  } else {
    f.emplace(make_map(c.at("map")));
    if (g["lo"].is_null()) g["lo"] = f->lo();
    // the right end of a half-open domain is excluded
    if (g["hi"].is_null()) g["hi"] = f->hi() - 1e-9;
    if (g["centers"].is_null()) {
      std::vector<double> ends;
      for (std::size_t i = 0; i + 1 < f->branches().size(); ++i) ends.push_back(f->branches()[i].hi);
      g["centers"] = ends;
    }
    fn = map_quotient(*f);
  }
  std::vector<double> centers;
  for (const auto& v : g.at("centers")) {
    if (!v.is_number()) usage("'grid.centers' must hold numbers");
    centers.push_back(v.get<double>());
  }
  const auto grid = dyadic_grid(num(g, "lo"), num(g, "hi"), centers, static_cast<int>(count(g, "uniform_points", 2)),
                                static_cast<int>(count(g, "levels", 0)));
  const auto q = quotient_map_extract(fn, grid);
  const auto rep = nondegeneracy_and_growth_check(q);
  ctx.table("quotient.csv", q.to_csv());
  json sides = json::array();
  for (const auto& sf : rep.sides) {
    sides.push_back({{"location", sf.location}, {"side", sf.side}, {"slope", sf.slope}, {"r2", sf.r2},
                     {"points", sf.points}, {"singular", sf.singular}});
  }
  auto& s = ctx.summary();
  s["results"] = {{"grid_points", grid.size()},
                  {"critical", q.critical},
                  {"failed", q.failed},
                  {"sides", sides},
                  {"singular_set", rep.singular_set},
                  {"c1", {{"q", rep.c1_q}, {"C", rep.c1_constant}, {"pass", rep.c1_pass}}},
                  {"c2", {{"eta", rep.c2_eta}, {"q", rep.c2_q}, {"C", rep.c2_constant}, {"pass", rep.c2_pass}}},
                  {"tau", {{"available", rep.tau_available},
                           {"log_slope", rep.tau_log_slope},
                           {"log_r2", rep.tau_log_r2},
                           {"derivative_bound", rep.tau_derivative_bound}}},
                  {"expansion", {{"min", rep.min_expansion},
                                 {"floor", rep.expansion_floor},
                                 {"pass", rep.expansion_pass},
                                 {"exceeds_two", rep.exceeds_two}}}};
  s["verdict"] = verdict(rep.c1_pass && rep.c2_pass && rep.expansion_pass);
}

json induce_defaults(const json& user) {
  json d = base_defaults(user);
  const RoofOptions r;
  d["roof_checks"] = {{"eps", r.eps}, {"tail_tolerance", r.tail_tolerance}, {"threshold_step", r.threshold_step},
                      {"cells", r.cells}};
  return d;
}

// An exponential tail fit, or a tail that has already vanished.
bool tail_ok(const ExpFit& fit, const std::vector<double>& tail) {
  return (fit.accepted && fit.rate > 0.0) || (!tail.empty() && tail.back() <= 1e-15);
}

void induce(Context& ctx) {
  const json& c = ctx.config;
  const auto f = make_map(c.at("map"));
  const auto F = make_induced(f, c.at("induction"));
  RoofOptions ro;
  const json& rc = c.at("roof_checks");
  ro.eps = rc.at("eps").get<std::vector<double>>();
  ro.tail_tolerance = num(rc, "tail_tolerance");
  ro.threshold_step = num(rc, "threshold_step");
  ro.cells = static_cast<int>(count(rc, "cells"));
  const auto res = induced_roof_and_checks(F, make_roof(c.at("roof"), f), ro);

  std::ostringstream br;
  br.precision(17);
  br << "lo,hi,R,min_derivative,max_derivative,distortion,hyperbolic\n";
  for (const auto& b : F.branches()) {
    br << b.lo << ',' << b.hi << ',' << b.R << ',' << b.min_derivative << ',' << b.max_derivative << ','
       << b.distortion << ',' << (b.hyperbolic ? 1 : 0) << '\n';
  }
  ctx.table("branches.csv", br.str());
  std::ostringstream tl;
  tl.precision(17);
  tl << "n,measure\n";
  for (std::size_t n = 0; n < F.tail().size(); ++n) tl << n << ',' << F.tail()[n] << '\n';
  ctx.table("return_tail.csv", tl.str());
  ctx.table("roof_tail.csv", res.roof.histogram_csv());

  json induced = F.to_json();
  induced.erase("branches");
  induced.erase("tail");
  induced["branch_count"] = F.branches().size();
  std::vector<int> convergent(res.checks.convergent.begin(), res.checks.convergent.end());
  const auto& ch = res.checks;
  auto& s = ctx.summary();
  s["results"] = {{"induced", induced},
                  {"roof", {{"inf_tau", res.roof.inf_tau},
                            {"eps", ch.eps},
                            {"tail_sum", ch.tail_sum},
                            {"convergent", convergent},
                            {"largest_convergent_eps", ch.largest_convergent_eps},
                            {"max_roof_derivative", ch.max_roof_derivative},
                            {"roof_bound_constant", ch.roof_bound_constant},
                            {"roof_bound_growth", ch.roof_bound_growth}}}};
  s["fits"] = {{"return_tail", fit_json(ch.return_tail)}, {"roof_tail", fit_json(ch.roof_tail)}};
  const bool ok = F.coverage() >= num(c.at("induction"), "coverage_floor") &&
                  tail_ok(ch.return_tail, F.tail()) && tail_ok(ch.roof_tail, res.roof.measure) &&
                  ch.largest_convergent_eps > 0.0;
  s["verdict"] = verdict(ok);
}

json uni_defaults(const json& user) {
  json d = base_defaults(user);
  const UniOptions o;
  d["mode"] = "derivative";
  d["n0"] = o.n0;
  d["threshold"] = o.threshold;
  d["periodic_tolerance"] = o.periodic_tolerance;
  d["grid"] = o.grid;
  d["max_period"] = o.max_period;
  d["alphabet"] = o.alphabet;
  d["word1"] = json::array();
  d["word2"] = json::array();
  return d;
}

void uni_check(Context& ctx) {
  const json& c = ctx.config;
  const auto f = make_map(c.at("map"));
  const auto F = make_induced(f, c.at("induction"));
  const RoofFunction tau = make_roof(c.at("roof"), f);
  UniOptions o;
  const std::string mode = c.at("mode").get<std::string>();
  if (mode == "derivative") o.mode = UniMode::Derivative;
  else if (mode == "periodic") o.mode = UniMode::Periodic;
  else usage("unknown uni mode '" + mode + "'");
  o.n0 = static_cast<int>(count(c, "n0"));
  o.threshold = num(c, "threshold");
  o.periodic_tolerance = num(c, "periodic_tolerance");
  o.grid = static_cast<int>(count(c, "grid", 2));
  o.max_period = static_cast<int>(count(c, "max_period"));
  o.alphabet = static_cast<int>(count(c, "alphabet"));
  o.word1 = c.at("word1").get<std::vector<int>>();
  o.word2 = c.at("word2").get<std::vector<int>>();
  const auto rep = uni_test(F, [&](double x) { return induced_roof(F, tau, x); }, o);

  auto& s = ctx.summary();
  s["mode"] = mode;
  if (o.mode == UniMode::Derivative) {
    s["D"] = rep.statistic;
  } else {
    s["S1"] = rep.sum1;
    s["S2"] = rep.sum2;
  }
  s["results"] = {{"holds", rep.holds},
                  {"witness_found", rep.witness_found},
                  {"statistic", rep.statistic},
                  {"threshold", rep.threshold},
                  {"n0", rep.n0},
                  {"word1", rep.word1},
                  {"word2", rep.word2},
                  {"orbit1", rep.orbit1},
                  {"orbit2", rep.orbit2},
                  {"level_statistic", rep.level_statistic},
                  {"level_decay", rep.level_decay},
                  {"pairs_tested", rep.pairs_tested},
                  {"rho", F.rho()}};
  s["verdict"] = rep.holds ? "pass" : (rep.witness_found ? "fail" : "inconclusive");
}

json spectrum_defaults(const json& user) {
  json d = base_defaults(user);
  d["transfer"] = transfer_defaults();
  d["sigma"] = 0.0;
  d["b"] = 0.0;
  d["alpha"] = 1.0;
  d["ensemble"] = 50;
  d["n_max"] = 12;
  d["ulam_cells"] = 0;
  return d;
}

std::string density_csv(const ObservableGrid& g) {
  std::ostringstream o;
  o.precision(17);
  o << "x,density\n";
  for (std::size_t i = 0; i < g.size(); ++i) o << g.node(i) << ',' << g.values[i].real() << '\n';
  return o.str();
}

void spectrum(Context& ctx) {
  const json& c = ctx.config;
  const auto f = make_map(c.at("map"));
  const auto F = make_induced(f, c.at("induction"));
  const RoofFunction tau = make_roof(c.at("roof"), f);
  const TransferOptions to = make_transfer(c.at("transfer"));
  const double sigma = num(c, "sigma"), b = num(c, "b");
  const TransferOperator Ps(F, tau, sigma, to);
  const auto e = leading_eigenpair(Ps);
  const TransferOperator P(F, tau, cplx(sigma, b), to);
  const NormalizedOperator L(P, e);
  std::vector<ObservableGrid> ens;
  for (const auto& fn : observable_ensemble(F.delta_lo(), F.delta_hi(), count(c, "ensemble"), ctx.seed)) {
    ens.push_back(P.grid(fn));
  }
  auto& s = ctx.summary();
  bool ok = e.converged;
  std::optional<LYFit> ly;
  try {
    ly = lasota_yorke_fit(L, ens, static_cast<int>(count(c, "n_max")), num(c, "alpha"));
    ok = ok && ly->violations == 0 && ly->rho < 1.0;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::LYFailed) throw;
    ok = false;
    s["ly_error"] = err.what();
  }
  json report = spectral_report(P, e, ly ? &*ly : nullptr, nullptr);
  if (ly) report["ly"] = {{"C", ly->C}, {"violations", ly->violations}, {"samples", ly->samples}, {"n_max", ly->n_max}};
  report["eigen"] = {{"converged", e.converged}, {"iterations", e.iterations}, {"residual", e.residual}};
  report["branches_used"] = P.branches_used();
  const std::size_t cells = count(c, "ulam_cells", 0);
  if (cells > 0) {
    // L1 distance between the Ulam histogram and the collocation density
    const auto u = ulam_density(F, cells);
    const double w = (F.delta_hi() - F.delta_lo()) / static_cast<double>(cells);
    double l1 = 0.0;
    for (std::size_t k = 0; k < cells; ++k) {
      const double x = F.delta_lo() + (static_cast<double>(k) + 0.5) * w;
      l1 += std::abs(u[k] - e.f(x).real()) * w;
    }
    report["ulam_l1"] = l1;
  }
  s["results"] = report;
  ctx.table("density.csv", density_csv(e.f));
  s["verdict"] = verdict(ok);
}

json contraction_defaults(const json& user) {
  json d = base_defaults(user);
  d["transfer"] = transfer_defaults();
  d["b"] = 10.0;
  d["alpha"] = 1.0;
  d["ensemble"] = 20;
  d["n_max"] = 40;
  d["A"] = 5.0;
  d["expect"] = "decay";
  return d;
}

void contraction(Context& ctx) {
  const json& c = ctx.config;
  const std::string expect = expectation(c, {"decay", "no-decay"});
  const auto f = make_map(c.at("map"));
  const auto F = make_induced(f, c.at("induction"));
  const RoofFunction tau = make_roof(c.at("roof"), f);
  const TransferOptions to = make_transfer(c.at("transfer"));
  const TransferOperator P0(F, tau, 0.0, to);
  const auto e0 = leading_eigenpair(P0);
  const TransferOperator P(F, tau, cplx(0.0, num(c, "b")), to);
  const NormalizedOperator L(P, e0);
  std::vector<ObservableGrid> ens;
  for (const auto& fn : observable_ensemble(F.delta_lo(), F.delta_hi(), count(c, "ensemble"), ctx.seed)) {
    ens.push_back(P.grid(fn));
  }
  const auto cc = contraction_probe(L, ens, static_cast<int>(count(c, "n_max")), num(c, "alpha"), num(c, "A"));
  std::ostringstream o;
  o.precision(17);
  o << "n,norm\n";
  for (std::size_t n = 0; n < cc.norm.size(); ++n) o << n << ',' << cc.norm[n] << '\n';
  ctx.table("contraction.csv", o.str());
  auto& s = ctx.summary();
  s["results"] = spectral_report(P, e0, nullptr, &cc);
  s["results"]["decays"] = cc.decays;
  s["results"]["curve_min"] = *std::min_element(cc.norm.begin(), cc.norm.end());
  s["results"]["curve_max"] = *std::max_element(cc.norm.begin(), cc.norm.end());
  s["fits"] = {{"contraction", {{"gamma", cc.gamma}, {"r2", cc.r2}, {"window", {cc.window_lo, cc.window_hi}}}}};
  s["verdict"] = verdict(cc.decays == (expect == "decay"));
}

json mixing_defaults(const json& user) {
  const std::string system = peek(user, "", "system", "suspension");
  json d;
  if (system == "suspension") {
    d = suspension_defaults(user);
    d["phi"] = "arch";
    d["psi"] = "arch";
    d["t_step"] = 0.25;
    d["t_max"] = 6.0;
  } else if (system == "flow") {
    d = flow_defaults();
    d["phi"] = "x";
    d["psi"] = "x";
    d["t_max"] = 8.0;
    d["orbit_length"] = 2e5;
  } else {
    usage("unknown system '" + system + "'");
  }
  d["system"] = system;
  d["expect"] = "decay";
  return d;
}

void finish_series(Context& ctx, const CorrelationSeries& series, bool ok) {
  ctx.table("series.csv", series.to_csv());
  auto& s = ctx.summary();
  s["results"] = series_results(series);
  s["fits"] = {{"correlation", series.fit_json()}};
  s["verdict"] = verdict(ok);
}

bool decays(const CorrelationSeries& s) { return s.fit.accepted && s.fit.rate > 0.0; }

void mixing_fit(Context& ctx) {
  const json& c = ctx.config;
  const std::string expect = expectation(c, {"decay", "nondecaying"});
  CorrelationSeries series;
  std::vector<std::string> warnings;
  if (c.at("system") == "suspension") {
    const SuspensionSetup su(c, ctx.seed);
    warnings = su.warnings;
    series = correlation_estimator(su.sampler, suspension_observable(c.at("phi"), su.flow),
                                   suspension_observable(c.at("psi"), su.flow), t_grid(c), su.mc);
  } else {
    const VectorField vf = make_field(c);
    const int d = vf.dimension();
    series = flow_correlation(vf, flow_observable(c.at("phi"), d), flow_observable(c.at("psi"), d), num(c, "t_max"),
                              num(c, "orbit_length"), vec(c, "x0", d), make_flow_options(c));
  }
  finish_series(ctx, series, expect == "decay" ? decays(series) : series.nondecaying);
  if (!warnings.empty()) ctx.summary()["warnings"] = warnings;
}

json equilibrium_defaults(const json& user) {
  const std::string system = peek(user, "", "system", "suspension");
  json d;
  if (system == "suspension") {
    d = suspension_defaults(user);
    d["phi"] = "arch";
    d["psi"] = "arch";
  } else if (system == "flow") {
    d = flow_defaults();
    d["phi"] = "z";
    d["psi"] = "one";
    d["samples"] = 400;
    d["mu_orbit_length"] = 2e4;
  } else {
    usage("unknown system '" + system + "'");
  }
  d["system"] = system;
  d["t_step"] = 0.25;
  d["t_max"] = 6.0;
  return d;
}

void equilibrium(Context& ctx) {
  const json& c = ctx.config;
  EquilibriumSeries e;
  if (c.at("system") == "suspension") {
    const SuspensionSetup su(c, ctx.seed);
    e = equilibrium_convergence(su.sampler, suspension_observable(c.at("phi"), su.flow),
                                suspension_observable(c.at("psi"), su.flow), t_grid(c), su.mc);
  } else {
    const VectorField vf = make_field(c);
    const int d = vf.dimension();
    e = flow_equilibrium_convergence(vf, flow_observable(c.at("phi"), d), flow_observable(c.at("psi"), d), t_grid(c),
                                     count(c, "samples", 2), num(c, "mu_orbit_length"), vec(c, "x0", d), ctx.seed,
                                     make_flow_options(c));
  }
  finish_series(ctx, e.series, decays(e.series));
  std::ostringstream o;
  o.precision(17);
  o << "t,leb_phi\n";
  for (std::size_t i = 0; i < e.leb_phi.size(); ++i) o << e.series.t[i] << ',' << e.leb_phi[i] << '\n';
  ctx.table("leb_phi.csv", o.str());
  auto& r = ctx.summary()["results"];
  r["leb_psi"] = e.leb_psi;
  r["mu_phi"] = e.mu_phi;
  if (c.at("psi") == "one") {
    // with psi = 1 the estimator must reduce to the plain Lebesgue average minus mu(phi)
    bool exact = true;
    for (std::size_t i = 0; i < e.series.t.size(); ++i) exact = exact && e.series.value[i] == e.leb_phi[i] - e.mu_phi;
    r["psi_one_reduction_exact"] = exact;
  }
}

json clt_defaults(const json&) {
  json d = flow_defaults();
  d["tol"] = 1e-6;
  d.erase("dt");
  d.erase("fit_from");
  d.erase("min_r2");
  d.erase("batches");
  d["phi"] = "x";
  d["n_blocks"] = 2000;
  d["block_len"] = 200;
  d["ks_max"] = 0.05;
  d["variance_tolerance"] = 0.1;
  return d;
}

void clt(Context& ctx) {
  const json& c = ctx.config;
  const VectorField vf = make_field(c);
  const int d = vf.dimension();
  FlowOptions o;
  o.transient = num(c, "transient");
  o.tol = num(c, "tol");
  const auto r = clt_check(vf, flow_observable(c.at("phi"), d), count(c, "n_blocks", 2), count(c, "block_len"),
                           vec(c, "x0", d), o);
  auto& s = ctx.summary();
  s["results"] = r.to_json();
  s["verdict"] = verdict(!r.degenerate && r.ks < num(c, "ks_max") && r.variance_change < num(c, "variance_tolerance"));
}

json visits_defaults(const json& user) {
  json d = suspension_defaults(user);
  d["samples"] = 200'000;
  d["gamma"] = 0.5;
  d["alpha"] = 0.8;
  d["t_step"] = 0.25;
  d["t_max"] = 5.0;
  return d;
}

void visits(Context& ctx) {
  const json& c = ctx.config;
  const SuspensionSetup su(c, ctx.seed);
  const double gamma = num(c, "gamma"), alpha = num(c, "alpha");
  const auto series = visits_statistic(su.sampler, gamma, alpha, t_grid(c), su.mc);
  const bool unit = c.at("roof").at("kind") == "unit";
  bool ok = decays(series);
  std::optional<double> worst;
  if (unit) {
    // r = 1 has a closed form; every grid value must sit within 2 SE of it
    ok = true;
    double w = 0.0;
    for (std::size_t i = 0; i < series.t.size(); ++i) {
      const double gap = std::abs(series.value[i] - visits_unit_roof(gamma, alpha, series.t[i]));
      w = std::max(w, gap);
      ok = ok && gap <= 2.0 * series.se[i] + 1e-12;
    }
    worst = w;
  }
  finish_series(ctx, series, ok);
  if (worst) ctx.summary()["results"]["closed_form_max_gap"] = *worst;
}

json semiconjugacy_defaults(const json&) {
  const SemiconjugacyOptions o;
  return {{"model", model_defaults()}, {"return_cap", 16},    {"coverage_floor", 0.5},
          {"alpha", o.alpha},          {"levels", o.levels}, {"pairs", o.pairs}};
}

void semiconjugacy(Context& ctx) {
  const json& c = ctx.config;
  const GeometricLorenzModel m = make_model(c.at("model"));
  InductionOptions io;
  io.return_cap = static_cast<int>(count(c, "return_cap"));
  io.coverage_floor = num(c, "coverage_floor");
  const auto F = build_induced_map(lorenz_like_map(m.c, m.alpha()), io);
  SemiconjugacyOptions o;
  o.alpha = num(c, "alpha");
  o.levels = static_cast<int>(count(c, "levels"));
  o.pairs = count(c, "pairs");
  o.seed = ctx.seed;
  const auto r = semiconjugacy_diagnostic(m, F, o);
  auto& s = ctx.summary();
  s["results"] = r.to_json();
  s["verdict"] = verdict(r.stable && r.max_u_ratio <= r.speed_bound * (1 + 1e-12));
}

const std::map<std::string, Scenario>& registry() {
  static const std::map<std::string, Scenario> r = [] {
    std::map<std::string, Scenario> m;
    m["lorenz-dissipativity"] = {false,
                                 [](const json&) {
                                   return json{{"field", field_default()},
                                               {"q", 1.278},
                                               {"ell", 1.0},
                                               {"inflation", 0.05},
                                               {"samples", 100'000},
                                               {"spacing", 0.05},
                                               {"transient", 100.0},
                                               {"tol", 1e-8},
                                               {"x0", {1.0, 1.0, 1.0}},
                                               {"search_box", {{"lo", {-30.0, -30.0, -10.0}}, {"hi", {30.0, 30.0, 60.0}}}},
                                               {"newton_seeds", 64}};
                                 },
                                 {"field"},
                                 lorenz_dissipativity};
    m["quotient-map"] = {false, quotient_defaults, {"field", "map.params"}, quotient_map};
    m["induce"] = {false, induce_defaults, {"map.params"}, induce};
    m["uni-check"] = {false, uni_defaults, {"map.params"}, uni_check};
    m["spectrum"] = {true, spectrum_defaults, {"map.params"}, spectrum};
    m["contraction"] = {true, contraction_defaults, {"map.params"}, contraction};
    m["mixing-fit"] = {true, mixing_defaults, {"map.params", "field"}, mixing_fit};
    m["equilibrium-convergence"] = {true, equilibrium_defaults, {"map.params", "field"}, equilibrium};
    m["clt"] = {false, clt_defaults, {"field"}, clt};
    m["visits"] = {true, visits_defaults, {"map.params"}, visits};
    m["semiconjugacy"] = {true, semiconjugacy_defaults, {}, semiconjugacy};
    return m;
  }();
  return r;
}

}  // namespace

int ReportBundle::exit_code() const {
  if (!summary.is_object() || !summary.contains("verdict")) return 0;
  return summary["verdict"] == "pass" ? 0 : 2;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : registry()) n.push_back(k);
    return n;
  }();
  return names;
}

ReportBundle run_scenario(const nlohmann::json& config, std::optional<std::uint64_t> seed_override) {
  if (!config.is_object()) usage("config must be a JSON object");
  if (!config.contains("scenario") || !config["scenario"].is_string()) usage("config needs a 'scenario' string");
  const std::string name = config["scenario"].get<std::string>();
  const auto it = registry().find(name);
  if (it == registry().end()) usage("unknown scenario '" + name + "'");
  const Scenario& sc = it->second;

  json user = config;
  user.erase("scenario");
  json seed = user.contains("seed") ? user["seed"] : json(nullptr);
  user.erase("seed");
  user.erase("out");  // consumed by the command line
  if (!seed.is_null() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) usage("'seed' must be a non-negative integer");
  if (seed_override) seed = *seed_override;
  if (sc.stochastic && seed.is_null()) usage("scenario '" + name + "' is stochastic and needs a seed");

  Context ctx;
  ctx.config = overlay(sc.defaults(user), user, "", sc.opaque);
  ctx.seed = seed.is_null() ? 0 : seed.get<std::uint64_t>();
  ReportBundle bundle;
  bundle.summary = {{"scenario", name}, {"seed", seed}, {"version", kSchemaVersion}};
  ctx.out = &bundle;
  sc.run(ctx);
  bundle.summary["config"] = ctx.config;
  return bundle;
}

std::string summary_text(const ReportBundle& bundle) {
  json s = bundle.summary.is_null() ? json::object() : bundle.summary;
  s["version"] = kSchemaVersion;
  return s.dump(2) + "\n";
}

void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& text) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  };
  write("summary.json", summary_text(bundle));
  for (const auto& [name, csv] : bundle.tables) write(name, csv);
}

}  // namespace singmix
