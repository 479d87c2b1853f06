// Full-scale acceptance run: one pass/fail line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "singmix/dissipativity.hpp"
#include "singmix/error.hpp"
#include "singmix/scenario.hpp"
#include "singmix/suspension.hpp"

using namespace singmix;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const InducedMarkovMap& doubling_induced() {
  static const InducedMarkovMap F = [] {
    InductionOptions o;
    o.base_point = 0.5;
    o.base_radius = 0.5;
    o.margin = 0.0;
    o.delta1 = 0.1;
    return build_induced_map(doubling_map(), o);
  }();
  return F;
}

const InducedMarkovMap& model_induced() {
  static const InducedMarkovMap F = build_induced_map(lorenz_like_map());
  return F;
}

RoofFunction square_roof() {
  return {[](double x) { return x * x; }, [](double x) { return 2 * x; }};
}

const Eigenpair& doubling_density() {
  static const Eigenpair e = leading_eigenpair(TransferOperator(doubling_induced(), unit_roof(), 0.0));
  return e;
}

SuspensionObservable arch(const SuspensionSemiflow& s) {
  return [&s](const SuspensionPoint& p) { return std::sin(std::numbers::pi * p.u / s.roof(p.x)); };
}

std::vector<double> grid(double step, double t_max) {
  std::vector<double> g;
  for (int i = 0; step * i <= t_max + 1e-12; ++i) g.push_back(step * i);
  return g;
}

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

std::vector<ObservableGrid> grids(const TransferOperator& op, const std::vector<std::function<cplx(double)>>& fns) {
  std::vector<ObservableGrid> out;
  for (const auto& f : fns) out.push_back(op.grid(f));
  return out;
}

// Closed-form origin eigenvalues of the classical field.
const double kSlow = -8.0 / 3.0;
const double kStable = (-11.0 - std::sqrt(1201.0)) / 2.0;
const double kUnstable = (-11.0 + std::sqrt(1201.0)) / 2.0;

Outcome dissipativity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = run_scenario({{"scenario", "lorenz-dissipativity"}, {"q", 1.278}, {"ell", 1.0}, {"samples", 100'000}});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& r = b.summary["results"];
  double origin = NAN;
  bool all_negative = r["condition_a"].size() == 3;
  for (const auto& m : r["condition_a"]) {
    all_negative = all_negative && m["margin"].get<double>() < 0.0;
    const auto loc = m["location"].get<std::vector<double>>();
    if (std::hypot(loc[0], loc[1], loc[2]) < 1e-8) origin = m["margin"];
  }
  const double closed = kStable - kSlow + 1.278 * kUnstable;
  const double quoted = -20.16 + 1.278 * 11.83;  // two-decimal figures
  const double cond_b = r["condition_b"];
  const std::size_t n = r["sample_count"];
  const bool ok = b.summary["verdict"] == "pass" && all_negative && std::abs(origin - closed) <= 1e-3 &&
                  std::abs(origin - quoted) <= 0.01 && cond_b < 0.0 && n >= 100'000 && secs < 60.0;
  return {ok, fmt("origin margin %.6f (closed form %.6f, quoted %.4f), cond(b) sup %.4f over %zu samples, %.1f s", origin,
                  closed, quoted, cond_b, n, secs)};
}

Outcome classification() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto search = classify_equilibria(lorenz_classical(), Box{v3(-30, -30, -10), v3(30, 30, 60)});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = search.equilibria.size() == 3;
  double worst = 0.0;
  int lorenz_like = 0, wings = 0;
  for (const auto& e : search.equilibria) {
    if (e.location.norm() < 1e-8) {
      std::vector<double> re;
      for (const auto& z : e.eigenvalues) {
        re.push_back(z.real());
        worst = std::max(worst, std::abs(z.imag()));
      }
      std::sort(re.begin(), re.end());
      const double expect[3] = {kStable, kSlow, kUnstable};
      for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(re[i] - expect[i]));
      lorenz_like += e.classification == EquilibriumClass::LorenzLike;
    } else {
      wings += e.classification == EquilibriumClass::NonLorenzLike;
    }
  }
  ok = ok && worst <= 1e-9 && lorenz_like == 1 && wings == 2 && secs < 5.0;
  return {ok, fmt("origin eigenvalue error %.2e, origin LorenzLike %d, wings NonLorenzLike %d, %.2f s", worst,
                  lorenz_like, wings, secs)};
}

Outcome uni() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& F = doubling_induced();
  auto sq = [](double x) { return x * x; };
  UniOptions d;
  const auto der = uni_test(F, sq, d);
  UniOptions p;
  p.mode = UniMode::Periodic;
  p.word1 = {0, 0, 0, 1, 1, 1};
  p.word2 = {0, 0, 1, 0, 1, 1};
  const auto per = uni_test(F, sq, p);
  // exact integer oracle: the period-6 orbit of word w is w / 63 and its shifts
  auto sum = [](unsigned w) {
    long long s = 0;
    for (int i = 0; i < 6; ++i, w = ((w << 1) | (w >> 5)) & 63u) s += static_cast<long long>(w) * w;
    return s;
  };
  const long long s1 = sum(0b000111), s2 = sum(0b001011);
  const double pi = std::numbers::pi;
  auto phi = [pi](double x) { return std::sin(2 * pi * x) / 10; };
  UniOptions c;
  c.n0 = 12;
  const auto cob = uni_test(F, [&](double x) { return 1.0 + phi(F.F(x)) - phi(x); }, c);
  const double bound = 2 * (2 * pi / 10) * std::pow(F.rho(), c.n0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = std::abs(der.statistic - 0.5) <= 1e-9 && s1 == 7791 && s2 == 7035 &&
                  std::abs(per.sum1 - 7791.0 / 3969) <= 1e-12 && std::abs(per.sum2 - 7035.0 / 3969) <= 1e-12 &&
                  per.holds && !cob.holds && cob.statistic <= bound && secs < 10.0;
  return {ok, fmt("D = %.12f, S = %lld/3969 vs %lld/3969 (%.15f, %.15f), coboundary %.2e <= %.2e, %.2f s",
                  der.statistic, s1, s2, per.sum1, per.sum2, cob.statistic, bound, secs)};
}

Outcome transfer_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const TransferOperator P0(doubling_induced(), square_roof(), 0.0);
  const auto e0 = leading_eigenpair(P0);
  double flat = 0.0;
  for (const auto& v : e0.f.values) flat = std::max(flat, std::abs(v - 1.0));
  double unit = 0.0;
  for (double sigma : {0.1, 0.5, 1.0}) {
    const auto e = leading_eigenpair(TransferOperator(doubling_induced(), unit_roof(), sigma));
    unit = std::max(unit, std::abs(e.lambda - std::exp(-sigma)));
  }
  const NormalizedOperator L(P0, e0);
  const auto phis = observable_ensemble(0, 1, 100, 21), psis = observable_ensemble(0, 1, 100, 22);
  const double dual = duality_defect(L, phis, psis);
  // independent check of L_0 itself: (psi(x / 2) + psi((x + 1) / 2)) / 2 with psi its mesh interpolant
  double kernel = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    const auto g = P0.grid(psis[k]);
    const auto out = L.apply(g);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = out.node(i);
      kernel = std::max(kernel, std::abs(out.values[i] - 0.5 * (g(x / 2) + g((x + 1) / 2))));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = flat <= 1e-8 && std::abs(e0.lambda - 1.0) <= 1e-8 && unit <= 1e-10 && dual <= 1e-6 &&
                  kernel <= 1e-12 && secs < 30.0;
  return {ok, fmt("density flatness %.1e, |lambda0 - 1| %.1e, |lambda_s - e^-s| %.1e, duality %.1e, L0 vs closed form "
                  "%.1e, %.1f s",
                  flat, std::abs(e0.lambda - 1.0), unit, dual, kernel, secs)};
}

Outcome lasota_yorke() {
  const TransferOperator P0(doubling_induced(), square_roof(), 0.0);
  const auto e0 = leading_eigenpair(P0);
  const auto ens = grids(P0, observable_ensemble(0, 1, 50, 2));
  bool ok = true;
  std::string detail;
  for (double b : {0.0, 10.0}) {
    const TransferOperator P(doubling_induced(), square_roof(), cplx(0, b));
    const auto fit = lasota_yorke_fit(NormalizedOperator(P, e0), ens, 12, 1.0);
    ok = ok && fit.rho <= 0.55 && fit.violations == 0 && fit.samples == 50 * 12;
    detail += fmt("b = %g: rho %.3f, C %.2f, violations %zu/%zu; ", b, fit.rho, fit.C, fit.violations, fit.samples);
  }
  return {ok, detail};
}

Outcome contraction() {
  const TransferOperator P0(doubling_induced(), square_roof(), 0.0);
  const auto e0 = leading_eigenpair(P0);
  const TransferOperator P(doubling_induced(), square_roof(), cplx(0, 10));
  const auto cc = contraction_probe(NormalizedOperator(P, e0), {P.grid([](double x) { return cplx(x * x, 0); })}, 40, 1.0);

  const TransferOperator U0(doubling_induced(), unit_roof(), 0.0);
  const TransferOperator U(doubling_induced(), unit_roof(), cplx(0, 10));
  const auto uc = contraction_probe(NormalizedOperator(U, leading_eigenpair(U0)),
                                    grids(U, observable_ensemble(0, 1, 20, 9)), 40, 1.0);
  const auto [lo, hi] = std::minmax_element(uc.norm.begin(), uc.norm.end());
  const bool ok = cc.gamma < 1.0 && cc.r2 >= 0.9 && cc.decays && !uc.decays && *lo >= 0.8 && *hi <= 1.2;
  return {ok, fmt("x^2 roof: gamma %.4f, R^2 %.4f on [%.1f, %.0f]; constant roof curve in [%.4f, %.4f]", cc.gamma, cc.r2,
                  cc.window_lo, cc.window_hi, *lo, *hi)};
}

// Independent formulas for f_{1.95,0.75}: |f'| and the delta-truncated distance to 0.
double model_slope(double x) { return 1.95 * 0.75 * std::pow(std::abs(x), -0.25); }
double trunc_dist(double d, double delta) {
  if (d <= delta) return d;
  if (d < 2 * delta) return (1 - delta) / delta * d + 2 * delta - 1;
  return 1.0;
}

Outcome hyperbolic() {
  const auto f = lorenz_like_map();
  const double sigma = 0.75, b = 0.25, delta = 0.005;
  const int horizon = 10'000;
  std::vector<long double> inv_pow(horizon + 1), dist_pow(horizon + 1);
  for (int k = 0; k <= horizon; ++k) {
    inv_pow[k] = std::pow(static_cast<long double>(sigma), -k);
    dist_pow[k] = std::pow(sigma, k * b);
  }
  double lowest = 1.0;
  std::size_t reported = 0, wrong = 0, missing = 0;
  for (int k = 0; k < 100; ++k) {
    Rng rng(7, k);
    const double x0 = rng.uniform(-1, 1);
    const auto rec = hyperbolic_times(f, x0, horizon, sigma, b, delta);
    lowest = std::min(lowest, rec.density);
    std::vector<double> slope(horizon), dist(horizon);
    double x = x0;
    for (int i = 0; i < horizon; ++i, x = f(x)) {
      slope[i] = model_slope(x);
      dist[i] = trunc_dist(std::abs(x), delta);
    }
    // every n from scratch: all k-products and distances, no shared state between n
    auto brute = [&](int n) {
      long double prod = 1.0L;
      for (int j = 1; j <= n; ++j) {
        prod *= slope[n - j];
        if (prod < inv_pow[j] || dist[n - j] < dist_pow[j]) return false;
      }
      return true;
    };
    std::size_t next = 0;
    for (int n = 1; n <= horizon; ++n) {
      const bool listed = next < rec.times.size() && rec.times[next] == n;
      if (listed) ++next;
      const bool truth = brute(n);
      wrong += listed && !truth;
      missing += truth && !listed;
    }
    reported += rec.times.size();
  }
  const bool ok = lowest >= 0.1 && wrong == 0 && missing == 0;
  return {ok, fmt("min density %.4f over 100 orbits of 1e4, %zu reported times, %zu rejected and %zu missed by the "
                  "oracle",
                  lowest, reported, wrong, missing)};
}

Outcome tails() {
  const auto& F = model_induced();
  const auto res = induced_roof_and_checks(F, model_roof());
  const auto& rt = res.checks.return_tail;
  const auto& rr = res.checks.roof_tail;
  // oracle: Leb{R > n} rebuilt from the branch lengths and refitted on the same window
  const double w = F.delta_hi() - F.delta_lo();
  std::vector<double> ns, logs;
  for (int n = static_cast<int>(rt.t_lo); n <= static_cast<int>(rt.t_hi); ++n) {
    double m = 0.0;
    for (const auto& br : F.branches()) m += br.R <= n ? br.length() : 0.0;
    ns.push_back(n);
    logs.push_back(std::log(1.0 - m / w));
  }
  const LinearFit lf = linear_fit(ns, logs);
  const bool ok = F.return_cap() == 40 && F.coverage() >= 0.99 && rt.accepted && rt.rate > 0 && rt.r2 >= 0.9 &&
                  rr.accepted && rr.rate > 0 && rr.r2 >= 0.9 && std::abs(-lf.slope - rt.rate) <= 1e-9 * rt.rate &&
                  lf.r2 >= 0.9;
  return {ok, fmt("coverage %.4f; R tail slope %.4f (oracle %.4f), R^2 %.3f; r tail slope %.4f, R^2 %.3f", F.coverage(),
                  -rt.rate, lf.slope, rt.r2, -rr.rate, rr.r2)};
}

Outcome mixing() {
  const auto t0 = std::chrono::steady_clock::now();
  const SuspensionSemiflow S(doubling_induced(), square_roof());
  const InvariantSampler sampler(S, doubling_density());
  MonteCarloOptions mo;
  mo.samples = 10'000'000;
  mo.seed = 1;
  const auto c = correlation_estimator(sampler, arch(S), arch(S), grid(0.25, 6.0), mo);

  const SuspensionSemiflow U(doubling_induced(), unit_roof());
  const InvariantSampler us(U, doubling_density());
  MonteCarloOptions mu = mo;
  mu.samples = 1'000'000;
  const auto u = correlation_estimator(us, arch(U), arch(U), grid(0.125, 4.0), mu);
  const double t_susp = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto t1 = std::chrono::steady_clock::now();
  const auto vf = lorenz_classical();
  FlowOptions fo;
  bool flow_ok = true;
  std::string flow;
  for (int i : {0, 1}) {
    auto coord = [i](const Vec& v) { return v[i]; };
    const auto cf = flow_correlation(vf, coord, coord, 8.0, 1e6, v3(1, 1, 20), fo);
    flow_ok = flow_ok && cf.fit.accepted && cf.fit.rate > 0 && cf.fit.r2 >= 0.9;
    flow += fmt("%s: c %.3f R^2 %.3f on [%.1f, %.1f]; ", i == 0 ? "x" : "y", cf.fit.rate, cf.fit.r2, cf.fit.t_lo,
                cf.fit.t_hi);
  }
  const double t_flow = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  const bool ok = c.fit.accepted && c.fit.rate > 0 && c.fit.r2 >= 0.9 && c.dropped == 0 && u.nondecaying &&
                  !u.fit.accepted && flow_ok && t_flow < 600.0;
  return {ok, fmt("suspension 1e7: c %.3f R^2 %.3f; constant roof nondecaying %d (period %.3f), %.0f s; Lorenz 1e6: %s"
                  "%.0f s",
                  c.fit.rate, c.fit.r2, static_cast<int>(u.nondecaying), u.period, t_susp, flow.c_str(), t_flow)};
}

Outcome equilibrium() {
  const SuspensionSemiflow S(doubling_induced(), square_roof());
  const InvariantSampler sampler(S, doubling_density());
  MonteCarloOptions mo;
  mo.samples = 2'000'000;
  mo.seed = 3;
  const auto e = equilibrium_convergence(sampler, arch(S), arch(S), grid(0.25, 6.0), mo);
  mo.samples = 200'000;
  const auto one = equilibrium_convergence(sampler, arch(S), [](const SuspensionPoint&) { return 1.0; }, grid(0.5, 3.0), mo);
  bool exact = one.leb_psi == 1.0;
  for (std::size_t i = 0; i < one.series.t.size(); ++i) {
    exact = exact && one.series.value[i] == one.leb_phi[i] - one.mu_phi;
  }
  const bool ok = e.series.fit.accepted && e.series.fit.rate > 0 && exact;
  return {ok, fmt("E_t rate %.3f, R^2 %.3f on [%.2f, %.2f]; psi = 1 reduction exact %d", e.series.fit.rate,
                  e.series.fit.r2, e.series.fit.t_lo, e.series.fit.t_hi, static_cast<int>(exact))};
}

Outcome visits() {
  const double gamma = 0.5, alpha = 0.8;
  MonteCarloOptions mo;
  mo.samples = 1'000'000;
  mo.seed = 4;
  const SuspensionSemiflow S(doubling_induced(), square_roof());
  const InvariantSampler sampler(S, doubling_density());
  const auto w = visits_statistic(sampler, gamma, alpha, grid(0.25, 5.0), mo);

  const SuspensionSemiflow U(doubling_induced(), unit_roof());
  const InvariantSampler us(U, doubling_density());
  const auto g = grid(0.3, 4.2);
  const auto v = visits_statistic(us, gamma, alpha, g, mo);
  // r = 1: w_t = floor(u + t) with u uniform, so the mean is a two-point mix of gamma^(alpha k)
  std::size_t outside = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double k = std::floor(g[i]), frac = g[i] - k;
    const double exact = (1 - frac) * std::pow(gamma, alpha * k) + frac * std::pow(gamma, alpha * (k + 1));
    const double z = std::abs(v.value[i] - exact) / std::max(v.se[i], 1e-300);
    worst = std::max(worst, std::abs(v.value[i] - exact) <= 1e-12 ? 0.0 : z);
    outside += std::abs(v.value[i] - exact) > 2 * v.se[i] + 1e-12;
  }
  const bool ok = w.fit.accepted && w.fit.rate > 0 && outside == 0;
  return {ok, fmt("x^2 roof: delta %.3f R^2 %.3f; unit roof closed form: %zu of %zu grid points beyond 2 SE (max z %.2f)",
                  w.fit.rate, w.fit.r2, outside, g.size(), worst)};
}

Outcome clt() {
  FlowOptions fo;
  fo.tol = 1e-6;
  const auto r = clt_check(lorenz_classical(), [](const Vec& v) { return v[0]; }, 10'000, 1'000, v3(1, 1, 20), fo);
  const bool ok = !r.degenerate && r.ks < 0.05 && r.variance_change < 0.1;
  return {ok, fmt("KS %.4f, sigma %.3f, variance change %.3f (%zu blocks of %zu)", r.ks, r.sigma, r.variance_change,
                  r.n_blocks, r.block_len)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "singmix_acceptance";
  fs::remove_all(root);
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(SINGMIX_CONFIG_DIR)) {
    if (e.path().extension() == ".json") configs.push_back(e.path());
  }
  std::sort(configs.begin(), configs.end());
  std::size_t files = 0, differing = 0, failed = 0;
  std::set<std::string> covered;
  for (const auto& cfg : configs) {
    covered.insert(json::parse(slurp(cfg))["scenario"].get<std::string>());
    for (const char* run : {"a", "b"}) {
      const auto out = root / cfg.stem() / run;
      const std::string cmd = std::string(SINGMIX_CLI) + " run " + cfg.string() + " --out " + out.string() + " >/dev/null";
      failed += std::system(cmd.c_str()) != 0;
    }
    for (const auto& e : fs::directory_iterator(root / cfg.stem() / "a")) {
      ++files;
      differing += slurp(e.path()) != slurp(root / cfg.stem() / "b" / e.path().filename());
    }
  }
  const bool ok = covered.size() == scenario_names().size() && failed == 0 && differing == 0 && files > 0;
  return {ok, fmt("%zu scenarios, %zu files compared, %zu differ, %zu runs not clean", covered.size(), files, differing,
                  failed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"dissipativity reproduction", dissipativity},
      {"equilibrium classification", classification},
      {"UNI oracle", uni},
      {"transfer-operator sanity", transfer_sanity},
      {"Lasota-Yorke", lasota_yorke},
      {"contraction probe", contraction},
      {"hyperbolic times", hyperbolic},
      {"induction tails", tails},
      {"mixing", mixing},
      {"convergence to equilibrium", equilibrium},
      {"visits statistic", visits},
      {"CLT", clt},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("criterion %2zu %-28s %s  %s [%.1f s]\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
