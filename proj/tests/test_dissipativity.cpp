#include <cmath>

#include "doctest.h"
#include "singmix/dissipativity.hpp"
#include "singmix/rng.hpp"

using namespace singmix;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

VectorField diagonal(double a, double b, double c) {
  Mat m = Mat::Zero(3, 3);
  m.diagonal() << a, b, c;
  return linear_field(m);
}

std::vector<EquilibriumRecord> lorenz_equilibria() {
  const auto lorenz = lorenz_classical();
  return classify_equilibria(lorenz, Box{v3(-30, -30, -10), v3(30, 30, 60)}).equilibria;
}

}  // namespace

TEST_CASE("lyapunov_spectrum: decoupled linear field") {
  const auto vf = diagonal(-2.0, -1.0, 1.0);
  // the generic starting frame leaves an O(1/T) bias
  const auto spec = lyapunov_spectrum(vf, v3(0, 0, 0), 4000.0);
  REQUIRE(spec.exponents.size() == 3);
  CHECK(std::abs(spec.exponents[0] + 2.0) < 1e-3);
  CHECK(std::abs(spec.exponents[1] + 1.0) < 1e-3);
  CHECK(std::abs(spec.exponents[2] - 1.0) < 1e-3);
  CHECK(spec.converged);
}

TEST_CASE("lyapunov_spectrum: classical Lorenz sum and top exponent") {
  const auto lorenz = lorenz_classical();
  LyapunovOptions opt;
  opt.transient = 50.0;
  const auto a = lyapunov_spectrum(lorenz, v3(1, 1, 1), 2000.0, opt);
  double sum = 0.0;
  for (double c : a.exponents) sum += c;
  CHECK(sum == doctest::Approx(-41.0 / 3.0).epsilon(1e-3));
  CHECK(std::abs(sum - a.divergence_average) < 1e-3);
  CHECK(std::abs(a.exponents[2] - 0.90) < 0.05);
  CHECK(std::abs(a.exponents[1]) < 0.02);
  // second step size as the cross-check
  opt.renormalization_interval = 0.5;
  const auto b = lyapunov_spectrum(lorenz, v3(1, 1, 1), 2000.0, opt);
  CHECK(std::abs(b.exponents[2] - 0.90) < 0.05);
  CHECK(std::abs(a.exponents[2] - b.exponents[2]) < 0.03);
}

TEST_CASE("lyapunov_spectrum: short runs raise NotConverged with partial data") {
  Mat m(2, 2);
  m << 0.0, -1.0, 1.0, 0.0;
  // rotation: running estimates oscillate; a large renormalization interval
  // with a tiny threshold is enough to trip the diagnostic
  LyapunovOptions opt;
  opt.diagnostic_threshold = 0.0;
  try {
    lyapunov_spectrum(linear_field(m), Vec::Ones(2), 4.0, opt);
    FAIL("expected NotConverged");
  } catch (const LyapunovNotConverged& e) {
    CHECK(e.code() == ErrorCode::NotConverged);
    CHECK(e.partial().exponents.size() == 2);
  }
}

TEST_CASE("strong_dissipativity_report: classical Lorenz is 1.278-strongly dissipative") {
  const auto lorenz = lorenz_classical();
  const auto eqs = lorenz_equilibria();
  REQUIRE(eqs.size() == 3);
  const auto samples = attractor_samples(lorenz, v3(1, 1, 1), 20000, 0.05, 100.0);
  DissipativityOptions opt;
  opt.ell = 1.0;
  const auto rep = strong_dissipativity_report(lorenz, eqs, 1.278, samples, opt);
  CHECK(rep.pass);
  CHECK(rep.stable_dim == 1);
  for (const auto& m : rep.condition_a) CHECK(m.margin < 0.0);
  const double origin_margin = (-11.0 - std::sqrt(1201.0)) / 2.0 + 8.0 / 3.0 + 1.278 * (-11.0 + std::sqrt(1201.0)) / 2.0;
  CHECK(rep.condition_a[1].margin == doctest::Approx(origin_margin).epsilon(1e-9));
  CHECK(rep.condition_b < 0.0);
  CHECK(rep.condition_b >= rep.condition_b_sampled);
  // q_max from the origin: (22.8277 - 2.6667) / 11.8277
  const double q_max = ((11.0 + std::sqrt(1201.0)) / 2.0 - 8.0 / 3.0) / ((-11.0 + std::sqrt(1201.0)) / 2.0);
  CHECK(rep.q_max_a == doctest::Approx(q_max).epsilon(1e-12));
  CHECK(rep.q_max_a == doctest::Approx(1.7045).epsilon(1e-4));
}

TEST_CASE("strong_dissipativity_report: q_max agrees with bisection on the margins") {
  const auto lorenz = lorenz_classical();
  const auto eqs = lorenz_equilibria();
  const std::vector<Vec> one{v3(0, 0, 0)};
  const auto rep = strong_dissipativity_report(lorenz, eqs, 1.278, one);
  auto all_negative = [&](double q) {
    const auto r = strong_dissipativity_report(lorenz, eqs, q, one);
    for (const auto& m : r.condition_a) {
      if (m.margin >= 0.0) return false;
    }
    return true;
  };
  double lo = 1.0, hi = 3.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (all_negative(mid) ? lo : hi) = mid;
  }
  CHECK(std::abs(lo - rep.q_max_a) < 1e-12);
}

TEST_CASE("strong_dissipativity_report: verdict monotone in q") {
  const auto lorenz = lorenz_classical();
  const auto eqs = lorenz_equilibria();
  const auto samples = attractor_samples(lorenz, v3(1, 1, 1), 2000, 0.1, 50.0);
  DissipativityOptions opt;
  opt.ell = 1.0;
  bool seen_fail = false;
  for (double q = 1.0; q < 2.0; q += 0.05) {
    const bool pass = strong_dissipativity_report(lorenz, eqs, q, samples, opt).pass;
    if (!pass) seen_fail = true;
    if (seen_fail) CHECK_FALSE(pass);
  }
  CHECK(seen_fail);
}

TEST_CASE("strong_dissipativity_report: expanding volume fails for every q") {
  // Div X = +1 everywhere
  const auto vf = diagonal(-1.0, 0.5, 1.5);
  const auto eq = classify_equilibrium(vf, v3(0, 0, 0));
  const std::vector<Vec> samples{v3(0, 0, 0), v3(1, 1, 1)};
  for (double q : {0.5, 1.0, 1.5, 3.0}) {
    for (double ell : {1.0, 2.0}) {
      DissipativityOptions opt;
      opt.ell = ell;
      const auto rep = strong_dissipativity_report(vf, {eq}, q, samples, opt);
      CHECK_FALSE(rep.pass);
      CHECK(rep.condition_b > 0.0);
    }
  }
}

TEST_CASE("strong_dissipativity_report: edge cases") {
  const auto vf = diagonal(-3.0, -1.0, 1.0);
  CHECK_THROWS_AS(strong_dissipativity_report(vf, {}, 1.0, {}), Error);
  const auto rep = strong_dissipativity_report(vf, {}, 1.1, {v3(0, 0, 0)});
  CHECK(rep.condition_a_vacuous);
  CHECK(rep.ell == 1.0);
  // the ell ratio for d_s = 1 is identically 1
  CHECK(ell_ratio({-5.0, 0.0, 1.0}, 1) == 1.0);
  CHECK(ell_ratio({-6.0, -2.0, 1.0}, 2) == doctest::Approx(2.0));
}

TEST_CASE("eta_cocycle: diagonal closed form") {
  const auto vf = diagonal(-2.0, -0.5, 1.0);
  for (double t : {0.5, 1.0, 3.0, 7.0}) {
    const auto e = eta_cocycle(vf, v3(0.3, -0.2, 0.1), t, 1.0);
    CHECK(e.eta == doctest::Approx(-0.5 * t).epsilon(1e-8));
  }
  const auto e = eta_cocycle(vf, v3(0, 0, 0), 2.0, 1.278);
  CHECK(e.eta == doctest::Approx(2.0 * (-2.0 + 0.5 + 1.278)).epsilon(1e-8));
}

TEST_CASE("eta_cocycle: subadditive on linear fields") {
  Rng rng(5);
  // a symmetric field Q D Q^T shares its finite-time splitting for all t
  Mat qm = Mat::Random(3, 3);
  Eigen::HouseholderQR<Mat> qr(qm);
  const Mat q = qr.householderQ();
  Mat d = Mat::Zero(3, 3);
  d.diagonal() << -2.5, -0.4, 0.8;
  const std::vector<VectorField> fields{diagonal(-2.0, -0.5, 1.0), linear_field(q * d * q.transpose())};
  for (const auto& vf : fields) {
    for (int trial = 0; trial < 10; ++trial) {
      const Vec x = v3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      const double s = rng.uniform(0.1, 3.0), t = rng.uniform(0.1, 3.0);
      const double qq = rng.uniform(1.0, 2.0);
      const double whole = eta_cocycle(vf, x, s + t, qq).eta;
      const double split = eta_cocycle(vf, x, s, qq).eta + eta_cocycle(vf, flow_map(vf, x, s), t, qq).eta;
      CHECK(whole <= split + 1e-8);
    }
  }
}

TEST_CASE("eta_cocycle: degenerate splitting is rejected") {
  const auto vf = diagonal(-1.0, -1.0, 1.0);
  try {
    eta_cocycle(vf, v3(0, 0, 0), 1.0, 1.0);
    FAIL("expected IllConditionedSplitting");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IllConditionedSplitting);
  }
}

TEST_CASE("eta_cocycle: classical Lorenz ensemble trend is negative") {
  const auto lorenz = lorenz_classical();
  const auto pts = attractor_samples(lorenz, v3(1, 1, 1), 16, 3.7, 50.0);
  const auto trend = eta_cocycle_trend(lorenz, pts, {20.0, 30.0, 40.0}, 1.278);
  for (double v : trend.mean_eta_over_t) CHECK(v < 0.0);
  CHECK(trend.slope < 0.0);
}
