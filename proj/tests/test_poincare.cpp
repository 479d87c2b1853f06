#include <cmath>
#include <numbers>

#include "doctest.h"
#include "singmix/fit.hpp"
#include "singmix/poincare.hpp"

using namespace singmix;

namespace {

VectorField rotation3() {
  Mat a = Mat::Zero(3, 3);
  a(0, 1) = -1.0;
  a(1, 0) = 1.0;
  return linear_field(a);
}

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

// {y = 0, x > 0} crossed counterclockwise
CrossSection positive_x_axis() {
  Mat frame(3, 2);
  frame << 1, 0, 0, 0, 0, 1;
  Vec lo(2), hi(2);
  lo << 0.0, -10.0;
  hi << 10.0, 10.0;
  return CrossSection(Vec::Zero(3), frame, v3(0, 1, 0), lo, hi);
}

}  // namespace

TEST_CASE("poincare_return: planar rotation returns after 2 pi") {
  const auto vf = rotation3();
  ReturnOptions opt;
  opt.tol = 1e-12;
  for (double r : {0.5, 1.0, 3.0}) {
    const auto ret = poincare_return(vf, {positive_x_axis()}, v3(r, 0, 0.2), opt);
    CHECK(std::abs(ret.tau - 2 * std::numbers::pi) < 1e-9);
    CHECK((ret.exit - v3(r, 0, 0.2)).norm() < 1e-9);
    CHECK(ret.section == 0);
  }
}

TEST_CASE("poincare_return: return times add over a double crossing") {
  ReturnOptions one;
  one.tol = 1e-12;
  ReturnOptions two = one;
  two.crossings = 2;
  {
    const auto vf = rotation3();
    const auto s = positive_x_axis();
    const auto a = poincare_return(vf, {s}, v3(1, 0, 0), one);
    const auto b = poincare_return(vf, {s}, a.exit, one);
    const auto ab = poincare_return(vf, {s}, v3(1, 0, 0), two);
    CHECK(std::abs(ab.tau - (a.tau + b.tau)) < 1e-9);
  }
  {
    const auto lorenz = lorenz_classical();
    const auto sec = CrossSection::coordinate_plane(3, 2, 27.0, -1, 60.0);
    const Vec x = v3(3.0, 3.0, 27.0);
    const auto a = poincare_return(lorenz, {sec}, x, one);
    const auto b = poincare_return(lorenz, {sec}, a.exit, one);
    const auto ab = poincare_return(lorenz, {sec}, x, two);
    CHECK(std::abs(ab.tau - (a.tau + b.tau)) < 1e-9);
    CHECK((ab.exit - b.exit).norm() < 1e-7);
  }
}

TEST_CASE("poincare_return: Gamma and missing returns") {
  const auto lorenz = lorenz_classical();
  const auto sec = CrossSection::coordinate_plane(3, 2, 27.0, -1, 60.0);
  ReturnOptions opt;
  opt.singularities = {Vec::Zero(3)};
  try {
    poincare_return(lorenz, {sec}, v3(0, 0, 27), opt);  // on the z-axis, inside W^s(0)
    FAIL("expected OnGamma");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OnGamma);
  }
  ReturnOptions shortcap;
  shortcap.time_cap = 1.0;
  try {
    poincare_return(rotation3(), {positive_x_axis()}, v3(1, 0, 0), shortcap);
    FAIL("expected NoReturn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoReturn);
  }
}

TEST_CASE("geometric model: integrated return equals the composed closed forms") {
  const GeometricLorenzModel m;
  Rng rng(17);
  for (int i = 0; i < 40; ++i) {
    const double x = rng.uniform(-1.0, 1.0), y = rng.uniform(-1.0, 1.0);
    const auto a = m.return_closed_form(x, y);
    const auto b = m.return_integrated(x, y);
    // tau = g1 + tau1 + g2 with tau1 = -log|x| / lambda1
    CHECK(a.tau == doctest::Approx(m.g1 - std::log(std::abs(x)) / m.lambda1 + m.g2).epsilon(1e-14));
    CHECK(std::abs(a.tau - b.tau) < 1e-9);
    CHECK(std::abs(a.exit[0] - b.exit[0]) < 1e-9);
    CHECK(std::abs(a.exit[1] - b.exit[1]) < 1e-9);
    // tau does not depend on the stable coordinate
    CHECK(m.return_closed_form(x, -y).tau == a.tau);
  }
  for (bool integrated : {false, true}) {
    try {
      integrated ? m.return_integrated(0.0, 0.3) : m.return_closed_form(0.0, 0.3);
      FAIL("expected OnGamma");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OnGamma);
    }
  }
}

TEST_CASE("quotient_map_extract: geometric model recovers the closed-form quotient") {
  const GeometricLorenzModel m;
  const auto grid = dyadic_grid(-1.0, 1.0, {0.0}, 201, 30);
  for (bool integrated : {false, true}) {
    const auto q = quotient_map_extract(model_quotient(m, integrated), grid);
    REQUIRE(q.critical.size() == 1);
    CHECK(std::abs(q.critical[0]) < 1e-9);
    // grid points inside the exclusion radius of Gamma fail the return
    const auto inside = std::count_if(grid.begin(), grid.end(), [&](double x) { return std::abs(x) < m.gamma_radius; });
    CHECK(q.failed == static_cast<std::size_t>(inside));
    double worst = 0.0;
    for (std::size_t i = 0; i < q.u.size(); ++i) {
      const double x = q.u[i];
      worst = std::max(worst, std::abs(q.f[i] - (x > 0 ? 1 : -1) * (1.95 * std::pow(std::abs(x), 0.75) - 1)));
      CHECK(q.branch[i] == (x > 0 ? 1 : 0));
    }
    CHECK(worst < 1e-4);
    // odd symmetry on the symmetric grid
    for (std::size_t i = 0; i < q.u.size(); ++i) {
      const std::size_t j = q.u.size() - 1 - i;
      REQUIRE(q.u[j] == doctest::Approx(-q.u[i]).epsilon(1e-15));
      CHECK(q.f[j] == doctest::Approx(-q.f[i]).epsilon(1e-9));
    }
    // derivative blow-up exponent alpha - 1 from log-log regression
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < q.u.size(); ++i) {
      if (q.u[i] > 0 && q.u[i] < 0.05) {
        lx.push_back(std::log(q.u[i]));
        ly.push_back(std::log(std::abs(q.df[i])));
      }
    }
    const auto fit = linear_fit(lx, ly);
    CHECK(fit.slope == doctest::Approx(-0.25).epsilon(0.01));
    if (!integrated) {
      const auto csv = q.to_csv();
      CHECK(csv.rfind("x,f,df,branch_id,dist_to_D\n", 0) == 0);
      CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(q.u.size()) + 1);
    }
  }
}

TEST_CASE("quotient_map_extract: semiconjugacy with the return map") {
  const GeometricLorenzModel m;
  const auto q = quotient_map_extract(model_quotient(m), dyadic_grid(-1.0, 1.0, {0.0}, 4001, 20));
  Rng rng(23);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1.0, 1.0), y = rng.uniform(-1.0, 1.0);
    if (std::abs(x) < 0.01) continue;
    // pi(x, y) = x, so f(pi z) must equal pi(P z)
    CHECK(std::abs(q.interpolate(x) - m.return_closed_form(x, y).exit[0]) < 1e-4);
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("nondegeneracy_and_growth_check: model map") {
  const GeometricLorenzModel m;
  const auto q = quotient_map_extract(model_quotient(m), dyadic_grid(-1.0, 1.0, {0.0}, 201, 30));
  const auto rep = nondegeneracy_and_growth_check(q);
  REQUIRE(rep.singular_set.size() == 1);
  CHECK(rep.c1_q == doctest::Approx(0.25).epsilon(0.02));
  CHECK(rep.c1_pass);
  CHECK(rep.c2_pass);
  CHECK(rep.c2_q == doctest::Approx(0.5 / rep.c1_q));
  REQUIRE(rep.tau_available);
  CHECK(rep.tau_log_slope == doctest::Approx(1.0 / m.lambda1).epsilon(0.02));
  CHECK(rep.tau_log_r2 > 0.99);
  CHECK(std::isfinite(rep.tau_derivative_bound));
  CHECK(rep.tau_derivative_bound <= 1.0 / m.lambda1 * 1.01);
  CHECK(rep.min_expansion == doctest::Approx(1.4625).epsilon(1e-4));
  CHECK(rep.expansion_pass);
  CHECK_FALSE(rep.exceeds_two);
}

TEST_CASE("nondegeneracy_and_growth_check: doubling has no singular set") {
  const auto f = doubling_map();
  const auto q = quotient_map_extract(map_quotient(f), dyadic_grid(0.0, 1.0 - 1e-9, {0.5}, 101, 20));
  REQUIRE(q.critical.size() == 1);
  CHECK(std::abs(q.critical[0] - 0.5) < 1e-9);
  const auto rep = nondegeneracy_and_growth_check(q);
  CHECK(rep.singular_set.empty());
  CHECK(rep.c1_q == 0.0);
  CHECK(rep.c1_pass);
  CHECK(rep.c1_constant == doctest::Approx(2.0).epsilon(1e-6));
  // log|f'| is constant; only Richardson rounding remains
  CHECK(rep.c2_constant < 1e-3);
  CHECK_FALSE(rep.tau_available);
  CHECK(rep.min_expansion == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("nondegeneracy_and_growth_check: coarse grids are undersampled") {
  const GeometricLorenzModel m;
  const auto q = quotient_map_extract(model_quotient(m), dyadic_grid(-1.0, 1.0, {}, 21, 0));
  try {
    nondegeneracy_and_growth_check(q);
    FAIL("expected Undersampled");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Undersampled);
  }
}

TEST_CASE("classical Lorenz: quotient on the z = 27 section") {
  const auto lorenz = lorenz_classical();
  const auto sq = lorenz_section_quotient(lorenz);
  const QuotientFn fn = [&](double u) { return sq(u); };
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(-10.0 + 0.5 * i + 0.125);
  const auto q = quotient_map_extract(fn, grid);
  REQUIRE(q.critical.size() == 1);
  CHECK(std::abs(q.critical[0]) < 1e-6);
  for (std::size_t i = 0; i < q.u.size(); ++i) CHECK(q.df[i] > 0.0);
  // the symmetry (x, y, z) -> (-x, -y, z) makes f odd
  for (double u : {0.3, 1.7, 4.1, 8.9}) CHECK(sq(-u).f == doctest::Approx(-sq(u).f).epsilon(1e-6));
  // the return time grows as the orbit passes closer to the origin
  CHECK(sq(1e-3).tau > sq(1e-1).tau);
}

TEST_CASE("classical Lorenz: return time is nearly constant along rebuilt stable leaves") {
  const auto lorenz = lorenz_classical();
  const auto sq = lorenz_section_quotient(lorenz);
  for (double u : {-6.0, 2.5}) {
    const Vec x = sq.curve(u);
    const Vec s = sq.stable_direction(x);
    CHECK(std::abs(s.dot(sq.section().normal())) < 1e-12);
    const double tx = sq.return_from(x).tau;
    auto ratio = [&](double eps) { return std::abs(sq.return_from(x + eps * s).tau - tx) / eps; };
    const double coarse = ratio(1e-2), fine = ratio(1e-3);
    CHECK(std::isfinite(coarse));
    CHECK(fine <= 1.5 * coarse + 1e-6);
  }
}

TEST_CASE("SectionQuotient: undominated returns are a foliation error") {
  // pure rotation: the return Jacobian is the identity
  const auto vf = rotation3();
  SectionQuotient sq(vf, positive_x_axis(), v3(0, 0, 0), v3(1, 0, 0));
  try {
    sq(1.0);
    FAIL("expected FoliationError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FoliationError);
  }
}
