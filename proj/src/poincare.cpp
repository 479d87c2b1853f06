#include "singmix/poincare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "singmix/fit.hpp"

namespace singmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool critical_signal(ErrorCode code) {
  return code == ErrorCode::OnGamma || code == ErrorCode::NoReturn || code == ErrorCode::OrbitOnCriticalSet ||
         code == ErrorCode::ZeroDistance || code == ErrorCode::OnStableManifold;
}

}  // namespace

CrossSection::CrossSection(Vec anchor, Mat frame, Vec normal_hint, Vec lo, Vec hi, double transversality_floor)
    : anchor_(std::move(anchor)), frame_(std::move(frame)), lo_(std::move(lo)), hi_(std::move(hi)),
      floor_(transversality_floor) {
  const auto n = anchor_.size();
  if (frame_.rows() != n || frame_.cols() != n - 1 || normal_hint.size() != n || lo_.size() != n - 1 ||
      hi_.size() != n - 1) {
    throw Error(ErrorCode::InvalidInput, "cross-section dimensions disagree");
  }
  Eigen::HouseholderQR<Mat> qr(frame_);
  const Mat q = qr.householderQ();
  normal_ = q.col(n - 1);
  if (normal_.dot(normal_hint) < 0.0) normal_ = -normal_;
  if (std::abs(normal_.dot(normal_hint)) < 1e-12) throw Error(ErrorCode::InvalidInput, "normal hint lies in the section");
  Eigen::ColPivHouseholderQR<Mat> check(frame_);
  if (check.rank() != n - 1) throw Error(ErrorCode::InvalidInput, "degenerate section frame");
}

CrossSection CrossSection::coordinate_plane(int dimension, int k, double level, int sign, double bound) {
  if (k < 0 || k >= dimension || (sign != 1 && sign != -1)) throw Error(ErrorCode::InvalidInput, "bad coordinate plane");
  Vec anchor = Vec::Zero(dimension);
  anchor[k] = level;
  Mat frame = Mat::Zero(dimension, dimension - 1);
  for (int i = 0, col = 0; i < dimension; ++i) {
    if (i != k) frame(i, col++) = 1.0;
  }
  Vec hint = Vec::Zero(dimension);
  hint[k] = sign;
  return CrossSection(anchor, frame, hint, Vec::Constant(dimension - 1, -bound), Vec::Constant(dimension - 1, bound));
}

Vec CrossSection::coordinates(const Vec& x) const {
  return frame_.colPivHouseholderQr().solve(x - anchor_);
}

bool CrossSection::within_bounds(const Vec& x) const {
  const Vec u = coordinates(x);
  return (u.array() >= lo_.array()).all() && (u.array() <= hi_.array()).all();
}

ReturnSample poincare_return(const VectorField& vf, const std::vector<CrossSection>& sections, const Vec& x,
                             const ReturnOptions& opt) {
  if (sections.empty()) throw Error(ErrorCode::InvalidInput, "no sections");
  if (x.size() != vf.dimension()) throw Error(ErrorCode::InvalidInput, "point dimension mismatch");
  if (opt.crossings < 1) throw Error(ErrorCode::InvalidInput, "crossings must be positive");
  ReturnSample out;
  out.entry = x;
  out.closest_approach = kInf;
  auto approach = [&](const Vec& p) {
    for (const auto& s : opt.singularities) {
      const double d = (p - s).norm();
      out.closest_approach = std::min(out.closest_approach, d);
      if (d < opt.gamma_radius) throw Error(ErrorCode::OnGamma, "orbit enters the exclusion tube of a singularity");
    }
  };
  approach(x);

  IntegratorOptions io;
  io.tol = opt.tol;
  Dopri5 ig(vf, x, 0.0, io);
  int count = 0;
  Vec probe(x.size()), field(x.size());
  while (ig.t() < opt.time_cap) {
    ig.step(opt.time_cap);
    ig.dense(0.5 * (ig.t_prev() + ig.t()), probe);
    approach(probe);
    approach(ig.state());

    double best_t = kInf;
    int best_i = -1;
    Vec best_x;
    for (std::size_t i = 0; i < sections.size(); ++i) {
      const auto& sec = sections[i];
      if (!(sec.height(ig.prev_state()) < 0.0 && sec.height(ig.state()) >= 0.0)) continue;
      double a = ig.t_prev(), b = ig.t();
      while (b - a > opt.time_accuracy) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        ig.dense(m, probe);
        (sec.height(probe) < 0.0 ? a : b) = m;
      }
      if (b < opt.min_time || b >= best_t) continue;
      ig.dense(b, probe);
      if (!sec.within_bounds(probe)) continue;
      vf.eval(probe, field);
      if (std::abs(field.dot(sec.normal())) <= sec.transversality_floor()) continue;
      best_t = b;
      best_i = static_cast<int>(i);
      best_x = probe;
    }
    if (best_i >= 0 && ++count == opt.crossings) {
      out.exit = best_x;
      out.tau = best_t;
      out.section = best_i;
      out.near_singularity = out.closest_approach < opt.neighborhood_radius;
      return out;
    }
  }
  throw Error(ErrorCode::NoReturn, "no return within the time cap");
}

VectorField GeometricLorenzModel::box_field() const {
  Mat a = Mat::Zero(3, 3);
  a.diagonal() << lambda1, lambda2, lambda3;
  return linear_field(a);
}

double GeometricLorenzModel::quotient(double x) const {
  if (x == 0.0) throw Error(ErrorCode::OnGamma, "x = 0 lies on the stable manifold of the singularity");
  return (x > 0 ? 1.0 : -1.0) * (c * std::pow(std::abs(x), alpha()) - 1.0);
}

ReturnSample GeometricLorenzModel::return_closed_form(double x, double y) const {
  if (std::abs(x) > 1.0 || std::abs(y) > 1.0) throw Error(ErrorCode::InvalidInput, "point outside the section");
  if (std::abs(x) < gamma_radius) throw Error(ErrorCode::OnGamma, "point within the exclusion radius of Gamma");
  const LocalModel local(lambda1, lambda2);
  const double s = x > 0 ? 1.0 : -1.0;
  const auto exit = local.exit_point(x);
  const double w = y * std::pow(std::abs(x), -lambda3 / lambda1);
  ReturnSample r;
  r.entry = Vec(2);
  r.entry << x, y;
  r.exit = Vec(2);
  r.exit << s * (c * exit[1] - 1.0), s * kappa + nu * w;
  r.tau = g1 + local.return_time(x) + g2;
  r.section = 0;
  r.near_singularity = true;
  r.closest_approach = std::abs(x);
  return r;
}

ReturnSample GeometricLorenzModel::return_integrated(double x, double y, double tol) const {
  if (std::abs(x) > 1.0 || std::abs(y) > 1.0) throw Error(ErrorCode::InvalidInput, "point outside the section");
  if (std::abs(x) < gamma_radius) throw Error(ErrorCode::OnGamma, "point within the exclusion radius of Gamma");
  const auto box = box_field();
  Vec start(3);
  start << x, 1.0, y;
  double tau1 = 0.0;
  Vec exit = start;
  if (std::abs(x) < 1.0) {
    const std::vector<CrossSection> sides{CrossSection::coordinate_plane(3, 0, 1.0, 1, 10.0),
                                          CrossSection::coordinate_plane(3, 0, -1.0, -1, 10.0)};
    ReturnOptions opt;
    opt.tol = tol;
    opt.time_cap = 200.0 / lambda1;
    opt.singularities = {Vec::Zero(3)};
    opt.gamma_radius = gamma_radius * 1e-3;
    const auto r = poincare_return(box, sides, start, opt);
    tau1 = r.tau;
    exit = r.exit;
  }
  const double s = exit[0] > 0 ? 1.0 : -1.0;
  ReturnSample out;
  out.entry = Vec(2);
  out.entry << x, y;
  out.exit = Vec(2);
  out.exit << s * (c * exit[1] - 1.0), s * kappa + nu * exit[2];
  out.tau = g1 + tau1 + g2;
  out.section = 0;
  out.near_singularity = true;
  out.closest_approach = std::abs(x);
  return out;
}

QuotientFn model_quotient(const GeometricLorenzModel& model, bool integrated, double y) {
  return [model, integrated, y](double u) {
    const auto r = integrated ? model.return_integrated(u, y) : model.return_closed_form(u, y);
    return QuotientValue{r.exit[0], r.tau};
  };
}

QuotientFn map_quotient(const PiecewiseExpandingMap& f) {
  return [f](double u) { return QuotientValue{f(u), 1.0}; };
}

SectionQuotient::SectionQuotient(const VectorField& vf, CrossSection section, Vec curve_anchor, Vec curve_direction,
                                 SectionQuotientOptions options)
    : vf_(vf), section_(std::move(section)), anchor_(std::move(curve_anchor)),
      direction_(std::move(curve_direction)), opt_(std::move(options)) {
  if (vf.dimension() != 3) throw Error(ErrorCode::InvalidInput, "section quotients are implemented for 3D fields");
  if (std::abs(section_.height(anchor_)) > 1e-9 || std::abs(section_.normal().dot(direction_)) > 1e-9) {
    throw Error(ErrorCode::InvalidInput, "u-curve must lie in the section");
  }
}

ReturnSample SectionQuotient::return_from(const Vec& x) const { return poincare_return(vf_, {section_}, x, opt_.ret); }

Vec SectionQuotient::stable_direction(const Vec& x) const {
  const Vec u0 = section_.coordinates(x);
  const int m = static_cast<int>(u0.size());
  Mat jac(m, m);
  for (int i = 0; i < m; ++i) {
    Vec up = u0, um = u0;
    up[i] += opt_.fd_step;
    um[i] -= opt_.fd_step;
    try {
      const Vec pp = section_.coordinates(return_from(section_.point(up)).exit);
      const Vec pm = section_.coordinates(return_from(section_.point(um)).exit);
      jac.col(i) = (pp - pm) / (2.0 * opt_.fd_step);
    } catch (const Error& e) {
      throw Error(ErrorCode::FoliationError, std::string("return Jacobian unavailable: ") + e.what());
    }
  }
  Eigen::JacobiSVD<Mat> svd(jac, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv[m - 1] * 10.0 < sv[0])) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "no dominated contraction: singular values %.3e / %.3e", sv[0], sv[m - 1]);
    throw Error(ErrorCode::FoliationError, buf);
  }
  Vec dir = section_.frame() * svd.matrixV().col(m - 1);
  return dir.normalized();
}

QuotientValue SectionQuotient::operator()(double u) const {
  const auto r = return_from(curve(u));
  const Vec s = stable_direction(r.exit);
  // intersect the leaf line P + a s with the curve anchor + b d, in section coordinates
  const Vec p = section_.coordinates(r.exit) - section_.coordinates(anchor_);
  const Vec d = section_.coordinates(anchor_ + direction_) - section_.coordinates(anchor_);
  const Vec sf = section_.coordinates(section_.anchor() + s) - section_.coordinates(section_.anchor());
  Mat a(2, 2);
  a << d[0], -sf[0], d[1], -sf[1];
  const double sine = std::abs(a.determinant()) / (d.norm() * sf.norm());
  if (sine < opt_.min_angle_sine) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "stable leaf nearly tangent to the u-curve (angle sine %.3e)", sine);
    throw Error(ErrorCode::FoliationError, buf);
  }
  const Vec ba = a.partialPivLu().solve(p);
  return QuotientValue{ba[0], r.tau};
}

SectionQuotient lorenz_section_quotient(const VectorField& lorenz, SectionQuotientOptions options) {
  const auto& params = lorenz.parameters();
  const auto it = params.find("rho");
  if (it == params.end()) throw Error(ErrorCode::InvalidInput, "expected the classical Lorenz field");
  const double level = it->second - 1.0;
  if (options.ret.singularities.empty()) options.ret.singularities = {Vec::Zero(3)};
  options.ret.time_cap = std::min(options.ret.time_cap, 50.0);
  auto section = CrossSection::coordinate_plane(3, 2, level, -1, 60.0);
  Vec anchor(3);
  anchor << 0.0, 0.0, level;
  Vec dir(3);
  dir << 1.0, 1.0, 0.0;
  return SectionQuotient(lorenz, section, anchor, dir.normalized(), options);
}

std::string SampledQuotientMap::to_csv() const {
  std::string out = "x,f,df,branch_id,dist_to_D\n";
  char buf[160];
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d,%.17g\n", u[i], f[i], df[i], branch[i], dist_to_critical[i]);
    out += buf;
  }
  return out;
}

double SampledQuotientMap::interpolate(double x) const {
  if (u.empty()) throw Error(ErrorCode::InvalidInput, "empty sampled map");
  const int br = static_cast<int>(std::lower_bound(critical.begin(), critical.end(), x) - critical.begin());
  const auto hi_it = std::lower_bound(u.begin(), u.end(), x);
  std::size_t hi = static_cast<std::size_t>(hi_it - u.begin());
  if (hi < u.size() && u[hi] == x) return f[hi];
  if (hi == 0 || hi == u.size() || branch[hi] != br || branch[hi - 1] != br) {
    throw Error(ErrorCode::InvalidInput, "point not bracketed by samples of one branch");
  }
  const std::size_t lo = hi - 1;
  const double w = (x - u[lo]) / (u[hi] - u[lo]);
  return (1.0 - w) * f[lo] + w * f[hi];
}

std::vector<double> dyadic_grid(double lo, double hi, const std::vector<double>& centers, int uniform_points,
                                int levels) {
  if (!(lo < hi) || uniform_points < 2) throw Error(ErrorCode::InvalidInput, "bad grid request");
  std::vector<double> g;
  for (int i = 0; i < uniform_points; ++i) g.push_back(lo + (hi - lo) * i / (uniform_points - 1));
  for (double c : centers) {
    for (int k = 1; k <= levels; ++k) {
      const double r = 0.5 * (hi - lo) * std::ldexp(1.0, -k);
      if (c - r >= lo) g.push_back(c - r);
      if (c + r <= hi) g.push_back(c + r);
    }
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

namespace {

struct Probe {
  bool ok = false;
  QuotientValue v;
};

Probe probe(const QuotientFn& fn, double u) {
  try {
    return Probe{true, fn(u)};
  } catch (const Error& e) {
    if (critical_signal(e.code())) return Probe{};
    throw;
  }
}

}  // namespace

SampledQuotientMap quotient_map_extract(const QuotientFn& fn, const std::vector<double>& grid,
                                        const ExtractOptions& opt) {
  if (grid.size() < 2 || !std::is_sorted(grid.begin(), grid.end())) {
    throw Error(ErrorCode::InvalidInput, "grid must be increasing with at least two points");
  }
  const std::size_t n = grid.size();
  const auto vals = map_chunks<Probe>(n, opt.exec, [&](std::size_t i) { return probe(fn, grid[i]); });

  auto jump = [&](const Probe& a, const Probe& b) {
    return std::max(std::abs(a.v.f - b.v.f) / opt.jump_threshold, std::abs(a.v.tau - b.v.tau) / opt.tau_jump_threshold);
  };

  // Edge of the failure set between a good point and a failed one.
  auto edge = [&](double good, double bad) {
    while (std::abs(bad - good) > opt.locate_accuracy) {
      const double m = 0.5 * (good + bad);
      if (m == good || m == bad) break;
      (probe(fn, m).ok ? good : bad) = m;
    }
    return 0.5 * (good + bad);
  };

  std::vector<double> crit;
  for (std::size_t i = 0; i < n;) {
    if (!vals[i].ok) {
      std::size_t j = i;
      while (j + 1 < n && !vals[j + 1].ok) ++j;
      const double left = i > 0 ? edge(grid[i - 1], grid[i]) : grid[i];
      const double right = j + 1 < n ? edge(grid[j + 1], grid[j]) : grid[j];
      crit.push_back(0.5 * (left + right));
      i = j + 1;
      continue;
    }
    if (i + 1 < n && vals[i + 1].ok && jump(vals[i], vals[i + 1]) > 1.0) {
      double a = grid[i], b = grid[i + 1];
      Probe pa = vals[i], pb = vals[i + 1];
      bool located = false;
      while (b - a > opt.locate_accuracy) {
        const double m = 0.5 * (a + b);
        if (m == a || m == b) break;
        const auto pm = probe(fn, m);
        if (!pm.ok) {
          crit.push_back(0.5 * (edge(a, m) + edge(b, m)));
          located = true;
          break;
        }
        if (jump(pa, pm) >= jump(pm, pb)) {
          b = m;
          pb = pm;
        } else {
          a = m;
          pa = pm;
        }
      }
      // a steep but continuous stretch resolves to no jump at all
      if (!located && jump(pa, pb) > 1.0) crit.push_back(0.5 * (a + b));
    }
    ++i;
  }
  std::sort(crit.begin(), crit.end());
  crit.erase(std::unique(crit.begin(), crit.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
             crit.end());

  SampledQuotientMap out;
  out.critical = crit;
  std::vector<std::size_t> good;
  for (std::size_t i = 0; i < n; ++i) {
    if (vals[i].ok) good.push_back(i);
  }
  out.failed = n - good.size();
  const double lo = grid.front(), hi = grid.back();

  struct Deriv {
    double df = 0.0;
  };
  const auto derivs = map_chunks<Deriv>(good.size(), opt.exec, [&](std::size_t k) {
    const double u = grid[good[k]];
    double d = kInf;
    for (double c : crit) d = std::min(d, std::abs(u - c));
    double h = std::min(opt.derivative_step, d / 4.0);
    auto f = [&](double x) { return fn(x).f; };
    double r;
    if (u - h < lo || u + h > hi) {
      // one-sided Richardson at the ends of the sampled interval
      const double s = u - h < lo ? 1.0 : -1.0;
      h = std::min(h, 0.5 * (hi - lo));
      const double f0 = f(u);
      const double d1 = (f(u + s * h) - f0) / (s * h);
      const double d2 = (f(u + s * h / 2) - f0) / (s * h / 2);
      r = 2.0 * d2 - d1;
    } else {
      const double d1 = (f(u + h) - f(u - h)) / (2 * h);
      const double d2 = (f(u + h / 2) - f(u - h / 2)) / h;
      r = (4.0 * d2 - d1) / 3.0;
    }
    return Deriv{r};
  });

  for (std::size_t k = 0; k < good.size(); ++k) {
    const std::size_t i = good[k];
    const double u = grid[i];
    double d = kInf;
    for (double c : crit) d = std::min(d, std::abs(u - c));
    out.u.push_back(u);
    out.f.push_back(vals[i].v.f);
    out.tau.push_back(vals[i].v.tau);
    out.df.push_back(derivs[k].df);
    out.branch.push_back(static_cast<int>(std::lower_bound(crit.begin(), crit.end(), u) - crit.begin()));
    out.dist_to_critical.push_back(d);
  }
  return out;
}

ConditionsReport nondegeneracy_and_growth_check(const SampledQuotientMap& map, const ConditionsOptions& opt) {
  ConditionsReport rep;
  rep.c2_eta = opt.eta;
  rep.expansion_floor = opt.expansion_floor;
  const std::size_t n = map.u.size();
  if (n < 2) throw Error(ErrorCode::Undersampled, "sampled map is empty");

  for (std::size_t ci = 0; ci < map.critical.size(); ++ci) {
    const double c = map.critical[ci];
    for (int side : {-1, 1}) {
      const int br = side < 0 ? static_cast<int>(ci) : static_cast<int>(ci) + 1;
      std::vector<double> lx, ly;
      double dmin = kInf, dmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(map.u[i] - c);
        if (map.branch[i] != br || (map.u[i] - c) * side <= 0 || d >= opt.near_radius) continue;
        lx.push_back(std::log(d));
        ly.push_back(std::log(std::abs(map.df[i])));
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
      }
      if (lx.size() < opt.min_points || dmax < 8.0 * dmin) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu samples within %.3g on side %d of %.6g", lx.size(), opt.near_radius, side,
                      c);
        throw Error(ErrorCode::Undersampled, buf);
      }
      const auto fit = linear_fit(lx, ly);
      rep.sides.push_back(SingularFit{c, side, fit.slope, fit.r2, lx.size(), fit.slope < opt.singular_slope});
    }
  }

  bool fits_ok = true;
  for (const auto& s : rep.sides) {
    if (!s.singular) continue;
    if (rep.singular_set.empty() || rep.singular_set.back() != s.location) rep.singular_set.push_back(s.location);
    rep.c1_q = std::max(rep.c1_q, -s.slope);
    fits_ok = fits_ok && s.r2 >= 0.9;
  }
  auto dist_s = [&](double u) {
    double d = kInf;
    for (double c : rep.singular_set) d = std::min(d, std::abs(u - c));
    return d;
  };

  const double q = rep.c1_q;
  rep.c1_constant = 0.0;
  rep.min_expansion = kInf;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(map.df[i]);
    const double d = rep.singular_set.empty() ? 1.0 : dist_s(map.u[i]);
    const double dq = std::pow(d, q);
    rep.c1_constant = std::max({rep.c1_constant, a * dq, dq / a});
    rep.min_expansion = std::min(rep.min_expansion, a);
  }
  rep.c1_pass = std::isfinite(rep.c1_constant) && fits_ok;

  // (C2) needs |f'|^q2 to absorb the |x - y|^eta factor near S, so q2 q1 >= eta
  rep.c2_q = q > 0.0 ? std::max(q, opt.eta / q) : 0.0;
  rep.c2_constant = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (map.branch[i] != map.branch[i + 1]) continue;
    const double x = map.u[i], y = map.u[i + 1];
    if (std::abs(x - y) >= dist_s(x) / 2.0) continue;
    const double ax = std::abs(map.df[i]), ay = std::abs(map.df[i + 1]);
    const double lhs = std::abs(std::log(ax) - std::log(ay));
    const double rhs = std::pow(std::abs(x - y), opt.eta) * (std::pow(ax, -rep.c2_q) + std::pow(ax, rep.c2_q));
    rep.c2_constant = std::max(rep.c2_constant, lhs / rhs);
  }
  rep.c2_pass = std::isfinite(rep.c2_constant);

  rep.tau_available = !map.tau.empty() && std::any_of(map.tau.begin(), map.tau.end(),
                                                      [&](double t) { return t != map.tau.front(); });
  if (rep.tau_available && !map.critical.empty()) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < n; ++i) {
      if (map.dist_to_critical[i] < opt.near_radius) {
        lx.push_back(-std::log(map.dist_to_critical[i]));
        ly.push_back(map.tau[i]);
      }
    }
    if (lx.size() >= opt.min_points) {
      const auto fit = linear_fit(lx, ly);
      rep.tau_log_slope = fit.slope;
      rep.tau_log_r2 = fit.r2;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (map.branch[i] != map.branch[i + 1]) continue;
      const double slope = std::abs((map.tau[i + 1] - map.tau[i]) / (map.u[i + 1] - map.u[i]));
      rep.tau_derivative_bound = std::max(
          rep.tau_derivative_bound, slope * std::min(map.dist_to_critical[i], map.dist_to_critical[i + 1]));
    }
  }
  rep.expansion_pass = rep.min_expansion > opt.expansion_floor;
  rep.exceeds_two = rep.min_expansion > 2.0;
  return rep;
}

}  // namespace singmix
