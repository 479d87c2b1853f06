#include "singmix/flow.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/sobol.hpp>
#include <nlohmann/json.hpp>

namespace singmix {

bool Box::contains(const Vec& x) const {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  }
  return true;
}

VectorField::VectorField(std::string name, int dimension, Rhs rhs, Jacobian jacobian,
                         std::map<std::string, double> parameters, std::optional<Box> trapping_region)
    : name_(std::move(name)),
      dimension_(dimension),
      rhs_(std::move(rhs)),
      jacobian_(std::move(jacobian)),
      parameters_(std::move(parameters)),
      trapping_region_(std::move(trapping_region)) {
  if (dimension_ <= 0) throw Error(ErrorCode::InvalidField, "dimension must be positive");
}

Vec VectorField::operator()(const Vec& x) const {
  Vec out(dimension_);
  rhs_(x, out);
  return out;
}

Mat VectorField::jacobian(const Vec& x) const {
  Mat out(dimension_, dimension_);
  jacobian_(x, out);
  return out;
}

VectorField VectorField::scaled(double c) const {
  auto rhs = rhs_;
  auto jac = jacobian_;
  auto params = parameters_;
  params["time_scale"] = c;
  return VectorField(
      name_ + "*" + std::to_string(c), dimension_,
      [rhs, c](const Vec& x, Vec& out) {
        rhs(x, out);
        out *= c;
      },
      [jac, c](const Vec& x, Mat& out) {
        jac(x, out);
        out *= c;
      },
      params, trapping_region_);
}

VectorField lorenz_classical(double sigma, double rho, double beta) {
  Box trap{Vec::Constant(3, -60.0), Vec::Constant(3, 60.0)};
  trap.lo[2] = -10.0;
  trap.hi[2] = 90.0;
  return VectorField(
      "lorenz-classical", 3,
      [=](const Vec& u, Vec& out) {
        out[0] = sigma * (u[1] - u[0]);
        out[1] = u[0] * (rho - u[2]) - u[1];
        out[2] = u[0] * u[1] - beta * u[2];
      },
      [=](const Vec& u, Mat& j) {
        j << -sigma, sigma, 0.0,
             rho - u[2], -1.0, -u[0],
             u[1], u[0], -beta;
      },
      {{"sigma", sigma}, {"rho", rho}, {"beta", beta}}, trap);
}

VectorField linear_field(const Mat& a) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidField, "linear field needs a square matrix");
  return VectorField(
      "linear", static_cast<int>(a.rows()), [a](const Vec& x, Vec& out) { out.noalias() = a * x; },
      [a](const Vec&, Mat& j) { j = a; });
}

namespace {

struct Monomial {
  double coef;
  std::vector<int> exponents;
  int component;
};

double monomial_value(const Monomial& m, const Vec& x) {
  double v = m.coef;
  for (std::size_t k = 0; k < m.exponents.size(); ++k) {
    if (m.exponents[k] != 0) v *= std::pow(x[static_cast<Eigen::Index>(k)], m.exponents[k]);
  }
  return v;
}

VectorField polynomial_field(const nlohmann::json& spec) {
  const int dim = spec.at("dimension").get<int>();
  if (dim <= 0) throw Error(ErrorCode::InvalidField, "dimension must be positive");
  std::vector<Monomial> terms;
  for (const auto& t : spec.at("terms")) {
    Monomial m{t.at("coef").get<double>(), t.at("exponents").get<std::vector<int>>(),
               t.at("component").get<int>()};
    if (static_cast<int>(m.exponents.size()) != dim || m.component < 0 || m.component >= dim) {
      throw Error(ErrorCode::InvalidField, "polynomial term does not match the dimension");
    }
    for (int e : m.exponents) {
      if (e < 0) throw Error(ErrorCode::InvalidField, "negative exponent");
    }
    terms.push_back(std::move(m));
  }
  auto rhs = [terms, dim](const Vec& x, Vec& out) {
    out.setZero(dim);
    for (const auto& m : terms) out[m.component] += monomial_value(m, x);
  };
  auto jac = [terms, dim](const Vec& x, Mat& j) {
    j.setZero(dim, dim);
    for (const auto& m : terms) {
      for (int k = 0; k < dim; ++k) {
        const int e = m.exponents[static_cast<std::size_t>(k)];
        if (e == 0) continue;
        double v = m.coef * e * std::pow(x[k], e - 1);
        for (int l = 0; l < dim; ++l) {
          const int el = m.exponents[static_cast<std::size_t>(l)];
          if (l != k && el != 0) v *= std::pow(x[l], el);
        }
        j(m.component, k) += v;
      }
    }
  };
  return VectorField(spec.value("name", std::string("polynomial")), dim, rhs, jac);
}

}  // namespace

VectorField field_from_json_text(const std::string& text) {
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidField, std::string("bad field JSON: ") + e.what());
  }
  if (spec.is_string()) spec = nlohmann::json{{"name", spec.get<std::string>()}};
  if (spec.contains("terms")) {
    try {
      return polynomial_field(spec);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidField, std::string("bad polynomial term: ") + e.what());
    }
  }
  const std::string name = spec.value("name", std::string());
  if (name == "lorenz-classical") {
    return lorenz_classical(spec.value("sigma", 10.0), spec.value("rho", 28.0),
                            spec.value("beta", 8.0 / 3.0));
  }
  throw Error(ErrorCode::InvalidField, "unknown vector field '" + name + "'");
}

double jacobian_fd_mismatch(const VectorField& vf, const std::vector<Vec>& points, double h) {
  double worst = 0.0;
  const int n = vf.dimension();
  for (const Vec& x : points) {
    const Mat j = vf.jacobian(x);
    Mat fd(n, n);
    for (int k = 0; k < n; ++k) {
      Vec xp = x, xm = x;
      const double step = h * std::max(1.0, std::abs(x[k]));
      xp[k] += step;
      xm[k] -= step;
      fd.col(k) = (vf(xp) - vf(xm)) / (2.0 * step);
    }
    worst = std::max(worst, (fd - j).norm() / std::max(1.0, j.norm()));
  }
  return worst;
}

// Dormand-Prince tableau.
namespace {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// The user tolerance targets the solution over O(10) time units of chaotic
// stretching; the per-step controller runs this much tighter.
constexpr double kLocalTolFactor = 1.0 / 50.0;
}  // namespace

Dopri5::Dopri5(const VectorField& vf, const Vec& x0, double t0, IntegratorOptions options)
    : vf_(vf), opt_(options), n_(vf.dimension()), t_(t0), t_prev_(t0), h_(0.0) {
  if (!(opt_.tol > 0.0)) throw Error(ErrorCode::InvalidInput, "tolerance must be positive");
  if (x0.size() != n_) throw Error(ErrorCode::InvalidInput, "initial state has wrong dimension");
  if (!x0.allFinite()) throw Error(ErrorCode::InvalidInput, "initial state not finite");
  y_ = x0;
  y_prev_ = x0;
  for (Vec* v : {&ynew_, &tmp_, &err_, &k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &r1_, &r2_, &r3_, &r4_, &r5_}) {
    v->setZero(n_);
  }
  vf_.eval(y_, k1_);
  if (!k1_.allFinite()) throw Error(ErrorCode::InvalidField, "rhs not finite at initial state");
  r1_ = y_;
  h_ = opt_.initial_step > 0.0 ? opt_.initial_step : initial_step_guess();
}

double Dopri5::initial_step_guess() {
  const double tol = opt_.tol * kLocalTolFactor;
  const Vec scale = (tol + tol * y_.array().abs()).matrix();
  const double d0 = std::sqrt((y_.array() / scale.array()).square().mean());
  const double d1v = std::sqrt((k1_.array() / scale.array()).square().mean());
  double h0 = (d0 < 1e-5 || d1v < 1e-5) ? 1e-6 : 0.01 * d0 / d1v;
  tmp_ = y_ + h0 * k1_;
  vf_.eval(tmp_, k2_);
  const double d2 = std::sqrt(((k2_ - k1_).array() / scale.array()).square().mean()) / h0;
  const double m = std::max(d1v, d2);
  const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 1.0 / 5.0);
  double h = std::min(100.0 * h0, h1);
  if (opt_.max_step > 0.0) h = std::min(h, opt_.max_step);
  return h;
}

void Dopri5::check_state(const Vec& y) const {
  if (!y.allFinite()) throw Error(ErrorCode::InvalidField, "non-finite state or rhs during integration");
  if (y.norm() > opt_.max_norm) throw Error(ErrorCode::Blowup, "state norm exceeded cap");
}

void Dopri5::step(double t_limit) {
  const double tol = opt_.tol * kLocalTolFactor;
  for (int attempt = 0;; ++attempt) {
    if (steps_ >= opt_.max_steps) throw Error(ErrorCode::NotConverged, "integrator step cap reached");
    double h = h_;
    bool clipped = false;
    if (t_ + h >= t_limit) {
      h = t_limit - t_;
      clipped = true;
    }
    if (!(h > 0.0) || t_ + h == t_) {
      if (clipped) {
        t_prev_ = t_;
        return;
      }
      throw Error(ErrorCode::NotConverged, "step size underflow");
    }
    tmp_ = y_ + h * a21 * k1_;
    vf_.eval(tmp_, k2_);
    tmp_ = y_ + h * (a31 * k1_ + a32 * k2_);
    vf_.eval(tmp_, k3_);
    tmp_ = y_ + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    vf_.eval(tmp_, k4_);
    tmp_ = y_ + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    vf_.eval(tmp_, k5_);
    tmp_ = y_ + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    vf_.eval(tmp_, k6_);
    ynew_ = y_ + h * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    vf_.eval(ynew_, k7_);
    if (!k7_.allFinite() || !ynew_.allFinite()) {
      if (attempt > 60) throw Error(ErrorCode::InvalidField, "non-finite rhs during integration");
      h_ = 0.25 * h;
      continue;
    }
    err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    double acc = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double sc = tol + tol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
      const double q = err_[i] / sc;
      acc += q * q;
    }
    const double err = std::sqrt(acc / n_);
    double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    fac = std::clamp(fac, 0.2, 5.0);
    if (err <= 1.0) {
      // continuous extension before k1 is overwritten
      r1_ = y_;
      r2_ = ynew_ - y_;
      r3_ = h * k1_ - r2_;
      r4_ = r2_ - h * k7_ - r3_;
      r5_ = h * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
      y_prev_ = y_;
      t_prev_ = t_;
      y_.swap(ynew_);
      k1_.swap(k7_);
      t_ = clipped ? t_limit : t_ + h;
      ++steps_;
      check_state(y_);
      double next = h * fac;
      if (clipped) next = std::max(next, h_);
      if (opt_.max_step > 0.0) next = std::min(next, opt_.max_step);
      h_ = next;
      return;
    }
    h_ = h * std::min(1.0, fac);
    if (attempt > 200) throw Error(ErrorCode::NotConverged, "step rejected repeatedly");
  }
}

void Dopri5::advance_to(double t_end) {
  while (t_ < t_end) step(t_end);
}

void Dopri5::dense(double t, Vec& out) const {
  const double h = t_ - t_prev_;
  if (h <= 0.0) {
    out = y_;
    return;
  }
  const double th = (t - t_prev_) / h;
  const double th1 = 1.0 - th;
  out = r1_ + th * (r2_ + th1 * (r3_ + th * (r4_ + th1 * r5_)));
}

Vec Dopri5::dense(double t) const {
  Vec out(n_);
  dense(t, out);
  return out;
}

void Dopri5::reset(const Vec& x, double t) {
  y_ = x;
  y_prev_ = x;
  t_ = t;
  t_prev_ = t;
  vf_.eval(y_, k1_);
  r1_ = y_;
  r2_.setZero();
  r3_.setZero();
  r4_.setZero();
  r5_.setZero();
}

Trajectory integrate_flow(const VectorField& vf, const Vec& x0, double duration, double tol) {
  if (!(duration >= 0.0)) throw Error(ErrorCode::InvalidInput, "duration must be non-negative");
  Trajectory tr;
  tr.tolerance = tol;
  IntegratorOptions opt;
  opt.tol = tol;
  Dopri5 rk(vf, x0, 0.0, opt);
  tr.times.push_back(0.0);
  tr.states.push_back(x0);
  while (rk.t() < duration) {
    rk.step(duration);
    tr.times.push_back(rk.t());
    tr.states.push_back(rk.state());
  }
  return tr;
}

Vec flow_map(const VectorField& vf, const Vec& x0, double duration, double tol) {
  if (!(duration >= 0.0)) throw Error(ErrorCode::InvalidInput, "duration must be non-negative");
  IntegratorOptions opt;
  opt.tol = tol;
  Dopri5 rk(vf, x0, 0.0, opt);
  rk.advance_to(duration);
  return rk.state();
}

VectorField variational_field(const VectorField& vf, bool with_logdet) {
  const int n = vf.dimension();
  const int dim = n + n * n + (with_logdet ? 1 : 0);
  auto rhs = [vf, n, with_logdet](const Vec& u, Vec& out) {
    thread_local Vec x, fx;
    thread_local Mat j;
    x = u.head(n);
    fx.resize(n);
    j.resize(n, n);
    vf.eval(x, fx);
    vf.jacobian(x, j);
    out.head(n) = fx;
    Eigen::Map<const Mat> phi(u.data() + n, n, n);
    Eigen::Map<Mat> dphi(out.data() + n, n, n);
    dphi.noalias() = j * phi;
    if (with_logdet) out[n + n * n] = j.trace();
  };
  // The augmented Jacobian is never needed by the integrator.
  auto jac = [dim](const Vec&, Mat& j) { j.setZero(dim, dim); };
  return VectorField(vf.name() + "+variational", dim, rhs, jac, vf.parameters());
}

std::string_view to_string(EquilibriumClass c) {
  switch (c) {
    case EquilibriumClass::LorenzLike: return "LorenzLike";
    case EquilibriumClass::NonLorenzLike: return "NonLorenzLike";
    case EquilibriumClass::NonHyperbolic: return "NonHyperbolic";
  }
  return "?";
}

namespace {
constexpr double kDegenerate = 1e-8;
}

EquilibriumRecord classify_equilibrium(const VectorField& vf, const Vec& location) {
  const int n = vf.dimension();
  EquilibriumRecord rec;
  rec.location = location;
  const Mat j = vf.jacobian(location);
  Eigen::EigenSolver<Mat> es(j, true);
  if (es.info() != Eigen::Success) {
    rec.classification = EquilibriumClass::NonHyperbolic;
    return rec;
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  const auto ev = es.eigenvalues();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ev[a].real() != ev[b].real()) return ev[a].real() < ev[b].real();
    return ev[a].imag() < ev[b].imag();
  });
  rec.eigenvectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const int k = order[static_cast<std::size_t>(i)];
    rec.eigenvalues.push_back(ev[k]);
    rec.eigenvectors.col(i) = es.eigenvectors().col(k);
  }
  const Eigen::MatrixXcd jc = j.cast<std::complex<double>>();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXcd v = rec.eigenvectors.col(i);
    const double res = (jc * v - rec.eigenvalues[static_cast<std::size_t>(i)] * v).norm() / v.norm();
    rec.max_residual = std::max(rec.max_residual, res);
  }
  for (const auto& l : rec.eigenvalues) rec.stable_index += l.real() < 0.0 ? 1 : 0;
  rec.stable_dim = std::max(0, n - 2);

  bool degenerate = false;
  for (int i = 0; i < n; ++i) {
    const auto li = rec.eigenvalues[static_cast<std::size_t>(i)];
    if (std::abs(li.real()) < kDegenerate) degenerate = true;
    for (int k = i + 1; k < n; ++k) {
      const auto lk = rec.eigenvalues[static_cast<std::size_t>(k)];
      const bool conjugate = std::abs(li.imag()) > kDegenerate && std::abs(li - std::conj(lk)) < kDegenerate;
      if (!conjugate && std::abs(li.real() - lk.real()) < kDegenerate) degenerate = true;
    }
  }
  // Defective Jacobian: eigenvector basis numerically singular.
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(rec.eigenvectors);
  const auto sv = svd.singularValues();
  if (sv[n - 1] < 1e-10 * sv[0]) degenerate = true;

  if (degenerate || n < 2) {
    rec.classification = EquilibriumClass::NonHyperbolic;
    return rec;
  }
  const auto ls = rec.eigenvalues[static_cast<std::size_t>(n - 2)];
  const auto lu = rec.eigenvalues[static_cast<std::size_t>(n - 1)];
  const bool real_pair = std::abs(ls.imag()) < kDegenerate && std::abs(lu.imag()) < kDegenerate;
  const bool lorenz = real_pair && -lu.real() < ls.real() && ls.real() < 0.0 && 0.0 < lu.real();
  rec.classification = lorenz ? EquilibriumClass::LorenzLike : EquilibriumClass::NonLorenzLike;
  return rec;
}

EquilibriumSearch classify_equilibria(const VectorField& vf, const Box& box, int seeds, double dedup_radius) {
  const int n = vf.dimension();
  if (box.lo.size() != n || box.hi.size() != n || !box.lo.allFinite() || !box.hi.allFinite()) {
    throw Error(ErrorCode::InvalidInput, "search box must be bounded and match the dimension");
  }
  EquilibriumSearch out;
  out.seeds = seeds;
  boost::random::sobol sobol(static_cast<std::size_t>(n));
  std::vector<Vec> found;
  Vec fx(n);
  Mat j(n, n);
  for (int s = 0; s < seeds; ++s) {
    Vec x(n);
    for (int k = 0; k < n; ++k) {
      const double u = static_cast<double>(sobol()) * 0x1.0p-64;
      x[k] = box.lo[k] + u * (box.hi[k] - box.lo[k]);
    }
    bool converged = false;
    for (int it = 0; it < 200; ++it) {
      vf.eval(x, fx);
      const double fnorm = fx.norm();
      if (!std::isfinite(fnorm)) break;
      if (fnorm < 1e-12 * (1.0 + x.norm())) {
        converged = true;
        break;
      }
      vf.jacobian(x, j);
      const Vec dx = j.fullPivLu().solve(-fx);
      if (!dx.allFinite()) break;
      double lambda = 1.0;
      Vec trial = x + dx;
      while (lambda > 1e-6 && vf(trial).norm() >= fnorm) {
        lambda *= 0.5;
        trial = x + lambda * dx;
      }
      if (dx.norm() * lambda < 1e-15 * (1.0 + x.norm())) {
        vf.eval(trial, fx);
        converged = fx.norm() < 1e-8 * (1.0 + trial.norm());
        x = trial;
        break;
      }
      x = trial;
    }
    if (!converged) continue;
    const Vec slack = 1e-9 * (box.hi - box.lo);
    Box grown{box.lo - slack, box.hi + slack};
    if (!grown.contains(x)) continue;
    ++out.converged_seeds;
    const bool dup = std::any_of(found.begin(), found.end(),
                                 [&](const Vec& y) { return (y - x).norm() < dedup_radius; });
    if (!dup) found.push_back(x);
  }
  std::sort(found.begin(), found.end(), [](const Vec& a, const Vec& b) {
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      if (a[k] != b[k]) return a[k] < b[k];
    }
    return false;
  });
  for (const Vec& x : found) out.equilibria.push_back(classify_equilibrium(vf, x));
  if (out.equilibria.empty()) {
    out.diagnostic = "Newton did not converge inside the box from any of " + std::to_string(seeds) + " seeds";
  }
  return out;
}

LocalModel::LocalModel(double lambda_u, double lambda_s) : lambda_u_(lambda_u), lambda_s_(lambda_s) {
  if (!(lambda_s < 0.0 && 0.0 < -lambda_s && -lambda_s < lambda_u)) {
    throw Error(ErrorCode::InvalidInput, "local model needs lambda_s < 0 < -lambda_s < lambda_u");
  }
}

double LocalModel::return_time(double x1) const {
  if (x1 == 0.0) throw Error(ErrorCode::OnStableManifold, "x1 = 0 lies on the local stable manifold");
  return -std::log(std::abs(x1)) / lambda_u_;
}

std::array<double, 2> LocalModel::exit_point(double x1) const {
  if (x1 == 0.0) throw Error(ErrorCode::OnStableManifold, "x1 = 0 lies on the local stable manifold");
  return {x1 > 0.0 ? 1.0 : -1.0, std::pow(std::abs(x1), exponent())};
}

LocalModel local_singular_model(const EquilibriumRecord& eq) {
  if (eq.classification != EquilibriumClass::LorenzLike) {
    throw Error(ErrorCode::InvalidInput, "local model requires a Lorenz-like equilibrium");
  }
  const std::size_t n = eq.eigenvalues.size();
  return LocalModel(eq.eigenvalues[n - 1].real(), eq.eigenvalues[n - 2].real());
}

}  // namespace singmix
