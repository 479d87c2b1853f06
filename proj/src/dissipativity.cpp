#include "singmix/dissipativity.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "singmix/fit.hpp"
#include "singmix/rng.hpp"

namespace singmix {

namespace {

// Advances (x, Q) over one interval of the variational equation and returns
// the triangular factor of the propagated frame.
struct TangentStep {
  Vec x;
  Mat q;
  Mat r;
  double logdet = 0.0;
};

class TangentPropagator {
 public:
  TangentPropagator(const VectorField& vf, double tol)
      : aug_(variational_field(vf, true)), n_(vf.dimension()) {
    opt_.tol = tol;
    opt_.max_norm = 1e300;
  }

  TangentStep advance(const Vec& x, const Mat& frame, double dt) const {
    Vec u(aug_.dimension());
    u.head(n_) = x;
    Eigen::Map<Mat>(u.data() + n_, n_, n_) = frame;
    u[n_ + n_ * n_] = 0.0;
    Dopri5 rk(aug_, u, 0.0, opt_);
    rk.advance_to(dt);
    const Vec& v = rk.state();
    if (v.head(n_).norm() > 1e8) throw Error(ErrorCode::Blowup, "base orbit left every bounded region");
    TangentStep out;
    out.x = v.head(n_);
    const Mat phi = Eigen::Map<const Mat>(v.data() + n_, n_, n_);
    Eigen::HouseholderQR<Mat> qr(phi);
    out.q = qr.householderQ() * Mat::Identity(n_, n_);
    out.r = qr.matrixQR().triangularView<Eigen::Upper>();
    // make the diagonal of R positive
    for (int i = 0; i < n_; ++i) {
      if (out.r(i, i) < 0.0) {
        out.r.row(i) *= -1.0;
        out.q.col(i) *= -1.0;
      }
    }
    out.logdet = v[n_ + n_ * n_];
    return out;
  }

  int dimension() const { return n_; }

 private:
  VectorField aug_;
  int n_;
  IntegratorOptions opt_;
};

}  // namespace

LyapunovSpectrum lyapunov_spectrum(const VectorField& vf, const Vec& x0, double duration,
                                   const LyapunovOptions& options) {
  if (!(duration > 0.0) || !(options.renormalization_interval > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "duration and renormalization interval must be positive");
  }
  const int n = vf.dimension();
  Vec x = options.transient > 0.0 ? flow_map(vf, x0, options.transient, options.tol) : x0;
  // generic starting frame so no column sits in an invariant subspace
  Mat seed_frame(n, n);
  Rng rng(0x5eed);
  for (int i = 0; i < n * n; ++i) seed_frame.data()[i] = rng.normal();
  Eigen::HouseholderQR<Mat> qr0(seed_frame);
  Mat q = qr0.householderQ() * Mat::Identity(n, n);
  TangentPropagator prop(vf, options.tol);
  const double dt = options.renormalization_interval;
  const long steps = std::max(1L, std::lround(duration / dt));
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  std::vector<std::vector<double>> running(static_cast<std::size_t>(n));
  double div_sum = 0.0;
  for (long k = 0; k < steps; ++k) {
    const TangentStep st = prop.advance(x, q, dt);
    x = st.x;
    q = st.q;
    div_sum += st.logdet;
    const double elapsed = static_cast<double>(k + 1) * dt;
    for (int i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(i)] += std::log(st.r(i, i));
      running[static_cast<std::size_t>(i)].push_back(sums[static_cast<std::size_t>(i)] / elapsed);
    }
  }
  LyapunovSpectrum out;
  out.orbit_length = static_cast<double>(steps) * dt;
  out.divergence_average = div_sum / out.orbit_length;
  for (int i = n - 1; i >= 0; --i) out.exponents.push_back(sums[static_cast<std::size_t>(i)] / out.orbit_length);
  std::sort(out.exponents.begin(), out.exponents.end());
  for (const auto& series : running) {
    const std::size_t half = series.size() / 2;
    std::vector<double> tail(series.begin() + static_cast<std::ptrdiff_t>(half), series.end());
    out.diagnostic = std::max(out.diagnostic, variance(tail));
  }
  out.converged = out.diagnostic < options.diagnostic_threshold;
  if (!out.converged) throw LyapunovNotConverged(out);
  return out;
}

std::vector<Vec> attractor_samples(const VectorField& vf, const Vec& x0, std::size_t count, double spacing,
                                   double transient, double tol) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::InvalidInput, "spacing must be positive");
  IntegratorOptions opt;
  opt.tol = tol;
  Dopri5 rk(vf, x0, 0.0, opt);
  rk.advance_to(transient);
  std::vector<Vec> out;
  out.reserve(count);
  Vec buf(vf.dimension());
  for (std::size_t k = 0; k < count; ++k) {
    const double target = transient + static_cast<double>(k) * spacing;
    while (rk.t() < target) rk.step();
    rk.dense(target, buf);
    out.push_back(buf);
  }
  return out;
}

double frobenius_norm(const Mat& a) { return a.norm(); }

double ell_ratio(const std::vector<double>& chi, int stable_dim) {
  if (stable_dim < 1 || static_cast<std::size_t>(stable_dim) > chi.size()) {
    throw Error(ErrorCode::InvalidInput, "stable dimension out of range");
  }
  double s = 0.0;
  for (int j = 0; j < stable_dim; ++j) s += chi[static_cast<std::size_t>(j)];
  const double top = chi[static_cast<std::size_t>(stable_dim - 1)];
  if (top == 0.0) return std::numeric_limits<double>::infinity();
  return s / (stable_dim * top);
}

DissipativityReport strong_dissipativity_report(const VectorField& vf,
                                                const std::vector<EquilibriumRecord>& equilibria, double q,
                                                const std::vector<Vec>& samples,
                                                const DissipativityOptions& options) {
  if (samples.empty()) throw Error(ErrorCode::InvalidInput, "condition (b) needs at least one sample");
  const int n = vf.dimension();
  DissipativityReport rep;
  rep.q = q;
  rep.inflation = options.inflation;
  rep.stable_dim = equilibria.empty() ? std::max(1, n - 2) : equilibria.front().stable_dim;
  const int ds = rep.stable_dim;
  rep.condition_a_vacuous = equilibria.empty();

  // ell from Dirac measures at equilibria (exact) and the empirical spectrum.
  double ell = 1.0;
  std::string basis = "floor";
  for (const auto& eq : equilibria) {
    std::vector<double> re;
    for (const auto& l : eq.eigenvalues) re.push_back(l.real());
    const double r = ell_ratio(re, ds);
    if (r > ell) {
      ell = r;
      basis = "equilibria";
    }
  }
  if (!options.empirical_spectrum.empty()) {
    const double r = ell_ratio(options.empirical_spectrum, ds);
    if (r > ell) {
      ell = r;
      basis = "empirical-spectrum";
    }
  }
  if (options.ell > 0.0) {
    rep.ell = options.ell;
    rep.ell_basis = "given";
  } else {
    rep.ell = ell;
    rep.ell_basis = basis + " (lower approximation of the sup over ergodic measures)";
  }

  for (const auto& eq : equilibria) {
    if (eq.classification == EquilibriumClass::NonHyperbolic) {
      throw Error(ErrorCode::InvalidInput, "condition (a) refuses non-hyperbolic equilibria");
    }
    ConditionAMargin m;
    m.location = eq.location;
    m.base = eq.eigenvalues[static_cast<std::size_t>(ds - 1)].real() - eq.eigenvalues[static_cast<std::size_t>(ds)].real();
    m.top_real = eq.eigenvalues.back().real();
    m.margin = m.base + q * m.top_real;
    rep.condition_a.push_back(m);
    if (m.top_real > 0.0) {
      rep.q_max_a = std::min(rep.q_max_a, -m.base / m.top_real);
    } else if (m.base >= 0.0) {
      rep.q_max_a = -std::numeric_limits<double>::infinity();
    }
  }

  const double coef = rep.ell * ds * q - 1.0;
  const double coef_inflated = coef > 0.0 ? coef * (1.0 + options.inflation) : coef;
  double sup_raw = -std::numeric_limits<double>::infinity();
  double sup_inf = -std::numeric_limits<double>::infinity();
  const long count = static_cast<long>(samples.size());
#pragma omp parallel
  {
    Mat j(n, n);
    double local_raw = -std::numeric_limits<double>::infinity();
    double local_inf = -std::numeric_limits<double>::infinity();
#pragma omp for schedule(static)
    for (long i = 0; i < count; ++i) {
      vf.jacobian(samples[static_cast<std::size_t>(i)], j);
      const double div = j.trace();
      const double fro = j.norm();
      local_raw = std::max(local_raw, div + coef * fro);
      local_inf = std::max(local_inf, div + coef_inflated * fro);
    }
#pragma omp critical
    {
      sup_raw = std::max(sup_raw, local_raw);
      sup_inf = std::max(sup_inf, local_inf);
    }
  }
  rep.condition_b_sampled = sup_raw;
  rep.condition_b = sup_inf;
  rep.sample_count = samples.size();
  const bool a_ok = std::all_of(rep.condition_a.begin(), rep.condition_a.end(),
                                [](const ConditionAMargin& m) { return m.margin < 0.0; });
  rep.pass = a_ok && rep.condition_b < 0.0;
  return rep;
}

namespace {

// Row-scaled triangular product R = diag(exp(scale)) * C of the QR
// factors accumulated along an orbit, kept representable for long times.
struct GradedProduct {
  Vec scale;
  Mat c;

  explicit GradedProduct(int n) : scale(Vec::Zero(n)), c(Mat::Identity(n, n)) {}

  void push(const Mat& r) {
    const int n = static_cast<int>(scale.size());
    Mat m = r;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) m(i, j) *= std::exp(scale[j] - scale[i]);
    }
    // m = diag(e^-scale) R_k diag(e^scale), so R_k * R_old = diag(e^scale) m c
    c = m * c;
    for (int i = 0; i < n; ++i) {
      const double s = c.row(i).cwiseAbs().maxCoeff();
      if (s > 0.0) {
        c.row(i) /= s;
        scale[i] += std::log(s);
      }
    }
  }
};

}  // namespace

EtaValue eta_cocycle(const VectorField& vf, const Vec& x, double t, double q, int stable_dim, double tol) {
  const int n = vf.dimension();
  if (stable_dim < 1 || stable_dim >= n) throw Error(ErrorCode::InvalidInput, "stable dimension out of range");
  if (!(t > 0.0)) throw Error(ErrorCode::InvalidInput, "eta needs t > 0");
  TangentPropagator prop(vf, tol);
  GradedProduct prod(n);
  Vec cur = x;
  Mat frame = Mat::Identity(n, n);
  double logdet = 0.0;
  const long pieces = std::max(1L, static_cast<long>(std::ceil(t)));
  const double dt = t / static_cast<double>(pieces);
  for (long k = 0; k < pieces; ++k) {
    const TangentStep st = prop.advance(cur, frame, dt);
    cur = st.x;
    frame = st.q;
    logdet += st.logdet;
    prod.push(st.r);
  }
  // singular values of diag(e^scale) C, with the largest row scale factored out
  const double top = prod.scale.maxCoeff();
  Mat b = prod.c;
  for (int i = 0; i < n; ++i) b.row(i) *= std::exp(prod.scale[i] - top);
  Eigen::JacobiSVD<Mat, Eigen::NoQRPreconditioner> svd(b);
  const Vec sv = svd.singularValues();
  EtaValue out;
  double partial = 0.0;
  for (int i = 0; i < n; ++i) {
    double ls = top + std::log(sv[i]);
    if (i == n - 1) {
      // the smallest value from the determinant, where Jacobi loses digits
      ls = logdet - partial;
    }
    partial += ls;
    out.log_singular_values.push_back(ls);
  }
  const auto& ls = out.log_singular_values;
  const int s_idx = n - stable_dim;   // strongest E^s singular value
  const int cu_idx = s_idx - 1;       // weakest E^cu singular value
  out.splitting_gap = ls[static_cast<std::size_t>(cu_idx)] - ls[static_cast<std::size_t>(s_idx)];
  if (out.splitting_gap < 1e-6) {
    throw Error(ErrorCode::IllConditionedSplitting, "finite-time E^s/E^cu splitting not resolved");
  }
  out.eta = ls[static_cast<std::size_t>(s_idx)] - ls[static_cast<std::size_t>(cu_idx)] + q * ls[0];
  return out;
}

EtaTrend eta_cocycle_trend(const VectorField& vf, const std::vector<Vec>& points, const std::vector<double>& times,
                           double q, int stable_dim, double tol) {
  if (points.empty() || times.empty()) throw Error(ErrorCode::InvalidInput, "empty ensemble or time grid");
  EtaTrend out;
  out.times = times;
  std::vector<double> mean_eta(times.size(), 0.0);
  const long np = static_cast<long>(points.size());
  std::vector<double> values(points.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < np; ++i) {
      try {
        values[static_cast<std::size_t>(i)] =
            eta_cocycle(vf, points[static_cast<std::size_t>(i)], times[k], q, stable_dim, tol).eta;
      } catch (...) {
#pragma omp critical
        failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    mean_eta[k] = mean(values);
    out.mean_eta_over_t.push_back(mean_eta[k] / times[k]);
  }
  if (times.size() >= 2) out.slope = linear_fit(times, mean_eta).slope;
  return out;
}

}  // namespace singmix
