#include "singmix/suspension.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numeric>
#include <sstream>

#include "singmix/error.hpp"
#include "singmix/kernels.hpp"

namespace singmix {

FiberMap FiberMap::none() { return {}; }

FiberMap FiberMap::affine(const PiecewiseExpandingMap& f, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidInput, "fiber contraction must lie in (0, 1)");
  FiberMap g;
  g.gamma = gamma;
  g.hi = gamma / (1.0 - gamma);
  g.lo = -g.hi;
  auto base = std::make_shared<PiecewiseExpandingMap>(f);
  g.step = [base, gamma](double x, double y) { return (y + (base->branch_index(x) == 0 ? -1.0 : 1.0)) * gamma; };
  return g;
}

FiberMap FiberMap::geometric(const GeometricLorenzModel& model) {
  FiberMap g;
  const double e = -model.lambda3 / model.lambda1;
  g.gamma = model.nu;
  g.lo = -1.0;
  g.hi = 1.0;
  const double kappa = model.kappa, nu = model.nu;
  g.step = [=](double x, double y) { return (x > 0 ? kappa : -kappa) + nu * y * std::pow(std::abs(x), e); };
  return g;
}

SuspensionSemiflow::SuspensionSemiflow(const InducedMarkovMap& F, RoofFunction tau, FiberMap fiber)
    : F_(&F), tau_(std::move(tau)), fiber_(std::move(fiber)) {
  if (F.branches().empty()) throw Error(ErrorCode::InvalidInput, "induced map has no branches");
  refresh_ = F.base().bit_shift() && F.delta_lo() == 0.0 && F.delta_hi() == 1.0 &&
             std::all_of(F.branches().begin(), F.branches().end(), [](const InducedBranch& b) { return b.R == 1; });
}

double SuspensionSemiflow::roof(double x) const {
  if (F_->branch_of(x) < 0) throw Error(ErrorCode::CriticalCrossing, "base point outside the partition");
  return induced_roof(*F_, tau_, x);
}

SuspensionPoint SuspensionSemiflow::base_step(const SuspensionPoint& p, Rng* refresh) const {
  const int k = F_->branch_of(p.x);
  if (k < 0) throw Error(ErrorCode::CriticalCrossing, "base point outside the partition");
  SuspensionPoint q = p;
  q.u = 0.0;
  double next;
  if (refresh_ && refresh) {
    // 2x mod 1 is exact; a fresh random bit takes the vacated last place
    next = 2.0 * p.x;
    next -= std::floor(next);
    if (refresh->bits() & 1u) next += 0x1.0p-53;
  } else {
    next = F_->F(p.x);
  }
  if (!fiber_.trivial()) {
    for (double xj : F_->chain(k, F_->F(p.x))) q.y = fiber_.step(xj, q.y);
  }
  q.x = next;
  return q;
}

double SuspensionSemiflow::fiber_iterate(double x, double y, int n) const {
  SuspensionPoint p{x, y, 0.0};
  for (int i = 0; i < n; ++i) p = base_step(p);
  return p.y;
}

SuspensionPoint SuspensionSemiflow::evolve(SuspensionPoint p, double t, Rng* refresh, long* crossings) const {
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidInput, "evolve needs t >= 0");
  const auto& f = F_->base();
  p.u += t;
  for (long n = 0;; ++n) {
    if (f.on_critical(p.x)) throw Error(ErrorCode::CriticalCrossing, "orbit meets the critical set");
    const double r = roof(p.x);
    if (!(r > 0.0)) throw Error(ErrorCode::CriticalCrossing, "zero roof");
    if (p.u < r) break;
    if (n > 10'000'000) throw Error(ErrorCode::CriticalCrossing, "orbit stalls at vanishing roof");
    const double u = p.u - r;
    p = base_step(p, refresh);
    p.u = u;
    if (crossings) ++*crossings;
  }
  return p;
}

// ---------------------------------------------------------------------------

InvariantSampler::InvariantSampler(const SuspensionSemiflow& flow, const Eigenpair& density, int fiber_burn_in)
    : flow_(&flow), density_(density.f), burn_in_(fiber_burn_in) {
  const auto& F = flow.induced();
  if (density_.lo != F.delta_lo() || density_.hi != F.delta_hi()) {
    throw Error(ErrorCode::InvalidInput, "density is not on Delta");
  }
  if (!density.converged) warnings_.push_back("SpectralGapWarning: invariant density not converged");
  for (auto& v : density_.values) v = std::max(v.real(), 0.0);
  const double h = density_.step();
  cdf_.assign(density_.size(), 0.0);
  for (std::size_t i = 1; i < cdf_.size(); ++i) {
    cdf_[i] = cdf_[i - 1] + 0.5 * h * (density_.values[i - 1].real() + density_.values[i].real());
  }
  const double mass = cdf_.back();
  if (!(mass > 0.0)) throw Error(ErrorCode::InvalidInput, "density has no mass");
  for (auto& c : cdf_) c /= mass;
  for (auto& v : density_.values) v /= mass;
}

double InvariantSampler::density(double x) const { return density_(x).real(); }

double InvariantSampler::base(Rng& rng) const {
  const double target = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
  const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cdf_.begin(), 1) - 1, cdf_.size() - 2);
  const double h = density_.step();
  const double d0 = density_.values[i].real(), d1 = density_.values[i + 1].real();
  const double dc = target - cdf_[i];
  // solve d0 s + (d1 - d0) s^2 / (2h) = dc for s in [0, h]
  const double disc = d0 * d0 + 2.0 * (d1 - d0) * dc / h;
  const double denom = d0 + std::sqrt(std::max(disc, 0.0));
  const double s = denom > 0.0 ? std::clamp(2.0 * dc / denom, 0.0, h) : 0.5 * h;
  return std::min(density_.node(i) + s, std::nextafter(density_.hi, density_.lo));
}

double InvariantSampler::lebesgue(Rng& rng) const { return density_.lo + (density_.hi - density_.lo) * rng.uniform(); }

SuspensionPoint InvariantSampler::skew(Rng& rng) const {
  const auto& fib = flow_->fiber();
  if (fib.trivial()) return {base(rng), 0.0, 0.0};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    SuspensionPoint p{base(rng), rng.uniform(fib.lo, fib.hi), 0.0};
    try {
      for (int i = 0; i < burn_in_; ++i) p = flow_->base_step(p, &rng);
      flow_->roof(p.x);
      return p;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CriticalCrossing) throw;
    }
  }
  throw Error(ErrorCode::CriticalCrossing, "fiber push-forward keeps leaving the partition");
}

WeightedPoint InvariantSampler::suspension(Rng& rng) const {
  WeightedPoint w;
  w.point = skew(rng);
  w.weight = flow_->roof(w.point.x);
  w.point.u = w.weight * rng.uniform();
  return w;
}

WeightedPoint InvariantSampler::lebesgue_suspension(Rng& rng) const {
  WeightedPoint w;
  const auto& fib = flow_->fiber();
  w.point.x = lebesgue(rng);
  w.point.y = fib.trivial() ? 0.0 : rng.uniform(fib.lo, fib.hi);
  w.weight = flow_->roof(w.point.x);
  w.point.u = w.weight * rng.uniform();
  return w;
}

double InvariantSampler::integrate(const std::function<double(double)>& g) const {
  using Gauss = boost::math::quadrature::gauss<double, 7>;
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < density_.size(); ++i) {
    const double a = density_.node(i), b = i + 2 == density_.size() ? density_.hi : density_.node(i + 1);
    s += Gauss::integrate([&](double x) { return g(x) * density(x); }, a, b);
  }
  return s;
}

// ---------------------------------------------------------------------------

std::string CorrelationSeries::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "t,value,se\n";
  for (std::size_t i = 0; i < t.size(); ++i) os << t[i] << ',' << value[i] << ',' << se[i] << '\n';
  return os.str();
}

nlohmann::json CorrelationSeries::fit_json() const {
  nlohmann::json j;
  j["c"] = fit.rate;
  j["C"] = fit.prefactor;
  j["window"] = {fit.t_lo, fit.t_hi};
  j["r2"] = fit.r2;
  j["accepted"] = fit.accepted;
  return j;
}

namespace {

double batch_se(const std::vector<double>& v) {
  return v.size() < 2 ? 0.0 : std::sqrt(variance(v) / static_cast<double>(v.size()));
}

void check_grid(const std::vector<double>& t) {
  if (t.empty() || !(t.front() >= 0.0)) throw Error(ErrorCode::InvalidInput, "time grid must start at t >= 0");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw Error(ErrorCode::InvalidInput, "time grid must increase");
  }
}

// Fit, noise and recurrence flags from value and se.
void finalize(CorrelationSeries& s, double min_r2, double fit_from = -INFINITY) {
  std::vector<double> t, v, e;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    if (s.t[i] < fit_from) continue;
    t.push_back(s.t[i]);
    v.push_back(s.value[i]);
    e.push_back(s.se[i]);
  }
  s.fit = fit_exponential_decay(t, v, e, min_r2, FitMode::Envelope);
  s.no_signal = true;
  for (std::size_t i = 0; i < s.t.size(); ++i) s.no_signal = s.no_signal && std::abs(s.value[i]) <= 3.0 * s.se[i];
  s.noise_bound = 0.0;
  if (s.no_signal) {
    for (double x : s.value) s.noise_bound = std::max(s.noise_bound, std::abs(x));
  }

  const std::size_t n = s.t.size(), half = n / 2;
  if (n < 4) return;
  double early = 0.0, late = 0.0, late_se = 0.0;
  for (std::size_t i = 0; i < half; ++i) early = std::max(early, std::abs(s.value[i]));
  for (std::size_t i = half; i < n; ++i) {
    if (std::abs(s.value[i]) > late) {
      late = std::abs(s.value[i]);
      late_se = s.se[i];
    }
  }
  s.nondecaying = late >= 0.5 * early && late > 3.0 * late_se;
  if (!s.nondecaying) return;
  // first local maximum of the normalised autocorrelation above 1/2
  const double dt = s.t[1] - s.t[0];
  for (std::size_t i = 2; i < n; ++i) {
    if (std::abs(s.t[i] - s.t[i - 1] - dt) > 1e-9 * std::max(1.0, dt)) return;
  }
  std::vector<double> ac(half + 1, 0.0);
  for (std::size_t lag = 1; lag <= half; ++lag) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      sxy += s.value[i] * s.value[i + lag];
      sxx += s.value[i] * s.value[i];
      syy += s.value[i + lag] * s.value[i + lag];
    }
    ac[lag] = sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  }
  for (std::size_t lag = 2; lag < half; ++lag) {
    if (ac[lag] > 0.5 && ac[lag] >= ac[lag - 1] && ac[lag] >= ac[lag + 1] &&
        *std::min_element(ac.begin() + 1, ac.begin() + static_cast<std::ptrdiff_t>(lag)) < ac[lag]) {
      s.period = static_cast<double>(lag) * dt;
      return;
    }
  }
}

// Per-batch weighted sums over sample paths.
struct PathSums {
  double W = 0.0;
  double Spsi = 0.0;
  std::vector<double> Sphi, Sphipsi;
  std::size_t samples = 0, dropped = 0;
};

template <class Draw, class Record>
std::vector<PathSums> run_paths(const InvariantSampler& sampler, const std::vector<double>& grid,
                                const MonteCarloOptions& opt, std::uint64_t stream_offset, Draw draw,
                                Record record) {
  if (opt.batches == 0 || opt.samples < opt.batches) {
    throw Error(ErrorCode::InvalidInput, "need at least one sample per batch");
  }
  const auto& flow = sampler.flow();
  return map_chunks<PathSums>(opt.batches, opt.exec, [&](std::size_t b) {
    Rng rng(opt.seed, stream_offset + b);
    PathSums s;
    s.Sphi.assign(grid.size(), 0.0);
    s.Sphipsi.assign(grid.size(), 0.0);
    std::vector<double> vals(grid.size());
    const std::size_t n = chunk_begin(opt.samples, opt.batches, b + 1) - chunk_begin(opt.samples, opt.batches, b);
    for (std::size_t k = 0; k < n; ++k) {
      const WeightedPoint w = draw(rng);
      double psi0 = 0.0;
      try {
        SuspensionPoint p = w.point;
        long crossings = 0;
        double t_prev = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
          p = flow.evolve(p, grid[i] - t_prev, &rng, &crossings);
          t_prev = grid[i];
          vals[i] = record(p, crossings);
        }
        psi0 = record.psi(w.point);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::CriticalCrossing) throw;
        ++s.dropped;
        continue;
      }
      ++s.samples;
      s.W += w.weight;
      s.Spsi += w.weight * psi0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        s.Sphi[i] += w.weight * vals[i];
        s.Sphipsi[i] += w.weight * vals[i] * psi0;
      }
    }
    return s;
  });
}

struct PairRecord {
  const SuspensionObservable* phi;
  const SuspensionObservable* psi_fn;
  double operator()(const SuspensionPoint& p, long) const { return (*phi)(p); }
  double psi(const SuspensionPoint& p) const { return (*psi_fn)(p); }
};

struct VisitRecord {
  double log_base;  // alpha log gamma
  double operator()(const SuspensionPoint&, long w) const { return std::exp(log_base * static_cast<double>(w)); }
  double psi(const SuspensionPoint&) const { return 1.0; }
};

}  // namespace

CorrelationSeries correlation_estimator(const InvariantSampler& sampler, const SuspensionObservable& phi,
                                        const SuspensionObservable& psi, const std::vector<double>& t_grid,
                                        const MonteCarloOptions& opt) {
  check_grid(t_grid);
  const auto sums = run_paths(sampler, t_grid, opt, 0, [&](Rng& rng) { return sampler.suspension(rng); },
                              PairRecord{&phi, &psi});
  CorrelationSeries s;
  s.t = t_grid;
  PathSums all;
  all.Sphi.assign(t_grid.size(), 0.0);
  all.Sphipsi.assign(t_grid.size(), 0.0);
  for (const auto& b : sums) {
    all.W += b.W;
    all.Spsi += b.Spsi;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      all.Sphi[i] += b.Sphi[i];
      all.Sphipsi[i] += b.Sphipsi[i];
    }
    s.samples += b.samples;
    s.dropped += b.dropped;
  }
  auto rho = [&](const PathSums& b, std::size_t i) {
    return b.Sphipsi[i] / b.W - (b.Spsi / b.W) * (b.Sphi[i] / b.W);
  };
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    s.value.push_back(rho(all, i));
    std::vector<double> per;
    for (const auto& b : sums) {
      if (b.W > 0.0) per.push_back(rho(b, i));
    }
    s.se.push_back(batch_se(per));
  }
  finalize(s, opt.min_r2);
  return s;
}

EquilibriumSeries equilibrium_convergence(const InvariantSampler& sampler, const SuspensionObservable& phi,
                                          const SuspensionObservable& psi, const std::vector<double>& t_grid,
                                          const MonteCarloOptions& opt) {
  check_grid(t_grid);
  const auto leb = run_paths(sampler, t_grid, opt, 0, [&](Rng& rng) { return sampler.lebesgue_suspension(rng); },
                             PairRecord{&phi, &psi});
  // int phi dmu^r from independent streams, one estimate per batch
  const std::vector<double> zero{0.0};
  const auto inv = run_paths(sampler, zero, opt, opt.batches, [&](Rng& rng) { return sampler.suspension(rng); },
                             PairRecord{&phi, &psi});
  EquilibriumSeries out;
  auto& s = out.series;
  s.t = t_grid;
  double W = 0.0, Spsi = 0.0, Wmu = 0.0, Smu = 0.0;
  std::vector<double> Sphipsi(t_grid.size(), 0.0);
  for (std::size_t b = 0; b < leb.size(); ++b) {
    W += leb[b].W;
    Spsi += leb[b].Spsi;
    for (std::size_t i = 0; i < t_grid.size(); ++i) Sphipsi[i] += leb[b].Sphipsi[i];
    Wmu += inv[b].W;
    Smu += inv[b].Sphi[0];
    s.samples += leb[b].samples + inv[b].samples;
    s.dropped += leb[b].dropped + inv[b].dropped;
  }
  out.leb_psi = Spsi / W;
  out.mu_phi = Smu / Wmu;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    out.leb_phi.push_back(Sphipsi[i] / W);
    s.value.push_back(out.leb_phi[i] - out.leb_psi * out.mu_phi);
    std::vector<double> per;
    for (std::size_t b = 0; b < leb.size(); ++b) {
      if (leb[b].W > 0.0 && inv[b].W > 0.0) {
        per.push_back(leb[b].Sphipsi[i] / leb[b].W - (leb[b].Spsi / leb[b].W) * (inv[b].Sphi[0] / inv[b].W));
      }
    }
    s.se.push_back(batch_se(per));
  }
  finalize(s, opt.min_r2);
  return out;
}

CorrelationSeries visits_statistic(const InvariantSampler& sampler, double gamma, double alpha,
                                   const std::vector<double>& t_grid, const MonteCarloOptions& opt) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidInput, "gamma must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidInput, "alpha must lie in (0, 1]");
  check_grid(t_grid);
  const auto sums = run_paths(sampler, t_grid, opt, 0, [&](Rng& rng) { return sampler.suspension(rng); },
                              VisitRecord{alpha * std::log(gamma)});
  CorrelationSeries s;
  s.t = t_grid;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    double W = 0.0, S = 0.0;
    std::vector<double> per;
    for (const auto& b : sums) {
      W += b.W;
      S += b.Sphi[i];
      if (b.W > 0.0) per.push_back(b.Sphi[i] / b.W);
    }
    s.value.push_back(S / W);
    s.se.push_back(batch_se(per));
  }
  for (const auto& b : sums) {
    s.samples += b.samples;
    s.dropped += b.dropped;
  }
  finalize(s, opt.min_r2);
  return s;
}

double visits_unit_roof(double gamma, double alpha, double t) {
  const double n = std::floor(t), frac = t - n;
  return (1.0 - frac) * std::pow(gamma, alpha * n) + frac * std::pow(gamma, alpha * (n + 1.0));
}

FiberContraction fiber_contraction(const InvariantSampler& sampler, int n_max, std::size_t triples,
                                   std::uint64_t seed) {
  const auto& flow = sampler.flow();
  const auto& fib = flow.fiber();
  if (fib.trivial()) throw Error(ErrorCode::InvalidInput, "trivial fiber");
  FiberContraction out;
  out.gamma = fib.gamma;
  out.max_ratio.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
  Rng rng(seed);
  for (std::size_t k = 0; k < triples; ++k) {
    SuspensionPoint a{sampler.base(rng), rng.uniform(fib.lo, fib.hi), 0.0};
    SuspensionPoint b = a;
    b.y = rng.uniform(fib.lo, fib.hi);
    const double d0 = std::abs(a.y - b.y);
    if (d0 == 0.0) continue;
    out.max_ratio[0] = std::max(out.max_ratio[0], 1.0);
    try {
      for (int n = 1; n <= n_max; ++n) {
        a = flow.base_step(a);
        b = flow.base_step(b);  // deterministic, so both follow the same base orbit
        out.max_ratio[n] = std::max(out.max_ratio[n], std::abs(a.y - b.y) / d0);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CriticalCrossing) throw;
    }
  }
  for (int n = 0; n <= n_max; ++n) out.C = std::max(out.C, out.max_ratio[n] / std::pow(out.gamma, n));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Samples phi and psi at t = transient + k dt along one orbit, using the
// continuous extension of each accepted step.
class OrbitSampler {
 public:
  OrbitSampler(const VectorField& vf, const Vec& x0, const FlowOptions& opt)
      : stepper_(vf, x0, 0.0, integrator(opt)), dt_(opt.dt), next_(opt.transient), state_(vf.dimension()) {
    if (!(opt.dt > 0.0) || !(opt.transient >= 0.0)) throw Error(ErrorCode::InvalidInput, "need dt > 0, transient >= 0");
  }

  const Vec& next() {
    while (stepper_.t() < next_) stepper_.step();
    if (stepper_.steps() == 0) {
      state_ = stepper_.state();
    } else {
      stepper_.dense(next_, state_);
    }
    ++count_;
    next_ = start_ + static_cast<double>(count_) * dt_;
    return state_;
  }

 private:
  static IntegratorOptions integrator(const FlowOptions& opt) {
    IntegratorOptions io;
    io.tol = opt.tol;
    return io;
  }

  Dopri5 stepper_;
  double dt_;
  double next_;
  double start_ = next_;
  long count_ = 0;
  Vec state_;
};

std::vector<double> prefix(const std::vector<double>& v) {
  std::vector<double> p(v.size() + 1, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) p[i + 1] = p[i] + v[i];
  return p;
}

}  // namespace

CorrelationSeries flow_correlation(const VectorField& vf, const FlowObservable& phi, const FlowObservable& psi,
                                   double t_max, double orbit_length, const Vec& x0, const FlowOptions& opt) {
  const auto lags = static_cast<std::size_t>(std::llround(t_max / opt.dt));
  const auto total = static_cast<std::size_t>(std::llround(orbit_length / opt.dt));
  if (opt.batches < 2 || total < opt.batches * (lags + 2)) {
    throw Error(ErrorCode::InvalidInput, "orbit too short for the lag range and batch count");
  }
  OrbitSampler orbit(vf, x0, opt);
  const std::size_t m = total / opt.batches;
  // each batch owns m start points and borrows `lags` samples from the next
  std::vector<double> a(m + lags), b(m + lags);
  for (std::size_t i = 0; i < lags; ++i) {
    const Vec& x = orbit.next();
    a[m + i] = psi(x);
    b[m + i] = phi(x);
  }
  std::vector<std::vector<double>> per(lags + 1);
  for (std::size_t batch = 0; batch < opt.batches; ++batch) {
    std::copy(a.begin() + m, a.end(), a.begin());
    std::copy(b.begin() + m, b.end(), b.begin());
    for (std::size_t i = lags; i < m + lags; ++i) {
      const Vec& x = orbit.next();
      a[i] = psi(x);
      b[i] = phi(x);
    }
    const auto raw = lagged_products(a, b, lags, opt.exec);
    const auto pa = prefix(a), pb = prefix(b);
    const double n = static_cast<double>(m);
    for (std::size_t lag = 0; lag <= lags; ++lag) {
      // pairs (i, i + lag) for i < m; raw runs over i + lag < m + lags
      double s = raw[lag];
      for (std::size_t i = m; i + lag < m + lags; ++i) s -= a[i] * b[i + lag];
      const double ma = pa[m] / n, mb = (pb[m + lag] - pb[lag]) / n;
      per[lag].push_back(s / n - ma * mb);
    }
  }
  CorrelationSeries out;
  out.samples = m * opt.batches;
  for (std::size_t lag = 0; lag <= lags; ++lag) {
    out.t.push_back(static_cast<double>(lag) * opt.dt);
    out.value.push_back(mean(per[lag]));
    out.se.push_back(batch_se(per[lag]));
  }
  finalize(out, opt.min_r2, opt.fit_from);
  return out;
}

EquilibriumSeries flow_equilibrium_convergence(const VectorField& vf, const FlowObservable& phi,
                                               const FlowObservable& psi, const std::vector<double>& t_grid,
                                               std::size_t samples, double mu_orbit_length, const Vec& x0,
                                               std::uint64_t seed, const FlowOptions& opt) {
  check_grid(t_grid);
  if (!vf.trapping_region()) throw Error(ErrorCode::InvalidInput, "field has no trapping region");
  if (samples < opt.batches || opt.batches < 2) throw Error(ErrorCode::InvalidInput, "need a sample per batch");
  const Box& box = *vf.trapping_region();
  EquilibriumSeries out;
  {
    OrbitSampler orbit(vf, x0, opt);
    const auto n = static_cast<std::size_t>(std::llround(mu_orbit_length / opt.dt));
    if (n == 0) throw Error(ErrorCode::InvalidInput, "empty reference orbit");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += phi(orbit.next());
    out.mu_phi = s / static_cast<double>(n);
  }
  struct Sums {
    double Spsi = 0.0;
    std::vector<double> Sphipsi;
    std::size_t n = 0;
  };
  IntegratorOptions io;
  io.tol = opt.tol;
  const auto sums = map_chunks<Sums>(opt.batches, opt.exec, [&](std::size_t b) {
    Rng rng(seed, b);
    Sums s;
    s.Sphipsi.assign(t_grid.size(), 0.0);
    s.n = chunk_begin(samples, opt.batches, b + 1) - chunk_begin(samples, opt.batches, b);
    Vec x(vf.dimension());
    for (std::size_t k = 0; k < s.n; ++k) {
      for (int d = 0; d < x.size(); ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
      const double p0 = psi(x);
      Dopri5 stepper(vf, x, 0.0, io);
      s.Spsi += p0;
      for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (t_grid[i] > 0.0) stepper.advance_to(t_grid[i]);
        s.Sphipsi[i] += phi(stepper.state()) * p0;
      }
    }
    return s;
  });
  auto& series = out.series;
  series.t = t_grid;
  series.samples = samples;
  double Spsi = 0.0;
  for (const auto& s : sums) Spsi += s.Spsi;
  out.leb_psi = Spsi / static_cast<double>(samples);
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    double S = 0.0;
    std::vector<double> per;
    for (const auto& s : sums) {
      S += s.Sphipsi[i];
      per.push_back((s.Sphipsi[i] - s.Spsi * out.mu_phi) / static_cast<double>(s.n));
    }
    out.leb_phi.push_back(S / static_cast<double>(samples));
    series.value.push_back(out.leb_phi[i] - out.leb_psi * out.mu_phi);
    series.se.push_back(batch_se(per));
  }
  finalize(series, opt.min_r2, opt.fit_from);
  return out;
}

nlohmann::json CltReport::to_json() const {
  nlohmann::json j;
  j["n_blocks"] = n_blocks;
  j["block_len"] = block_len;
  j["mean"] = mean;
  j["sigma"] = sigma;
  j["ks"] = degenerate ? nlohmann::json(nullptr) : nlohmann::json(ks);
  j["var_short"] = var_short;
  j["var_long"] = var_long;
  j["variance_change"] = variance_change;
  j["degenerate"] = degenerate;
  j["flags"] = flags;
  return j;
}

CltReport clt_check(const VectorField& vf, const FlowObservable& phi, std::size_t n_blocks, std::size_t block_len,
                    const Vec& x0, const FlowOptions& options) {
  if (n_blocks < 8 || block_len < 1) throw Error(ErrorCode::InvalidInput, "need n_blocks >= 8 and block_len >= 1");
  FlowOptions opt = options;
  opt.dt = 1.0;  // time-1 map
  OrbitSampler orbit(vf, x0, opt);
  std::vector<double> sums(n_blocks, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    for (std::size_t k = 0; k < block_len; ++k) sums[b] += phi(orbit.next());
    total += sums[b];
  }
  CltReport r;
  r.n_blocks = n_blocks;
  r.block_len = block_len;
  r.mean = total / static_cast<double>(n_blocks * block_len);
  const double n = static_cast<double>(block_len);
  std::vector<double> z(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) z[b] = (sums[b] - n * r.mean) / std::sqrt(n);
  const std::size_t long_blocks = n_blocks / 4;
  std::vector<double> zl(long_blocks);
  for (std::size_t b = 0; b < long_blocks; ++b) {
    const double s = sums[4 * b] + sums[4 * b + 1] + sums[4 * b + 2] + sums[4 * b + 3];
    zl[b] = (s - 4.0 * n * r.mean) / std::sqrt(4.0 * n);
  }
  r.var_short = variance(z);
  r.var_long = variance(zl);
  r.sigma = std::sqrt(r.var_short);
  const double scale = std::max(1.0, std::abs(r.mean));
  if (r.sigma <= 1e-12 * scale) {
    r.degenerate = true;
    r.flags.push_back("degenerate: sigma = 0, the periodic-orbit characterisation of this case is not tested");
    return r;
  }
  r.ks = ks_distance_normal(z, singmix::mean(z), r.sigma);
  r.variance_change = std::abs(r.var_long / r.var_short - 1.0);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

// Ambient embedding of the geometric model: Sigma = {(x, 2, y)}, a straight
// leg of duration g1 to the box entry (x, 1, y), the linear box flow, and a
// straight leg of duration g2 from the exit to the next section point.
struct Excursion {
  double x, y;  // on Sigma
  double x_next, y_next;
  double box_time;
};

Vec excursion_point(const GeometricLorenzModel& m, const Excursion& e, double u) {
  Vec p(3);
  const double s = e.x > 0 ? 1.0 : -1.0;
  if (u < m.g1) {
    p << e.x, 2.0 - u / m.g1, e.y;
    return p;
  }
  u -= m.g1;
  if (u < e.box_time) {
    p << e.x * std::exp(m.lambda1 * u), std::exp(m.lambda2 * u), e.y * std::exp(m.lambda3 * u);
    return p;
  }
  u = std::min(u - e.box_time, m.g2) / m.g2;
  const double ax = std::abs(e.x);
  Vec a(3), b(3);
  a << s, std::pow(ax, m.alpha()), e.y * std::pow(ax, -m.lambda3 / m.lambda1);
  b << e.x_next, 2.0, e.y_next;
  return a + u * (b - a);
}

Excursion excursion(const GeometricLorenzModel& m, double x, double y, double x_next) {
  if (std::abs(x) < m.gamma_radius) throw Error(ErrorCode::OnGamma, "point within the exclusion radius of Gamma");
  const double s = x > 0 ? 1.0 : -1.0;
  const double y_next = s * m.kappa + m.nu * y * std::pow(std::abs(x), -m.lambda3 / m.lambda1);
  return {x, y, x_next, y_next, -std::log(std::abs(x)) / m.lambda1};
}

Vec flow_along(const GeometricLorenzModel& m, const std::vector<double>& xs, double x_end, double y, double u) {
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const double next = j + 1 < xs.size() ? xs[j + 1] : x_end;
    const Excursion e = excursion(m, xs[j], y, next);
    const double tau = m.g1 + e.box_time + m.g2;
    if (u < tau || j + 1 == xs.size()) return excursion_point(m, e, u);
    u -= tau;
    y = e.y_next;
  }
  throw Error(ErrorCode::InvalidInput, "empty orbit");
}

}  // namespace

Vec geometric_flow_point(const GeometricLorenzModel& model, double x, double y, double u) {
  if (!(u >= 0.0)) throw Error(ErrorCode::InvalidInput, "u must be nonnegative");
  for (;;) {
    const Excursion e = excursion(model, x, y, model.quotient(x));
    const double tau = model.g1 + e.box_time + model.g2;
    if (u < tau) return excursion_point(model, e, u);
    u -= tau;
    x = e.x_next;
    y = e.y_next;
  }
}

nlohmann::json SemiconjugacyReport::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["max_ratio"] = max_ratio;
  j["tested"] = tested;
  j["skipped"] = skipped;
  j["speed_bound"] = speed_bound;
  j["max_u_ratio"] = max_u_ratio;
  j["stable"] = stable;
  return j;
}

SemiconjugacyReport semiconjugacy_diagnostic(const GeometricLorenzModel& model, const InducedMarkovMap& F,
                                             const SemiconjugacyOptions& opt) {
  if (opt.levels < 1 || opt.pairs == 0) throw Error(ErrorCode::InvalidInput, "need levels >= 1 and pairs");
  const auto& br = F.branches();
  SemiconjugacyReport rep;
  rep.alpha = opt.alpha;
  rep.max_ratio.assign(static_cast<std::size_t>(opt.levels), 0.0);
  const double box_speed = std::sqrt(model.lambda1 * model.lambda1 + model.lambda2 * model.lambda2 +
                                     model.lambda3 * model.lambda3);
  rep.speed_bound = std::max({1.0 / model.g1, box_speed, std::sqrt(12.0) / model.g2});

  std::vector<double> cum(br.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < br.size(); ++k) cum[k] = acc += br[k].length();
  const RoofFunction tau = model_roof(model.g1, model.g2, model.lambda1);
  auto point = [&](int k, double x, double y, double u) {
    const double fx = F.F(x);
    return flow_along(model, F.chain(k, fx), fx, y, u);
  };

  Rng rng(opt.seed);
  for (int level = 1; level <= opt.levels; ++level) {
    const double scale = std::ldexp(1.0, -level);
    for (std::size_t q = 0; q < opt.pairs; ++q) {
      const double pick = rng.uniform() * acc;
      const int k = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), pick) - cum.begin());
      const auto& b = br[static_cast<std::size_t>(std::min<std::size_t>(k, br.size() - 1))];
      const double x1 = b.lo + rng.uniform() * b.length();
      const double x2 = x1 + (rng.uniform() - 0.5) * 2.0 * scale * b.length();
      const double y1 = rng.uniform(-1.0, 1.0);
      const double y2 = std::clamp(y1 + (rng.uniform() - 0.5) * 2.0 * scale, -1.0, 1.0);
      if (F.branch_of(x2) != F.branch_of(x1) || F.branch_of(x1) < 0) {
        ++rep.skipped;
        continue;
      }
      const int kk = F.branch_of(x1);
      const double r1 = induced_roof(F, tau, x1), r2 = induced_roof(F, tau, x2);
      const double u1 = rng.uniform() * std::min(r1, r2);
      const double u2 = std::clamp(u1 + (rng.uniform() - 0.5) * 2.0 * scale, 0.0, std::nextafter(std::min(r1, r2), 0.0));
      const double denom = std::pow(std::abs(F.F(x1) - F.F(x2)), opt.alpha) + std::abs(y1 - y2) + std::abs(u1 - u2);
      if (denom == 0.0) continue;  // identical points
      const Vec p1 = point(kk, x1, y1, u1), p2 = point(kk, x2, y2, u2);
      ++rep.tested;
      const std::size_t li = static_cast<std::size_t>(level - 1);
      rep.max_ratio[li] = std::max(rep.max_ratio[li], (p1 - p2).norm() / denom);
      if (u1 != u2) {
        const Vec p3 = point(kk, x1, y1, u2);
        rep.max_u_ratio = std::max(rep.max_u_ratio, (p1 - p3).norm() / std::abs(u1 - u2));
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(rep.max_ratio.begin(), rep.max_ratio.end());
  rep.stable = *lo > 0.0 && *hi <= 2.0 * *lo;
  return rep;
}

}  // namespace singmix
