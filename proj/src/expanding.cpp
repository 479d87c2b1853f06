#include "singmix/expanding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "singmix/fit.hpp"

namespace singmix {

bool Branch::contains(double x) const {
  const bool above = x > lo || (lo_closed && x == lo);
  const bool below = x < hi || (hi_closed && x == hi);
  return above && below;
}

PiecewiseExpandingMap::PiecewiseExpandingMap(std::string family, double lo, double hi, std::vector<Branch> branches,
                                             std::vector<CriticalPoint> critical,
                                             std::map<std::string, double> parameters)
    : family_(std::move(family)),
      lo_(lo),
      hi_(hi),
      branches_(std::move(branches)),
      critical_(std::move(critical)),
      parameters_(std::move(parameters)) {
  if (!(lo_ < hi_) || branches_.empty()) throw Error(ErrorCode::InvalidInput, "empty interval map");
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& b = branches_[i];
    if (!(b.lo < b.hi) || b.lo < lo_ || b.hi > hi_) throw Error(ErrorCode::InvalidInput, "branch outside domain");
    if (!b.map || !b.derivative || !b.inverse) throw Error(ErrorCode::InvalidInput, "branch without evaluators");
    for (std::size_t j = 0; j < i; ++j) {
      if (b.lo < branches_[j].hi && branches_[j].lo < b.hi) throw Error(ErrorCode::InvalidInput, "overlapping branches");
    }
  }
  for (const auto& c : critical_) {
    if (c.singular && (c.alpha_minus < 0.0 || c.alpha_minus >= 1.0 || c.alpha_plus < 0.0 || c.alpha_plus >= 1.0)) {
      throw Error(ErrorCode::InvalidInput, "singular point needs orders in [0, 1)");
    }
  }
}

bool PiecewiseExpandingMap::on_critical(double x) const {
  for (const auto& c : critical_) {
    if (x == c.location) return true;
  }
  return false;
}

int PiecewiseExpandingMap::branch_index(double x) const {
  if (on_critical(x)) return -1;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    if (branches_[i].contains(x)) return static_cast<int>(i);
  }
  return -1;
}

double PiecewiseExpandingMap::operator()(double x) const {
  const int i = branch_index(x);
  if (i < 0) {
    if (on_critical(x)) throw Error(ErrorCode::OrbitOnCriticalSet, "map evaluated on the critical set");
    throw Error(ErrorCode::InvalidInput, "point outside the domain");
  }
  return branches_[i].map(x);
}

double PiecewiseExpandingMap::derivative(double x) const {
  const int i = branch_index(x);
  if (i < 0) {
    if (on_critical(x)) throw Error(ErrorCode::OrbitOnCriticalSet, "derivative on the critical set");
    throw Error(ErrorCode::InvalidInput, "point outside the domain");
  }
  return branches_[i].derivative(x);
}

double PiecewiseExpandingMap::distance_to_critical(double x) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& c : critical_) d = std::min(d, std::abs(x - c.location));
  return d;
}

double PiecewiseExpandingMap::min_expansion(int samples_per_branch) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& b : branches_) {
    auto probe = [&](double x) {
      if (!on_critical(x)) m = std::min(m, std::abs(b.derivative(x)));
    };
    for (int i = 0; i < samples_per_branch; ++i) probe(b.lo + (i + 0.5) / samples_per_branch * (b.hi - b.lo));
    if (b.lo_closed) probe(b.lo);
    if (b.hi_closed) probe(b.hi);
  }
  return m;
}

PiecewiseExpandingMap doubling_map(bool critical_at_zero) {
  Branch left{0.0, 0.5, true, false, [](double x) { return 2.0 * x; }, [](double) { return 2.0; },
              [](double y) { return 0.5 * y; }, 0.0, 1.0};
  Branch right{0.5, 1.0, true, false, [](double x) { return 2.0 * x - 1.0; }, [](double) { return 2.0; },
               [](double y) { return 0.5 * (y + 1.0); }, 0.0, 1.0};
  std::vector<CriticalPoint> crit;
  if (critical_at_zero) crit.push_back(CriticalPoint{0.0, false, 1.0, 1.0, 2.0, 2.0});
  return PiecewiseExpandingMap("doubling", 0.0, 1.0, {left, right}, crit,
                               {{"critical_at_zero", critical_at_zero ? 1.0 : 0.0}});
}

PiecewiseExpandingMap lorenz_like_map(double c, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidInput, "alpha must lie in (0, 1)");
  if (!(c * alpha > 1.0 && c <= 2.0)) throw Error(ErrorCode::InvalidInput, "need c*alpha > 1 and c <= 2");
  const double inv_alpha = 1.0 / alpha;
  Branch neg{-1.0, 0.0, true, false,
             [=](double x) { return 1.0 - c * std::pow(-x, alpha); },
             [=](double x) { return c * alpha * std::pow(-x, alpha - 1.0); },
             [=](double y) { return -std::pow((1.0 - y) / c, inv_alpha); }, 1.0 - c, 1.0};
  Branch pos{0.0, 1.0, false, true,
             [=](double x) { return c * std::pow(x, alpha) - 1.0; },
             [=](double x) { return c * alpha * std::pow(x, alpha - 1.0); },
             [=](double y) { return std::pow((y + 1.0) / c, inv_alpha); }, -1.0, c - 1.0};
  return PiecewiseExpandingMap("lorenz-like", -1.0, 1.0, {neg, pos}, {CriticalPoint{0.0, true, alpha, alpha, c, c}},
                               {{"c", c}, {"alpha", alpha}});
}

PiecewiseExpandingMap map_from_config(const std::string& family, const std::map<std::string, double>& params) {
  auto get = [&](const char* key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  if (family == "doubling") {
    for (const auto& [k, v] : params) {
      if (k != "critical_at_zero") throw Error(ErrorCode::InvalidInput, "unknown doubling parameter " + k);
    }
    return doubling_map(get("critical_at_zero", 0.0) != 0.0);
  }
  if (family == "lorenz-like") {
    for (const auto& [k, v] : params) {
      if (k != "c" && k != "alpha") throw Error(ErrorCode::InvalidInput, "unknown lorenz-like parameter " + k);
    }
    return lorenz_like_map(get("c", 1.95), get("alpha", 0.75));
  }
  throw Error(ErrorCode::InvalidInput, "unknown map family " + family);
}

double dist_delta(double x, const std::vector<double>& critical, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidInput, "delta must lie in (0, 1)");
  if (critical.empty()) return 1.0;
  double d = std::numeric_limits<double>::infinity();
  for (double c : critical) d = std::min(d, std::abs(x - c));
  if (d == 0.0) throw Error(ErrorCode::ZeroDistance, "point lies in the critical set");
  if (d <= delta) return d;
  if (d < 2.0 * delta) return (1.0 - delta) / delta * d + 2.0 * delta - 1.0;
  return 1.0;
}

double dist_delta(const PiecewiseExpandingMap& f, double x, double delta) {
  std::vector<double> locs;
  locs.reserve(f.critical().size());
  for (const auto& c : f.critical()) locs.push_back(c.location);
  return dist_delta(x, locs, delta);
}

std::vector<double> orbit(const PiecewiseExpandingMap& f, double x0, std::size_t length) {
  std::vector<double> out;
  out.reserve(length);
  double x = x0;
  for (std::size_t k = 0; k < length; ++k) {
    if (f.on_critical(x)) throw Error(ErrorCode::OrbitOnCriticalSet, "orbit hits the critical set");
    out.push_back(x);
    if (k + 1 < length) x = f(x);
  }
  return out;
}

std::vector<double> sample_orbit(const PiecewiseExpandingMap& f, double x0, std::size_t length, Rng& rng) {
  if (!f.bit_shift()) return orbit(f, x0, length);
  if (!(x0 >= 0.0 && x0 < 1.0)) throw Error(ErrorCode::InvalidInput, "doubling orbit must start in [0, 1)");
  // 64-bit window on the binary expansion; bits below the double's
  // resolution are filled from rng as they are shifted in.
  std::uint64_t s = static_cast<std::uint64_t>(std::ldexp(x0, 64)) | (rng.bits() >> 53);
  std::uint64_t buffer = 0;
  int left = 0;
  std::vector<double> out;
  out.reserve(length);
  for (std::size_t k = 0; k < length; ++k) {
    const double x = static_cast<double>(s >> 11) * 0x1.0p-53;
    if (f.on_critical(x)) throw Error(ErrorCode::OrbitOnCriticalSet, "orbit hits the critical set");
    out.push_back(x);
    if (left == 0) {
      buffer = rng.bits();
      left = 64;
    }
    s = (s << 1) | (buffer & 1u);
    buffer >>= 1;
    --left;
  }
  return out;
}

HyperbolicTimeRecord hyperbolic_times_on_orbit(const PiecewiseExpandingMap& f, const std::vector<double>& orb,
                                               double sigma, double b, double delta) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw Error(ErrorCode::InvalidInput, "sigma must lie in (0, 1)");
  if (!(b > 0.0 && b < 0.5)) throw Error(ErrorCode::InvalidInput, "b must lie in (0, 1/2)");
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidInput, "delta must be positive");
  const int horizon = static_cast<int>(orb.size());
  HyperbolicTimeRecord rec;
  rec.x = orb.empty() ? 0.0 : orb.front();
  rec.sigma = sigma;
  rec.b = b;
  rec.delta = delta;
  rec.horizon = horizon;
  if (horizon == 0) return rec;

  const bool no_critical = f.critical().empty();
  std::vector<double> ld(horizon), lg(horizon);
  for (int j = 0; j < horizon; ++j) {
    if (f.on_critical(orb[j])) throw Error(ErrorCode::OrbitOnCriticalSet, "orbit hits the critical set");
    ld[j] = std::log(std::abs(f.derivative(orb[j])));
    lg[j] = no_critical ? 0.0 : std::log(dist_delta(f, orb[j], delta));
  }
  const double ls = std::log(sigma);
  // Rounding slack for the log-space comparisons; equality counts as a pass.
  auto slack = [](double scale) { return 1e-12 * (1.0 + std::abs(scale)); };

  // Candidates from prefix sums: A_n >= max_{j<n} A_j and
  // min_{j<n} B_j >= n b log(sigma). Each one is then confirmed directly.
  double s = 0.0, max_a = 0.0, min_b = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= horizon; ++n) {
    const int j = n - 1;
    max_a = std::max(max_a, s + j * ls);
    min_b = std::min(min_b, lg[j] + j * b * ls);
    s += ld[j];
    const double a_n = s + n * ls;
    if (a_n < max_a - 1e-9 * (1.0 + std::abs(s)) || min_b < n * b * ls - 1e-9 * (1.0 + n)) continue;
    bool ok = true;
    double acc = 0.0;
    for (int k = 1; k <= n && ok; ++k) {
      const int i = n - k;
      acc += ld[i];
      ok = acc >= -k * ls - slack(k * ls) && lg[i] >= k * b * ls - slack(k * b * ls);
    }
    if (ok) rec.times.push_back(n);
  }
  rec.density = static_cast<double>(rec.times.size()) / horizon;
  return rec;
}

HyperbolicTimeRecord hyperbolic_times(const PiecewiseExpandingMap& f, double x, int horizon, double sigma, double b,
                                      double delta) {
  if (horizon < 1) throw Error(ErrorCode::InvalidInput, "horizon must be positive");
  auto rec = hyperbolic_times_on_orbit(f, orbit(f, x, static_cast<std::size_t>(horizon)), sigma, b, delta);
  rec.x = x;
  return rec;
}

std::optional<Interval> preinterval(const PiecewiseExpandingMap& f, double x, int n, double radius) {
  if (n < 1 || !(radius > 0.0)) throw Error(ErrorCode::InvalidInput, "need n >= 1 and radius > 0");
  const auto orb = orbit(f, x, static_cast<std::size_t>(n) + 1);
  Interval j{orb[n] - radius, orb[n] + radius};
  for (int k = n - 1; k >= 0; --k) {
    const auto& br = f.branches()[f.branch_index(orb[k])];
    if (j.lo < br.image_lo || j.hi > br.image_hi) return std::nullopt;
    const double a = br.inverse(j.lo), c = br.inverse(j.hi);
    j = Interval{std::min(a, c), std::max(a, c)};
  }
  return j;
}

double recurrence_statistic(const PiecewiseExpandingMap& f, const std::vector<double>& orb, int n, double delta) {
  if (n < 1 || static_cast<std::size_t>(n) > orb.size()) throw Error(ErrorCode::InvalidInput, "bad orbit length");
  double s = 0.0;
  for (int j = 0; j < n; ++j) s -= std::log(dist_delta(f, orb[j], delta));
  return s / n;
}

namespace {

struct TailChunk {
  std::vector<double> bad, sum, sum_sq;
};

}  // namespace

TailFit recurrence_tail(const PiecewiseExpandingMap& f, const std::vector<int>& n_grid, double delta, double eps,
                        std::size_t ensemble, std::uint64_t seed, Exec exec) {
  if (n_grid.empty() || ensemble == 0) throw Error(ErrorCode::InvalidInput, "empty grid or ensemble");
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) || n_grid.front() < 100) {
    throw Error(ErrorCode::InvalidInput, "n grid must be increasing with n >= 100");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidInput, "delta must lie in (0, 1)");
  const std::size_t g = n_grid.size();
  const int n_max = n_grid.back();
  const std::size_t chunks = std::min<std::size_t>(ensemble, 256);

  const auto parts = map_chunks<TailChunk>(chunks, exec, [&](std::size_t c) {
    TailChunk out{std::vector<double>(g, 0.0), std::vector<double>(g, 0.0), std::vector<double>(g, 0.0)};
    Rng rng(seed, c);
    const std::size_t lo = chunk_begin(ensemble, chunks, c), hi = chunk_begin(ensemble, chunks, c + 1);
    for (std::size_t m = lo; m < hi; ++m) {
      double x0;
      do {
        x0 = rng.uniform(f.lo(), f.hi());
      } while (f.branch_index(x0) < 0);
      const auto orb = sample_orbit(f, x0, static_cast<std::size_t>(n_max), rng);
      double s = 0.0;
      std::size_t gi = 0;
      for (int j = 0; j < n_max && gi < g; ++j) {
        s -= std::log(dist_delta(f, orb[j], delta));
        while (gi < g && n_grid[gi] == j + 1) {
          const double stat = s / (j + 1);
          out.bad[gi] += stat > eps ? 1.0 : 0.0;
          out.sum[gi] += stat;
          out.sum_sq[gi] += stat * stat;
          ++gi;
        }
      }
    }
    return out;
  });

  TailFit fit;
  fit.n = n_grid;
  const double m = static_cast<double>(ensemble);
  bool all_bad = true;
  for (std::size_t i = 0; i < g; ++i) {
    double bad = 0.0, sum = 0.0, sum_sq = 0.0;
    for (const auto& p : parts) {
      bad += p.bad[i];
      sum += p.sum[i];
      sum_sq += p.sum_sq[i];
    }
    const double p = bad / m;
    fit.measure.push_back(p);
    fit.standard_error.push_back(std::sqrt(p * (1.0 - p) / m));
    const double mu = sum / m;
    fit.mean_statistic.push_back(mu);
    const double var = ensemble > 1 ? std::max(0.0, (sum_sq - m * mu * mu) / (m - 1.0)) : 0.0;
    fit.mean_standard_error.push_back(std::sqrt(var / m));
    if (p < 1.0) all_bad = false;
  }
  if (all_bad) {
    fit.no_decay = true;
    return fit;
  }
  std::vector<double> t(n_grid.begin(), n_grid.end());
  const auto e = fit_exponential_decay(t, fit.measure, fit.standard_error, 0.9, FitMode::Raw);
  fit.accepted = e.accepted && e.rate > 0.0;
  fit.rate = e.rate;
  fit.r2 = e.r2;
  fit.window_lo = static_cast<int>(e.t_lo);
  fit.window_hi = static_cast<int>(e.t_hi);
  return fit;
}

std::optional<PeriodicOrbit> periodic_orbit_for(const PiecewiseExpandingMap& f, const std::vector<int>& itinerary) {
  const int p = static_cast<int>(itinerary.size());
  const int nb = static_cast<int>(f.branches().size());
  if (p == 0) throw Error(ErrorCode::InvalidInput, "empty itinerary");
  for (int w : itinerary) {
    if (w < 0 || w >= nb) throw Error(ErrorCode::InvalidInput, "itinerary symbol out of range");
  }
  // Clamping keeps every inverse branch defined and 1-Lipschitz, so the
  // composition is still a contraction; spurious fixed points are rejected
  // by the forward check below.
  auto compose = [&](double y) {
    for (int i = p - 1; i >= 0; --i) {
      const auto& br = f.branches()[itinerary[i]];
      y = br.inverse(std::clamp(y, br.image_lo, br.image_hi));
    }
    return y;
  };
  double y = 0.5 * (f.lo() + f.hi());
  bool settled = false;
  double last = INFINITY;
  for (int it = 0; it < 100000; ++it) {
    const double x = compose(y);
    const double diff = std::abs(x - y);
    // stop when stationary, or when cycling at rounding level
    if (x == y || (diff >= last && diff <= 1e-14 * (1.0 + std::abs(x)))) {
      y = x;
      settled = true;
      break;
    }
    last = diff;
    y = x;
  }
  if (!settled) throw Error(ErrorCode::NotConverged, "inverse-branch iteration cap reached");

  PeriodicOrbit po;
  po.itinerary = itinerary;
  po.multiplier = 1.0;
  double x = y;
  for (int k = 0; k < p; ++k) {
    if (f.branch_index(x) != itinerary[k]) return std::nullopt;
    const auto& br = f.branches()[itinerary[k]];
    // fixed points sitting on an excluded branch end are artefacts of the clamp
    if ((!br.lo_closed && x - br.lo < 1e-12) || (!br.hi_closed && br.hi - x < 1e-12)) return std::nullopt;
    po.points.push_back(x);
    po.multiplier *= std::abs(br.derivative(x));
    x = br.map(x);
  }
  if (std::abs(x - y) > 1e-9) return std::nullopt;
  return po;
}

std::vector<PeriodicOrbit> periodic_orbits(const PiecewiseExpandingMap& f, int max_period) {
  const int nb = static_cast<int>(f.branches().size());
  if (max_period < 1) throw Error(ErrorCode::InvalidInput, "max_period must be positive");
  if (std::pow(static_cast<double>(nb), max_period) > 1e7) throw Error(ErrorCode::InvalidInput, "period too large");
  std::vector<PeriodicOrbit> out;
  for (int p = 1; p <= max_period; ++p) {
    std::vector<int> w(p, 0);
    while (true) {
      // Lyndon words: strictly less than every proper rotation
      bool lyndon = true;
      for (int r = 1; r < p && lyndon; ++r) {
        for (int i = 0; i < p; ++i) {
          const int a = w[i], c = w[(i + r) % p];
          if (a != c) {
            lyndon = a < c;
            break;
          }
          if (i == p - 1) lyndon = false;
        }
      }
      if (lyndon) {
        if (auto po = periodic_orbit_for(f, w)) out.push_back(std::move(*po));
      }
      int k = p - 1;
      while (k >= 0 && w[k] == nb - 1) w[k--] = 0;
      if (k < 0) break;
      ++w[k];
    }
  }
  return out;
}

}  // namespace singmix
