#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "singmix/error.hpp"
#include "singmix/kernels.hpp"
#include "singmix/rng.hpp"

namespace singmix {

// One monotone C^{1+alpha} branch of a piecewise expanding interval map.
struct Branch {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = true;
  bool hi_closed = false;
  std::function<double(double)> map;
  std::function<double(double)> derivative;
  // inverse branch h, defined on [image_lo, image_hi]
  std::function<double(double)> inverse;
  double image_lo = 0.0;
  double image_hi = 0.0;

  bool contains(double x) const;
};

struct CriticalPoint {
  double location = 0.0;
  bool singular = false;
  // one-sided orders: f(x) ~ f(c+-) +- kappa |x - c|^alpha near c
  double alpha_minus = 1.0;
  double alpha_plus = 1.0;
  double kappa_minus = 1.0;
  double kappa_plus = 1.0;
};

class PiecewiseExpandingMap {
 public:
  PiecewiseExpandingMap(std::string family, double lo, double hi, std::vector<Branch> branches,
                        std::vector<CriticalPoint> critical, std::map<std::string, double> parameters = {});

  const std::string& family() const { return family_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const std::vector<CriticalPoint>& critical() const { return critical_; }
  const std::map<std::string, double>& parameters() const { return parameters_; }

  // -1 when x lies in the critical set or outside every branch
  int branch_index(double x) const;
  double operator()(double x) const;
  double derivative(double x) const;

  // Euclidean distance to the critical set; +inf when the set is empty.
  double distance_to_critical(double x) const;
  bool on_critical(double x) const;

  // inf |f'| over a grid of each branch (the measured expansion)
  double min_expansion(int samples_per_branch = 4096) const;

  // True when orbits of Lebesgue-random points are realized as a shift on
  // independent random bits (the doubling family).
  bool bit_shift() const { return family_ == "doubling"; }

 private:
  std::string family_;
  double lo_, hi_;
  std::vector<Branch> branches_;
  std::vector<CriticalPoint> critical_;
  std::map<std::string, double> parameters_;
};

// x -> 2x mod 1 on [0, 1). With critical_at_zero the point 0 is declared
// critical (non-singular), otherwise the critical set is empty.
PiecewiseExpandingMap doubling_map(bool critical_at_zero = false);

// f(x) = sign(x) (c |x|^alpha - 1) on [-1, 1] minus {0}.
PiecewiseExpandingMap lorenz_like_map(double c = 1.95, double alpha = 0.75);

// "doubling" (optional "critical_at_zero") or "lorenz-like" with {"c", "alpha"}.
PiecewiseExpandingMap map_from_config(const std::string& family, const std::map<std::string, double>& params);

// Smooth delta-truncated distance to the critical set; 1 when the set is empty.
double dist_delta(double x, const std::vector<double>& critical, double delta);
double dist_delta(const PiecewiseExpandingMap& f, double x, double delta);

// x_0 = x0, x_{k+1} = f(x_k). For bit-shift maps the low bits that the
// doubling pushes out are replaced by fresh random bits from rng, which is
// the exact law of the orbit of a Lebesgue-random point.
std::vector<double> sample_orbit(const PiecewiseExpandingMap& f, double x0, std::size_t length, Rng& rng);

// Deterministic orbit; throws OrbitOnCriticalSet when an iterate lands in D.
std::vector<double> orbit(const PiecewiseExpandingMap& f, double x0, std::size_t length);

struct HyperbolicTimeRecord {
  double x = 0.0;
  double sigma = 0.0;
  double b = 0.0;
  double delta = 0.0;
  int horizon = 0;
  std::vector<int> times;
  double density = 0.0;
};

// All (sigma, delta)-hyperbolic times n <= horizon of x.
HyperbolicTimeRecord hyperbolic_times(const PiecewiseExpandingMap& f, double x, int horizon, double sigma, double b,
                                      double delta);

// Same, for a precomputed orbit x_0..x_{horizon-1}.
HyperbolicTimeRecord hyperbolic_times_on_orbit(const PiecewiseExpandingMap& f, const std::vector<double>& orbit,
                                               double sigma, double b, double delta);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

// Hyperbolic pre-interval V_n(x): pulled back from (f^n x - r, f^n x + r)
// along the branches visited by the orbit. Empty when some pull-back leaves
// the image of the branch.
std::optional<Interval> preinterval(const PiecewiseExpandingMap& f, double x, int n, double radius);

struct TailFit {
  std::vector<int> n;
  std::vector<double> measure;
  std::vector<double> standard_error;
  // ensemble mean of the statistic per n, with its standard error
  std::vector<double> mean_statistic;
  std::vector<double> mean_standard_error;
  bool accepted = false;
  double rate = 0.0;  // fitted decay rate of the measure in n
  double r2 = 0.0;
  int window_lo = 0;
  int window_hi = 0;
  bool no_decay = false;
};

// Lebesgue measure of {x : (1/n) sum_{j<n} -log dist_delta(f^j x, D) > eps}
// over an ensemble of Lebesgue-uniform points, with an exponential fit in n.
TailFit recurrence_tail(const PiecewiseExpandingMap& f, const std::vector<int>& n_grid, double delta, double eps,
                        std::size_t ensemble, std::uint64_t seed, Exec exec = Exec::Parallel);

// Per-point statistic (1/n) sum_{j<n} -log dist_delta(f^j x, D).
double recurrence_statistic(const PiecewiseExpandingMap& f, const std::vector<double>& orbit, int n, double delta);

struct PeriodicOrbit {
  std::vector<double> points;   // points[k] = f^k(points[0])
  std::vector<int> itinerary;   // branch index of each point
  double multiplier = 0.0;      // |(f^p)'|
  int period() const { return static_cast<int>(points.size()); }
};

// Every periodic orbit of minimal period <= max_period, each listed once
// starting from its lexicographically least itinerary rotation.
std::vector<PeriodicOrbit> periodic_orbits(const PiecewiseExpandingMap& f, int max_period);

// Fixed point of the inverse-branch composition for one itinerary.
std::optional<PeriodicOrbit> periodic_orbit_for(const PiecewiseExpandingMap& f, const std::vector<int>& itinerary);

}  // namespace singmix
