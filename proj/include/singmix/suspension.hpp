#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "singmix/fit.hpp"
#include "singmix/flow.hpp"
#include "singmix/induction.hpp"
#include "singmix/poincare.hpp"
#include "singmix/rng.hpp"
#include "singmix/transfer.hpp"

namespace singmix {

struct SuspensionPoint {
  double x = 0.0;
  double y = 0.0;  // fiber coordinate, 0 on a trivial fiber
  double u = 0.0;
};

// Fiber map along one step of the base map f: y -> step(x, y), x the base
// point before the step. Contracts by at most gamma per step.
struct FiberMap {
  std::function<double(double, double)> step;  // empty: trivial fiber
  double gamma = 0.0;
  double lo = 0.0, hi = 0.0;  // Omega

  bool trivial() const { return !step; }
  static FiberMap none();
  // (y + s) gamma with s = -1 on the first branch of f and +1 otherwise
  static FiberMap affine(const PiecewiseExpandingMap& f, double gamma);
  // y -> s kappa + nu y |x|^(-l3/l1) of the geometric model
  static FiberMap geometric(const GeometricLorenzModel& model);
};

// Suspension of the induced map F under r = sum of tau along the return,
// optionally skewed by a fiber map.
class SuspensionSemiflow {
 public:
  SuspensionSemiflow(const InducedMarkovMap& F, RoofFunction tau, FiberMap fiber = FiberMap::none());

  const InducedMarkovMap& induced() const { return *F_; }
  const FiberMap& fiber() const { return fiber_; }
  double roof(double x) const;

  // One identification step (z, r(z)) ~ (F^(z), 0) without the height.
  // With `refresh` set on a bit-shift base, the bit lost at the bottom of
  // the mantissa is redrawn so Lebesgue-random orbits stay exact.
  SuspensionPoint base_step(const SuspensionPoint& p, Rng* refresh = nullptr) const;
  // y after n fiber steps over the base orbit of x (G_n(x, y))
  double fiber_iterate(double x, double y, int n) const;

  // Throws CriticalCrossing when the orbit meets the critical set or a
  // zero roof, or leaves the enumerated partition.
  SuspensionPoint evolve(SuspensionPoint p, double t, Rng* refresh = nullptr, long* crossings = nullptr) const;

  // Bit-shift bases get exact Lebesgue-random orbits through refresh.
  bool refreshes() const { return refresh_; }

 private:
  const InducedMarkovMap* F_;
  RoofFunction tau_;
  FiberMap fiber_;
  bool refresh_ = false;
};

struct WeightedPoint {
  SuspensionPoint point;
  double weight = 1.0;  // proportional to r(x); normalise over the sample
};

// Samplers for mu_F, mu^r_F, mu_F^, mu^r_F^ and Leb^r from the s = 0
// eigenfunction of the induced transfer operator.
class InvariantSampler {
 public:
  InvariantSampler(const SuspensionSemiflow& flow, const Eigenpair& density, int fiber_burn_in = 60);

  const std::vector<std::string>& warnings() const { return warnings_; }
  const SuspensionSemiflow& flow() const { return *flow_; }

  double base(Rng& rng) const;      // mu_F by inverse CDF
  double lebesgue(Rng& rng) const;  // uniform on Delta
  // (x, y) ~ mu_F^ pushed forward from fiber-uniform data, y = 0 on a trivial fiber
  SuspensionPoint skew(Rng& rng) const;
  // mu^r_F (or mu^r_F^ with a fiber); heights uniform in [0, r(x)), weight r(x)
  WeightedPoint suspension(Rng& rng) const;
  // Leb^r: x uniform on Delta, otherwise as suspension()
  WeightedPoint lebesgue_suspension(Rng& rng) const;

  double density(double x) const;  // normalised so that it integrates to 1 on Delta
  // int g dmu_F by Gauss quadrature on the mesh of the density
  double integrate(const std::function<double(double)>& g) const;

 private:
  const SuspensionSemiflow* flow_;
  ObservableGrid density_;
  std::vector<double> cdf_;  // at mesh nodes
  int burn_in_;
  std::vector<std::string> warnings_;
};

using SuspensionObservable = std::function<double(const SuspensionPoint&)>;
using FlowObservable = std::function<double(const Vec&)>;

struct CorrelationSeries {
  std::vector<double> t;
  std::vector<double> value;
  std::vector<double> se;
  ExpFit fit;
  bool no_signal = false;   // |value| <= 3 se over the whole grid
  double noise_bound = 0.0;  // max |value| when no_signal
  bool nondecaying = false;  // late amplitude comparable to the early one
  double period = 0.0;       // detected recurrence in t, 0 when none
  std::size_t samples = 0;
  std::size_t dropped = 0;  // Monte Carlo samples lost to critical crossings

  std::string to_csv() const;      // t,value,se
  nlohmann::json fit_json() const;  // {c, C, window, r2}
};

struct MonteCarloOptions {
  std::size_t samples = 1'000'000;
  std::size_t batches = 64;  // independent streams; SE from batch means
  std::uint64_t seed = 1;
  double min_r2 = 0.9;
  Exec exec = Exec::Parallel;
};

// rho(t) = int (phi o F_t) psi dmu^r - int phi int psi over mu^r_F (mu^r_F^ on
// a skew product). The grid must be increasing and start at t >= 0.
CorrelationSeries correlation_estimator(const InvariantSampler& sampler, const SuspensionObservable& phi,
                                        const SuspensionObservable& psi, const std::vector<double>& t_grid,
                                        const MonteCarloOptions& options = {});

struct EquilibriumSeries {
  CorrelationSeries series;  // E_t
  std::vector<double> leb_phi;  // int (phi o F_t) psi dLeb / int psi dLeb
  double leb_psi = 0.0;         // int psi dLeb
  double mu_phi = 0.0;          // int phi dmu
};

// E_t(psi, phi) = int (phi o F_t) psi dLeb^r - int psi dLeb^r int phi dmu^r,
// with the mu^r integral from an independent sample of the same size.
EquilibriumSeries equilibrium_convergence(const InvariantSampler& sampler, const SuspensionObservable& phi,
                                          const SuspensionObservable& psi, const std::vector<double>& t_grid,
                                          const MonteCarloOptions& options = {});

// int gamma^(alpha w_t) dmu^r_F with w_t the number of roof crossings by time t.
CorrelationSeries visits_statistic(const InvariantSampler& sampler, double gamma, double alpha,
                                   const std::vector<double>& t_grid, const MonteCarloOptions& options = {});

// Closed form of the above for r = 1.
double visits_unit_roof(double gamma, double alpha, double t);

struct FiberContraction {
  std::vector<double> max_ratio;  // n = 0..n_max
  double C = 0.0;                 // smallest C with max_ratio[n] <= C gamma^n
  double gamma = 0.0;
};

FiberContraction fiber_contraction(const InvariantSampler& sampler, int n_max, std::size_t triples,
                                   std::uint64_t seed);

struct FlowOptions {
  double dt = 0.1;          // sampling step; t grid points must be multiples of it
  double transient = 100.0;
  double tol = 1e-8;
  std::size_t batches = 50;
  double fit_from = 0.5;  // fit window lower end
  double min_r2 = 0.9;
  Exec exec = Exec::Parallel;
};

// Birkhoff estimator of C_t(phi, psi) along one orbit of length orbit_length
// after the transient; SE from batch means.
CorrelationSeries flow_correlation(const VectorField& vf, const FlowObservable& phi, const FlowObservable& psi,
                                   double t_max, double orbit_length, const Vec& x0, const FlowOptions& options = {});

// E_t for Lebesgue-uniform data on the trapping region; int phi dmu from a
// single orbit of length mu_orbit_length.
EquilibriumSeries flow_equilibrium_convergence(const VectorField& vf, const FlowObservable& phi,
                                               const FlowObservable& psi, const std::vector<double>& t_grid,
                                               std::size_t samples, double mu_orbit_length, const Vec& x0,
                                               std::uint64_t seed, const FlowOptions& options = {});

struct CltReport {
  std::size_t n_blocks = 0;
  std::size_t block_len = 0;
  double mean = 0.0;
  double sigma = 0.0;  // sd of (S_n - n mean) / sqrt n
  double ks = 0.0;     // against N(m, sigma^2) fitted to the normalised sums
  double var_short = 0.0;
  double var_long = 0.0;  // at 4 block_len from the same orbit
  double variance_change = 0.0;  // |var_long / var_short - 1|
  bool degenerate = false;
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
};

// Time-1 samples phi(X_k) along one orbit of n_blocks * block_len steps.
CltReport clt_check(const VectorField& vf, const FlowObservable& phi, std::size_t n_blocks, std::size_t block_len,
                    const Vec& x0, const FlowOptions& options = {});

struct SemiconjugacyOptions {
  double alpha = 0.5;
  int levels = 3;  // dyadic pair scales 2^-1 .. 2^-levels of the element
  std::size_t pairs = 2000;
  std::uint64_t seed = 1;
};

struct SemiconjugacyReport {
  double alpha = 0.0;
  std::vector<double> max_ratio;  // per refinement level
  std::size_t tested = 0;
  std::size_t skipped = 0;  // pairs straddling partition elements
  double speed_bound = 0.0;  // |X|_inf of the embedded model flow
  double max_u_ratio = 0.0;  // max |p(x,y,u1) - p(x,y,u2)| / |u1 - u2|
  bool stable = false;       // level maxima within a factor 2

  nlohmann::json to_json() const;
};

// Position X_u(x, y) of the geometric model flow started on Sigma, in the
// ambient coordinates of its embedding; u may exceed one return.
Vec geometric_flow_point(const GeometricLorenzModel& model, double x, double y, double u);

// Ratio |p(w1) - p(w2)| / (|F x1 - F x2|^alpha + |y1 - y2| + |u1 - u2|) over
// random same-element pairs, p(x, y, u) the flow point of the induced suspension.
SemiconjugacyReport semiconjugacy_diagnostic(const GeometricLorenzModel& model, const InducedMarkovMap& F,
                                             const SemiconjugacyOptions& options = {});

}  // namespace singmix
