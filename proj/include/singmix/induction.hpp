#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "singmix/expanding.hpp"
#include "singmix/fit.hpp"
#include "singmix/kernels.hpp"

namespace singmix {

// Return time of the flow over the base map and its derivative.
struct RoofFunction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

RoofFunction unit_roof();
// tau(x) = g1 + g2 - log|x| / lambda1 of the geometric model.
RoofFunction model_roof(double g1 = 0.5, double g2 = 1.0, double lambda1 = 1.0);

struct InducedBranch {
  double lo = 0.0;
  double hi = 0.0;
  int R = 0;
  std::vector<int> itinerary;  // branches of f visited by x, f x, ..., f^{R-1} x
  // F(lo), F(hi) through the pulled-back endpoint chains
  double image_lo = 0.0;
  double image_hi = 0.0;
  // largest |f(x_j) - x_{j+1}| along those chains
  double markov_defect = 0.0;
  bool increasing = true;
  double min_derivative = 0.0;  // sampled inf |F'|
  double max_derivative = 0.0;
  double distortion = 0.0;      // sampled Hölder constant of log|F'| against |F x - F y|^alpha
  bool hyperbolic = false;      // R is a hyperbolic time at every sample
  double length() const { return hi - lo; }
};

struct InductionOptions {
  double base_point = NAN;   // NaN: midpoint of the largest branch of f
  double base_radius = 0.45;  // Delta = [p - radius, p + radius] clipped to the domain
  double margin = 0.02;       // images must cover Delta widened by this much before extraction
  int return_cap = 40;
  double sigma = 0.75;
  double b = 0.25;
  double delta1 = 2e-4;      // truncation scale of the hyperbolic-time test
  bool require_hyperbolic = true;
  double coverage_floor = 0.99;
  double prune_mass = 1e-15;  // relative mass below which a pending piece is dropped
  // pending pieces kept per level; the lightest beyond this are dropped
  std::size_t max_frontier = 20000;
  int samples = 9;            // per-branch samples of Delta used for the checks
  double distortion_alpha = 0.5;
  Exec exec = Exec::Parallel;
};

// Full-branch Markov map F = f^R on Delta, enumerated up to the return cap.
class InducedMarkovMap {
 public:
  const PiecewiseExpandingMap& base() const { return *f_; }
  double delta_lo() const { return lo_; }
  double delta_hi() const { return hi_; }
  double base_point() const { return p_; }
  int return_cap() const { return cap_; }
  // parameters of the hyperbolic-time requirement
  double sigma() const { return sigma_; }
  double b() const { return b_; }
  double delta1() const { return delta1_; }
  const std::vector<InducedBranch>& branches() const { return branches_; }

  // Lebesgue fraction of Delta covered by enumerated branches.
  double coverage() const { return coverage_; }
  double pruned_mass() const { return pruned_; }  // fraction dropped as negligible
  // tail[n] = Leb{R > n} / |Delta| for n = 0..cap (pending pieces count as R > cap)
  const std::vector<double>& tail() const { return tail_; }
  double rho() const { return rho_; }  // 1 / inf |F'|
  double distortion_constant() const { return distortion_; }
  double distortion_alpha() const { return alpha_; }
  double hyperbolic_fraction() const { return hyperbolic_fraction_; }
  // max gap of the preimages of p under f up to depth 12, against delta1 / 3
  double preimage_gap() const { return preimage_gap_; }
  bool preimage_dense() const { return preimage_dense_; }
  double max_markov_error() const { return markov_error_; }  // max branch markov_defect

  int branch_of(double x) const;  // -1 outside the enumerated partition
  double F(double x) const;
  double dF(double x) const;
  int R(double x) const;
  // inverse branch k and its derivative on Delta
  double h(int k, double y) const;
  double dh(int k, double y) const;
  // x_0 = h_k(y), x_{j} = f^j x_0 for j < R_k, computed by pulling back
  std::vector<double> chain(int k, double y) const;

  nlohmann::json to_json() const;

 private:
  friend InducedMarkovMap build_induced_map(const PiecewiseExpandingMap&, const InductionOptions&);
  std::shared_ptr<const PiecewiseExpandingMap> f_;
  double lo_ = 0.0, hi_ = 0.0, p_ = 0.0;
  int cap_ = 0;
  double sigma_ = 0.75, b_ = 0.25, delta1_ = 0.005;
  std::vector<InducedBranch> branches_;
  double coverage_ = 0.0, pruned_ = 0.0;
  std::vector<double> tail_;
  double rho_ = 0.0, distortion_ = 0.0, alpha_ = 0.5, hyperbolic_fraction_ = 0.0;
  double preimage_gap_ = 0.0;
  bool preimage_dense_ = false;
  double markov_error_ = 0.0;
};

// Forward covering search, breadth-first in return time. Throws
// IncompleteInduction when the covered fraction stays below the floor.
InducedMarkovMap build_induced_map(const PiecewiseExpandingMap& f, const InductionOptions& options = {});

struct InducedRoofBranch {
  double sup_r = 0.0;
  double inf_r = 0.0;
  double sup_dr = 0.0;      // |(r o h)'|_inf
  double sup_hprime = 0.0;  // |h'|_inf
};

struct RoofChecks {
  std::vector<double> eps;
  std::vector<double> tail_sum;     // sum_h exp(eps |r o h|) |h'| over enumerated branches
  std::vector<bool> convergent;
  double largest_convergent_eps = 0.0;
  double max_roof_derivative = 0.0;
  // max over samples and j < R of tau(f^j x) + b R log sigma: the constant in
  // tau(f^j x) <= -b R log sigma + K
  double roof_bound_constant = 0.0;
  double roof_bound_growth = 0.0;  // slope of the per-R constant against R (bounded => ~0)
  // exponential tails of R and r
  ExpFit return_tail;
  ExpFit roof_tail;
};

struct InducedRoof {
  std::vector<InducedRoofBranch> branches;
  std::vector<double> thresholds;  // t grid
  std::vector<double> measure;     // Leb{r > t} / |Delta| over enumerated branches
  double inf_tau = 0.0;

  std::string histogram_csv() const;  // t,measure
};

struct RoofOptions {
  std::vector<double> eps = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
  double tail_tolerance = 0.01;  // accepted relative size of the extrapolated remainder
  double threshold_step = 1.0;
  int cells = 16;  // per-branch cells for the r histogram
};

// r(x) = sum_{j < R(x)} tau(f^j x) on Delta.
double induced_roof(const InducedMarkovMap& F, const RoofFunction& tau, double x);

struct RoofResult {
  InducedRoof roof;
  RoofChecks checks;
};

// Throws TailCheckFailed when no eps in the grid gives a convergent-looking sum.
RoofResult induced_roof_and_checks(const InducedMarkovMap& F, const RoofFunction& tau, const RoofOptions& options = {});

enum class UniMode { Periodic, Derivative };

struct UniOptions {
  UniMode mode = UniMode::Derivative;
  int n0 = 1;
  double threshold = 1e-3;        // derivative mode: UNI holds with D >= threshold
  double periodic_tolerance = 1e-9;  // relative gap required between periodic sums
  int grid = 33;
  int max_period = 8;
  int alphabet = 2;  // search uses the branches of F with the largest mass
  std::size_t max_candidates = 4096;
  // explicit witnesses (words over branch indices of F); searched when empty
  std::vector<int> word1, word2;
};

struct UniReport {
  UniMode mode = UniMode::Derivative;
  bool witness_found = false;  // false means inconclusive: no matched pair exists
  bool holds = false;
  double statistic = 0.0;  // best D, or |S_p r(x1) - S_p r(x2)|
  double threshold = 0.0;
  int n0 = 0;
  std::vector<int> word1, word2;
  std::vector<double> orbit1, orbit2;  // periodic points
  double sum1 = 0.0, sum2 = 0.0;
  std::vector<double> level_statistic;  // derivative mode: best D at n = 1..n0
  double level_decay = 0.0;             // slope of log D against n over n >= n0 / 2
  std::size_t pairs_tested = 0;
};

UniReport uni_test(const InducedMarkovMap& F, const std::function<double(double)>& r, const UniOptions& options = {});

// Periodic point of F with the given itinerary and its orbit (x_k in branch word[k]).
std::vector<double> induced_periodic_orbit(const InducedMarkovMap& F, const std::vector<int>& word);

}  // namespace singmix
