#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "singmix/expanding.hpp"
#include "singmix/flow.hpp"

namespace singmix {

// Affine codimension-1 section {anchor + frame * u : lo <= u <= hi}. A
// crossing counts when <X, normal> goes from negative to positive side,
// i.e. the flow passes in the direction of the normal.
class CrossSection {
 public:
  // frame columns span the section; the normal is their orthogonal complement
  // oriented by `normal_hint`.
  CrossSection(Vec anchor, Mat frame, Vec normal_hint, Vec lo, Vec hi, double transversality_floor = 1e-9);

  // Plane {x_k = level} with crossings in the direction `sign` (+1 or -1).
  static CrossSection coordinate_plane(int dimension, int k, double level, int sign, double bound = 1e3);

  const Vec& anchor() const { return anchor_; }
  const Mat& frame() const { return frame_; }
  const Vec& normal() const { return normal_; }
  double transversality_floor() const { return floor_; }

  double height(const Vec& x) const { return normal_.dot(x - anchor_); }
  Vec coordinates(const Vec& x) const;  // least-squares frame coordinates
  Vec point(const Vec& u) const { return anchor_ + frame_ * u; }
  bool within_bounds(const Vec& x) const;

 private:
  Vec anchor_;
  Mat frame_;
  Vec normal_;
  Vec lo_, hi_;
  double floor_;
};

struct ReturnOptions {
  double tol = 1e-10;
  double time_cap = 100.0;
  double min_time = 1e-6;      // tau_0 floor: crossings earlier than this are ignored
  double time_accuracy = 1e-12;
  // equilibria whose exclusion tube ends the orbit with OnGamma
  std::vector<Vec> singularities;
  double gamma_radius = 1e-6;
  // radius of the neighborhood V_sigma reported in the crossing metadata
  double neighborhood_radius = 1.0;
  int crossings = 1;
};

struct ReturnSample {
  Vec entry;
  Vec exit;
  double tau = 0.0;
  int section = -1;           // index of the section hit last
  bool near_singularity = false;
  double closest_approach = 0.0;  // min distance to any listed singularity
};

// k-th crossing (options.crossings) of the section family after x.
ReturnSample poincare_return(const VectorField& vf, const std::vector<CrossSection>& sections, const Vec& x,
                             const ReturnOptions& options = {});

// Piecewise-linear caricature of a Lorenz-like flow. Section Sigma has
// coordinates (x, y) in [-1, 1]^2 with vertical stable leaves. After g1 the
// orbit enters the linear box {diag(l1, l2, l3)} at (x, 1, y), leaves through
// |x1| = 1 after tau1 = -log|x| / l1 at (s, |x|^a, y |x|^(-l3/l1)) with
// a = -l2/l1, s = sign x, and a transit of duration g2 returns it to Sigma at
// (s (c |x|^a - 1), s kappa + nu y |x|^(-l3/l1)).
struct GeometricLorenzModel {
  double lambda1 = 1.0;
  double lambda2 = -0.75;
  double lambda3 = -3.0;
  double c = 1.95;
  double kappa = 0.5;
  double nu = 0.2;
  double g1 = 0.5;
  double g2 = 1.0;
  double gamma_radius = 1e-6;

  double alpha() const { return -lambda2 / lambda1; }
  VectorField box_field() const;

  // Closed form of the return to Sigma. entry/exit hold (x, y).
  ReturnSample return_closed_form(double x, double y) const;
  // Same return with the box passage integrated and located by events.
  ReturnSample return_integrated(double x, double y, double tol = 1e-11) const;
  // Closed-form quotient map sign(x)(c|x|^a - 1).
  double quotient(double x) const;
};

// One evaluation of the projected return along a u-curve: the parameter of
// the stable leaf through P(gamma(u)) and the return time.
struct QuotientValue {
  double f = 0.0;
  double tau = 0.0;
};

using QuotientFn = std::function<QuotientValue(double)>;

QuotientFn model_quotient(const GeometricLorenzModel& model, bool integrated = false, double y = 0.0);

// Interval map viewed as a quotient with unit return time.
QuotientFn map_quotient(const PiecewiseExpandingMap& f);

// Quotient over a straight u-curve u -> curve_anchor + u * curve_direction
// lying in the section. Stable leaves through return points are approximated
// by lines along the most contracted right singular vector of the
// finite-difference return Jacobian.
struct SectionQuotientOptions {
  ReturnOptions ret;
  double fd_step = 1e-6;
  double min_angle_sine = 1e-3;  // conditioning floor for leaf/curve intersection
};

class SectionQuotient {
 public:
  SectionQuotient(const VectorField& vf, CrossSection section, Vec curve_anchor, Vec curve_direction,
                  SectionQuotientOptions options = {});

  QuotientValue operator()(double u) const;
  Vec curve(double u) const { return anchor_ + u * direction_; }
  // Unit stable direction (ambient coordinates) at a section point.
  Vec stable_direction(const Vec& x) const;
  ReturnSample return_from(const Vec& x) const;
  const CrossSection& section() const { return section_; }

 private:
  const VectorField& vf_;
  CrossSection section_;
  Vec anchor_, direction_;
  SectionQuotientOptions opt_;
};

// Classical Lorenz: plane z = rho - 1 crossed downwards, u-curve along the
// diagonal x = y through the wing equilibria.
SectionQuotient lorenz_section_quotient(const VectorField& lorenz, SectionQuotientOptions options = {});

struct SampledQuotientMap {
  std::vector<double> u;
  std::vector<double> f;
  std::vector<double> df;
  std::vector<double> tau;
  std::vector<int> branch;
  std::vector<double> dist_to_critical;
  std::vector<double> critical;  // detected critical set, increasing
  std::size_t failed = 0;        // grid points that fell into the critical set

  std::string to_csv() const;  // x,f,df,branch_id,dist_to_D
  // Linear interpolation of f on the branch containing u.
  double interpolate(double u) const;
};

struct ExtractOptions {
  double jump_threshold = 0.25;  // |f| jump between neighbours flagging a critical point
  double tau_jump_threshold = 5.0;
  double locate_accuracy = 1e-12;
  double derivative_step = 1e-4;
  Exec exec = Exec::Parallel;
};

// Samples f on the grid (increasing), locates the critical set by bisection
// on jumps and failed returns, and differentiates by Richardson
// extrapolation of central differences kept inside each branch.
SampledQuotientMap quotient_map_extract(const QuotientFn& fn, const std::vector<double>& grid,
                                        const ExtractOptions& options = {});

// Dyadic grid accumulating at each point of `centers` from both sides,
// merged with a uniform grid on [lo, hi].
std::vector<double> dyadic_grid(double lo, double hi, const std::vector<double>& centers, int uniform_points,
                                int levels);

struct SingularFit {
  double location = 0.0;
  int side = 0;  // -1 left, +1 right
  double slope = 0.0;  // of log|f'| against log dist
  double r2 = 0.0;
  std::size_t points = 0;
  bool singular = false;
};

struct ConditionsReport {
  std::vector<SingularFit> sides;
  std::vector<double> singular_set;
  // (C1) C^-1 d^q <= |f'| <= C d^-q
  double c1_q = 0.0;
  double c1_constant = 0.0;
  bool c1_pass = false;
  // (C2) Hölder constant of log|f'| at exponent eta, with the power q2 used
  // on |f'| (the smallest admissible one given the fitted C1 exponent)
  double c2_eta = 0.5;
  double c2_q = 0.0;
  double c2_constant = 0.0;
  bool c2_pass = false;
  // tau against -log dist to the critical set near each critical point
  double tau_log_slope = 0.0;
  double tau_log_r2 = 0.0;
  bool tau_available = false;
  // sup |tau'| dist(x, D) over same-branch neighbours
  double tau_derivative_bound = 0.0;
  double min_expansion = 0.0;
  double expansion_floor = 1.4142135623730951;
  bool expansion_pass = false;
  bool exceeds_two = false;  // inf |f'| > 2
};

struct ConditionsOptions {
  double near_radius = 0.05;
  std::size_t min_points = 6;
  double singular_slope = -0.02;  // sides with a steeper log-log slope count as singular
  double eta = 0.5;
  double expansion_floor = 1.4142135623730951;
};

ConditionsReport nondegeneracy_and_growth_check(const SampledQuotientMap& map, const ConditionsOptions& options = {});

}  // namespace singmix
