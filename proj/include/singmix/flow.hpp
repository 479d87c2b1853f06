#pragma once

#include <array>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "singmix/error.hpp"

namespace singmix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Box {
  Vec lo;
  Vec hi;

  bool contains(const Vec& x) const;
};

// Smooth vector field with an analytic Jacobian. Immutable after
// construction; the callables must be safe to call concurrently.
class VectorField {
 public:
  using Rhs = std::function<void(const Vec&, Vec&)>;
  using Jacobian = std::function<void(const Vec&, Mat&)>;

  VectorField(std::string name, int dimension, Rhs rhs, Jacobian jacobian,
              std::map<std::string, double> parameters = {}, std::optional<Box> trapping_region = {});

  const std::string& name() const { return name_; }
  int dimension() const { return dimension_; }
  const std::map<std::string, double>& parameters() const { return parameters_; }
  const std::optional<Box>& trapping_region() const { return trapping_region_; }

  void eval(const Vec& x, Vec& out) const { rhs_(x, out); }
  Vec operator()(const Vec& x) const;

  void jacobian(const Vec& x, Mat& out) const { jacobian_(x, out); }
  Mat jacobian(const Vec& x) const;

  double divergence(const Vec& x) const { return jacobian(x).trace(); }

  // Time rescaling X -> c X.
  VectorField scaled(double c) const;

 private:
  std::string name_;
  int dimension_;
  Rhs rhs_;
  Jacobian jacobian_;
  std::map<std::string, double> parameters_;
  std::optional<Box> trapping_region_;
};

VectorField lorenz_classical(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);
VectorField linear_field(const Mat& a);

// Builds a field from {"name": "lorenz-classical"} or a polynomial spec
// {"dimension": N, "terms": [{"coef": c, "exponents": [...], "component": i}]}.
// Takes the JSON text so the header stays free of the JSON library.
VectorField field_from_json_text(const std::string& text);

// Largest relative mismatch between the analytic Jacobian and central
// differences of the rhs over the given points.
double jacobian_fd_mismatch(const VectorField& vf, const std::vector<Vec>& points, double h = 1e-6);

struct IntegratorOptions {
  double tol = 1e-10;  // accuracy target; local steps are controlled at tol/50
  double max_norm = 1e8;
  double initial_step = 0.0;  // 0 picks a step automatically
  double max_step = 0.0;      // 0 means unbounded
  long max_steps = 2'000'000'000L;
};

// Dormand-Prince 5(4) with the standard continuous extension. Holds the last
// accepted step so callers can evaluate the solution anywhere inside it.
class Dopri5 {
 public:
  Dopri5(const VectorField& vf, const Vec& x0, double t0, IntegratorOptions options = {});

  // Takes one accepted step, never past t_limit when one is given.
  void step(double t_limit = std::numeric_limits<double>::infinity());

  // Steps until t() == t_end exactly.
  void advance_to(double t_end);

  double t() const { return t_; }
  double t_prev() const { return t_prev_; }
  const Vec& state() const { return y_; }
  const Vec& prev_state() const { return y_prev_; }
  double last_step() const { return t_ - t_prev_; }
  long steps() const { return steps_; }

  // Dense output inside [t_prev(), t()].
  void dense(double t, Vec& out) const;
  Vec dense(double t) const;

  // Restart from a new state without discarding the step-size estimate.
  void reset(const Vec& x, double t);

 private:
  void check_state(const Vec& y) const;
  double initial_step_guess();

  const VectorField& vf_;
  IntegratorOptions opt_;
  int n_;
  double t_, t_prev_, h_;
  long steps_ = 0;
  Vec y_, y_prev_, ynew_, tmp_, err_;
  Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_;
  // continuous-extension coefficients for the last step
  Vec r1_, r2_, r3_, r4_, r5_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  double tolerance = 0.0;

  const Vec& final_state() const { return states.back(); }
};

Trajectory integrate_flow(const VectorField& vf, const Vec& x0, double duration, double tol = 1e-10);

// X_t(x0) only.
Vec flow_map(const VectorField& vf, const Vec& x0, double duration, double tol = 1e-10);

// Augmented field for (x, Phi) with Phi' = DX(x) Phi, Phi stored column-major
// after x. When with_logdet is set one more component integrates Div X.
VectorField variational_field(const VectorField& vf, bool with_logdet = false);

enum class EquilibriumClass { LorenzLike, NonLorenzLike, NonHyperbolic };

std::string_view to_string(EquilibriumClass c);

struct EquilibriumRecord {
  Vec location;
  // ordered by increasing real part, conjugate pairs by imaginary part
  std::vector<std::complex<double>> eigenvalues;
  Eigen::MatrixXcd eigenvectors;
  EquilibriumClass classification = EquilibriumClass::NonHyperbolic;
  // dimension of E^s in the singular-hyperbolic splitting (E^cu is 2D)
  int stable_dim = 0;
  // number of eigenvalues with negative real part
  int stable_index = 0;
  double max_residual = 0.0;
};

struct EquilibriumSearch {
  std::vector<EquilibriumRecord> equilibria;
  int seeds = 0;
  int converged_seeds = 0;
  std::string diagnostic;
};

// Eigen-decomposition and classification at a known zero of the field.
EquilibriumRecord classify_equilibrium(const VectorField& vf, const Vec& location);

// Multistart Newton from a Sobol grid over the box.
EquilibriumSearch classify_equilibria(const VectorField& vf, const Box& search_box, int seeds = 64,
                                      double dedup_radius = 1e-6);

// Closed-form passage near a Lorenz-like singularity with linearized
// coordinates: entry on {x2 = 1}, exit through |x1| = 1.
class LocalModel {
 public:
  // lambda_u > 0 > lambda_s > -lambda_u
  LocalModel(double lambda_u, double lambda_s);

  double lambda_u() const { return lambda_u_; }
  double lambda_s() const { return lambda_s_; }
  double exponent() const { return -lambda_s_ / lambda_u_; }

  double return_time(double x1) const;
  std::array<double, 2> exit_point(double x1) const;

 private:
  double lambda_u_, lambda_s_;
};

LocalModel local_singular_model(const EquilibriumRecord& eq);

}  // namespace singmix
