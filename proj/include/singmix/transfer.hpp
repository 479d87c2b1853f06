#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "singmix/induction.hpp"
#include "singmix/kernels.hpp"

namespace singmix {

// Complex observable sampled on a uniform mesh of Delta, evaluated by
// piecewise-linear interpolation.
struct ObservableGrid {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<cplx> values;

  static ObservableGrid sample(double lo, double hi, std::size_t nodes, const std::function<cplx(double)>& fn);
  static ObservableGrid constant(double lo, double hi, std::size_t nodes, cplx c);

  std::size_t size() const { return values.size(); }
  double step() const { return (hi - lo) / static_cast<double>(values.size() - 1); }
  double node(std::size_t i) const { return lo + step() * static_cast<double>(i); }
  cplx operator()(double x) const;

  double sup_norm() const;
  // sup |psi(x_i) - psi(x_j)| / |x_i - x_j|^alpha over node pairs at dyadic
  // separations of at least min_cells cells
  double holder(double alpha, std::size_t min_cells = 1) const;
};

ObservableGrid operator*(cplx c, const ObservableGrid& g);

struct TransferOptions {
  std::size_t nodes = 4097;  // 2^12 cells
  double truncation_tolerance = 1e-8;
  std::size_t max_branches = 1024;
  Exec exec = Exec::Parallel;
};

// P_s psi = sum_h exp(-s r o h) |h'| psi o h on the mesh of Delta, with the
// roof r o h = sum_j tau(f^j h y) taken along the pulled-back chain.
class TransferOperator {
 public:
  TransferOperator(const InducedMarkovMap& F, const RoofFunction& tau, cplx s, const TransferOptions& options = {});

  cplx s() const { return s_; }
  const InducedMarkovMap& induced() const { return *F_; }
  std::size_t nodes() const { return kernel_.nodes; }
  double lo() const { return F_->delta_lo(); }
  double hi() const { return F_->delta_hi(); }
  const std::vector<int>& branches_used() const { return used_; }
  // bound on the dropped part of sum_h exp(-Re(s) r o h) |h'|, including uncovered mass
  double truncation_remainder() const { return remainder_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const RoofFunction& roof() const { return tau_; }
  const TransferOptions& options() const { return opt_; }

  ObservableGrid apply(const ObservableGrid& psi) const;
  ObservableGrid grid(const std::function<cplx(double)>& fn) const;

  // |psi|_{alpha,loc}: sup over the branches in use of the Hölder quotient of
  // psi o h on node pairs at dyadic separations of at least 4 cells
  double holder_loc(const ObservableGrid& psi, double alpha) const;

  const CollocationKernel& kernel() const { return kernel_; }

 private:
  const InducedMarkovMap* F_;
  cplx s_;
  RoofFunction tau_;
  TransferOptions opt_;
  std::vector<int> used_;
  std::vector<std::vector<double>> preimage_;  // h_k(node) per branch in use
  CollocationKernel kernel_;
  double remainder_ = 0.0;
  std::vector<std::string> warnings_;
};

double norm_b(const ObservableGrid& psi, double b, double alpha, const TransferOperator& op);

struct Eigenpair {
  double sigma = 0.0;
  double lambda = 0.0;
  ObservableGrid f;  // strictly positive, int f dmu_F = 1
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double constant_defect = 0.0;  // |L_sigma 1 - 1|_inf
  std::vector<std::string> warnings;
};

struct EigenOptions {
  double tolerance = 1e-10;
  int max_iterations = 20000;
};

// Power iteration for the leading eigenpair of P_sigma (real sigma). The
// invariant density f_0 fixes mu_F; at sigma != 0 it is computed first.
Eigenpair leading_eigenpair(const TransferOperator& op, const EigenOptions& options = {});

// L_s psi = (lambda_sigma f_sigma)^{-1} P_s (f_sigma psi), sigma = Re s.
class NormalizedOperator {
 public:
  NormalizedOperator(const TransferOperator& op, Eigenpair eigen);
  ObservableGrid apply(const ObservableGrid& psi) const;
  ObservableGrid power(const ObservableGrid& psi, int n) const;
  const TransferOperator& op() const { return *op_; }
  const Eigenpair& eigen() const { return eigen_; }

 private:
  const TransferOperator* op_;
  Eigenpair eigen_;
};

// Invariant density of F by Ulam's method on `cells` equal cells of Delta,
// normalised to mean 1; a cross-check for the collocation eigenfunction.
std::vector<double> ulam_density(const InducedMarkovMap& F, std::size_t cells);

// max |int (phi o F) psi dmu_F - int phi (L_0 psi) dmu_F| over the pairs.
// mu_F comes from the s = 0 eigenpair of `L0`.
double duality_defect(const NormalizedOperator& L0, const std::vector<std::function<cplx(double)>>& phis,
                      const std::vector<std::function<cplx(double)>>& psis);

// Deterministic ensemble: constants, smooth trigonometric and polynomial
// profiles, and rough piecewise-linear ones.
std::vector<std::function<cplx(double)>> observable_ensemble(double lo, double hi, std::size_t count,
                                                             std::uint64_t seed);

struct LYFit {
  double b = 0.0;
  double alpha = 1.0;
  double C = 0.0;
  double rho = 0.0;
  std::size_t violations = 0;
  std::size_t samples = 0;
  int n_max = 0;
};

// Fit of |L_s^n psi|_alpha <= C (1 + |b|^alpha) |psi|_inf + C rho^n |psi|_alpha
// over the ensemble and n = 1..n_max. Throws LYFailed when no rho < 1 is feasible.
LYFit lasota_yorke_fit(const NormalizedOperator& L, const std::vector<ObservableGrid>& ensemble, int n_max,
                       double alpha);

struct ContractionCurve {
  double b = 0.0;
  std::vector<double> norm;  // sup over the ensemble of ||L_s^n psi||_b / ||psi||_b, n = 0..n_max
  double window_lo = 0.0;    // A log|b|
  double window_hi = 0.0;
  double gamma = 1.0;
  double r2 = 0.0;
  bool decays = false;  // gamma < 0.999 with r2 >= 0.9
};

// A defaults to 5 (non-canonical).
ContractionCurve contraction_probe(const NormalizedOperator& L, const std::vector<ObservableGrid>& ensemble, int n_max,
                                   double alpha, double A = 5.0);

nlohmann::json spectral_report(const TransferOperator& op, const Eigenpair& eigen, const LYFit* ly,
                               const ContractionCurve* curve);

}  // namespace singmix
