#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "singmix/flow.hpp"

namespace singmix {

struct LyapunovSpectrum {
  std::vector<double> exponents;  // increasing
  double orbit_length = 0.0;
  // Largest variance of the running estimates over the second half of the run.
  double diagnostic = 0.0;
  // Time average of Div X along the same orbit.
  double divergence_average = 0.0;
  bool converged = false;
};

class LyapunovNotConverged : public Error {
 public:
  explicit LyapunovNotConverged(LyapunovSpectrum partial)
      : Error(ErrorCode::NotConverged, "Lyapunov diagnostic above threshold"), partial_(std::move(partial)) {}
  const LyapunovSpectrum& partial() const { return partial_; }

 private:
  LyapunovSpectrum partial_;
};

struct LyapunovOptions {
  double transient = 0.0;
  double renormalization_interval = 1.0;
  double tol = 1e-9;
  double diagnostic_threshold = 0.05;
};

// Benettin's method: the tangent frame is QR re-orthonormalized every
// renormalization interval. Throws LyapunovNotConverged carrying the partial
// spectrum when the diagnostic exceeds the threshold.
LyapunovSpectrum lyapunov_spectrum(const VectorField& vf, const Vec& x0, double duration,
                                   const LyapunovOptions& options = {});

// Points X_{transient + k*spacing}(x0), k = 0..count-1.
std::vector<Vec> attractor_samples(const VectorField& vf, const Vec& x0, std::size_t count, double spacing,
                                   double transient, double tol = 1e-8);

struct ConditionAMargin {
  Vec location;
  double margin = 0.0;       // Re(l_{d_s} - l_{d_s+1} + q l_N)
  double base = 0.0;         // Re(l_{d_s} - l_{d_s+1})
  double top_real = 0.0;     // Re l_N
};

struct DissipativityReport {
  double q = 0.0;
  double ell = 1.0;
  std::string ell_basis;
  int stable_dim = 1;
  std::vector<ConditionAMargin> condition_a;
  bool condition_a_vacuous = false;
  // sup over samples of Div X + (ell d_s q - 1) ||DX||_2
  double condition_b_sampled = 0.0;
  // same sup with the norm term inflated by the safety margin
  double condition_b = 0.0;
  double inflation = 0.05;
  std::size_t sample_count = 0;
  // largest q keeping every condition (a) margin negative
  double q_max_a = std::numeric_limits<double>::infinity();
  bool pass = false;
};

struct DissipativityOptions {
  double inflation = 0.05;
  // ell <= 0 means estimate it from the equilibria and the spectrum below
  double ell = 0.0;
  // empirical physical-measure spectrum, increasing; may be empty
  std::vector<double> empirical_spectrum;
};

// Frobenius norm, the ||.||_2 of the dissipativity conditions.
double frobenius_norm(const Mat& a);

// Ratio (1/(d_s chi_{d_s})) sum_{j<=d_s} chi_j for one spectrum.
double ell_ratio(const std::vector<double>& increasing_exponents, int stable_dim);

DissipativityReport strong_dissipativity_report(const VectorField& vf,
                                                const std::vector<EquilibriumRecord>& equilibria, double q,
                                                const std::vector<Vec>& samples,
                                                const DissipativityOptions& options = {});

struct EtaValue {
  double eta = 0.0;
  // log singular values of DX_t(x), decreasing
  std::vector<double> log_singular_values;
  // log gap between the weakest E^cu and strongest E^s singular value
  double splitting_gap = 0.0;
};

// eta_t(x) = log(|DX_t|E^s_x| |DX_{-t}|E^cu_{X_t x}| |DX_t|E^cu_x|^q) with the
// finite-time splitting taken from the singular vectors of DX_t(x).
EtaValue eta_cocycle(const VectorField& vf, const Vec& x, double t, double q, int stable_dim = 1,
                     double tol = 1e-10);

struct EtaTrend {
  std::vector<double> times;
  std::vector<double> mean_eta_over_t;
  double slope = 0.0;  // slope of mean eta_t against t
};

EtaTrend eta_cocycle_trend(const VectorField& vf, const std::vector<Vec>& points, const std::vector<double>& times,
                           double q, int stable_dim = 1, double tol = 1e-9);

}  // namespace singmix
