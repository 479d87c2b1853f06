#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace singmix {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

// Ordinary least squares y = intercept + slope * x. r2 is 1 for a perfect
// fit and 0 when the data carry no linear trend.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Fit of |rho(t)| <= C exp(-rate t).
struct ExpFit {
  bool accepted = false;
  double rate = 0.0;
  double prefactor = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
  // Largest |value| on the grid among points that were below the noise floor.
  double noise_bound = 0.0;
};

enum class FitMode {
  // OLS on log of the forward supremum sup_{s >= t} |rho(s)|.
  Envelope,
  // OLS on log |rho(t)| directly.
  Raw,
};

// Picks the longest contiguous window where the fitted quantity exceeds
// 3 standard errors and the log-linear fit has r2 >= min_r2. Rejected fits
// keep the best window found so callers can report it.
ExpFit fit_exponential_decay(std::span<const double> t, std::span<const double> values,
                             std::span<const double> se, double min_r2 = 0.9,
                             FitMode mode = FitMode::Envelope, std::size_t min_points = 4);

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // unbiased

double normal_cdf(double z);

// Kolmogorov-Smirnov distance between the sample and N(mu, sd^2).
double ks_distance_normal(std::vector<double> sample, double mu, double sd);

}  // namespace singmix
