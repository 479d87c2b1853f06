#include "singmix/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "singmix/error.hpp"

namespace singmix {

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "linear_fit needs two or more paired points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.points = x.size();
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 0.0;
  return fit;
}

ExpFit fit_exponential_decay(std::span<const double> t, std::span<const double> values,
                             std::span<const double> se, double min_r2, FitMode mode,
                             std::size_t min_points) {
  const std::size_t n = t.size();
  if (values.size() != n || se.size() != n) {
    throw Error(ErrorCode::InvalidInput, "fit_exponential_decay: size mismatch");
  }
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = std::abs(values[i]);
  if (mode == FitMode::Envelope) {
    for (std::size_t i = n; i-- > 1;) target[i - 1] = std::max(target[i - 1], target[i]);
  }
  std::vector<bool> signal(n);
  ExpFit best;
  for (std::size_t i = 0; i < n; ++i) {
    signal[i] = target[i] > 3.0 * se[i] && target[i] > 0.0;
    if (!signal[i]) best.noise_bound = std::max(best.noise_bound, std::abs(values[i]));
  }

  double best_span = -1.0;
  std::vector<double> xs, ys;
  for (std::size_t lo = 0; lo < n; ++lo) {
    if (!signal[lo]) continue;
    xs.clear();
    ys.clear();
    for (std::size_t hi = lo; hi < n && signal[hi]; ++hi) {
      xs.push_back(t[hi]);
      ys.push_back(std::log(target[hi]));
      if (xs.size() < std::max<std::size_t>(min_points, 2)) continue;
      const LinearFit lf = linear_fit(xs, ys);
      const double span = t[hi] - t[lo];
      const bool ok = lf.r2 >= min_r2 && lf.slope < 0.0;
      const bool better_ok = ok && (!best.accepted || span > best_span ||
                                    (span == best_span && lf.r2 > best.r2));
      const bool better_fallback = !best.accepted && !ok && lf.r2 > best.r2;
      if (better_ok || better_fallback) {
        best.accepted = ok;
        best.rate = -lf.slope;
        best.prefactor = std::exp(lf.intercept);
        best.t_lo = t[lo];
        best.t_hi = t[hi];
        best.r2 = lf.r2;
        best.points = xs.size();
        if (ok) best_span = span;
      }
    }
  }
  return best;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_distance_normal(std::vector<double> sample, double mu, double sd) {
  if (sample.empty() || !(sd > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "ks_distance_normal needs samples and sd > 0");
  }
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = normal_cdf((sample[i] - mu) / sd);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace singmix
