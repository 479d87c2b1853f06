#include "singmix/kernels.hpp"

#include <algorithm>

#include "singmix/error.hpp"

namespace singmix {

namespace {

inline cplx row_sum(const CollocationKernel& k, std::span<const cplx> psi, std::size_t i) {
  cplx s = 0.0;
  for (std::size_t e = k.row[i]; e < k.row[i + 1]; ++e) {
    const std::size_t c = k.cell[e];
    const double t = k.frac[e];
    const cplx v = t == 0.0 ? psi[c] : psi[c] + t * (psi[c + 1] - psi[c]);
    s += k.weight[e] * v;
  }
  return s;
}

void check(const CollocationKernel& k, std::span<const cplx> psi, std::span<cplx> out) {
  if (psi.size() != k.nodes || out.size() != k.nodes || k.row.size() != k.nodes + 1) {
    throw Error(ErrorCode::InvalidInput, "kernel and grid sizes differ");
  }
}

}  // namespace

void apply_kernel_serial(const CollocationKernel& k, std::span<const cplx> psi, std::span<cplx> out) {
  check(k, psi, out);
  for (std::size_t i = 0; i < k.nodes; ++i) out[i] = row_sum(k, psi, i);
}

void apply_kernel(const CollocationKernel& k, std::span<const cplx> psi, std::span<cplx> out, Exec exec) {
  if (exec == Exec::Serial) return apply_kernel_serial(k, psi, out);
  check(k, psi, out);
  const long long n = static_cast<long long>(k.nodes);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) out[i] = row_sum(k, psi, static_cast<std::size_t>(i));
}

std::vector<double> lagged_products_serial(std::span<const double> x, std::span<const double> y,
                                           std::size_t max_lag) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidInput, "series lengths differ");
  std::vector<double> out(max_lag + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_lag && lag < x.size(); ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < x.size(); ++i) s += x[i] * y[i + lag];
    out[lag] = s;
  }
  return out;
}

std::vector<double> lagged_products(std::span<const double> x, std::span<const double> y, std::size_t max_lag,
                                    Exec exec) {
  if (exec == Exec::Serial) return lagged_products_serial(x, y, max_lag);
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidInput, "series lengths differ");
  std::vector<double> out(max_lag + 1, 0.0);
  const long long lags = static_cast<long long>(std::min(max_lag + 1, x.size()));
  // one lag per iteration keeps each sum in the serial order
#pragma omp parallel for schedule(dynamic, 4)
  for (long long lag = 0; lag < lags; ++lag) {
    double s = 0.0;
    const std::size_t l = static_cast<std::size_t>(lag);
    for (std::size_t i = 0; i + l < x.size(); ++i) s += x[i] * y[i + l];
    out[l] = s;
  }
  return out;
}

}  // namespace singmix
