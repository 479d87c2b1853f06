#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <vector>

namespace singmix {

enum class Exec { Serial, Parallel };

// Runs f(chunk) for chunk = 0..chunks-1 and returns the results in chunk
// order. Each chunk must own its randomness (see stream_seed), so output is
// independent of the thread count. The first exception thrown is rethrown.
template <class T, class F>
std::vector<T> map_chunks(std::size_t chunks, Exec exec, F&& f) {
  std::vector<T> out(chunks);
  if (exec == Exec::Serial) {
    for (std::size_t c = 0; c < chunks; ++c) out[c] = f(c);
    return out;
  }
  std::vector<std::exception_ptr> errors(chunks);
  const long long n = static_cast<long long>(chunks);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long c = 0; c < n; ++c) {
    try {
      out[c] = f(static_cast<std::size_t>(c));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// Chunk c of a range of `total` items split into `chunks` near-equal parts.
inline std::size_t chunk_begin(std::size_t total, std::size_t chunks, std::size_t c) {
  return total * c / chunks;
}

using cplx = std::complex<double>;

// Sparse collocation kernel: out[i] = sum_{e in row i} weight[e] * interp(psi, cell[e], frac[e])
// with linear interpolation between psi[cell] and psi[cell + 1].
struct CollocationKernel {
  std::size_t nodes = 0;
  std::vector<std::size_t> row;  // size nodes + 1
  std::vector<std::uint32_t> cell;
  std::vector<double> frac;
  std::vector<cplx> weight;
};

void apply_kernel(const CollocationKernel& k, std::span<const cplx> psi, std::span<cplx> out, Exec exec);

// Reference loop kept for testing the parallel one.
void apply_kernel_serial(const CollocationKernel& k, std::span<const cplx> psi, std::span<cplx> out);

// Sums of x[i] * y[i + lag] over i for lag = 0..max_lag, i + lag < n.
std::vector<double> lagged_products(std::span<const double> x, std::span<const double> y, std::size_t max_lag,
                                    Exec exec);
std::vector<double> lagged_products_serial(std::span<const double> x, std::span<const double> y,
                                           std::size_t max_lag);

}  // namespace singmix
