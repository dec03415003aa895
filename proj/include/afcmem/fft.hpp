#pragma once

// Thin RAII wrapper over FFTW for one-shot complex transforms.
//
// Conventions: forward(x)[k] = sum_n x[n] exp(-2 pi i k n / N),
// inverse(X)[n] = (1/N) sum_k X[k] exp(+2 pi i k n / N).

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <span>
#include <vector>

namespace afcmem::fft {

using cplx = std::complex<double>;

namespace detail {

// The FFTW planner is not re-entrant; execution of distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
 public:
  Plan(std::vector<cplx>& buf, int sign) {
    std::lock_guard lock(planner_mutex());
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    plan_ = fftw_plan_dft_1d(static_cast<int>(buf.size()), p, p, sign, FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;

  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

inline std::vector<cplx> transform(std::span<const cplx> in, int sign) {
  std::vector<cplx> buf(in.size());
  if (in.empty()) return buf;
  Plan plan(buf, sign);  // FFTW_ESTIMATE leaves the buffer untouched
  std::copy(in.begin(), in.end(), buf.begin());
  plan.execute();
  return buf;
}

}  // namespace detail

inline std::vector<cplx> forward(std::span<const cplx> in) {
  return detail::transform(in, FFTW_FORWARD);
}

inline std::vector<cplx> inverse(std::span<const cplx> in) {
  auto out = detail::transform(in, FFTW_BACKWARD);
  const double scale = out.empty() ? 1.0 : 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
  return out;
}

/// Signed frequency index of bin k for an N-point transform.
inline long signed_bin(std::size_t k, std::size_t n) {
  return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

/// Smallest size >= n whose only prime factors are 2, 3 and 5.
inline std::size_t good_size(std::size_t n) {
  for (std::size_t m = n < 1 ? 1 : n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

}  // namespace afcmem::fft
