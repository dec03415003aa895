#pragma once

// Classical measure-and-prepare bound for weak coherent time-bin inputs seen
// through a memory of finite efficiency, and its crossing with the model
// fidelity.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/qubit.hpp"

namespace afcmem::benchmark {

/// How the cheater's required acceptance probability is tied to the memory
/// efficiency: equal to eta, or equal to the click probability 1 - exp(-mu eta).
enum class Acceptance { efficiency, clickProbability };

inline const char* to_string(Acceptance a) {
  return a == Acceptance::efficiency ? "efficiency" : "click_probability";
}

struct BenchmarkResult {
  double mu = 0.0;
  double eta = 0.0;
  double Fc = 0.5;
  double acceptedProbability = 0.0;
  std::vector<double> pn;  // photon-number distribution, n = 0..nmax
  std::vector<double> qn;  // acceptance per n
  bool usesVacuum = false;  // q_0 > 0 needed to reach the target
};

/// Optimal fidelity for estimating a qubit from n copies; a blind guess for n = 0.
inline double copy_fidelity(std::size_t n) {
  return n == 0 ? 0.5 : (static_cast<double>(n) + 1.0) / (static_cast<double>(n) + 2.0);
}

/// Poisson weights up to the first n where the remaining tail is below tailMass.
inline std::vector<double> poisson_weights(double mu, double tailMass = 1e-12) {
  afcmem::detail::require(mu > 0.0 && std::isfinite(mu), "mean photon number must be positive");
  std::vector<double> p;
  long double cdf = 0.0L;
  for (std::size_t n = 0;; ++n) {
    const double v = std::exp(static_cast<double>(n) * std::log(mu) - mu - std::lgamma(static_cast<double>(n) + 1.0));
    p.push_back(v);
    cdf += v;
    if (static_cast<double>(n) > mu && 1.0L - cdf < tailMass) break;
    if (n > 100000) throw NumericalError("poisson_weights: truncation did not converge");
  }
  return p;
}

/// Greedy threshold strategy over an arbitrary photon-number distribution:
/// accept the largest n first, the threshold term fractionally. Since the
/// copy fidelity grows with n this maximises the conditional fidelity at the
/// given acceptance probability.
inline BenchmarkResult greedy_bound(std::vector<double> pn, double accepted) {
  afcmem::detail::require(accepted > 0.0 && accepted <= 1.0, "acceptance probability must be in (0, 1]");
  long double mass = 0.0L;
  for (double v : pn) {
    afcmem::detail::require(v >= 0.0, "probabilities must be non-negative");
    mass += v;
  }
  afcmem::detail::require(static_cast<double>(mass) >= accepted * (1.0 - 1e-12),
                          "acceptance exceeds the available probability mass");
  BenchmarkResult r;
  r.qn.assign(pn.size(), 0.0);
  long double left = accepted;
  for (std::size_t k = pn.size(); k-- > 0;) {
    if (left <= 0.0L) break;
    if (pn[k] <= 0.0) continue;
    const long double take = std::min<long double>(pn[k], left);
    r.qn[k] = std::min(1.0, static_cast<double>(take / pn[k]));
    left -= take;
  }
  // Sums in ascending n.
  long double acc = 0.0L, num = 0.0L;
  for (std::size_t n = 0; n < pn.size(); ++n) {
    acc += static_cast<long double>(pn[n]) * r.qn[n];
    num += static_cast<long double>(pn[n]) * r.qn[n] * copy_fidelity(n);
  }
  r.usesVacuum = !r.qn.empty() && r.qn[0] > 0.0;
  r.acceptedProbability = static_cast<double>(acc);
  r.Fc = static_cast<double>(num / acc);
  r.pn = std::move(pn);
  return r;
}

inline double required_acceptance(double mu, double eta, Acceptance conv) {
  return conv == Acceptance::efficiency ? eta : -std::expm1(-mu * eta);
}

inline BenchmarkResult classical_bound(double mu, double eta, Acceptance conv = Acceptance::efficiency) {
  afcmem::detail::require(mu > 0.0, "classical_bound: mu must be positive");
  afcmem::detail::require(eta > 0.0 && eta <= 1.0, "classical_bound: eta must be in (0, 1]");
  auto r = greedy_bound(poisson_weights(mu), required_acceptance(mu, eta, conv));
  r.mu = mu;
  r.eta = eta;
  return r;
}

/// Single-photon Fock input: only the n = 1 estimate is available.
inline double fock_bound() { return greedy_bound({0.0, 1.0}, 1.0).Fc; }

/// Fidelity of an explicit strategy; used to check optimality.
inline double strategy_fidelity(const std::vector<double>& pn, const std::vector<double>& qn) {
  long double acc = 0.0L, num = 0.0L;
  for (std::size_t n = 0; n < pn.size() && n < qn.size(); ++n) {
    acc += static_cast<long double>(pn[n]) * qn[n];
    num += static_cast<long double>(pn[n]) * qn[n] * copy_fidelity(n);
  }
  return acc > 0.0L ? static_cast<double>(num / acc) : 0.5;
}

// ---------------------------------------------------------------------------
// Quantum / classical crossing

struct CrossingRow {
  double mu = 0.0, Ft = 0.0, Fc = 0.0;
  bool quantum() const { return Ft > Fc; }
};

struct CrossingResult {
  double muStar = std::numeric_limits<double>::quiet_NaN();
  bool alwaysQuantum = false;  // model above the bound across the whole bracket
  std::vector<CrossingRow> table;
};

inline std::vector<double> table_mu_values() { return {0.6, 1.1, 1.5, 3.2, 5.9}; }

/// Root of F_T(mu) - F_C(mu, eta) on [lo, hi] by bisection, plus a sign
/// table at the given mu values.
inline CrossingResult quantum_crossing(double mu1p, double alpha, double eta, Acceptance conv = Acceptance::efficiency,
                                       std::vector<double> tableMu = table_mu_values(), double lo = 0.01,
                                       double hi = 10.0, double tol = 1e-4) {
  afcmem::detail::require(mu1p >= 0.0 && alpha >= 1.0, "quantum_crossing: invalid model parameters");
  auto ft = [&](double mu) { return mu1p == 0.0 ? 1.0 : qubit::fidelity_total(mu, mu1p, alpha).Ftotal; };
  auto g = [&](double mu) { return ft(mu) - classical_bound(mu, eta, conv).Fc; };
  CrossingResult res;
  for (double mu : tableMu) res.table.push_back({mu, ft(mu), classical_bound(mu, eta, conv).Fc});
  if (g(lo) > 0.0) {
    res.alwaysQuantum = true;
    return res;
  }
  if (g(hi) <= 0.0) throw NumericalError("quantum_crossing: no sign change in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (gm > 0.0) hi = mid;
    else lo = mid;
  }
  res.muStar = 0.5 * (lo + hi);
  return res;
}

}  // namespace afcmem::benchmark
