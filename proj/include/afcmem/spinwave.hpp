#pragma once

// Control-pulse transfer between the optical and spin coherences, spin
// dephasing, and the composed spin-wave storage efficiency.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "afcmem/common.hpp"

namespace afcmem::spinwave {

/// Chirped Gaussian control pulse. `fwhm` is the intensity FWHM in us; the
/// Rabi frequency follows the field amplitude. Frequencies in MHz (cycles).
struct TransferPulse {
  double fwhm = 0.7;
  double chirpSpan = 5.0;
  double peakRabi = 0.0;
  double centerDetuning = 0.0;

  double sigma() const { return fwhm / kFwhmPerSigma; }
  /// Linear sweep covering chirpSpan across +/- 2 sigma, MHz/us.
  double chirp_rate() const { return chirpSpan / (4.0 * sigma()); }
  double rabi(double t) const { return peakRabi * std::exp(-2.0 * kLn2 * t * t / (fwhm * fwhm)); }
};

inline void validate(const TransferPulse& p) {
  afcmem::detail::require(p.fwhm > 0.0, "transfer pulse FWHM must be positive");
  afcmem::detail::require(p.chirpSpan >= 0.0, "chirp span must be non-negative");
  afcmem::detail::require(p.peakRabi >= 0.0, "peak Rabi frequency must be non-negative");
}

struct BlochOptions {
  double halfDurationSigmas = 4.0;  // integrate over +/- this many sigma
  double phasePerStep = 0.02;       // max rad advanced per step by the fastest rate
  std::size_t detuningPoints = 41;  // midpoint samples over the spread
  unsigned workers = 1;
  double normTolerance = 1e-6;
};

struct BlochResult {
  double excitedProbability = 0.0;
  double normDrift = 0.0;
  std::size_t steps = 0;
};

/// Single atom detuned by `atomDetuning` from the pulse centre, starting in
/// |g>. Rotating frame following the instantaneous pulse frequency:
///   i d/dt (cg, ce) = 2 pi [ (0, W/2), (W/2, -D(t)) ] (cg, ce),
///   D(t) = atomDetuning - centerDetuning - r t   (sign of r sets chirp direction).
/// Fixed-step classical RK4.
inline BlochResult bloch_single(const TransferPulse& p, double atomDetuning, const BlochOptions& opt = {},
                                double chirpSign = 1.0) {
  using c = std::complex<double>;
  const double T = opt.halfDurationSigmas * p.sigma();
  const double r = chirpSign * p.chirp_rate();
  const double dMax = std::abs(atomDetuning - p.centerDetuning) + std::abs(r) * T;
  const double fastest = 2.0 * kPi * std::max({p.peakRabi, dMax, 1e-3});
  const auto nSteps = static_cast<std::size_t>(std::ceil(2.0 * T * fastest / opt.phasePerStep));
  const double h = 2.0 * T / static_cast<double>(nSteps);
  const c I(0.0, 1.0);

  auto deriv = [&](double t, const std::array<c, 2>& y) {
    const double w = 2.0 * kPi * p.rabi(t) / 2.0;
    const double D = 2.0 * kPi * (atomDetuning - p.centerDetuning - r * t);
    return std::array<c, 2>{-I * (w * y[1]), -I * (w * y[0] - D * y[1])};
  };
  std::array<c, 2> y{1.0, 0.0};
  double t = -T;
  for (std::size_t s = 0; s < nSteps; ++s) {
    const auto k1 = deriv(t, y);
    const std::array<c, 2> y2{y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]};
    const auto k2 = deriv(t + 0.5 * h, y2);
    const std::array<c, 2> y3{y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]};
    const auto k3 = deriv(t + 0.5 * h, y3);
    const std::array<c, 2> y4{y[0] + h * k3[0], y[1] + h * k3[1]};
    const auto k4 = deriv(t + h, y4);
    for (int j = 0; j < 2; ++j) y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    t += h;
  }
  BlochResult res;
  res.normDrift = std::abs(std::norm(y[0]) + std::norm(y[1]) - 1.0);
  res.excitedProbability = std::clamp(std::norm(y[1]), 0.0, 1.0);
  res.steps = nSteps;
  if (res.normDrift > opt.normTolerance)
    throw NumericalError("transfer_efficiency_bloch: step-size instability (norm drift " +
                         std::to_string(res.normDrift) + ")");
  return res;
}

/// Mean inversion over detunings uniform in +/- detuningSpread/2 (midpoint
/// rule). Partitioned across workers; the reduction is a fixed pairwise sum.
inline double transfer_efficiency_bloch(const TransferPulse& p, double detuningSpread,
                                        const BlochOptions& opt = {}, double chirpSign = 1.0) {
  validate(p);
  afcmem::detail::require(detuningSpread >= 0.0, "detuning spread must be non-negative");
  afcmem::detail::require(opt.detuningPoints >= 1, "need at least one detuning sample");
  if (p.peakRabi == 0.0) return 0.0;
  const std::size_t n = detuningSpread > 0.0 ? opt.detuningPoints : 1;
  std::vector<double> vals(n);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double delta = detuningSpread * ((static_cast<double>(i) + 0.5) / static_cast<double>(n) - 0.5);
      vals[i] = bloch_single(p, p.centerDetuning + delta, opt, chirpSign).excitedProbability;
    }
  };
  const unsigned w = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(n)));
  if (w == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(w);
    for (unsigned k = 0; k < w; ++k)
      pool.emplace_back([&, k] {
        try {
          work(n * k / w, n * (k + 1) / w);
        } catch (...) {
          errs[k] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }
  return afcmem::detail::pairwise_sum(vals) / static_cast<double>(n);
}

/// Landau-Zener transfer for a linear sweep of rate r (MHz/us) at constant
/// Rabi frequency W (MHz): 1 - exp(-pi^2 W^2 / r).
inline double landau_zener(double rabi, double rate) {
  afcmem::detail::require(rate > 0.0, "sweep rate must be positive");
  return 1.0 - std::exp(-kPi * kPi * rabi * rabi / rate);
}

/// Peak Rabi frequency giving the target averaged transfer. Scans upward for
/// the first bracket, then bisects.
inline double calibrate_peak_rabi(TransferPulse p, double detuningSpread, double target,
                                  const BlochOptions& opt = {}, double maxRabi = 20.0) {
  afcmem::detail::require(target > 0.0 && target < 1.0, "calibration target must be in (0, 1)");
  auto f = [&](double w) {
    p.peakRabi = w;
    return transfer_efficiency_bloch(p, detuningSpread, opt) - target;
  };
  const int scan = 40;
  double lo = 0.0;
  for (int k = 1; k <= scan; ++k) {
    double hi = maxRabi * k / scan;
    if (f(hi) < 0.0) {
      lo = hi;
      continue;
    }
    for (int it = 0; it < 60 && hi - lo > 1e-6 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (f(mid) < 0.0) lo = mid;
      else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
  throw NumericalError("calibrate_peak_rabi: target transfer not reached below " + std::to_string(maxRabi) + " MHz");
}

// ---------------------------------------------------------------------------
// Spin dephasing and composition

struct SpinParams {
  double gammaIn = 26.0;  // kHz, FWHM of the spin inhomogeneous line
  std::optional<double> etaCRef;
};

inline void validate(const SpinParams& s) {
  afcmem::detail::require(s.gammaIn > 0.0, "gamma_in must be positive");
  if (s.etaCRef)
    afcmem::detail::require(*s.etaCRef > 0.0 && *s.etaCRef <= 1.0, "reference eta_C must be in (0, 1]");
}

/// Intensity decay of the spin-wave echo for a Gaussian spin line:
/// exp(-(pi gamma T)^2 / (2 ln 2)), gamma in kHz and T in us.
inline double spin_decoherence(const SpinParams& s, double spinTimeUs) {
  validate(s);
  afcmem::detail::require(spinTimeUs >= 0.0, "spin storage time must be non-negative");
  const double a = kPi * s.gammaIn * 1e-3 * spinTimeUs;
  return std::exp(-a * a / (2.0 * kLn2));
}

struct StorageTimeline {
  double afcDelay = 5.0;  // 1/Delta, us
  double spinTime = 7.8;  // T_S, us
  double totalTime = 12.8;
};

inline StorageTimeline make_timeline(double delta, double spinTimeUs) {
  afcmem::detail::require(delta > 0.0, "comb period must be positive");
  afcmem::detail::require(spinTimeUs >= 0.0, "spin storage time must be non-negative");
  return {1.0 / delta, spinTimeUs, 1.0 / delta + spinTimeUs};
}

struct EfficiencyBreakdown {
  double etaAFC = 0.0;
  double etaT = 0.0;
  double etaC = 0.0;
  double etaSW = 0.0;
};

/// etaSW = etaAFC * etaT^2 * etaC
inline EfficiencyBreakdown total_efficiency(double etaAFC, double etaT, double etaC) {
  for (double v : {etaAFC, etaT, etaC})
    afcmem::detail::require(afcmem::detail::in_unit_interval(v), "efficiency factors must be in [0, 1]");
  return {etaAFC, etaT, etaC, etaAFC * etaT * etaT * etaC};
}

}  // namespace afcmem::spinwave
