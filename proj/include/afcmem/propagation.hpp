#pragma once

// Linear propagation of pulse envelopes through an absorbing spectral profile
// with its causal (Kramers-Kronig) dispersion, echo extraction, and the
// closed-form comb echo efficiencies.

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <numeric>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/fft.hpp"
#include "afcmem/spectrum.hpp"

namespace afcmem::propagation {

using cplx = std::complex<double>;

/// Complex baseband envelope. Sample i sits at t0 + i*dt (us); the carrier is
/// detuned by carrierOffset (MHz) from the comb centre. A baseband component
/// exp(+2 pi i f t) has optical detuning carrierOffset + f.
struct FieldEnvelope {
  std::vector<cplx> samples;
  double dt = 0.01;
  double t0 = 0.0;
  double carrierOffset = 0.0;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }

  /// sum |a_i|^2 dt
  double energy() const { return energy_between(t0 - dt, t0 + static_cast<double>(size()) * dt); }

  double energy_between(double ta, double tb) const {
    double e = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      const double t = time(i);
      if (t >= ta && t <= tb) e += std::norm(samples[i]);
    }
    return e * dt;
  }
};

inline constexpr double kMaxFieldStep = 0.02;  // us

/// Gaussian pulse with intensity FWHM `fwhm` (us) peaking at tPeak, scaled to
/// the requested energy.
inline FieldEnvelope gaussian_pulse(double fwhm, double tPeak, double dt, double t0, std::size_t n,
                                    double energy = 1.0, double carrierOffset = 0.0) {
  afcmem::detail::require(fwhm > 0.0, "pulse FWHM must be positive");
  afcmem::detail::require(dt > 0.0 && dt <= kMaxFieldStep, "field step must be in (0, 0.02 us]");
  afcmem::detail::require(energy >= 0.0, "pulse energy must be non-negative");
  FieldEnvelope f;
  f.dt = dt;
  f.t0 = t0;
  f.carrierOffset = carrierOffset;
  f.samples.resize(n);
  // |a|^2 = exp(-4 ln2 t^2 / fwhm^2)
  for (std::size_t i = 0; i < n; ++i) {
    const double x = f.time(i) - tPeak;
    f.samples[i] = std::exp(-2.0 * kLn2 * x * x / (fwhm * fwhm));
  }
  const double e = f.energy();
  if (e > 0.0)
    for (auto& s : f.samples) s *= std::sqrt(energy / e);
  return f;
}

// ---------------------------------------------------------------------------
// Kramers-Kronig

/// Sampled transfer function H(nu) = exp(-d/2 + i phi) on a uniform grid.
struct SpectralResponse {
  double f0 = 0.0;
  double spacing = 0.005;
  std::vector<double> depth;
  std::vector<double> phase;

  std::size_t size() const { return depth.size(); }
  double frequency(std::size_t i) const { return f0 + static_cast<double>(i) * spacing; }

  cplx at_index(std::size_t i) const { return std::exp(cplx(-depth[i] / 2.0, phase[i])); }

  /// Linear interpolation of depth and phase; edge values beyond the window.
  cplx at(double nu) const {
    const double pos = (nu - f0) / spacing;
    if (pos <= 0) return at_index(0);
    const auto last = static_cast<double>(size() - 1);
    if (pos >= last) return at_index(size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(i);
    const double dd = depth[i] * (1 - w) + depth[i + 1] * w;
    const double ph = phase[i] * (1 - w) + phase[i + 1] * w;
    return std::exp(cplx(-dd / 2.0, ph));
  }
};

/// Discrete Hilbert transform H[f](x) = (1/pi) p.v. int f(y)/(x-y) dy, taken
/// with the -i sgn(k) multiplier over a record padded to `padFactor` times its
/// length by edge-value extension. The mean edge value is removed first.
inline std::vector<double> hilbert_transform(std::span<const double> f, int padFactor = 4) {
  const std::size_t n = f.size();
  if (n == 0) return {};
  const double base = 0.5 * (f.front() + f.back());
  const std::size_t total = fft::good_size(static_cast<std::size_t>(padFactor) * n);
  const std::size_t lead = (total - n) / 2;
  std::vector<cplx> buf(total);
  for (std::size_t i = 0; i < total; ++i) {
    double v;
    if (i < lead) v = f.front();
    else if (i < lead + n) v = f[i - lead];
    else v = f.back();
    buf[i] = v - base;
  }
  auto spec = fft::forward(buf);
  for (std::size_t k = 0; k < total; ++k) {
    const long s = fft::signed_bin(k, total);
    // The Nyquist bin of an even-length record has no defined sign.
    const bool nyquist = total % 2 == 0 && k == total / 2;
    if (s == 0 || nyquist) spec[k] = 0.0;
    else spec[k] *= cplx(0.0, s > 0 ? -1.0 : 1.0);
  }
  const auto back = fft::inverse(spec);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = back[lead + i].real();
  return out;
}

/// Causal response of the medium. Absorption exp(-d/2) fixes the amplitude;
/// the phase is the Hilbert transform of d/2, which makes H analytic in the
/// half plane required by the exp(+2 pi i nu t) convention (echoes follow,
/// never precede, the input).
inline SpectralResponse kramers_kronig(const spectrum::SpectralGrid& grid) {
  afcmem::detail::require(grid.size() >= 8, "kramers_kronig: grid too small");
  const auto& d = grid.opticalDepth;
  const double dMax = *std::max_element(d.begin(), d.end());
  const double edgeGap = std::abs(d.front() - d.back());
  if (edgeGap > 0.05 + 0.02 * dMax)
    throw InvalidArgument("kramers_kronig: grid window too narrow (edge discontinuity " +
                          std::to_string(edgeGap) + ")");
  std::vector<double> half(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) half[i] = 0.5 * d[i];
  SpectralResponse r;
  r.f0 = grid.frequencies.front();
  r.spacing = grid.spacing;
  r.depth = d;
  r.phase = hilbert_transform(half);
  return r;
}

// ---------------------------------------------------------------------------
// Propagation

/// output = IFFT(FFT(input) * H(carrierOffset + f)). The transform runs over a
/// zero-padded record long enough to resolve the grid spacing; the output is
/// returned on the input's time axis.
inline FieldEnvelope propagate(const FieldEnvelope& field, const SpectralResponse& h) {
  afcmem::detail::require(field.dt > 0.0 && field.dt <= kMaxFieldStep, "field step must be in (0, 0.02 us]");
  const std::size_t n = field.size();
  FieldEnvelope out = field;
  if (n == 0) return out;
  afcmem::detail::require(h.size() >= 2, "propagate: empty spectral response");

  const auto needed = static_cast<std::size_t>(std::ceil(1.0 / (field.dt * h.spacing)));
  const std::size_t N = fft::good_size(std::max(2 * n, needed));
  std::vector<cplx> buf(N, 0.0);
  std::copy(field.samples.begin(), field.samples.end(), buf.begin());
  auto spec = fft::forward(buf);
  const double df = 1.0 / (static_cast<double>(N) * field.dt);
  for (std::size_t k = 0; k < N; ++k) {
    const double f = static_cast<double>(fft::signed_bin(k, N)) * df;
    spec[k] *= h.at(field.carrierOffset + f);
  }
  const auto back = fft::inverse(spec);
  std::copy(back.begin(), back.begin() + static_cast<long>(n), out.samples.begin());

  const double total = out.energy();
  if (total > 0.0) {
    const std::size_t tail = std::max<std::size_t>(1, n / 20);
    double eTail = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) eTail += std::norm(out.samples[i]);
    if (eTail * out.dt > 0.01 * total)
      throw NumericalError("propagate: aliasing detected (energy in last 5% of record exceeds 1%)");
  }
  return out;
}

inline FieldEnvelope propagate(const FieldEnvelope& field, const spectrum::SpectralGrid& grid) {
  return propagate(field, kramers_kronig(grid));
}

// ---------------------------------------------------------------------------
// Analytic efficiency

/// Forward echo efficiency of a comb:
///   gaussian teeth: dt^2 exp(-dt) exp(-7/F^2) exp(-d0)
///   square teeth:   dt^2 exp(-dt) sinc^2(pi/F) exp(-d0)
/// with dt = d/F.
inline double afc_efficiency_analytic(const spectrum::CombSpec& spec) {
  spectrum::validate(spec);
  const double dt = spec.effective_depth();
  const double F = spec.finesse;
  double dephasing;
  if (spec.toothShape == spectrum::ToothShape::gaussian) {
    dephasing = std::exp(-7.0 / (F * F));
  } else {
    const double x = kPi / F;
    const double sinc = std::sin(x) / x;
    dephasing = sinc * sinc;
  }
  return dt * dt * std::exp(-dt) * dephasing * std::exp(-spec.backgroundDepth);
}

// ---------------------------------------------------------------------------
// Echo extraction

struct EchoReport {
  double transmittedEnergyFraction = 0.0;
  double echoEnergyFraction = 0.0;    // eta_AFC within the window
  double fullEchoEnergyFraction = 0.0;
  double captureFraction = 0.0;       // window / full echo support
  double echoPeakTime = 0.0;          // us
  double windowStart = 0.0, windowEnd = 0.0;
};

/// Energy fractions relative to the reference input. The input support is
/// where the reference intensity exceeds 1e-6 of its peak; the full echo
/// support spans half the input-echo delay on either side of the echo.
inline EchoReport extract_echo(const FieldEnvelope& output, const FieldEnvelope& inputRef,
                               double expectedEchoTime, double windowWidth) {
  afcmem::detail::require(windowWidth > 0.0, "echo window width must be positive");
  afcmem::detail::require(!inputRef.samples.empty(), "extract_echo: empty input reference");
  const double recStart = output.t0, recEnd = output.time(output.size() - 1);
  afcmem::detail::require(expectedEchoTime >= recStart && expectedEchoTime <= recEnd,
                          "expected echo time outside the record");

  std::size_t iPeak = 0;
  double pk = 0.0;
  for (std::size_t i = 0; i < inputRef.size(); ++i)
    if (std::norm(inputRef.samples[i]) > pk) {
      pk = std::norm(inputRef.samples[i]);
      iPeak = i;
    }
  EchoReport rep;
  rep.windowStart = expectedEchoTime - windowWidth / 2;
  rep.windowEnd = expectedEchoTime + windowWidth / 2;
  const double eIn = inputRef.energy();
  if (pk == 0.0 || eIn == 0.0) {
    rep.echoPeakTime = expectedEchoTime;
    return rep;
  }
  double supLo = inputRef.time(iPeak), supHi = supLo;
  for (std::size_t i = 0; i < inputRef.size(); ++i)
    if (std::norm(inputRef.samples[i]) >= 1e-6 * pk) {
      supLo = std::min(supLo, inputRef.time(i));
      supHi = std::max(supHi, inputRef.time(i));
    }
  if (rep.windowStart <= supHi && rep.windowEnd >= supLo)
    throw InvalidArgument("echo window overlaps input pulse support");

  const double tIn = inputRef.time(iPeak);
  const double delay = expectedEchoTime - tIn;
  const double fullLo = tIn + 0.5 * delay, fullHi = tIn + 1.5 * delay;
  rep.transmittedEnergyFraction = output.energy_between(supLo, supHi) / eIn;
  rep.echoEnergyFraction = output.energy_between(rep.windowStart, rep.windowEnd) / eIn;
  const double full = output.energy_between(std::min(fullLo, fullHi), std::max(fullLo, fullHi));
  rep.fullEchoEnergyFraction = full / eIn;
  rep.captureFraction = full > 0.0 ? rep.echoEnergyFraction * eIn / full : 0.0;

  // Peak of |E|^2 inside the full support, refined by a parabola.
  std::size_t best = 0;
  double bestV = -1.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double t = output.time(i);
    if (t < std::min(fullLo, fullHi) || t > std::max(fullLo, fullHi)) continue;
    if (std::norm(output.samples[i]) > bestV) {
      bestV = std::norm(output.samples[i]);
      best = i;
    }
  }
  rep.echoPeakTime = output.time(best);
  if (best > 0 && best + 1 < output.size()) {
    const double a = std::norm(output.samples[best - 1]), b = bestV, c = std::norm(output.samples[best + 1]);
    const double den = a - 2 * b + c;
    if (den < 0.0) rep.echoPeakTime += 0.5 * (a - c) / den * output.dt;
  }
  return rep;
}

/// Standard input for comb experiments: a record `periods`/delta long that
/// starts half a period before the pulse peak (t = 0), so the record edges
/// fall midway between echo orders.
inline FieldEnvelope comb_input_pulse(double fwhm, double delta, double dt = 0.01,
                                      double periods = 4.0, double energy = 1.0) {
  afcmem::detail::require(delta > 0.0 && periods >= 1.0, "comb input: need delta > 0 and >= 1 period");
  const double lead = 0.5 / delta;
  const auto n = static_cast<std::size_t>(std::llround(periods / delta / dt));
  return gaussian_pulse(fwhm, 0.0, dt, -lead, n, energy);
}

// ---------------------------------------------------------------------------
// CSV

/// Columns time_us, re, im.
inline void write_field_csv(std::ostream& os, const FieldEnvelope& f) {
  os << "time_us,re,im\n" << std::setprecision(17);
  for (std::size_t i = 0; i < f.size(); ++i)
    os << f.time(i) << ',' << f.samples[i].real() << ',' << f.samples[i].imag() << '\n';
}

/// Reads the format written above. The step is taken from the first two rows
/// and checked for uniformity.
inline FieldEnvelope read_field_csv(std::istream& is, double carrierOffset = 0.0) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("time_us", 0) != 0)
    throw InvalidArgument("field CSV: missing header time_us,re,im");
  std::vector<double> t;
  FieldEnvelope f;
  f.carrierOffset = carrierOffset;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    double a, b, c;
    char s1, s2;
    if (!(ls >> a >> s1 >> b >> s2 >> c) || s1 != ',' || s2 != ',')
      throw InvalidArgument("field CSV: malformed row " + std::to_string(row));
    t.push_back(a);
    f.samples.emplace_back(b, c);
  }
  afcmem::detail::require(t.size() >= 2, "field CSV: need at least two samples");
  f.t0 = t.front();
  f.dt = t[1] - t[0];
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::abs(t[i] - t[0] - static_cast<double>(i) * f.dt) > 1e-6 * f.dt)
      throw InvalidArgument("field CSV: non-uniform time step");
  afcmem::detail::require(f.dt > 0.0 && f.dt <= kMaxFieldStep, "field step must be in (0, 0.02 us]");
  return f;
}

}  // namespace afcmem::propagation
