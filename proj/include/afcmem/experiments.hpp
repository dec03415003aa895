#pragma once

// Named experiments over the library, their reports, and report files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "afcmem/benchmark.hpp"
#include "afcmem/config.hpp"
#include "afcmem/detection.hpp"
#include "afcmem/fitkit.hpp"
#include "afcmem/propagation.hpp"
#include "afcmem/qubit.hpp"
#include "afcmem/rng.hpp"
#include "afcmem/spectrum.hpp"
#include "afcmem/spinwave.hpp"

namespace afcmem::harness {

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void add(std::vector<json> row) {
    if (row.size() != columns.size()) throw Error("table " + name + ": row width does not match header");
    rows.push_back(std::move(row));
  }
};

struct SummaryValue {
  std::string name;
  double value = 0.0;
  std::optional<double> sigma;
  std::string source;  // table the value is derived from
};

struct RunReport {
  Experiment experiment{};
  std::string configHash;
  json config;
  std::vector<Table> tables;  // tables[0] is the primary table
  std::vector<SummaryValue> summary;
  std::vector<std::string> notes;
  std::vector<std::string> invariantFailures;
  double durationSeconds = 0.0;

  const Table& table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    throw InvalidArgument("report has no table '" + name + "'");
  }
  const SummaryValue& value(const std::string& name) const {
    for (const auto& s : summary)
      if (s.name == name) return s;
    throw InvalidArgument("report has no summary value '" + name + "'");
  }
  bool has_value(const std::string& name) const {
    for (const auto& s : summary)
      if (s.name == name) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// Shared operating point

struct OperatingPoint {
  double etaAfc = 0.0;
  double etaT = 0.0;
  double etaC = 0.0;
  double peakRabi = 0.0;  // only with the Bloch transfer model
  spinwave::EfficiencyBreakdown eff;
  spinwave::StorageTimeline timeline;
  detection::NoiseModel noise;
  detection::NoiseBudget budget;  // for the configured filter
};

namespace detail {

inline spectrum::SpectralGrid comb_grid(const spectrum::CombSpec& c) {
  spectrum::CombWindow w;
  w.spacing = std::min(0.005, c.tooth_width() / 5.0);
  return spectrum::build_comb_analytic(c, w);
}

inline propagation::EchoReport simulate_echo(const ExperimentConfig& cfg) {
  const auto in = propagation::comb_input_pulse(cfg.efficiency.inputFwhm, cfg.comb.delta);
  const auto out = propagation::propagate(in, comb_grid(cfg.comb));
  return propagation::extract_echo(out, in, 1.0 / cfg.comb.delta, cfg.efficiency.echoWindow);
}

inline double eta_t(const ExperimentConfig& cfg, double& peakRabi) {
  const auto& e = cfg.efficiency;
  if (!e.blochTransfer) return e.etaT;
  spinwave::BlochOptions opt;
  opt.workers = cfg.workers;
  auto p = e.pulse;
  if (p.peakRabi == 0.0) p.peakRabi = spinwave::calibrate_peak_rabi(p, e.detuningSpread, e.etaT, opt);
  peakRabi = p.peakRabi;
  return spinwave::transfer_efficiency_bloch(p, e.detuningSpread, opt);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  return rng::splitmix64(seed ^ rng::splitmix64(index + 1));
}

inline std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return v;
}

}  // namespace detail

inline OperatingPoint operating_point(const ExperimentConfig& cfg, double spinTime) {
  OperatingPoint op;
  switch (cfg.efficiency.afcSource) {
    case AfcSource::measured: op.etaAfc = cfg.efficiency.etaAfcMeasured; break;
    case AfcSource::analytic: op.etaAfc = propagation::afc_efficiency_analytic(cfg.comb); break;
    case AfcSource::propagation: op.etaAfc = detail::simulate_echo(cfg).fullEchoEnergyFraction; break;
  }
  op.etaT = detail::eta_t(cfg, op.peakRabi);
  op.etaC = spinwave::spin_decoherence(cfg.spin, spinTime);
  op.eff = spinwave::total_efficiency(op.etaAfc, op.etaT, op.etaC);
  op.timeline = spinwave::make_timeline(cfg.comb.delta, spinTime);
  op.noise = detection::calibrate_noise(cfg.noise.anchors, cfg.chain, {true, true, true}, cfg.noise.controlPulses);
  op.budget = detection::noise_budget(cfg.chain, cfg.filter, op.noise);
  return op;
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline detection::HistogramLayout layout_for(const ExperimentConfig& cfg, double echoTime) {
  auto L = detection::HistogramLayout::for_echo_time(echoTime);
  L.windowWidth = cfg.efficiency.echoWindow;
  L.inputFwhm = cfg.efficiency.inputFwhm;
  L.echoFwhm = cfg.efficiency.inputFwhm;
  return L;
}

/// Transmitted input (photons at the memory output) for the histogram
/// display: exp(-d/F) exp(-d0) of the input.
inline double transmitted_input(const ExperimentConfig& cfg, double mu) {
  return mu * std::exp(-cfg.comb.peakDepth / cfg.comb.finesse) * std::exp(-cfg.comb.backgroundDepth);
}

inline void check(RunReport& r, bool ok, const std::string& what) {
  if (!ok) r.invariantFailures.push_back(what);
}

inline void check_histogram(RunReport& r, const detection::CountHistogram& h) {
  std::uint64_t w = 0;
  for (const auto& win : h.windows) w += h.window_sum(win.name);
  check(r, w <= h.total(), "window sums exceed histogram total");
}

inline void run_fig2a(const ExperimentConfig& cfg, RunReport& r) {
  const auto op = operating_point(cfg, cfg.efficiency.spinTime);
  const double mu = cfg.signal.histogramMu;
  const auto e = detection::expected_counts(mu, op.eff, cfg.chain, op.budget.sources(), cfg.efficiency.captureFraction);
  const auto L = layout_for(cfg, op.timeline.totalTime);
  const auto prof = detection::detection_profile(L, transmitted_input(cfg, mu) * e.tChain, e.signal, e.noiseWindow);

  Table expected{"expected", {"bin_start_us", "bin_end_us", "mean_counts"}, {}};
  for (std::size_t i = 0; i < prof.means.size(); ++i)
    expected.add({prof.binEdges[i], prof.binEdges[i + 1], prof.means[i]});
  if (cfg.trials > 0) {
    detection::MonteCarloOptions mc;
    mc.workers = cfg.workers;
    const auto h = detection::simulate_counting(prof, cfg.trials, cfg.seed, mc);
    check_histogram(r, h);
    Table hist{"histogram", {"bin_start_us", "bin_end_us", "counts"}, {}};
    for (std::size_t i = 0; i < h.bins(); ++i) hist.add({h.binEdges[i], h.binEdges[i + 1], h.counts[i]});
    const auto s = detection::snr_from_histogram(h);
    r.tables.push_back(std::move(hist));
    r.summary.push_back({"S", static_cast<double>(s.S), std::nullopt, "histogram"});
    r.summary.push_back({"N", static_cast<double>(s.N), std::nullopt, "histogram"});
    if (!s.infinite) r.summary.push_back({"snr_mc", s.snr, s.sigma, "histogram"});
  }
  r.tables.push_back(std::move(expected));
  r.summary.push_back({"mu_in", mu, std::nullopt, "expected"});
  r.summary.push_back({"snr_analytic", e.snr, std::nullopt, "expected"});
  r.summary.push_back({"eta_SW", op.eff.etaSW, std::nullopt, "expected"});
  r.summary.push_back({"p_N", op.budget.total(), std::nullopt, "expected"});
}

inline void run_fig2b(const ExperimentConfig& cfg, RunReport& r) {
  const auto op = operating_point(cfg, cfg.efficiency.spinTime);
  const double cap = cfg.efficiency.captureFraction;
  const auto L = layout_for(cfg, op.timeline.totalTime);
  Table main{"snr", {"mu_in", "snr", "snr_sigma"}, {}};
  Table analytic{"analytic", {"mu_in", "snr_analytic", "echo_mean", "noise_mean"}, {}};
  fitkit::Data d;
  detection::MonteCarloOptions mc;
  mc.workers = cfg.workers;
  for (std::size_t i = 0; i < cfg.signal.muIn.size(); ++i) {
    const double mu = cfg.signal.muIn[i];
    const auto e = detection::expected_counts(mu, op.eff, cfg.chain, op.budget.sources(), cap);
    analytic.add({mu, e.snr, e.echoWindow, e.noiseWindow});
    double snr = e.snr, sig = 0.0;
    if (cfg.trials > 0) {
      const auto prof = detection::detection_profile(L, transmitted_input(cfg, mu) * e.tChain, e.signal, e.noiseWindow);
      const auto h = detection::simulate_counting(prof, cfg.trials, detail::sub_seed(cfg.seed, i), mc);
      check_histogram(r, h);
      const auto s = detection::snr_from_histogram(h);
      check(r, !s.infinite, "empty noise window at mu_in = " + std::to_string(mu));
      snr = s.snr;
      sig = s.sigma;
    }
    main.add({mu, snr, sig});
    d.x.push_back(mu);
    d.y.push_back(snr);
    d.sigma.push_back(cfg.trials > 0 ? std::max(sig, 1e-9) : 1.0);
  }
  const double mu1 = detection::mu_one(op.budget.total(), op.eff.etaSW, cap);
  r.summary.push_back({"eta_AFC", op.etaAfc, std::nullopt, "analytic"});
  r.summary.push_back({"eta_SW", op.eff.etaSW, std::nullopt, "analytic"});
  r.summary.push_back({"p_N", op.budget.total(), std::nullopt, "analytic"});
  r.summary.push_back({"mu1", mu1, std::nullopt, "analytic"});
  if (d.size() >= 3) {
    const auto f = fitkit::fit_linear(d, 0.0);
    const double slope = f.param("slope");
    r.summary.push_back({"mu1_fit", 1.0 / slope, f.sigma("slope") / (slope * slope), "snr"});
  }
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(analytic));
}

inline void run_fig2c(const ExperimentConfig& cfg, RunReport& r) {
  Table main{"decay", {"Ts_us", "snr", "snr_sigma"}, {}};
  Table analytic{"analytic", {"Ts_us", "eta_C", "eta_SW", "snr_analytic"}, {}};
  fitkit::Data d;
  detection::MonteCarloOptions mc;
  mc.workers = cfg.workers;
  const double mu = cfg.signal.decayMu;
  for (std::size_t i = 0; i < cfg.signal.storageTimes.size(); ++i) {
    const double ts = cfg.signal.storageTimes[i];
    const auto op = operating_point(cfg, ts);
    const auto e = detection::expected_counts(mu, op.eff, cfg.chain, op.budget.sources(), cfg.efficiency.captureFraction);
    analytic.add({ts, op.etaC, op.eff.etaSW, e.snr});
    double snr = e.snr, sig = 0.0;
    if (cfg.trials > 0) {
      const auto L = layout_for(cfg, op.timeline.totalTime);
      const auto prof = detection::detection_profile(L, transmitted_input(cfg, mu) * e.tChain, e.signal, e.noiseWindow);
      const auto h = detection::simulate_counting(prof, cfg.trials, detail::sub_seed(cfg.seed, i), mc);
      check_histogram(r, h);
      const auto s = detection::snr_from_histogram(h);
      check(r, !s.infinite, "empty noise window at T_S = " + std::to_string(ts));
      snr = s.snr;
      sig = s.sigma;
    }
    main.add({ts, snr, sig});
    d.x.push_back(ts);
    d.y.push_back(snr);
    d.sigma.push_back(cfg.trials > 0 ? std::max(sig, 1e-9) : std::max(0.01 * std::abs(snr), 1e-9));
  }
  if (d.size() >= 4) {
    const auto f = fitkit::fit(d, fitkit::ModelKind::gaussianDecay, {std::max(d.y.front(), 1.0), 20.0});
    check(r, f.converged, "decay fit did not converge: " + f.diagnostics);
    r.summary.push_back({"gamma_in", f.param("gamma_in"), f.sigma("gamma_in"), "decay"});
    r.summary.push_back({"snr_at_zero", f.param("y0"), f.sigma("y0"), "decay"});
  }
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(analytic));
}

inline void run_fig3b(const ExperimentConfig& cfg, RunReport& r) {
  const auto& qc = cfg.qubit;
  const auto op = operating_point(cfg, cfg.efficiency.spinTime);
  auto q = qubit::make_qubit(kPi / 4, qc.deltaAlpha, qc.muQ);
  q.binSeparation = qc.binSeparation;
  q.pulseFwhm = qc.pulseFwhm;
  qubit::DoubleWriteConfig dw{0.0, qc.binSeparation, qc.alpha, qc.mu1p};
  // Noise per bin such that the pole SNR is mu_q / mu1p.
  const double pN = qc.mu1p * op.eff.etaSW;
  const double vModel = qubit::visibility_model(qc.muQ, qc.mu1p, qc.alpha);
  Table main{"fringe", {"delta_beta_deg", "counts", "fit_value"}, {}};
  if (cfg.trials > 0) {
    const auto s = qubit::simulate_fringe(q, dw, qc.deltaBeta, pN, op.eff.etaSW, cfg.chain, cfg.trials, cfg.seed,
                                          cfg.workers);
    for (std::size_t i = 0; i < s.betas.size(); ++i) main.add({s.betas[i], s.counts[i], s.fitValues[i]});
    check(r, s.fit.converged, "fringe fit did not converge: " + s.fit.diagnostics);
    r.summary.push_back({"V_fit", s.visibility, s.sigmaVisibility, "fringe"});
    r.summary.push_back({"phi_fit", s.fit.param("phi"), s.fit.sigma("phi"), "fringe"});
  } else {
    const auto m = qubit::fringe_means(q, dw, qc.deltaBeta, pN, op.eff.etaSW);
    for (std::size_t i = 0; i < m.size(); ++i) main.add({qc.deltaBeta[i], m[i] * cfg.chain.transmission(), m[i] * cfg.chain.transmission()});
    r.notes.push_back("trials = 0: counts are expected detector counts per trial");
  }
  r.summary.push_back({"V_model", vModel, std::nullopt, "fringe"});
  r.summary.push_back({"mu_q", qc.muQ, std::nullopt, "fringe"});
  r.tables.push_back(std::move(main));
}

inline void fidelity_row(const ExperimentConfig& cfg, RunReport& r, Table& t, double mu) {
  const auto& qc = cfg.qubit;
  const auto f = qubit::fidelity_total(mu, qc.mu1p, qc.alpha);
  const auto b = benchmark::classical_bound(mu, qc.etaBenchmark, qc.acceptance);
  check(r, std::abs(b.acceptedProbability - benchmark::required_acceptance(mu, qc.etaBenchmark, qc.acceptance)) <= 1e-9,
        "classical bound acceptance mismatch");
  for (double v : {f.Fel, f.Fpm, f.Ftotal, b.Fc}) check(r, v >= 0.0 && v <= 1.0, "fidelity outside [0, 1]");
  check(r, std::abs(f.Ftotal - (f.Fel / 3 + 2 * f.Fpm / 3)) <= 1e-12, "F_T composition violated");
  t.add({mu, f.Fel, f.Fpm, f.Ftotal, b.Fc});
}

inline void add_crossing(const ExperimentConfig& cfg, RunReport& r, const std::string& name, double mu1p, double alpha,
                         const std::string& source) {
  try {
    const auto c = benchmark::quantum_crossing(mu1p, alpha, cfg.qubit.etaBenchmark, cfg.qubit.acceptance);
    if (c.alwaysQuantum) r.notes.push_back(name + ": model above the classical bound over the whole bracket");
    else r.summary.push_back({name, c.muStar, std::nullopt, source});
  } catch (const NumericalError& e) {
    r.notes.push_back(name + ": " + e.what());
  }
}

inline void run_fig4(const ExperimentConfig& cfg, RunReport& r) {
  const auto& qc = cfg.qubit;
  Table main{"fidelity", {"mu_q", "F_el", "F_pm", "F_T", "F_C"}, {}};
  Table curves{"curves", {"mu_q", "F_T", "F_C", "F_C_eta1", "F_fock", "F_T_alpha1", "F_T_alpha1_mu1p_alt"}, {}};
  const double fock = benchmark::fock_bound();
  for (double mu : detail::log_grid(qc.curveMuMin, qc.curveMuMax, qc.curvePoints)) {
    fidelity_row(cfg, r, main, mu);
    curves.add({mu, qubit::fidelity_total(mu, qc.mu1p, qc.alpha).Ftotal,
                benchmark::classical_bound(mu, qc.etaBenchmark, qc.acceptance).Fc,
                benchmark::classical_bound(mu, 1.0, qc.acceptance).Fc, fock,
                qubit::fidelity_total(mu, qc.mu1p, 1.0).Ftotal, qubit::fidelity_total(mu, qc.mu1pAlt, 1.0).Ftotal});
  }
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(curves));
  add_crossing(cfg, r, "mu_star", qc.mu1p, qc.alpha, "fidelity");
  add_crossing(cfg, r, "mu_star_alpha1", qc.mu1p, 1.0, "curves");
  add_crossing(cfg, r, "mu_star_alpha1_mu1p_alt", qc.mu1pAlt, 1.0, "curves");
  r.summary.push_back({"F_fock", fock, std::nullopt, "curves"});
}

inline void run_tableS1(const ExperimentConfig& cfg, RunReport& r) {
  const auto& qc = cfg.qubit;
  Table main{"table", {"mu_q", "F_el", "F_pm", "F_T", "F_C"}, {}};
  Table cmp{"comparison",
            {"mu_q", "F_T_model", "F_T_model_sigma", "F_T_reference", "F_T_reference_sigma", "within_2sigma", "F_C",
             "model_quantum", "reference_quantum"},
            {}};
  fitkit::Data d;
  int within = 0;
  for (std::size_t i = 0; i < qc.tableMu.size(); ++i) {
    const double mu = qc.tableMu[i];
    fidelity_row(cfg, r, main, mu);
    const auto f = qubit::fidelity_total(mu, qc.mu1p, qc.alpha, qc.sigmaMu1p, qc.sigmaAlpha);
    const double fc = benchmark::classical_bound(mu, qc.etaBenchmark, qc.acceptance).Fc;
    const double comb = std::hypot(f.sigmaFtotal, qc.referenceFtSigma[i]);
    const bool ok = std::abs(f.Ftotal - qc.referenceFt[i]) <= 2.0 * comb;
    within += ok;
    cmp.add({mu, f.Ftotal, f.sigmaFtotal, qc.referenceFt[i], qc.referenceFtSigma[i], ok ? 1 : 0, fc,
             f.Ftotal > fc ? 1 : 0, qc.referenceFt[i] > fc ? 1 : 0});
    d.x.push_back(mu);
    d.y.push_back(qc.referenceFt[i]);
    d.sigma.push_back(qc.referenceFtSigma[i]);
  }
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(cmp));
  r.summary.push_back({"rows_within_2sigma", static_cast<double>(within), std::nullopt, "comparison"});
  if (d.size() >= 3) {
    const auto f = fitkit::fit(d, fitkit::ModelKind::fidelityModel, {qc.mu1p, 2.0}, {true, false});
    check(r, f.converged, "alpha fit did not converge: " + f.diagnostics);
    r.summary.push_back({"alpha_fit", f.param("alpha"), f.sigma("alpha"), "comparison"});
  }
  add_crossing(cfg, r, "mu_star", qc.mu1p, qc.alpha, "table");
}

inline void run_filter_sweep(const ExperimentConfig& cfg, RunReport& r) {
  const auto op = operating_point(cfg, cfg.efficiency.spinTime);
  const double cap = cfg.efficiency.captureFraction;
  Table main{"filter_sweep", {"hole_width_MHz", "p_N", "mu1"}, {}};
  double prev = 0.0;
  for (double w : cfg.signal.holeWidths) {
    auto f = cfg.filter;
    f.mode = detection::FilterMode::hole;
    f.holeWidth = w;
    const double p = detection::noise_budget(cfg.chain, f, op.noise).total();
    check(r, p >= prev, "p_N not monotone in hole width");
    prev = p;
    main.add({w, p, detection::mu_one(p, op.eff.etaSW, cap)});
  }
  Table anchors{"anchors", {"filter", "hole_width_MHz", "p_N_model", "p_N_anchor", "anchor_sigma", "fluorescence",
                            "broadband", "leakage", "dark_referred"}, {}};
  for (const auto& a : cfg.noise.anchors) {
    const auto b = detection::noise_budget(cfg.chain, a.filter, op.noise);
    anchors.add({detection::to_string(a.filter.mode), a.filter.passband(), b.total(), a.pN, a.sigma, b.fluorescence,
                 b.broadband, b.leakage, b.darkReferred});
    r.summary.push_back({std::string("p_N_") + detection::to_string(a.filter.mode), b.total(), a.sigma, "anchors"});
  }
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(anchors));
  r.summary.push_back({"eta_SW", op.eff.etaSW, std::nullopt, "filter_sweep"});
}

inline void run_noise_vs_ts(const ExperimentConfig& cfg, RunReport& r) {
  Table main{"noise", {"Ts_us", "p_N"}, {}};
  Table stats{"stats", {"Ts_us", "noise_counts", "p_N_sigma", "p_N_analytic"}, {}};
  detection::MonteCarloOptions mc;
  mc.workers = cfg.workers;
  double chi2 = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < cfg.signal.noiseStorageTimes.size(); ++i) {
    const double ts = cfg.signal.noiseStorageTimes[i];
    const auto op = operating_point(cfg, ts);
    const double tChain = cfg.chain.transmission();
    const double analytic = op.budget.total();
    const double noiseMean = op.budget.sources() * tChain + cfg.chain.dark_per_gate();
    double p = analytic, sig = 0.0, counts = 0.0;
    if (cfg.trials > 0) {
      // No input: the echo window holds noise only.
      const auto prof = detection::detection_profile(layout_for(cfg, op.timeline.totalTime), 0.0, 0.0, noiseMean);
      const auto h = detection::simulate_counting(prof, cfg.trials, detail::sub_seed(cfg.seed, i), mc);
      check_histogram(r, h);
      counts = static_cast<double>(h.window_sum("echo"));
      p = counts / static_cast<double>(cfg.trials) / tChain;
      sig = std::sqrt(std::max(counts, 1.0)) / static_cast<double>(cfg.trials) / tChain;
      chi2 += (p - analytic) * (p - analytic) / (sig * sig);
    }
    sum += p;
    main.add({ts, p});
    stats.add({ts, counts, sig, analytic});
  }
  const double n = static_cast<double>(cfg.signal.noiseStorageTimes.size());
  r.summary.push_back({"p_N_mean", sum / n, std::nullopt, "noise"});
  if (cfg.trials > 0) r.summary.push_back({"chi2_per_point", chi2 / n, std::nullopt, "stats"});
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(stats));
}

inline void run_comb_preparation(const ExperimentConfig& cfg, RunReport& r) {
  const auto& p = cfg.preparation;
  const auto scheme = spectrum::pr_yso_scheme();
  const auto g0 = spectrum::make_crystal_grid(scheme, p.halfWidth, p.spacing, p.inhomogeneousDepth);
  const auto g = spectrum::simulate_pumping(g0, spectrum::preparation_sequence(scheme, p.settings));
  Table main{"spectrum", {"frequency_MHz", "optical_depth"}, {}};
  for (std::size_t i = 0; i < g.size(); ++i) main.add({g.frequencies[i], g.opticalDepth[i]});
  const auto c = spectrum::measure_comb(g);
  r.tables.push_back(std::move(main));
  r.summary.push_back({"delta", c.delta, std::nullopt, "spectrum"});
  r.summary.push_back({"d", c.peakDepth, std::nullopt, "spectrum"});
  r.summary.push_back({"d0", c.backgroundDepth, std::nullopt, "spectrum"});
  r.summary.push_back({"finesse", c.finesse, std::nullopt, "spectrum"});
  r.summary.push_back({"bandwidth", c.bandwidth, std::nullopt, "spectrum"});
  r.summary.push_back({"eta_AFC", propagation::afc_efficiency_analytic(c), std::nullopt, "spectrum"});
}

inline void run_efficiency_report(const ExperimentConfig& cfg, RunReport& r) {
  const auto echo = detail::simulate_echo(cfg);
  double rabi = 0.0;
  const double etaT = detail::eta_t(cfg, rabi);
  const double etaC = spinwave::spin_decoherence(cfg.spin, cfg.efficiency.spinTime);
  double etaAfc = cfg.efficiency.etaAfcMeasured;
  if (cfg.efficiency.afcSource == AfcSource::analytic) etaAfc = propagation::afc_efficiency_analytic(cfg.comb);
  if (cfg.efficiency.afcSource == AfcSource::propagation) etaAfc = echo.fullEchoEnergyFraction;
  const auto eff = spinwave::total_efficiency(etaAfc, etaT, etaC);
  const auto timeline = spinwave::make_timeline(cfg.comb.delta, cfg.efficiency.spinTime);
  Table main{"efficiency", {"quantity", "value"}, {}};
  const std::vector<std::pair<std::string, double>> rows{
      {"eta_AFC_measured", cfg.efficiency.etaAfcMeasured},
      {"eta_AFC_analytic", propagation::afc_efficiency_analytic(cfg.comb)},
      {"eta_AFC_propagation", echo.fullEchoEnergyFraction},
      {"eta_AFC_window", echo.echoEnergyFraction},
      {"capture_fraction_window", echo.captureFraction},
      {"echo_peak_time_us", echo.echoPeakTime},
      {"eta_T", etaT},
      {"eta_C", etaC},
      {"eta_SW", eff.etaSW},
      {"total_storage_time_us", timeline.totalTime}};
  for (const auto& [k, v] : rows) {
    main.add({k, v});
    r.summary.push_back({k, v, std::nullopt, "efficiency"});
  }
  if (cfg.efficiency.blochTransfer) {
    main.add({"peak_rabi_MHz", rabi});
    r.summary.push_back({"peak_rabi_MHz", rabi, std::nullopt, "efficiency"});
  }
  check(r, echo.transmittedEnergyFraction + echo.fullEchoEnergyFraction <= 1.0 + 1e-9, "propagation not passive");
  r.notes.push_back(std::string("eta_SW composed with eta_AFC source: ") + detail::afc_source_name(cfg.efficiency.afcSource));
  r.tables.push_back(std::move(main));
}

}  // namespace detail

/// Runs the configured experiment. Module errors propagate with the
/// experiment name prefixed.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunReport r;
  r.experiment = cfg.experiment;
  r.configHash = config_hash(cfg);
  r.config = to_json(cfg);
  const auto blocks = required_blocks(cfg.experiment);
  if (std::find(blocks.begin(), blocks.end(), "detection") != blocks.end()) {
    const double tChain = cfg.chain.transmission();
    std::ostringstream os;
    os << "T_chain = path_transmission x detector_efficiency = " << cfg.chain.pathTransmission << " x "
       << cfg.chain.detectorEfficiency << " = " << tChain << " (fibre coupling inside path_transmission)";
    r.notes.push_back(os.str());
  }
  try {
    switch (cfg.experiment) {
      case Experiment::fig2a_histograms: detail::run_fig2a(cfg, r); break;
      case Experiment::fig2b_snr_scaling: detail::run_fig2b(cfg, r); break;
      case Experiment::fig2c_decay: detail::run_fig2c(cfg, r); break;
      case Experiment::fig3b_fringes: detail::run_fig3b(cfg, r); break;
      case Experiment::fig4_fidelity: detail::run_fig4(cfg, r); break;
      case Experiment::tableS1: detail::run_tableS1(cfg, r); break;
      case Experiment::figS_filter_sweep: detail::run_filter_sweep(cfg, r); break;
      case Experiment::figS_noise_vs_ts: detail::run_noise_vs_ts(cfg, r); break;
      case Experiment::comb_preparation: detail::run_comb_preparation(cfg, r); break;
      case Experiment::efficiency_report: detail::run_efficiency_report(cfg, r); break;
    }
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string(to_string(cfg.experiment)) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(to_string(cfg.experiment)) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(std::string(to_string(cfg.experiment)) + ": " + e.what());
  }
  for (const auto& s : r.summary) detail::check(r, std::isfinite(s.value), "non-finite summary value " + s.name);
  r.durationSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Report files

namespace detail {

inline std::string cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  std::ostringstream os;
  os.precision(12);
  os << v.get<double>();
  return os.str();
}

inline std::string table_csv(const Table& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell(row[i]);
    os << '\n';
  }
  return os.str();
}

inline std::string summary_csv(const RunReport& r) {
  Table t{"summary", {"name", "value", "sigma", "source"}, {}};
  for (const auto& s : r.summary) t.add({s.name, s.value, s.sigma ? json(*s.sigma) : json(""), s.source});
  return table_csv(t);
}

/// Write to a temporary file next to the target, then rename over it.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline json report_json(const RunReport& r) {
  json tables = json::object();
  for (const auto& t : r.tables) {
    json rows = json::array();
    for (const auto& row : t.rows) rows.push_back(row);
    tables[t.name] = json{{"columns", t.columns}, {"rows", rows}};
  }
  json summary = json::array();
  for (const auto& s : r.summary) {
    json e{{"name", s.name}, {"value", s.value}, {"source", s.source}};
    if (s.sigma) e["sigma"] = *s.sigma;
    summary.push_back(e);
  }
  return json{{"experiment", to_string(r.experiment)},
              {"config_hash", r.configHash},
              {"notes", r.notes},
              {"summary", summary},
              {"invariant_failures", r.invariantFailures},
              {"tables", tables},
              {"config", r.config},
              {"duration_s", r.durationSeconds}};
}

/// Files: `<experiment>_<hash>.csv` holds the primary table; further tables go
/// to `<experiment>_<table>_<hash>.csv` and the summary to
/// `<experiment>_summary_<hash>.csv`. JSON output is a single
/// `<experiment>_<hash>.json`. Returns the paths written.
inline std::vector<std::filesystem::path> write_report(const RunReport& r, const std::filesystem::path& dir,
                                                       OutputFormat fmt) {
  std::filesystem::create_directories(dir);
  const std::string stem = to_string(r.experiment);
  std::vector<std::filesystem::path> out;
  if (fmt == OutputFormat::json) {
    out.push_back(dir / (stem + "_" + r.configHash + ".json"));
    detail::write_atomic(out.back(), report_json(r).dump(2) + "\n");
    return out;
  }
  for (std::size_t i = 0; i < r.tables.size(); ++i) {
    const auto name = i == 0 ? stem + "_" + r.configHash + ".csv" : stem + "_" + r.tables[i].name + "_" + r.configHash + ".csv";
    out.push_back(dir / name);
    detail::write_atomic(out.back(), detail::table_csv(r.tables[i]));
  }
  out.push_back(dir / (stem + "_summary_" + r.configHash + ".csv"));
  detail::write_atomic(out.back(), detail::summary_csv(r));
  return out;
}

}  // namespace afcmem::harness
