#pragma once

// Experiment configuration: JSON text with a strict schema. Every field has
// a default at the reference operating point; unknown keys are rejected.

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "afcmem/benchmark.hpp"
#include "afcmem/detection.hpp"
#include "afcmem/spectrum.hpp"
#include "afcmem/spinwave.hpp"

namespace afcmem::harness {

using json = nlohmann::ordered_json;

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class Experiment {
  fig2a_histograms,
  fig2b_snr_scaling,
  fig2c_decay,
  fig3b_fringes,
  fig4_fidelity,
  tableS1,
  figS_filter_sweep,
  figS_noise_vs_ts,
  comb_preparation,
  efficiency_report
};

inline const std::vector<std::pair<Experiment, const char*>>& experiment_names() {
  static const std::vector<std::pair<Experiment, const char*>> v{
      {Experiment::fig2a_histograms, "fig2a_histograms"},   {Experiment::fig2b_snr_scaling, "fig2b_snr_scaling"},
      {Experiment::fig2c_decay, "fig2c_decay"},             {Experiment::fig3b_fringes, "fig3b_fringes"},
      {Experiment::fig4_fidelity, "fig4_fidelity"},         {Experiment::tableS1, "tableS1"},
      {Experiment::figS_filter_sweep, "figS_filter_sweep"}, {Experiment::figS_noise_vs_ts, "figS_noise_vs_ts"},
      {Experiment::comb_preparation, "comb_preparation"},   {Experiment::efficiency_report, "efficiency_report"}};
  return v;
}

inline const char* to_string(Experiment e) {
  for (const auto& [k, n] : experiment_names())
    if (k == e) return n;
  return "?";
}

inline Experiment parse_experiment(const std::string& s) {
  for (const auto& [k, n] : experiment_names())
    if (s == n) return k;
  throw ConfigError("unknown experiment '" + s + "'");
}

enum class OutputFormat { csv, json };

/// Where eta_AFC comes from when composing eta_SW.
enum class AfcSource { measured, analytic, propagation };

struct PreparationBlock {
  double inhomogeneousDepth = 7.0;
  double halfWidth = 30.0;  // MHz
  double spacing = 0.005;   // MHz
  spectrum::PreparationSettings settings;
};

struct EfficiencyBlock {
  AfcSource afcSource = AfcSource::measured;
  double etaAfcMeasured = 0.056;
  bool blochTransfer = false;  // false: use etaT directly
  double etaT = 0.817;
  spinwave::TransferPulse pulse;   // used when blochTransfer
  double detuningSpread = 3.5;     // MHz, spread of the comb addressed by the pulse
  double spinTime = 7.8;           // T_S, us
  double inputFwhm = 0.43;         // us
  double echoWindow = 0.7;         // us
  double captureFraction = 1.0;
};

struct NoiseBlock {
  std::vector<detection::NoiseAnchor> anchors = detection::default_anchors();
  int controlPulses = 2;
};

struct SignalBlock {
  std::vector<double> muIn{0.1, 0.2, 0.4, 0.7, 1.15, 1.6, 2.2};
  double histogramMu = 1.15;
  double decayMu = 1.0;
  std::vector<double> storageTimes{3.0, 5.0, 7.8, 10.0, 12.5, 15.0, 18.8};
  std::vector<double> holeWidths{0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0};
  std::vector<double> noiseStorageTimes{5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0};
};

struct QubitBlock {
  double pulseFwhm = 0.26;
  double binSeparation = 0.6;
  double muQ = 1.5;
  double deltaAlpha = 90.0;
  std::vector<double> deltaBeta = qubit::default_fringe_phases();
  double mu1p = 0.11;
  double sigmaMu1p = 0.01;
  double alpha = 2.5;
  double sigmaAlpha = 0.6;
  double mu1pAlt = 0.07;  // comparison curves with alpha = 1
  double etaBenchmark = 0.022;
  benchmark::Acceptance acceptance = benchmark::Acceptance::efficiency;
  std::vector<double> tableMu = benchmark::table_mu_values();
  // Reference total fidelities and 1-sigma errors at tableMu.
  std::vector<double> referenceFt{0.769, 0.883, 0.886, 0.945, 0.974};
  std::vector<double> referenceFtSigma{0.016, 0.014, 0.014, 0.011, 0.012};
  double curveMuMin = 0.05, curveMuMax = 8.0;
  int curvePoints = 80;
};

/// Recorded in reports only.
struct Metadata {
  int trialsPerPreparation = 1000;
  double cyclePeriodMs = 700.0;
  double repetitionRateKHz = 7.0;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::fig2b_snr_scaling;
  spectrum::CombSpec comb;
  PreparationBlock preparation;
  spinwave::SpinParams spin;
  EfficiencyBlock efficiency;
  detection::DetectionChain chain;
  detection::FilterConfig filter;
  NoiseBlock noise;
  SignalBlock signal;
  QubitBlock qubit;
  Metadata metadata;
  std::uint64_t trials = 700000;
  std::uint64_t seed = 1;
  unsigned workers = 4;
  std::string outputDir = "out";
  OutputFormat format = OutputFormat::csv;
};

/// Parameter blocks each experiment reads. A block set to null in the config
/// is absent; validation fails if a required block is absent.
inline std::vector<std::string> required_blocks(Experiment e) {
  switch (e) {
    case Experiment::fig2a_histograms:
    case Experiment::fig2b_snr_scaling:
    case Experiment::fig2c_decay:
    case Experiment::figS_noise_vs_ts:
      return {"comb", "spin", "efficiency", "detection", "filter", "noise", "signal"};
    case Experiment::figS_filter_sweep:
      return {"comb", "spin", "efficiency", "detection", "noise", "signal"};
    case Experiment::fig3b_fringes:
      return {"comb", "spin", "efficiency", "detection", "filter", "noise", "qubit"};
    case Experiment::fig4_fidelity:
    case Experiment::tableS1:
      return {"qubit"};
    case Experiment::comb_preparation:
      return {"preparation"};
    case Experiment::efficiency_report:
      return {"comb", "spin", "efficiency"};
  }
  return {};
}

namespace detail {

/// Line and column (1-based) of a byte offset.
inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

/// Reads an object strictly: each get marks the key as known; finish()
/// rejects anything left over.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  void number(const std::string& key, double& v) {
    if (!has(key)) return;
    const auto& x = j_.at(key);
    if (!x.is_number()) throw ConfigError("field '" + field(key) + "' must be a number");
    v = x.get<double>();
  }
  void integer(const std::string& key, int& v) {
    if (!has(key)) return;
    const auto& x = j_.at(key);
    if (!x.is_number_integer()) throw ConfigError("field '" + field(key) + "' must be an integer");
    v = x.get<int>();
  }
  void u64(const std::string& key, std::uint64_t& v) {
    if (!has(key)) return;
    const auto& x = j_.at(key);
    if (!x.is_number_unsigned() && !(x.is_number_integer() && x.get<long long>() >= 0))
      throw ConfigError("field '" + field(key) + "' must be a non-negative integer");
    v = x.get<std::uint64_t>();
  }
  void boolean(const std::string& key, bool& v) {
    if (!has(key)) return;
    const auto& x = j_.at(key);
    if (!x.is_boolean()) throw ConfigError("field '" + field(key) + "' must be true or false");
    v = x.get<bool>();
  }
  void string(const std::string& key, std::string& v) {
    if (!has(key)) return;
    const auto& x = j_.at(key);
    if (!x.is_string()) throw ConfigError("field '" + field(key) + "' must be a string");
    v = x.get<std::string>();
  }
  void numbers(const std::string& key, std::vector<double>& v) {
    if (!has(key)) return;
    const auto& x = j_.at(key);
    if (!x.is_array()) throw ConfigError("field '" + field(key) + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : x) {
      if (!e.is_number()) throw ConfigError("field '" + field(key) + "' must be a list of numbers");
      out.push_back(e.get<double>());
    }
    v = std::move(out);
  }
  /// Sub-object; nullopt when absent or null.
  std::optional<Reader> object(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return Reader(j_.at(key), field(key));
  }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + field(it.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config " : "field '" + path_ + "' "; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline detection::FilterMode parse_filter_mode(const std::string& s, const std::string& field) {
  if (s == "hole") return detection::FilterMode::hole;
  if (s == "wide_pit") return detection::FilterMode::widePit;
  if (s == "bypassed") return detection::FilterMode::bypassed;
  throw ConfigError("field '" + field + "' must be one of hole, wide_pit, bypassed");
}

inline void read_filter(Reader& r, detection::FilterConfig& f) {
  std::string mode = detection::to_string(f.mode);
  r.string("mode", mode);
  f.mode = parse_filter_mode(mode, r.field("mode"));
  r.number("hole_width_MHz", f.holeWidth);
  r.number("control_extinction", f.controlExtinction);
  r.number("signal_pass_loss", f.signalPassLoss);
  r.finish();
}

inline json write_filter(const detection::FilterConfig& f) {
  return json{{"mode", detection::to_string(f.mode)},
              {"hole_width_MHz", f.holeWidth},
              {"control_extinction", f.controlExtinction},
              {"signal_pass_loss", f.signalPassLoss}};
}

/// Wraps module validation errors with the block they came from.
template <class F>
void check_block(const std::string& block, F&& f) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(block + ": " + e.what());
  }
}

inline const char* afc_source_name(AfcSource s) {
  switch (s) {
    case AfcSource::measured: return "measured";
    case AfcSource::analytic: return "analytic";
    case AfcSource::propagation: return "propagation";
  }
  return "?";
}

}  // namespace detail

/// Semantic checks on a fully populated config.
inline void validate(const ExperimentConfig& c) {
  using afcmem::detail::require;
  detail::check_block("comb", [&] { spectrum::validate(c.comb); });
  detail::check_block("preparation", [&] {
    require(c.preparation.inhomogeneousDepth >= 0.0, "inhomogeneous_depth must be non-negative");
    require(c.preparation.halfWidth > 0.0, "half_width_MHz must be positive");
    require(c.preparation.spacing > 0.0 && c.preparation.spacing <= spectrum::kMaxGridSpacing,
            "spacing_MHz must be in (0, 0.01]");
    require(c.preparation.settings.combPeriod > 0.0, "comb_period_MHz must be positive");
    require(c.preparation.settings.combCycles >= 1, "comb_cycles must be >= 1");
  });
  detail::check_block("spin", [&] { spinwave::validate(c.spin); });
  detail::check_block("efficiency", [&] {
    const auto& e = c.efficiency;
    require(afcmem::detail::in_unit_interval(e.etaAfcMeasured), "eta_afc_measured must be in [0, 1]");
    require(afcmem::detail::in_unit_interval(e.etaT), "eta_T must be in [0, 1]");
    if (e.blochTransfer) spinwave::validate(e.pulse);
    require(e.detuningSpread >= 0.0, "detuning_spread_MHz must be non-negative");
    require(e.spinTime >= 0.0, "spin_time_us must be non-negative");
    require(e.inputFwhm > 0.0, "input_fwhm_us must be positive");
    require(e.echoWindow > 0.0, "echo_window_us must be positive");
    require(e.captureFraction > 0.0 && e.captureFraction <= 1.0, "capture_fraction must be in (0, 1]");
  });
  detail::check_block("detection", [&] { detection::validate(c.chain); });
  detail::check_block("filter", [&] { detection::validate(c.filter); });
  detail::check_block("noise", [&] {
    require(!c.noise.anchors.empty(), "at least one anchor is required");
    for (const auto& a : c.noise.anchors) {
      detection::validate(a.filter);
      require(a.pN >= 0.0 && a.sigma >= 0.0, "anchor p_N and sigma must be non-negative");
    }
    require(c.noise.controlPulses >= 1, "control_pulses must be >= 1");
  });
  detail::check_block("signal", [&] {
    const auto& s = c.signal;
    require(!s.muIn.empty(), "mu_in must not be empty");
    for (double m : s.muIn) require(m >= 0.0, "mu_in values must be non-negative");
    require(s.histogramMu >= 0.0 && s.decayMu >= 0.0, "photon numbers must be non-negative");
    require(!s.storageTimes.empty() && !s.noiseStorageTimes.empty(), "storage time lists must not be empty");
    for (double t : s.storageTimes) require(t >= 0.0, "storage times must be non-negative");
    for (double t : s.noiseStorageTimes) require(t >= 0.0, "storage times must be non-negative");
    for (double w : s.holeWidths) require(w > 0.0, "hole widths must be positive");
  });
  detail::check_block("qubit", [&] {
    const auto& q = c.qubit;
    require(q.pulseFwhm > 0.0 && q.binSeparation > 0.0, "pulse width and bin separation must be positive");
    require(q.muQ >= 0.0, "mu_q must be non-negative");
    require(q.deltaBeta.size() >= 5, "delta_beta_deg needs at least five phases");
    require(q.mu1p > 0.0 && q.mu1pAlt > 0.0, "mu1p and mu1p_alt must be positive");
    require(q.alpha >= 1.0, "alpha must be >= 1");
    require(q.sigmaMu1p >= 0.0 && q.sigmaAlpha >= 0.0, "uncertainties must be non-negative");
    require(q.etaBenchmark > 0.0 && q.etaBenchmark <= 1.0, "eta_benchmark must be in (0, 1]");
    require(!q.tableMu.empty(), "table_mu must not be empty");
    for (double m : q.tableMu) require(m > 0.0, "table_mu values must be positive");
    require(q.referenceFt.size() == q.tableMu.size() && q.referenceFtSigma.size() == q.tableMu.size(),
            "reference_F_T and reference_F_T_sigma must match table_mu in length");
    for (double s : q.referenceFtSigma) require(s > 0.0, "reference_F_T_sigma values must be positive");
    require(q.curveMuMin > 0.0 && q.curveMuMax > q.curveMuMin && q.curvePoints >= 2, "invalid fidelity curve grid");
  });
  require(c.workers >= 1, "workers must be >= 1");
}

/// Parses and validates config text. `experimentOverride` replaces (or
/// supplies) the experiment field.
inline ExperimentConfig validate_config(const std::string& text,
                                        const std::optional<std::string>& experimentOverride = std::nullopt) {
  json j;
  try {
    j = text.find_first_not_of(" \t\r\n") == std::string::npos ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte);
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      e.what());
  }
  ExperimentConfig c;
  detail::Reader root(j, "");
  std::string exp;
  root.string("experiment", exp);
  if (experimentOverride) exp = *experimentOverride;
  if (exp.empty()) throw ConfigError("field 'experiment' is required");
  c.experiment = parse_experiment(exp);

  std::set<std::string> absent;
  auto block = [&](const std::string& name) -> std::optional<detail::Reader> {
    root.has(name);
    if (j.contains(name) && j.at(name).is_null()) absent.insert(name);
    return root.object(name);
  };

  if (auto r = block("comb")) {
    r->number("delta_MHz", c.comb.delta);
    r->number("bandwidth_MHz", c.comb.bandwidth);
    std::string shape = spectrum::to_string(c.comb.toothShape);
    r->string("tooth_shape", shape);
    if (shape == "gaussian") c.comb.toothShape = spectrum::ToothShape::gaussian;
    else if (shape == "square") c.comb.toothShape = spectrum::ToothShape::square;
    else throw ConfigError("field 'comb.tooth_shape' must be gaussian or square");
    r->number("peak_depth", c.comb.peakDepth);
    r->number("background_depth", c.comb.backgroundDepth);
    r->number("finesse", c.comb.finesse);
    r->finish();
  }
  if (auto r = block("preparation")) {
    auto& p = c.preparation;
    r->number("inhomogeneous_depth", p.inhomogeneousDepth);
    r->number("half_width_MHz", p.halfWidth);
    r->number("spacing_MHz", p.spacing);
    r->number("comb_period_MHz", p.settings.combPeriod);
    r->number("comb_bandwidth_MHz", p.settings.combBandwidth);
    r->number("burn_linewidth_MHz", p.settings.burnLinewidth);
    r->integer("comb_cycles", p.settings.combCycles);
    r->finish();
  }
  if (auto r = block("spin")) {
    r->number("gamma_in_kHz", c.spin.gammaIn);
    if (r->has("eta_C_reference")) {
      double v = 0.0;
      r->number("eta_C_reference", v);
      c.spin.etaCRef = v;
    }
    r->finish();
  }
  if (auto r = block("efficiency")) {
    auto& e = c.efficiency;
    std::string src = detail::afc_source_name(e.afcSource);
    r->string("eta_afc_source", src);
    if (src == "measured") e.afcSource = AfcSource::measured;
    else if (src == "analytic") e.afcSource = AfcSource::analytic;
    else if (src == "propagation") e.afcSource = AfcSource::propagation;
    else throw ConfigError("field 'efficiency.eta_afc_source' must be measured, analytic or propagation");
    r->number("eta_afc_measured", e.etaAfcMeasured);
    r->boolean("bloch_transfer", e.blochTransfer);
    r->number("eta_T", e.etaT);
    if (auto p = r->object("control_pulse")) {
      p->number("fwhm_us", e.pulse.fwhm);
      p->number("chirp_span_MHz", e.pulse.chirpSpan);
      p->number("peak_rabi_MHz", e.pulse.peakRabi);
      p->number("center_detuning_MHz", e.pulse.centerDetuning);
      p->finish();
    }
    r->number("detuning_spread_MHz", e.detuningSpread);
    r->number("spin_time_us", e.spinTime);
    r->number("input_fwhm_us", e.inputFwhm);
    r->number("echo_window_us", e.echoWindow);
    r->number("capture_fraction", e.captureFraction);
    r->finish();
  }
  if (auto r = block("detection")) {
    auto& d = c.chain;
    r->number("path_transmission", d.pathTransmission);
    r->number("fiber_coupling", d.fiberCoupling);
    r->number("detector_efficiency", d.detectorEfficiency);
    r->number("dark_rate_Hz", d.darkRate);
    r->number("gate_window_us", d.gateWindow);
    r->number("spatial_extinction", d.spatialExtinction);
    r->number("grating_attenuation", d.gratingAttenuation);
    r->finish();
  }
  if (auto r = block("filter")) detail::read_filter(*r, c.filter);
  if (auto r = block("noise")) {
    r->integer("control_pulses", c.noise.controlPulses);
    if (r->has("anchors")) {
      const auto& arr = r->raw("anchors");
      if (!arr.is_array()) throw ConfigError("field 'noise.anchors' must be a list");
      c.noise.anchors.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        detail::Reader a(arr[i], "noise.anchors[" + std::to_string(i) + "]");
        detection::NoiseAnchor na;
        if (auto f = a.object("filter")) detail::read_filter(*f, na.filter);
        else throw ConfigError("field 'noise.anchors[" + std::to_string(i) + "].filter' is required");
        a.number("p_N", na.pN);
        a.number("sigma", na.sigma);
        a.finish();
        c.noise.anchors.push_back(na);
      }
    }
    r->finish();
  }
  if (auto r = block("signal")) {
    auto& s = c.signal;
    r->numbers("mu_in", s.muIn);
    r->number("histogram_mu_in", s.histogramMu);
    r->number("decay_mu_in", s.decayMu);
    r->numbers("storage_times_us", s.storageTimes);
    r->numbers("hole_widths_MHz", s.holeWidths);
    r->numbers("noise_storage_times_us", s.noiseStorageTimes);
    r->finish();
  }
  if (auto r = block("qubit")) {
    auto& q = c.qubit;
    r->number("pulse_fwhm_us", q.pulseFwhm);
    r->number("bin_separation_us", q.binSeparation);
    r->number("mu_q", q.muQ);
    r->number("delta_alpha_deg", q.deltaAlpha);
    r->numbers("delta_beta_deg", q.deltaBeta);
    r->number("mu1p", q.mu1p);
    r->number("mu1p_sigma", q.sigmaMu1p);
    r->number("alpha", q.alpha);
    r->number("alpha_sigma", q.sigmaAlpha);
    r->number("mu1p_alt", q.mu1pAlt);
    r->number("eta_benchmark", q.etaBenchmark);
    std::string acc = benchmark::to_string(q.acceptance);
    r->string("acceptance", acc);
    if (acc == "efficiency") q.acceptance = benchmark::Acceptance::efficiency;
    else if (acc == "click_probability") q.acceptance = benchmark::Acceptance::clickProbability;
    else throw ConfigError("field 'qubit.acceptance' must be efficiency or click_probability");
    r->numbers("table_mu", q.tableMu);
    r->numbers("reference_F_T", q.referenceFt);
    r->numbers("reference_F_T_sigma", q.referenceFtSigma);
    r->number("curve_mu_min", q.curveMuMin);
    r->number("curve_mu_max", q.curveMuMax);
    r->integer("curve_points", q.curvePoints);
    r->finish();
  }
  if (auto r = block("metadata")) {
    r->integer("trials_per_preparation", c.metadata.trialsPerPreparation);
    r->number("cycle_period_ms", c.metadata.cyclePeriodMs);
    r->number("repetition_rate_kHz", c.metadata.repetitionRateKHz);
    r->finish();
  }
  root.u64("trials", c.trials);
  root.u64("seed", c.seed);
  std::uint64_t workers = c.workers;
  root.u64("workers", workers);
  if (workers < 1 || workers > 256) throw ConfigError("field 'workers' must be in [1, 256]");
  c.workers = static_cast<unsigned>(workers);
  root.string("output_dir", c.outputDir);
  std::string fmt = c.format == OutputFormat::csv ? "csv" : "json";
  root.string("format", fmt);
  if (fmt == "csv") c.format = OutputFormat::csv;
  else if (fmt == "json") c.format = OutputFormat::json;
  else throw ConfigError("field 'format' must be csv or json");
  root.finish();

  for (const auto& b : required_blocks(c.experiment))
    if (absent.count(b))
      throw ConfigError("experiment " + std::string(to_string(c.experiment)) + " requires block '" + b + "'");
  validate(c);
  return c;
}

/// Canonical JSON form: every field, fixed key order.
inline json to_json(const ExperimentConfig& c) {
  json anchors = json::array();
  for (const auto& a : c.noise.anchors)
    anchors.push_back(json{{"filter", detail::write_filter(a.filter)}, {"p_N", a.pN}, {"sigma", a.sigma}});
  json spin{{"gamma_in_kHz", c.spin.gammaIn}};
  if (c.spin.etaCRef) spin["eta_C_reference"] = *c.spin.etaCRef;
  const auto& e = c.efficiency;
  const auto& q = c.qubit;
  return json{
      {"experiment", to_string(c.experiment)},
      {"comb",
       {{"delta_MHz", c.comb.delta},
        {"bandwidth_MHz", c.comb.bandwidth},
        {"tooth_shape", spectrum::to_string(c.comb.toothShape)},
        {"peak_depth", c.comb.peakDepth},
        {"background_depth", c.comb.backgroundDepth},
        {"finesse", c.comb.finesse}}},
      {"preparation",
       {{"inhomogeneous_depth", c.preparation.inhomogeneousDepth},
        {"half_width_MHz", c.preparation.halfWidth},
        {"spacing_MHz", c.preparation.spacing},
        {"comb_period_MHz", c.preparation.settings.combPeriod},
        {"comb_bandwidth_MHz", c.preparation.settings.combBandwidth},
        {"burn_linewidth_MHz", c.preparation.settings.burnLinewidth},
        {"comb_cycles", c.preparation.settings.combCycles}}},
      {"spin", spin},
      {"efficiency",
       {{"eta_afc_source", detail::afc_source_name(e.afcSource)},
        {"eta_afc_measured", e.etaAfcMeasured},
        {"bloch_transfer", e.blochTransfer},
        {"eta_T", e.etaT},
        {"control_pulse",
         {{"fwhm_us", e.pulse.fwhm},
          {"chirp_span_MHz", e.pulse.chirpSpan},
          {"peak_rabi_MHz", e.pulse.peakRabi},
          {"center_detuning_MHz", e.pulse.centerDetuning}}},
        {"detuning_spread_MHz", e.detuningSpread},
        {"spin_time_us", e.spinTime},
        {"input_fwhm_us", e.inputFwhm},
        {"echo_window_us", e.echoWindow},
        {"capture_fraction", e.captureFraction}}},
      {"detection",
       {{"path_transmission", c.chain.pathTransmission},
        {"fiber_coupling", c.chain.fiberCoupling},
        {"detector_efficiency", c.chain.detectorEfficiency},
        {"dark_rate_Hz", c.chain.darkRate},
        {"gate_window_us", c.chain.gateWindow},
        {"spatial_extinction", c.chain.spatialExtinction},
        {"grating_attenuation", c.chain.gratingAttenuation}}},
      {"filter", detail::write_filter(c.filter)},
      {"noise", {{"control_pulses", c.noise.controlPulses}, {"anchors", anchors}}},
      {"signal",
       {{"mu_in", c.signal.muIn},
        {"histogram_mu_in", c.signal.histogramMu},
        {"decay_mu_in", c.signal.decayMu},
        {"storage_times_us", c.signal.storageTimes},
        {"hole_widths_MHz", c.signal.holeWidths},
        {"noise_storage_times_us", c.signal.noiseStorageTimes}}},
      {"qubit",
       {{"pulse_fwhm_us", q.pulseFwhm},
        {"bin_separation_us", q.binSeparation},
        {"mu_q", q.muQ},
        {"delta_alpha_deg", q.deltaAlpha},
        {"delta_beta_deg", q.deltaBeta},
        {"mu1p", q.mu1p},
        {"mu1p_sigma", q.sigmaMu1p},
        {"alpha", q.alpha},
        {"alpha_sigma", q.sigmaAlpha},
        {"mu1p_alt", q.mu1pAlt},
        {"eta_benchmark", q.etaBenchmark},
        {"acceptance", benchmark::to_string(q.acceptance)},
        {"table_mu", q.tableMu},
        {"reference_F_T", q.referenceFt},
        {"reference_F_T_sigma", q.referenceFtSigma},
        {"curve_mu_min", q.curveMuMin},
        {"curve_mu_max", q.curveMuMax},
        {"curve_points", q.curvePoints}}},
      {"metadata",
       {{"trials_per_preparation", c.metadata.trialsPerPreparation},
        {"cycle_period_ms", c.metadata.cyclePeriodMs},
        {"repetition_rate_kHz", c.metadata.repetitionRateKHz}}},
      {"trials", c.trials},
      {"seed", c.seed},
      {"workers", c.workers},
      {"output_dir", c.outputDir},
      {"format", c.format == OutputFormat::csv ? "csv" : "json"}};
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash over everything that affects results (output location, format and
/// worker count excluded), as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("format");
  j.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace afcmem::harness
