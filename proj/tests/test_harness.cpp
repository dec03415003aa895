#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "afcmem/experiments.hpp"

using namespace afcmem;
using namespace afcmem::harness;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("afcmem_test_" + name);
  std::filesystem::remove_all(d);
  return d;
}

std::string error_of(const std::string& text, std::optional<std::string> exp = std::nullopt) {
  try {
    validate_config(text, exp);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string header(const RunReport& r) {
  std::string h;
  for (std::size_t i = 0; i < r.tables[0].columns.size(); ++i) h += (i ? "," : "") + r.tables[0].columns[i];
  return h;
}

}  // namespace

TEST(Config, EmptyGivesDefaults) {
  const auto c = validate_config("", "fig2b_snr_scaling");
  EXPECT_EQ(c.experiment, Experiment::fig2b_snr_scaling);
  EXPECT_DOUBLE_EQ(c.comb.delta, 0.2);
  EXPECT_DOUBLE_EQ(c.comb.peakDepth, 4.5);
  EXPECT_DOUBLE_EQ(c.comb.backgroundDepth, 0.75);
  EXPECT_DOUBLE_EQ(c.comb.finesse, 4.7);
  EXPECT_DOUBLE_EQ(c.spin.gammaIn, 26.0);
  EXPECT_DOUBLE_EQ(c.efficiency.etaT, 0.817);
  EXPECT_DOUBLE_EQ(c.efficiency.spinTime, 7.8);
  EXPECT_DOUBLE_EQ(c.efficiency.inputFwhm, 0.43);
  EXPECT_DOUBLE_EQ(c.qubit.pulseFwhm, 0.26);
  EXPECT_DOUBLE_EQ(c.filter.holeWidth, 2.0);
  EXPECT_EQ(c.filter.mode, detection::FilterMode::hole);
  EXPECT_NEAR(c.chain.transmission(), 0.078, 1e-12);
  EXPECT_EQ(validate_config("{}", "fig2b_snr_scaling").experiment, Experiment::fig2b_snr_scaling);
}

TEST(Config, FinesseGuard) {
  const auto e = error_of(R"({"experiment": "fig2b_snr_scaling", "comb": {"finesse": 0.5}})");
  EXPECT_NE(e.find("finesse must exceed 1"), std::string::npos) << e;
}

TEST(Config, UnknownKeyRejected) {
  const auto e = error_of(R"({"experiment": "fig4_fidelity", "qubit": {"mu1pp": 0.1}})");
  EXPECT_NE(e.find("unknown key 'qubit.mu1pp'"), std::string::npos) << e;
  EXPECT_NE(error_of(R"({"experiment": "fig4_fidelity", "extra": 1})").find("unknown key"), std::string::npos);
}

TEST(Config, ParseErrorHasLineAndColumn) {
  const auto e = error_of("{\n  \"experiment\": \"tableS1\",\n  \"seed\": ,\n}");
  EXPECT_NE(e.find("line 3"), std::string::npos) << e;
  EXPECT_NE(e.find("column"), std::string::npos) << e;
}

TEST(Config, TypeErrorsNameTheField) {
  const auto e = error_of(R"({"experiment": "tableS1", "seed": "one"})");
  EXPECT_NE(e.find("seed"), std::string::npos) << e;
  EXPECT_FALSE(error_of(R"({"experiment": "nope"})").empty());
  EXPECT_FALSE(error_of("{}").empty());  // experiment missing
  EXPECT_FALSE(error_of(R"({"experiment": "tableS1", "workers": 0})").empty());
}

TEST(Config, MissingRequiredBlockRejected) {
  for (const auto& [exp, block] : std::vector<std::pair<std::string, std::string>>{
           {"fig2b_snr_scaling", "detection"}, {"tableS1", "qubit"}, {"comb_preparation", "preparation"}}) {
    const auto e = error_of("{\"experiment\": \"" + exp + "\", \"" + block + "\": null}");
    EXPECT_NE(e.find(block), std::string::npos) << exp << ": " << e;
  }
}

TEST(Config, RoundTrip) {
  const std::string x = R"({"experiment": "fig2b_snr_scaling", "seed": 7,
    "signal": {"mu_in": [0.1, 0.2, 0.4, 0.7, 1.15, 1.6, 2.2]},
    "filter": {"mode": "wide_pit", "hole_width_MHz": 14},
    "efficiency": {"eta_afc_source": "analytic"}})";
  const auto once = serialize(validate_config(x));
  EXPECT_EQ(once, serialize(validate_config(once)));
  for (const auto& [k, n] : experiment_names()) {
    const auto s = serialize(validate_config("", std::string(n)));
    EXPECT_EQ(s, serialize(validate_config(s)));
  }
}

TEST(Config, HashIgnoresOutputSettings) {
  const auto a = validate_config(R"({"experiment": "tableS1", "output_dir": "a", "workers": 1})");
  const auto b = validate_config(R"({"experiment": "tableS1", "output_dir": "b", "workers": 8, "format": "json"})");
  const auto c = validate_config(R"({"experiment": "tableS1", "seed": 2})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
  // Known FNV-1a vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Run, MuInListEchoedVerbatim) {
  auto c = validate_config(R"({"experiment": "fig2b_snr_scaling", "trials": 0,
    "signal": {"mu_in": [0.1, 0.2, 0.4, 0.7, 1.15, 1.6, 2.2]}})");
  const auto r = run_experiment(c);
  const std::vector<double> mu{0.1, 0.2, 0.4, 0.7, 1.15, 1.6, 2.2};
  EXPECT_EQ(r.config["signal"]["mu_in"].get<std::vector<double>>(), mu);
  ASSERT_EQ(r.tables[0].rows.size(), mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_EQ(r.tables[0].rows[i][0].get<double>(), mu[i]);
}

TEST(Run, Fig2bAnalyticMuOne) {
  auto c = validate_config("", "fig2b_snr_scaling");
  c.trials = 0;
  const auto r = run_experiment(c);
  EXPECT_TRUE(r.invariantFailures.empty());
  EXPECT_EQ(header(r), "mu_in,snr,snr_sigma");
  EXPECT_NEAR(r.value("mu1").value, 0.069, 0.01);
  // Independent: p_N / (eta_AFC eta_T^2 eta_C).
  const double etaC = std::exp(-std::pow(kPi * 0.026 * 7.8, 2) / (2 * std::log(2.0)));
  const double etaSW = 0.056 * 0.817 * 0.817 * etaC;
  EXPECT_NEAR(r.value("eta_SW").value, etaSW, 1e-12);
  EXPECT_NEAR(r.value("mu1").value, r.value("p_N").value / etaSW, 1e-12);
  EXPECT_NEAR(r.value("mu1_fit").value, r.value("mu1").value, 1e-6);
  for (const auto& s : r.summary) EXPECT_NO_THROW(r.table(s.source)) << s.name;
}

TEST(Run, Fig2bMonteCarloNearAnalytic) {
  auto c = validate_config(R"({"experiment": "fig2b_snr_scaling", "trials": 200000,
    "signal": {"mu_in": [0.4, 1.15, 2.2]}})");
  const auto r = run_experiment(c);
  EXPECT_TRUE(r.invariantFailures.empty());
  const auto& mc = r.table("snr");
  const auto& an = r.table("analytic");
  for (std::size_t i = 0; i < 3; ++i) {
    const double s = mc.rows[i][1].get<double>(), sig = mc.rows[i][2].get<double>();
    EXPECT_NEAR(s, an.rows[i][1].get<double>(), 3.5 * sig) << "row " << i;
  }
}

TEST(Run, TableS1ClassicalColumn) {
  const auto r = run_experiment(validate_config("", "tableS1"));
  EXPECT_EQ(header(r), "mu_q,F_el,F_pm,F_T,F_C");
  const double fc[] = {0.810, 0.844, 0.862, 0.901, 0.930};
  ASSERT_EQ(r.tables[0].rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.tables[0].rows[i][4].get<double>(), fc[i], 0.007);
  EXPECT_GE(r.value("rows_within_2sigma").value, 4.0);
  EXPECT_NEAR(r.value("alpha_fit").value, 2.5, 0.3);
  EXPECT_TRUE(r.invariantFailures.empty());
}

TEST(Run, ColumnHeaders) {
  const std::vector<std::pair<std::string, std::string>> expect{
      {"fig2c_decay", "Ts_us,snr,snr_sigma"},
      {"fig3b_fringes", "delta_beta_deg,counts,fit_value"},
      {"fig4_fidelity", "mu_q,F_el,F_pm,F_T,F_C"},
      {"figS_filter_sweep", "hole_width_MHz,p_N,mu1"},
      {"figS_noise_vs_ts", "Ts_us,p_N"},
      {"efficiency_report", "quantity,value"}};
  for (const auto& [exp, h] : expect) {
    auto c = validate_config("", exp);
    c.trials = 20000;
    const auto r = run_experiment(c);
    EXPECT_EQ(header(r), h) << exp;
    EXPECT_TRUE(r.invariantFailures.empty()) << exp;
  }
}

TEST(Run, Fig4Crossings) {
  const auto r = run_experiment(validate_config("", "fig4_fidelity"));
  EXPECT_GT(r.value("mu_star").value, 0.6);
  EXPECT_LT(r.value("mu_star").value, 1.1);
  EXPECT_LT(r.value("mu_star_alpha1_mu1p_alt").value, r.value("mu_star").value);
  EXPECT_DOUBLE_EQ(r.value("F_fock").value, 2.0 / 3.0);
}

TEST(Run, ModuleErrorsCarryExperimentName) {
  auto c = validate_config("", "fig2b_snr_scaling");
  c.noise.anchors[0].pN = 5e-2;  // infeasible calibration
  try {
    run_experiment(c);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("fig2b_snr_scaling: ", 0), 0u) << e.what();
  }
}

TEST(Output, DeterministicAndWorkerIndependent) {
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  auto c = validate_config(R"({"experiment": "fig2a_histograms", "trials": 50000, "seed": 5, "workers": 1})");
  const auto f1 = write_report(run_experiment(c), d1, OutputFormat::csv);
  c.workers = 7;
  const auto f2 = write_report(run_experiment(c), d2, OutputFormat::csv);
  ASSERT_EQ(f1.size(), f2.size());
  for (std::size_t i = 0; i < f1.size(); ++i) {
    EXPECT_EQ(f1[i].filename(), f2[i].filename());
    EXPECT_EQ(slurp(f1[i]), slurp(f2[i])) << f1[i];
  }
  c.seed = 6;
  const auto f3 = write_report(run_experiment(c), scratch("det3"), OutputFormat::csv);
  EXPECT_NE(f3[0].filename(), f1[0].filename());
}

TEST(Output, RepeatRunsByteIdentical) {
  for (const std::string exp : {"fig2b_snr_scaling", "fig3b_fringes", "figS_noise_vs_ts"}) {
    auto c = validate_config("", exp);
    c.trials = 30000;
    const auto a = write_report(run_experiment(c), scratch("rep_a"), OutputFormat::csv);
    const auto b = write_report(run_experiment(c), scratch("rep_b"), OutputFormat::csv);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slurp(a[i]), slurp(b[i])) << exp;
  }
}

TEST(Output, FileNames) {
  const auto c = validate_config("", "tableS1");
  const auto r = run_experiment(c);
  const auto d = scratch("names");
  const auto files = write_report(r, d, OutputFormat::csv);
  const auto h = config_hash(c);
  EXPECT_EQ(files[0].filename().string(), "tableS1_" + h + ".csv");
  EXPECT_EQ(files.back().filename().string(), "tableS1_summary_" + h + ".csv");
  EXPECT_EQ(slurp(files[0]).rfind("mu_q,F_el,F_pm,F_T,F_C\n", 0), 0u);
  for (const auto& e : std::filesystem::directory_iterator(d))
    EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);
  const auto j = write_report(r, d, OutputFormat::json);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0].filename().string(), "tableS1_" + h + ".json");
  const auto parsed = json::parse(slurp(j[0]));
  EXPECT_EQ(parsed["experiment"], "tableS1");
  EXPECT_EQ(parsed["tables"]["table"]["rows"].size(), 5u);
}

TEST(Run, CombPreparationSummary) {
  const auto r = run_experiment(validate_config("", "comb_preparation"));
  EXPECT_EQ(header(r), "frequency_MHz,optical_depth");
  EXPECT_NEAR(r.value("delta").value, 0.2, 0.01);
  EXPECT_GT(r.value("finesse").value, 1.0);
}
