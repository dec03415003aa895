// afcmem-cli: run, validate and list experiments.
//
// Exit codes: 0 ok, 1 invariant failure, 2 config or usage error, 3 runtime error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "afcmem/experiments.hpp"

using namespace afcmem;
using namespace afcmem::harness;

namespace {

std::string read_file(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void print_summary(const RunReport& r) {
  std::cout << to_string(r.experiment) << "  config " << r.configHash << "  " << r.durationSeconds << " s\n";
  for (const auto& n : r.notes) std::cout << "  # " << n << "\n";
  for (const auto& s : r.summary) {
    std::cout << "  " << s.name << " = " << s.value;
    if (s.sigma) std::cout << " +/- " << *s.sigma;
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spin-wave AFC memory simulator"};
  app.require_subcommand(1);

  std::string configPath, experiment, outDir, format;
  std::uint64_t seed = 0, trials = 0;
  unsigned workers = 0;

  auto* run = app.add_subcommand("run", "Run one experiment and write its report files");
  run->add_option("--config", configPath, "JSON config file (defaults if omitted)");
  run->add_option("--experiment", experiment, "Experiment name; overrides the config");
  auto* seedOpt = run->add_option("--seed", seed, "Master seed");
  auto* outOpt = run->add_option("--out-dir", outDir, "Output directory");
  auto* fmtOpt = run->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  auto* trialsOpt = run->add_option("--trials", trials, "Monte Carlo trials (0 = analytic only)");
  auto* workersOpt = run->add_option("--workers", workers, "Worker threads")->check(CLI::Range(1u, 256u));

  auto* val = app.add_subcommand("validate", "Validate a config and print it with defaults filled in");
  val->add_option("--config", configPath, "JSON config file")->required();
  val->add_option("--experiment", experiment, "Experiment name; overrides the config");

  auto* list = app.add_subcommand("list-experiments", "List experiment names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& [e, name] : experiment_names()) {
        std::cout << name << "  (needs:";
        for (const auto& b : required_blocks(e)) std::cout << " " << b;
        std::cout << ")\n";
      }
      return 0;
    }
    std::optional<std::string> override;
    if (!experiment.empty()) override = experiment;
    auto cfg = validate_config(read_file(configPath), override);
    if (val->parsed()) {
      std::cout << serialize(cfg);
      std::cerr << "valid, config hash " << config_hash(cfg) << "\n";
      return 0;
    }
    if (*seedOpt) cfg.seed = seed;
    if (*outOpt) cfg.outputDir = outDir;
    if (*fmtOpt) cfg.format = format == "json" ? OutputFormat::json : OutputFormat::csv;
    if (*trialsOpt) cfg.trials = trials;
    if (*workersOpt) cfg.workers = workers;
    validate(cfg);

    const auto report = run_experiment(cfg);
    for (const auto& p : write_report(report, cfg.outputDir, cfg.format)) std::cout << "wrote " << p.string() << "\n";
    print_summary(report);
    if (!report.invariantFailures.empty()) {
      for (const auto& f : report.invariantFailures) std::cerr << "invariant failed: " << f << "\n";
      return 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
