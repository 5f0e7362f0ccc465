// Command-line front end for the frequency-estimation harness.
//
//   gridfreq simulate  --config <file> --out <dir> [--seed S] [--trials N]
//                      [--algos list]
//   gridfreq case-study <1..5> [--out <dir>] [--seed S] [--trials N]
//                      [--algos list] [--snr dB] [--duration s]
//   gridfreq sweep-snr --levels 20,30,40,50 [--config <file>] [--out <dir>]
//                      [--seed S] [--trials N] [--algos list]
//
// Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.

#include <gridfreq/harness.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace gridfreq;

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::string> algos;

  void attach(CLI::App& app) {
    app.add_option("--seed", seed, "Master seed (trial seeds derive from it)");
    app.add_option("--trials", trials, "Monte Carlo trial count");
    app.add_option("--algos", algos,
                   "Comma-separated algorithm list (e.g. D-CEKF,D-ACEKF)");
  }

  void apply(RunConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (trials) cfg.trials = *trials;
    if (algos) cfg.algorithms = parse_algo_list(*algos);
  }
};

std::vector<double> parse_levels(const std::string& csv) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string::npos) comma = csv.size();
    const std::string tok = csv.substr(start, comma - start);
    if (!tok.empty()) out.push_back(detail::parse_num(tok, "--levels"));
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("--levels: no SNR values given");
  return out;
}

void print_summary(const RunConfig& cfg, const std::string& out_dir) {
  std::printf("wrote %s (%d trial%s, %zu algorithm%s, %d nodes, hash %s)\n",
              out_dir.c_str(), cfg.trials, cfg.trials == 1 ? "" : "s",
              cfg.algorithms.size(), cfg.algorithms.size() == 1 ? "" : "s",
              cfg.scenario.nodes, config_hash(cfg).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed frequency estimation over three-phase grids"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "Run a scenario described by a config file");
  std::string sim_config;
  std::string sim_out = "out";
  simulate->add_option("--config", sim_config, "Scenario config file")
      ->required();
  simulate->add_option("--out", sim_out, "Output directory");
  CommonOverrides sim_over;
  sim_over.attach(*simulate);

  // case-study
  auto* study = app.add_subcommand(
      "case-study", "Run one of the five canonical studies");
  int study_index = 0;
  std::string study_out;
  std::optional<double> study_snr;
  std::optional<double> study_duration;
  study->add_option("index", study_index, "Study index (1..5)")->required();
  study->add_option("--out", study_out, "Output directory");
  study->add_option("--snr", study_snr, "Override SNR in dB");
  study->add_option("--duration", study_duration,
                    "Override duration in seconds");
  CommonOverrides study_over;
  study_over.attach(*study);

  // sweep-snr
  auto* sweep = app.add_subcommand(
      "sweep-snr", "Repeat the bias/variance scenario across SNR levels");
  std::string sweep_levels;
  std::string sweep_config;
  std::string sweep_out = "out";
  sweep->add_option("--levels", sweep_levels, "Comma-separated SNR levels, dB")
      ->required();
  sweep->add_option("--config", sweep_config,
                    "Base scenario config file (default: bias/variance study)");
  sweep->add_option("--out", sweep_out, "Output directory");
  CommonOverrides sweep_over;
  sweep_over.attach(*sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (simulate->parsed()) {
      RunConfig cfg = load_run_config(sim_config);
      sim_over.apply(cfg);
      cfg.validate();
      run_and_export(cfg, sim_out);
      print_summary(cfg, sim_out);
    } else if (study->parsed()) {
      RunConfig cfg = case_study_config(study_index);
      study_over.apply(cfg);
      if (study_snr) cfg.scenario.noise.snr_db = *study_snr;
      if (study_duration) cfg.scenario.duration_s = *study_duration;
      cfg.validate();
      const std::string out_dir =
          study_out.empty() ? "out/case_study_" + std::to_string(study_index)
                            : study_out;
      case_study_export(study_index, cfg, out_dir);
      print_summary(cfg, out_dir);
    } else if (sweep->parsed()) {
      RunConfig cfg = sweep_config.empty() ? case_study_config(5)
                                           : load_run_config(sweep_config);
      sweep_over.apply(cfg);
      cfg.validate();
      const std::vector<double> levels = parse_levels(sweep_levels);
      sweep_and_export(cfg, levels, sweep_out);
      print_summary(cfg, sweep_out);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
