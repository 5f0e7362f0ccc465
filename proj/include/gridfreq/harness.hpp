#pragma once

// Experiment harness: run configuration (programmatic and file-based),
// algorithm dispatch, Monte Carlo trial orchestration, steady-state metrics,
// CSV/JSON export, the five canonical case studies, and the SNR sweep.

#include <gridfreq/filters.hpp>
#include <gridfreq/frequency.hpp>
#include <gridfreq/network.hpp>
#include <gridfreq/power_grid.hpp>
#include <gridfreq/rng.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridfreq {

// ---------------------------------------------------------------------------
// Algorithms

enum class Algo {
  kCekf,       ///< single-node strictly linear extended KF
  kAcekf,      ///< single-node widely linear (augmented) extended KF
  kDcekf,      ///< diffusion strictly linear extended KF
  kDacekf,     ///< diffusion widely linear extended KF
  kDckf,       ///< diffusion strictly linear KF (linear models only)
  kDackf,      ///< diffusion widely linear KF (linear models only)
  kDackfInfo,  ///< information-form diffusion widely linear KF
  kHilbert,    ///< single-node Hilbert instantaneous-frequency baseline
  kDhilbert,   ///< Hilbert baseline with diffusion-combined estimates
};

inline const std::array<std::pair<Algo, const char*>, 9>& algo_names() {
  static const std::array<std::pair<Algo, const char*>, 9> names = {{
      {Algo::kCekf, "CEKF"},
      {Algo::kAcekf, "ACEKF"},
      {Algo::kDcekf, "D-CEKF"},
      {Algo::kDacekf, "D-ACEKF"},
      {Algo::kDckf, "D-CKF"},
      {Algo::kDackf, "D-ACKF"},
      {Algo::kDackfInfo, "D-ACKF-INFO"},
      {Algo::kHilbert, "HILBERT"},
      {Algo::kDhilbert, "D-HILBERT"},
  }};
  return names;
}

inline std::string algo_name(Algo a) {
  for (const auto& [algo, name] : algo_names()) {
    if (algo == a) return name;
  }
  throw ConfigError("algo_name: unknown algorithm id");
}

inline Algo parse_algo(std::string_view token) {
  for (const auto& [algo, name] : algo_names()) {
    if (token == name) return algo;
  }
  throw ConfigError("unknown algorithm '" + std::string(token) +
                    "' (expected one of CEKF, ACEKF, D-CEKF, D-ACEKF, D-CKF, "
                    "D-ACKF, D-ACKF-INFO, HILBERT, D-HILBERT)");
}

inline std::vector<Algo> parse_algo_list(std::string_view csv) {
  std::vector<Algo> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string_view::npos) comma = csv.size();
    std::string_view tok = csv.substr(start, comma - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) out.push_back(parse_algo(tok));
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("algorithm list is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration

/// Edges of the default 5-node benchmark network (0-based ids).
inline std::vector<std::pair<int, int>> default_edges() {
  return {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}};
}

struct RunConfig {
  GridScenario scenario;
  /// 0-based undirected edges; empty means fully uncooperative nodes.
  std::vector<std::pair<int, int>> edges = default_edges();
  CombinationRule rule = CombinationRule::kUniform;
  std::vector<Algo> algorithms = {Algo::kDacekf};
  int trials = 1;
  std::uint64_t seed = 1;
  int hilbert_phase = 0;  ///< 0/1/2 = phase a/b/c fed to the Hilbert baseline

  void validate() const {
    scenario.validate();
    if (trials < 1) throw ConfigError("config: trials must be >= 1");
    if (algorithms.empty()) {
      throw ConfigError("config: algorithm set must be nonempty");
    }
    if (hilbert_phase < 0 || hilbert_phase > 2) {
      throw ConfigError("config: hilbert_phase must select phase a, b or c");
    }
    for (const Algo a : algorithms) {
      if (a == Algo::kDckf || a == Algo::kDackf || a == Algo::kDackfInfo) {
        throw ConfigError(
            "config: " + algo_name(a) +
            " requires a linear state space; grid scenarios need the "
            "extended variants (CEKF/ACEKF/D-CEKF/D-ACEKF)");
      }
    }
    make_topology();  // validates edge ids
  }

  NetworkTopology make_topology() const {
    return NetworkTopology(scenario.nodes, edges);
  }
};

namespace detail {

inline void hash_mix(std::uint64_t& h, std::string_view text) {
  // FNV-1a, 64-bit.
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Deterministic hash of every field that affects the run's output; carried
/// in the run metadata so result files can be matched to their config.
inline std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](std::string_view s) {
    detail::hash_mix(h, s);
    detail::hash_mix(h, "|");
  };
  const GridScenario& sc = cfg.scenario;
  for (double v : {sc.nominal_hz, sc.sample_hz, sc.duration_s, sc.phase_rad,
                   sc.init_hz, sc.noise.snr_db, sc.noise.noncircular_ratio,
                   sc.noise.cross_rho, sc.noise.spike_prob, sc.noise.spike_amp}) {
    mix(detail::fmt_double(v));
  }
  mix(std::to_string(sc.nodes));
  mix(std::to_string(sc.noise.spike_node));
  mix(sc.noise.mode == NoiseMode::kCircular ? "circular" : "noncircular");
  for (const SagEvent& s : sc.sags) {
    mix("sag");
    for (double v : {s.t_start, s.va, s.vb, s.vc, s.delta_b, s.delta_c}) {
      mix(detail::fmt_double(v));
    }
  }
  for (const FreqEvent& f : sc.freq_steps) {
    mix("freq");
    mix(detail::fmt_double(f.t_start));
    mix(detail::fmt_double(f.hz));
  }
  for (const auto& [a, b] : cfg.edges) {
    mix(std::to_string(a) + "-" + std::to_string(b));
  }
  mix(to_string(cfg.rule));
  for (const Algo a : cfg.algorithms) mix(algo_name(a));
  mix(std::to_string(cfg.trials));
  mix(std::to_string(cfg.seed));
  mix(std::to_string(cfg.hilbert_phase));
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Steady-state window and metrics

/// Half-open step range [begin, end).
struct StepWindow {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

/// Step ranges on which the signal conditions (active sag, frequency) are
/// constant, in time order covering every sample exactly once.
inline std::vector<StepWindow> condition_segments(const SignalGenerator& gen) {
  std::vector<StepWindow> segs;
  const int n = gen.sample_count();
  int start = 0;
  for (int k = 1; k < n; ++k) {
    if (gen.sag_index(k) != gen.sag_index(k - 1) ||
        gen.true_frequency(k) != gen.true_frequency(k - 1)) {
      segs.push_back({start, k});
      start = k;
    }
  }
  segs.push_back({start, n});
  return segs;
}

/// Default aggregation window: the last 20% of the final constant-condition
/// segment, where every algorithm has had time to settle.
inline StepWindow steady_window(const SignalGenerator& gen) {
  const StepWindow last = condition_segments(gen).back();
  const int len = last.size();
  return {last.begin + (len * 4) / 5, last.end};
}

inline StepWindow steady_window(const GridScenario& scenario) {
  return steady_window(SignalGenerator(scenario, scenario.seed));
}

struct Metrics {
  double bias_hz = 0.0;
  double variance_hz2 = 0.0;
  long long samples = 0;
};

/// Streaming accumulator for bias/variance over (trials x window steps).
/// Bias averages the error f_hat - f_true; variance is the sample variance
/// of f_hat itself, accumulated against a constant reference level so the
/// running sums stay small and well conditioned.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(double reference_hz = 0.0)
      : ref_(reference_hz) {}

  void add(double f_hat, double f_true) {
    const double err = f_hat - f_true;
    const double dev = f_hat - ref_;
    sum_err_ += err;
    sum_dev_ += dev;
    sum_dev2_ += dev * dev;
    ++count_;
  }

  Metrics finish() const {
    if (count_ == 0) throw ConfigError("metrics: empty aggregation window");
    Metrics m;
    m.samples = count_;
    const double n = static_cast<double>(count_);
    m.bias_hz = sum_err_ / n;
    if (count_ > 1) {
      const double ss = sum_dev2_ - sum_dev_ * sum_dev_ / n;
      m.variance_hz2 = std::max(ss, 0.0) / (n - 1.0);
    }
    return m;
  }

 private:
  double ref_ = 0.0;
  double sum_err_ = 0.0, sum_dev_ = 0.0, sum_dev2_ = 0.0;
  long long count_ = 0;
};

/// Batch metrics over per-trial trajectories (outer index trial, inner step).
/// Trials are accumulated in ascending order, steps ascending, so results
/// are bit-stable across runs.
inline Metrics compute_metrics(
    const std::vector<std::vector<double>>& f_hat_per_trial,
    const std::vector<double>& f_true, StepWindow window) {
  if (window.begin < 0 || window.end > static_cast<int>(f_true.size()) ||
      window.size() <= 0) {
    throw ConfigError("metrics: window outside the trajectory");
  }
  MetricsAccumulator acc(f_true[static_cast<std::size_t>(window.begin)]);
  for (const auto& traj : f_hat_per_trial) {
    if (static_cast<int>(traj.size()) < window.end) {
      throw DimensionError("metrics: trajectory shorter than the window");
    }
    for (int n = window.begin; n < window.end; ++n) {
      acc.add(traj[static_cast<std::size_t>(n)],
              f_true[static_cast<std::size_t>(n)]);
    }
  }
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Trial execution

namespace detail {

inline constexpr std::uint64_t kTrialStream = 0x74;
inline constexpr std::uint64_t kSweepStream = 0x73;

inline double phase_component(const ThreePhaseSample& s, int phase) {
  return phase == 0 ? s.va : (phase == 1 ? s.vb : s.vc);
}

/// Kalman-family estimates for one trial: runs the configured filter over
/// the generator's samples and extracts per-step frequencies.
inline std::vector<std::vector<double>> kalman_frequencies(
    Algo algo, const SignalGenerator& gen, const NetworkTopology& topo,
    const CombinationWeights& weights,
    const std::vector<std::vector<CVector>>& observations) {
  const int nodes = topo.node_count();
  const bool augmented = (algo == Algo::kAcekf || algo == Algo::kDacekf);
  const NonlinearModel model =
      augmented ? wl_grid_model(gen) : sl_grid_model(gen);

  std::vector<CVector> x0;
  x0.reserve(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    x0.push_back(augmented ? wl_initial_state(gen, i)
                           : sl_initial_state(gen, i));
  }
  const FilterRun run = run_filter(
      augmented ? NonlinearAlgorithm::kDacekf : NonlinearAlgorithm::kDcekf,
      model, topo, weights, observations, initial_states(x0, 1.0, augmented));

  const double dt = gen.dt();
  std::vector<std::vector<double>> f(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    const auto& est = run.estimates[static_cast<std::size_t>(i)];
    auto& fi = f[static_cast<std::size_t>(i)];
    fi.reserve(est.size());
    for (const CVector& x : est) fi.push_back(extract_frequency(x, dt));
  }
  return f;
}

/// Hilbert-family estimates: per-node instantaneous frequency from one real
/// phase voltage; the diffusion variant combines neighbours' estimates with
/// the same weights as the Kalman filters, once per step.
inline std::vector<std::vector<double>> hilbert_frequencies(
    Algo algo, const SignalGenerator& gen, const NetworkTopology& topo,
    const CombinationWeights& weights, int phase) {
  const int nodes = topo.node_count();
  const int steps = gen.sample_count();
  std::vector<std::vector<double>> raw(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    std::vector<double> v(static_cast<std::size_t>(steps));
    for (int n = 0; n < steps; ++n) {
      v[static_cast<std::size_t>(n)] = phase_component(gen.sample(i, n), phase);
    }
    raw[static_cast<std::size_t>(i)] = hilbert_frequency(v, gen.dt());
  }
  if (algo == Algo::kHilbert) return raw;

  std::vector<std::vector<double>> mixed(
      static_cast<std::size_t>(nodes),
      std::vector<double>(static_cast<std::size_t>(steps), 0.0));
  for (int i = 0; i < nodes; ++i) {
    for (const int k : topo.neighborhood(i)) {
      const double w = weights.weight(k, i);
      for (int n = 0; n < steps; ++n) {
        mixed[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)] +=
            w * raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)];
      }
    }
  }
  return mixed;
}

}  // namespace detail

/// Estimates from one Monte Carlo trial: f_hat[algo][node][step], with the
/// algorithm axis following cfg.algorithms.
struct TrialOutput {
  std::vector<std::vector<std::vector<double>>> f_hat;
};

inline TrialOutput run_trial(const RunConfig& cfg, const NetworkTopology& topo,
                             int trial) {
  const SignalGenerator gen(
      cfg.scenario,
      derive_key(cfg.seed, detail::kTrialStream,
                 static_cast<std::uint64_t>(trial)));
  const int nodes = topo.node_count();
  const int steps = gen.sample_count();
  const CombinationWeights weights(topo, cfg.rule);
  const NetworkTopology solo = NetworkTopology::edgeless(nodes);
  const CombinationWeights solo_weights(solo, cfg.rule);

  // Kalman observations are shared across the algorithms of this trial.
  std::vector<std::vector<CVector>> obs;
  const bool wants_kalman = std::any_of(
      cfg.algorithms.begin(), cfg.algorithms.end(), [](Algo a) {
        return a == Algo::kCekf || a == Algo::kAcekf || a == Algo::kDcekf ||
               a == Algo::kDacekf;
      });
  if (wants_kalman) {
    obs.resize(static_cast<std::size_t>(steps));
    for (int n = 0; n < steps; ++n) {
      auto& row = obs[static_cast<std::size_t>(n)];
      row.resize(static_cast<std::size_t>(nodes));
      for (int i = 0; i < nodes; ++i) {
        CVector y(1);
        y(0) = gen.clarke_sample(i, n);
        row[static_cast<std::size_t>(i)] = std::move(y);
      }
    }
  }

  TrialOutput out;
  out.f_hat.reserve(cfg.algorithms.size());
  for (const Algo algo : cfg.algorithms) {
    switch (algo) {
      case Algo::kCekf:
      case Algo::kAcekf:
        out.f_hat.push_back(detail::kalman_frequencies(
            algo, gen, solo, solo_weights, obs));
        break;
      case Algo::kDcekf:
      case Algo::kDacekf:
        out.f_hat.push_back(
            detail::kalman_frequencies(algo, gen, topo, weights, obs));
        break;
      case Algo::kHilbert:
        out.f_hat.push_back(detail::hilbert_frequencies(
            algo, gen, solo, solo_weights, cfg.hilbert_phase));
        break;
      case Algo::kDhilbert:
        out.f_hat.push_back(detail::hilbert_frequencies(
            algo, gen, topo, weights, cfg.hilbert_phase));
        break;
      default:
        throw ConfigError("run_trial: " + algo_name(algo) +
                          " is not runnable on grid scenarios");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full runs

struct NodeAlgoMetrics {
  Algo algo = Algo::kDacekf;
  int node = 0;  ///< 0-based
  Metrics metrics;
};

struct RunResult {
  std::vector<double> f_true;  ///< per step; identical for every trial
  StepWindow window;           ///< aggregation window of the metrics
  std::string hash;            ///< config hash
  std::vector<NodeAlgoMetrics> aggregates;  ///< (algo, node) in config order
  std::vector<TrialOutput> trials;  ///< kept only when requested
};

/// Runs all trials sequentially (ascending trial id). `keep_trajectories`
/// retains per-step estimates; metrics over the steady window are always
/// aggregated. `per_trial` (optional) observes each trial as it completes,
/// e.g. for streaming CSV export.
template <typename PerTrial>
RunResult run_scenario(const RunConfig& cfg, bool keep_trajectories,
                       PerTrial&& per_trial) {
  cfg.validate();
  const NetworkTopology topo = cfg.make_topology();
  const SignalGenerator probe(cfg.scenario, cfg.seed);
  const int steps = probe.sample_count();

  RunResult result;
  result.hash = config_hash(cfg);
  result.window = steady_window(probe);
  result.f_true.resize(static_cast<std::size_t>(steps));
  for (int n = 0; n < steps; ++n) {
    result.f_true[static_cast<std::size_t>(n)] = probe.true_frequency(n);
  }

  const double ref =
      result.f_true[static_cast<std::size_t>(result.window.begin)];
  std::vector<MetricsAccumulator> acc(
      cfg.algorithms.size() * static_cast<std::size_t>(cfg.scenario.nodes),
      MetricsAccumulator(ref));

  for (int t = 0; t < cfg.trials; ++t) {
    TrialOutput trial = run_trial(cfg, topo, t);
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
      for (int i = 0; i < cfg.scenario.nodes; ++i) {
        auto& acc_ai = acc[a * static_cast<std::size_t>(cfg.scenario.nodes) +
                           static_cast<std::size_t>(i)];
        const auto& traj = trial.f_hat[a][static_cast<std::size_t>(i)];
        for (int n = result.window.begin; n < result.window.end; ++n) {
          acc_ai.add(traj[static_cast<std::size_t>(n)],
                     result.f_true[static_cast<std::size_t>(n)]);
        }
      }
    }
    per_trial(t, trial);
    if (keep_trajectories) result.trials.push_back(std::move(trial));
  }

  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    for (int i = 0; i < cfg.scenario.nodes; ++i) {
      NodeAlgoMetrics row;
      row.algo = cfg.algorithms[a];
      row.node = i;
      row.metrics = acc[a * static_cast<std::size_t>(cfg.scenario.nodes) +
                        static_cast<std::size_t>(i)]
                        .finish();
      result.aggregates.push_back(row);
    }
  }
  return result;
}

inline RunResult run_scenario(const RunConfig& cfg,
                              bool keep_trajectories = true) {
  return run_scenario(cfg, keep_trajectories, [](int, const TrialOutput&) {});
}

// ---------------------------------------------------------------------------
// CSV / metadata export

namespace detail {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kTrajectoryHeader =
    "time_s,trial,node,algorithm,f_hat_hz,f_true_hz";
inline constexpr const char* kSweepHeader =
    "snr_db,node,algorithm,bias_hz,variance_hz2,trials";

/// Rows for one trial in the canonical order (trial, node, algorithm, step).
/// Node ids are 1-based in files.
inline void append_trajectory_rows(std::ostream& os, const RunConfig& cfg,
                                   const std::vector<double>& f_true,
                                   int trial, const TrialOutput& out) {
  const double dt = cfg.scenario.dt();
  for (int i = 0; i < cfg.scenario.nodes; ++i) {
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
      const std::string name = algo_name(cfg.algorithms[a]);
      const auto& traj = out.f_hat[a][static_cast<std::size_t>(i)];
      for (std::size_t n = 0; n < traj.size(); ++n) {
        os << detail::csv_num(static_cast<double>(n) * dt) << ',' << trial
           << ',' << (i + 1) << ',' << name << ','
           << detail::csv_num(traj[n]) << ',' << detail::csv_num(f_true[n])
           << '\n';
      }
    }
  }
}

struct SweepRow {
  double snr_db = 0.0;
  int node = 0;  ///< 0-based in memory, 1-based in files
  Algo algo = Algo::kDacekf;
  Metrics metrics;
  long long trials = 0;
};

inline void write_sweep_csv(std::ostream& os,
                            const std::vector<SweepRow>& rows) {
  os << kSweepHeader << '\n';
  for (const SweepRow& r : rows) {
    os << detail::csv_num(r.snr_db) << ',' << (r.node + 1) << ','
       << algo_name(r.algo) << ',' << detail::csv_num(r.metrics.bias_hz)
       << ',' << detail::csv_num(r.metrics.variance_hz2) << ',' << r.trials
       << '\n';
  }
}

/// Metadata sidecar: config hash, full parameter dump (angles also in
/// degrees for readability), window definition, and output schema names.
inline nlohmann::json run_metadata(const RunConfig& cfg,
                                   const RunResult& result) {
  const double rad2deg = 180.0 / std::numbers::pi;
  nlohmann::json sags = nlohmann::json::array();
  for (const SagEvent& s : cfg.scenario.sags) {
    sags.push_back({{"t_start_s", s.t_start},
                    {"va", s.va},
                    {"vb", s.vb},
                    {"vc", s.vc},
                    {"delta_b_deg", s.delta_b * rad2deg},
                    {"delta_c_deg", s.delta_c * rad2deg}});
  }
  nlohmann::json freqs = nlohmann::json::array();
  for (const FreqEvent& f : cfg.scenario.freq_steps) {
    freqs.push_back({{"t_start_s", f.t_start}, {"hz", f.hz}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : cfg.edges) {
    edges.push_back({a + 1, b + 1});  // 1-based in files
  }
  std::vector<std::string> algos;
  for (const Algo a : cfg.algorithms) algos.push_back(algo_name(a));

  const NoiseSpec& nz = cfg.scenario.noise;
  return nlohmann::json{
      {"config_hash", result.hash},
      {"scenario",
       {{"nominal_hz", cfg.scenario.nominal_hz},
        {"sample_hz", cfg.scenario.sample_hz},
        {"duration_s", cfg.scenario.duration_s},
        {"phase_rad", cfg.scenario.phase_rad},
        {"init_hz", cfg.scenario.init_hz},
        {"nodes", cfg.scenario.nodes},
        {"snr_db", nz.additive_noise() ? nlohmann::json(nz.snr_db)
                                       : nlohmann::json("inf")},
        {"noise_mode",
         nz.mode == NoiseMode::kCircular ? "circular" : "noncircular"},
        {"noncircular_ratio", nz.noncircular_ratio},
        {"cross_rho", nz.cross_rho},
        {"spike_prob", nz.spike_prob},
        {"spike_amp", nz.spike_amp},
        {"spike_node", nz.spike_node + 1},  // 0 = all nodes
        {"sag_events", sags},
        {"freq_events", freqs}}},
      {"topology", {{"edges", edges}, {"combination", to_string(cfg.rule)}}},
      {"algorithms", algos},
      {"trials", cfg.trials},
      {"seed", cfg.seed},
      {"hilbert_phase", std::string(1, static_cast<char>('a' + cfg.hilbert_phase))},
      {"steady_window",
       {{"begin_step", result.window.begin},
        {"end_step", result.window.end},
        {"definition",
         "last 20% of the final constant-condition segment"}}},
      {"csv",
       {{"trajectories", kTrajectoryHeader}, {"sweeps", kSweepHeader}}}};
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);  // '\n' endings on any platform
  if (!os) {
    throw ConfigError("cannot open output file: " + path.string());
  }
  return os;
}

}  // namespace detail

/// Runs the configured scenario and writes trajectories.csv, metrics.csv and
/// run_meta.json into `out_dir`. Trajectories are streamed trial by trial,
/// so memory stays flat in the trial count.
inline RunResult run_and_export(const RunConfig& cfg,
                                const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory: " + out_dir.string() +
                      " (" + ec.message() + ")");
  }

  std::ofstream traj = detail::open_output(out_dir / "trajectories.csv");
  traj << kTrajectoryHeader << '\n';

  // f_true is needed inside the per-trial callback before run_scenario
  // returns; compute it once from the same generator construction.
  const SignalGenerator probe(cfg.scenario, cfg.seed);
  std::vector<double> f_true(static_cast<std::size_t>(probe.sample_count()));
  for (int n = 0; n < probe.sample_count(); ++n) {
    f_true[static_cast<std::size_t>(n)] = probe.true_frequency(n);
  }

  RunResult result = run_scenario(
      cfg, /*keep_trajectories=*/false,
      [&](int trial, const TrialOutput& out) {
        append_trajectory_rows(traj, cfg, f_true, trial, out);
      });
  traj.close();
  if (!traj) throw ConfigError("failed writing trajectories.csv");

  std::ofstream metrics = detail::open_output(out_dir / "metrics.csv");
  std::vector<SweepRow> rows;
  for (const NodeAlgoMetrics& m : result.aggregates) {
    rows.push_back({cfg.scenario.noise.snr_db, m.node, m.algo, m.metrics,
                    cfg.trials});
  }
  write_sweep_csv(metrics, rows);
  metrics.close();
  if (!metrics) throw ConfigError("failed writing metrics.csv");

  std::ofstream meta = detail::open_output(out_dir / "run_meta.json");
  meta << run_metadata(cfg, result).dump(2) << '\n';
  meta.close();
  if (!meta) throw ConfigError("failed writing run_meta.json");
  return result;
}

// ---------------------------------------------------------------------------
// Case studies
//
// Shared setup: 50 Hz nominal, 5 kHz sampling, 0.5 s, 5-node default
// network, filters initialized at 50.5 Hz.
//
//   1  voltage sags: noiseless; 20% drop with +/-10 deg offsets on phases
//      b/c from 0.1 s, then a 20%/10% drop with +/-5 deg offsets from 0.3 s
//   2  noise: balanced at 30 dB SNR plus rare 20%-of-peak spikes on node 1
//   3  frequency step to 51 Hz at 0.25 s, 40 dB SNR
//   4  Hilbert comparison: 30 dB SNR with the study-1 second sag at 0.25 s
//   5  bias/variance: the second sag from 0.1 s, 40 dB SNR, 500 trials,
//      aggregated over the steady window (sweep-style output)

inline SagEvent sag_type_c(double t_start) {
  const double deg = std::numbers::pi / 180.0;
  return SagEvent{t_start, 1.0, 0.8, 0.8, 10.0 * deg, -10.0 * deg};
}

inline SagEvent sag_type_d(double t_start) {
  const double deg = std::numbers::pi / 180.0;
  return SagEvent{t_start, 0.8, 0.9, 0.9, 5.0 * deg, -5.0 * deg};
}

inline RunConfig case_study_config(int study) {
  RunConfig cfg;
  cfg.scenario.nominal_hz = 50.0;
  cfg.scenario.sample_hz = 5000.0;
  cfg.scenario.duration_s = 0.5;
  cfg.scenario.init_hz = 50.5;
  cfg.scenario.nodes = 5;
  cfg.edges = default_edges();
  cfg.rule = CombinationRule::kUniform;
  cfg.algorithms = {Algo::kCekf, Algo::kAcekf, Algo::kDcekf, Algo::kDacekf};
  cfg.trials = 1;
  cfg.seed = 1;

  switch (study) {
    case 1:
      cfg.scenario.sags = {sag_type_c(0.1), sag_type_d(0.3)};
      break;
    case 2:
      cfg.scenario.noise.snr_db = 30.0;
      cfg.scenario.noise.spike_prob = 0.005;
      cfg.scenario.noise.spike_amp = 0.2;
      cfg.scenario.noise.spike_node = 0;
      break;
    case 3:
      cfg.scenario.noise.snr_db = 40.0;
      cfg.scenario.freq_steps = {FreqEvent{0.25, 51.0}};
      break;
    case 4:
      cfg.scenario.noise.snr_db = 30.0;
      cfg.scenario.sags = {sag_type_d(0.25)};
      cfg.algorithms = {Algo::kHilbert, Algo::kDhilbert, Algo::kAcekf,
                        Algo::kDacekf};
      break;
    case 5:
      cfg.scenario.noise.snr_db = 40.0;
      cfg.scenario.sags = {sag_type_d(0.1)};
      cfg.trials = 500;
      break;
    default:
      throw ConfigError("case study index must be 1..5");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// SNR sweep

/// Runs `base` once per SNR level with an independent seed per level
/// (derived from the level value, so a single-level sweep reproduces the
/// same rows regardless of what other levels are requested).
inline std::vector<SweepRow> sweep_snr(const RunConfig& base,
                                       const std::vector<double>& levels_db);

/// Runs one canonical case study with `cfg` (usually case_study_config(n),
/// possibly with overrides applied) and writes its outputs. Studies 1-4
/// export trajectories; study 5 is the bias/variance study, exported in the
/// sweep schema at the configured SNR.
inline void case_study_export(int study, const RunConfig& cfg,
                              const std::filesystem::path& out_dir);

inline std::vector<SweepRow> sweep_snr(const RunConfig& base,
                                       const std::vector<double>& levels_db) {
  if (levels_db.empty()) {
    throw ConfigError("sweep: need at least one SNR level");
  }
  std::vector<SweepRow> rows;
  for (const double snr : levels_db) {
    RunConfig cfg = base;
    cfg.scenario.noise.snr_db = snr;
    cfg.seed = derive_key(base.seed, detail::kSweepStream,
                          std::bit_cast<std::uint64_t>(snr));
    const RunResult res = run_scenario(cfg, /*keep_trajectories=*/false);
    for (const NodeAlgoMetrics& m : res.aggregates) {
      rows.push_back({snr, m.node, m.algo, m.metrics, cfg.trials});
    }
  }
  return rows;
}

/// Sweep entry point with file output (sweep.csv + run_meta.json).
inline std::vector<SweepRow> sweep_and_export(
    const RunConfig& base, const std::vector<double>& levels_db,
    const std::filesystem::path& out_dir) {
  base.validate();
  const std::vector<SweepRow> rows = sweep_snr(base, levels_db);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory: " + out_dir.string() +
                      " (" + ec.message() + ")");
  }
  std::ofstream os = detail::open_output(out_dir / "sweep.csv");
  write_sweep_csv(os, rows);
  os.close();
  if (!os) throw ConfigError("failed writing sweep.csv");

  RunResult skeleton;
  skeleton.hash = config_hash(base);
  skeleton.window = steady_window(base.scenario);
  nlohmann::json meta = run_metadata(base, skeleton);
  meta["sweep_levels_db"] = levels_db;
  std::ofstream meta_os = detail::open_output(out_dir / "run_meta.json");
  meta_os << meta.dump(2) << '\n';
  meta_os.close();
  if (!meta_os) throw ConfigError("failed writing run_meta.json");
  return rows;
}

inline void case_study_export(int study, const RunConfig& cfg,
                              const std::filesystem::path& out_dir) {
  if (study < 1 || study > 5) {
    throw ConfigError("case study index must be 1..5");
  }
  if (study == 5) {
    sweep_and_export(cfg, {cfg.scenario.noise.snr_db}, out_dir);
  } else {
    run_and_export(cfg, out_dir);
  }
}

// ---------------------------------------------------------------------------
// Scenario files
//
// Flat `key = value` lines plus repeatable, ordered `event = ...` lines.
// '#' starts a comment. Angles in files are degrees; node ids are 1-based;
// `spike_node = 0` means "every node". Example:
//
//   nominal_hz = 50
//   sample_hz  = 5000
//   duration_s = 0.5
//   nodes      = 5
//   snr_db     = 40            # omit or 'inf' for noiseless
//   algorithms = D-CEKF,D-ACEKF
//   event = sag 0.1 1.0 0.8 0.8 10 -10   # t va vb vc delta_b delta_c
//   event = freq 0.25 51

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline double parse_num(const std::string& value, const std::string& key) {
  if (value == "inf" || value == "INF" || value == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" +
                      value + "'");
  }
  if (pos != value.size()) {
    throw ConfigError("config key '" + key + "': trailing junk in '" + value +
                      "'");
  }
  return v;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Parses a scenario/run config file. Unknown keys are errors, so typos
/// cannot silently fall back to defaults.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());

  RunConfig cfg;
  cfg.scenario.duration_s = 0.5;
  const double deg = std::numbers::pi / 180.0;
  std::optional<std::filesystem::path> topology_file;

  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": empty key or value");
    }

    if (key == "nominal_hz") {
      cfg.scenario.nominal_hz = detail::parse_num(value, key);
    } else if (key == "sample_hz") {
      cfg.scenario.sample_hz = detail::parse_num(value, key);
    } else if (key == "duration_s") {
      cfg.scenario.duration_s = detail::parse_num(value, key);
    } else if (key == "phase_deg") {
      cfg.scenario.phase_rad = detail::parse_num(value, key) * deg;
    } else if (key == "init_hz") {
      cfg.scenario.init_hz = detail::parse_num(value, key);
    } else if (key == "nodes") {
      cfg.scenario.nodes = static_cast<int>(detail::parse_num(value, key));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(detail::parse_num(value, key));
    } else if (key == "trials") {
      cfg.trials = static_cast<int>(detail::parse_num(value, key));
    } else if (key == "snr_db") {
      cfg.scenario.noise.snr_db = detail::parse_num(value, key);
    } else if (key == "noise_mode") {
      if (value == "circular") {
        cfg.scenario.noise.mode = NoiseMode::kCircular;
      } else if (value == "noncircular") {
        cfg.scenario.noise.mode = NoiseMode::kNoncircular;
      } else {
        throw ConfigError("noise_mode must be circular or noncircular");
      }
    } else if (key == "noncircular_ratio") {
      cfg.scenario.noise.noncircular_ratio = detail::parse_num(value, key);
    } else if (key == "cross_rho") {
      cfg.scenario.noise.cross_rho = detail::parse_num(value, key);
    } else if (key == "spike_prob") {
      cfg.scenario.noise.spike_prob = detail::parse_num(value, key);
    } else if (key == "spike_amp") {
      cfg.scenario.noise.spike_amp = detail::parse_num(value, key);
    } else if (key == "spike_node") {
      cfg.scenario.noise.spike_node =
          static_cast<int>(detail::parse_num(value, key)) - 1;
    } else if (key == "algorithms") {
      cfg.algorithms = parse_algo_list(value);
    } else if (key == "combination") {
      if (value == "uniform") {
        cfg.rule = CombinationRule::kUniform;
      } else if (value == "metropolis") {
        cfg.rule = CombinationRule::kMetropolis;
      } else {
        throw ConfigError("combination must be uniform or metropolis");
      }
    } else if (key == "topology") {
      topology_file = path.parent_path() / value;
    } else if (key == "hilbert_phase") {
      if (value.size() != 1 || value[0] < 'a' || value[0] > 'c') {
        throw ConfigError("hilbert_phase must be a, b or c");
      }
      cfg.hilbert_phase = value[0] - 'a';
    } else if (key == "event") {
      const std::vector<std::string> f = detail::split_ws(value);
      if (f.size() == 7 && f[0] == "sag") {
        cfg.scenario.sags.push_back(
            SagEvent{detail::parse_num(f[1], key), detail::parse_num(f[2], key),
                     detail::parse_num(f[3], key), detail::parse_num(f[4], key),
                     detail::parse_num(f[5], key) * deg,
                     detail::parse_num(f[6], key) * deg});
      } else if (f.size() == 3 && f[0] == "freq") {
        cfg.scenario.freq_steps.push_back(
            FreqEvent{detail::parse_num(f[1], key),
                      detail::parse_num(f[2], key)});
      } else {
        throw ConfigError(
            path.string() + ":" + std::to_string(line_no) +
            ": event must be 'sag t va vb vc delta_b delta_c' or 'freq t hz'");
      }
    } else {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }

  if (topology_file) {
    const NetworkTopology topo =
        NetworkTopology::from_file(topology_file->string(), cfg.scenario.nodes);
    cfg.edges.clear();
    for (int a = 0; a < topo.node_count(); ++a) {
      for (const int b : topo.neighborhood(a)) {
        if (b > a) cfg.edges.emplace_back(a, b);
      }
    }
  } else if (cfg.scenario.nodes != 5) {
    // The built-in default graph only fits five nodes.
    throw ConfigError(
        "a topology file is required when nodes != 5 (the built-in default "
        "graph has 5 nodes)");
  }
  cfg.validate();
  return cfg;
}

}  // namespace gridfreq
