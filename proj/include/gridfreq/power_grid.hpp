#pragma once

// Synthetic three-phase power-system signals: scenario description (voltage
// sags, frequency steps, noise/spike models), per-node sample synthesis with
// deterministic keyed noise streams, the Clarke domain transform, and the
// noncircularity diagnostic.
//
// Conventions: phase voltages at accumulated phase theta_n are
//   v_a = V_a cos(theta),
//   v_b = V_b cos(theta - 2pi/3 + delta_b),
//   v_c = V_c cos(theta + 2pi/3 + delta_c),
// so that the Clarke voltage is v = A e^{j theta} + B e^{-j theta} with
//   A = sqrt(6)/6 (V_a + V_b e^{j delta_b} + V_c e^{j delta_c})
//   B = sqrt(6)/6 (V_a + V_b e^{-j(delta_b + 2pi/3)} + V_c e^{-j(delta_c - 2pi/3)}).
// Amplitudes are per-unit; the nominal balanced system has V = 1 and Clarke
// signal power |A|^2 = 3/2, which is the SNR reference.

#include <gridfreq/linalg.hpp>
#include <gridfreq/rng.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace gridfreq {

// ---------------------------------------------------------------------------
// Scenario description

/// Amplitude/phase-offset change taking effect at t_start (seconds) and
/// holding until the next event. Angles are radians.
struct SagEvent {
  double t_start = 0.0;
  double va = 1.0, vb = 1.0, vc = 1.0;
  double delta_b = 0.0, delta_c = 0.0;
};

/// System frequency change taking effect at t_start.
struct FreqEvent {
  double t_start = 0.0;
  double hz = 50.0;
};

enum class NoiseMode { kCircular, kNoncircular };

struct NoiseSpec {
  /// Signal-to-noise ratio against the nominal Clarke signal power (3/2);
  /// +infinity disables additive noise.
  double snr_db = std::numeric_limits<double>::infinity();
  NoiseMode mode = NoiseMode::kCircular;
  /// var(beta)/var(alpha) of the Clarke-domain noise in noncircular mode.
  double noncircular_ratio = 0.2;
  /// Correlation of noise between different nodes (shared-source fraction).
  double cross_rho = 0.0;
  /// Spike contamination: per-sample probability, per-unit amplitude, and
  /// the 0-based node hit by spikes (-1 = every node).
  double spike_prob = 0.0;
  double spike_amp = 0.0;
  int spike_node = -1;

  bool additive_noise() const { return std::isfinite(snr_db); }
};

struct GridScenario {
  double nominal_hz = 50.0;
  double sample_hz = 5000.0;
  double duration_s = 0.5;
  double phase_rad = 0.0;  ///< theta at sample 0
  double init_hz = 50.5;   ///< filter initialization frequency
  int nodes = 5;
  std::uint64_t seed = 1;
  NoiseSpec noise;
  std::vector<SagEvent> sags;        ///< balanced before the first event
  std::vector<FreqEvent> freq_steps; ///< nominal_hz before the first event

  double dt() const { return 1.0 / sample_hz; }
  int sample_count() const {
    return static_cast<int>(std::llround(duration_s * sample_hz));
  }

  void validate() const {
    if (!(sample_hz > 0.0) || !(nominal_hz > 0.0) || !(duration_s > 0.0)) {
      throw ConfigError("scenario: rates and duration must be positive");
    }
    if (nodes < 1) throw ConfigError("scenario: need at least one node");
    if (std::isnan(noise.snr_db)) throw ConfigError("scenario: snr_db is NaN");
    if (!(noise.noncircular_ratio > 0.0)) {
      throw ConfigError("scenario: noncircular_ratio must be positive");
    }
    if (noise.cross_rho < 0.0 || noise.cross_rho >= 1.0) {
      throw ConfigError("scenario: cross_rho must be in [0, 1)");
    }
    if (noise.spike_prob < 0.0 || noise.spike_prob > 1.0 ||
        noise.spike_amp < 0.0) {
      throw ConfigError("scenario: invalid spike parameters");
    }
    if (noise.spike_node < -1 || noise.spike_node >= nodes) {
      throw ConfigError("scenario: spike_node out of range");
    }
    for (const auto& s : sags) {
      if (s.t_start < 0.0 || s.t_start >= duration_s) {
        throw ConfigError("scenario: sag event outside [0, duration)");
      }
      if (s.va < 0.0 || s.vb < 0.0 || s.vc < 0.0) {
        throw ConfigError("scenario: sag amplitudes must be non-negative");
      }
    }
    for (const auto& f : freq_steps) {
      if (f.t_start < 0.0 || f.t_start >= duration_s) {
        throw ConfigError("scenario: frequency event outside [0, duration)");
      }
      if (!(f.hz > 0.0) || f.hz >= sample_hz / 2.0) {
        throw ConfigError("scenario: frequency event outside (0, Nyquist)");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Clarke transform and phasor coefficients

struct ThreePhaseSample {
  double va = 0.0, vb = 0.0, vc = 0.0;
};

/// Clarke alpha-beta transform, v = v_alpha + j v_beta. The transform rows
/// are orthonormal, so iid per-phase noise maps to iid alpha/beta noise.
inline Complex clarke(const ThreePhaseSample& s) {
  constexpr double k = 0.816496580927726;  // sqrt(2/3)
  const double v_alpha = k * (s.va - 0.5 * s.vb - 0.5 * s.vc);
  const double v_beta =
      k * (std::numbers::sqrt3 / 2.0) * (s.vb - s.vc);
  return Complex(v_alpha, v_beta);
}

/// Inverse mapping used to synthesize phase-domain noise with prescribed
/// Clarke-domain statistics: the transpose of the Clarke matrix (a right
/// inverse, since the rows are orthonormal).
inline ThreePhaseSample clarke_transpose(Complex z) {
  constexpr double k = 0.816496580927726;  // sqrt(2/3)
  constexpr double s3h = 0.8660254037844386;  // sqrt(3)/2
  ThreePhaseSample out;
  out.va = k * z.real();
  out.vb = k * (-0.5 * z.real() + s3h * z.imag());
  out.vc = k * (-0.5 * z.real() - s3h * z.imag());
  return out;
}

/// Positive/negative-sequence phasor coefficients of the Clarke voltage for
/// given amplitudes and phase offsets: v_n = A e^{j theta_n} + B e^{-j theta_n}.
inline std::pair<Complex, Complex> phasor_coefficients(double va, double vb,
                                                       double vc,
                                                       double delta_b,
                                                       double delta_c) {
  constexpr double k6 = 0.4082482904638630;  // sqrt(6)/6
  constexpr double two_thirds_pi = 2.0 * std::numbers::pi / 3.0;
  const Complex j(0.0, 1.0);
  const Complex a =
      k6 * (va + vb * std::exp(j * delta_b) + vc * std::exp(j * delta_c));
  const Complex b = k6 * (va + vb * std::exp(-j * (delta_b + two_thirds_pi)) +
                          vc * std::exp(-j * (delta_c - two_thirds_pi)));
  return {a, b};
}

/// Sample circularity quotient |sum v^2| / sum |v|^2: 0 for a balanced tone
/// (over whole cycles), 2|A||B|/(|A|^2+|B|^2) for a sag, approaching 1 only
/// for purely rectilinear signals.
inline double noncircularity(std::span<const Complex> v) {
  Complex num(0.0, 0.0);
  double den = 0.0;
  for (const Complex& x : v) {
    num += x * x;
    den += std::norm(x);
  }
  return den > 0.0 ? std::abs(num) / den : 0.0;
}

// ---------------------------------------------------------------------------
// Noise synthesis

namespace detail {

// Stream ids keep the independent random purposes from colliding.
inline constexpr std::uint64_t kStreamPrivate = 0x11;
inline constexpr std::uint64_t kStreamShared = 0x22;
inline constexpr std::uint64_t kStreamSpike = 0x33;

/// One node's additive phase-domain noise at sample n. Circular mode draws
/// three iid per-phase Gaussians; noncircular mode draws the Clarke pair with
/// the prescribed alpha/beta power split and maps it to correlated per-phase
/// noises through the Clarke transpose. The private and shared parts come
/// from separate keyed streams, so any (node, n) pair can be generated in
/// isolation and nodes share exactly the sqrt(rho)-weighted part.
inline ThreePhaseSample phase_noise(const NoiseSpec& spec, double sigma_alpha,
                                    double sigma_beta, std::uint64_t seed,
                                    int node, int n) {
  Rng priv(derive_key(seed, kStreamPrivate,
                      static_cast<std::uint64_t>(node) + 1,
                      static_cast<std::uint64_t>(n)));
  const double w_priv = std::sqrt(1.0 - spec.cross_rho);
  const double w_shared = std::sqrt(spec.cross_rho);
  if (spec.mode == NoiseMode::kCircular) {
    double ga = priv.gaussian(), gb = priv.gaussian(), gc = priv.gaussian();
    if (spec.cross_rho > 0.0) {
      Rng shared(
          derive_key(seed, kStreamShared, 0, static_cast<std::uint64_t>(n)));
      ga = w_priv * ga + w_shared * shared.gaussian();
      gb = w_priv * gb + w_shared * shared.gaussian();
      gc = w_priv * gc + w_shared * shared.gaussian();
    }
    // sigma_alpha == sigma_beta here; per-phase sd equals that value, giving
    // Clarke-domain power sigma^2 per component.
    return {sigma_alpha * ga, sigma_alpha * gb, sigma_alpha * gc};
  }
  auto [ga, gb] = priv.gaussian_pair();
  if (spec.cross_rho > 0.0) {
    Rng shared(
        derive_key(seed, kStreamShared, 0, static_cast<std::uint64_t>(n)));
    const auto [sa, sb] = shared.gaussian_pair();
    ga = w_priv * ga + w_shared * sa;
    gb = w_priv * gb + w_shared * sb;
  }
  return clarke_transpose(Complex(sigma_alpha * ga, sigma_beta * gb));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Signal generator

/// Deterministic per-node three-phase signal source for one trial. Sampling
/// is pure: sample(node, n) depends only on (scenario, stream seed, node, n),
/// with the accumulated phase and active frequency precomputed per sample.
class SignalGenerator {
 public:
  /// `stream_seed` identifies the trial (callers mix the trial index into
  /// the scenario seed; see the harness).
  SignalGenerator(GridScenario scenario, std::uint64_t stream_seed)
      : sc_(std::move(scenario)), seed_(stream_seed) {
    sc_.validate();
    std::stable_sort(
        sc_.sags.begin(), sc_.sags.end(),
        [](const SagEvent& a, const SagEvent& b) { return a.t_start < b.t_start; });
    std::stable_sort(sc_.freq_steps.begin(), sc_.freq_steps.end(),
                     [](const FreqEvent& a, const FreqEvent& b) {
                       return a.t_start < b.t_start;
                     });

    const int n = sc_.sample_count();
    const double dt = sc_.dt();
    freq_.resize(static_cast<std::size_t>(n));
    theta_.resize(static_cast<std::size_t>(n));
    sag_at_.resize(static_cast<std::size_t>(n));

    std::size_t fi = 0, si = 0;
    double f_now = sc_.nominal_hz;
    double theta = sc_.phase_rad;
    for (int k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * dt;
      while (fi < sc_.freq_steps.size() && sc_.freq_steps[fi].t_start <= t) {
        f_now = sc_.freq_steps[fi].hz;
        ++fi;
      }
      while (si < sc_.sags.size() && sc_.sags[si].t_start <= t) {
        ++si;
      }
      freq_[static_cast<std::size_t>(k)] = f_now;
      sag_at_[static_cast<std::size_t>(k)] = static_cast<int>(si) - 1;
      if (k > 0) {
        theta += 2.0 * std::numbers::pi * f_now * dt;
        theta = std::fmod(theta, 2.0 * std::numbers::pi);
      }
      theta_[static_cast<std::size_t>(k)] = theta;
    }

    // Clarke-domain noise split sigma_alpha^2 + sigma_beta^2 = P_noise.
    if (sc_.noise.additive_noise()) {
      const double p_noise = 1.5 * std::pow(10.0, -sc_.noise.snr_db / 10.0);
      if (sc_.noise.mode == NoiseMode::kCircular) {
        sigma_alpha_ = std::sqrt(p_noise / 2.0);
        sigma_beta_ = sigma_alpha_;
      } else {
        const double r = sc_.noise.noncircular_ratio;
        sigma_alpha_ = std::sqrt(p_noise / (1.0 + r));
        sigma_beta_ = std::sqrt(p_noise * r / (1.0 + r));
      }
    }
  }

  const GridScenario& scenario() const { return sc_; }
  int sample_count() const { return static_cast<int>(theta_.size()); }
  double dt() const { return sc_.dt(); }

  /// Frequency driving the phase step into sample n.
  double true_frequency(int n) const { return freq_[checked(n)]; }
  double theta(int n) const { return theta_[checked(n)]; }

  /// Active amplitudes/offsets at sample n (balanced before any event).
  SagEvent active_sag(int n) const {
    const int idx = sag_at_[checked(n)];
    return idx < 0 ? SagEvent{} : sc_.sags[static_cast<std::size_t>(idx)];
  }

  /// Index into the sorted sag list active at sample n; -1 while balanced.
  /// Together with true_frequency this delimits constant-condition segments.
  int sag_index(int n) const { return sag_at_[checked(n)]; }

  /// Phasor coefficients (A, B) active at sample n.
  std::pair<Complex, Complex> phasors(int n) const {
    const SagEvent s = active_sag(n);
    return phasor_coefficients(s.va, s.vb, s.vc, s.delta_b, s.delta_c);
  }

  /// Noise-free phase voltages at sample n (identical at every node).
  ThreePhaseSample clean_sample(int n) const {
    const SagEvent s = active_sag(n);
    const double th = theta(n);
    constexpr double two_thirds_pi = 2.0 * std::numbers::pi / 3.0;
    return ThreePhaseSample{
        s.va * std::cos(th),
        s.vb * std::cos(th - two_thirds_pi + s.delta_b),
        s.vc * std::cos(th + two_thirds_pi + s.delta_c)};
  }

  Complex clarke_clean(int n) const { return clarke(clean_sample(n)); }

  /// Noisy phase voltages observed by `node` at sample n.
  ThreePhaseSample sample(int node, int n) const {
    if (node < 0 || node >= sc_.nodes) {
      throw ConfigError("SignalGenerator: node id out of range");
    }
    ThreePhaseSample out = clean_sample(n);
    if (sc_.noise.additive_noise()) {
      const ThreePhaseSample ph = detail::phase_noise(
          sc_.noise, sigma_alpha_, sigma_beta_, seed_, node, n);
      out.va += ph.va;
      out.vb += ph.vb;
      out.vc += ph.vc;
    }
    if (sc_.noise.spike_prob > 0.0 &&
        (sc_.noise.spike_node < 0 || sc_.noise.spike_node == node)) {
      Rng spike(derive_key(seed_, detail::kStreamSpike,
                           static_cast<std::uint64_t>(node) + 1,
                           static_cast<std::uint64_t>(n)));
      if (spike.uniform() < sc_.noise.spike_prob) {
        const int phase = spike.uniform_int(3);
        const double hit =
            (spike.uniform() < 0.5 ? -1.0 : 1.0) * sc_.noise.spike_amp;
        if (phase == 0) out.va += hit;
        if (phase == 1) out.vb += hit;
        if (phase == 2) out.vc += hit;
      }
    }
    return out;
  }

  Complex clarke_sample(int node, int n) const {
    return clarke(sample(node, n));
  }

  /// Clarke-domain noise covariance E|z|^2 seen by the filters (0 when
  /// noiseless; spikes are deliberately unmodeled).
  double obs_r() const {
    return sc_.noise.additive_noise()
               ? sigma_alpha_ * sigma_alpha_ + sigma_beta_ * sigma_beta_
               : 0.0;
  }

  /// Clarke-domain noise pseudo-covariance E[z^2] (real by construction).
  double obs_u() const {
    return sc_.noise.additive_noise()
               ? sigma_alpha_ * sigma_alpha_ - sigma_beta_ * sigma_beta_
               : 0.0;
  }

  double cross_rho() const { return sc_.noise.cross_rho; }

 private:
  std::size_t checked(int n) const {
    if (n < 0 || n >= sample_count()) {
      throw ConfigError("SignalGenerator: sample index out of range");
    }
    return static_cast<std::size_t>(n);
  }

  GridScenario sc_;
  std::uint64_t seed_;
  std::vector<double> freq_, theta_;
  std::vector<int> sag_at_;  ///< index into sags active at n, -1 = balanced
  double sigma_alpha_ = 0.0, sigma_beta_ = 0.0;
};

}  // namespace gridfreq
