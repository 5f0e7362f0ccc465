#pragma once

// Frequency tracking on the Clarke voltage: the strictly linear and widely
// linear state-space models with analytic Wirtinger Jacobians, frequency
// extraction from filter states, per-node initialization, and a
// Hilbert-transform baseline estimator.

#include <gridfreq/linalg.hpp>
#include <gridfreq/network.hpp>
#include <gridfreq/power_grid.hpp>
#include <gridfreq/state_space.hpp>

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace gridfreq {

// ---------------------------------------------------------------------------
// Model builders
//
// Strictly linear state s = (x, u): x estimates the one-step phase rotation
// e^{j omega T}, u the noise-free Clarke voltage. Transition
//   f(s) = (x, u x),  observation  y = u.
//
// Widely linear state s = (h, g, u): the voltage follows the first-order
// widely linear recursion u_{n+1} = h u_n + g conj(u_n), which an unbalanced
// (noncircular) tone satisfies exactly. Transition
//   f(s) = (h, g, h u + g conj(u)),  observation  y = u.

struct GridModelOptions {
  /// Process-noise scale, Q = q_scale * I. Grid frequency drifts slowly
  /// relative to the 5 kHz sampling, so Q is kept well below realistic
  /// observation noise: the filters then average that noise down while a
  /// 1 Hz frequency step is still picked up within a few milliseconds.
  double q_scale = 1e-8;
  double r_floor = 1e-12;  ///< lower bound on the observation covariance
};

namespace detail {

/// Per-node observation noise statistics of the generator's Clarke samples:
/// R_i = E|z|^2 (floored), U_i = E[z^2], cross blocks scaled by the shared
/// fraction rho. Spike contamination is deliberately left unmodeled.
inline NoiseCorrelationSpec grid_noise_spec(const SignalGenerator& gen,
                                            const GridModelOptions& opt) {
  const int nodes = gen.scenario().nodes;
  const double r = std::max(gen.obs_r(), opt.r_floor);
  const double u = gen.obs_u();
  NoiseCorrelationSpec spec(nodes);
  CMatrix r_block(1, 1), u_block(1, 1);
  r_block(0, 0) = Complex(r, 0.0);
  u_block(0, 0) = Complex(u, 0.0);
  for (int i = 0; i < nodes; ++i) {
    spec.set_node(i, r_block, u_block);
  }
  const double rho = gen.cross_rho();
  if (rho > 0.0) {
    CMatrix rc(1, 1), uc(1, 1);
    rc(0, 0) = Complex(rho * r, 0.0);
    uc(0, 0) = Complex(rho * u, 0.0);
    for (int a = 0; a < nodes; ++a) {
      for (int b = a + 1; b < nodes; ++b) {
        spec.set_cross(a, b, rc, uc);
      }
    }
  }
  return spec;
}

/// Observation shared by both models: every node reads its own Clarke
/// voltage, the last state component.
inline NodeObservationModel voltage_observation(int state_dim) {
  NodeObservationModel obs;
  obs.obs_dim = 1;
  obs.h = [state_dim](const CVector& s) {
    CVector y(1);
    y(0) = s(state_dim - 1);
    return y;
  };
  obs.h_jac_x = [state_dim](const CVector&) {
    CMatrix h = CMatrix::Zero(1, state_dim);
    h(0, state_dim - 1) = Complex(1.0, 0.0);
    return h;
  };
  obs.h_jac_xc = [state_dim](const CVector&) {
    return CMatrix::Zero(1, state_dim);
  };
  return obs;
}

}  // namespace detail

inline NonlinearModel sl_grid_model(const SignalGenerator& gen,
                                    const GridModelOptions& opt = {}) {
  NonlinearModel m;
  m.state_dim = 2;
  m.f = [](const CVector& s) {
    CVector out(2);
    out(0) = s(0);
    out(1) = s(1) * s(0);
    return out;
  };
  m.f_jac_x = [](const CVector& s) {
    CMatrix f = CMatrix::Zero(2, 2);
    f(0, 0) = Complex(1.0, 0.0);
    f(1, 0) = s(1);
    f(1, 1) = s(0);
    return f;
  };
  m.f_jac_xc = [](const CVector&) { return CMatrix::Zero(2, 2); };
  m.obs.assign(static_cast<std::size_t>(gen.scenario().nodes),
               detail::voltage_observation(2));
  m.q = opt.q_scale * CMatrix::Identity(2, 2);
  m.p = CMatrix::Zero(2, 2);
  m.obs_noise = detail::grid_noise_spec(gen, opt);
  m.validate();
  return m;
}

inline NonlinearModel wl_grid_model(const SignalGenerator& gen,
                                    const GridModelOptions& opt = {}) {
  NonlinearModel m;
  m.state_dim = 3;
  m.f = [](const CVector& s) {
    CVector out(3);
    out(0) = s(0);
    out(1) = s(1);
    out(2) = s(0) * s(2) + s(1) * std::conj(s(2));
    return out;
  };
  m.f_jac_x = [](const CVector& s) {
    CMatrix f = CMatrix::Zero(3, 3);
    f(0, 0) = Complex(1.0, 0.0);
    f(1, 1) = Complex(1.0, 0.0);
    f(2, 0) = s(2);
    f(2, 1) = std::conj(s(2));
    f(2, 2) = s(0);
    return f;
  };
  m.f_jac_xc = [](const CVector& s) {
    CMatrix a = CMatrix::Zero(3, 3);
    a(2, 2) = s(1);  // d/d conj(u) of g*conj(u)
    return a;
  };
  m.obs.assign(static_cast<std::size_t>(gen.scenario().nodes),
               detail::voltage_observation(3));
  m.q = opt.q_scale * CMatrix::Identity(3, 3);
  m.p = CMatrix::Zero(3, 3);
  m.obs_noise = detail::grid_noise_spec(gen, opt);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Initialization
//
// Filters start believing the system runs at the scenario's init frequency:
// rotation/h = e^{j 2 pi f_init T}, g = 0, and the voltage estimate seeded
// with the node's first observation.

inline CVector sl_initial_state(const SignalGenerator& gen, int node) {
  CVector s(2);
  s(0) = std::polar(1.0, 2.0 * std::numbers::pi * gen.scenario().init_hz *
                             gen.dt());
  s(1) = gen.clarke_sample(node, 0);
  return s;
}

inline CVector wl_initial_state(const SignalGenerator& gen, int node) {
  CVector s(3);
  s(0) = std::polar(1.0, 2.0 * std::numbers::pi * gen.scenario().init_hz *
                             gen.dt());
  s(1) = Complex(0.0, 0.0);
  s(2) = gen.clarke_sample(node, 0);
  return s;
}

// ---------------------------------------------------------------------------
// Frequency extraction

inline double freq_from_sl(Complex x, double dt) {
  if (!(dt > 0.0)) throw ConfigError("freq_from_sl: dt must be positive");
  const double s = std::clamp(x.imag(), -1.0, 1.0);
  return std::asin(s) / (2.0 * std::numbers::pi * dt);
}

/// Extraction for the widely linear state: the conjugate component is
/// cancelled by the root a of the rotation's characteristic equation,
///   a = (-j Im(h) + j sqrt(Im(h)^2 - |g|^2)) / g,
/// after which sin(omega T) = Im(h + a g). Principal complex square root;
/// for |g| below 1e-12 the strictly linear formula applies.
inline double freq_from_wl(Complex h, Complex g, double dt) {
  if (!(dt > 0.0)) throw ConfigError("freq_from_wl: dt must be positive");
  const double im_h = h.imag();
  double s;
  if (std::abs(g) < 1e-12) {
    s = im_h;
  } else {
    const Complex root =
        std::sqrt(Complex(im_h * im_h - std::norm(g), 0.0));
    const Complex a = (Complex(0.0, -im_h) + Complex(0.0, 1.0) * root) / g;
    s = (h + a * g).imag();
  }
  return std::asin(std::clamp(s, -1.0, 1.0)) /
         (2.0 * std::numbers::pi * dt);
}

/// Extraction from full state vectors as produced by the filters.
inline double extract_frequency(const CVector& state, double dt) {
  if (state.size() == 2) return freq_from_sl(state(0), dt);
  if (state.size() == 3) return freq_from_wl(state(0), state(1), dt);
  throw DimensionError("extract_frequency: expected a 2- or 3-state vector");
}

// ---------------------------------------------------------------------------
// Hilbert baseline
//
// Classical instantaneous-frequency estimate from one real phase voltage:
// analytic signal via the frequency-domain Hilbert transform, unwrapped
// phase, first difference, then a trailing moving average.

inline std::vector<double> hilbert_frequency(std::span<const double> v,
                                             double dt, int window = 50) {
  const int n = static_cast<int>(v.size());
  if (n < 64) {
    throw ConfigError("hilbert_frequency: need at least 64 samples");
  }
  if (!(dt > 0.0) || window < 1) {
    throw ConfigError("hilbert_frequency: invalid dt or window");
  }

  std::vector<std::complex<double>> spectrum;
  {
    Eigen::FFT<double> fft;
    std::vector<double> in(v.begin(), v.end());
    fft.fwd(spectrum, in);
  }
  // Zero the negative frequencies, double the positive ones; DC and (for
  // even lengths) Nyquist stay untouched.
  // Positive-frequency bins are 1 .. ceil(n/2)-1; for even n the Nyquist bin
  // n/2 is kept untouched alongside DC.
  const int half = n / 2;
  for (int k = 1; k < half + (n % 2); ++k) {
    spectrum[static_cast<std::size_t>(k)] *= 2.0;
  }
  for (int k = half + 1; k < n; ++k) {
    spectrum[static_cast<std::size_t>(k)] = 0.0;
  }
  std::vector<std::complex<double>> analytic;
  {
    Eigen::FFT<double> fft;
    fft.inv(analytic, spectrum);
  }

  std::vector<double> phase(static_cast<std::size_t>(n));
  double offset = 0.0;
  double prev = std::arg(analytic[0]);
  phase[0] = prev;
  for (int k = 1; k < n; ++k) {
    const double raw = std::arg(analytic[static_cast<std::size_t>(k)]);
    double d = raw - prev;
    while (d > std::numbers::pi) {
      d -= 2.0 * std::numbers::pi;
      offset -= 2.0 * std::numbers::pi;
    }
    while (d < -std::numbers::pi) {
      d += 2.0 * std::numbers::pi;
      offset += 2.0 * std::numbers::pi;
    }
    phase[static_cast<std::size_t>(k)] = raw + offset;
    prev = raw;
  }

  std::vector<double> freq(static_cast<std::size_t>(n));
  const double scale = 1.0 / (2.0 * std::numbers::pi * dt);
  for (int k = 1; k < n; ++k) {
    freq[static_cast<std::size_t>(k)] =
        (phase[static_cast<std::size_t>(k)] -
         phase[static_cast<std::size_t>(k - 1)]) *
        scale;
  }
  freq[0] = freq[1];

  // Trailing moving average over up to `window` past samples.
  std::vector<double> smooth(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += freq[static_cast<std::size_t>(k)];
    if (k >= window) acc -= freq[static_cast<std::size_t>(k - window)];
    smooth[static_cast<std::size_t>(k)] =
        acc / static_cast<double>(std::min(k + 1, window));
  }
  return smooth;
}

}  // namespace gridfreq
