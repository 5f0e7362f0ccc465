#pragma once

// State-space model descriptions: widely linear models (with conjugate
// transition / observation blocks), their conjugate-augmented forms, and
// nonlinear models with analytic Jacobian pairs in both the state and its
// conjugate. Includes finite-difference Jacobians for validation.

#include <gridfreq/linalg.hpp>
#include <gridfreq/network.hpp>

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gridfreq {

// ---------------------------------------------------------------------------
// Widely linear model
//
//   x_{n+1} = F x_n + A conj(x_n) + w_n
//   y_{i,n} = H_i x_n + B_i conj(x_n) + v_{i,n}
//
// w has covariance Q and pseudo-covariance P; the per-node v statistics live
// in a NoiseCorrelationSpec. A strictly linear model has A = B_i = 0.

struct LinearModel {
  CMatrix f;               ///< L x L state transition
  CMatrix a;               ///< L x L conjugate state transition
  std::vector<CMatrix> h;  ///< per node, K_i x L observation
  std::vector<CMatrix> b;  ///< per node, K_i x L conjugate observation
  CMatrix q;               ///< state noise covariance
  CMatrix p;               ///< state noise pseudo-covariance
  NoiseCorrelationSpec obs_noise;

  int state_dim() const { return static_cast<int>(f.rows()); }
  int node_count() const { return static_cast<int>(h.size()); }

  bool strictly_linear() const {
    if (max_abs(a) > 0.0) return false;
    for (const auto& bi : b) {
      if (max_abs(bi) > 0.0) return false;
    }
    return true;
  }

  void validate() const {
    const int l = state_dim();
    if (l <= 0 || f.cols() != l) {
      throw DimensionError("LinearModel: F must be square and non-empty");
    }
    if (a.rows() != l || a.cols() != l) {
      throw DimensionError("LinearModel: A must match F's shape");
    }
    if (h.empty() || h.size() != b.size()) {
      throw DimensionError("LinearModel: need matching per-node H and B");
    }
    if (obs_noise.node_count() != node_count()) {
      throw DimensionError(
          "LinearModel: noise spec node count does not match observations");
    }
    for (int i = 0; i < node_count(); ++i) {
      const auto& hi = h[static_cast<std::size_t>(i)];
      const auto& bi = b[static_cast<std::size_t>(i)];
      if (hi.cols() != l || bi.rows() != hi.rows() || bi.cols() != l) {
        throw DimensionError("LinearModel: node " + std::to_string(i) +
                             " observation blocks are inconsistent");
      }
      if (noise_dim_mismatch(i, hi)) {
        throw DimensionError("LinearModel: node " + std::to_string(i) +
                             " noise blocks do not match observation dim");
      }
    }
    require_finite(f, "LinearModel: F");
    require_finite(a, "LinearModel: A");
    require_hermitian(q, "LinearModel: Q");
    if (p.rows() != q.rows() || p.cols() != q.cols()) {
      throw DimensionError("LinearModel: P must match Q's shape");
    }
    if (q.rows() != l) {
      throw DimensionError("LinearModel: Q must be L x L");
    }
  }

 private:
  bool noise_dim_mismatch(int i, const CMatrix& hi) const {
    return obs_noise.obs_dim(i) != static_cast<int>(hi.rows());
  }
};

/// The conjugate-augmented form of a widely linear model:
/// F^a = [[F, A], [conj A, conj F]], H^a_i likewise, Q^a = [[Q, P], ...].
struct AugmentedLinearModel {
  CMatrix f_aug;
  CMatrix q_aug;
  std::vector<CMatrix> h_aug;  ///< per node 2K_i x 2L
};

inline AugmentedLinearModel augment_model(const LinearModel& model) {
  model.validate();
  AugmentedLinearModel out;
  out.f_aug = augment_blocks(model.f, model.a);
  out.q_aug = augment_covariance(model.q, model.p);
  out.h_aug.reserve(model.h.size());
  for (std::size_t i = 0; i < model.h.size(); ++i) {
    out.h_aug.push_back(augment_blocks(model.h[i], model.b[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinear model with analytic conjugate-pair Jacobians
//
//   x_{n+1} = f(x_n) + w_n,  y_{i,n} = h_i(x_n) + v_{i,n}
//
// Jacobians follow the conjugate-coordinate convention: for g(x) with
// x = u + jv, dg/dx = (dg/du - j dg/dv) / 2 and
// dg/dconj(x) = (dg/du + j dg/dv) / 2.

using StateFn = std::function<CVector(const CVector&)>;
using JacobianFn = std::function<CMatrix(const CVector&)>;

struct NodeObservationModel {
  int obs_dim = 1;
  StateFn h;
  JacobianFn h_jac_x;   ///< dh/dx
  JacobianFn h_jac_xc;  ///< dh/dconj(x)
};

struct NonlinearModel {
  int state_dim = 0;
  StateFn f;
  JacobianFn f_jac_x;
  JacobianFn f_jac_xc;
  std::vector<NodeObservationModel> obs;
  CMatrix q;  ///< state noise covariance
  CMatrix p;  ///< state noise pseudo-covariance
  NoiseCorrelationSpec obs_noise;

  int node_count() const { return static_cast<int>(obs.size()); }

  void validate() const {
    if (state_dim <= 0) {
      throw DimensionError("NonlinearModel: state_dim must be positive");
    }
    if (!f || !f_jac_x || !f_jac_xc) {
      throw ConfigError("NonlinearModel: state function or Jacobians missing");
    }
    if (obs.empty()) {
      throw ConfigError("NonlinearModel: no observation models");
    }
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (!obs[i].h || !obs[i].h_jac_x || !obs[i].h_jac_xc) {
        throw ConfigError("NonlinearModel: node " + std::to_string(i) +
                          " observation function or Jacobians missing");
      }
      if (obs[i].obs_dim <= 0) {
        throw DimensionError("NonlinearModel: node " + std::to_string(i) +
                             " obs_dim must be positive");
      }
    }
    if (obs_noise.node_count() != node_count()) {
      throw DimensionError(
          "NonlinearModel: noise spec node count does not match observations");
    }
    if (q.rows() != state_dim || q.cols() != state_dim ||
        p.rows() != state_dim || p.cols() != state_dim) {
      throw DimensionError("NonlinearModel: Q and P must be L x L");
    }
    require_hermitian(q, "NonlinearModel: Q");
  }
};

// ---------------------------------------------------------------------------
// Linearization

/// First-order expansion of the state map at the previous estimate.
struct StateLinearization {
  CVector f_value;  ///< f(x_prev)
  CMatrix f;        ///< df/dx at x_prev
  CMatrix a;        ///< df/dconj(x) at x_prev
};

/// First-order expansion of one node's observation map at the prediction.
struct ObservationLinearization {
  CVector h_value;  ///< h_i(x_pred)
  CMatrix h;        ///< dh_i/dx at x_pred
  CMatrix b;        ///< dh_i/dconj(x) at x_pred
};

/// Combined expansion as used by one extended-filter step: state map
/// linearized at the previous estimate, observation map at the prediction.
struct Linearization {
  StateLinearization state;
  ObservationLinearization observation;
};

inline StateLinearization linearize_state(const NonlinearModel& model,
                                          const CVector& x_prev) {
  StateLinearization out;
  out.f_value = model.f(x_prev);
  out.f = model.f_jac_x(x_prev);
  out.a = model.f_jac_xc(x_prev);
  if (out.f_value.size() != model.state_dim ||
      out.f.rows() != model.state_dim || out.f.cols() != model.state_dim ||
      out.a.rows() != model.state_dim || out.a.cols() != model.state_dim) {
    throw DimensionError("linearize_state: model callbacks returned wrong shape");
  }
  require_finite(out.f_value, "linearize_state: f(x)");
  require_finite(out.f, "linearize_state: df/dx");
  require_finite(out.a, "linearize_state: df/dconj(x)");
  return out;
}

inline ObservationLinearization linearize_observation(
    const NonlinearModel& model, int node, const CVector& x_pred) {
  if (node < 0 || node >= model.node_count()) {
    throw ConfigError("linearize_observation: node id out of range");
  }
  const auto& ob = model.obs[static_cast<std::size_t>(node)];
  ObservationLinearization out;
  out.h_value = ob.h(x_pred);
  out.h = ob.h_jac_x(x_pred);
  out.b = ob.h_jac_xc(x_pred);
  if (out.h_value.size() != ob.obs_dim || out.h.rows() != ob.obs_dim ||
      out.h.cols() != model.state_dim || out.b.rows() != ob.obs_dim ||
      out.b.cols() != model.state_dim) {
    throw DimensionError(
        "linearize_observation: model callbacks returned wrong shape");
  }
  require_finite(out.h_value, "linearize_observation: h(x)");
  require_finite(out.h, "linearize_observation: dh/dx");
  require_finite(out.b, "linearize_observation: dh/dconj(x)");
  return out;
}

inline Linearization linearize(const NonlinearModel& model,
                               const CVector& x_prev, const CVector& x_pred,
                               int node) {
  return Linearization{linearize_state(model, x_prev),
                       linearize_observation(model, node, x_pred)};
}

// ---------------------------------------------------------------------------
// Finite-difference Jacobians (validation oracle)

struct JacobianPair {
  CMatrix jac_x;   ///< dg/dx
  CMatrix jac_xc;  ///< dg/dconj(x)
};

/// Central finite differences in the real and imaginary directions of each
/// coordinate, converted to the conjugate-coordinate pair.
inline JacobianPair numeric_jacobians(const StateFn& g, int out_dim,
                                      const CVector& x, double step = 1e-6) {
  const Eigen::Index n = x.size();
  JacobianPair out;
  out.jac_x.resize(out_dim, n);
  out.jac_xc.resize(out_dim, n);
  const Complex j_unit(0.0, 1.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    CVector xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    const CVector d_real = (g(xp) - g(xm)) / (2.0 * step);
    xp = x;
    xm = x;
    xp[k] += j_unit * step;
    xm[k] -= j_unit * step;
    const CVector d_imag = (g(xp) - g(xm)) / (2.0 * step);
    out.jac_x.col(k) = 0.5 * (d_real - j_unit * d_imag);
    out.jac_xc.col(k) = 0.5 * (d_real + j_unit * d_imag);
  }
  return out;
}

/// Largest absolute deviation between the model's analytic Jacobians and
/// central finite differences at x, across the state map and every node's
/// observation map, both conjugate partials.
inline double jacobian_check(const NonlinearModel& model, const CVector& x,
                             double step = 1e-6) {
  model.validate();
  double worst = 0.0;
  const JacobianPair fd_f = numeric_jacobians(model.f, model.state_dim, x, step);
  worst = std::max(worst, max_abs(CMatrix(model.f_jac_x(x) - fd_f.jac_x)));
  worst = std::max(worst, max_abs(CMatrix(model.f_jac_xc(x) - fd_f.jac_xc)));
  for (const auto& ob : model.obs) {
    const JacobianPair fd_h = numeric_jacobians(ob.h, ob.obs_dim, x, step);
    worst = std::max(worst, max_abs(CMatrix(ob.h_jac_x(x) - fd_h.jac_x)));
    worst = std::max(worst, max_abs(CMatrix(ob.h_jac_xc(x) - fd_h.jac_xc)));
  }
  return worst;
}

}  // namespace gridfreq
