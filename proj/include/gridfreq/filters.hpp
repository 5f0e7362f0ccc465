#pragma once

// Diffusion Kalman filters over a sensor network, in four flavors:
//
//   DiffusionCkf       strictly linear complex Kalman filter
//   DiffusionAckf      augmented (widely linear) complex Kalman filter
//   DiffusionAckfInfo  information form of the augmented filter
//   DiffusionCekf      strictly linear extended Kalman filter
//   DiffusionAcekf     augmented (widely linear) extended Kalman filter
//
// Every step has the same two-phase shape: (1) each node runs a local
// predict/update against the stacked observations of its closed
// neighborhood, producing an intermediate estimate; (2) each node combines
// its neighbors' intermediate estimates with column-stochastic weights.
// Covariances are never diffused. Augmented filters re-project the combined
// estimate onto the mirror subspace [x; conj(x)] after diffusion, and every
// covariance update is followed by a Hermitian projection, so round-off
// cannot accumulate into structural asymmetry.

#include <gridfreq/linalg.hpp>
#include <gridfreq/network.hpp>
#include <gridfreq/state_space.hpp>

#include <string>
#include <utility>
#include <vector>

namespace gridfreq {

// ---------------------------------------------------------------------------
// Shared state and diagnostics

/// One node's running estimate and covariance. For augmented filters x has
/// length 2L and m is 2L x 2L; for strictly linear filters, L and L x L.
struct NodeFilterState {
  CVector x;
  CMatrix m;
};

using NodeStates = std::vector<NodeFilterState>;

struct FilterDiagnostics {
  long steps = 0;
  long jitter_events = 0;       ///< solves that needed the diagonal jitter
  long refinement_events = 0;   ///< iterative refinement passes across solves
  double max_condition = 0.0;   ///< worst innovation/covariance conditioning

  void absorb(const SolveInfo& info) {
    if (info.jittered) ++jitter_events;
    refinement_events += info.refinement_passes;
    if (info.condition_estimate > max_condition) {
      max_condition = info.condition_estimate;
    }
  }
};

/// Uniform initial states: every node starts at x0 (augmented when
/// `augmented`) with covariance m0_scale * I.
inline NodeStates initial_states(const CVector& x0, double m0_scale, int nodes,
                                 bool augmented) {
  NodeFilterState proto;
  if (augmented) {
    proto.x = augment_vector(x0).full;
  } else {
    proto.x = x0;
  }
  proto.m = m0_scale * CMatrix::Identity(proto.x.size(), proto.x.size());
  return NodeStates(static_cast<std::size_t>(nodes), proto);
}

/// Per-node initial states (e.g. each node seeded from its own first
/// observation).
inline NodeStates initial_states(const std::vector<CVector>& x0,
                                 double m0_scale, bool augmented) {
  NodeStates out;
  out.reserve(x0.size());
  for (const auto& x : x0) {
    out.push_back(initial_states(x, m0_scale, 1, augmented).front());
  }
  return out;
}

namespace detail {

inline void check_states(const NodeStates& states, int nodes, int dim,
                         const char* who) {
  if (static_cast<int>(states.size()) != nodes) {
    throw DimensionError(std::string(who) + ": expected " +
                         std::to_string(nodes) + " node states, got " +
                         std::to_string(states.size()));
  }
  for (int i = 0; i < nodes; ++i) {
    const auto& s = states[static_cast<std::size_t>(i)];
    if (s.x.size() != dim || s.m.rows() != dim || s.m.cols() != dim) {
      throw DimensionError(std::string(who) + ": node " + std::to_string(i) +
                           " state has wrong dimension (expected " +
                           std::to_string(dim) + ")");
    }
  }
}

inline void check_observations(const std::vector<CVector>& y,
                               const NoiseCorrelationSpec& noise,
                               const char* who) {
  if (static_cast<int>(y.size()) != noise.node_count()) {
    throw DimensionError(std::string(who) + ": expected " +
                         std::to_string(noise.node_count()) +
                         " observations, got " + std::to_string(y.size()));
  }
  for (int k = 0; k < noise.node_count(); ++k) {
    const auto& yk = y[static_cast<std::size_t>(k)];
    if (static_cast<int>(yk.size()) != noise.obs_dim(k)) {
      throw DimensionError(std::string(who) + ": node " + std::to_string(k) +
                           " observation has length " +
                           std::to_string(yk.size()) + ", expected " +
                           std::to_string(noise.obs_dim(k)));
    }
    require_finite(yk, who);
  }
}

[[noreturn]] inline void rethrow_with_node(const NumericalError& err,
                                           const char* who, int node) {
  throw NumericalError(std::string(who) + ", node " + std::to_string(node) +
                           ": " + err.what(),
                       err.condition_estimate());
}

/// Diffusion phase shared by every filter: combine intermediate estimates
/// over the closed neighborhood with column-stochastic weights, ascending
/// node order. Mirrors the combined vector when `mirror` is set.
inline void diffuse(NodeStates& states, const std::vector<CVector>& psi,
                    const NetworkTopology& topo, const CombinationWeights& w,
                    bool mirror) {
  for (int i = 0; i < topo.node_count(); ++i) {
    CVector combined = CVector::Zero(psi[static_cast<std::size_t>(i)].size());
    for (int k : topo.neighborhood(i)) {
      combined += w.weight(k, i) * psi[static_cast<std::size_t>(k)];
    }
    states[static_cast<std::size_t>(i)].x =
        mirror ? enforce_mirror(combined) : combined;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strictly linear diffusion Kalman filter

class DiffusionCkf {
 public:
  DiffusionCkf(LinearModel model, NetworkTopology topo,
               CombinationWeights weights)
      : model_(std::move(model)),
        topo_(std::move(topo)),
        weights_(std::move(weights)) {
    model_.validate();
    if (!model_.strictly_linear()) {
      throw ConfigError(
          "DiffusionCkf: model must be strictly linear (A = 0, B = 0); use "
          "DiffusionAckf for widely linear models");
    }
    if (model_.node_count() != topo_.node_count() ||
        weights_.node_count() != topo_.node_count()) {
      throw DimensionError("DiffusionCkf: model/topology/weights node counts differ");
    }
    nbhd_.reserve(static_cast<std::size_t>(topo_.node_count()));
    for (int i = 0; i < topo_.node_count(); ++i) {
      nbhd_.push_back(
          stack_neighborhood(model_.h, model_.b, model_.obs_noise, topo_, i));
    }
    eye_ = CMatrix::Identity(model_.state_dim(), model_.state_dim());
  }

  int node_count() const { return topo_.node_count(); }
  int state_dim() const { return model_.state_dim(); }

  void step(NodeStates& states, const std::vector<CVector>& y,
            FilterDiagnostics* diag = nullptr) const {
    detail::check_states(states, node_count(), state_dim(), "DiffusionCkf");
    detail::check_observations(y, model_.obs_noise, "DiffusionCkf");
    std::vector<CVector> psi(states.size());
    for (int i = 0; i < node_count(); ++i) {
      try {
        local_update(states[static_cast<std::size_t>(i)], y, i,
                     psi[static_cast<std::size_t>(i)], diag);
      } catch (const NumericalError& err) {
        detail::rethrow_with_node(err, "DiffusionCkf", i);
      }
    }
    detail::diffuse(states, psi, topo_, weights_, /*mirror=*/false);
    if (diag != nullptr) ++diag->steps;
  }

 private:
  void local_update(NodeFilterState& st, const std::vector<CVector>& y, int i,
                    CVector& psi, FilterDiagnostics* diag) const {
    const auto& nb = nbhd_[static_cast<std::size_t>(i)];
    const CVector pred_x = model_.f * st.x;
    const CMatrix pred_m = model_.f * st.m * model_.f.adjoint() + model_.q;
    const CVector ys = stack_observations(y, topo_, i);
    const CMatrix s =
        enforce_hermitian(nb.h * pred_m * nb.h.adjoint() + nb.r);
    SolveInfo info;
    const CMatrix g = solve_hermitian(s, nb.h * pred_m, &info).adjoint();
    if (diag != nullptr) diag->absorb(info);
    psi = pred_x + g * (ys - nb.h * pred_x);
    st.m = enforce_hermitian((eye_ - g * nb.h) * pred_m);
  }

  LinearModel model_;
  NetworkTopology topo_;
  CombinationWeights weights_;
  std::vector<NeighborhoodSystem> nbhd_;
  CMatrix eye_;
};

// ---------------------------------------------------------------------------
// Augmented (widely linear) diffusion Kalman filter

class DiffusionAckf {
 public:
  DiffusionAckf(LinearModel model, NetworkTopology topo,
                CombinationWeights weights)
      : model_(std::move(model)),
        topo_(std::move(topo)),
        weights_(std::move(weights)) {
    model_.validate();
    if (model_.node_count() != topo_.node_count() ||
        weights_.node_count() != topo_.node_count()) {
      throw DimensionError("DiffusionAckf: model/topology/weights node counts differ");
    }
    const AugmentedLinearModel am = augment_model(model_);
    f_aug_ = am.f_aug;
    q_aug_ = am.q_aug;
    nbhd_.reserve(static_cast<std::size_t>(topo_.node_count()));
    for (int i = 0; i < topo_.node_count(); ++i) {
      nbhd_.push_back(
          stack_neighborhood(model_.h, model_.b, model_.obs_noise, topo_, i));
    }
    eye_ = CMatrix::Identity(2 * model_.state_dim(), 2 * model_.state_dim());
  }

  int node_count() const { return topo_.node_count(); }
  int state_dim() const { return model_.state_dim(); }
  int augmented_dim() const { return 2 * model_.state_dim(); }

  void step(NodeStates& states, const std::vector<CVector>& y,
            FilterDiagnostics* diag = nullptr) const {
    detail::check_states(states, node_count(), augmented_dim(),
                         "DiffusionAckf");
    detail::check_observations(y, model_.obs_noise, "DiffusionAckf");
    std::vector<CVector> psi(states.size());
    for (int i = 0; i < node_count(); ++i) {
      try {
        local_update(states[static_cast<std::size_t>(i)], y, i,
                     psi[static_cast<std::size_t>(i)], diag);
      } catch (const NumericalError& err) {
        detail::rethrow_with_node(err, "DiffusionAckf", i);
      }
    }
    detail::diffuse(states, psi, topo_, weights_, /*mirror=*/true);
    if (diag != nullptr) ++diag->steps;
  }

 private:
  void local_update(NodeFilterState& st, const std::vector<CVector>& y, int i,
                    CVector& psi, FilterDiagnostics* diag) const {
    const auto& nb = nbhd_[static_cast<std::size_t>(i)];
    const CVector pred_x = f_aug_ * st.x;
    const CMatrix pred_m = f_aug_ * st.m * f_aug_.adjoint() + q_aug_;
    const CVector ya = stack_observations_augmented(y, topo_, i);
    const CMatrix s =
        enforce_hermitian(nb.h_aug * pred_m * nb.h_aug.adjoint() + nb.r_aug);
    SolveInfo info;
    const CMatrix g = solve_hermitian(s, nb.h_aug * pred_m, &info).adjoint();
    if (diag != nullptr) diag->absorb(info);
    psi = pred_x + g * (ya - nb.h_aug * pred_x);
    st.m = enforce_hermitian((eye_ - g * nb.h_aug) * pred_m);
  }

  LinearModel model_;
  NetworkTopology topo_;
  CombinationWeights weights_;
  CMatrix f_aug_, q_aug_, eye_;
  std::vector<NeighborhoodSystem> nbhd_;
};

// ---------------------------------------------------------------------------
// Information form of the augmented diffusion filter
//
// Each node fuses neighbors through information contributions
// S_i = sum_k H^aH_k (R^a_k)^-1 H^a_k and r_i = sum_k H^aH_k (R^a_k)^-1 y^a_k,
// then M_post^-1 = M_pred^-1 + S_i. Requires cross-node-uncorrelated
// observation noise (block-diagonal collective R), which is what makes the
// per-node sums equal to the stacked-form update.

class DiffusionAckfInfo {
 public:
  DiffusionAckfInfo(LinearModel model, NetworkTopology topo,
                    CombinationWeights weights)
      : model_(std::move(model)),
        topo_(std::move(topo)),
        weights_(std::move(weights)) {
    model_.validate();
    if (model_.obs_noise.has_cross()) {
      throw ConfigError(
          "DiffusionAckfInfo: information form requires cross-node "
          "uncorrelated observation noise");
    }
    if (model_.node_count() != topo_.node_count() ||
        weights_.node_count() != topo_.node_count()) {
      throw DimensionError(
          "DiffusionAckfInfo: model/topology/weights node counts differ");
    }
    const AugmentedLinearModel am = augment_model(model_);
    f_aug_ = am.f_aug;
    q_aug_ = am.q_aug;
    const int l2 = 2 * model_.state_dim();
    eye_ = CMatrix::Identity(l2, l2);

    // Per node k: w_k = H^aH_k (R^a_k)^-1 and its Gram matrix. Both are
    // constant, so the per-neighborhood sums S_i are precomputed too.
    const int n = topo_.node_count();
    h_aug_.reserve(static_cast<std::size_t>(n));
    info_weight_.reserve(static_cast<std::size_t>(n));
    std::vector<CMatrix> gram;
    gram.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const CMatrix h_aug = augment_blocks(model_.h[static_cast<std::size_t>(k)],
                                           model_.b[static_cast<std::size_t>(k)]);
      const CMatrix r_aug = augment_covariance(model_.obs_noise.node_r(k),
                                               model_.obs_noise.node_u(k));
      CMatrix r_inv;
      try {
        r_inv = solve_hermitian(
            r_aug, CMatrix::Identity(r_aug.rows(), r_aug.cols()));
      } catch (const NumericalError& err) {
        detail::rethrow_with_node(err, "DiffusionAckfInfo noise inversion", k);
      }
      h_aug_.push_back(h_aug);
      info_weight_.push_back(h_aug.adjoint() * r_inv);
      gram.push_back(enforce_hermitian(info_weight_.back() * h_aug));
    }
    s_sum_.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      CMatrix s = CMatrix::Zero(l2, l2);
      for (int k : topo_.neighborhood(i)) {
        s += gram[static_cast<std::size_t>(k)];
      }
      s_sum_.push_back(s);
    }
  }

  int node_count() const { return topo_.node_count(); }
  int augmented_dim() const { return 2 * model_.state_dim(); }

  void step(NodeStates& states, const std::vector<CVector>& y,
            FilterDiagnostics* diag = nullptr) const {
    detail::check_states(states, node_count(), augmented_dim(),
                         "DiffusionAckfInfo");
    detail::check_observations(y, model_.obs_noise, "DiffusionAckfInfo");
    // Augmented observations per node, reused across neighborhoods.
    std::vector<CVector> y_aug(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
      y_aug[k].resize(2 * y[k].size());
      y_aug[k].head(y[k].size()) = y[k];
      y_aug[k].tail(y[k].size()) = y[k].conjugate();
    }
    std::vector<CVector> chi(states.size());
    for (int i = 0; i < node_count(); ++i) {
      try {
        local_update(states[static_cast<std::size_t>(i)], y_aug, i,
                     chi[static_cast<std::size_t>(i)], diag);
      } catch (const NumericalError& err) {
        detail::rethrow_with_node(err, "DiffusionAckfInfo", i);
      }
    }
    detail::diffuse(states, chi, topo_, weights_, /*mirror=*/true);
    if (diag != nullptr) ++diag->steps;
  }

 private:
  void local_update(NodeFilterState& st, const std::vector<CVector>& y_aug,
                    int i, CVector& chi, FilterDiagnostics* diag) const {
    const CVector pred_x = f_aug_ * st.x;
    const CMatrix pred_m = f_aug_ * st.m * f_aug_.adjoint() + q_aug_;
    const auto& s_i = s_sum_[static_cast<std::size_t>(i)];

    CVector r_vec = CVector::Zero(pred_x.size());
    for (int k : topo_.neighborhood(i)) {
      r_vec += info_weight_[static_cast<std::size_t>(k)] *
               y_aug[static_cast<std::size_t>(k)];
    }

    SolveInfo inv_info, post_info;
    const CMatrix m_pred_inv =
        enforce_hermitian(solve_hermitian(pred_m, eye_, &inv_info));
    const CMatrix m_post = enforce_hermitian(
        solve_hermitian(enforce_hermitian(m_pred_inv + s_i), eye_, &post_info));
    if (diag != nullptr) {
      diag->absorb(inv_info);
      diag->absorb(post_info);
    }
    chi = pred_x + m_post * (r_vec - s_i * pred_x);
    st.m = m_post;
  }

  LinearModel model_;
  NetworkTopology topo_;
  CombinationWeights weights_;
  CMatrix f_aug_, q_aug_, eye_;
  std::vector<CMatrix> h_aug_;       ///< per node, 2K_k x 2L
  std::vector<CMatrix> info_weight_; ///< per node, H^aH (R^a)^-1
  std::vector<CMatrix> s_sum_;       ///< per node, sum of neighborhood Grams
};

// ---------------------------------------------------------------------------
// Strictly linear extended filter (complex EKF, no conjugate terms)

class DiffusionCekf {
 public:
  DiffusionCekf(NonlinearModel model, NetworkTopology topo,
                CombinationWeights weights)
      : model_(std::move(model)),
        topo_(std::move(topo)),
        weights_(std::move(weights)) {
    model_.validate();
    if (model_.node_count() != topo_.node_count() ||
        weights_.node_count() != topo_.node_count()) {
      throw DimensionError("DiffusionCekf: model/topology/weights node counts differ");
    }
    noise_.reserve(static_cast<std::size_t>(topo_.node_count()));
    for (int i = 0; i < topo_.node_count(); ++i) {
      noise_.push_back(stack_noise(model_.obs_noise, topo_, i));
    }
    eye_ = CMatrix::Identity(model_.state_dim, model_.state_dim);
  }

  int node_count() const { return topo_.node_count(); }
  int state_dim() const { return model_.state_dim; }

  void step(NodeStates& states, const std::vector<CVector>& y,
            FilterDiagnostics* diag = nullptr) const {
    detail::check_states(states, node_count(), state_dim(), "DiffusionCekf");
    detail::check_observations(y, model_.obs_noise, "DiffusionCekf");
    std::vector<CVector> psi(states.size());
    for (int i = 0; i < node_count(); ++i) {
      try {
        local_update(states[static_cast<std::size_t>(i)], y, i,
                     psi[static_cast<std::size_t>(i)], diag);
      } catch (const NumericalError& err) {
        detail::rethrow_with_node(err, "DiffusionCekf", i);
      }
    }
    detail::diffuse(states, psi, topo_, weights_, /*mirror=*/false);
    if (diag != nullptr) ++diag->steps;
  }

 private:
  void local_update(NodeFilterState& st, const std::vector<CVector>& y, int i,
                    CVector& psi, FilterDiagnostics* diag) const {
    const auto& nz = noise_[static_cast<std::size_t>(i)];
    const StateLinearization lin = linearize_state(model_, st.x);
    // The strictly linear filter ignores conjugate dynamics by design:
    // only df/dx propagates the covariance.
    const CVector& pred_x = lin.f_value;
    const CMatrix pred_m = lin.f * st.m * lin.f.adjoint() + model_.q;

    CMatrix h_st(nz.total, model_.state_dim);
    CVector innov(nz.total);
    for (std::size_t a = 0; a < nz.nodes.size(); ++a) {
      const int k = nz.nodes[a];
      const ObservationLinearization ol =
          linearize_observation(model_, k, pred_x);
      h_st.middleRows(nz.offsets[a], ol.h.rows()) = ol.h;
      innov.segment(nz.offsets[a], ol.h_value.size()) =
          y[static_cast<std::size_t>(k)] - ol.h_value;
    }

    const CMatrix s = enforce_hermitian(h_st * pred_m * h_st.adjoint() + nz.r);
    SolveInfo info;
    const CMatrix g = solve_hermitian(s, h_st * pred_m, &info).adjoint();
    if (diag != nullptr) diag->absorb(info);
    psi = pred_x + g * innov;
    st.m = enforce_hermitian((eye_ - g * h_st) * pred_m);
  }

  NonlinearModel model_;
  NetworkTopology topo_;
  CombinationWeights weights_;
  std::vector<StackedNoise> noise_;
  CMatrix eye_;
};

// ---------------------------------------------------------------------------
// Augmented (widely linear) extended filter

class DiffusionAcekf {
 public:
  DiffusionAcekf(NonlinearModel model, NetworkTopology topo,
                 CombinationWeights weights)
      : model_(std::move(model)),
        topo_(std::move(topo)),
        weights_(std::move(weights)) {
    model_.validate();
    if (model_.node_count() != topo_.node_count() ||
        weights_.node_count() != topo_.node_count()) {
      throw DimensionError("DiffusionAcekf: model/topology/weights node counts differ");
    }
    q_aug_ = augment_covariance(model_.q, model_.p);
    noise_.reserve(static_cast<std::size_t>(topo_.node_count()));
    for (int i = 0; i < topo_.node_count(); ++i) {
      noise_.push_back(stack_noise(model_.obs_noise, topo_, i));
    }
    eye_ = CMatrix::Identity(2 * model_.state_dim, 2 * model_.state_dim);
  }

  int node_count() const { return topo_.node_count(); }
  int state_dim() const { return model_.state_dim; }
  int augmented_dim() const { return 2 * model_.state_dim; }

  void step(NodeStates& states, const std::vector<CVector>& y,
            FilterDiagnostics* diag = nullptr) const {
    detail::check_states(states, node_count(), augmented_dim(),
                         "DiffusionAcekf");
    detail::check_observations(y, model_.obs_noise, "DiffusionAcekf");
    std::vector<CVector> psi(states.size());
    for (int i = 0; i < node_count(); ++i) {
      try {
        local_update(states[static_cast<std::size_t>(i)], y, i,
                     psi[static_cast<std::size_t>(i)], diag);
      } catch (const NumericalError& err) {
        detail::rethrow_with_node(err, "DiffusionAcekf", i);
      }
    }
    detail::diffuse(states, psi, topo_, weights_, /*mirror=*/true);
    if (diag != nullptr) ++diag->steps;
  }

 private:
  void local_update(NodeFilterState& st, const std::vector<CVector>& y, int i,
                    CVector& psi, FilterDiagnostics* diag) const {
    const auto& nz = noise_[static_cast<std::size_t>(i)];
    const int l = model_.state_dim;

    // State map linearized at the node's own previous (base) estimate.
    const StateLinearization lin = linearize_state(model_, st.x.head(l));
    CVector pred_x(2 * l);
    pred_x.head(l) = lin.f_value;
    pred_x.tail(l) = lin.f_value.conjugate();
    const CMatrix f_aug = augment_blocks(lin.f, lin.a);
    const CMatrix pred_m = f_aug * st.m * f_aug.adjoint() + q_aug_;

    // Observation maps of the whole neighborhood, all linearized at this
    // node's own prediction.
    CMatrix h_st(nz.total, l), b_st(nz.total, l);
    CVector innov_base(nz.total);
    const CVector pred_base = pred_x.head(l);
    for (std::size_t a = 0; a < nz.nodes.size(); ++a) {
      const int k = nz.nodes[a];
      const ObservationLinearization ol =
          linearize_observation(model_, k, pred_base);
      h_st.middleRows(nz.offsets[a], ol.h.rows()) = ol.h;
      b_st.middleRows(nz.offsets[a], ol.b.rows()) = ol.b;
      innov_base.segment(nz.offsets[a], ol.h_value.size()) =
          y[static_cast<std::size_t>(k)] - ol.h_value;
    }
    const CMatrix h_aug = augment_blocks(h_st, b_st);
    CVector innov(2 * nz.total);
    innov.head(nz.total) = innov_base;
    innov.tail(nz.total) = innov_base.conjugate();

    const CMatrix s =
        enforce_hermitian(h_aug * pred_m * h_aug.adjoint() + nz.r_aug);
    SolveInfo info;
    const CMatrix g = solve_hermitian(s, h_aug * pred_m, &info).adjoint();
    if (diag != nullptr) diag->absorb(info);
    psi = pred_x + g * innov;
    st.m = enforce_hermitian((eye_ - g * h_aug) * pred_m);
  }

  NonlinearModel model_;
  NetworkTopology topo_;
  CombinationWeights weights_;
  CMatrix q_aug_, eye_;
  std::vector<StackedNoise> noise_;
};

// ---------------------------------------------------------------------------
// One-shot step functions (convenience wrappers over the steppers)

inline void dckf_step(NodeStates& states, const LinearModel& model,
                      const NetworkTopology& topo,
                      const CombinationWeights& weights,
                      const std::vector<CVector>& y,
                      FilterDiagnostics* diag = nullptr) {
  DiffusionCkf(model, topo, weights).step(states, y, diag);
}

inline void dackf_step(NodeStates& states, const LinearModel& model,
                       const NetworkTopology& topo,
                       const CombinationWeights& weights,
                       const std::vector<CVector>& y,
                       FilterDiagnostics* diag = nullptr) {
  DiffusionAckf(model, topo, weights).step(states, y, diag);
}

inline void dackf_info_step(NodeStates& states, const LinearModel& model,
                            const NetworkTopology& topo,
                            const CombinationWeights& weights,
                            const std::vector<CVector>& y,
                            FilterDiagnostics* diag = nullptr) {
  DiffusionAckfInfo(model, topo, weights).step(states, y, diag);
}

inline void dcekf_step(NodeStates& states, const NonlinearModel& model,
                       const NetworkTopology& topo,
                       const CombinationWeights& weights,
                       const std::vector<CVector>& y,
                       FilterDiagnostics* diag = nullptr) {
  DiffusionCekf(model, topo, weights).step(states, y, diag);
}

inline void dacekf_step(NodeStates& states, const NonlinearModel& model,
                        const NetworkTopology& topo,
                        const CombinationWeights& weights,
                        const std::vector<CVector>& y,
                        FilterDiagnostics* diag = nullptr) {
  DiffusionAcekf(model, topo, weights).step(states, y, diag);
}

// ---------------------------------------------------------------------------
// Whole-run driver

enum class LinearAlgorithm { kDckf, kDackf, kDackfInfo };
enum class NonlinearAlgorithm { kDcekf, kDacekf };

/// Full-run output: per-node, per-step base estimates (length L even for
/// augmented filters — the conjugate half is redundant by construction).
struct FilterRun {
  std::vector<std::vector<CVector>> estimates;  ///< [node][step]
  NodeStates final_states;
  FilterDiagnostics diagnostics;
};

namespace detail {

template <typename Stepper>
FilterRun run_with(const Stepper& stepper, int nodes, int base_dim,
                   bool augmented,
                   const std::vector<std::vector<CVector>>& observations,
                   NodeStates states) {
  FilterRun run;
  run.estimates.assign(static_cast<std::size_t>(nodes), {});
  for (auto& traj : run.estimates) traj.reserve(observations.size());
  for (const auto& y : observations) {
    stepper.step(states, y, &run.diagnostics);
    for (int i = 0; i < nodes; ++i) {
      const CVector& x = states[static_cast<std::size_t>(i)].x;
      run.estimates[static_cast<std::size_t>(i)].push_back(
          augmented ? CVector(x.head(base_dim)) : x);
    }
  }
  run.final_states = std::move(states);
  return run;
}

}  // namespace detail

inline FilterRun run_filter(LinearAlgorithm alg, const LinearModel& model,
                            const NetworkTopology& topo,
                            const CombinationWeights& weights,
                            const std::vector<std::vector<CVector>>& observations,
                            NodeStates init) {
  switch (alg) {
    case LinearAlgorithm::kDckf: {
      const DiffusionCkf f(model, topo, weights);
      return detail::run_with(f, topo.node_count(), model.state_dim(), false,
                              observations, std::move(init));
    }
    case LinearAlgorithm::kDackf: {
      const DiffusionAckf f(model, topo, weights);
      return detail::run_with(f, topo.node_count(), model.state_dim(), true,
                              observations, std::move(init));
    }
    case LinearAlgorithm::kDackfInfo: {
      const DiffusionAckfInfo f(model, topo, weights);
      return detail::run_with(f, topo.node_count(), model.state_dim(), true,
                              observations, std::move(init));
    }
  }
  throw ConfigError("run_filter: unknown linear algorithm");
}

inline FilterRun run_filter(NonlinearAlgorithm alg, const NonlinearModel& model,
                            const NetworkTopology& topo,
                            const CombinationWeights& weights,
                            const std::vector<std::vector<CVector>>& observations,
                            NodeStates init) {
  switch (alg) {
    case NonlinearAlgorithm::kDcekf: {
      const DiffusionCekf f(model, topo, weights);
      return detail::run_with(f, topo.node_count(), model.state_dim, false,
                              observations, std::move(init));
    }
    case NonlinearAlgorithm::kDacekf: {
      const DiffusionAcekf f(model, topo, weights);
      return detail::run_with(f, topo.node_count(), model.state_dim, true,
                              observations, std::move(init));
    }
  }
  throw ConfigError("run_filter: unknown nonlinear algorithm");
}

}  // namespace gridfreq
