#pragma once

// Sensor-network structure for diffusion estimation: undirected topologies
// with closed neighborhoods, column-stochastic combination weights, and the
// stacking of per-node observation models into collective neighborhood
// systems (plain and conjugate-augmented).

#include <gridfreq/linalg.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gridfreq {

// ---------------------------------------------------------------------------
// Topology

/// Undirected graph over node ids 0..n-1. Neighborhoods are closed (always
/// include the node itself) and kept in ascending id order; that order is
/// the canonical stacking order used everywhere downstream.
class NetworkTopology {
 public:
  NetworkTopology(int node_count, const std::vector<std::pair<int, int>>& edges)
      : closed_(static_cast<std::size_t>(validate_count(node_count))) {
    std::vector<std::set<int>> sets(closed_.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
      sets[i].insert(static_cast<int>(i));
    }
    for (const auto& [a, b] : edges) {
      if (a < 0 || b < 0 || a >= node_count || b >= node_count) {
        throw ConfigError("topology: edge (" + std::to_string(a) + ", " +
                          std::to_string(b) + ") references a node outside 0.." +
                          std::to_string(node_count - 1));
      }
      if (a == b) {
        throw ConfigError("topology: self-loop on node " + std::to_string(a));
      }
      sets[static_cast<std::size_t>(a)].insert(b);
      sets[static_cast<std::size_t>(b)].insert(a);
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
      closed_[i].assign(sets[i].begin(), sets[i].end());
    }
  }

  static NetworkTopology fully_connected(int n) {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) edges.emplace_back(a, b);
    }
    return NetworkTopology(n, edges);
  }

  static NetworkTopology edgeless(int n) { return NetworkTopology(n, {}); }

  /// Parses edge-list text: one edge per line as two whitespace-separated
  /// 1-based node ids; '#' starts a comment; blank lines are skipped.
  static NetworkTopology from_text(const std::string& text, int node_count) {
    std::vector<std::pair<int, int>> edges;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream fields(line);
      long a = 0, b = 0;
      if (!(fields >> a)) continue;  // blank or comment-only line
      std::string trailing;
      if (!(fields >> b) || (fields >> trailing)) {
        throw ConfigError("topology line " + std::to_string(line_no) +
                          ": expected exactly two node ids");
      }
      if (a < 1 || b < 1 || a > node_count || b > node_count) {
        throw ConfigError("topology line " + std::to_string(line_no) +
                          ": node ids must be in 1.." +
                          std::to_string(node_count));
      }
      edges.emplace_back(static_cast<int>(a - 1), static_cast<int>(b - 1));
    }
    return NetworkTopology(node_count, edges);
  }

  static NetworkTopology from_file(const std::string& path, int node_count) {
    std::ifstream in(path);
    if (!in) {
      throw ConfigError("topology: cannot open '" + path + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return from_text(text.str(), node_count);
  }

  int node_count() const { return static_cast<int>(closed_.size()); }

  /// Closed neighborhood of node i, ascending ids, always containing i.
  const std::vector<int>& neighborhood(int i) const {
    return closed_[checked(i)];
  }

  /// Closed-neighborhood size |N_i|.
  int degree(int i) const {
    return static_cast<int>(closed_[checked(i)].size());
  }

  bool adjacent(int a, int b) const {
    const auto& nb = closed_[checked(a)];
    return std::binary_search(nb.begin(), nb.end(), checked(b));
  }

 private:
  static int validate_count(int n) {
    if (n <= 0) throw ConfigError("topology: node count must be positive");
    return n;
  }
  std::size_t checked(int i) const {
    if (i < 0 || i >= node_count()) {
      throw ConfigError("topology: node id " + std::to_string(i) +
                        " out of range");
    }
    return static_cast<std::size_t>(i);
  }

  std::vector<std::vector<int>> closed_;
};

// ---------------------------------------------------------------------------
// Combination weights

enum class CombinationRule { kUniform, kMetropolis };

inline const char* to_string(CombinationRule rule) {
  return rule == CombinationRule::kUniform ? "uniform" : "metropolis";
}

/// Column-stochastic combination coefficients c(k, i): the weight node i
/// places on neighbor k's intermediate estimate. c(k, i) = 0 outside the
/// closed neighborhood of i, entries are non-negative, and each column sums
/// to one.
class CombinationWeights {
 public:
  CombinationWeights(const NetworkTopology& topo, CombinationRule rule)
      : w_(RMatrix::Zero(topo.node_count(), topo.node_count())) {
    const int n = topo.node_count();
    for (int i = 0; i < n; ++i) {
      const auto& nb = topo.neighborhood(i);
      if (rule == CombinationRule::kUniform) {
        const double c = 1.0 / static_cast<double>(nb.size());
        for (int k : nb) w_(k, i) = c;
      } else {
        double off_sum = 0.0;
        for (int k : nb) {
          if (k == i) continue;
          w_(k, i) = 1.0 / static_cast<double>(
                               std::max(topo.degree(i), topo.degree(k)));
          off_sum += w_(k, i);
        }
        w_(i, i) = 1.0 - off_sum;
      }
    }
  }

  int node_count() const { return static_cast<int>(w_.cols()); }

  /// c(k, i): weight on node k's estimate in node i's combination.
  double weight(int k, int i) const { return w_(k, i); }

  const RMatrix& matrix() const { return w_; }

 private:
  RMatrix w_;
};

// ---------------------------------------------------------------------------
// Observation-noise second-order description

/// Second-order statistics of the per-node observation noises: covariance
/// R_i = E[n_i n_i^H] and pseudo-covariance U_i = E[n_i n_i^T] per node, plus
/// optional cross-node blocks R_ab = E[n_a n_b^H], U_ab = E[n_a n_b^T].
/// Missing cross blocks default to zero. Symmetry is enforced structurally:
/// R_ba = R_ab^H and U_ba = U_ab^T are derived, never stored twice.
class NoiseCorrelationSpec {
 public:
  NoiseCorrelationSpec() = default;
  explicit NoiseCorrelationSpec(int nodes)
      : r_(static_cast<std::size_t>(nodes)),
        u_(static_cast<std::size_t>(nodes)) {}

  int node_count() const { return static_cast<int>(r_.size()); }

  void set_node(int i, CMatrix r, CMatrix u) {
    check_node(i);
    require_finite(r, "noise R");
    require_finite(u, "noise U");
    require_hermitian(r, "noise R");
    if (u.rows() != r.rows() || u.cols() != r.cols()) {
      throw DimensionError("noise: U block shape differs from R");
    }
    if (max_abs(CMatrix(u - u.transpose())) > 1e-9 * max_abs(u)) {
      throw NumericalError("noise: U block must be complex-symmetric");
    }
    r_[static_cast<std::size_t>(i)] = std::move(r);
    u_[static_cast<std::size_t>(i)] = std::move(u);
  }

  void set_cross(int a, int b, CMatrix r_ab, CMatrix u_ab) {
    check_node(a);
    check_node(b);
    if (a == b) {
      throw ConfigError("noise: use set_node for diagonal blocks");
    }
    if (r_ab.rows() != obs_dim(a) || r_ab.cols() != obs_dim(b) ||
        u_ab.rows() != obs_dim(a) || u_ab.cols() != obs_dim(b)) {
      throw DimensionError("noise: cross block shape does not match nodes " +
                           std::to_string(a) + ", " + std::to_string(b));
    }
    if (a < b) {
      cross_r_[{a, b}] = std::move(r_ab);
      cross_u_[{a, b}] = std::move(u_ab);
    } else {
      cross_r_[{b, a}] = r_ab.adjoint();
      cross_u_[{b, a}] = u_ab.transpose();
    }
  }

  const CMatrix& node_r(int i) const {
    check_node(i);
    return r_[static_cast<std::size_t>(i)];
  }
  const CMatrix& node_u(int i) const {
    check_node(i);
    return u_[static_cast<std::size_t>(i)];
  }

  int obs_dim(int i) const {
    check_node(i);
    const auto& r = r_[static_cast<std::size_t>(i)];
    if (r.size() == 0) {
      throw ConfigError("noise: node " + std::to_string(i) +
                        " has no R block set");
    }
    return static_cast<int>(r.rows());
  }

  /// R_ab = E[n_a n_b^H]; derives the lower triangle from the stored upper.
  CMatrix r_block(int a, int b) const {
    if (a == b) return node_r(a);
    if (a < b) {
      const auto it = cross_r_.find({a, b});
      if (it != cross_r_.end()) return it->second;
      return CMatrix::Zero(obs_dim(a), obs_dim(b));
    }
    return r_block(b, a).adjoint();
  }

  /// U_ab = E[n_a n_b^T]; derives the lower triangle via U_ba = U_ab^T.
  CMatrix u_block(int a, int b) const {
    if (a == b) return node_u(a);
    if (a < b) {
      const auto it = cross_u_.find({a, b});
      if (it != cross_u_.end()) return it->second;
      return CMatrix::Zero(obs_dim(a), obs_dim(b));
    }
    return u_block(b, a).transpose();
  }

  bool has_cross() const { return !cross_r_.empty() || !cross_u_.empty(); }

  /// True when every pseudo-covariance block (nodal and cross) vanishes.
  bool is_proper() const {
    for (const auto& u : u_) {
      if (u.size() != 0 && max_abs(u) > 0.0) return false;
    }
    for (const auto& [key, u] : cross_u_) {
      if (max_abs(u) > 0.0) return false;
    }
    return true;
  }

 private:
  void check_node(int i) const {
    if (i < 0 || i >= node_count()) {
      throw ConfigError("noise: node id " + std::to_string(i) +
                        " out of range");
    }
  }

  std::vector<CMatrix> r_, u_;
  std::map<std::pair<int, int>, CMatrix> cross_r_, cross_u_;
};

// ---------------------------------------------------------------------------
// Neighborhood stacking

/// The collective observation system of one closed neighborhood: per-node
/// observation rows stacked in ascending node order, the matching stacked
/// noise blocks, and their conjugate-augmented forms.
struct NeighborhoodSystem {
  std::vector<int> nodes;  ///< closed neighborhood, ascending
  CMatrix h;               ///< stacked observation matrix (sum K_k) x L
  CMatrix b;               ///< stacked conjugate observation matrix
  CMatrix r;               ///< stacked noise covariance with cross blocks
  CMatrix u;               ///< stacked noise pseudo-covariance
  CMatrix h_aug;           ///< [[H, B], [conj B, conj H]]
  CMatrix r_aug;           ///< [[R, U], [conj U, conj R]]
  int stacked_dim = 0;     ///< sum of neighbor observation dims
};

/// Stacked noise blocks of one closed neighborhood (no observation
/// matrices): used when the observation Jacobians change every step but the
/// noise statistics do not.
struct StackedNoise {
  std::vector<int> nodes;    ///< closed neighborhood, ascending
  std::vector<int> offsets;  ///< row offset of each neighbor's block
  int total = 0;             ///< sum of neighbor observation dims
  CMatrix r;                 ///< stacked covariance with cross blocks
  CMatrix u;                 ///< stacked pseudo-covariance
  CMatrix r_aug;             ///< [[R, U], [conj U, conj R]]
};

inline StackedNoise stack_noise(const NoiseCorrelationSpec& noise,
                                const NetworkTopology& topo, int node) {
  if (noise.node_count() != topo.node_count()) {
    throw DimensionError("stack_noise: noise node count does not match topology");
  }
  StackedNoise out;
  out.nodes = topo.neighborhood(node);
  out.offsets.reserve(out.nodes.size());
  for (int k : out.nodes) {
    out.offsets.push_back(out.total);
    out.total += noise.obs_dim(k);
  }
  out.r.setZero(out.total, out.total);
  out.u.setZero(out.total, out.total);
  for (std::size_t a = 0; a < out.nodes.size(); ++a) {
    for (std::size_t c = 0; c < out.nodes.size(); ++c) {
      const int ka = out.nodes[a];
      const int kc = out.nodes[c];
      out.r.block(out.offsets[a], out.offsets[c], noise.obs_dim(ka),
                  noise.obs_dim(kc)) = noise.r_block(ka, kc);
      out.u.block(out.offsets[a], out.offsets[c], noise.obs_dim(ka),
                  noise.obs_dim(kc)) = noise.u_block(ka, kc);
    }
  }
  out.r_aug = augment_covariance(out.r, out.u);
  return out;
}

/// Builds the collective system for node i from per-node (H_k, B_k) and the
/// noise description. Stacking order is the canonical ascending-id order of
/// the closed neighborhood.
inline NeighborhoodSystem stack_neighborhood(const std::vector<CMatrix>& h,
                                             const std::vector<CMatrix>& b,
                                             const NoiseCorrelationSpec& noise,
                                             const NetworkTopology& topo,
                                             int node) {
  if (static_cast<int>(h.size()) != topo.node_count() ||
      static_cast<int>(b.size()) != topo.node_count() ||
      noise.node_count() != topo.node_count()) {
    throw DimensionError(
        "stack_neighborhood: per-node model count does not match topology");
  }
  NeighborhoodSystem sys;
  sys.nodes = topo.neighborhood(node);

  const int state_dim = static_cast<int>(h[static_cast<std::size_t>(
      sys.nodes.front())].cols());
  int total = 0;
  std::vector<int> offsets;
  offsets.reserve(sys.nodes.size());
  for (int k : sys.nodes) {
    const auto& hk = h[static_cast<std::size_t>(k)];
    const auto& bk = b[static_cast<std::size_t>(k)];
    if (hk.cols() != state_dim || bk.rows() != hk.rows() ||
        bk.cols() != hk.cols()) {
      throw DimensionError("stack_neighborhood: node " + std::to_string(k) +
                           " observation blocks have inconsistent shape");
    }
    if (static_cast<int>(hk.rows()) != noise.obs_dim(k)) {
      throw DimensionError("stack_neighborhood: node " + std::to_string(k) +
                           " noise dim does not match observation rows");
    }
    offsets.push_back(total);
    total += static_cast<int>(hk.rows());
  }
  sys.stacked_dim = total;

  sys.h.setZero(total, state_dim);
  sys.b.setZero(total, state_dim);
  sys.r.setZero(total, total);
  sys.u.setZero(total, total);
  for (std::size_t a = 0; a < sys.nodes.size(); ++a) {
    const int ka = sys.nodes[a];
    const auto& hk = h[static_cast<std::size_t>(ka)];
    sys.h.middleRows(offsets[a], hk.rows()) = hk;
    sys.b.middleRows(offsets[a], hk.rows()) = b[static_cast<std::size_t>(ka)];
    for (std::size_t c = 0; c < sys.nodes.size(); ++c) {
      const int kc = sys.nodes[c];
      sys.r.block(offsets[a], offsets[c], noise.obs_dim(ka),
                  noise.obs_dim(kc)) = noise.r_block(ka, kc);
      sys.u.block(offsets[a], offsets[c], noise.obs_dim(ka),
                  noise.obs_dim(kc)) = noise.u_block(ka, kc);
    }
  }
  sys.h_aug = augment_blocks(sys.h, sys.b);
  sys.r_aug = augment_covariance(sys.r, sys.u);
  return sys;
}

/// Concatenates per-node observations over the closed neighborhood of
/// `node`, ascending node order (must match stack_neighborhood).
inline CVector stack_observations(const std::vector<CVector>& y,
                                  const NetworkTopology& topo, int node) {
  if (static_cast<int>(y.size()) != topo.node_count()) {
    throw DimensionError(
        "stack_observations: observation count does not match topology");
  }
  const auto& nb = topo.neighborhood(node);
  Eigen::Index total = 0;
  for (int k : nb) total += y[static_cast<std::size_t>(k)].size();
  CVector out(total);
  Eigen::Index at = 0;
  for (int k : nb) {
    const auto& yk = y[static_cast<std::size_t>(k)];
    out.segment(at, yk.size()) = yk;
    at += yk.size();
  }
  return out;
}

/// Augmented collective observation [y; conj(y)] over the neighborhood.
inline CVector stack_observations_augmented(const std::vector<CVector>& y,
                                            const NetworkTopology& topo,
                                            int node) {
  const CVector base = stack_observations(y, topo, node);
  CVector out(2 * base.size());
  out.head(base.size()) = base;
  out.tail(base.size()) = base.conjugate();
  return out;
}

}  // namespace gridfreq
