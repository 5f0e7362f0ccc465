#include <catch2/catch_amalgamated.hpp>

#include <gridfreq/filters.hpp>
#include <gridfreq/rng.hpp>

#include <cmath>
#include <vector>

using namespace gridfreq;
using namespace std::complex_literals;

namespace {

NetworkTopology bench_graph() {
  return NetworkTopology(5, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}});
}

/// Scalar strictly linear model shared by the equivalence tests:
/// x_{n+1} = f x_n + w, y_k = x_n + v_k, per-node noise R_k = 0.1 + 0.05 k.
LinearModel scalar_model(int nodes, Complex f_coeff, double q,
                         double u_ratio = 0.0) {
  LinearModel m;
  m.f = CMatrix::Constant(1, 1, f_coeff);
  m.a = CMatrix::Zero(1, 1);
  m.q = CMatrix::Constant(1, 1, q);
  m.p = CMatrix::Zero(1, 1);
  m.obs_noise = NoiseCorrelationSpec(nodes);
  for (int k = 0; k < nodes; ++k) {
    CMatrix h(1, 1), b(1, 1), r(1, 1), u(1, 1);
    h << 1.0;
    b << 0.0;
    const double rk = 0.1 + 0.05 * k;
    r << rk;
    u << u_ratio * rk;
    m.h.push_back(h);
    m.b.push_back(b);
    m.obs_noise.set_node(k, r, u);
  }
  return m;
}

struct SimData {
  std::vector<std::vector<CVector>> y;  ///< [step][node]
  std::vector<Complex> truth;           ///< [step]
};

/// Simulates the scalar model: proper process noise of variance q, per-node
/// observation noise with covariance R_k and real pseudo-covariance U_k
/// realized as independent real/imag parts of variance (R+U)/2 and (R-U)/2.
SimData simulate_scalar(const LinearModel& m, int steps, std::uint64_t seed) {
  SimData data;
  data.y.resize(static_cast<std::size_t>(steps));
  data.truth.resize(static_cast<std::size_t>(steps));
  const Complex f = m.f(0, 0);
  const double q = m.q(0, 0).real();
  Complex x = 1.0;
  for (int n = 0; n < steps; ++n) {
    Rng wgen(derive_key(seed, 1, 0, static_cast<std::uint64_t>(n)));
    const auto [w_re, w_im] = wgen.gaussian_pair();
    x = f * x + std::sqrt(q / 2.0) * Complex(w_re, w_im);
    data.truth[static_cast<std::size_t>(n)] = x;
    auto& row = data.y[static_cast<std::size_t>(n)];
    row.resize(static_cast<std::size_t>(m.node_count()));
    for (int k = 0; k < m.node_count(); ++k) {
      const double rk = m.obs_noise.node_r(k)(0, 0).real();
      const double uk = m.obs_noise.node_u(k)(0, 0).real();
      Rng vgen(derive_key(seed, 2, static_cast<std::uint64_t>(k + 1),
                          static_cast<std::uint64_t>(n)));
      const auto [g_re, g_im] = vgen.gaussian_pair();
      const Complex v(std::sqrt((rk + uk) / 2.0) * g_re,
                      std::sqrt((rk - uk) / 2.0) * g_im);
      row[static_cast<std::size_t>(k)] = CVector::Constant(1, x + v);
    }
  }
  return data;
}

double mse_against_truth(const FilterRun& run, const SimData& data,
                         int from_step) {
  double acc = 0.0;
  long count = 0;
  for (const auto& traj : run.estimates) {
    for (std::size_t n = static_cast<std::size_t>(from_step); n < traj.size();
         ++n) {
      acc += std::norm(traj[n][0] - data.truth[n]);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

/// Wraps a widely linear model as a NonlinearModel with exact Jacobians, so
/// the extended filters must reproduce the linear filters on it.
NonlinearModel wrap_linear(const LinearModel& lm) {
  NonlinearModel m;
  m.state_dim = lm.state_dim();
  m.f = [f = lm.f, a = lm.a](const CVector& x) {
    return CVector(f * x + a * x.conjugate());
  };
  m.f_jac_x = [f = lm.f](const CVector&) { return f; };
  m.f_jac_xc = [a = lm.a](const CVector&) { return a; };
  for (int k = 0; k < lm.node_count(); ++k) {
    NodeObservationModel ob;
    ob.obs_dim = static_cast<int>(lm.h[static_cast<std::size_t>(k)].rows());
    ob.h = [h = lm.h[static_cast<std::size_t>(k)],
            b = lm.b[static_cast<std::size_t>(k)]](const CVector& x) {
      return CVector(h * x + b * x.conjugate());
    };
    ob.h_jac_x = [h = lm.h[static_cast<std::size_t>(k)]](const CVector&) {
      return h;
    };
    ob.h_jac_xc = [b = lm.b[static_cast<std::size_t>(k)]](const CVector&) {
      return b;
    };
    m.obs.push_back(ob);
  }
  m.q = lm.q;
  m.p = lm.p;
  m.obs_noise = lm.obs_noise;
  return m;
}

}  // namespace

TEST_CASE("single-node scalar filter reproduces the textbook recursion") {
  // f = 1, h = 1, q = 0, r = 1, m0 = 1, x0 = 0, observations all equal 1:
  // step 1: S = 1 + 1 = 2, G = 1/2, x = 1/2,   M = 1/2
  // step 2: S = 3/2,       G = 1/3, x = 2/3,   M = 1/3
  LinearModel m = scalar_model(1, 1.0, 0.0);
  CMatrix r(1, 1), u(1, 1);
  r << 1.0;
  u << 0.0;
  m.obs_noise.set_node(0, r, u);

  const NetworkTopology topo = NetworkTopology::edgeless(1);
  const CombinationWeights w(topo, CombinationRule::kUniform);
  NodeStates states = initial_states(CVector::Zero(1), 1.0, 1, false);
  const std::vector<CVector> y{CVector::Constant(1, 1.0)};

  FilterDiagnostics diag;
  dckf_step(states, m, topo, w, y, &diag);
  CHECK(states[0].x[0] == 0.5 + 0.0i);
  CHECK(states[0].m(0, 0) == 0.5 + 0.0i);
  CHECK(diag.steps == 1);

  dckf_step(states, m, topo, w, y, &diag);
  CHECK(std::abs(states[0].x[0] - Complex(2.0 / 3.0)) < 1e-15);
  CHECK(std::abs(states[0].m(0, 0) - Complex(1.0 / 3.0)) < 1e-15);

  // The augmented filter on the same (proper) problem gives the same answer
  // in the top half and keeps the mirror exactly.
  NodeStates aug = initial_states(CVector::Zero(1), 1.0, 1, true);
  dackf_step(aug, m, topo, w, y);
  CHECK(std::abs(aug[0].x[0] - (0.5 + 0.0i)) < 1e-15);
  CHECK(mirror_residual(aug[0].x) == 0.0);
}

TEST_CASE("augmented filter equals the strict filter on proper models") {
  const LinearModel m = scalar_model(5, Complex(0.95) * std::exp(0.3i), 0.02);
  const NetworkTopology topo = bench_graph();
  const CombinationWeights w(topo, CombinationRule::kUniform);
  const SimData data = simulate_scalar(m, 200, 99);

  const FilterRun strict =
      run_filter(LinearAlgorithm::kDckf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, false));
  const FilterRun aug =
      run_filter(LinearAlgorithm::kDackf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));

  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int n = 0; n < 200; ++n) {
      worst = std::max(
          worst,
          std::abs(strict.estimates[static_cast<std::size_t>(i)]
                                   [static_cast<std::size_t>(n)][0] -
                   aug.estimates[static_cast<std::size_t>(i)]
                                [static_cast<std::size_t>(n)][0]));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("information form equals the stacked augmented form") {
  // Cross-node-uncorrelated noise, improper measurement channels (B != 0)
  // to make the augmented blocks non-trivial.
  LinearModel m = scalar_model(5, Complex(0.9) * std::exp(0.2i), 0.01);
  for (int k = 0; k < 5; ++k) {
    m.b[static_cast<std::size_t>(k)](0, 0) = 0.2 + 0.1i;
  }
  const NetworkTopology topo = bench_graph();
  const CombinationWeights w(topo, CombinationRule::kMetropolis);
  const SimData data = simulate_scalar(m, 150, 1234);

  const FilterRun stacked =
      run_filter(LinearAlgorithm::kDackf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));
  const FilterRun info =
      run_filter(LinearAlgorithm::kDackfInfo, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));

  double worst = 0.0;
  double scale = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int n = 0; n < 150; ++n) {
      const Complex a = stacked.estimates[static_cast<std::size_t>(i)]
                                         [static_cast<std::size_t>(n)][0];
      const Complex b = info.estimates[static_cast<std::size_t>(i)]
                                      [static_cast<std::size_t>(n)][0];
      worst = std::max(worst, std::abs(a - b));
      scale = std::max(scale, std::abs(a));
    }
  }
  CHECK(worst <= 1e-8 * std::max(scale, 1.0));

  // Final covariances agree as well.
  for (int i = 0; i < 5; ++i) {
    CHECK(max_abs(CMatrix(stacked.final_states[static_cast<std::size_t>(i)].m -
                          info.final_states[static_cast<std::size_t>(i)].m)) <
          1e-9);
  }
}

TEST_CASE("widely linear filter beats the strict filter on improper noise") {
  // Same strictly linear dynamics; observation noise strongly improper
  // (U = 0.8 R). The strict filter models only R and pays for it.
  const int trials = 60;
  const int steps = 120;
  const NetworkTopology topo = bench_graph();
  const CombinationWeights w(topo, CombinationRule::kUniform);
  const LinearModel m = scalar_model(5, Complex(0.95) * std::exp(0.3i), 0.02,
                                     /*u_ratio=*/0.8);

  double mse_strict = 0.0, mse_aug = 0.0;
  for (int t = 0; t < trials; ++t) {
    const SimData data =
        simulate_scalar(m, steps, derive_key(777, static_cast<std::uint64_t>(t)));
    mse_strict +=
        mse_against_truth(run_filter(LinearAlgorithm::kDckf, m, topo, w, data.y,
                                     initial_states(CVector::Zero(1), 1.0, 5,
                                                    false)),
                          data, steps / 2);
    mse_aug +=
        mse_against_truth(run_filter(LinearAlgorithm::kDackf, m, topo, w,
                                     data.y,
                                     initial_states(CVector::Zero(1), 1.0, 5,
                                                    true)),
                          data, steps / 2);
  }
  CHECK(mse_aug < 0.9 * mse_strict);
}

TEST_CASE("consensus is preserved when every node sees the same problem") {
  // Identical noise levels on a fully connected graph: all local updates
  // coincide, so diffusion must not move the estimates (column sums are 1).
  LinearModel m = scalar_model(3, Complex(0.9), 0.01);
  CMatrix r(1, 1), u(1, 1);
  r << 0.25;
  u << 0.0;
  for (int k = 0; k < 3; ++k) m.obs_noise.set_node(k, r, u);

  const NetworkTopology topo = NetworkTopology::fully_connected(3);
  const CombinationWeights w(topo, CombinationRule::kUniform);
  NodeStates states = initial_states(CVector::Zero(1), 1.0, 3, false);
  const CVector obs = CVector::Constant(1, 1.0 + 0.5i);
  const std::vector<CVector> y{obs, obs, obs};

  for (int n = 0; n < 10; ++n) dckf_step(states, m, topo, w, y);
  CHECK(std::abs(states[0].x[0] - states[1].x[0]) < 1e-14);
  CHECK(std::abs(states[1].x[0] - states[2].x[0]) < 1e-14);
}

TEST_CASE("covariances stay Hermitian and PSD through long runs") {
  const LinearModel m = scalar_model(5, Complex(0.97) * std::exp(0.1i), 0.05,
                                     /*u_ratio=*/0.5);
  const NetworkTopology topo = bench_graph();
  const CombinationWeights w(topo, CombinationRule::kUniform);
  const SimData data = simulate_scalar(m, 200, 5150);

  const FilterRun run =
      run_filter(LinearAlgorithm::kDackf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));
  for (const auto& st : run.final_states) {
    CHECK(hermitian_residual(st.m) <= 1e-10 * std::max(max_abs(st.m), 1e-30));
    const Eigen::SelfAdjointEigenSolver<CMatrix> eig(st.m);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    CHECK(mirror_residual(st.x) == 0.0);
  }
  CHECK(run.diagnostics.steps == 200);
}

TEST_CASE("extended filters reduce to the linear filters on linear models") {
  LinearModel lm = scalar_model(5, Complex(0.93) * std::exp(0.25i), 0.02);
  lm.a(0, 0) = 0.1 - 0.05i;  // widely linear dynamics
  for (int k = 0; k < 5; ++k) {
    lm.b[static_cast<std::size_t>(k)](0, 0) = 0.15i;
  }
  const NonlinearModel nm = wrap_linear(lm);
  const NetworkTopology topo = bench_graph();
  const CombinationWeights w(topo, CombinationRule::kUniform);
  const SimData data = simulate_scalar(lm, 100, 31337);

  const FilterRun aug =
      run_filter(LinearAlgorithm::kDackf, lm, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));
  const FilterRun ext =
      run_filter(NonlinearAlgorithm::kDacekf, nm, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int n = 0; n < 100; ++n) {
      worst = std::max(
          worst, std::abs(aug.estimates[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(n)][0] -
                          ext.estimates[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(n)][0]));
    }
  }
  CHECK(worst < 1e-9);

  // Strict EKF against strict linear filter on the strictly linear variant.
  const LinearModel strict = scalar_model(5, Complex(0.93) * std::exp(0.25i),
                                          0.02);
  const NonlinearModel strict_nm = wrap_linear(strict);
  const SimData data2 = simulate_scalar(strict, 100, 31338);
  const FilterRun lin_run =
      run_filter(LinearAlgorithm::kDckf, strict, topo, w, data2.y,
                 initial_states(CVector::Zero(1), 1.0, 5, false));
  const FilterRun ekf_run =
      run_filter(NonlinearAlgorithm::kDcekf, strict_nm, topo, w, data2.y,
                 initial_states(CVector::Zero(1), 1.0, 5, false));
  double worst2 = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int n = 0; n < 100; ++n) {
      worst2 = std::max(
          worst2, std::abs(lin_run.estimates[static_cast<std::size_t>(i)]
                                            [static_cast<std::size_t>(n)][0] -
                           ekf_run.estimates[static_cast<std::size_t>(i)]
                                            [static_cast<std::size_t>(n)][0]));
    }
  }
  CHECK(worst2 < 1e-10);
}

TEST_CASE("runs are bit-reproducible") {
  const LinearModel m = scalar_model(5, Complex(0.95) * std::exp(0.3i), 0.02);
  const NetworkTopology topo = bench_graph();
  const CombinationWeights w(topo, CombinationRule::kUniform);
  const SimData data = simulate_scalar(m, 50, 4242);

  const FilterRun a =
      run_filter(LinearAlgorithm::kDackf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));
  const FilterRun b =
      run_filter(LinearAlgorithm::kDackf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 5, true));
  for (int i = 0; i < 5; ++i) {
    for (int n = 0; n < 50; ++n) {
      const Complex va = a.estimates[static_cast<std::size_t>(i)]
                                    [static_cast<std::size_t>(n)][0];
      const Complex vb = b.estimates[static_cast<std::size_t>(i)]
                                    [static_cast<std::size_t>(n)][0];
      REQUIRE(va.real() == vb.real());
      REQUIRE(va.imag() == vb.imag());
    }
  }
}

TEST_CASE("run_filter matches a manual step loop") {
  const LinearModel m = scalar_model(3, Complex(0.9), 0.01);
  const NetworkTopology topo(3, {{0, 1}, {1, 2}});
  const CombinationWeights w(topo, CombinationRule::kUniform);
  const SimData data = simulate_scalar(m, 30, 11);

  const FilterRun run =
      run_filter(LinearAlgorithm::kDckf, m, topo, w, data.y,
                 initial_states(CVector::Zero(1), 1.0, 3, false));

  NodeStates manual = initial_states(CVector::Zero(1), 1.0, 3, false);
  const DiffusionCkf stepper(m, topo, w);
  for (int n = 0; n < 30; ++n) {
    stepper.step(manual, data.y[static_cast<std::size_t>(n)]);
    for (int i = 0; i < 3; ++i) {
      const Complex expect = manual[static_cast<std::size_t>(i)].x[0];
      const Complex got = run.estimates[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(n)][0];
      REQUIRE(got == expect);
    }
  }
}

TEST_CASE("configuration errors are rejected") {
  LinearModel wl = scalar_model(3, Complex(0.9), 0.01);
  wl.a(0, 0) = 0.3;
  const NetworkTopology topo(3, {{0, 1}, {1, 2}});
  const CombinationWeights w(topo, CombinationRule::kUniform);
  CHECK_THROWS_AS(DiffusionCkf(wl, topo, w), ConfigError);

  LinearModel cross = scalar_model(3, Complex(0.9), 0.01);
  CMatrix c01(1, 1);
  c01 << 0.05;
  cross.obs_noise.set_cross(0, 1, c01, CMatrix::Zero(1, 1));
  CHECK_THROWS_AS(DiffusionAckfInfo(cross, topo, w), ConfigError);
  // The stacked form accepts cross-correlated noise.
  CHECK_NOTHROW(DiffusionAckf(cross, topo, w));

  const LinearModel m = scalar_model(3, Complex(0.9), 0.01);
  const NetworkTopology wrong_topo(2, {{0, 1}});
  const CombinationWeights wrong_w(wrong_topo, CombinationRule::kUniform);
  CHECK_THROWS_AS(DiffusionCkf(m, wrong_topo, wrong_w), DimensionError);

  // Observation shape mismatches surface as DimensionError at step time.
  const DiffusionCkf stepper(m, topo, w);
  NodeStates states = initial_states(CVector::Zero(1), 1.0, 3, false);
  std::vector<CVector> bad_y{CVector::Zero(1), CVector::Zero(2),
                             CVector::Zero(1)};
  CHECK_THROWS_AS(stepper.step(states, bad_y), DimensionError);
  std::vector<CVector> short_y{CVector::Zero(1)};
  CHECK_THROWS_AS(stepper.step(states, short_y), DimensionError);

  NodeStates bad_states = initial_states(CVector::Zero(2), 1.0, 3, false);
  std::vector<CVector> y{CVector::Zero(1), CVector::Zero(1), CVector::Zero(1)};
  CHECK_THROWS_AS(stepper.step(bad_states, y), DimensionError);
}

TEST_CASE("initial_states builds augmented and plain starts") {
  CVector x0(2);
  x0 << 1.0 + 1.0i, -2.0i;
  const NodeStates plain = initial_states(x0, 0.5, 3, false);
  REQUIRE(plain.size() == 3);
  CHECK(plain[2].x.size() == 2);
  CHECK(plain[0].m(0, 0) == 0.5 + 0.0i);

  const NodeStates aug = initial_states(x0, 2.0, 2, true);
  CHECK(aug[0].x.size() == 4);
  CHECK(aug[0].x[2] == std::conj(x0[0]));
  CHECK(aug[1].m.rows() == 4);
  CHECK(aug[1].m(3, 3) == 2.0 + 0.0i);

  const NodeStates per_node =
      initial_states(std::vector<CVector>{x0, 2.0 * x0}, 1.0, true);
  CHECK(per_node[1].x[0] == 2.0 * x0[0]);
}
