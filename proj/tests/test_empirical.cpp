/*
 * Copyright 2026 The ntkc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>

#include "ntkc/decomposition.hpp"
#include "ntkc/empirical.hpp"
#include "ntkc/errors.hpp"
#include "ntkc/rng.hpp"
#include "test_util.hpp"

using namespace ntkc;
using ntkc::testing::rel_diff;

namespace {

const Dims kBlobDims{2, 6, 8};

Dataset small_blobs(std::uint64_t seed = 3) { return make_blobs(kBlobDims, 3, 3.0, 0.5, seed); }

TinyNet small_net(std::uint64_t seed = 5) { return TinyNet({3, 10, 8, 2}, Activation::Tanh, seed); }

double fd_coordinate(const TinyNet& net, std::span<const double> x, std::size_t k, std::size_t p, double h) {
  TinyNet probe = net;
  Vector params = net.parameters();
  const double orig = params[p];
  params[p] = orig + h;
  probe.set_parameters(params);
  const double up = probe.forward(x)[k];
  params[p] = orig - h;
  probe.set_parameters(params);
  const double down = probe.forward(x)[k];
  return (up - down) / (2.0 * h);
}

// Kernel container with Θ_{k,s} = δ_ks·K for given block kernels.
EmpiricalKernels synthetic_kernels(const Matrix& k, const Matrix& kh, std::size_t c, std::size_t n) {
  EmpiricalKernels out;
  out.outputs = c;
  out.features = n;
  out.samples = k.rows();
  const std::size_t ns = k.rows();
  out.theta.assign(c * c * ns * ns, 0.0);
  out.theta_h.assign(n * n * ns * ns, 0.0);
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t j = 0; j < ns; ++j) out.theta[((a * c + a) * ns + i) * ns + j] = k(i, j);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t j = 0; j < ns; ++j) out.theta_h[((a * n + a) * ns + i) * ns + j] = kh(i, j);
  out.traced_theta = k * static_cast<double>(c);
  out.traced_theta_h = kh * static_cast<double>(n);
  return out;
}

}  // namespace

TEST_CASE("blob datasets") {
  const Dataset a = make_blobs({2, 50, 8}, 4, 3.0, 0.5, 17);
  const Dataset b = make_blobs({2, 50, 8}, 4, 3.0, 0.5, 17);
  CHECK(a.x == b.x);
  CHECK(a.labels == build_labels({2, 50, 8}));
  CHECK(a.x.rows() == 4);
  CHECK(a.x.cols() == 100);
  CHECK_FALSE(a.x == make_blobs({2, 50, 8}, 4, 3.0, 0.5, 18).x);

  const Dataset z = make_blobs({3, 4, 8}, 3, 3.0, 0.0, 1);
  for (std::size_t i = 0; i < 12; ++i) CHECK(z.x.col(i) == z.x.col(4 * (i / 4)));
}

TEST_CASE("network shape and forward pass") {
  const TinyNet net = small_net();
  CHECK(net.input_dim() == 3);
  CHECK(net.feature_dim() == 8);
  CHECK(net.output_dim() == 2);
  CHECK(net.parameter_count() == 3 * 10 + 10 + 10 * 8 + 8 + 8 * 2 + 2);
  CHECK(net.feature_parameter_count() == 3 * 10 + 10 + 10 * 8 + 8);
  CHECK(all_finite(net.forward(Vector{1.0, -2.0, 0.5})));
  for (const auto& layer : net.layers()) CHECK(norm2(layer.bias) == 0.0);
  CHECK_THROWS_AS(TinyNet({3, 2}, Activation::Tanh, 1), InvalidArgument);
  TinyNet copy = net;
  CHECK_THROWS_AS(copy.set_parameters(Vector(3, 0.0)), DimensionError);
}

TEST_CASE("last-layer gradients are the features") {
  // The readout is linear, so ∂f_k/∂W_{k,:} = h(x), ∂f_k/∂b_k = 1 and other rows vanish.
  const TinyNet net = small_net();
  const Vector x{0.3, -1.1, 0.8};
  const Vector h = net.features(x);
  const std::size_t off = net.feature_parameter_count();
  for (std::size_t k = 0; k < 2; ++k) {
    const Vector g = net_grad(net, x, k);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 8; ++j) CHECK(g[off + r * 8 + j] == (r == k ? h[j] : 0.0));
    CHECK(g[off + 16 + k] == 1.0);
    CHECK(g[off + 16 + (1 - k)] == 0.0);
  }
}

TEST_CASE("gradients match central finite differences") {
  for (Activation act : {Activation::Tanh, Activation::Relu}) {
    const TinyNet net({3, 10, 8, 2}, act, 9);
    CounterRng rng(10);
    const Vector x = rng.normal_matrix(3, 1).col(0);
    const std::size_t p = net.parameter_count();
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t coord = static_cast<std::size_t>(rng.uniform() * static_cast<double>(p)) % p;
      const std::size_t k = static_cast<std::size_t>(trial % 2);
      const double g = net_grad(net, x, k)[coord];
      const double fd = fd_coordinate(net, x, k, coord, 1e-5);
      CHECK(std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-4}) <= 1e-5);
    }
  }
}

TEST_CASE("feature gradients cover only the feature-scope prefix") {
  const TinyNet net = small_net();
  const Vector x{0.5, 0.2, -0.4};
  for (std::size_t s = 0; s < 8; ++s) {
    const Vector g = net.feature_gradient(x, s);
    REQUIRE(g.size() == net.feature_parameter_count());
    // h_s is the post-activation of the penultimate layer; check a few coordinates by FD.
    for (std::size_t coord : {0ul, 7ul, 45ul, g.size() - 1}) {
      TinyNet probe = net;
      Vector p = net.parameters();
      p[coord] += 1e-6;
      probe.set_parameters(p);
      const double up = probe.features(x)[s];
      p[coord] -= 2e-6;
      probe.set_parameters(p);
      const double fd = (up - probe.features(x)[s]) / 2e-6;
      CHECK(std::abs(g[coord] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("seeded gradient is the weighted sum of output gradients") {
  const TinyNet net = small_net();
  const Vector x{0.1, 0.9, -0.3};
  const Vector seed{0.7, -1.3};
  const Vector g = net.seeded_gradient(x, seed);
  const Vector g0 = net_grad(net, x, 0), g1 = net_grad(net, x, 1);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(0.7 * g0[i] - 1.3 * g1[i]).epsilon(1e-12));
}

TEST_CASE("empirical kernels against a Jacobian Gram oracle") {
  const TinyNet net = small_net();
  const Dataset data = small_blobs();
  const EmpiricalKernels ker = empirical_ntk(net, data);
  const std::size_t n = data.dims.samples();
  REQUIRE(ker.has_full());
  // Independent construction: rows ∇f_k(x_i) from net_grad, Θ_{k,s}(i,j) by dot products.
  std::vector<Vector> grads(2 * n);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < n; ++i) grads[k * n + i] = net_grad(net, data.x.col(i), k);
  Matrix traced(n, n);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double v = dot(grads[k * n + i], grads[s * n + j]);
          CHECK(ker.theta_at(k, s, i, j) == doctest::Approx(v).epsilon(1e-12));
          CHECK(ker.theta_at(k, s, i, j) == ker.theta_at(s, k, j, i));
          if (k == s) traced(i, j) += v;
        }
  CHECK(rel_diff(ker.traced_theta, traced) < 1e-12);

  Matrix traced_h(n, n);
  for (std::size_t s = 0; s < 8; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      const Vector gi = net.feature_gradient(data.x.col(i), s);
      for (std::size_t j = 0; j < n; ++j) traced_h(i, j) += dot(gi, net.feature_gradient(data.x.col(j), s));
    }
  CHECK(rel_diff(ker.traced_theta_h, traced_h) < 1e-12);
  for (const Matrix* m : {&ker.traced_theta, &ker.traced_theta_h}) {
    CHECK(asymmetry(*m) <= 1e-12);
    CHECK(sym_eig(*m).values.back() >= -1e-8 * trace(*m));
  }

  const EmpiricalKernels lite = empirical_ntk(net, data, false);
  CHECK_FALSE(lite.has_full());
  CHECK(rel_diff(lite.traced_theta, ker.traced_theta) < 1e-12);
  CHECK(rel_diff(lite.traced_theta_h, ker.traced_theta_h) < 1e-12);
}

TEST_CASE("kernel memory budget is enforced") {
  const TinyNet big({4, 600, 600, 16, 2}, Activation::Tanh, 1);
  const Dataset data = make_blobs({2, 12, 16}, 4, 3.0, 1.0, 1);
  CHECK_THROWS_AS(empirical_ntk(big, data), InvalidArgument);
}

TEST_CASE("block statistics on synthetic kernels") {
  const Dims d{2, 3, 4};
  const Matrix y = build_labels(d);
  const Matrix k = build_block_matrix({3, 2, 1}, d);
  Dataset data{Matrix(1, 6), y, d};
  const BlockStats st = block_stats(synthetic_kernels(k, k * 0.5, 2, 4), data);
  CHECK(st.offdiag_ratio_theta == 0.0);
  CHECK(st.offdiag_ratio_theta_h == 0.0);
  CHECK(st.fit_theta.residual < 1e-14);
  CHECK(st.fit_theta_h.spec.lambda_diag == doctest::Approx(4 * 3 * 0.5));
  CHECK(st.alignment_theta == doctest::Approx(kernel_alignment(k, y)).epsilon(1e-14));
  CHECK(st.theta_norms(0, 1) == 0.0);
  CHECK(st.theta_norms(0, 0) == doctest::Approx(frobenius_norm(k)));

  const Matrix yy = transpose_times(y, y);
  const BlockStats ideal = block_stats(synthetic_kernels(yy, yy, 2, 4), data);
  CHECK(ideal.alignment_theta == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ideal.alignment_theta_h == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("full-batch gradient descent") {
  const Dataset data = small_blobs();
  SUBCASE("eta = 0 leaves parameters unchanged") {
    TinyNet net = small_net();
    const Vector before = net.parameters();
    TrainingOptions opts;
    opts.eta = 0.0;
    opts.epochs = 5;
    train_gd_mse(net, data, opts);
    CHECK(net.parameters() == before);
  }
  SUBCASE("small step decreases the loss monotonically") {
    TinyNet net = small_net();
    TrainingOptions opts;
    opts.eta = 1e-3;
    opts.epochs = 200;
    opts.keep_final_full_kernels = false;
    const TrainingLog log = train_gd_mse(net, data, opts);
    REQUIRE(log.loss.size() == 201);
    for (std::size_t i = 1; i < log.loss.size(); ++i) CHECK(log.loss[i] <= log.loss[i - 1]);
    CHECK(log.snapshots.size() == 3);
    CHECK(log.snapshots.back().epoch == 200);
    CHECK_FALSE(log.final_kernels);
    CHECK(log.loss.back() == doctest::Approx(mse_loss(net, data)).epsilon(1e-12));
  }
  SUBCASE("separable blobs reach full training accuracy") {
    TinyNet net = small_net();
    TrainingOptions opts;
    opts.eta = 0.01;
    opts.epochs = 2000;
    const TrainingLog log = train_gd_mse(net, data, opts);
    CHECK(log.accuracy.back() == 1.0);
    CHECK(training_accuracy(net, data) == 1.0);
    REQUIRE(log.final_kernels);
    CHECK(log.final_kernels->has_full());
    const NcReport nc = network_nc_report(net, data, small_blobs(99));
    CHECK(nc.nc4 >= 0.0);
    CHECK(nc.nc4 <= 1.0);
  }
  SUBCASE("divergent step raises") {
    TinyNet net = small_net();
    TrainingOptions opts;
    opts.eta = 50.0;
    opts.epochs = 2000;
    CHECK_THROWS_AS(train_gd_mse(net, data, opts), DivergenceError);
  }
}
