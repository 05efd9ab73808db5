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

#include <cmath>

#include "ntkc/block_kernel.hpp"
#include "ntkc/decomposition.hpp"
#include "ntkc/dynamics.hpp"
#include "ntkc/errors.hpp"
#include "ntkc/invariants.hpp"
#include "ntkc/rng.hpp"
#include "test_util.hpp"

using namespace ntkc;
using ntkc::testing::rel_diff;

namespace {

const Dims kSmall{2, 2, 3};
const Dims kMid{3, 4, 8};
const BlockKernelSpec kKappa{3.0, 2.0, 1.0};

// Residual with the given norms in the global, class and single components.
Matrix residual_with_components(const Dims& d, double g, double c, double s, std::uint64_t seed) {
  CounterRng rng(seed);
  const Matrix y = build_labels(d);
  const Matrix r = rng.normal_matrix(d.classes, d.samples());
  const ResidualSet rs = residual_components(r, y, d);
  Matrix pg = rs.r_global;
  Matrix pc = rs.r_class - rs.r_global;
  Matrix ps = rs.r - rs.r_class;
  Matrix out = pg * (g / frobenius_norm(pg));
  out.add_scaled(c / frobenius_norm(pc), pc);
  out.add_scaled(s / frobenius_norm(ps), ps);
  return out;
}

double state_distance(const DecomposedState& a, const DecomposedState& b) {
  double out = frobenius_norm(a.h1 - b.h1) + frobenius_norm(a.h2 - b.h2) + frobenius_norm(a.w - b.w);
  for (std::size_t i = 0; i < a.b.size(); ++i) out += std::abs(a.b[i] - b.b[i]);
  return out;
}

}  // namespace

TEST_CASE("residual GD step examples") {
  const Matrix k = build_block_matrix(kKappa, kSmall);
  const Matrix r = Matrix::ones(1, 4);
  CHECK(max_abs(residual_gd_step(r, k, 0.1) - r * 0.3) < 1e-15);
  CHECK(frobenius_norm(residual_gd_step(Matrix(2, 4), k, 0.1)) == 0.0);
  const Matrix r2{{1, -2, 3, 0.5}};
  CHECK(residual_gd_step(r2, k, 0.0) == r2);
  CHECK(residual_gd_stable(k, 0.28));
  CHECK_FALSE(residual_gd_stable(k, 0.3));
  CHECK_THROWS_AS(residual_gd_step(r2, Matrix::identity(3), 0.1), DimensionError);
}

TEST_CASE("residual rates match 1 - eta*lambda") {
  const Matrix k = build_block_matrix(kKappa, kSmall);
  const Matrix y = build_labels(kSmall);
  CounterRng rng(1);
  const auto traj = residual_gd_trajectory(rng.normal_matrix(2, 4), k, 0.05, 40);
  const ResidualRates rates = residual_rates(traj, y, kSmall);
  REQUIRE(rates.global);
  REQUIRE(rates.cls);
  REQUIRE(rates.single);
  CHECK(std::abs(*rates.global - 0.65) <= 1e-10);
  CHECK(std::abs(*rates.cls - 0.85) <= 1e-10);
  CHECK(std::abs(*rates.single - 0.95) <= 1e-10);
  CHECK(rates.max_log_deviation < 1e-10);

  SUBCASE("class-contrast start shows only the class factor") {
    const auto t = residual_gd_trajectory(Matrix{{1, 1, -1, -1}}, k, 0.05, 20);
    const ResidualRates r = residual_rates(t, Matrix{{1, 1, 0, 0}, {0, 0, 1, 1}}, kSmall);
    CHECK_FALSE(r.global);
    CHECK_FALSE(r.single);
    REQUIRE(r.cls);
    CHECK(*r.cls == doctest::Approx(0.85).epsilon(1e-12));
  }
  SUBCASE("small eta drives every factor to one") {
    const ResidualRates r = residual_rates(residual_gd_trajectory(rng.normal_matrix(2, 4), k, 1e-7, 5), y, kSmall);
    CHECK(*r.global == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(*r.cls == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(*r.single == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(residual_rates({traj[0], traj[1]}, y, kSmall), InvalidArgument);
}

TEST_CASE("property: the global residual converges first, then the class part") {
  const Dims d{3, 3, 4};
  const Matrix y = build_labels(d);
  const Matrix k = build_block_matrix({3.0, 2.0, 0.5}, d);
  const auto traj = residual_gd_trajectory(residual_with_components(d, 1.0, 1.0, 1.0, 3), k, 0.05, 400);
  for (double threshold : {0.5, 1e-2, 1e-4}) {
    std::size_t tg = traj.size(), tc = traj.size(), ts = traj.size();
    for (std::size_t t = traj.size(); t-- > 0;) {
      const ResidualSet rs = residual_components(traj[t], y, d);
      if (frobenius_norm(rs.r_global) <= threshold) tg = t;
      if (frobenius_norm(rs.r_class - rs.r_global) <= threshold) tc = t;
      if (frobenius_norm(rs.r - rs.r_class) <= threshold) ts = t;
    }
    CHECK(tg <= tc);
    CHECK(tc <= ts);
    CHECK(ts < traj.size());
  }
}

TEST_CASE("rhs_full examples") {
  const Matrix y = build_labels(kSmall);
  CounterRng rng(2);
  const FullState s{rng.normal_matrix(3, 4), Matrix(2, 3), Vector(2, 0.0)};
  const FullState d = rhs_full(s, kKappa, y, kSmall);
  CHECK(frobenius_norm(d.h) == 0.0);
  CHECK(max_abs(d.w - times_transpose(y, s.h)) < 1e-14);
  CHECK(d.b == Vector{2.0, 2.0});

  // A global minimum is a fixed point: fit H, W so that W·H + b·1ᵀ = Y.
  const Matrix w{{1, 0, 0}, {0, 1, 0}};
  const Matrix h{{1, 1, 0, 0}, {0, 0, 1, 1}, {5, -3, 2, 7}};
  const FullState opt{h, w, Vector{0.0, 0.0}};
  const FullState z = rhs_full(opt, kKappa, y, kSmall);
  CHECK(frobenius_norm(z.h) + frobenius_norm(z.w) + norm2(z.b) == 0.0);

  // Vanishing block terms give the unconstrained-features form scaled by κ_d.
  const FullState r{rng.normal_matrix(3, 4), rng.normal_matrix(2, 3), Vector{0.3, -0.2}};
  const FullState u = rhs_full(r, {2.5, 0.0, 0.0}, y, kSmall);
  CHECK(max_abs(u.h - transpose_times(r.w, full_residual(r, y)) * -2.5) < 1e-14);
}

TEST_CASE("rhs_decomposed examples") {
  const DerivedConstants consts = derived_constants(kKappa, kSmall);
  CounterRng rng(3);
  DecomposedState s{rng.normal_matrix(3, 2), rng.normal_matrix(3, 2), Matrix(2, 3), Vector(2, 0.0)};
  const DecomposedState d = rhs_decomposed(s, consts, kSmall);
  CHECK(max_abs(d.w - s.h1.transposed() * 2.0) < 1e-14);
  CHECK(d.b == Vector{2.0, 2.0});
  CHECK(frobenius_norm(d.h1) == 0.0);
  CHECK(frobenius_norm(d.h2) == 0.0);

  s.w = rng.normal_matrix(2, 3);
  s.h2 = Matrix(3, 2);
  CHECK(frobenius_norm(rhs_decomposed(s, consts, kSmall).h2) == 0.0);
  CHECK(norm2(rhs_decomposed(s, consts, kSmall, true).b) == 0.0);
}

TEST_CASE("property: rhs_decomposed is rhs_full pushed through the split") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dims d{2 + seed % 3, 2 + seed % 3, 6};
    const BlockKernelSpec kappa{3.0 + 0.1 * static_cast<double>(seed % 5), 1.5, 0.4};
    const DerivedConstants consts = derived_constants(kappa, d);
    const DecomposedState s = random_decomposed_state(d, seed, 0.7);
    const FullState full = to_full(s, d);
    const FullState df = rhs_full(full, kappa, build_labels(d), d);
    const DecomposedState dd = rhs_decomposed(s, consts, d);
    const FeatureSplit split = split_features(df.h, build_ortho_basis(d), d);
    const double scale = frobenius_norm(df.h) + frobenius_norm(df.w) + 1.0;
    CHECK(frobenius_norm(split.h1 - dd.h1) <= 1e-12 * scale);
    CHECK(frobenius_norm(split.h2 - dd.h2) <= 1e-12 * scale);
    CHECK(frobenius_norm(df.w - dd.w) <= 1e-12 * scale);
    for (std::size_t i = 0; i < d.classes; ++i) CHECK(std::abs(df.b[i] - dd.b[i]) <= 1e-12 * scale);
    CHECK(loss(full, build_labels(d)) == doctest::Approx(loss(s, d)).epsilon(1e-12));
    CHECK(state_distance(to_decomposed(full, d), s) <= 1e-12 * scale);
  }
}

TEST_CASE("end-of-training system") {
  const DerivedConstants consts = derived_constants(kKappa, kMid);
  CounterRng rng(4);
  DecomposedState s{rng.normal_matrix(8, 3), Matrix(8, 9), rng.normal_matrix(3, 8), Vector(3, 0.1)};
  const DecomposedState z = rhs_eot(s, consts, kMid);
  CHECK(frobenius_norm(z.h1) + frobenius_norm(z.h2) + frobenius_norm(z.w) + norm2(z.b) == 0.0);

  SUBCASE("scalar channel follows the closed-form hyperbolic flow") {
    // W and H2 with one nonzero entry each reduce to ẇ = -m·w·h², ḣ = -μ·w²·h.
    const double w0 = 1.2, h0 = 0.7;
    DecomposedState q{Matrix(8, 3), Matrix(8, 9), Matrix(3, 8), Vector(3, 0.0)};
    q.w(0, 0) = w0;
    q.h2(0, 0) = h0;
    const double m = 4.0, mu = consts.mu_single;
    const double c = mu * w0 * w0 - m * h0 * h0;
    FlowHooks<DecomposedState> hooks;
    hooks.rhs = [&](const DecomposedState& x) { return rhs_eot(x, consts, kMid); };
    IntegratorConfig cfg;
    cfg.step = 1e-3;
    cfg.horizon = 1.0;
    const auto r = integrate(q, cfg, hooks);
    const double u = (1.0 / (h0 * h0) + m / c) * std::exp(2.0 * c) - m / c;
    CHECK(r.final_state.h2(0, 0) == doctest::Approx(1.0 / std::sqrt(u)).epsilon(1e-10));
    const double wt = r.final_state.w(0, 0), ht = r.final_state.h2(0, 0);
    CHECK(mu * wt * wt - m * ht * ht == doctest::Approx(c).epsilon(1e-12));
  }

  SUBCASE("invariant mu*W^T W - m*H2 H2^T is conserved") {
    s.h2 = rng.normal_matrix(8, 9, 0.3);
    const Matrix e0 = invariant_eot_tilde(s, consts, kMid);
    FlowHooks<DecomposedState> hooks;
    hooks.rhs = [&](const DecomposedState& x) { return rhs_eot(x, consts, kMid); };
    hooks.record = [&](double, const DecomposedState& x) {
      return Vector{frobenius_norm(invariant_eot_tilde(x, consts, kMid) - e0) / frobenius_norm(e0)};
    };
    IntegratorConfig cfg;
    cfg.horizon = 2.0;
    const auto r = integrate(s, cfg, hooks);
    for (const Vector& row : r.trajectory.rows) CHECK(row[0] < 1e-8);
    const InvariantReport before = compute_e(s, consts, kMid);
    const InvariantReport after = compute_e(r.final_state, consts, kMid);
    CHECK(rel_diff(after.e_eot, before.e_eot) < 1e-8);
  }
}

TEST_CASE("decoupled system") {
  const DerivedConstants consts = derived_constants(kKappa, kMid);
  const Matrix zero_e(8, 8);
  const DecoupledState z = rhs_decoupled({Matrix(8, 9), Matrix(3, 8)}, zero_e, consts, kMid);
  CHECK(frobenius_norm(z.h2) + frobenius_norm(z.w) == 0.0);

  SUBCASE("matches the coupled system and H2 decays monotonically") {
    CounterRng rng(6);
    // H2 inside the row space of W keeps the invariant PSD.
    const Matrix w = rng.normal_matrix(3, 8);
    DecomposedState s{rng.normal_matrix(8, 3), transpose_times(w, rng.normal_matrix(3, 9, 0.05)), w, Vector(3, 0.0)};
    const Matrix et = invariant_eot_tilde(s, consts, kMid);
    REQUIRE(sym_eig(et).values.back() > -1e-9);
    IntegratorConfig cfg;
    cfg.horizon = 2.0;
    cfg.record_every = 50;
    FlowHooks<DecoupledState> dh;
    dh.rhs = [&](const DecoupledState& x) { return rhs_decoupled(x, et, consts, kMid); };
    dh.record = [](double, const DecoupledState& x) { return Vector{frobenius_norm(x.h2)}; };
    const auto dec = integrate(DecoupledState{s.h2, s.w}, cfg, dh);
    FlowHooks<DecomposedState> ch;
    ch.rhs = [&](const DecomposedState& x) { return rhs_eot(x, consts, kMid); };
    const auto cou = integrate(s, cfg, ch);
    CHECK(rel_diff(dec.final_state.h2, cou.final_state.h2) < 1e-8);
    CHECK(rel_diff(dec.final_state.w, cou.final_state.w) < 1e-8);
    for (std::size_t k = 1; k < dec.trajectory.rows.size(); ++k) {
      CHECK(dec.trajectory.rows[k][0] <= dec.trajectory.rows[k - 1][0]);
    }
    CHECK(dec.trajectory.rows.back()[0] < 0.5 * dec.trajectory.rows.front()[0]);
  }

  SUBCASE("diagonal Riccati channel") {
    // Ẽ = diag(c), H2·H2ᵀ = diag(a): ȧ = -2c·a - 2m·a².
    const Dims d{2, 2, 3};
    const DerivedConstants k2 = derived_constants(kKappa, d);
    const Vector c{0.5, 1.5, 0.0};
    const Vector a0{0.3, 0.2, 0.4};
    DecoupledState x{Matrix(3, 2), Matrix(2, 3)};
    for (std::size_t i = 0; i < 3; ++i) x.h2(i, i % 2 == 0 ? 0 : 1) = 0.0;
    x.h2 = Matrix(3, 2);
    x.h2(0, 0) = std::sqrt(a0[0]);
    x.h2(1, 1) = std::sqrt(a0[1]);
    // The third channel has c = 0: algebraic decay 1/a = 1/a0 + 2m·t.
    Matrix h2(3, 3);
    for (std::size_t i = 0; i < 3; ++i) h2(i, i) = std::sqrt(a0[i]);
    const double m = 2.0;
    FlowHooks<Matrix> hooks;
    hooks.rhs = [&](const Matrix& h) {
      DecoupledState st{h, Matrix(2, 3)};
      return rhs_decoupled(st, Matrix::diagonal(c), k2, d).h2;
    };
    IntegratorConfig cfg;
    cfg.horizon = 1.0;
    const auto r = integrate(h2, cfg, hooks);
    const Matrix a = times_transpose(r.final_state, r.final_state);
    for (std::size_t i = 0; i < 3; ++i) {
      const double inv = c[i] > 0.0 ? (1.0 / a0[i] + m / c[i]) * std::exp(2.0 * c[i]) - m / c[i] : 1.0 / a0[i] + 2.0 * m;
      CHECK(a(i, i) == doctest::Approx(1.0 / inv).epsilon(1e-10));
    }
    CHECK(std::abs(a(0, 1)) < 1e-15);
  }
}

TEST_CASE("integrator") {
  IntegratorConfig cfg;
  cfg.step = 1e-3;
  cfg.horizon = 1.0;

  SUBCASE("zero rhs keeps the state") {
    FlowHooks<Matrix> hooks;
    hooks.rhs = [](const Matrix& x) { return Matrix(x.rows(), x.cols()); };
    hooks.loss = [](const Matrix& x) { return frobenius_norm(x); };
    const Matrix x0{{1, 2}, {3, 4}};
    const auto r = integrate(x0, cfg, hooks);
    CHECK(r.final_state == x0);
    CHECK(r.final_time == doctest::Approx(1.0));
    CHECK(r.trajectory.times.size() == 11);
  }
  SUBCASE("linear residual flow matches the matrix exponential") {
    const Dims d{3, 3, 4};
    const Matrix k = build_block_matrix({2.0, 1.0, 0.5}, d) * 0.5;
    CounterRng rng(7);
    const Matrix r0 = rng.normal_matrix(3, 9);
    FlowHooks<Matrix> hooks;
    hooks.rhs = [&](const Matrix& r) { return (r * k) * -1.0; };
    const auto res = integrate(r0, cfg, hooks);
    CHECK(rel_diff(res.final_state, r0 * sym_expm(k, -1.0)) < 1e-8);
  }
  SUBCASE("times strictly increase and the loss floor stops early") {
    FlowHooks<Matrix> hooks;
    hooks.rhs = [](const Matrix& r) { return r * -1.0; };
    hooks.loss = [](const Matrix& r) { return 0.5 * frobenius_norm(r) * frobenius_norm(r); };
    cfg.horizon = 100.0;
    cfg.loss_floor = 1e-6;
    const auto r = integrate(Matrix{{1.0}}, cfg, hooks);
    CHECK(r.hit_loss_floor);
    CHECK(r.final_time < 10.0);
    for (std::size_t i = 1; i < r.trajectory.times.size(); ++i) CHECK(r.trajectory.times[i] > r.trajectory.times[i - 1]);
  }
  SUBCASE("blow-up raises a divergence error with the last valid time") {
    FlowHooks<Matrix> hooks;
    hooks.rhs = [](const Matrix& y) { return Matrix{{y(0, 0) * y(0, 0) * y(0, 0)}}; };
    cfg.horizon = 5.0;
    cfg.step = 0.05;
    cfg.record_every = 1;
    try {
      integrate(Matrix{{1.0}}, cfg, hooks);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.last_valid_time() >= 0.0);
      CHECK(e.last_valid_time() < 0.6);
    }
  }
  SUBCASE("coarse steps are halved when the invariant drifts") {
    const DerivedConstants consts = derived_constants(kKappa, kMid);
    const DecomposedState s = random_decomposed_state(kMid, 9, 0.5);
    FlowHooks<DecomposedState> hooks;
    hooks.rhs = [&](const DecomposedState& x) { return rhs_decomposed(x, consts, kMid); };
    hooks.invariant = [&](const DecomposedState& x) { return invariant_e(x, consts, kMid); };
    IntegratorConfig coarse;
    coarse.step = 0.02;
    coarse.horizon = 1.0;
    coarse.record_every = 4;
    coarse.drift_tolerance = 1e-10;
    const auto r = integrate(s, coarse, hooks);
    CHECK(r.halvings > 0);
    CHECK(r.step_used < coarse.step);
    CHECK(r.step_used == doctest::Approx(coarse.step / std::pow(2.0, r.halvings)));
  }
  SUBCASE("invalid configuration") {
    IntegratorConfig bad;
    bad.step = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = {};
    bad.horizon = -1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = {};
    bad.record_every = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  }
}

TEST_CASE("property: decomposed flow conserves E, tracks the full flow and decreases the loss") {
  const DerivedConstants consts = derived_constants(kKappa, kMid);
  const Matrix y = build_labels(kMid);
  const Matrix q = build_ortho_basis(kMid).full();
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const DecomposedState s = random_decomposed_state(kMid, seed, 0.5);
    IntegratorConfig cfg;
    cfg.horizon = 3.0;
    cfg.record_every = 50;
    const Matrix e0 = invariant_e(s, consts, kMid);
    std::vector<DecomposedState> dec;
    FlowHooks<DecomposedState> dh;
    dh.rhs = [&](const DecomposedState& x) { return rhs_decomposed(x, consts, kMid); };
    dh.record = [&](double, const DecomposedState& x) {
      dec.push_back(x);
      return Vector{};
    };
    integrate(s, cfg, dh);
    std::vector<FullState> full;
    FlowHooks<FullState> fh;
    fh.rhs = [&](const FullState& x) { return rhs_full(x, kKappa, y, kMid); };
    fh.record = [&](double, const FullState& x) {
      full.push_back(x);
      return Vector{};
    };
    integrate(to_full(s, kMid), cfg, fh);
    REQUIRE(dec.size() == full.size());
    const double root_m = 2.0;
    for (std::size_t k = 0; k < dec.size(); ++k) {
      CHECK(frobenius_norm(invariant_e(dec[k], consts, kMid) - e0) <= 1e-6 * (1.0 + frobenius_norm(e0)));
      CHECK(frobenius_norm(full[k].h * q - hcat(dec[k].h1, dec[k].h2) * root_m) <= 1e-8 * frobenius_norm(full[k].h));
      if (k > 0) CHECK(loss(dec[k], kMid) <= loss(dec[k - 1], kMid) + 1e-9);
    }
  }
}

TEST_CASE("zero-invariant initialization") {
  const DerivedConstants consts = derived_constants(kKappa, kMid);
  for (H2Mode mode : {H2Mode::Zero, H2Mode::WithinMeanSpan, H2Mode::ExtraDirection}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ZeroInvariantOptions opts;
      opts.h2 = mode;
      const DecomposedState s = init_zero_invariant(kMid, consts, seed, opts);
      const Matrix wtw = transpose_times(s.w, s.w) * 0.25;
      CHECK(frobenius_norm(invariant_e(s, consts, kMid)) <= 1e-10 * frobenius_norm(wtw));
      CHECK(norm2(row_sums(s.h1)) < 1e-14);
      CHECK(range_basis(wtw).cols() <= kMid.classes);
      CHECK((mode == H2Mode::Zero) == (frobenius_norm(s.h2) == 0.0));
      CHECK(s.b == Vector(3, 1.0 / 3.0));
    }
  }
  CHECK_THROWS_AS(init_zero_invariant({3, 4, 3}, consts, 1), InvalidArgument);

  SUBCASE("uncentered variant has a full-rank class-mean matrix") {
    ZeroInvariantOptions opts;
    opts.centered = false;
    const DecomposedState s = init_zero_invariant(kMid, consts, 3, opts);
    CHECK(range_basis(times_transpose(s.h1, s.h1)).cols() == 3);
    CHECK(s.b == Vector(3, 0.0));
    CHECK(frobenius_norm(invariant_e(s, consts, kMid)) <= 1e-10 * frobenius_norm(transpose_times(s.w, s.w)));
  }
}

TEST_CASE("centering is preserved with b = 1/C but not with b = 0") {
  const DerivedConstants consts = derived_constants(kKappa, kMid);
  ZeroInvariantOptions opts;
  opts.h2 = H2Mode::WithinMeanSpan;
  DecomposedState s = init_zero_invariant(kMid, consts, 2, opts);
  FlowHooks<DecomposedState> hooks;
  hooks.rhs = [&](const DecomposedState& x) { return rhs_decomposed(x, consts, kMid); };
  IntegratorConfig cfg;
  cfg.horizon = 2.0;
  CHECK(norm2(row_sums(integrate(s, cfg, hooks).final_state.h1)) < 1e-12);
  s.b = Vector(3, 0.0);
  CHECK(norm2(row_sums(integrate(s, cfg, hooks).final_state.h1)) > 1e-3);
}

TEST_CASE("misaligned initialization") {
  const DerivedConstants consts = derived_constants(kKappa, kMid);
  ZeroInvariantOptions opts;
  opts.h2 = H2Mode::WithinMeanSpan;
  const DecomposedState base = init_zero_invariant(kMid, consts, 4, opts);
  const PerturbedInit same = init_perturbed(base, 0.0, 1, consts, kMid);
  CHECK(same.state.w == base.w);
  CHECK(same.e_norm <= 1e-10);
  CHECK(init_perturbed(base, 1.0, 1, consts, kMid).e_norm > 0.1);
  double previous = -1.0;
  for (double x : {0.0, 0.1, 0.3, 1.0, 2.0, 5.0}) {
    const double e = init_perturbed(base, x, 1, consts, kMid).e_norm;
    CHECK(e >= previous);
    previous = e;
  }
  CHECK_THROWS_AS(init_perturbed(base, -1.0, 1, consts, kMid), InvalidArgument);
}

TEST_CASE("end-of-training switch") {
  const DerivedConstants consts = derived_constants(kKappa, kSmall);
  DecomposedState s{Matrix::identity(3).col_range(0, 2), Matrix(3, 2), Matrix::identity(3).col_range(0, 2).transposed(),
                    Vector(2, 0.0)};
  CHECK(in_end_of_training(s, kSmall));
  s.b[0] = 1e-6;
  CHECK_FALSE(in_end_of_training(s, kSmall));
  (void)consts;
}
