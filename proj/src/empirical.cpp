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

#include "ntkc/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ntkc/decomposition.hpp"
#include "ntkc/errors.hpp"
#include "ntkc/rng.hpp"

namespace ntkc {

Dataset make_blobs(const Dims& dims, std::size_t input_dim, double separation, double noise,
                   std::uint64_t seed) {
  if (input_dim < dims.classes) throw InvalidArgument("make_blobs: input dimension must be >= C");
  if (separation < 0.0 || noise < 0.0) throw InvalidArgument("make_blobs: negative separation or noise");
  CounterRng rng(seed);
  Dataset data{Matrix(input_dim, dims.samples()), build_labels(dims), dims};
  for (std::size_t j = 0; j < dims.samples(); ++j) {
    const std::size_t c = j / dims.per_class;
    for (std::size_t i = 0; i < input_dim; ++i) {
      data.x(i, j) = (i == c ? separation : 0.0) + noise * rng.normal();
    }
  }
  return data;
}

TinyNet::TinyNet(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 3) throw InvalidArgument("TinyNet: need input, feature and output widths");
  if (std::any_of(widths_.begin(), widths_.end(), [](std::size_t w) { return w == 0; })) {
    throw InvalidArgument("TinyNet: zero layer width");
  }
  CounterRng rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    layers_.push_back({rng.normal_matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in))), Vector(out, 0.0)});
    offsets_.push_back(offset);
    offset += out * in + out;
  }
  offsets_.push_back(offset);
}

std::size_t TinyNet::parameter_count() const { return offsets_.back(); }

std::size_t TinyNet::feature_parameter_count() const { return offsets_[layers_.size() - 1]; }

Vector TinyNet::parameters() const {
  Vector p;
  p.reserve(parameter_count());
  for (const Layer& layer : layers_) {
    p.insert(p.end(), layer.weight.data().begin(), layer.weight.data().end());
    p.insert(p.end(), layer.bias.begin(), layer.bias.end());
  }
  return p;
}

void TinyNet::set_parameters(std::span<const double> p) {
  if (p.size() != parameter_count()) throw DimensionError("TinyNet: parameter length mismatch");
  std::size_t k = 0;
  for (Layer& layer : layers_) {
    for (double& w : layer.weight.data()) w = p[k++];
    for (double& b : layer.bias) b = p[k++];
  }
}

double TinyNet::act(double z) const {
  return activation_ == Activation::Tanh ? std::tanh(z) : std::max(z, 0.0);
}

double TinyNet::act_prime(double z) const {
  if (activation_ == Activation::Tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

TinyNet::Cache TinyNet::run(std::span<const double> x) const {
  if (x.size() != input_dim()) throw DimensionError("TinyNet: input length mismatch");
  Cache cache;
  cache.post.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vector z = layers_[l].weight * std::span<const double>(cache.post.back());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layers_[l].bias[i];
    Vector a = z;
    if (l + 1 < layers_.size()) {
      for (double& v : a) v = act(v);
    }
    cache.pre.push_back(std::move(z));
    cache.post.push_back(std::move(a));
  }
  return cache;
}

void TinyNet::backward(const Cache& cache, std::size_t top, Vector delta, std::span<double> grad) const {
  for (std::size_t l = top + 1; l-- > 0;) {
    const Layer& layer = layers_[l];
    const Vector& input = cache.post[l];
    double* g = grad.data() + offsets_[l];
    const std::size_t in = input.size();
    for (std::size_t i = 0; i < delta.size(); ++i) {
      if (delta[i] == 0.0) continue;
      for (std::size_t j = 0; j < in; ++j) g[i * in + j] += delta[i] * input[j];
      g[delta.size() * in + i] += delta[i];
    }
    if (l == 0) break;
    Vector prev(in, 0.0);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      if (delta[i] == 0.0) continue;
      for (std::size_t j = 0; j < in; ++j) prev[j] += layer.weight(i, j) * delta[i];
    }
    for (std::size_t j = 0; j < in; ++j) prev[j] *= act_prime(cache.pre[l - 1][j]);
    delta = std::move(prev);
  }
}

Vector TinyNet::forward(std::span<const double> x) const { return run(x).post.back(); }

Vector TinyNet::features(std::span<const double> x) const {
  Cache cache = run(x);
  return cache.post[cache.post.size() - 2];
}

Matrix TinyNet::feature_matrix(const Matrix& x) const {
  Matrix out(feature_dim(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) out.set_col(j, features(x.col(j)));
  return out;
}

Matrix TinyNet::output_matrix(const Matrix& x) const {
  Matrix out(output_dim(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) out.set_col(j, forward(x.col(j)));
  return out;
}

Vector TinyNet::output_gradient(std::span<const double> x, std::size_t k) const {
  if (k >= output_dim()) throw InvalidArgument("TinyNet: output index out of range");
  Vector seed(output_dim(), 0.0);
  seed[k] = 1.0;
  return seeded_gradient(x, seed);
}

Vector TinyNet::seeded_gradient(std::span<const double> x, std::span<const double> seed) const {
  if (seed.size() != output_dim()) throw DimensionError("TinyNet: seed length mismatch");
  const Cache cache = run(x);
  Vector grad(parameter_count(), 0.0);
  backward(cache, layers_.size() - 1, Vector(seed.begin(), seed.end()), grad);
  return grad;
}

Vector TinyNet::feature_gradient(std::span<const double> x, std::size_t s) const {
  if (s >= feature_dim()) throw InvalidArgument("TinyNet: feature index out of range");
  const Cache cache = run(x);
  const std::size_t top = layers_.size() - 2;
  Vector delta(feature_dim(), 0.0);
  delta[s] = act_prime(cache.pre[top][s]);
  Vector grad(feature_parameter_count(), 0.0);
  backward(cache, top, std::move(delta), grad);
  return grad;
}

Vector net_grad(const TinyNet& net, std::span<const double> x, std::size_t output) {
  return net.output_gradient(x, output);
}

EmpiricalKernels empirical_ntk(const TinyNet& net, const Dataset& data, bool full) {
  const std::size_t c = net.output_dim();
  const std::size_t n = net.feature_dim();
  const std::size_t samples = data.x.cols();
  const std::size_t p = net.parameter_count();
  const std::size_t ph = net.feature_parameter_count();
  if (p * samples * (c + n) > kKernelEntryBudget) {
    throw InvalidArgument("empirical_ntk: Jacobian exceeds memory budget; reduce m or the feature width");
  }
  if (data.x.rows() != net.input_dim()) throw DimensionError("empirical_ntk: input dimension mismatch");

  // Row (k·N + i) holds ∇f_k(x_i); row (s·N + i) of jh holds ∇h_s(x_i).
  Matrix jf(c * samples, p);
  Matrix jh(n * samples, ph);
  for (std::size_t i = 0; i < samples; ++i) {
    const Vector x = data.x.col(i);
    for (std::size_t k = 0; k < c; ++k) {
      const Vector g = net.output_gradient(x, k);
      std::copy(g.begin(), g.end(), jf.row_ptr(k * samples + i));
    }
    for (std::size_t s = 0; s < n; ++s) {
      const Vector g = net.feature_gradient(x, s);
      std::copy(g.begin(), g.end(), jh.row_ptr(s * samples + i));
    }
  }

  EmpiricalKernels out;
  out.outputs = c;
  out.features = n;
  out.samples = samples;
  out.traced_theta = Matrix(samples, samples);
  out.traced_theta_h = Matrix(samples, samples);

  auto gram_block = [&](const Matrix& jac, std::size_t blocks) {
    if (!full) {
      Matrix traced(samples, samples);
      for (std::size_t k = 0; k < blocks; ++k) {
        const Matrix rows = Matrix(samples, jac.cols(),
                                   std::vector<double>(jac.row_ptr(k * samples), jac.row_ptr(k * samples) + samples * jac.cols()));
        traced += times_transpose(rows, rows);
      }
      return std::pair<std::vector<double>, Matrix>{{}, traced};
    }
    const Matrix gram = times_transpose(jac, jac);
    std::vector<double> four(blocks * blocks * samples * samples);
    Matrix traced(samples, samples);
    for (std::size_t k = 0; k < blocks; ++k)
      for (std::size_t s = 0; s < blocks; ++s)
        for (std::size_t i = 0; i < samples; ++i)
          for (std::size_t j = 0; j < samples; ++j) {
            const double v = gram(k * samples + i, s * samples + j);
            four[((k * blocks + s) * samples + i) * samples + j] = v;
            if (k == s) traced(i, j) += v;
          }
    return std::pair<std::vector<double>, Matrix>{std::move(four), traced};
  };
  auto [theta, traced] = gram_block(jf, c);
  auto [theta_h, traced_h] = gram_block(jh, n);
  out.theta = std::move(theta);
  out.theta_h = std::move(theta_h);
  out.traced_theta = std::move(traced);
  out.traced_theta_h = std::move(traced_h);
  return out;
}

BlockStats block_stats(const EmpiricalKernels& kernels, const Dataset& data) {
  BlockStats st;
  st.fit_theta = fit_block_spec(kernels.traced_theta, data.dims);
  st.fit_theta_h = fit_block_spec(kernels.traced_theta_h, data.dims);
  st.alignment_theta = kernel_alignment(kernels.traced_theta, data.labels);
  st.alignment_theta_h = kernel_alignment(kernels.traced_theta_h, data.labels);
  if (!kernels.has_full()) return st;

  auto norms = [&](std::size_t blocks, auto&& at, double& ratio) {
    Matrix out(blocks, blocks);
    double diag = 0.0, off = 0.0;
    for (std::size_t k = 0; k < blocks; ++k) {
      for (std::size_t s = 0; s < blocks; ++s) {
        double sq = 0.0;
        for (std::size_t i = 0; i < kernels.samples; ++i)
          for (std::size_t j = 0; j < kernels.samples; ++j) {
            const double v = at(k, s, i, j);
            sq += v * v;
          }
        out(k, s) = std::sqrt(sq);
        (k == s ? diag : off) += sq;
      }
    }
    ratio = diag == 0.0 ? 0.0 : std::sqrt(off / diag);
    return out;
  };
  st.theta_norms = norms(
      kernels.outputs, [&](auto k, auto s, auto i, auto j) { return kernels.theta_at(k, s, i, j); },
      st.offdiag_ratio_theta);
  st.theta_h_norms = norms(
      kernels.features, [&](auto k, auto s, auto i, auto j) { return kernels.theta_h_at(k, s, i, j); },
      st.offdiag_ratio_theta_h);
  return st;
}

double mse_loss(const TinyNet& net, const Dataset& data) {
  const Matrix r = net.output_matrix(data.x) - data.labels;
  const double norm = frobenius_norm(r);
  return 0.5 * norm * norm;
}

double training_accuracy(const TinyNet& net, const Dataset& data) {
  const Matrix out = net.output_matrix(data.x);
  std::size_t correct = 0;
  for (std::size_t j = 0; j < out.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.rows(); ++k)
      if (out(k, j) > out(best, j)) best = k;
    if (best == j / data.dims.per_class) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(out.cols());
}

TrainingLog train_gd_mse(TinyNet& net, const Dataset& data, const TrainingOptions& options) {
  if (options.eta < 0.0) throw InvalidArgument("train_gd_mse: negative learning rate");
  std::vector<std::size_t> marks = options.snapshot_epochs;
  if (marks.empty()) marks = {0, options.epochs / 2, options.epochs};

  TrainingLog log;
  std::size_t last_finite = 0;
  for (std::size_t epoch = 0;; ++epoch) {
    const Matrix out = net.output_matrix(data.x);
    const Matrix r = out - data.labels;
    const double norm = frobenius_norm(r);
    const double loss = 0.5 * norm * norm;
    if (!std::isfinite(loss)) {
      throw DivergenceError("train_gd_mse: loss became non-finite", static_cast<double>(last_finite));
    }
    last_finite = epoch;
    log.epochs.push_back(epoch);
    log.loss.push_back(loss);
    log.accuracy.push_back(training_accuracy(net, data));
    if (std::find(marks.begin(), marks.end(), epoch) != marks.end()) {
      const bool final_full = options.keep_final_full_kernels && epoch == options.epochs;
      EmpiricalKernels k = empirical_ntk(net, data, final_full);
      const BlockFit fit = fit_block_spec(k.traced_theta_h, data.dims);
      log.snapshots.push_back({epoch, k.traced_theta, k.traced_theta_h,
                               kernel_alignment(k.traced_theta_h, data.labels), fit.residual});
      if (final_full) log.final_kernels = std::move(k);
    }
    if (epoch == options.epochs) break;
    if (options.eta == 0.0) continue;

    Vector grad(net.parameter_count(), 0.0);
    for (std::size_t j = 0; j < data.x.cols(); ++j) {
      const Vector g = net.seeded_gradient(data.x.col(j), r.col(j));
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
    }
    Vector p = net.parameters();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= options.eta * grad[k];
    net.set_parameters(p);
  }
  return log;
}

NcReport network_nc_report(const TinyNet& net, const Dataset& data, const std::optional<Dataset>& heldout) {
  const Matrix h = net.feature_matrix(data.x);
  const TinyNet::Layer& last = net.layers().back();
  NcReport r = nc_report(h, last.weight, last.bias, data.dims);
  if (heldout) {
    r.nc4 = nc4_agreement(last.weight, last.bias, net.feature_matrix(heldout->x), class_means(h, data.dims));
  }
  return r;
}

}  // namespace ntkc
