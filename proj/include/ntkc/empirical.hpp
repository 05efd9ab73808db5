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

#pragma once

// A small fully-connected network with hand-written reverse-mode gradients,
// used to measure the empirical NTK and the last-layer feature kernel on
// synthetic Gaussian blobs.

#include <cstdint>
#include <optional>
#include <vector>

#include "ntkc/block_kernel.hpp"
#include "ntkc/linalg.hpp"
#include "ntkc/nc_metrics.hpp"

namespace ntkc {

enum class Activation { Tanh, Relu };

struct Dataset {
  Matrix x;       // d × N, class-contiguous
  Matrix labels;  // C × N one-hot
  Dims dims;      // dims.features is the network feature width
};

/// Class c centred at separation·e_c with isotropic N(0, noise²) jitter.
/// Throws InvalidArgument when d < C or separation < 0.
Dataset make_blobs(const Dims& dims, std::size_t input_dim, double separation, double noise,
                   std::uint64_t seed);

class TinyNet {
 public:
  struct Layer {
    Matrix weight;  // out × in
    Vector bias;
  };

  /// widths = {d, hidden..., n, C}. Every layer except the last applies the
  /// activation; weights start N(0, 1/fan_in), biases at zero.
  TinyNet(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed);

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t feature_dim() const { return widths_[widths_.size() - 2]; }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t parameter_count() const;
  /// Parameters up to the penultimate layer: a prefix of the parameter vector.
  std::size_t feature_parameter_count() const;

  Vector parameters() const;
  void set_parameters(std::span<const double> p);
  const std::vector<Layer>& layers() const { return layers_; }
  Activation activation() const { return activation_; }

  Vector forward(std::span<const double> x) const;
  Vector features(std::span<const double> x) const;
  /// Features of every column of X, n × N.
  Matrix feature_matrix(const Matrix& x) const;
  Matrix output_matrix(const Matrix& x) const;

  /// ∇_w f_k(x), length parameter_count().
  Vector output_gradient(std::span<const double> x, std::size_t k) const;
  /// ∇_w h_s(x) over the feature-scope parameters, length feature_parameter_count().
  Vector feature_gradient(std::span<const double> x, std::size_t s) const;
  /// ∇_w of Σ_k seed_k·f_k(x), length parameter_count().
  Vector seeded_gradient(std::span<const double> x, std::span<const double> seed) const;

 private:
  struct Cache {
    std::vector<Vector> pre;   // z_l
    std::vector<Vector> post;  // a_l, post[0] = x
  };
  Cache run(std::span<const double> x) const;
  /// Backpropagates `delta` = ∂/∂z_top through layers [0, top] into `grad`.
  void backward(const Cache& cache, std::size_t top, Vector delta, std::span<double> grad) const;
  double act(double z) const;
  double act_prime(double z) const;

  std::vector<std::size_t> widths_;
  Activation activation_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> offsets_;  // start of each layer in the parameter vector
};

/// ∇_w f_k(x).
Vector net_grad(const TinyNet& net, std::span<const double> x, std::size_t output);

struct EmpiricalKernels {
  std::size_t outputs = 0;   // C
  std::size_t features = 0;  // n
  std::size_t samples = 0;   // N
  std::vector<double> theta;    // [C][C][N][N], empty when only traced kernels are kept
  std::vector<double> theta_h;  // [n][n][N][N]
  Matrix traced_theta;          // Σ_k Θ_{k,k}
  Matrix traced_theta_h;        // Σ_k Θ^h_{k,k}

  bool has_full() const { return !theta.empty(); }
  double theta_at(std::size_t k, std::size_t s, std::size_t i, std::size_t j) const {
    return theta[((k * outputs + s) * samples + i) * samples + j];
  }
  double theta_h_at(std::size_t k, std::size_t s, std::size_t i, std::size_t j) const {
    return theta_h[((k * features + s) * samples + i) * samples + j];
  }
};

/// Upper bound on stored Jacobian entries, P·N·(C + n).
inline constexpr std::size_t kKernelEntryBudget = std::size_t{1} << 26;

/// Θ_{k,s}(x_i, x_j) = ⟨∇f_k(x_i), ∇f_s(x_j)⟩ and the feature-scope kernel.
/// With `full = false` only the traced kernels are formed.
EmpiricalKernels empirical_ntk(const TinyNet& net, const Dataset& data, bool full = true);

struct BlockStats {
  Matrix theta_norms;    // C × C, ‖Θ_{k,s}(X)‖_F
  Matrix theta_h_norms;  // n × n
  BlockFit fit_theta;
  BlockFit fit_theta_h;
  double alignment_theta = 0.0;
  double alignment_theta_h = 0.0;
  /// √(Σ_{k≠s}‖·‖²) / √(Σ_k‖·‖²); zero for kernels with vanishing cross blocks.
  double offdiag_ratio_theta = 0.0;
  double offdiag_ratio_theta_h = 0.0;
};

BlockStats block_stats(const EmpiricalKernels& kernels, const Dataset& data);

struct KernelSnapshot {
  std::size_t epoch = 0;
  Matrix traced_theta;
  Matrix traced_theta_h;
  double alignment_theta_h = 0.0;
  double fit_residual_theta_h = 0.0;
};

struct TrainingOptions {
  double eta = 0.01;
  std::size_t epochs = 1000;
  /// Epochs at which traced kernels are recorded; empty means {0, epochs/2, epochs}.
  std::vector<std::size_t> snapshot_epochs;
  bool keep_final_full_kernels = true;
};

struct TrainingLog {
  std::vector<std::size_t> epochs;
  std::vector<double> loss;
  std::vector<double> accuracy;
  std::vector<KernelSnapshot> snapshots;
  std::optional<EmpiricalKernels> final_kernels;
};

/// ½‖f(X) - Y‖²_F.
double mse_loss(const TinyNet& net, const Dataset& data);
double training_accuracy(const TinyNet& net, const Dataset& data);

/// Full-batch gradient descent on the MSE loss. Entry t of the log is the
/// state after t updates. Throws DivergenceError with the last finite epoch.
TrainingLog train_gd_mse(TinyNet& net, const Dataset& data, const TrainingOptions& options);

/// NC metrics of the network's last layer on the training set; when
/// `heldout` is given NC4 is evaluated on its points against training means.
NcReport network_nc_report(const TinyNet& net, const Dataset& data,
                           const std::optional<Dataset>& heldout = std::nullopt);

}  // namespace ntkc
