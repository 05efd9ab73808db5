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

// Label matrix, the orthogonal basis Q = [Q1, Q2] that diagonalizes it, the
// class-mean / within-class feature split and residual components.

#include "ntkc/block_kernel.hpp"
#include "ntkc/linalg.hpp"

namespace ntkc {

/// One-hot C × N labels, class-contiguous. Y·Yᵀ = m·I.
Matrix build_labels(const Dims& dims);

struct OrthoBasis {
  Matrix q1;       // N × C, (1/√m)·(I_C ⊗ 1_m)
  Matrix q2;       // N × (N - C), I_C ⊗ Q̃2
  Matrix q2_block; // m × (m - 1) Helmert contrasts, columns sum to zero

  Matrix full() const { return hcat(q1, q2); }
};

/// m × (m - 1) Helmert basis: column j has j + 1 entries 1/√((j+1)(j+2)),
/// then -(j+1)/√((j+1)(j+2)), then zeros.
Matrix helmert_basis(std::size_t m);

OrthoBasis build_ortho_basis(const Dims& dims);

struct FeatureSplit {
  Matrix h1;  // n × C, class means
  Matrix h2;  // n × (N - C), within-class contrasts
};

FeatureSplit split_features(const Matrix& h, const OrthoBasis& basis, const Dims& dims);

/// Inverse of split_features: H = √m·[H1, H2]·Qᵀ.
Matrix reconstruct_features(const Matrix& h1, const Matrix& h2, const OrthoBasis& basis,
                            const Dims& dims);

struct ResidualSet {
  Matrix r;         // C × N
  Matrix r_class;   // (1/m)·R·YᵀY
  Matrix r_global;  // (1/N)·R·11ᵀ
  Matrix r1;        // C × C class-mean residuals
  Vector r_global_mean;
};

ResidualSet residual_components(const Matrix& r, const Matrix& labels, const Dims& dims);

/// Projections of one residual row r_k onto the closed-form eigenvectors.
struct ProjectionRow {
  double onto_global = 0.0;          // ⟨r, v0⟩
  double mean = 0.0;                 // ⟨r⟩
  Vector onto_class;                 // ⟨r, v_c⟩, length C
  Vector class_means;                // ⟨r⟩_c, length C
  Vector onto_single;                // ⟨r, v_i^c⟩, length N (class-contiguous)
  // Largest deviation between each projection and its mean-based identity.
  double global_identity_error = 0.0;
  double class_identity_error = 0.0;
  double single_identity_error = 0.0;
};

/// One ProjectionRow per row of R; the eigenvectors come from `eig`.
std::vector<ProjectionRow> residual_projections(const Matrix& r, const EigenStructure& eig,
                                                const Dims& dims);

}  // namespace ntkc
