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

#include "ntkc/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "ntkc/errors.hpp"

namespace ntkc {

Matrix build_labels(const Dims& dims) {
  if (dims.classes == 0 || dims.per_class == 0) throw InvalidArgument("build_labels: empty dims");
  Matrix y(dims.classes, dims.samples());
  for (std::size_t j = 0; j < dims.samples(); ++j) y(j / dims.per_class, j) = 1.0;
  return y;
}

Matrix helmert_basis(std::size_t m) {
  if (m < 2) throw InvalidArgument("helmert_basis: need m >= 2");
  Matrix q(m, m - 1);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double k = static_cast<double>(j + 1);
    const double scale = 1.0 / std::sqrt(k * (k + 1.0));
    for (std::size_t i = 0; i <= j; ++i) q(i, j) = scale;
    q(j + 1, j) = -k * scale;
  }
  return q;
}

OrthoBasis build_ortho_basis(const Dims& dims) {
  const std::size_t c = dims.classes;
  const std::size_t m = dims.per_class;
  if (c == 0 || m < 2) throw InvalidArgument("build_ortho_basis: need C >= 1 and m >= 2");
  OrthoBasis basis;
  basis.q2_block = helmert_basis(m);
  basis.q1 = kron(Matrix::identity(c), Matrix::ones(m, 1)) * (1.0 / std::sqrt(static_cast<double>(m)));
  basis.q2 = kron(Matrix::identity(c), basis.q2_block);
  return basis;
}

FeatureSplit split_features(const Matrix& h, const OrthoBasis& basis, const Dims& dims) {
  if (h.cols() != dims.samples() || basis.q1.rows() != dims.samples()) {
    throw DimensionError("split_features: H must have N columns matching the basis");
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(dims.per_class));
  return {(h * basis.q1) * s, (h * basis.q2) * s};
}

Matrix reconstruct_features(const Matrix& h1, const Matrix& h2, const OrthoBasis& basis,
                            const Dims& dims) {
  if (h1.rows() != h2.rows() || h1.cols() != dims.classes ||
      h2.cols() != dims.samples() - dims.classes) {
    throw DimensionError("reconstruct_features: inconsistent H1/H2 shapes");
  }
  const double s = std::sqrt(static_cast<double>(dims.per_class));
  return (times_transpose(h1, basis.q1) + times_transpose(h2, basis.q2)) * s;
}

ResidualSet residual_components(const Matrix& r, const Matrix& labels, const Dims& dims) {
  const std::size_t c = dims.classes;
  const std::size_t m = dims.per_class;
  const std::size_t n = dims.samples();
  if (labels.rows() != c || labels.cols() != n || r.cols() != n) {
    throw DimensionError("residual_components: R and Y must be C x N");
  }
  ResidualSet out;
  out.r = r;
  out.r_class = times_transpose(r, labels) * labels * (1.0 / static_cast<double>(m));
  out.r_global_mean = row_sums(r);
  for (double& x : out.r_global_mean) x /= static_cast<double>(n);
  out.r_global = outer_ones(out.r_global_mean, n);
  out.r1 = times_transpose(r, labels) * (1.0 / static_cast<double>(m));
  return out;
}

std::vector<ProjectionRow> residual_projections(const Matrix& r, const EigenStructure& eig,
                                                const Dims& dims) {
  const std::size_t c = dims.classes;
  const std::size_t m = dims.per_class;
  const std::size_t n = dims.samples();
  if (r.cols() != n || eig.global_vector.rows() != n || eig.class_vectors.cols() != c) {
    throw DimensionError("residual_projections: eigenstructure does not match dims");
  }
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  std::vector<ProjectionRow> rows;
  rows.reserve(r.rows());
  for (std::size_t k = 0; k < r.rows(); ++k) {
    const Vector rk = r.row(k);
    ProjectionRow p;
    p.onto_global = dot(rk, eig.global_vector.col(0));
    for (double x : rk) p.mean += x;
    p.mean /= nd;
    p.global_identity_error = std::abs(p.onto_global - nd * p.mean);

    p.class_means.assign(c, 0.0);
    for (std::size_t j = 0; j < n; ++j) p.class_means[j / m] += rk[j] / md;
    p.onto_class.resize(c);
    for (std::size_t cls = 0; cls < c; ++cls) {
      p.onto_class[cls] = dot(rk, eig.class_vectors.col(cls));
      const double expected = nd / static_cast<double>(c - 1) * (p.class_means[cls] - p.mean);
      p.class_identity_error = std::max(p.class_identity_error, std::abs(p.onto_class[cls] - expected));
    }

    p.onto_single.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      p.onto_single[j] = dot(rk, eig.single_vectors.col(j));
      const double expected = md / (md - 1.0) * (rk[j] - p.class_means[j / m]);
      p.single_identity_error = std::max(p.single_identity_error, std::abs(p.onto_single[j] - expected));
    }
    rows.push_back(std::move(p));
  }
  return rows;
}

}  // namespace ntkc
