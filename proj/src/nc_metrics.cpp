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

#include "ntkc/nc_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ntkc/errors.hpp"

namespace ntkc {

namespace {

void require_layout(const Matrix& h, const Dims& dims) {
  if (h.cols() != dims.samples() || dims.samples() == 0) {
    throw DimensionError("nc metrics: H must have C*m class-contiguous columns");
  }
}

std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

Vector global_mean(const Matrix& h) {
  Vector g = row_sums(h);
  for (double& x : g) x /= static_cast<double>(h.cols());
  return g;
}

}  // namespace

Matrix class_means(const Matrix& h, const Dims& dims) {
  require_layout(h, dims);
  const std::size_t m = dims.per_class;
  Matrix means(h.rows(), dims.classes);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) means(i, j / m) += h(i, j) / static_cast<double>(m);
  return means;
}

double nc1_variability(const Matrix& h, const Dims& dims) {
  const Matrix means = class_means(h, dims);
  const std::size_t m = dims.per_class;
  double total = 0.0;
  for (std::size_t c = 0; c < dims.classes; ++c) {
    double sq = 0.0;
    for (std::size_t j = c * m; j < (c + 1) * m; ++j) {
      for (std::size_t i = 0; i < h.rows(); ++i) {
        const double d = h(i, j) - means(i, c);
        sq += d * d;
      }
    }
    total += std::sqrt(sq / static_cast<double>(m));
  }
  return total / static_cast<double>(dims.classes);
}

Matrix centered_class_means(const Matrix& h, const Dims& dims) {
  Matrix means = class_means(h, dims);
  const Vector g = global_mean(h);
  for (std::size_t c = 0; c < dims.classes; ++c) {
    Vector col = means.col(c);
    for (std::size_t i = 0; i < col.size(); ++i) col[i] -= g[i];
    const double norm = norm2(col);
    if (norm < 1e-14) throw DegenerateInputError("centered_class_means: collapsed class mean");
    for (double& x : col) x /= norm;
    means.set_col(c, col);
  }
  return means;
}

Matrix etf_gram(std::size_t classes) {
  const double c = static_cast<double>(classes);
  return (Matrix::identity(classes) - Matrix::ones(classes, classes) * (1.0 / c)) * (c / (c - 1.0));
}

double nc2_etf_distance(const Matrix& m) {
  const Matrix gram = transpose_times(m, m);
  const double gn = frobenius_norm(gram);
  if (gn == 0.0) throw DegenerateInputError("nc2: zero class-mean Gram");
  const Matrix phi = etf_gram(m.cols());
  return frobenius_norm(gram * (1.0 / gn) - phi * (1.0 / frobenius_norm(phi)));
}

double nc3_duality(const Matrix& w, const Matrix& m) {
  if (w.cols() != m.rows() || w.rows() != m.cols()) throw DimensionError("nc3: W must be C x n for n x C M");
  const double wn = frobenius_norm(w);
  const double mn = frobenius_norm(m);
  if (wn == 0.0 || mn == 0.0) throw DegenerateInputError("nc3: zero weights or means");
  return frobenius_norm(w.transposed() * (1.0 / wn) - m * (1.0 / mn));
}

double nc4_agreement(const Matrix& w, const Vector& b, const Matrix& points, const Matrix& means) {
  const std::size_t c = means.cols();
  if (w.rows() != c || b.size() != c || w.cols() != points.rows() || means.rows() != points.rows()) {
    throw DimensionError("nc4: inconsistent shapes");
  }
  if (points.cols() == 0) throw InvalidArgument("nc4: no points");
  if (c == 1) return 1.0;
  const Matrix scores = w * points;
  std::size_t agree = 0;
  Vector logits(c), dist(c);
  for (std::size_t j = 0; j < points.cols(); ++j) {
    for (std::size_t k = 0; k < c; ++k) {
      logits[k] = scores(k, j) + b[k];
      double d = 0.0;
      for (std::size_t i = 0; i < points.rows(); ++i) {
        const double diff = points(i, j) - means(i, k);
        d += diff * diff;
      }
      dist[k] = -d;  // argmin distance == argmax of the negation, same tie rule
    }
    if (argmax_first(logits) == argmax_first(dist)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(points.cols());
}

double nc4_agreement(const Matrix& w, const Vector& b, const Matrix& h, const Dims& dims) {
  if (dims.classes == 1) return 1.0;
  return nc4_agreement(w, b, h, class_means(h, dims));
}

NcReport nc_report(const Matrix& h, const Matrix& w, const Vector& b, const Dims& dims) {
  NcReport r;
  r.nc1 = nc1_variability(h, dims);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    const Matrix m = centered_class_means(h, dims);
    r.nc2 = nc2_etf_distance(m);
    r.nc3 = nc3_duality(w, m);
  } catch (const DegenerateInputError&) {
    r.nc2 = nan;
    r.nc3 = nan;
  }
  r.nc4 = nc4_agreement(w, b, h, dims);

  const double inv_c = 1.0 / static_cast<double>(dims.classes);
  Vector gap = b;
  for (double& x : gap) x -= inv_c;
  r.bias_gap = norm2(gap);

  const Vector g = global_mean(h);
  r.global_mean_norm = norm2(g);
  const Matrix means = class_means(h, dims);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t c = 0; c < dims.classes; ++c) {
    Vector col = means.col(c);
    for (std::size_t i = 0; i < col.size(); ++i) col[i] -= g[i];
    const double norm = norm2(col);
    lo = std::min(lo, norm);
    hi = std::max(hi, norm);
  }
  r.class_mean_norm_spread = hi - lo;
  return r;
}

}  // namespace ntkc
