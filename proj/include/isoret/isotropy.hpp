// Copyright 2026 the isoret authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "isoret/embedding_store.hpp"
#include "isoret/error.hpp"
#include "isoret/prng.hpp"

namespace isoret {

/// log(sum(exp(values))) without overflow.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& values) {
    using Scalar = typename Derived::Scalar;
    const Scalar peak = values.maxCoeff();
    return peak + std::log((values.derived().array() - peak).exp().sum());
}

/// Partition-function isotropy ratio of the rows of W.
///
/// For every eigenvector v of W^T W (self-adjoint solver, ascending order)
/// the log partition function log q(a) = logsumexp_i(w_i . a) is evaluated at
/// a = +v and a = -v; the result is exp(min log q - max log q), in (0, 1].
/// Evaluating both signs makes the value independent of the solver's sign
/// convention. On exactly degenerate spectra the eigenbasis, and hence the
/// value, depends on the solver.
template <typename Derived>
typename Derived::Scalar partition_ratio(const Eigen::MatrixBase<Derived>& W) {
    using Scalar = typename Derived::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (W.rows() == 0) {
        throw EmptyInputError("partition_ratio needs at least one row");
    }
    const Matrix gram = W.transpose() * W;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigendecomposition of W^T W failed");
    }
    const Matrix projections = W * solver.eigenvectors();  // n x D, column k = W v_k
    Scalar lo = std::numeric_limits<Scalar>::infinity();
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < projections.cols(); ++k) {
        const auto column = projections.col(k);
        for (const Scalar log_q : {log_sum_exp(column), log_sum_exp(-column)}) {
            lo = std::min(lo, log_q);
            hi = std::max(hi, log_q);
        }
    }
    return std::exp(lo - hi);
}

struct ExactPairs {};

/// Mean over `pairs` distinct unordered index pairs drawn with SplitMix64.
struct SampledPairs {
    std::uint64_t pairs = 1'000'000;
    std::uint64_t seed = 0;
};

using CosineMode = std::variant<ExactPairs, SampledPairs>;

namespace detail {

template <typename Derived>
RowMatrix<typename Derived::Scalar> unit_rows(const Eigen::MatrixBase<Derived>& W) {
    RowMatrix<typename Derived::Scalar> unit = W;
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
        const auto norm = unit.row(i).norm();
        if (!(norm > 0)) {
            throw ValueError("row " + std::to_string(i) + " has zero norm");
        }
        unit.row(i) /= norm;
    }
    return unit;
}

}  // namespace detail

/// Mean cosine similarity over row pairs.
///
/// Exact mode uses sum_{i<j} cos(w_i, w_j) = (|sum_i w_i/|w_i||^2 - n) / 2,
/// which is O(n D) rather than O(n^2 D).
template <typename Derived>
typename Derived::Scalar avg_pairwise_cosine(const Eigen::MatrixBase<Derived>& W,
                                             const CosineMode& mode = ExactPairs{}) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = W.rows();
    if (n < 2) {
        throw EmptyInputError("avg_pairwise_cosine needs at least two rows");
    }
    const auto unit = detail::unit_rows(W);
    if (std::holds_alternative<ExactPairs>(mode)) {
        const Scalar total = unit.colwise().sum().squaredNorm();
        const Scalar count = static_cast<Scalar>(n) * static_cast<Scalar>(n - 1);
        return (total - static_cast<Scalar>(n)) / count;
    }
    const auto& sampled = std::get<SampledPairs>(mode);
    const auto rows = static_cast<std::uint64_t>(n);
    if (sampled.pairs == 0 || sampled.pairs > rows * (rows - 1) / 2) {
        throw ValueError("sampled pair count must be in [1, n(n-1)/2]");
    }
    SplitMix64 rng(sampled.seed);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(sampled.pairs);
    Scalar sum = 0;
    while (seen.size() < sampled.pairs) {
        const auto i = rng.below(rows);
        const auto j = rng.below(rows);
        if (i == j || !seen.insert(std::min(i, j) * rows + std::max(i, j)).second) {
            continue;
        }
        sum += unit.row(static_cast<Eigen::Index>(i)).dot(unit.row(static_cast<Eigen::Index>(j)));
    }
    return sum / static_cast<Scalar>(sampled.pairs);
}

struct IsotropyReport {
    double i_w = 0.0;
    double avg_cos = 0.0;
    std::uint64_t n_rows = 0;
    std::uint64_t dim = 0;
    std::optional<std::uint64_t> batch_size;  // nullopt means the full matrix
    std::uint64_t batches_averaged = 0;
};

/// Averages both metrics over consecutive row blocks of batch_size rows. A
/// trailing block is kept if it has at least two rows.
IsotropyReport measure(const EmbeddingMatrix& W, std::optional<std::uint64_t> batch_size = std::nullopt,
                       const CosineMode& mode = ExactPairs{});

struct DimensionProfile {
    std::vector<double> mean;
    std::vector<double> stddev;  // population (divisor n)
    std::vector<double> max_abs;
    std::vector<bool> outlier;
};

/// Flags dimension d when max|W[:, d]| > outlier_factor * median_d' max|W[:, d']|.
DimensionProfile dimension_profile(const EmbeddingMatrix& W, double outlier_factor = 5.0);

}  // namespace isoret
