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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "isoret/embedding_store.hpp"

namespace isoret {

/// z = (x - mu) * rotation * diag(eigenvalues)^(-1/2), rows as vectors.
struct WhiteningTransform {
    Eigen::RowVectorXd mu;
    Eigen::MatrixXd rotation;      // columns are eigenvectors of the covariance
    Eigen::VectorXd eigenvalues;   // ascending, floored at eps_rel * max
    double eps_rel = 1e-8;
    std::uint64_t fitted_on = 0;

    Eigen::Index dim() const noexcept { return mu.size(); }
    /// Dimensions whose eigenvalue was raised to the floor.
    std::vector<bool> floored() const;
    /// mu = 0, rotation = I, eigenvalues = 1.
    static WhiteningTransform identity(Eigen::Index dim);
};

/// Unbiased (N - 1) covariance, self-adjoint eigendecomposition, eigenvalue floor.
WhiteningTransform fit_whitening(const EmbeddingMatrix& W, double eps_rel = 1e-8);

EmbeddingMatrix apply_whitening(const WhiteningTransform& T, const EmbeddingMatrix& W);

/// WHT1 (little-endian): "WHT1" | version u32 = 1 | dim u32 | eps_rel f64 |
/// fitted_on u64 | mu f64[D] | eigenvalues f64[D] | rotation f64[D*D] row-major
std::vector<char> encode_whitening(const WhiteningTransform& T);
WhiteningTransform decode_whitening(std::span<const char> bytes);
void save_whitening(const WhiteningTransform& T, const std::filesystem::path& path);
WhiteningTransform load_whitening(const std::filesystem::path& path);

}  // namespace isoret
