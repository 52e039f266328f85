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

#include "isoret/isotropy.hpp"

namespace isoret {

IsotropyReport measure(const EmbeddingMatrix& W, std::optional<std::uint64_t> batch_size, const CosineMode& mode) {
    if (batch_size && *batch_size < 2) {
        throw ConfigError("isotropy batch size must be >= 2");
    }
    const auto n = static_cast<std::uint64_t>(W.rows());
    const std::uint64_t step = batch_size.value_or(std::max<std::uint64_t>(n, 1));

    IsotropyReport report;
    report.n_rows = n;
    report.dim = static_cast<std::uint64_t>(W.cols());
    report.batch_size = batch_size;
    double i_w_sum = 0.0;
    double cos_sum = 0.0;
    for (std::uint64_t start = 0; start < n; start += step) {
        const std::uint64_t len = std::min(step, n - start);
        if (len < 2) {
            break;
        }
        const auto block = W.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
        i_w_sum += partition_ratio(block);
        cos_sum += avg_pairwise_cosine(block, mode);
        ++report.batches_averaged;
    }
    if (report.batches_averaged == 0) {
        throw EmptyInputError("isotropy measurement needs a batch of at least two rows");
    }
    report.i_w = i_w_sum / static_cast<double>(report.batches_averaged);
    report.avg_cos = cos_sum / static_cast<double>(report.batches_averaged);
    return report;
}

DimensionProfile dimension_profile(const EmbeddingMatrix& W, double outlier_factor) {
    if (W.rows() < 1) {
        throw EmptyInputError("dimension_profile needs at least one row");
    }
    const auto dim = static_cast<std::size_t>(W.cols());
    DimensionProfile profile;
    profile.mean.resize(dim);
    profile.stddev.resize(dim);
    profile.max_abs.resize(dim);
    profile.outlier.assign(dim, false);
    for (std::size_t d = 0; d < dim; ++d) {
        const auto column = W.col(static_cast<Eigen::Index>(d));
        const double mean = column.mean();
        profile.mean[d] = mean;
        profile.stddev[d] = std::sqrt((column.array() - mean).square().mean());
        profile.max_abs[d] = column.cwiseAbs().maxCoeff();
    }
    std::vector<double> sorted = profile.max_abs;
    std::sort(sorted.begin(), sorted.end());
    const double median =
        dim % 2 == 1 ? sorted[dim / 2] : 0.5 * (sorted[dim / 2 - 1] + sorted[dim / 2]);
    for (std::size_t d = 0; d < dim; ++d) {
        profile.outlier[d] = profile.max_abs[d] > outlier_factor * median;
    }
    return profile;
}

}  // namespace isoret
