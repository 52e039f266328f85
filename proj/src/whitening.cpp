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

#include "isoret/whitening.hpp"

#include <cmath>

#include "isoret/binary_io.hpp"
#include "isoret/error.hpp"

namespace isoret {

namespace {

constexpr std::string_view kMagic = "WHT1";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<bool> WhiteningTransform::floored() const {
    std::vector<bool> out(static_cast<std::size_t>(eigenvalues.size()), false);
    if (eigenvalues.size() == 0) {
        return out;
    }
    const double top = eigenvalues.maxCoeff();
    // top <= eps_rel only happens for a (numerically) zero covariance, where
    // fit_whitening floors every direction to eps_rel itself.
    const bool all_floored = top <= eps_rel;
    const double floor = eps_rel * top * (1.0 + 1e-12);
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        out[static_cast<std::size_t>(i)] = all_floored || eigenvalues(i) <= floor;
    }
    return out;
}

WhiteningTransform WhiteningTransform::identity(Eigen::Index dim) {
    WhiteningTransform t;
    t.mu = Eigen::RowVectorXd::Zero(dim);
    t.rotation = Eigen::MatrixXd::Identity(dim, dim);
    t.eigenvalues = Eigen::VectorXd::Ones(dim);
    t.eps_rel = 0.0;
    return t;
}

WhiteningTransform fit_whitening(const EmbeddingMatrix& W, double eps_rel) {
    if (W.rows() < 2) {
        throw InsufficientDataError("whitening needs at least two rows, got " + std::to_string(W.rows()));
    }
    if (!(eps_rel > 0.0) || !(eps_rel < 1.0)) {
        throw ConfigError("eps_rel must lie in (0, 1)");
    }
    WhiteningTransform t;
    t.eps_rel = eps_rel;
    t.fitted_on = static_cast<std::uint64_t>(W.rows());
    t.mu = W.colwise().mean();
    const EmbeddingMatrix centered = W.rowwise() - t.mu;
    const Eigen::MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(W.rows() - 1);
    if (!sigma.allFinite()) {
        throw ValueError("covariance has non-finite entries");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
    if (solver.info() != Eigen::Success) {
        throw NumericError("covariance eigendecomposition failed");
    }
    t.rotation = solver.eigenvectors();
    t.eigenvalues = solver.eigenvalues();
    const double top = t.eigenvalues.maxCoeff();
    // A zero covariance has no scale to be relative to; every direction gets eps_rel.
    const double floor = top > 0.0 ? eps_rel * top : eps_rel;
    t.eigenvalues = t.eigenvalues.cwiseMax(floor);
    return t;
}

EmbeddingMatrix apply_whitening(const WhiteningTransform& T, const EmbeddingMatrix& W) {
    if (W.cols() != T.dim()) {
        throw ShapeError("whitening fitted on dim " + std::to_string(T.dim()) + ", input has dim " +
                         std::to_string(W.cols()));
    }
    const Eigen::RowVectorXd inv_sqrt = T.eigenvalues.cwiseSqrt().cwiseInverse().transpose();
    EmbeddingMatrix out = (W.rowwise() - T.mu) * T.rotation;
    out.array().rowwise() *= inv_sqrt.array();
    return out;
}

std::vector<char> encode_whitening(const WhiteningTransform& T) {
    const auto d = static_cast<std::size_t>(T.dim());
    io::ByteWriter w;
    w.bytes(kMagic);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<double>(T.eps_rel);
    w.put<std::uint64_t>(T.fitted_on);
    w.f64s(std::span<const double>(T.mu.data(), d));
    w.f64s(std::span<const double>(T.eigenvalues.data(), d));
    const RowMatrix<double> rotation = T.rotation;
    w.f64s(std::span<const double>(rotation.data(), d * d));
    return w.release();
}

WhiteningTransform decode_whitening(std::span<const char> bytes) {
    io::ByteReader r(bytes, "WHT1");
    if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
        throw FormatError("not a WHT1 file (bad magic)");
    }
    if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
        throw FormatError("unsupported WHT1 version " + std::to_string(v));
    }
    const auto d = r.get<std::uint32_t>();
    WhiteningTransform t;
    t.eps_rel = r.get<double>();
    t.fitted_on = r.get<std::uint64_t>();
    if (std::uint64_t{d} * (d + 2) * sizeof(double) != r.remaining()) {
        throw FormatError("WHT1 payload size does not match dim " + std::to_string(d));
    }
    t.mu.resize(d);
    t.eigenvalues.resize(d);
    RowMatrix<double> rotation(d, d);
    r.f64s(std::span<double>(t.mu.data(), d));
    r.f64s(std::span<double>(t.eigenvalues.data(), d));
    r.f64s(std::span<double>(rotation.data(), std::size_t{d} * d));
    t.rotation = rotation;
    if (!t.mu.allFinite() || !t.rotation.allFinite() || !(t.eigenvalues.array() > 0.0).all()) {
        throw ValueError("WHT1 holds non-finite values or non-positive eigenvalues");
    }
    return t;
}

void save_whitening(const WhiteningTransform& T, const std::filesystem::path& path) {
    io::write_file(path, encode_whitening(T));
}

WhiteningTransform load_whitening(const std::filesystem::path& path) {
    return decode_whitening(io::read_file(path));
}

}  // namespace isoret
