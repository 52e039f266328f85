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
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace isoret {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Rows are embedding vectors.
using EmbeddingMatrix = RowMatrix<double>;

enum class SequenceKind : std::uint8_t { query = 0, document = 1 };

const char* to_string(SequenceKind kind) noexcept;

struct SequenceRecord {
    std::string id;
    SequenceKind kind = SequenceKind::query;
    std::uint64_t row_offset = 0;
    std::uint32_t token_count = 1;

    friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

/// Throws ValueError if any entry of `m` is NaN or infinite.
void require_finite(const EmbeddingMatrix& m, const std::string& what);

/// Token matrix plus the sequences that partition its rows.
///
/// Construction validates: finite payload, dim >= 1, every span inside the
/// matrix, spans pairwise disjoint and covering all rows, ids unique per kind.
/// Instances are immutable afterwards.
class EmbeddingCorpus {
public:
    EmbeddingCorpus(EmbeddingMatrix matrix, std::vector<SequenceRecord> sequences);

    const EmbeddingMatrix& matrix() const noexcept { return matrix_; }
    const std::vector<SequenceRecord>& sequences() const noexcept { return sequences_; }
    Eigen::Index dim() const noexcept { return matrix_.cols(); }
    Eigen::Index n_rows() const noexcept { return matrix_.rows(); }

    /// Throws LookupError when absent.
    const SequenceRecord& find(SequenceKind kind, const std::string& id) const;
    bool contains(SequenceKind kind, const std::string& id) const;

    auto tokens(const SequenceRecord& s) const {
        return matrix_.middleRows(static_cast<Eigen::Index>(s.row_offset),
                                  static_cast<Eigen::Index>(s.token_count));
    }

    friend bool operator==(const EmbeddingCorpus& a, const EmbeddingCorpus& b) {
        return a.sequences_ == b.sequences_ && a.matrix_.rows() == b.matrix_.rows() &&
               a.matrix_.cols() == b.matrix_.cols() && a.matrix_ == b.matrix_;
    }

private:
    EmbeddingMatrix matrix_;
    std::vector<SequenceRecord> sequences_;
    std::map<std::pair<SequenceKind, std::string>, std::size_t> index_;
};

/// EMB1 on-disk format (little-endian):
///   "EMB1" | version u32 = 1 | dim u32 | n_rows u64 | n_sequences u64
///   | n_rows*dim f64 row-major
///   | per sequence: id_len u16, id bytes, kind u8, row_offset u64, token_count u32
EmbeddingCorpus load_corpus(const std::filesystem::path& path);
EmbeddingCorpus decode_corpus(std::span<const char> bytes);
void save_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& path);
std::vector<char> encode_corpus(const EmbeddingCorpus& corpus);

struct SynthParams {
    std::uint32_t n_queries = 1;
    std::uint32_t n_docs = 1;
    std::uint32_t tokens_per_query = 1;
    std::uint32_t tokens_per_doc = 1;
    std::uint32_t dim = 2;
    double offset_magnitude = 0.0;
    std::vector<double> axis_scales;  // length dim; empty means all ones
    std::uint32_t outlier_dims = 0;
    double outlier_scale = 1.0;
    std::uint64_t seed = 0;
};

/// Each row is offset_magnitude * u + diag(scales) * g with u the normalised
/// all-ones vector, g standard Gaussian (drawn dimension by dimension, row by
/// row from one SplitMix64 stream), and scales = axis_scales with the first
/// outlier_dims entries multiplied by outlier_scale. Queries ("q<i>") come
/// first, then documents ("d<i>").
EmbeddingCorpus generate_anisotropic(const SynthParams& params);

/// One row per sequence: the mean of that sequence's token rows.
EmbeddingMatrix pool_sequences(const EmbeddingCorpus& corpus);

}  // namespace isoret
