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

#include "isoret/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "isoret/binary_io.hpp"
#include "isoret/error.hpp"
#include "isoret/prng.hpp"

namespace isoret {

namespace {

constexpr std::string_view kMagic = "EMB1";
constexpr std::uint32_t kVersion = 1;

}  // namespace

const char* to_string(SequenceKind kind) noexcept {
    return kind == SequenceKind::query ? "query" : "document";
}

void require_finite(const EmbeddingMatrix& m, const std::string& what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(r, c))) {
                throw ValueError(what + ": non-finite value at row " + std::to_string(r) +
                                 ", column " + std::to_string(c));
            }
        }
    }
}

EmbeddingCorpus::EmbeddingCorpus(EmbeddingMatrix matrix, std::vector<SequenceRecord> sequences)
    : matrix_(std::move(matrix)), sequences_(std::move(sequences)) {
    if (matrix_.cols() < 1) {
        throw IntegrityError("corpus dim must be >= 1");
    }
    require_finite(matrix_, "corpus payload");

    const auto n_rows = static_cast<std::uint64_t>(matrix_.rows());
    std::vector<std::size_t> order(sequences_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < sequences_.size(); ++i) {
        const auto& s = sequences_[i];
        if (s.token_count == 0) {
            throw IntegrityError("sequence '" + s.id + "' has zero tokens");
        }
        if (s.row_offset > n_rows || s.token_count > n_rows - s.row_offset) {
            throw IntegrityError("sequence '" + s.id + "' span [" + std::to_string(s.row_offset) + ", " +
                                 std::to_string(s.row_offset + s.token_count) + ") exceeds " +
                                 std::to_string(n_rows) + " rows");
        }
        if (!index_.emplace(std::make_pair(s.kind, s.id), i).second) {
            throw IntegrityError(std::string("duplicate ") + to_string(s.kind) + " id '" + s.id + "'");
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sequences_[a].row_offset < sequences_[b].row_offset;
    });
    std::uint64_t next = 0;
    for (std::size_t i : order) {
        const auto& s = sequences_[i];
        if (s.row_offset != next) {
            throw IntegrityError(s.row_offset < next
                                     ? "sequence '" + s.id + "' overlaps a preceding span"
                                     : "rows [" + std::to_string(next) + ", " + std::to_string(s.row_offset) +
                                           ") belong to no sequence");
        }
        next = s.row_offset + s.token_count;
    }
    if (next != n_rows) {
        throw IntegrityError("rows [" + std::to_string(next) + ", " + std::to_string(n_rows) +
                             ") belong to no sequence");
    }
}

const SequenceRecord& EmbeddingCorpus::find(SequenceKind kind, const std::string& id) const {
    auto it = index_.find({kind, id});
    if (it == index_.end()) {
        throw LookupError(std::string("unknown ") + to_string(kind) + " id '" + id + "'");
    }
    return sequences_[it->second];
}

bool EmbeddingCorpus::contains(SequenceKind kind, const std::string& id) const {
    return index_.contains({kind, id});
}

std::vector<char> encode_corpus(const EmbeddingCorpus& corpus) {
    const auto& m = corpus.matrix();
    io::ByteWriter w;
    w.bytes(kMagic);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    w.put<std::uint64_t>(corpus.sequences().size());
    w.f64s(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
    for (const auto& s : corpus.sequences()) {
        if (s.id.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw FormatError("sequence id longer than 65535 bytes");
        }
        w.put<std::uint16_t>(static_cast<std::uint16_t>(s.id.size()));
        w.bytes(s.id);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s.kind));
        w.put<std::uint64_t>(s.row_offset);
        w.put<std::uint32_t>(s.token_count);
    }
    return w.release();
}

void save_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& path) {
    io::write_file(path, encode_corpus(corpus));
}

EmbeddingCorpus decode_corpus(std::span<const char> bytes) {
    io::ByteReader r(bytes, "EMB1");
    if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
        throw FormatError("not an EMB1 file (bad magic)");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw FormatError("unsupported EMB1 version " + std::to_string(version));
    }
    const auto dim = r.get<std::uint32_t>();
    const auto n_rows = r.get<std::uint64_t>();
    const auto n_sequences = r.get<std::uint64_t>();
    if (dim == 0) {
        throw FormatError("EMB1 dim must be >= 1");
    }
    if (n_rows > r.remaining() / sizeof(double) / dim) {
        throw FormatError("EMB1 payload shorter than n_rows x dim");
    }
    EmbeddingMatrix m(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(dim));
    r.f64s(std::span<double>(m.data(), static_cast<std::size_t>(m.size())));

    std::vector<SequenceRecord> sequences;
    // Each record needs at least 15 bytes; reject absurd counts before reserving.
    if (n_sequences > r.remaining() / 15) {
        throw FormatError("EMB1 sequence table shorter than n_sequences records");
    }
    sequences.reserve(n_sequences);
    for (std::uint64_t i = 0; i < n_sequences; ++i) {
        SequenceRecord s;
        const auto id_len = r.get<std::uint16_t>();
        s.id = std::string(r.bytes(id_len));
        const auto kind = r.get<std::uint8_t>();
        if (kind > 1) {
            throw FormatError("EMB1 record " + std::to_string(i) + ": bad kind byte " + std::to_string(kind));
        }
        s.kind = static_cast<SequenceKind>(kind);
        s.row_offset = r.get<std::uint64_t>();
        s.token_count = r.get<std::uint32_t>();
        sequences.push_back(std::move(s));
    }
    if (r.remaining() != 0) {
        throw FormatError("EMB1 has " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return EmbeddingCorpus(std::move(m), std::move(sequences));
}

EmbeddingCorpus load_corpus(const std::filesystem::path& path) {
    return decode_corpus(io::read_file(path));
}

EmbeddingCorpus generate_anisotropic(const SynthParams& p) {
    if (p.n_queries < 1 || p.n_docs < 1 || p.tokens_per_query < 1 || p.tokens_per_doc < 1 || p.dim < 1) {
        throw ConfigError("synthetic corpus counts must all be >= 1");
    }
    if (p.outlier_dims > p.dim) {
        throw ConfigError("outlier_dims exceeds dim");
    }
    if (!(p.offset_magnitude >= 0.0) || !(p.outlier_scale >= 1.0)) {
        throw ConfigError("offset_magnitude must be >= 0 and outlier_scale >= 1");
    }
    Eigen::VectorXd scales = Eigen::VectorXd::Ones(p.dim);
    if (!p.axis_scales.empty()) {
        if (p.axis_scales.size() != p.dim) {
            throw ConfigError("axis_scales must have length dim");
        }
        for (std::uint32_t d = 0; d < p.dim; ++d) {
            if (!(p.axis_scales[d] > 0.0) || !std::isfinite(p.axis_scales[d])) {
                throw ConfigError("axis_scales must be positive and finite");
            }
            scales(d) = p.axis_scales[d];
        }
    }
    scales.head(p.outlier_dims) *= p.outlier_scale;
    const double offset = p.offset_magnitude / std::sqrt(static_cast<double>(p.dim));

    const std::uint64_t query_rows = std::uint64_t{p.n_queries} * p.tokens_per_query;
    const std::uint64_t n_rows = query_rows + std::uint64_t{p.n_docs} * p.tokens_per_doc;
    EmbeddingMatrix m(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(p.dim));
    SplitMix64 rng(p.seed);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index d = 0; d < m.cols(); ++d) {
            m(r, d) = offset + scales(d) * rng.gaussian();
        }
    }

    std::vector<SequenceRecord> sequences;
    sequences.reserve(std::size_t{p.n_queries} + p.n_docs);
    for (std::uint32_t q = 0; q < p.n_queries; ++q) {
        sequences.push_back({"q" + std::to_string(q), SequenceKind::query,
                             std::uint64_t{q} * p.tokens_per_query, p.tokens_per_query});
    }
    for (std::uint32_t d = 0; d < p.n_docs; ++d) {
        sequences.push_back({"d" + std::to_string(d), SequenceKind::document,
                             query_rows + std::uint64_t{d} * p.tokens_per_doc, p.tokens_per_doc});
    }
    return EmbeddingCorpus(std::move(m), std::move(sequences));
}

EmbeddingMatrix pool_sequences(const EmbeddingCorpus& corpus) {
    const auto& seqs = corpus.sequences();
    EmbeddingMatrix pooled(static_cast<Eigen::Index>(seqs.size()), corpus.dim());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        pooled.row(static_cast<Eigen::Index>(i)) = corpus.tokens(seqs[i]).colwise().mean();
    }
    return pooled;
}

}  // namespace isoret
