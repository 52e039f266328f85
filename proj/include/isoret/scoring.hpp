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
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "isoret/embedding_store.hpp"
#include "isoret/error.hpp"
#include "isoret/flows.hpp"
#include "isoret/whitening.hpp"

namespace isoret {

enum class ScorerKind { colbert, repbert };
enum class Granularity { token_wise, sequence_wise };

const char* to_string(ScorerKind kind) noexcept;
const char* to_string(Granularity g) noexcept;

namespace detail {

template <typename Derived>
RowMatrix<typename Derived::Scalar> normalized_rows(const Eigen::MatrixBase<Derived>& m, const char* what) {
    RowMatrix<typename Derived::Scalar> out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const auto norm = out.row(i).norm();
        if (!(norm > 0)) {
            throw ValueError(std::string(what) + " vector " + std::to_string(i) + " has zero norm");
        }
        out.row(i) /= norm;
    }
    return out;
}

}  // namespace detail

/// Late interaction: sum over query tokens of the best cosine against any
/// document token. Rows are token vectors.
template <typename DerivedQ, typename DerivedD>
typename DerivedQ::Scalar colbert_score(const Eigen::MatrixBase<DerivedQ>& query,
                                        const Eigen::MatrixBase<DerivedD>& doc) {
    if (query.rows() == 0 || doc.rows() == 0) {
        throw EmptyInputError("colbert_score needs at least one token on each side");
    }
    if (query.cols() != doc.cols()) {
        throw ShapeError("colbert_score: query and document dims differ");
    }
    const auto q = detail::normalized_rows(query, "query token");
    const auto d = detail::normalized_rows(doc, "document token");
    return (q * d.transpose()).rowwise().maxCoeff().sum();
}

/// Cosine between the mean query token and the mean document token.
template <typename DerivedQ, typename DerivedD>
typename DerivedQ::Scalar repbert_score(const Eigen::MatrixBase<DerivedQ>& query,
                                        const Eigen::MatrixBase<DerivedD>& doc) {
    if (query.rows() == 0 || doc.rows() == 0) {
        throw EmptyInputError("repbert_score needs at least one token on each side");
    }
    if (query.cols() != doc.cols()) {
        throw ShapeError("repbert_score: query and document dims differ");
    }
    const auto q = detail::normalized_rows(query.colwise().mean(), "pooled query");
    const auto d = detail::normalized_rows(doc.colwise().mean(), "pooled document");
    return q.row(0).dot(d.row(0));
}

/// No transform, a whitening, or a shared trained flow.
using PostTransform = std::variant<std::monostate, WhiteningTransform, std::shared_ptr<const flow::FlowModel>>;

EmbeddingMatrix apply_transform(const PostTransform& transform, const EmbeddingMatrix& rows);

/// Query and document rows may use different fitted transforms; the usual
/// set-up shares one.
struct PostProcessor {
    PostTransform query;
    PostTransform document;
    Granularity granularity = Granularity::token_wise;

    static PostProcessor none(Granularity g = Granularity::token_wise) { return {{}, {}, g}; }
    static PostProcessor shared(PostTransform t, Granularity g) { return {t, t, g}; }
};

/// Corpus rows after `post`: token rows, or one pooled row per sequence
/// (corpus order) when `pooled` is set. sequence_wise transforms apply to
/// pooled rows only; asking for their token rows throws ConfigError.
EmbeddingMatrix post_processed_rows(const EmbeddingCorpus& corpus, const PostProcessor& post, bool pooled);

struct ScoredCandidate {
    std::string doc_id;
    double score = 0.0;
    std::uint32_t rank = 0;

    friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

/// Throws ConfigError for ColBERT with sequence-wise post-processing.
void validate_scoring(ScorerKind scorer, Granularity granularity);

/// Corpus representations after post-processing, ready for scoring.
///
/// token_wise: every token row is transformed; ColBERT uses the tokens,
///             RepBERT the mean of the transformed tokens.
/// sequence_wise: sequences are pooled first and the pooled vectors are
///             transformed (RepBERT only).
class PreparedCorpus {
public:
    PreparedCorpus(const EmbeddingCorpus& corpus, ScorerKind scorer, const PostProcessor& post);

    double score(const SequenceRecord& query, const SequenceRecord& doc) const;

    /// Sorted by score descending, ties by doc_id ascending; ranks 1..n.
    std::vector<ScoredCandidate> rank(const std::string& query_id, std::span<const std::string> candidates) const;

private:
    const EmbeddingCorpus* corpus_;
    ScorerKind scorer_;
    EmbeddingMatrix tokens_;  // token_wise ColBERT
    EmbeddingMatrix pooled_;  // RepBERT: one row per sequence, corpus order
};

std::vector<ScoredCandidate> rank_candidates(const EmbeddingCorpus& corpus, const std::string& query_id,
                                             std::span<const std::string> candidate_doc_ids, ScorerKind scorer,
                                             const PostProcessor& post);

}  // namespace isoret
