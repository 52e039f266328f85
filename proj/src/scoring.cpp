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

#include "isoret/scoring.hpp"

#include <algorithm>
#include <set>

namespace isoret {

const char* to_string(ScorerKind kind) noexcept { return kind == ScorerKind::colbert ? "colbert" : "repbert"; }

const char* to_string(Granularity g) noexcept {
    return g == Granularity::token_wise ? "token_wise" : "sequence_wise";
}

EmbeddingMatrix apply_transform(const PostTransform& transform, const EmbeddingMatrix& rows) {
    if (const auto* w = std::get_if<WhiteningTransform>(&transform)) {
        return apply_whitening(*w, rows);
    }
    if (const auto* f = std::get_if<std::shared_ptr<const flow::FlowModel>>(&transform)) {
        return flow::apply_flow(**f, rows);
    }
    return rows;
}

void validate_scoring(ScorerKind scorer, Granularity granularity) {
    if (scorer == ScorerKind::colbert && granularity == Granularity::sequence_wise) {
        throw ConfigError("ColBERT scores token vectors; only token_wise post-processing applies");
    }
}

namespace {

/// Applies `transform` to the listed row blocks, writing into `out`.
void transform_rows(const PostTransform& transform, const EmbeddingMatrix& source,
                    const std::vector<std::pair<Eigen::Index, Eigen::Index>>& blocks, EmbeddingMatrix& out) {
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.second;
    EmbeddingMatrix gathered(total, source.cols());
    Eigen::Index at = 0;
    for (const auto& [start, len] : blocks) {
        gathered.middleRows(at, len) = source.middleRows(start, len);
        at += len;
    }
    const EmbeddingMatrix mapped = apply_transform(transform, gathered);
    at = 0;
    for (const auto& [start, len] : blocks) {
        out.middleRows(start, len) = mapped.middleRows(at, len);
        at += len;
    }
}

EmbeddingMatrix pool_rows(const std::vector<SequenceRecord>& seqs, const EmbeddingMatrix& tokens) {
    EmbeddingMatrix pooled(static_cast<Eigen::Index>(seqs.size()), tokens.cols());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        pooled.row(static_cast<Eigen::Index>(i)) =
            tokens.middleRows(static_cast<Eigen::Index>(seqs[i].row_offset), static_cast<Eigen::Index>(seqs[i].token_count))
                .colwise()
                .mean();
    }
    return pooled;
}

EmbeddingMatrix transformed_tokens(const EmbeddingCorpus& corpus, const PostProcessor& post) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> query_blocks, doc_blocks;
    for (const auto& s : corpus.sequences()) {
        auto& blocks = s.kind == SequenceKind::query ? query_blocks : doc_blocks;
        blocks.emplace_back(static_cast<Eigen::Index>(s.row_offset), static_cast<Eigen::Index>(s.token_count));
    }
    EmbeddingMatrix out(corpus.n_rows(), corpus.dim());
    transform_rows(post.query, corpus.matrix(), query_blocks, out);
    transform_rows(post.document, corpus.matrix(), doc_blocks, out);
    return out;
}

EmbeddingMatrix transformed_pooled(const EmbeddingCorpus& corpus, const PostProcessor& post) {
    const auto& seqs = corpus.sequences();
    const EmbeddingMatrix raw_pooled = pool_sequences(corpus);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> query_blocks, doc_blocks;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        auto& blocks = seqs[i].kind == SequenceKind::query ? query_blocks : doc_blocks;
        blocks.emplace_back(static_cast<Eigen::Index>(i), 1);
    }
    EmbeddingMatrix out(raw_pooled.rows(), raw_pooled.cols());
    transform_rows(post.query, raw_pooled, query_blocks, out);
    transform_rows(post.document, raw_pooled, doc_blocks, out);
    return out;
}

}  // namespace

EmbeddingMatrix post_processed_rows(const EmbeddingCorpus& corpus, const PostProcessor& post, bool pooled) {
    if (post.granularity == Granularity::sequence_wise) {
        if (!pooled) {
            throw ConfigError("a sequence_wise transform applies to pooled rows only");
        }
        return transformed_pooled(corpus, post);
    }
    EmbeddingMatrix tokens = transformed_tokens(corpus, post);
    return pooled ? pool_rows(corpus.sequences(), tokens) : tokens;
}

PreparedCorpus::PreparedCorpus(const EmbeddingCorpus& corpus, ScorerKind scorer, const PostProcessor& post)
    : corpus_(&corpus), scorer_(scorer) {
    validate_scoring(scorer, post.granularity);
    const auto& seqs = corpus.sequences();

    if (post.granularity == Granularity::token_wise) {
        tokens_ = transformed_tokens(corpus, post);
        if (scorer == ScorerKind::repbert) {
            pooled_ = pool_rows(seqs, tokens_);
            tokens_.resize(0, corpus.dim());
        }
        return;
    }
    pooled_ = transformed_pooled(corpus, post);
}

double PreparedCorpus::score(const SequenceRecord& query, const SequenceRecord& doc) const {
    if (scorer_ == ScorerKind::colbert) {
        return colbert_score(
            tokens_.middleRows(static_cast<Eigen::Index>(query.row_offset), static_cast<Eigen::Index>(query.token_count)),
            tokens_.middleRows(static_cast<Eigen::Index>(doc.row_offset), static_cast<Eigen::Index>(doc.token_count)));
    }
    const auto& seqs = corpus_->sequences();
    auto row_of = [&](const SequenceRecord& s) {
        return static_cast<Eigen::Index>(static_cast<std::size_t>(&s - seqs.data()));
    };
    // A pooled vector is a single "token", so the RepBERT score reduces to its cosine.
    return repbert_score(pooled_.row(row_of(query)), pooled_.row(row_of(doc)));
}

std::vector<ScoredCandidate> PreparedCorpus::rank(const std::string& query_id,
                                                  std::span<const std::string> candidates) const {
    const auto& query = corpus_->find(SequenceKind::query, query_id);
    std::set<std::string> seen;
    std::vector<ScoredCandidate> out;
    out.reserve(candidates.size());
    for (const auto& id : candidates) {
        if (!seen.insert(id).second) {
            throw ValueError("candidate '" + id + "' listed twice for query '" + query_id + "'");
        }
        out.push_back({id, score(query, corpus_->find(SequenceKind::document, id)), 0});
    }
    std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<std::uint32_t>(i + 1);
    return out;
}

std::vector<ScoredCandidate> rank_candidates(const EmbeddingCorpus& corpus, const std::string& query_id,
                                             std::span<const std::string> candidate_doc_ids, ScorerKind scorer,
                                             const PostProcessor& post) {
    validate_scoring(scorer, post.granularity);
    // Restrict to the sequences involved so only those rows are transformed.
    std::vector<const SequenceRecord*> involved{&corpus.find(SequenceKind::query, query_id)};
    for (const auto& id : candidate_doc_ids) involved.push_back(&corpus.find(SequenceKind::document, id));
    std::set<std::pair<SequenceKind, std::string>> unique_keys;
    Eigen::Index rows = 0;
    for (const auto* s : involved) {
        if (unique_keys.insert({s->kind, s->id}).second) rows += static_cast<Eigen::Index>(s->token_count);
    }
    EmbeddingMatrix sub(rows, corpus.dim());
    std::vector<SequenceRecord> sub_seqs;
    std::set<std::pair<SequenceKind, std::string>> copied;
    Eigen::Index at = 0;
    for (const auto* s : involved) {
        if (!copied.insert({s->kind, s->id}).second) continue;
        sub.middleRows(at, s->token_count) = corpus.tokens(*s);
        sub_seqs.push_back({s->id, s->kind, static_cast<std::uint64_t>(at), s->token_count});
        at += s->token_count;
    }
    const EmbeddingCorpus restricted(std::move(sub), std::move(sub_seqs));
    return PreparedCorpus(restricted, scorer, post).rank(query_id, candidate_doc_ids);
}

}  // namespace isoret
