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

#include "isoret/scenario.hpp"

#include <cmath>
#include <cstdio>

#include "isoret/error.hpp"
#include "isoret/prng.hpp"

namespace isoret {

namespace {

std::string padded(const char* prefix, std::uint32_t value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03u", prefix, value);
    return buf;
}

}  // namespace

Scenario build_designed_scenario(const ScenarioParams& p) {
    if (p.n_queries < 1 || p.docs_per_query < 1 || p.tokens_per_query < 1 || p.tokens_per_doc < 1) {
        throw ConfigError("scenario counts must be >= 1");
    }
    if (p.dim < 2 || p.dominant_dims >= p.dim) {
        throw ConfigError("scenario needs dim >= 2 and dominant_dims < dim");
    }
    if (p.offset_magnitude < 0.0 || p.dominant_scale < 0.0 || p.signal_scale <= 0.0 || p.token_noise < 0.0 ||
        p.offset_shift < 0.0 || p.axis_jitter < 0.0) {
        throw ConfigError("scenario scales must be non-negative (signal_scale positive)");
    }
    const auto D = static_cast<Eigen::Index>(p.dim);
    const auto k = static_cast<Eigen::Index>(p.dominant_dims);
    SplitMix64 rng(p.seed);

    Eigen::RowVectorXd tilt(D);
    for (Eigen::Index d = 0; d < D; ++d) tilt(d) = rng.gaussian();
    Eigen::RowVectorXd direction = Eigen::RowVectorXd::Ones(D) / std::sqrt(static_cast<double>(D));
    direction += p.offset_shift * tilt.normalized();
    direction.normalize();
    Eigen::RowVectorXd axis(D);
    for (Eigen::Index d = 0; d < D; ++d) axis(d) = std::exp(p.axis_jitter * (2.0 * rng.uniform() - 1.0));
    const Eigen::RowVectorXd offset = p.offset_magnitude * direction;

    const std::uint64_t rows = std::uint64_t{p.n_queries} *
                               (p.tokens_per_query + std::uint64_t{p.docs_per_query} * p.tokens_per_doc);
    EmbeddingMatrix m(static_cast<Eigen::Index>(rows), D);
    std::vector<SequenceRecord> sequences;
    Scenario out{EmbeddingCorpus(EmbeddingMatrix(0, D), {}), {}, {}};

    Eigen::Index at = 0;
    auto latent = [&] {
        Eigen::RowVectorXd s(D - k);
        for (Eigen::Index d = 0; d < s.size(); ++d) s(d) = p.signal_scale * rng.gaussian();
        return s;
    };
    auto emit = [&](const std::string& id, SequenceKind kind, std::uint32_t tokens, const Eigen::RowVectorXd& s) {
        sequences.push_back({id, kind, static_cast<std::uint64_t>(at), tokens});
        for (std::uint32_t t = 0; t < tokens; ++t, ++at) {
            auto row = m.row(at);
            row = offset;
            for (Eigen::Index d = 0; d < k; ++d) row(d) += p.dominant_scale * rng.gaussian();
            for (Eigen::Index d = k; d < D; ++d) row(d) += s(d - k) + p.token_noise * rng.gaussian();
            row.array() *= axis.array();
        }
    };

    for (std::uint32_t q = 0; q < p.n_queries; ++q) {
        const std::string qid = padded("q", q);
        const Eigen::RowVectorXd query_latent = latent();
        emit(qid, SequenceKind::query, p.tokens_per_query, query_latent);
        const auto relevant = static_cast<std::uint32_t>(rng.below(p.docs_per_query));
        std::vector<std::string> docs;
        for (std::uint32_t j = 0; j < p.docs_per_query; ++j) {
            const std::string did = padded("d", q) + "-" + padded("", j);
            emit(did, SequenceKind::document, p.tokens_per_doc, j == relevant ? query_latent : latent());
            out.qrels.judgments[qid][did] = j == relevant ? 1 : 0;
            docs.push_back(did);
        }
        shuffle(docs.begin(), docs.end(), rng);
        out.candidates[qid] = std::move(docs);
    }
    out.corpus = EmbeddingCorpus(std::move(m), std::move(sequences));
    return out;
}

Scenario build_designed_scenario(std::uint64_t seed, std::uint32_t n_queries, std::uint32_t n_docs,
                                 std::uint32_t dim) {
    ScenarioParams p;
    p.seed = seed;
    p.n_queries = n_queries;
    p.docs_per_query = n_docs;
    p.dim = dim;
    p.dominant_dims = std::min<std::uint32_t>(p.dominant_dims, dim / 2);
    return build_designed_scenario(p);
}

ScenarioParams shifted_target(ScenarioParams base, std::uint64_t seed) {
    base.seed = seed;
    base.offset_shift = 0.5;
    base.axis_jitter = 0.25;
    return base;
}

}  // namespace isoret
