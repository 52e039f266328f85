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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isoret/embedding_store.hpp"
#include "isoret/evaluation.hpp"

namespace isoret {

/// A re-ranking task whose relevance signal lives in low-variance
/// coordinates while a shared offset and high-variance noise on a few
/// dominant coordinates swamp raw cosine similarity.
///
/// Every token row is
///     axis_factor * (offset_magnitude * direction + noise_dom + signal + token_noise * eps)
/// where noise_dom ~ dominant_scale * N(0, I) on the first dominant_dims
/// coordinates, and signal is the owning sequence's latent vector
/// (signal_scale * N(0, I) on the remaining coordinates). Each query has one
/// relevant document (grade 1) that shares the query's latent vector and
/// docs_per_query - 1 non-relevant documents (grade 0) with fresh latents.
///
/// direction is the normalised all-ones vector tilted by offset_shift times a
/// seeded random unit vector; axis_factor_d = exp(axis_jitter * (2u - 1)).
/// Both default to no change; raising them produces a shifted target
/// distribution for out-of-distribution runs.
struct ScenarioParams {
    std::uint64_t seed = 7;
    std::uint32_t n_queries = 64;
    std::uint32_t docs_per_query = 20;
    std::uint32_t dim = 64;
    std::uint32_t tokens_per_query = 4;
    std::uint32_t tokens_per_doc = 8;
    double offset_magnitude = 10.0;
    std::uint32_t dominant_dims = 8;
    double dominant_scale = 4.0;
    double signal_scale = 0.5;
    double token_noise = 0.2;
    double offset_shift = 0.0;
    double axis_jitter = 0.0;
};

/// Candidate documents per query, in presentation order.
using CandidateLists = std::map<std::string, std::vector<std::string>>;

struct Scenario {
    EmbeddingCorpus corpus;
    Qrels qrels;
    CandidateLists candidates;
};

Scenario build_designed_scenario(const ScenarioParams& params);

/// Defaults with the given seed, query count, candidates per query and dim.
Scenario build_designed_scenario(std::uint64_t seed, std::uint32_t n_queries, std::uint32_t n_docs,
                                 std::uint32_t dim);

/// The distribution-shifted variant used as an out-of-distribution target.
ScenarioParams shifted_target(ScenarioParams base, std::uint64_t seed);

}  // namespace isoret
