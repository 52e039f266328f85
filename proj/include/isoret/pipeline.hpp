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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoret/embedding_store.hpp"
#include "isoret/evaluation.hpp"
#include "isoret/flows.hpp"
#include "isoret/isotropy.hpp"
#include "isoret/scenario.hpp"
#include "isoret/scoring.hpp"

namespace isoret::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

enum class PostKind { none, whiten, nice, glow };

const char* to_string(PostKind kind) noexcept;

/// Zero for hidden_layers / hidden_units selects the architecture default
/// (NICE 5 x 1000, Glow 2 x 512).
struct FlowOptions {
    std::uint32_t couplings = 4;
    std::uint32_t levels = 2;
    std::uint32_t depth = 3;
    std::uint32_t hidden_layers = 0;
    std::uint32_t hidden_units = 0;
    std::uint32_t epochs = 10;
    double learning_rate = 1e-4;
    std::uint32_t batch_size = 256;
    bool shuffle = true;
};

struct ExperimentConfig {
    fs::path source_corpus;
    fs::path target_corpus;  // empty: same as source
    fs::path qrels;
    fs::path candidates;
    ScorerKind scorer = ScorerKind::repbert;
    PostKind post = PostKind::none;
    Granularity granularity = Granularity::token_wise;
    bool separate_kinds = false;  // one transform per sequence kind
    double whitening_eps = 1e-8;
    FlowOptions flow;
    std::uint64_t seed = 0;
    fs::path output_dir = ".";
    fs::path transform;  // path prefix; empty: <output_dir>/transform
};

/// Overlays the keys of j onto base. Unknown keys and mistyped values throw
/// ConfigError.
ExperimentConfig config_from_json(const json& j, ExperimentConfig base = {});
json to_json(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

fs::path transform_prefix(const ExperimentConfig& cfg);
fs::path effective_target(const ExperimentConfig& cfg);
flow::ArchSpec arch_spec(const ExperimentConfig& cfg, std::uint32_t dim);

/// sha256 of the canonical JSON of j with output locations removed.
std::string options_hash(json j);
std::string config_hash(const ExperimentConfig& cfg);

/// Reads a JSON object from disk; ConfigError if missing or malformed.
json load_json_object(const fs::path& path);

/// {"config_sha256": ..., "seed": ...}
json provenance(const std::string& hash, std::uint64_t seed);

/// The corpus used by the isotropy and flow-training checks: 128 queries x 8
/// tokens and 96 documents x 32 tokens (4096 rows), D=64, offset 10, axis
/// scale 0.25, 4 outlier dims x 20.
SynthParams reference_synth_params(std::uint64_t seed = 0);

SynthParams synth_from_json(const json& j, SynthParams base);
json to_json(const SynthParams& p);
ScenarioParams scenario_from_json(const json& j, ScenarioParams base);
json to_json(const ScenarioParams& p);

CandidateLists load_candidates(const fs::path& path);
CandidateLists parse_candidates(const std::string& text);
std::string format_candidates(const CandidateLists& candidates);

// Subcommands. Each writes into `out` (created if absent); the file names
// are fixed so runs are easy to chain.

/// corpus.emb, corpus.meta.json
void cmd_gen(const SynthParams& params, const fs::path& out);

/// corpus.emb, qrels.txt, candidates.jsonl, scenario.json
void cmd_scenario(const ScenarioParams& params, const fs::path& out);

struct MeasureOptions {
    fs::path corpus;
    std::optional<std::uint64_t> batch_size;
    std::optional<std::uint64_t> pairs;  // sampled avgcos; exact when unset
    bool pooled = false;                 // one row per sequence
    double outlier_factor = 5.0;
    fs::path transform;                  // optional fitted transform prefix
    std::uint64_t seed = 0;
};

MeasureOptions measure_from_json(const json& j, MeasureOptions base);
json to_json(const MeasureOptions& o);

/// isotropy.json, dimension_profile.csv
IsotropyReport cmd_measure(const MeasureOptions& opts, const fs::path& out);

/// What a fit produced. inputs_read lists every file opened.
struct FitSummary {
    fs::path meta_path;
    json meta;
    std::vector<fs::path> inputs_read;
};

/// Fits on cfg.source_corpus only and writes <prefix>.{wht,flw} (or
/// <prefix>.query.* / <prefix>.document.*) plus <prefix>.meta.json.
FitSummary cmd_fit(const ExperimentConfig& cfg);

/// A persisted transform after hash verification.
struct LoadedTransform {
    PostProcessor post;
    PostKind kind = PostKind::none;
    json meta;
};

/// Throws IntegrityError if a transform file no longer matches the hash
/// recorded at fit time.
LoadedTransform load_transform(const fs::path& prefix);

/// run.trec, run.meta.json
RankingRun cmd_rerank(const ExperimentConfig& cfg);

std::string run_tag(const ExperimentConfig& cfg);

struct EvalOptions {
    fs::path run;
    fs::path qrels;
    fs::path baseline;  // optional earlier report for percent deltas
    std::uint32_t p_k = 20;
    std::uint32_t ndcg_k = 10;
    std::uint64_t seed = 0;
};

EvalOptions eval_from_json(const json& j, EvalOptions base);
json to_json(const EvalOptions& o);

/// report.json
json cmd_eval(const EvalOptions& opts, const fs::path& out);

enum class CompareLevel { automatic, seed, query };

struct CompareOptions {
    std::vector<fs::path> baseline;
    std::vector<fs::path> treatment;
    CompareLevel level = CompareLevel::automatic;
    std::uint64_t seed = 0;
};

CompareOptions compare_from_json(const json& j, CompareOptions base);
json to_json(const CompareOptions& o);

/// compare.json: per metric, both means, percent change and the one-tailed
/// test of treatment > baseline. Seed level compares report means and needs
/// two or more reports per side; query level pools per-query values.
/// automatic picks seed level when both sides have two or more reports.
json cmd_compare(const CompareOptions& opts, const fs::path& out);

}  // namespace isoret::pipeline
