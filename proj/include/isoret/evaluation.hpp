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
#include <map>
#include <span>
#include <string>
#include <vector>

namespace isoret {

/// Graded judgments: qid -> docid -> grade (>= 0).
struct Qrels {
    std::map<std::string, std::map<std::string, int>> judgments;

    /// 0 for unjudged documents.
    int grade(const std::string& qid, const std::string& docid) const;
    bool has_relevant(const std::string& qid, int threshold = 1) const;
};

struct RunEntry {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

/// Per-query ranked lists, best first.
struct RankingRun {
    std::string tag = "isoret";
    std::map<std::string, std::vector<RunEntry>> rankings;

    friend bool operator==(const RankingRun&, const RankingRun&) = default;
};

/// Mean and per-query values of one metric. Queries without any document at
/// grade >= 1 in the qrels are excluded and counted in n_excluded.
struct MetricResult {
    std::uint32_t k = 0;
    double mean = 0.0;
    std::map<std::string, double> per_query;
    std::size_t n_evaluated = 0;
    std::size_t n_excluded = 0;
};

/// |{top-k docs with grade >= rel_threshold}| / k; k stays the denominator
/// when fewer than k documents were returned.
MetricResult precision_at_k(const RankingRun& run, const Qrels& qrels, std::uint32_t k = 20, int rel_threshold = 1);

/// Gain 2^g - 1, discount log2(rank + 1), ideal DCG from all judged grades.
MetricResult ndcg_at_k(const RankingRun& run, const Qrels& qrels, std::uint32_t k = 10);

struct EvalReport {
    MetricResult precision;
    MetricResult ndcg;
};

EvalReport evaluate(const RankingRun& run, const Qrels& qrels, std::uint32_t p_k = 20, std::uint32_t ndcg_k = 10);

struct TTestResult {
    double t = 0.0;
    double p = 0.5;
    double df = 0.0;
};

/// Two-sample pooled-variance t statistic for H1: mean(a) > mean(b) with its
/// one-tailed p = P(T_df > t), df = n_a + n_b - 2. Zero pooled variance gives
/// t = 0, p = 0.5 when the means agree and DegenerateVarianceError otherwise.
TTestResult ttest_one_tailed(std::span<const double> a, std::span<const double> b);

/// 100 * (treatment - baseline) / baseline.
double percent_change(double baseline, double treatment);

/// "qid iter docid grade" per line; iter is ignored. Errors carry the line number.
Qrels load_qrels(const std::filesystem::path& path);
Qrels parse_qrels(const std::string& text);
/// iter written as "0".
std::string format_qrels(const Qrels& qrels);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);

/// "qid Q0 docid rank score tag" per line; entries are ordered by rank.
RankingRun load_run(const std::filesystem::path& path);
RankingRun parse_run(const std::string& text);
std::string format_run(const RankingRun& run);
void save_run(const RankingRun& run, const std::filesystem::path& path);

}  // namespace isoret
