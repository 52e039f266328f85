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

// Acceptance gate: one PASS/FAIL line per criterion. Usage:
//   isoret_acceptance <path-to-isoret-cli> [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "isoret/binary_io.hpp"
#include "isoret/hashing.hpp"
#include "isoret/isotropy.hpp"
#include "isoret/pipeline.hpp"
#include "isoret/prng.hpp"
#include "isoret/scoring.hpp"
#include "isoret/whitening.hpp"
#include "oracles.hpp"

using namespace isoret;
using namespace isoret::pipeline;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

fs::path work_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("isoret_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

flow::Tensor gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
    SplitMix64 rng(seed);
    flow::Tensor x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = scale * rng.gaussian();
    }
    return x;
}

bool close_rel(double a, double b, double rel, double abs_floor) {
    return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

double report_metric(const fs::path& report, const char* name) {
    const auto bytes = io::read_file(report);
    return json::parse(bytes.begin(), bytes.end())["metrics"][name].get<double>();
}

// 1
void whitening_isotropy(Outcome& o) {
    const EmbeddingCorpus corpus = generate_anisotropic(reference_synth_params(0));
    const EmbeddingMatrix& W = corpus.matrix();
    const auto raw = measure(W);
    const auto white = measure(apply_whitening(fit_whitening(W), W));
    o.detail << "N=" << W.rows() << " raw avgcos=" << g17(raw.avg_cos) << " I=" << g17(raw.i_w)
             << "; whitened avgcos=" << g17(white.avg_cos) << " I=" << g17(white.i_w);
    o.require(raw.avg_cos >= 0.2, "raw avgcos >= 0.2");
    o.require(raw.i_w <= 0.7, "raw I(W) <= 0.7");
    o.require(std::abs(white.avg_cos) <= 0.02, "whitened |avgcos| <= 0.02");
    o.require(white.i_w >= 0.95, "whitened I(W) >= 0.95");
}

// 2
void whitening_exactness(Outcome& o) {
    const EmbeddingMatrix W = generate_anisotropic(reference_synth_params(0)).matrix();
    const auto T = fit_whitening(W);
    const EmbeddingMatrix Y = apply_whitening(T, W);
    const auto floored = T.floored();
    const Eigen::RowVectorXd mean = oracle::column_mean(Y);
    const Eigen::MatrixXd cov = oracle::covariance(Y);
    double mean_err = 0.0, cov_err = 0.0;
    for (Eigen::Index a = 0; a < Y.cols(); ++a) {
        if (floored[static_cast<std::size_t>(a)]) continue;
        mean_err = std::max(mean_err, std::abs(mean(a)));
        for (Eigen::Index b = 0; b < Y.cols(); ++b) {
            if (floored[static_cast<std::size_t>(b)]) continue;
            cov_err = std::max(cov_err, std::abs(cov(a, b) - (a == b ? 1.0 : 0.0)));
        }
    }
    o.detail << "max|mean|=" << g17(mean_err) << " max|cov-I|=" << g17(cov_err);
    o.require(mean_err <= 1e-10, "mean within 1e-10");
    o.require(cov_err <= 1e-8, "covariance within 1e-8");
}

// 3
void flow_correctness(Outcome& o) {
    {
        auto nice = flow::FlowModel::create(flow::NiceSpec{16, 4, 5, 64}, 1);
        oracle::randomize_parameters(nice, 2, 0.1);
        auto glow = flow::FlowModel::create(flow::GlowSpec{16, 2, 3, 2, 64}, 1);
        oracle::randomize_parameters(glow, 2, 0.1);
        const flow::Tensor x = gaussian(1024, 16, 3, 2.0);
        const double e_nice = (flow::flow_inverse(nice, flow::flow_forward(nice, x).z) - x).cwiseAbs().maxCoeff();
        const double e_glow = (flow::flow_inverse(glow, flow::flow_forward(glow, x).z) - x).cwiseAbs().maxCoeff();
        o.detail << "round trip NICE=" << g17(e_nice) << " Glow=" << g17(e_glow);
        o.require(e_nice <= 1e-9, "NICE round trip <= 1e-9");
        o.require(e_glow <= 1e-6, "Glow round trip <= 1e-6");
    }
    double worst_logdet = 0.0;
    for (unsigned trial = 0; trial < 20; ++trial) {
        for (bool glow : {false, true}) {
            auto m = glow ? flow::FlowModel::create(flow::GlowSpec{6, 2, 3, 2, 16}, trial)
                          : flow::FlowModel::create(flow::NiceSpec{6, 4, 3, 16}, trial);
            oracle::randomize_parameters(m, 1000 + trial, 0.4);
            const flow::Tensor x = gaussian(1, 6, 2000 + trial);
            const double a = flow::flow_forward(m, x).logdet(0);
            const double n = oracle::logdet_numeric(m, x.row(0));
            const double rel = std::abs(a - n) / std::max(std::abs(n), 1.0);
            worst_logdet = std::max(worst_logdet, rel);
        }
    }
    o.detail << "; logdet worst rel=" << g17(worst_logdet);
    o.require(worst_logdet <= 1e-4, "logdet relative error <= 1e-4");

    std::size_t checked = 0, bad = 0;
    double worst_grad = 0.0;
    for (unsigned trial = 0; trial < 3; ++trial) {
        for (bool glow : {false, true}) {
            auto m = glow ? flow::FlowModel::create(flow::GlowSpec{6, 2, 3, 2, 16}, trial)
                          : flow::FlowModel::create(flow::NiceSpec{6, 4, 3, 16}, trial);
            oracle::randomize_parameters(m, 3000 + trial, 0.3);
            const flow::Tensor x = gaussian(8, 6, 4000 + trial);
            const auto analytic = flow::nll_gradient(m, x);
            const auto numeric = oracle::nll_gradient_numeric(m, x, 1e-5);
            for (std::size_t k = 0; k < analytic.size(); ++k) {
                for (Eigen::Index i = 0; i < analytic[k].size(); ++i) {
                    const double a = analytic[k].data()[i], n = numeric[k].data()[i];
                    ++checked;
                    if (!close_rel(a, n, 1e-4, 1e-8)) ++bad;
                    if (std::abs(a - n) > 1e-8) {
                        worst_grad = std::max(worst_grad, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
                    }
                }
            }
        }
    }
    o.detail << "; gradients checked=" << checked << " worst rel=" << g17(worst_grad);
    o.require(bad == 0, std::to_string(bad) + " gradient entries outside tolerance");
}

// 4
void flow_training(Outcome& o, bool glow) {
    const EmbeddingMatrix W = generate_anisotropic(reference_synth_params(0)).matrix();
    flow::FlowTrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.batch_size = 256;
    cfg.epochs = 13;  // 16 steps per epoch
    cfg.seed = 1;
    const flow::ArchSpec arch = glow ? flow::ArchSpec(flow::GlowSpec{64, 2, 3, 2, 512})
                                     : flow::ArchSpec(flow::NiceSpec{64, 4, 5, 1000});
    const auto result = flow::train_flow(W, arch, cfg);
    const auto& r = result.report;
    const double raw = avg_pairwise_cosine(W);
    const double mapped = avg_pairwise_cosine(flow::apply_flow(result.model, W));
    o.detail << (glow ? "Glow" : "NICE") << " steps=" << r.steps << " initial nll=" << g17(r.initial_nll)
             << " final nll=" << g17(r.epoch_nll.back()) << " ratio=" << g17(r.epoch_nll.back() / r.initial_nll)
             << "; avgcos raw=" << g17(raw) << " flow=" << g17(mapped);
    o.require(r.steps >= 200, "at least 200 steps");
    o.require(r.epoch_nll.back() <= 0.9 * r.initial_nll, "final nll <= 0.9 initial");
    o.require(std::abs(mapped) <= 0.5 * std::abs(raw), "|avgcos| reduced by >= 50%");
}

// 5
void metric_oracles(Outcome& o) {
    std::uint64_t state = 5;
    SplitMix64 rng(state);
    double worst = 0.0;
    for (int instance = 0; instance < 50; ++instance) {
        Qrels qrels;
        RankingRun run;
        std::map<std::string, std::pair<double, double>> expect;
        for (int qi = 0; qi < 5; ++qi) {
            const std::string qid = "q" + std::to_string(qi);
            std::vector<std::string> docs;
            const auto n_docs = 1 + rng.below(40);
            for (std::uint64_t i = 0; i < n_docs; ++i) docs.push_back("d" + std::to_string(i));
            shuffle(docs.begin(), docs.end(), rng);
            bool any = false;
            for (int i = 0; i < 45; ++i) {
                if (rng.below(3) == 0) {
                    const int g = static_cast<int>(rng.below(4));
                    qrels.judgments[qid]["d" + std::to_string(i)] = g;
                    any = any || g >= 1;
                }
            }
            double score = 100.0;
            for (const auto& d : docs) run.rankings[qid].push_back({d, score--});
            if (any) {
                expect[qid] = {oracle::precision_at_k(docs, qrels.judgments[qid], 20),
                               oracle::ndcg_at_k(docs, qrels.judgments[qid], 10)};
            }
        }
        const auto r = evaluate(run, qrels);
        if (r.precision.per_query.size() != expect.size()) {
            o.require(false, "evaluated query set differs");
            return;
        }
        double p_mean = 0.0, n_mean = 0.0;
        for (const auto& [qid, e] : expect) {
            worst = std::max({worst, std::abs(r.precision.per_query.at(qid) - e.first),
                              std::abs(r.ndcg.per_query.at(qid) - e.second)});
            p_mean += e.first;
            n_mean += e.second;
        }
        if (!expect.empty()) {
            const double k = static_cast<double>(expect.size());
            worst = std::max({worst, std::abs(r.precision.mean - p_mean / k), std::abs(r.ndcg.mean - n_mean / k)});
        }
    }
    Qrels hand;
    hand.judgments["q"] = {{"a", 1}, {"b", 0}, {"c", 2}};
    RankingRun hand_run;
    hand_run.rankings["q"] = {{"a", 3}, {"b", 2}, {"c", 1}};
    const double anchor = ndcg_at_k(hand_run, hand).mean;
    o.detail << "50 instances worst diff=" << g17(worst) << "; NDCG [1,0,2]=" << g17(anchor);
    o.require(worst <= 1e-12, "metrics within 1e-12 of brute force");
    o.require(std::abs(anchor - 0.68853) <= 1e-5, "hand NDCG anchor within 1e-5");
}

// 6
void scoring_oracles(Outcome& o) {
    SplitMix64 rng(6);
    double worst = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
        const auto nq = static_cast<Eigen::Index>(1 + rng.below(6));
        const auto nd = static_cast<Eigen::Index>(1 + rng.below(9));
        EmbeddingMatrix q(nq, 12), d(nd, 12);
        for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.gaussian();
        for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.gaussian();
        worst = std::max({worst, std::abs(colbert_score(q, d) - oracle::colbert(q, d)),
                          std::abs(repbert_score(q, d) - oracle::repbert(q, d))});
    }
    EmbeddingMatrix q2(2, 2), d1(1, 2), e1(1, 2), d2(2, 2), e2(1, 2);
    q2 << 1, 0, 0, 1;
    d1 << 1, 1;
    e1 << 1, 0;
    d2 << 0, 1, 1, 0;
    e2 << 0, 1;
    const double a1 = colbert_score(q2, d1), a2 = colbert_score(e1, d2), a3 = repbert_score(e1, e2);
    o.detail << "100 pairs worst diff=" << g17(worst) << "; anchors " << g17(a1) << " " << g17(a2) << " " << g17(a3);
    o.require(worst <= 1e-12, "scores within 1e-12 of naive oracles");
    o.require(std::abs(a1 - 1.414214) <= 1e-6, "anchor 1.414214");
    o.require(std::abs(a2 - 1.0) <= 1e-6, "anchor 1.0");
    o.require(std::abs(a3) <= 1e-6, "anchor 0.0");
}

// 7
void isotropy_anchors(Outcome& o) {
    EmbeddingMatrix cross(4, 2), single(1, 2), three(3, 2);
    cross << 1, 0, -1, 0, 0, 1, 0, -1;
    single << 1, 0;
    three << 1, 0, 0, 1, -1, 0;
    const double c = partition_ratio(cross), s = partition_ratio(single), t = avg_pairwise_cosine(three);
    o.detail << "cross I=" << g17(c) << " single I=" << g17(s) << " 3-row avgcos=" << g17(t);
    o.require(std::abs(c - 1.0) <= 1e-9, "cross = 1");
    o.require(std::abs(s - std::exp(-2.0)) <= 1e-6, "single row = e^-2");
    o.require(t == -1.0 / 3.0, "avgcos = -1/3 exactly");
}

struct ScenarioRuns {
    double raw = 0.0;
    double treated = 0.0;
};

/// Runs rerank with post=none and with `post` on `scenario_dir`, fitting on
/// `source`, and evaluates both.
ScenarioRuns rerank_pair(const fs::path& dir, const fs::path& source, const fs::path& target_dir, PostKind post,
                         ScorerKind scorer, std::uint32_t epochs) {
    ExperimentConfig cfg;
    cfg.source_corpus = source;
    cfg.target_corpus = target_dir / "corpus.emb";
    cfg.candidates = target_dir / "candidates.jsonl";
    cfg.qrels = target_dir / "qrels.txt";
    cfg.scorer = scorer;
    cfg.post = post;
    if (epochs > 0) cfg.flow.epochs = epochs;
    cfg.seed = 1;
    cfg.transform = dir / ("fit_" + std::string(to_string(post))) / "transform";
    if (!fs::exists(fs::path(cfg.transform.string() + ".meta.json"))) cmd_fit(cfg);
    const std::string tag = std::string(to_string(post)) + "_" + to_string(scorer);
    cfg.output_dir = dir / ("run_" + tag);
    cmd_rerank(cfg);
    auto raw_cfg = cfg;
    raw_cfg.post = PostKind::none;
    raw_cfg.output_dir = dir / ("run_raw_" + tag);
    cmd_rerank(raw_cfg);
    cmd_eval({raw_cfg.output_dir / "run.trec", cfg.qrels, {}, 20, 10, 0}, dir / ("eval_raw_" + tag));
    cmd_eval({cfg.output_dir / "run.trec", cfg.qrels, {}, 20, 10, 0}, dir / ("eval_" + tag));
    return {report_metric(dir / ("eval_raw_" + tag) / "report.json", "NDCG@10"),
            report_metric(dir / ("eval_" + tag) / "report.json", "NDCG@10")};
}

// 8
void designed_scenario(Outcome& o) {
    const fs::path dir = work_dir("scenario");
    ScenarioParams p;
    p.seed = 7;
    p.n_queries = 64;
    p.docs_per_query = 20;
    p.dim = 64;
    cmd_scenario(p, dir / "s7");
    const fs::path source = dir / "s7" / "corpus.emb";
    const auto white = rerank_pair(dir, source, dir / "s7", PostKind::whiten, ScorerKind::colbert, 0);
    const auto white_rep = rerank_pair(dir, source, dir / "s7", PostKind::whiten, ScorerKind::repbert, 0);
    const auto glow = rerank_pair(dir, source, dir / "s7", PostKind::glow, ScorerKind::colbert, 10);
    o.detail << "ColBERT NDCG@10 raw=" << g17(white.raw) << " whitened=" << g17(white.treated)
             << " (x" << g17(white.treated / white.raw) << ") glow=" << g17(glow.treated)
             << "; RepBERT raw=" << g17(white_rep.raw) << " whitened=" << g17(white_rep.treated);
    o.require(white.treated >= 1.2 * white.raw, "whitened >= 1.2 x raw");
    o.require(glow.treated > glow.raw, "Glow > raw");
}

// 9
void ood_protocol(Outcome& o) {
    const fs::path dir = work_dir("ood");
    ScenarioParams p;
    p.seed = 7;
    cmd_scenario(p, dir / "source");
    const fs::path source = dir / "source" / "corpus.emb";
    const fs::path target_dir = dir / "target";

    // Fit while the target does not exist yet.
    ExperimentConfig cfg;
    cfg.source_corpus = source;
    cfg.target_corpus = target_dir / "corpus.emb";
    cfg.scorer = ScorerKind::colbert;
    cfg.post = PostKind::whiten;
    cfg.transform = dir / "fit_whiten" / "transform";
    const bool target_absent = !fs::exists(cfg.target_corpus);
    const FitSummary fit = cmd_fit(cfg);

    cmd_scenario(shifted_target(p, 11), target_dir);
    const auto r = rerank_pair(dir, source, target_dir, PostKind::whiten, ScorerKind::colbert, 0);

    const auto meta_bytes = io::read_file(dir / "run_whiten_colbert" / "run.meta.json");
    const json run_meta = json::parse(meta_bytes.begin(), meta_bytes.end());
    const std::string source_sha = sha256_file(source);
    const std::string target_sha = sha256_file(cfg.target_corpus);
    const bool provenance_ok = target_absent && fit.inputs_read == std::vector<fs::path>{source} &&
                               fit.meta["source_sha256"] == source_sha && source_sha != target_sha &&
                               run_meta["transform"]["source_sha256"] == source_sha &&
                               run_meta["target_sha256"] == target_sha && run_meta["out_of_distribution"] == true;
    o.detail << "target NDCG@10 raw=" << g17(r.raw) << " whitened=" << g17(r.treated) << " (x"
             << g17(r.treated / r.raw) << "); provenance " << (provenance_ok ? "verified" : "MISMATCH");
    o.require(r.treated >= 1.1 * r.raw, "whitened >= 1.1 x raw on target");
    o.require(provenance_ok, "fit provenance excludes the target");
}

// 10
void ttest_anchor(Outcome& o) {
    const std::vector<double> a{2, 3, 4}, b{1, 2, 3};
    const auto r = ttest_one_tailed(a, b);
    const double ref = oracle::student_upper_tail(r.t, r.df);
    o.detail << "t=" << g17(r.t) << " p=" << g17(r.p) << " oracle p=" << g17(ref);
    o.require(std::abs(r.t - 1.224745) <= 1e-6, "t = 1.224745");
    o.require(std::abs(r.p - ref) <= 1e-3 && std::abs(r.p - 0.1438) <= 1e-3, "p within 1e-3 of oracle");
}

// 11
void determinism(Outcome& o, const std::string& cli) {
    const fs::path root = work_dir("determinism");
    const fs::path data = root / "data";
    const fs::path exe = fs::absolute(cli);
    const auto sh = [&](const std::string& args, const fs::path& cwd) {
        const std::string cmd = "cd \"" + cwd.string() + "\" && \"" + exe.string() + "\" " + args + " > /dev/null";
        return std::system(cmd.c_str());
    };
    fs::create_directories(root / "a");
    fs::create_directories(root / "b");
    bool setup_ok = sh("scenario --seed 7 --queries 16 --out " + (data / "s").string(), root) == 0;
    json cfg = {{"source_corpus", (data / "s" / "corpus.emb").string()},
                {"candidates", (data / "s" / "candidates.jsonl").string()},
                {"scorer", "colbert"},
                {"seed", 3},
                {"flow", {{"epochs", 1}, {"hidden_layers", 1}, {"hidden_units", 32}}}};
    io::write_text(data / "config.json", cfg.dump(2));
    const std::string c = " --config " + (data / "config.json").string();

    std::vector<std::string> failures;
    for (const char* copy : {"a", "b"}) {
        const fs::path cwd = root / copy;
        const fs::path out = ".";
        const std::string s = (data / "s").string();
        const std::vector<std::string> steps = {
            "gen --seed 5 --queries 8 --docs 8 --out " + (out / "gen").string(),
            "scenario --seed 9 --queries 8 --out " + (out / "scenario").string(),
            "measure --corpus " + s + "/corpus.emb --batch-size 512 --out " + (out / "measure").string(),
            "fit-whiten" + c + " --out " + (out / "fw").string(),
            "fit-flow" + c + " --arch glow --out " + (out / "ff").string(),
            "rerank" + c + " --post whiten --transform " + (out / "fw" / "transform").string() + " --out " +
                (out / "rr").string(),
            "rerank" + c + " --out " + (out / "raw").string(),
            "eval --run " + (out / "rr" / "run.trec").string() + " --qrels " + s + "/qrels.txt --out " +
                (out / "ev").string(),
            "eval --run " + (out / "raw" / "run.trec").string() + " --qrels " + s + "/qrels.txt --out " +
                (out / "evraw").string(),
            "compare --baseline " + (out / "evraw" / "report.json").string() + " --treatment " +
                (out / "ev" / "report.json").string() + " --out " + (out / "cmp").string(),
        };
        for (const auto& step : steps) {
            if (sh(step, cwd) != 0) failures.push_back("exit status of: " + step);
        }
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), root / "a");
        const fs::path twin = root / "b" / rel;
        ++compared;
        if (!fs::exists(twin) || io::read_file(entry.path()) != io::read_file(twin)) {
            failures.push_back("differs: " + rel.string());
        }
    }
    o.detail << "subcommands gen, scenario, measure, fit-whiten, fit-flow, rerank, eval, compare run twice; "
             << compared << " files compared byte for byte";
    o.require(setup_ok, "scenario setup");
    o.require(compared == 19, "all 19 expected output files present");
    for (const auto& f : failures) o.require(false, f);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <isoret-cli> [criteria...]\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];
    std::set<int> only;
    for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<void(Outcome&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "whitening isotropy", 10, whitening_isotropy},
        {2, "whitening exactness", 5, whitening_exactness},
        {3, "flow correctness", 120, flow_correctness},
        {4, "flow training NICE", 300, [](Outcome& o) { flow_training(o, false); }},
        {4, "flow training Glow", 300, [](Outcome& o) { flow_training(o, true); }},
        {5, "metric oracles", 60, metric_oracles},
        {6, "scoring oracles", 60, scoring_oracles},
        {7, "isotropy anchors", 60, isotropy_anchors},
        {8, "designed-scenario re-ranking", 300, designed_scenario},
        {9, "OOD protocol", 300, ood_protocol},
        {10, "t-test anchor", 60, ttest_anchor},
        {11, "determinism", 600, [&](Outcome& o) { determinism(o, cli); }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char timing[64];
        std::snprintf(timing, sizeof(timing), " (%.1f s, budget %.0f s)", secs, c.budget_s);
        o.require(secs <= c.budget_s, "runtime budget");
        std::printf("[%s] criterion %d %s: %s%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str(),
                    timing);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%s: %d failing\n", failed ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED", failed);
    return failed ? 1 : 0;
}
