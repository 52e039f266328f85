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

#include <doctest.h>

#include "isoret/binary_io.hpp"
#include "isoret/error.hpp"
#include "isoret/hashing.hpp"
#include "isoret/pipeline.hpp"

using namespace isoret;
using namespace isoret::pipeline;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("isoret_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

double ndcg_of(const Scenario& s, ScorerKind scorer, const PostProcessor& post) {
    const PreparedCorpus prepared(s.corpus, scorer, post);
    RankingRun run;
    for (const auto& [qid, docs] : s.candidates) {
        for (const auto& c : prepared.rank(qid, docs)) run.rankings[qid].push_back({c.doc_id, c.score});
    }
    return ndcg_at_k(run, s.qrels).mean;
}

ExperimentConfig scenario_config(const fs::path& dir) {
    ExperimentConfig cfg;
    cfg.source_corpus = dir / "s" / "corpus.emb";
    cfg.candidates = dir / "s" / "candidates.jsonl";
    cfg.qrels = dir / "s" / "qrels.txt";
    cfg.scorer = ScorerKind::colbert;
    cfg.transform = dir / "fit" / "transform";
    return cfg;
}

}  // namespace

TEST_CASE("config overlay and validation") {
    const json j = json::parse(R"({"scorer": "colbert", "post": "whiten", "flow": {"epochs": 3}, "seed": 9})");
    ExperimentConfig base;
    base.flow.learning_rate = 0.5;
    const auto cfg = config_from_json(j, base);
    CHECK(cfg.scorer == ScorerKind::colbert);
    CHECK(cfg.post == PostKind::whiten);
    CHECK(cfg.flow.epochs == 3);
    CHECK(cfg.flow.learning_rate == 0.5);
    CHECK(cfg.seed == 9);
    CHECK(config_from_json(to_json(cfg)).seed == 9);
    CHECK(to_json(config_from_json(to_json(cfg))) == to_json(cfg));

    CHECK_THROWS_AS(config_from_json(json::parse(R"({"sorcer": 1})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"seed": -1})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"seed": "7"})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"post": "pca"})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"flow": {"epoch": 2}})")), ConfigError);

    auto moved = cfg;
    moved.output_dir = "elsewhere";
    CHECK(config_hash(moved) == config_hash(cfg));
    moved.seed = 10;
    CHECK(config_hash(moved) != config_hash(cfg));
}

TEST_CASE("colbert with sequence_wise fails before touching files") {
    ExperimentConfig cfg;
    cfg.scorer = ScorerKind::colbert;
    cfg.granularity = Granularity::sequence_wise;
    cfg.post = PostKind::whiten;
    cfg.source_corpus = "/nonexistent/source.emb";
    cfg.candidates = "/nonexistent/candidates.jsonl";
    CHECK_THROWS_AS(cmd_fit(cfg), ConfigError);
    CHECK_THROWS_AS(cmd_rerank(cfg), ConfigError);
    try {
        cmd_rerank(cfg);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("ColBERT") != std::string::npos);
    }
}

TEST_CASE("candidate lists") {
    CandidateLists c{{"q1", {"b", "a"}}, {"q2", {}}};
    const std::string text = format_candidates(c);
    CHECK(text == "{\"docs\":[\"b\",\"a\"],\"qid\":\"q1\"}\n{\"docs\":[],\"qid\":\"q2\"}\n");
    CHECK(parse_candidates(text) == c);
    CHECK_THROWS_AS(parse_candidates("{\"qid\": \"q\"}\n"), ParseError);
    CHECK_THROWS_AS(parse_candidates("not json\n"), ParseError);
    CHECK_THROWS_AS(parse_candidates("{\"qid\":\"q\",\"docs\":[]}\n{\"qid\":\"q\",\"docs\":[]}\n"), ParseError);
}

TEST_CASE("designed scenario") {
    ScenarioParams p;
    p.n_queries = 16;
    SUBCASE("deterministic") {
        const auto a = build_designed_scenario(p);
        const auto b = build_designed_scenario(p);
        CHECK(a.corpus == b.corpus);
        CHECK(a.qrels.judgments == b.qrels.judgments);
        CHECK(a.candidates == b.candidates);
        CHECK(a.candidates.size() == 16);
        CHECK(a.candidates.begin()->second.size() == p.docs_per_query);
    }
    SUBCASE("without offset and dominant noise raw scoring already works") {
        p.offset_magnitude = 0.0;
        p.dominant_scale = 0.0;
        const auto s = build_designed_scenario(p);
        CHECK(ndcg_of(s, ScorerKind::colbert, PostProcessor::none()) >= 0.95);
        CHECK(ndcg_of(s, ScorerKind::repbert, PostProcessor::none()) >= 0.95);
    }
    SUBCASE("bad parameters") {
        p.dominant_dims = p.dim;
        CHECK_THROWS_AS(build_designed_scenario(p), ConfigError);
    }
}

TEST_CASE("fit and rerank through files") {
    const fs::path dir = fresh_dir("pipeline");
    ScenarioParams sp;
    sp.n_queries = 12;
    cmd_scenario(sp, dir / "s");

    ExperimentConfig cfg = scenario_config(dir);
    cfg.post = PostKind::whiten;
    cfg.target_corpus = dir / "never_written.emb";
    cfg.output_dir = dir / "fit";
    const FitSummary fit = cmd_fit(cfg);
    CHECK(fit.inputs_read == std::vector<fs::path>{cfg.source_corpus});
    CHECK(fit.meta["source_sha256"] == sha256_file(cfg.source_corpus));
    CHECK(fs::exists(dir / "fit" / "transform.wht"));
    CHECK(fs::exists(dir / "fit" / "transform.meta.json"));

    cfg.target_corpus.clear();
    cfg.output_dir = dir / "run_white";
    const RankingRun white = cmd_rerank(cfg);
    CHECK(white.tag == run_tag(cfg));
    CHECK(white.tag.find(config_hash(cfg).substr(0, 12)) != std::string::npos);

    auto raw_cfg = cfg;
    raw_cfg.post = PostKind::none;
    raw_cfg.output_dir = dir / "run_raw";
    cmd_rerank(raw_cfg);

    const json raw = cmd_eval({dir / "run_raw" / "run.trec", cfg.qrels, {}, 20, 10, 0}, dir / "eval_raw");
    const json whitened =
        cmd_eval({dir / "run_white" / "run.trec", cfg.qrels, dir / "eval_raw" / "report.json", 20, 10, 0},
                 dir / "eval_white");
    CHECK(whitened["metrics"]["NDCG@10"].get<double>() > raw["metrics"]["NDCG@10"].get<double>());
    CHECK(whitened["baseline"]["delta_percent"]["NDCG@10"].get<double>() > 0.0);

    const json cmp = cmd_compare({{dir / "eval_raw" / "report.json"}, {dir / "eval_white" / "report.json"}}, dir);
    CHECK(cmp["level"] == "query");
    CHECK(cmp["metrics"]["NDCG@10"]["n_treatment"] == 12);
    CHECK(cmp["metrics"]["NDCG@10"]["t"].get<double>() > 0.0);

    SUBCASE("post kind must match the fitted transform") {
        auto wrong = cfg;
        wrong.post = PostKind::glow;
        CHECK_THROWS_AS(cmd_rerank(wrong), ConfigError);
    }
    SUBCASE("granularity must match the fitted transform") {
        auto wrong = cfg;
        wrong.scorer = ScorerKind::repbert;
        wrong.granularity = Granularity::sequence_wise;
        CHECK_THROWS_AS(cmd_rerank(wrong), ConfigError);
    }
    SUBCASE("tampered transform is rejected") {
        auto bytes = io::read_file(dir / "fit" / "transform.wht");
        bytes[bytes.size() - 1] ^= 1;
        io::write_file(dir / "fit" / "transform.wht", bytes);
        CHECK_THROWS_AS(cmd_rerank(cfg), IntegrityError);
    }
    SUBCASE("missing transform") {
        auto wrong = cfg;
        wrong.transform = dir / "nowhere";
        CHECK_THROWS_AS(cmd_rerank(wrong), ConfigError);
    }
}

TEST_CASE("separate query and document transforms") {
    const fs::path dir = fresh_dir("separate");
    ScenarioParams sp;
    sp.n_queries = 8;
    cmd_scenario(sp, dir / "s");
    ExperimentConfig cfg = scenario_config(dir);
    cfg.post = PostKind::whiten;
    cfg.separate_kinds = true;
    cmd_fit(cfg);
    CHECK(fs::exists(dir / "fit" / "transform.query.wht"));
    CHECK(fs::exists(dir / "fit" / "transform.document.wht"));
    const auto lt = load_transform(cfg.transform);
    CHECK(std::holds_alternative<WhiteningTransform>(lt.post.query));
    cfg.output_dir = dir / "run";
    CHECK(cmd_rerank(cfg).rankings.size() == 8);
}

TEST_CASE("flow fit writes a training report") {
    const fs::path dir = fresh_dir("flowfit");
    ScenarioParams sp;
    sp.n_queries = 4;
    sp.dim = 8;
    sp.dominant_dims = 2;
    cmd_scenario(sp, dir / "s");
    ExperimentConfig cfg = scenario_config(dir);
    cfg.post = PostKind::nice;
    cfg.flow.epochs = 2;
    cfg.flow.hidden_layers = 1;
    cfg.flow.hidden_units = 8;
    const auto fit = cmd_fit(cfg);
    const json& report = fit.meta["files"]["shared"]["train_report"];
    CHECK(report["epoch_nll"].size() == 2);
    CHECK(report["checksum"] == sha256_file(dir / "fit" / "transform.flw"));
    cfg.output_dir = dir / "run";
    CHECK(cmd_rerank(cfg).rankings.size() == 4);
}

TEST_CASE("measure writes JSON and CSV") {
    const fs::path dir = fresh_dir("measure");
    SynthParams p = reference_synth_params(3);
    p.n_queries = 4;
    p.n_docs = 4;
    cmd_gen(p, dir / "g");
    MeasureOptions o;
    o.corpus = dir / "g" / "corpus.emb";
    const IsotropyReport r = cmd_measure(o, dir / "m");
    CHECK(r.n_rows == 4 * 8 + 4 * 32);
    const auto csv = io::read_file(dir / "m" / "dimension_profile.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 65);
    const auto bytes = io::read_file(dir / "m" / "isotropy.json");
    const json j = json::parse(bytes.begin(), bytes.end());
    CHECK(j["outlier_dims"].size() == 4);
    CHECK(j["provenance"]["seed"] == 0);

    o.pooled = true;
    CHECK(cmd_measure(o, dir / "m2").n_rows == 8);
}
