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

#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isoret/error.hpp"
#include "isoret/pipeline.hpp"

namespace {

using namespace isoret;
using namespace isoret::pipeline;

/// Flags that override config-file keys when given.
class Overrides {
public:
    template <typename T>
    void option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto holder = std::make_shared<std::optional<T>>();
        app->add_option(flag, *holder, help);
        apply_.push_back([holder, key](json& j) {
            if (*holder) j[json::json_pointer(key)] = **holder;
        });
    }

    void list(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto holder = std::make_shared<std::vector<std::string>>();
        app->add_option(flag, *holder, help);
        apply_.push_back([holder, key](json& j) {
            if (!holder->empty()) j[json::json_pointer(key)] = *holder;
        });
    }

    void flag(CLI::App* app, const std::string& flag, const std::string& key, bool value, const std::string& help) {
        auto holder = std::make_shared<bool>(false);
        app->add_flag(flag, *holder, help);
        apply_.push_back([holder, key, value](json& j) {
            if (*holder) j[json::json_pointer(key)] = value;
        });
    }

    json apply(json j) const {
        for (const auto& f : apply_) f(j);
        return j;
    }

private:
    std::vector<std::function<void(json&)>> apply_;
};

struct Command {
    CLI::App* app = nullptr;
    std::string config;
    std::string out = ".";
    Overrides flags;

    /// Config file, then flags.
    json options() const {
        json j = config.empty() ? json::object() : load_json_object(config);
        return flags.apply(std::move(j));
    }
};

std::unique_ptr<Command> make_command(CLI::App& root, const char* name, const char* help, bool experiment) {
    auto c = std::make_unique<Command>();
    c->app = root.add_subcommand(name, help);
    c->app->add_option("--config", c->config, "JSON config file (flags take precedence)");
    c->flags.option<std::uint64_t>(c->app, "--seed", "/seed", "seed recorded in provenance");
    if (experiment) {
        c->flags.option<std::string>(c->app, "--out", "/output_dir", "output directory");
    } else {
        c->app->add_option("--out", c->out, "output directory");
    }
    return c;
}

void add_fit_flags(Command& c) {
    c.flags.option<std::string>(c.app, "--source", "/source_corpus", "source corpus (EMB1)");
    c.flags.option<std::string>(c.app, "--granularity", "/granularity", "token_wise | sequence_wise");
    c.flags.flag(c.app, "--separate-kinds", "/separate_kinds", true, "fit queries and documents separately");
    c.flags.option<std::string>(c.app, "--transform", "/transform", "transform path prefix");
}

int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::data: return 3;
        default: return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App root{"isotropy post-processing for dense-retrieval embeddings"};
    root.require_subcommand(1);

    auto gen = make_command(root, "gen", "generate a synthetic anisotropic corpus", false);
    auto& gf = gen->flags;
    gf.option<std::uint32_t>(gen->app, "--queries", "/n_queries", "query sequences");
    gf.option<std::uint32_t>(gen->app, "--docs", "/n_docs", "document sequences");
    gf.option<std::uint32_t>(gen->app, "--tokens-per-query", "/tokens_per_query", "tokens per query");
    gf.option<std::uint32_t>(gen->app, "--tokens-per-doc", "/tokens_per_doc", "tokens per document");
    gf.option<std::uint32_t>(gen->app, "--dim", "/dim", "embedding dimension");
    gf.option<double>(gen->app, "--offset", "/offset_magnitude", "common offset norm");
    gf.option<std::uint32_t>(gen->app, "--outlier-dims", "/outlier_dims", "number of outlier dimensions");
    gf.option<double>(gen->app, "--outlier-scale", "/outlier_scale", "outlier dimension multiplier");
    std::optional<double> axis_scale;
    gen->app->add_option("--axis-scale", axis_scale, "per-axis noise scale, all dimensions");

    auto scen = make_command(root, "scenario", "build the designed re-ranking scenario", false);
    auto& sf = scen->flags;
    sf.option<std::uint32_t>(scen->app, "--queries", "/n_queries", "queries");
    sf.option<std::uint32_t>(scen->app, "--docs-per-query", "/docs_per_query", "candidates per query");
    sf.option<std::uint32_t>(scen->app, "--dim", "/dim", "embedding dimension");
    sf.option<std::uint32_t>(scen->app, "--tokens-per-query", "/tokens_per_query", "tokens per query");
    sf.option<std::uint32_t>(scen->app, "--tokens-per-doc", "/tokens_per_doc", "tokens per document");
    sf.option<double>(scen->app, "--offset", "/offset_magnitude", "common offset norm");
    sf.option<std::uint32_t>(scen->app, "--dominant-dims", "/dominant_dims", "high-variance dimensions");
    sf.option<double>(scen->app, "--dominant-scale", "/dominant_scale", "noise scale on dominant dimensions");
    sf.option<double>(scen->app, "--signal-scale", "/signal_scale", "relevance signal scale");
    sf.option<double>(scen->app, "--token-noise", "/token_noise", "per-token noise scale");
    sf.option<double>(scen->app, "--offset-shift", "/offset_shift", "tilt of the offset direction");
    sf.option<double>(scen->app, "--axis-jitter", "/axis_jitter", "log-range of per-axis rescaling");

    auto meas = make_command(root, "measure", "isotropy metrics and per-dimension profile", false);
    auto& mf = meas->flags;
    mf.option<std::string>(meas->app, "--corpus", "/corpus", "corpus (EMB1)");
    mf.option<std::uint64_t>(meas->app, "--batch-size", "/batch_size", "average over row blocks of this size");
    mf.option<std::uint64_t>(meas->app, "--pairs", "/pairs", "sampled pairs for avgcos (exact when omitted)");
    mf.flag(meas->app, "--pooled", "/pooled", true, "one mean-pooled row per sequence");
    mf.option<double>(meas->app, "--outlier-factor", "/outlier_factor", "outlier threshold over the median");
    mf.option<std::string>(meas->app, "--transform", "/transform", "fitted transform prefix to apply first");

    auto fitw = make_command(root, "fit-whiten", "fit a whitening transform on the source corpus", true);
    add_fit_flags(*fitw);
    fitw->flags.option<double>(fitw->app, "--eps", "/whitening_eps", "relative eigenvalue floor");

    auto fitf = make_command(root, "fit-flow", "train a NICE or Glow flow on the source corpus", true);
    add_fit_flags(*fitf);
    auto& ff = fitf->flags;
    ff.option<std::string>(fitf->app, "--arch", "/post", "nice | glow");
    ff.option<std::uint32_t>(fitf->app, "--epochs", "/flow/epochs", "training epochs");
    ff.option<double>(fitf->app, "--lr", "/flow/learning_rate", "learning rate");
    ff.option<std::uint32_t>(fitf->app, "--batch-size", "/flow/batch_size", "minibatch rows");
    ff.option<std::uint32_t>(fitf->app, "--couplings", "/flow/couplings", "NICE coupling layers");
    ff.option<std::uint32_t>(fitf->app, "--levels", "/flow/levels", "Glow levels");
    ff.option<std::uint32_t>(fitf->app, "--depth", "/flow/depth", "Glow steps per level");
    ff.option<std::uint32_t>(fitf->app, "--hidden-layers", "/flow/hidden_layers", "coupling net hidden layers");
    ff.option<std::uint32_t>(fitf->app, "--hidden-units", "/flow/hidden_units", "coupling net hidden units");
    ff.flag(fitf->app, "--no-shuffle", "/flow/shuffle", false, "keep row order fixed");

    auto rr = make_command(root, "rerank", "score candidates on the target corpus", true);
    auto& rf = rr->flags;
    rf.option<std::string>(rr->app, "--source", "/source_corpus", "source corpus (target defaults to it)");
    rf.option<std::string>(rr->app, "--target", "/target_corpus", "target corpus (EMB1)");
    rf.option<std::string>(rr->app, "--candidates", "/candidates", "candidate lists (JSON lines)");
    rf.option<std::string>(rr->app, "--scorer", "/scorer", "colbert | repbert");
    rf.option<std::string>(rr->app, "--post", "/post", "none | whiten | nice | glow");
    rf.option<std::string>(rr->app, "--granularity", "/granularity", "token_wise | sequence_wise");
    rf.option<std::string>(rr->app, "--transform", "/transform", "fitted transform prefix");

    auto ev = make_command(root, "eval", "P@k and NDCG@k of a run", false);
    auto& ef = ev->flags;
    ef.option<std::string>(ev->app, "--run", "/run", "TREC run file");
    ef.option<std::string>(ev->app, "--qrels", "/qrels", "TREC qrels file");
    ef.option<std::string>(ev->app, "--baseline", "/baseline", "earlier report for percent deltas");
    ef.option<std::uint32_t>(ev->app, "--p-k", "/p_k", "precision cutoff");
    ef.option<std::uint32_t>(ev->app, "--ndcg-k", "/ndcg_k", "NDCG cutoff");

    auto cmp = make_command(root, "compare", "percent deltas and one-tailed t-test between reports", false);
    cmp->flags.list(cmp->app, "--baseline", "/baseline", "baseline reports");
    cmp->flags.list(cmp->app, "--treatment", "/treatment", "treatment reports");
    cmp->flags.option<std::string>(cmp->app, "--level", "/level", "auto | seed | query");

    try {
        root.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = root.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->app->parsed()) {
            const json j = gen->options();
            SynthParams p = synth_from_json(j, reference_synth_params());
            if (axis_scale) {
                p.axis_scales.assign(p.dim, *axis_scale);
            } else if (!j.contains("axis_scales") && p.axis_scales.size() != p.dim) {
                p.axis_scales.assign(p.dim, reference_synth_params().axis_scales.front());
            }
            cmd_gen(p, gen->out);
            std::printf("wrote %s\n", (fs::path(gen->out) / "corpus.emb").string().c_str());
        } else if (scen->app->parsed()) {
            const ScenarioParams p = scenario_from_json(scen->options(), ScenarioParams{});
            cmd_scenario(p, scen->out);
            std::printf("wrote scenario to %s\n", scen->out.c_str());
        } else if (meas->app->parsed()) {
            const MeasureOptions o = measure_from_json(meas->options(), MeasureOptions{});
            const IsotropyReport r = cmd_measure(o, meas->out);
            std::printf("I(W)=%.6f avgcos=%.6f rows=%llu\n", r.i_w, r.avg_cos,
                        static_cast<unsigned long long>(r.n_rows));
        } else if (fitw->app->parsed() || fitf->app->parsed()) {
            const bool whiten = fitw->app->parsed();
            json j = (whiten ? fitw : fitf)->options();
            if (whiten) {
                j["post"] = "whiten";
            } else if (!j.contains("post") || (j["post"] != "nice" && j["post"] != "glow")) {
                if (j.contains("post") && j["post"] != "none") {
                    throw ConfigError("fit-flow needs post nice or glow, got " + j["post"].dump());
                }
                j["post"] = "nice";
            }
            const FitSummary s = cmd_fit(config_from_json(j));
            std::printf("wrote %s\n", s.meta_path.string().c_str());
        } else if (rr->app->parsed()) {
            const RankingRun run = cmd_rerank(config_from_json(rr->options()));
            std::printf("ranked %zu queries (tag %s)\n", run.rankings.size(), run.tag.c_str());
        } else if (ev->app->parsed()) {
            const json report = cmd_eval(eval_from_json(ev->options(), EvalOptions{}), ev->out);
            for (const auto& [name, value] : report["metrics"].items()) {
                std::printf("%s=%.6f\n", name.c_str(), value.get<double>());
            }
        } else if (cmp->app->parsed()) {
            const json result = cmd_compare(compare_from_json(cmp->options(), CompareOptions{}), cmp->out);
            for (const auto& [name, m] : result["metrics"].items()) {
                std::printf("%s baseline=%.6f treatment=%.6f delta=%s%% p=%.4g\n", name.c_str(),
                            m["baseline"].get<double>(), m["treatment"].get<double>(),
                            m["delta_percent"].is_null() ? "n/a" : m["delta_percent"].dump().c_str(),
                            m["p_one_tailed"].get<double>());
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.category());
    }
    return 0;
}
