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

#include "isoret/pipeline.hpp"

#include <charconv>
#include <initializer_list>
#include <numeric>
#include <set>
#include <sstream>
#include <type_traits>

#include "isoret/binary_io.hpp"
#include "isoret/error.hpp"
#include "isoret/hashing.hpp"
#include "isoret/isotropy.hpp"
#include "isoret/whitening.hpp"

namespace isoret::pipeline {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ConfigError("unknown " + what + " key '" + key + "'");
    }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    const auto bad = [&](const char* expected) {
        return ConfigError(std::string("'") + key + "' must be " + expected + ", got " + it->dump());
    };
    if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw bad("a boolean");
        out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_unsigned()) throw bad("a non-negative integer");
        const auto v = it->template get<std::uint64_t>();
        if (v > std::numeric_limits<T>::max()) throw bad("in range");
        out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw bad("a number");
        out = it->template get<double>();
    } else if constexpr (std::is_same_v<T, fs::path> || std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw bad("a string");
        out = it->template get<std::string>();
    } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
        if (it->is_null()) {
            out.reset();
        } else {
            std::uint64_t v = 0;
            take(j, key, v);
            out = v;
        }
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!it->is_array()) throw bad("an array of numbers");
        out.clear();
        for (const auto& e : *it) {
            if (!e.is_number()) throw bad("an array of numbers");
            out.push_back(e.template get<double>());
        }
    } else {
        static_assert(std::is_same_v<T, std::vector<fs::path>>);
        if (!it->is_array()) throw bad("an array of paths");
        out.clear();
        for (const auto& e : *it) {
            if (!e.is_string()) throw bad("an array of paths");
            out.emplace_back(e.template get<std::string>());
        }
    }
}

std::string take_string(const json& j, const char* key, const std::string& fallback) {
    std::string s = fallback;
    take(j, key, s);
    return s;
}

ScorerKind parse_scorer(const std::string& s) {
    if (s == "colbert") return ScorerKind::colbert;
    if (s == "repbert") return ScorerKind::repbert;
    throw ConfigError("scorer must be colbert or repbert, got '" + s + "'");
}

PostKind parse_post(const std::string& s) {
    for (auto k : {PostKind::none, PostKind::whiten, PostKind::nice, PostKind::glow}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("post must be none, whiten, nice or glow, got '" + s + "'");
}

Granularity parse_granularity(const std::string& s) {
    if (s == "token_wise") return Granularity::token_wise;
    if (s == "sequence_wise") return Granularity::sequence_wise;
    throw ConfigError("granularity must be token_wise or sequence_wise, got '" + s + "'");
}

const char* to_string(CompareLevel level) {
    switch (level) {
        case CompareLevel::seed: return "seed";
        case CompareLevel::query: return "query";
        default: return "auto";
    }
}

CompareLevel parse_level(const std::string& s) {
    if (s == "auto") return CompareLevel::automatic;
    if (s == "seed") return CompareLevel::seed;
    if (s == "query") return CompareLevel::query;
    throw ConfigError("level must be auto, seed or query, got '" + s + "'");
}

json paths_json(const std::vector<fs::path>& paths) {
    json out = json::array();
    for (const auto& p : paths) out.push_back(p.generic_string());
    return out;
}

fs::path with_suffix(const fs::path& prefix, const std::string& suffix) { return fs::path(prefix.string() + suffix); }

void require_input(const fs::path& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string(what) + " path is not set");
    if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " '" + path.string() + "' does not exist");
}

void prepare_dir(const fs::path& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path, const char* what) {
    const auto bytes = io::read_file(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw FormatError(std::string(what) + " '" + path.string() + "' is not a JSON object");
    }
    return j;
}

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Token rows (or pooled rows) of the sequences of one kind; every kind when
/// `kind` is unset.
EmbeddingMatrix fit_rows(const EmbeddingCorpus& corpus, Granularity g, std::optional<SequenceKind> kind) {
    const auto& seqs = corpus.sequences();
    const bool pooled = g == Granularity::sequence_wise;
    if (!kind && !pooled) return corpus.matrix();
    Eigen::Index rows = 0;
    for (const auto& s : seqs) {
        if (!kind || s.kind == *kind) rows += pooled ? 1 : static_cast<Eigen::Index>(s.token_count);
    }
    EmbeddingMatrix out(rows, corpus.dim());
    Eigen::Index at = 0;
    for (const auto& s : seqs) {
        if (kind && s.kind != *kind) continue;
        if (pooled) {
            out.row(at++) = corpus.tokens(s).colwise().mean();
        } else {
            out.middleRows(at, s.token_count) = corpus.tokens(s);
            at += s.token_count;
        }
    }
    if (rows == 0) throw EmptyInputError(std::string("corpus has no ") + to_string(*kind) + " sequences to fit on");
    return out;
}

json train_report_json(const flow::TrainReport& r) {
    return {{"initial_nll", r.initial_nll}, {"epoch_nll", r.epoch_nll}, {"steps", r.steps}, {"checksum", r.checksum}};
}

std::string metric_name(const char* prefix, std::uint32_t k) { return prefix + std::to_string(k); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

json percent_or_null(double baseline, double treatment) {
    if (baseline == 0.0) return nullptr;
    return percent_change(baseline, treatment);
}

}  // namespace

const char* to_string(PostKind kind) noexcept {
    switch (kind) {
        case PostKind::whiten: return "whiten";
        case PostKind::nice: return "nice";
        case PostKind::glow: return "glow";
        default: return "none";
    }
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig cfg) {
    check_keys(j,
               {"source_corpus", "target_corpus", "qrels", "candidates", "scorer", "post", "granularity",
                "separate_kinds", "whitening_eps", "flow", "seed", "output_dir", "transform"},
               "config");
    take(j, "source_corpus", cfg.source_corpus);
    take(j, "target_corpus", cfg.target_corpus);
    take(j, "qrels", cfg.qrels);
    take(j, "candidates", cfg.candidates);
    cfg.scorer = parse_scorer(take_string(j, "scorer", to_string(cfg.scorer)));
    cfg.post = parse_post(take_string(j, "post", to_string(cfg.post)));
    cfg.granularity = parse_granularity(take_string(j, "granularity", to_string(cfg.granularity)));
    take(j, "separate_kinds", cfg.separate_kinds);
    take(j, "whitening_eps", cfg.whitening_eps);
    take(j, "seed", cfg.seed);
    take(j, "output_dir", cfg.output_dir);
    take(j, "transform", cfg.transform);
    if (const auto it = j.find("flow"); it != j.end()) {
        const json& f = *it;
        check_keys(f,
                   {"couplings", "levels", "depth", "hidden_layers", "hidden_units", "epochs", "learning_rate",
                    "batch_size", "shuffle"},
                   "flow config");
        take(f, "couplings", cfg.flow.couplings);
        take(f, "levels", cfg.flow.levels);
        take(f, "depth", cfg.flow.depth);
        take(f, "hidden_layers", cfg.flow.hidden_layers);
        take(f, "hidden_units", cfg.flow.hidden_units);
        take(f, "epochs", cfg.flow.epochs);
        take(f, "learning_rate", cfg.flow.learning_rate);
        take(f, "batch_size", cfg.flow.batch_size);
        take(f, "shuffle", cfg.flow.shuffle);
    }
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    const auto& f = cfg.flow;
    return {{"source_corpus", cfg.source_corpus.generic_string()},
            {"target_corpus", cfg.target_corpus.generic_string()},
            {"qrels", cfg.qrels.generic_string()},
            {"candidates", cfg.candidates.generic_string()},
            {"scorer", to_string(cfg.scorer)},
            {"post", to_string(cfg.post)},
            {"granularity", to_string(cfg.granularity)},
            {"separate_kinds", cfg.separate_kinds},
            {"whitening_eps", cfg.whitening_eps},
            {"flow",
             {{"couplings", f.couplings},
              {"levels", f.levels},
              {"depth", f.depth},
              {"hidden_layers", f.hidden_layers},
              {"hidden_units", f.hidden_units},
              {"epochs", f.epochs},
              {"learning_rate", f.learning_rate},
              {"batch_size", f.batch_size},
              {"shuffle", f.shuffle}}},
            {"seed", cfg.seed},
            {"output_dir", cfg.output_dir.generic_string()},
            {"transform", cfg.transform.generic_string()}};
}

void validate(const ExperimentConfig& cfg) {
    validate_scoring(cfg.scorer, cfg.granularity);
    if (!(cfg.whitening_eps > 0.0 && cfg.whitening_eps < 1.0)) {
        throw ConfigError("whitening_eps must lie in (0, 1)");
    }
    const auto& f = cfg.flow;
    if (!(f.learning_rate > 0.0)) throw ConfigError("flow learning_rate must be positive");
    if (f.epochs < 1) throw ConfigError("flow epochs must be >= 1");
    if (f.batch_size < 1) throw ConfigError("flow batch_size must be >= 1");
    if (f.couplings < 1 || f.levels < 1 || f.depth < 1) {
        throw ConfigError("flow couplings, levels and depth must be >= 1");
    }
}

fs::path transform_prefix(const ExperimentConfig& cfg) {
    return cfg.transform.empty() ? cfg.output_dir / "transform" : cfg.transform;
}

fs::path effective_target(const ExperimentConfig& cfg) {
    return cfg.target_corpus.empty() ? cfg.source_corpus : cfg.target_corpus;
}

flow::ArchSpec arch_spec(const ExperimentConfig& cfg, std::uint32_t dim) {
    const auto& f = cfg.flow;
    if (cfg.post == PostKind::nice) {
        flow::NiceSpec s;
        s.dim = dim;
        s.couplings = f.couplings;
        if (f.hidden_layers) s.hidden_layers = f.hidden_layers;
        if (f.hidden_units) s.hidden_units = f.hidden_units;
        return s;
    }
    if (cfg.post == PostKind::glow) {
        flow::GlowSpec s;
        s.dim = dim;
        s.levels = f.levels;
        s.depth = f.depth;
        if (f.hidden_layers) s.hidden_layers = f.hidden_layers;
        if (f.hidden_units) s.hidden_units = f.hidden_units;
        return s;
    }
    throw ConfigError(std::string("post '") + to_string(cfg.post) + "' is not a flow");
}

std::string options_hash(json j) {
    j.erase("output_dir");
    j.erase("out");
    return sha256_hex(j.dump());
}

std::string config_hash(const ExperimentConfig& cfg) { return options_hash(to_json(cfg)); }

json load_json_object(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("config '" + path.string() + "' does not exist");
    try {
        return read_json(path, "config");
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}

json provenance(const std::string& hash, std::uint64_t seed) { return {{"config_sha256", hash}, {"seed", seed}}; }

SynthParams reference_synth_params(std::uint64_t seed) {
    SynthParams p;
    p.n_queries = 128;
    p.tokens_per_query = 8;
    p.n_docs = 96;
    p.tokens_per_doc = 32;
    p.dim = 64;
    p.offset_magnitude = 10.0;
    p.axis_scales.assign(64, 0.25);
    p.outlier_dims = 4;
    p.outlier_scale = 20.0;
    p.seed = seed;
    return p;
}

SynthParams synth_from_json(const json& j, SynthParams p) {
    check_keys(j,
               {"n_queries", "n_docs", "tokens_per_query", "tokens_per_doc", "dim", "offset_magnitude",
                "axis_scales", "outlier_dims", "outlier_scale", "seed"},
               "gen");
    take(j, "n_queries", p.n_queries);
    take(j, "n_docs", p.n_docs);
    take(j, "tokens_per_query", p.tokens_per_query);
    take(j, "tokens_per_doc", p.tokens_per_doc);
    take(j, "dim", p.dim);
    take(j, "offset_magnitude", p.offset_magnitude);
    take(j, "axis_scales", p.axis_scales);
    take(j, "outlier_dims", p.outlier_dims);
    take(j, "outlier_scale", p.outlier_scale);
    take(j, "seed", p.seed);
    return p;
}

json to_json(const SynthParams& p) {
    return {{"n_queries", p.n_queries},
            {"n_docs", p.n_docs},
            {"tokens_per_query", p.tokens_per_query},
            {"tokens_per_doc", p.tokens_per_doc},
            {"dim", p.dim},
            {"offset_magnitude", p.offset_magnitude},
            {"axis_scales", p.axis_scales},
            {"outlier_dims", p.outlier_dims},
            {"outlier_scale", p.outlier_scale},
            {"seed", p.seed}};
}

ScenarioParams scenario_from_json(const json& j, ScenarioParams p) {
    check_keys(j,
               {"seed", "n_queries", "docs_per_query", "dim", "tokens_per_query", "tokens_per_doc",
                "offset_magnitude", "dominant_dims", "dominant_scale", "signal_scale", "token_noise",
                "offset_shift", "axis_jitter"},
               "scenario");
    take(j, "seed", p.seed);
    take(j, "n_queries", p.n_queries);
    take(j, "docs_per_query", p.docs_per_query);
    take(j, "dim", p.dim);
    take(j, "tokens_per_query", p.tokens_per_query);
    take(j, "tokens_per_doc", p.tokens_per_doc);
    take(j, "offset_magnitude", p.offset_magnitude);
    take(j, "dominant_dims", p.dominant_dims);
    take(j, "dominant_scale", p.dominant_scale);
    take(j, "signal_scale", p.signal_scale);
    take(j, "token_noise", p.token_noise);
    take(j, "offset_shift", p.offset_shift);
    take(j, "axis_jitter", p.axis_jitter);
    return p;
}

json to_json(const ScenarioParams& p) {
    return {{"seed", p.seed},
            {"n_queries", p.n_queries},
            {"docs_per_query", p.docs_per_query},
            {"dim", p.dim},
            {"tokens_per_query", p.tokens_per_query},
            {"tokens_per_doc", p.tokens_per_doc},
            {"offset_magnitude", p.offset_magnitude},
            {"dominant_dims", p.dominant_dims},
            {"dominant_scale", p.dominant_scale},
            {"signal_scale", p.signal_scale},
            {"token_noise", p.token_noise},
            {"offset_shift", p.offset_shift},
            {"axis_jitter", p.axis_jitter}};
}

CandidateLists parse_candidates(const std::string& text) {
    CandidateLists out;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fail = [&](const std::string& msg) {
            return ParseError("candidates line " + std::to_string(line_no) + ": " + msg);
        };
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
        const auto qid = j.find("qid");
        const auto docs = j.find("docs");
        if (qid == j.end() || !qid->is_string()) throw fail("missing string field 'qid'");
        if (docs == j.end() || !docs->is_array()) throw fail("missing array field 'docs'");
        std::vector<std::string> ids;
        for (const auto& d : *docs) {
            if (!d.is_string()) throw fail("doc ids must be strings");
            ids.push_back(d.get<std::string>());
        }
        if (!out.emplace(qid->get<std::string>(), std::move(ids)).second) {
            throw fail("query '" + qid->get<std::string>() + "' listed twice");
        }
    }
    return out;
}

CandidateLists load_candidates(const fs::path& path) {
    const auto bytes = io::read_file(path);
    return parse_candidates(std::string(bytes.begin(), bytes.end()));
}

std::string format_candidates(const CandidateLists& candidates) {
    std::string out;
    for (const auto& [qid, docs] : candidates) {
        out += json{{"qid", qid}, {"docs", docs}}.dump();
        out += '\n';
    }
    return out;
}

void cmd_gen(const SynthParams& params, const fs::path& out) {
    const EmbeddingCorpus corpus = generate_anisotropic(params);
    prepare_dir(out);
    const auto bytes = encode_corpus(corpus);
    io::write_file(out / "corpus.emb", bytes);
    const json params_json = to_json(params);
    write_json(out / "corpus.meta.json", {{"file", "corpus.emb"},
                                          {"sha256", sha256_hex(bytes)},
                                          {"n_rows", corpus.n_rows()},
                                          {"dim", corpus.dim()},
                                          {"params", params_json},
                                          {"provenance", provenance(options_hash(params_json), params.seed)}});
}

void cmd_scenario(const ScenarioParams& params, const fs::path& out) {
    const Scenario s = build_designed_scenario(params);
    prepare_dir(out);
    const auto corpus_bytes = encode_corpus(s.corpus);
    const std::string qrels_text = format_qrels(s.qrels);
    const std::string candidates_text = format_candidates(s.candidates);
    io::write_file(out / "corpus.emb", corpus_bytes);
    io::write_text(out / "qrels.txt", qrels_text);
    io::write_text(out / "candidates.jsonl", candidates_text);
    const json params_json = to_json(params);
    const json files = {{"corpus.emb", sha256_hex(corpus_bytes)},
                        {"qrels.txt", sha256_hex(qrels_text)},
                        {"candidates.jsonl", sha256_hex(candidates_text)}};
    write_json(out / "scenario.json", {{"files", files},
                                       {"n_rows", s.corpus.n_rows()},
                                       {"params", params_json},
                                       {"provenance", provenance(options_hash(params_json), params.seed)}});
}

MeasureOptions measure_from_json(const json& j, MeasureOptions o) {
    check_keys(j, {"corpus", "batch_size", "pairs", "pooled", "outlier_factor", "transform", "seed"}, "measure");
    take(j, "corpus", o.corpus);
    take(j, "batch_size", o.batch_size);
    take(j, "pairs", o.pairs);
    take(j, "pooled", o.pooled);
    take(j, "outlier_factor", o.outlier_factor);
    take(j, "transform", o.transform);
    take(j, "seed", o.seed);
    return o;
}

json to_json(const MeasureOptions& o) {
    return {{"corpus", o.corpus.generic_string()},
            {"batch_size", o.batch_size ? json(*o.batch_size) : json(nullptr)},
            {"pairs", o.pairs ? json(*o.pairs) : json(nullptr)},
            {"pooled", o.pooled},
            {"outlier_factor", o.outlier_factor},
            {"transform", o.transform.generic_string()},
            {"seed", o.seed}};
}

IsotropyReport cmd_measure(const MeasureOptions& opts, const fs::path& out) {
    require_input(opts.corpus, "corpus");
    const auto bytes = io::read_file(opts.corpus);
    const EmbeddingCorpus corpus = decode_corpus(bytes);
    PostProcessor post = PostProcessor::none();
    json transform_info = nullptr;
    if (!opts.transform.empty()) {
        LoadedTransform lt = load_transform(opts.transform);
        post = std::move(lt.post);
        transform_info = {{"prefix", opts.transform.generic_string()},
                          {"kind", to_string(lt.kind)},
                          {"config_sha256", lt.meta["config_sha256"]}};
    }
    const EmbeddingMatrix rows = post_processed_rows(corpus, post, opts.pooled);
    CosineMode mode = ExactPairs{};
    if (opts.pairs) mode = SampledPairs{*opts.pairs, opts.seed};
    const IsotropyReport report = measure(rows, opts.batch_size, mode);
    const DimensionProfile profile = dimension_profile(rows, opts.outlier_factor);

    std::vector<std::size_t> outliers;
    std::string csv = "dim,mean,stddev,max_abs,outlier\n";
    for (std::size_t d = 0; d < profile.mean.size(); ++d) {
        if (profile.outlier[d]) outliers.push_back(d);
        csv += std::to_string(d) + "," + fmt(profile.mean[d]) + "," + fmt(profile.stddev[d]) + "," +
               fmt(profile.max_abs[d]) + "," + (profile.outlier[d] ? "1" : "0") + "\n";
    }
    const json options = to_json(opts);
    prepare_dir(out);
    io::write_text(out / "dimension_profile.csv", csv);
    write_json(out / "isotropy.json",
               {{"i_w", report.i_w},
                {"avg_cos", report.avg_cos},
                {"n_rows", report.n_rows},
                {"dim", report.dim},
                {"batch_size", report.batch_size ? json(*report.batch_size) : json(nullptr)},
                {"batches_averaged", report.batches_averaged},
                {"pairs", opts.pairs ? json(*opts.pairs) : json("exact")},
                {"pooled", opts.pooled},
                {"outlier_dims", outliers},
                {"corpus", opts.corpus.generic_string()},
                {"corpus_sha256", sha256_hex(bytes)},
                {"transform", transform_info},
                {"provenance", provenance(options_hash(options), opts.seed)}});
    return report;
}

FitSummary cmd_fit(const ExperimentConfig& cfg) {
    validate(cfg);
    if (cfg.post == PostKind::none) throw ConfigError("post=none has nothing to fit");
    require_input(cfg.source_corpus, "source corpus");

    FitSummary summary;
    const auto bytes = io::read_file(cfg.source_corpus);
    summary.inputs_read.push_back(cfg.source_corpus);
    const EmbeddingCorpus corpus = decode_corpus(bytes);

    const fs::path prefix = transform_prefix(cfg);
    prepare_dir(prefix.parent_path());
    const std::string ext = cfg.post == PostKind::whiten ? ".wht" : ".flw";

    std::vector<std::pair<std::string, std::optional<SequenceKind>>> groups;
    if (cfg.separate_kinds) {
        groups = {{"query", SequenceKind::query}, {"document", SequenceKind::document}};
    } else {
        groups = {{"shared", std::nullopt}};
    }
    json files = json::object();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& [name, kind] = groups[g];
        const EmbeddingMatrix rows = fit_rows(corpus, cfg.granularity, kind);
        const fs::path file = with_suffix(prefix, (kind ? "." + name : std::string()) + ext);
        json entry = {{"file", file.filename().string()}, {"rows", rows.rows()}};
        if (cfg.post == PostKind::whiten) {
            const WhiteningTransform t = fit_whitening(rows, cfg.whitening_eps);
            save_whitening(t, file);
            std::size_t floored = 0;
            for (bool f : t.floored()) floored += f ? 1 : 0;
            entry["floored_dims"] = floored;
        } else {
            flow::FlowTrainConfig tc;
            tc.learning_rate = cfg.flow.learning_rate;
            tc.batch_size = cfg.flow.batch_size;
            tc.epochs = cfg.flow.epochs;
            tc.shuffle = cfg.flow.shuffle;
            tc.seed = cfg.seed + g;
            const auto dim = static_cast<std::uint32_t>(corpus.dim());
            const flow::TrainResult result = flow::train_flow(rows, arch_spec(cfg, dim), tc);
            flow::save_flow(result.model, file);
            entry["train_seed"] = tc.seed;
            entry["train_report"] = train_report_json(result.report);
        }
        entry["sha256"] = sha256_file(file);
        files[name] = entry;
    }

    const json cfg_json = to_json(cfg);
    summary.meta_path = with_suffix(prefix, ".meta.json");
    summary.meta = {{"kind", to_string(cfg.post)},
                    {"granularity", to_string(cfg.granularity)},
                    {"separate_kinds", cfg.separate_kinds},
                    {"source_corpus", cfg.source_corpus.generic_string()},
                    {"source_sha256", sha256_hex(bytes)},
                    {"files", files},
                    {"inputs_read", paths_json(summary.inputs_read)},
                    {"config", cfg_json},
                    {"config_sha256", options_hash(cfg_json)},
                    {"seed", cfg.seed}};
    write_json(summary.meta_path, summary.meta);
    return summary;
}

LoadedTransform load_transform(const fs::path& prefix) {
    const fs::path meta_path = with_suffix(prefix, ".meta.json");
    if (!fs::is_regular_file(meta_path)) {
        throw ConfigError("no fitted transform at '" + prefix.string() + "' (missing " + meta_path.string() + ")");
    }
    LoadedTransform lt;
    lt.meta = read_json(meta_path, "transform metadata");
    try {
        lt.kind = parse_post(lt.meta.at("kind").get<std::string>());
        lt.post.granularity = parse_granularity(lt.meta.at("granularity").get<std::string>());
        const bool separate = lt.meta.at("separate_kinds").get<bool>();
        const auto load_one = [&](const char* name) -> PostTransform {
            const json& entry = lt.meta.at("files").at(name);
            const fs::path file = meta_path.parent_path() / entry.at("file").get<std::string>();
            const auto bytes = io::read_file(file);
            if (sha256_hex(bytes) != entry.at("sha256").get<std::string>()) {
                throw IntegrityError("transform file '" + file.string() + "' does not match its fit-time hash");
            }
            if (lt.kind == PostKind::whiten) return decode_whitening(bytes);
            return std::make_shared<const flow::FlowModel>(flow::decode_flow(bytes));
        };
        if (lt.kind == PostKind::none) throw FormatError("transform metadata has kind none");
        if (separate) {
            lt.post.query = load_one("query");
            lt.post.document = load_one("document");
        } else {
            lt.post.query = lt.post.document = load_one("shared");
        }
    } catch (const json::exception& e) {
        throw FormatError("transform metadata '" + meta_path.string() + "': " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError("transform metadata '" + meta_path.string() + "': " + e.what());
    }
    return lt;
}

std::string run_tag(const ExperimentConfig& cfg) {
    return "isoret-" + config_hash(cfg).substr(0, 12) + "-s" + std::to_string(cfg.seed);
}

RankingRun cmd_rerank(const ExperimentConfig& cfg) {
    validate(cfg);
    const fs::path target = effective_target(cfg);
    require_input(target, "target corpus");
    require_input(cfg.candidates, "candidates");

    PostProcessor post = PostProcessor::none(cfg.granularity);
    json transform_info = nullptr;
    if (cfg.post != PostKind::none) {
        LoadedTransform lt = load_transform(transform_prefix(cfg));
        if (lt.kind != cfg.post) {
            throw ConfigError(std::string("config asks for post=") + to_string(cfg.post) +
                              " but the fitted transform is " + to_string(lt.kind));
        }
        if (lt.post.granularity != cfg.granularity) {
            throw ConfigError(std::string("config asks for ") + to_string(cfg.granularity) +
                              " but the transform was fitted " + to_string(lt.post.granularity));
        }
        post = std::move(lt.post);
        json files = json::object();
        for (const auto& [name, entry] : lt.meta["files"].items()) files[name] = entry["sha256"];
        transform_info = {{"prefix", cfg.transform.generic_string()},
                          {"source_corpus", lt.meta["source_corpus"]},
                          {"source_sha256", lt.meta["source_sha256"]},
                          {"fit_config_sha256", lt.meta["config_sha256"]},
                          {"files", files}};
    }

    const auto bytes = io::read_file(target);
    const EmbeddingCorpus corpus = decode_corpus(bytes);
    const CandidateLists candidates = load_candidates(cfg.candidates);
    const std::string target_sha = sha256_hex(bytes);

    const PreparedCorpus prepared(corpus, cfg.scorer, post);
    RankingRun run;
    run.tag = run_tag(cfg);
    for (const auto& [qid, docs] : candidates) {
        auto& entries = run.rankings[qid];
        for (const auto& c : prepared.rank(qid, docs)) entries.push_back({c.doc_id, c.score});
    }

    const json cfg_json = to_json(cfg);
    prepare_dir(cfg.output_dir);
    save_run(run, cfg.output_dir / "run.trec");
    json meta = {{"run", "run.trec"},
                 {"tag", run.tag},
                 {"target_corpus", target.generic_string()},
                 {"target_sha256", target_sha},
                 {"candidates", cfg.candidates.generic_string()},
                 {"candidates_sha256", sha256_file(cfg.candidates)},
                 {"transform", transform_info},
                 {"config", cfg_json},
                 {"provenance", provenance(options_hash(cfg_json), cfg.seed)}};
    if (!transform_info.is_null()) meta["out_of_distribution"] = transform_info["source_sha256"] != target_sha;
    write_json(cfg.output_dir / "run.meta.json", meta);
    return run;
}

EvalOptions eval_from_json(const json& j, EvalOptions o) {
    check_keys(j, {"run", "qrels", "baseline", "p_k", "ndcg_k", "seed"}, "eval");
    take(j, "run", o.run);
    take(j, "qrels", o.qrels);
    take(j, "baseline", o.baseline);
    take(j, "p_k", o.p_k);
    take(j, "ndcg_k", o.ndcg_k);
    take(j, "seed", o.seed);
    return o;
}

json to_json(const EvalOptions& o) {
    return {{"run", o.run.generic_string()},
            {"qrels", o.qrels.generic_string()},
            {"baseline", o.baseline.generic_string()},
            {"p_k", o.p_k},
            {"ndcg_k", o.ndcg_k},
            {"seed", o.seed}};
}

json cmd_eval(const EvalOptions& opts, const fs::path& out) {
    require_input(opts.run, "run");
    require_input(opts.qrels, "qrels");
    if (opts.p_k < 1 || opts.ndcg_k < 1) throw ConfigError("metric cutoffs must be >= 1");
    const RankingRun run = load_run(opts.run);
    const Qrels qrels = load_qrels(opts.qrels);
    const EvalReport r = evaluate(run, qrels, opts.p_k, opts.ndcg_k);
    const std::string p_name = metric_name("P@", opts.p_k);
    const std::string n_name = metric_name("NDCG@", opts.ndcg_k);

    const json options = to_json(opts);
    json report = {{"run", opts.run.generic_string()},
                   {"run_sha256", sha256_file(opts.run)},
                   {"run_tag", run.tag},
                   {"qrels", opts.qrels.generic_string()},
                   {"qrels_sha256", sha256_file(opts.qrels)},
                   {"metrics", {{p_name, r.precision.mean}, {n_name, r.ndcg.mean}}},
                   {"n_evaluated", r.ndcg.n_evaluated},
                   {"n_excluded", r.ndcg.n_excluded},
                   {"per_query", {{p_name, r.precision.per_query}, {n_name, r.ndcg.per_query}}},
                   {"baseline", nullptr},
                   {"provenance", provenance(options_hash(options), opts.seed)}};
    if (!opts.baseline.empty()) {
        require_input(opts.baseline, "baseline report");
        const json base = read_json(opts.baseline, "baseline report");
        json deltas = json::object();
        json base_metrics = json::object();
        try {
            for (const auto& [name, value] : report["metrics"].items()) {
                const double b = base.at("metrics").at(name).get<double>();
                base_metrics[name] = b;
                deltas[name] = percent_or_null(b, value.get<double>());
            }
        } catch (const json::exception& e) {
            throw FormatError("baseline report '" + opts.baseline.string() + "': " + e.what());
        }
        report["baseline"] = {
            {"report", opts.baseline.generic_string()}, {"metrics", base_metrics}, {"delta_percent", deltas}};
    }
    prepare_dir(out);
    write_json(out / "report.json", report);
    return report;
}

CompareOptions compare_from_json(const json& j, CompareOptions o) {
    check_keys(j, {"baseline", "treatment", "level", "seed"}, "compare");
    take(j, "baseline", o.baseline);
    take(j, "treatment", o.treatment);
    o.level = parse_level(take_string(j, "level", to_string(o.level)));
    take(j, "seed", o.seed);
    return o;
}

json to_json(const CompareOptions& o) {
    return {{"baseline", paths_json(o.baseline)},
            {"treatment", paths_json(o.treatment)},
            {"level", to_string(o.level)},
            {"seed", o.seed}};
}

json cmd_compare(const CompareOptions& opts, const fs::path& out) {
    if (opts.baseline.empty() || opts.treatment.empty()) {
        throw ConfigError("compare needs at least one baseline and one treatment report");
    }
    CompareLevel level = opts.level;
    if (level == CompareLevel::automatic) {
        level = opts.baseline.size() >= 2 && opts.treatment.size() >= 2 ? CompareLevel::seed : CompareLevel::query;
    }
    const auto load_all = [](const std::vector<fs::path>& paths) {
        std::vector<json> reports;
        for (const auto& p : paths) {
            require_input(p, "report");
            reports.push_back(read_json(p, "report"));
        }
        return reports;
    };
    const auto base = load_all(opts.baseline);
    const auto treat = load_all(opts.treatment);

    const auto samples = [&](const std::vector<json>& reports, const std::string& metric, const fs::path& first) {
        std::vector<double> values;
        try {
            for (const auto& r : reports) {
                if (level == CompareLevel::seed) {
                    values.push_back(r.at("metrics").at(metric).get<double>());
                } else {
                    for (const auto& [qid, v] : r.at("per_query").at(metric).items()) values.push_back(v.get<double>());
                }
            }
        } catch (const json::exception& e) {
            throw FormatError("report set starting at '" + first.string() + "': " + e.what());
        }
        return values;
    };
    const auto report_means = [&](const std::vector<json>& reports, const std::string& metric) {
        std::vector<double> means;
        for (const auto& r : reports) means.push_back(r.at("metrics").at(metric).get<double>());
        return mean_of(means);
    };

    json metrics = json::object();
    if (!base.front().contains("metrics") || !base.front()["metrics"].is_object()) {
        throw FormatError("report '" + opts.baseline.front().string() + "' has no metrics");
    }
    for (const auto& [name, unused] : base.front()["metrics"].items()) {
        const auto a = samples(treat, name, opts.treatment.front());
        const auto b = samples(base, name, opts.baseline.front());
        const TTestResult t = ttest_one_tailed(a, b);
        const double base_mean = report_means(base, name);
        const double treat_mean = report_means(treat, name);
        metrics[name] = {{"baseline", base_mean},
                         {"treatment", treat_mean},
                         {"delta_percent", percent_or_null(base_mean, treat_mean)},
                         {"t", t.t},
                         {"p_one_tailed", t.p},
                         {"df", t.df},
                         {"n_baseline", b.size()},
                         {"n_treatment", a.size()}};
    }
    const json options = to_json(opts);
    json result = {{"level", to_string(level)},
                   {"baseline", paths_json(opts.baseline)},
                   {"treatment", paths_json(opts.treatment)},
                   {"metrics", metrics},
                   {"provenance", provenance(options_hash(options), opts.seed)}};
    prepare_dir(out);
    write_json(out / "compare.json", result);
    return result;
}

}  // namespace isoret::pipeline
