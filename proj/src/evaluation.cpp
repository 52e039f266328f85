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

#include "isoret/evaluation.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "isoret/binary_io.hpp"
#include "isoret/error.hpp"

namespace isoret {

int Qrels::grade(const std::string& qid, const std::string& docid) const {
    const auto q = judgments.find(qid);
    if (q == judgments.end()) return 0;
    const auto d = q->second.find(docid);
    return d == q->second.end() ? 0 : d->second;
}

bool Qrels::has_relevant(const std::string& qid, int threshold) const {
    const auto q = judgments.find(qid);
    if (q == judgments.end()) return false;
    return std::any_of(q->second.begin(), q->second.end(), [&](const auto& kv) { return kv.second >= threshold; });
}

namespace {

void finish(MetricResult& r) {
    double total = 0.0;
    for (const auto& [qid, value] : r.per_query) total += value;
    r.n_evaluated = r.per_query.size();
    r.mean = r.n_evaluated == 0 ? 0.0 : total / static_cast<double>(r.n_evaluated);
}

double gain(int grade) { return std::ldexp(1.0, grade) - 1.0; }

}  // namespace

MetricResult precision_at_k(const RankingRun& run, const Qrels& qrels, std::uint32_t k, int rel_threshold) {
    if (k == 0) throw ConfigError("precision cutoff must be >= 1");
    if (run.rankings.empty()) throw EmptyInputError("run has no queries");
    MetricResult r;
    r.k = k;
    for (const auto& [qid, list] : run.rankings) {
        if (!qrels.has_relevant(qid)) {
            ++r.n_excluded;
            continue;
        }
        const std::size_t depth = std::min<std::size_t>(k, list.size());
        std::size_t hits = 0;
        for (std::size_t i = 0; i < depth; ++i) {
            hits += qrels.grade(qid, list[i].doc_id) >= rel_threshold ? 1 : 0;
        }
        r.per_query[qid] = static_cast<double>(hits) / static_cast<double>(k);
    }
    finish(r);
    return r;
}

MetricResult ndcg_at_k(const RankingRun& run, const Qrels& qrels, std::uint32_t k) {
    if (k == 0) throw ConfigError("NDCG cutoff must be >= 1");
    if (run.rankings.empty()) throw EmptyInputError("run has no queries");
    MetricResult r;
    r.k = k;
    for (const auto& [qid, list] : run.rankings) {
        if (!qrels.has_relevant(qid)) {
            ++r.n_excluded;
            continue;
        }
        double dcg = 0.0;
        for (std::size_t i = 0; i < std::min<std::size_t>(k, list.size()); ++i) {
            dcg += gain(qrels.grade(qid, list[i].doc_id)) / std::log2(static_cast<double>(i) + 2.0);
        }
        std::vector<int> grades;
        for (const auto& [doc, g] : qrels.judgments.at(qid)) grades.push_back(g);
        std::sort(grades.begin(), grades.end(), std::greater<>());
        double ideal = 0.0;
        for (std::size_t i = 0; i < std::min<std::size_t>(k, grades.size()); ++i) {
            ideal += gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
        }
        r.per_query[qid] = dcg / ideal;
    }
    finish(r);
    return r;
}

EvalReport evaluate(const RankingRun& run, const Qrels& qrels, std::uint32_t p_k, std::uint32_t ndcg_k) {
    return {precision_at_k(run, qrels, p_k), ndcg_at_k(run, qrels, ndcg_k)};
}

TTestResult ttest_one_tailed(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw InsufficientDataError("t-test needs at least two values per sample");
    }
    auto mean_of = [](std::span<const double> s) {
        return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    };
    auto sq_dev = [](std::span<const double> s, double m) {
        double acc = 0.0;
        for (double v : s) acc += (v - m) * (v - m);
        return acc;
    };
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    TTestResult out;
    out.df = na + nb - 2.0;
    const double pooled = (sq_dev(a, ma) + sq_dev(b, mb)) / out.df;
    if (pooled == 0.0) {
        if (ma == mb) return out;
        throw DegenerateVarianceError("t-test samples have zero variance but different means");
    }
    out.t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    // P(T > |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2) / 2
    const double tail = 0.5 * boost::math::ibeta(0.5 * out.df, 0.5, out.df / (out.df + out.t * out.t));
    out.p = out.t >= 0.0 ? tail : 1.0 - tail;
    return out;
}

double percent_change(double baseline, double treatment) {
    if (baseline == 0.0) throw ValueError("percent change against a zero baseline");
    return 100.0 * (treatment - baseline) / baseline;
}

namespace {

std::vector<std::string> fields_of(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string f; in >> f;) out.push_back(std::move(f));
    return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line, const char* what) {
    T value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
    }
    return value;
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
    std::istringstream in(text);
    std::size_t number = 0;
    for (std::string line; std::getline(in, line);) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto fields = fields_of(line);
        if (fields.empty()) continue;
        fn(fields, number);
    }
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

std::string format_score(double score) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), score);
    return std::string(buf, ptr);
}

}  // namespace

Qrels parse_qrels(const std::string& text) {
    Qrels q;
    for_each_line(text, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 4) {
            throw ParseError("line " + std::to_string(line) + ": expected 'qid iter docid grade', got " +
                             std::to_string(f.size()) + " fields");
        }
        const int grade = parse_number<int>(f[3], line, "grade");
        if (grade < 0) throw ParseError("line " + std::to_string(line) + ": negative grade");
        if (!q.judgments[f[0]].emplace(f[2], grade).second) {
            throw ParseError("line " + std::to_string(line) + ": duplicate judgment for (" + f[0] + ", " + f[2] + ")");
        }
    });
    return q;
}

Qrels load_qrels(const std::filesystem::path& path) { return parse_qrels(read_text(path)); }

std::string format_qrels(const Qrels& qrels) {
    std::string out;
    for (const auto& [qid, docs] : qrels.judgments) {
        for (const auto& [doc, grade] : docs) {
            out += qid + " 0 " + doc + " " + std::to_string(grade) + "\n";
        }
    }
    return out;
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) { io::write_text(path, format_qrels(qrels)); }

RankingRun parse_run(const std::string& text) {
    RankingRun run;
    std::map<std::string, std::vector<std::pair<long long, RunEntry>>> staged;
    std::set<std::pair<std::string, std::string>> seen;
    std::set<std::string> tags;
    for_each_line(text, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 6) {
            throw ParseError("line " + std::to_string(line) + ": expected 'qid Q0 docid rank score tag', got " +
                             std::to_string(f.size()) + " fields");
        }
        if (!seen.insert({f[0], f[2]}).second) {
            throw ParseError("line " + std::to_string(line) + ": document '" + f[2] + "' repeated for query '" + f[0] +
                             "'");
        }
        const auto rank = parse_number<long long>(f[3], line, "rank");
        const auto score = parse_number<double>(f[4], line, "score");
        staged[f[0]].push_back({rank, {f[2], score}});
        tags.insert(f[5]);
    });
    if (tags.size() > 1) throw ParseError("run mixes several tags");
    if (!tags.empty()) run.tag = *tags.begin();
    for (auto& [qid, entries] : staged) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& list = run.rankings[qid];
        for (auto& e : entries) list.push_back(std::move(e.second));
    }
    return run;
}

RankingRun load_run(const std::filesystem::path& path) { return parse_run(read_text(path)); }

std::string format_run(const RankingRun& run) {
    std::string out;
    for (const auto& [qid, list] : run.rankings) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            out += qid + " Q0 " + list[i].doc_id + " " + std::to_string(i + 1) + " " + format_score(list[i].score) +
                   " " + run.tag + "\n";
        }
    }
    return out;
}

void save_run(const RankingRun& run, const std::filesystem::path& path) { io::write_text(path, format_run(run)); }

}  // namespace isoret
