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

#include <cmath>
#include <numbers>
#include <random>

#include "isoret/error.hpp"
#include "isoret/flows.hpp"
#include "isoret/prng.hpp"
#include "oracles.hpp"

using namespace isoret;
using namespace isoret::flow;

namespace {

Tensor gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
    SplitMix64 rng(seed);
    Tensor x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = scale * rng.gaussian();
    }
    return x;
}

NiceSpec small_nice(std::uint32_t dim) { return {dim, 4, 2, 8}; }
GlowSpec small_glow(std::uint32_t dim) { return {dim, 2, 2, 1, 8}; }

bool close_rel(double a, double b, double rel, double abs_floor) {
    return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

}  // namespace

TEST_CASE("fresh NICE is the identity") {
    const auto m = FlowModel::create(NiceSpec{6, 4, 2, 16}, 1);
    const Tensor x = gaussian(10, 6, 2);
    const auto out = flow_forward(m, x);
    CHECK(out.z == x);
    CHECK(out.logdet.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fresh Glow is a signed permutation") {
    const auto m = FlowModel::create(GlowSpec{6, 2, 3, 1, 16}, 1);
    const Tensor x = gaussian(10, 6, 2);
    const auto out = flow_forward(m, x);
    CHECK(out.logdet.cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        CHECK(out.z.row(i).norm() == doctest::Approx(x.row(i).norm()).epsilon(1e-14));
    }
}

TEST_CASE("Glow linear layer determinant") {
    auto m = FlowModel::create(GlowSpec{2, 1, 1, 1, 4}, 3);
    auto& params = m.parameters();
    const auto& lin = m.glow().levels[0].steps[0].linear;
    params[lin.log_diag] << std::log(2.0), std::log(3.0);
    const auto out = flow_forward(m, gaussian(3, 2, 4));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(out.logdet(i) == doctest::Approx(std::log(6.0)).epsilon(1e-14));
    params[lin.log_diag] << std::log(2.0), std::log(0.5);
    CHECK(flow_forward(m, gaussian(1, 2, 4)).logdet.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("nll anchors at identity") {
    const auto m = FlowModel::create(NiceSpec{2, 2, 1, 4}, 0);
    CHECK(nll(m, Tensor::Zero(1, 2)) == doctest::Approx(std::log(2 * std::numbers::pi)).epsilon(1e-14));

    const auto m16 = FlowModel::create(NiceSpec{16, 2, 1, 4}, 0);
    const Eigen::Index n = 4000;
    const double expect = 8.0 * (std::log(2 * std::numbers::pi) + 1.0);
    // Per-row |x|^2/2 has standard deviation sqrt(2 * 16) / 2.
    const double sigma = std::sqrt(32.0) / 2.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(nll(m16, gaussian(n, 16, 9)) - expect) <= 3 * sigma);
}

TEST_CASE("nll is a mean over rows") {
    auto m = FlowModel::create(small_glow(6), 5);
    oracle::randomize_parameters(m, 6, 0.3);
    const Tensor x = gaussian(12, 6, 7);
    const Tensor flipped = x.colwise().reverse();
    CHECK(std::abs(nll(m, x) - nll(m, flipped)) <= 1e-12);

    Tensor doubled(24, 6);
    doubled << x, x;
    const auto g1 = nll_gradient(m, x);
    const auto g2 = nll_gradient(m, doubled);
    for (std::size_t k = 0; k < g1.size(); ++k) CHECK((g1[k] - g2[k]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("NICE log_scale gradient at identity") {
    const auto m = FlowModel::create(NiceSpec{4, 2, 1, 4}, 0);
    Tensor x(1, 4);
    x << 0.5, -1.0, 2.0, 0.0;
    const auto g = nll_gradient(m, x);
    const Tensor& gs = g[m.nice().log_scale];
    for (Eigen::Index d = 0; d < 4; ++d) CHECK(gs(0, d) == doctest::Approx(x(0, d) * x(0, d) - 1.0).epsilon(1e-14));
}

TEST_CASE("round trip") {
    SUBCASE("NICE") {
        auto m = FlowModel::create(NiceSpec{8, 4, 2, 32}, 11);
        oracle::randomize_parameters(m, 12, 0.3);
        const Tensor x = gaussian(1024, 8, 13, 2.0);
        CHECK((flow_inverse(m, flow_forward(m, x).z) - x).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("Glow") {
        auto m = FlowModel::create(GlowSpec{8, 2, 3, 2, 32}, 11);
        oracle::randomize_parameters(m, 12, 0.3);
        const Tensor x = gaussian(1024, 8, 13, 2.0);
        CHECK((flow_inverse(m, flow_forward(m, x).z) - x).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("logdet matches the numerical Jacobian") {
    for (unsigned trial = 0; trial < 3; ++trial) {
        for (bool glow : {false, true}) {
            auto m = glow ? FlowModel::create(small_glow(6), trial) : FlowModel::create(small_nice(6), trial);
            oracle::randomize_parameters(m, 100 + trial, 0.4);
            const Tensor x = gaussian(1, 6, 200 + trial);
            const double analytic = flow_forward(m, x).logdet(0);
            CHECK(close_rel(analytic, oracle::logdet_numeric(m, x.row(0)), 1e-4, 1e-4));
        }
    }
}

TEST_CASE("per-layer logdets sum to the total") {
    auto m = FlowModel::create(small_glow(6), 1);
    oracle::randomize_parameters(m, 2, 0.3);
    std::vector<Tensor> layers;
    const Tensor x = gaussian(5, 6, 3);
    const auto out = flow_forward(m, x, &layers);
    Tensor total = Tensor::Zero(5, 1);
    for (const auto& l : layers) total += l;
    CHECK((total - out.logdet).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(layers.size() == 2 * 2 * 3);
}

TEST_CASE("gradients match central differences") {
    for (bool glow : {false, true}) {
        auto m = glow ? FlowModel::create(small_glow(6), 4) : FlowModel::create(small_nice(6), 4);
        oracle::randomize_parameters(m, 5, 0.3);
        const Tensor x = gaussian(7, 6, 6);
        const auto analytic = nll_gradient(m, x);
        const auto numeric = oracle::nll_gradient_numeric(m, x);
        REQUIRE(analytic.size() == numeric.size());
        int bad = 0;
        for (std::size_t k = 0; k < analytic.size(); ++k) {
            for (Eigen::Index i = 0; i < analytic[k].size(); ++i) {
                bad += !close_rel(analytic[k].data()[i], numeric[k].data()[i], 1e-4, 1e-8);
            }
        }
        CHECK(bad == 0);
    }
}

TEST_CASE("actnorm data initialisation") {
    auto m = FlowModel::create(GlowSpec{4, 1, 1, 1, 8}, 2);
    Tensor x = gaussian(256, 4, 3, 3.0);
    x.col(1).array() += 5.0;
    initialize_actnorm(m, x);
    CHECK(m.glow().actnorm_initialized);
    const auto& an = m.glow().levels[0].steps[0].actnorm;
    const auto& p = m.parameters();
    const Tensor y = ((x.rowwise() + p[an.bias].row(0)).array().rowwise() * p[an.log_scale].row(0).array().exp());
    CHECK(y.colwise().mean().cwiseAbs().maxCoeff() <= 1e-12);
    for (Eigen::Index d = 0; d < 4; ++d) {
        const double var = (y.col(d).array() - y.col(d).mean()).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("FLW1 round trip") {
    for (bool glow : {false, true}) {
        auto m = glow ? FlowModel::create(small_glow(6), 8) : FlowModel::create(small_nice(6), 8);
        oracle::randomize_parameters(m, 9, 0.5);
        const auto bytes = encode_flow(m);
        const auto back = decode_flow(bytes);
        CHECK(encode_flow(back) == bytes);
        const Tensor x = gaussian(4, 6, 1);
        CHECK(flow_forward(back, x).z == flow_forward(m, x).z);
        auto bad = bytes;
        bad[0] = 'Z';
        CHECK_THROWS_AS(decode_flow(bad), FormatError);
        CHECK_THROWS_AS(decode_flow(std::span(bytes).first(bytes.size() - 8)), FormatError);
        bad = bytes;
        bad.push_back(1);
        CHECK_THROWS_AS(decode_flow(bad), FormatError);
    }
}

TEST_CASE("invalid architectures") {
    CHECK_THROWS_AS(FlowModel::create(NiceSpec{1, 4, 1, 4}, 0), ConfigError);
    CHECK_THROWS_AS(FlowModel::create(GlowSpec{2, 2, 1, 1, 4}, 0), ConfigError);
}

TEST_CASE("training") {
    Tensor x = gaussian(300, 4, 21);
    x.col(0) *= 3.0;
    x.col(2).array() += 2.0;
    const EmbeddingMatrix W = to_embedding(x);
    FlowTrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 64;
    cfg.epochs = 3;
    cfg.seed = 5;

    SUBCASE("deterministic and improving") {
        const auto a = train_flow(W, NiceSpec{4, 4, 2, 16}, cfg);
        const auto b = train_flow(W, NiceSpec{4, 4, 2, 16}, cfg);
        CHECK(a.report.epoch_nll == b.report.epoch_nll);
        CHECK(a.report.checksum == b.report.checksum);
        CHECK(a.report.steps == 3 * 5);
        CHECK(a.report.epoch_nll.back() < a.report.initial_nll);
    }
    SUBCASE("Glow") {
        const auto r = train_flow(W, GlowSpec{4, 2, 2, 1, 16}, cfg);
        CHECK(r.model.glow().actnorm_initialized);
        CHECK(r.report.epoch_nll.size() == 3);
        CHECK(r.report.epoch_nll.back() < r.report.initial_nll);
    }
    SUBCASE("one epoch") {
        auto c = cfg;
        c.epochs = 1;
        CHECK(train_flow(W, NiceSpec{4, 2, 1, 8}, c).report.epoch_nll.size() == 1);
    }
    SUBCASE("contract errors") {
        auto c = cfg;
        c.epochs = 0;
        CHECK_THROWS_AS(train_flow(W, NiceSpec{4, 2, 1, 8}, c), ConfigError);
        c = cfg;
        c.learning_rate = 0.0;
        CHECK_THROWS_AS(train_flow(W, NiceSpec{4, 2, 1, 8}, c), ConfigError);
        CHECK_THROWS_AS(train_flow(W, NiceSpec{5, 2, 1, 8}, cfg), ShapeError);
    }
    SUBCASE("divergence names the step") {
        auto c = cfg;
        c.learning_rate = 1e12;
        c.epochs = 20;
        CHECK_THROWS_AS(train_flow(W, NiceSpec{4, 2, 1, 8}, c), TrainingError);
    }
}
