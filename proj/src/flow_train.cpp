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

#include <cmath>
#include <memory>
#include <numeric>

#include "isoret/error.hpp"
#include "isoret/flows.hpp"
#include "isoret/hashing.hpp"
#include "isoret/prng.hpp"
#include "flow_internal.hpp"

namespace isoret::flow {

namespace {

class Adam {
public:
    Adam(const std::vector<ad::Var>& params, const FlowTrainConfig& cfg) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.push_back(Tensor::Zero(p.rows(), p.cols()));
            v_.push_back(Tensor::Zero(p.rows(), p.cols()));
        }
    }

    void step(std::vector<ad::Var>& params) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].has_grad()) continue;
            const Tensor& g = params[i].grad();
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
            params[i].mutable_value().array() -=
                cfg_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon);
        }
    }

private:
    FlowTrainConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::uint64_t t_ = 0;
};

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    Tensor out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

}  // namespace

TrainResult train_flow(const EmbeddingMatrix& W, const ArchSpec& arch, const FlowTrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (W.rows() < 1) throw EmptyInputError("flow training needs at least one row");
    if (W.cols() != static_cast<Eigen::Index>(dim_of(arch))) {
        throw ShapeError("training data dim " + std::to_string(W.cols()) + " does not match model dim " +
                         std::to_string(dim_of(arch)));
    }
    require_finite(W, "flow training data");

    SplitMix64 seeds(cfg.seed);
    const std::uint64_t init_seed = seeds.next();
    SplitMix64 shuffle_rng(seeds.next());

    FlowModel model = FlowModel::create(arch, init_seed);
    const Tensor x = to_tensor(W);
    TrainReport report;
    report.initial_nll = nll(model, x);

    const auto n = static_cast<std::size_t>(x.rows());
    const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<ad::Var> leaves;
    std::unique_ptr<Adam> adam;
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            const Tensor xb = gather_rows(x, std::span<const std::size_t>(order).subspan(start, len));
            if (!adam) {
                if (model.is_glow()) initialize_actnorm(model, xb);
                for (auto& t : model.parameters()) leaves.push_back(ad::Var::parameter(std::move(t)));
                adam = std::make_unique<Adam>(leaves, cfg);
            }
            double loss = 0.0;
            try {
                const ad::Var graph_loss = forward_loss(model, leaves, xb);
                loss = graph_loss.value()(0, 0);
                if (!std::isfinite(loss)) {
                    throw NumericError("non-finite loss");
                }
                ad::backward(graph_loss);
            } catch (const NumericError& e) {
                throw TrainingError("flow training diverged at step " + std::to_string(report.steps) + " (epoch " +
                                    std::to_string(epoch) + "): " + e.what());
            }
            adam->step(leaves);
            for (auto& leaf : leaves) leaf.zero_grad();
            ++report.steps;
            epoch_sum += loss * static_cast<double>(len);
        }
        report.epoch_nll.push_back(epoch_sum / static_cast<double>(n));
    }
    auto& params = model.parameters();
    for (std::size_t i = 0; i < leaves.size(); ++i) params[i] = std::move(leaves[i].mutable_value());
    report.checksum = sha256_hex(encode_flow(model));
    return {std::move(model), std::move(report)};
}

}  // namespace isoret::flow
