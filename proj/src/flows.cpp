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

#include "isoret/flows.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "isoret/error.hpp"
#include "isoret/prng.hpp"
#include "flow_internal.hpp"

namespace isoret::flow {

namespace {

std::vector<int> positions(std::span<const int> active, int parity) {
    std::vector<int> out;
    for (std::size_t i = static_cast<std::size_t>(parity); i < active.size(); i += 2) {
        out.push_back(active[i]);
    }
    return out;
}

struct Split {
    std::vector<int> cond;
    std::vector<int> trans;
};

Split split(std::span<const int> active, MaskParity parity) {
    const int p = static_cast<int>(parity);
    return {positions(active, p), positions(active, 1 - p)};
}

std::vector<int> iota_cols(int begin, int count) {
    std::vector<int> out(static_cast<std::size_t>(count));
    std::iota(out.begin(), out.end(), begin);
    return out;
}

Tensor permutation_matrix(const std::vector<int>& perm) {
    const auto n = static_cast<Eigen::Index>(perm.size());
    Tensor p = Tensor::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        p(perm[static_cast<std::size_t>(j)], j) = 1.0;
    }
    return p;
}

Tensor strict_lower_mask(Eigen::Index n) {
    Tensor m = Tensor::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < r; ++c) m(r, c) = 1.0;
    return m;
}

Tensor strict_upper_mask(Eigen::Index n) { return strict_lower_mask(n).transpose(); }

// ---- builder ----------------------------------------------------------------

class Builder {
public:
    Builder(std::vector<Tensor>& params, std::vector<std::string>& names, SplitMix64& rng)
        : params_(params), names_(names), rng_(rng) {}

    std::size_t zeros(Eigen::Index rows, Eigen::Index cols, std::string name) {
        params_.push_back(Tensor::Zero(rows, cols));
        names_.push_back(std::move(name));
        return params_.size() - 1;
    }

    std::size_t uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::string name) {
        Tensor t(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = (2.0 * rng_.uniform() - 1.0) * bound;
        params_.push_back(std::move(t));
        names_.push_back(std::move(name));
        return params_.size() - 1;
    }

    CouplingNet net(int in, int out, std::uint32_t hidden_layers, std::uint32_t hidden_units,
                    const std::string& prefix) {
        CouplingNet net;
        int width = in;
        for (std::uint32_t l = 0; l <= hidden_layers; ++l) {
            const bool last = l == hidden_layers;
            const int next = last ? out : static_cast<int>(hidden_units);
            const std::string tag = prefix + ".layer" + std::to_string(l);
            CouplingNet::Dense dense;
            dense.weight = last ? zeros(width, next, tag + ".weight")
                                : uniform(width, next, 1.0 / std::sqrt(static_cast<double>(width)), tag + ".weight");
            dense.bias = zeros(1, next, tag + ".bias");
            net.layers.push_back(dense);
            width = next;
        }
        return net;
    }

    SplitMix64& rng() { return rng_; }

private:
    std::vector<Tensor>& params_;
    std::vector<std::string>& names_;
    SplitMix64& rng_;
};

// ---- layer maps, written once for Tensor and ad::Var ---------------------------

template <typename V>
V constant_like(const Tensor& t) {
    if constexpr (std::is_same_v<V, Tensor>) {
        return t;
    } else {
        return V::constant(t);
    }
}

template <typename V>
void require_finite(const V& v, const std::string& layer) {
    if (!ad::value_of(v).allFinite()) {
        throw NumericError("non-finite value produced by " + layer);
    }
}

template <typename V, typename P>
V net_forward(const CouplingNet& net, V h, const P& p) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        h = ad::add_row(ad::matmul(h, p[net.layers[l].weight]), p[net.layers[l].bias]);
        if (l + 1 < net.layers.size()) {
            h = ad::relu(h);
        }
    }
    return h;
}

/// Returns the per-row logdet contribution and updates h in place.
template <typename V, typename P>
V additive_forward(const AdditiveCoupling& c, std::span<const int> active, V& h, const P& p) {
    const auto [cond, trans] = split(active, c.parity);
    const V shift = net_forward(c.net, ad::gather_cols(h, cond), p);
    h = ad::replace_cols(h, trans, ad::add(ad::gather_cols(h, trans), shift));
    return constant_like<V>(Tensor::Zero(ad::value_of(h).rows(), 1));
}

template <typename V, typename P>
V scale_forward(std::size_t log_scale, V& h, const P& p) {
    h = ad::mul_row(h, ad::exp(p[log_scale]));
    return ad::add_scalar_tensor(constant_like<V>(Tensor::Zero(ad::value_of(h).rows(), 1)), ad::sum(p[log_scale]));
}

template <typename V, typename P>
V actnorm_forward(const ActNorm& a, std::span<const int> active, V& h, const P& p) {
    const V y = ad::mul_row(ad::add_row(ad::gather_cols(h, active), p[a.bias]), ad::exp(p[a.log_scale]));
    h = ad::replace_cols(h, active, y);
    return ad::add_scalar_tensor(constant_like<V>(Tensor::Zero(ad::value_of(h).rows(), 1)), ad::sum(p[a.log_scale]));
}

template <typename V, typename P>
V linear_weight(const InvertibleLinear& lin, const P& p) {
    const auto n = static_cast<Eigen::Index>(lin.permutation.size());
    const V lower = ad::add_const(ad::mul_const(p[lin.lower], strict_lower_mask(n)), Tensor::Identity(n, n));
    const V upper = ad::add(ad::mul_const(p[lin.upper], strict_upper_mask(n)),
                            ad::diag(ad::mul_const(ad::exp(p[lin.log_diag]), lin.sign)));
    return ad::matmul(constant_like<V>(permutation_matrix(lin.permutation)), ad::matmul(lower, upper));
}

template <typename V, typename P>
V linear_forward(const InvertibleLinear& lin, std::span<const int> active, V& h, const P& p) {
    h = ad::replace_cols(h, active, ad::matmul(ad::gather_cols(h, active), linear_weight<V>(lin, p)));
    return ad::add_scalar_tensor(constant_like<V>(Tensor::Zero(ad::value_of(h).rows(), 1)), ad::sum(p[lin.log_diag]));
}

template <typename V, typename P>
V affine_forward(const AffineCoupling& c, std::span<const int> active, V& h, const P& p) {
    const auto [cond, trans] = split(active, c.parity);
    const int m = static_cast<int>(trans.size());
    const V out = net_forward(c.net, ad::gather_cols(h, cond), p);
    const V shift = ad::gather_cols(out, iota_cols(0, m));
    const V log_scale = ad::clamp(ad::gather_cols(out, iota_cols(m, m)), -kAffineScaleClamp, kAffineScaleClamp);
    h = ad::replace_cols(h, trans, ad::add(ad::mul(ad::gather_cols(h, trans), ad::exp(log_scale)), shift));
    return ad::row_sum(log_scale);
}

template <typename V, typename P>
std::pair<V, V> forward_impl(const FlowModel& model, V h, const P& p, std::vector<Tensor>* trace) {
    V logdet = constant_like<V>(Tensor::Zero(ad::value_of(h).rows(), 1));
    auto push = [&](const V& contribution, const std::string& layer) {
        require_finite(h, layer);
        require_finite(contribution, layer + " (logdet)");
        logdet = ad::add(logdet, contribution);
        if (trace) trace->push_back(ad::value_of(contribution));
    };
    if (!model.is_glow()) {
        const auto& nice = model.nice();
        const auto all = iota_cols(0, static_cast<int>(model.dim()));
        for (std::size_t c = 0; c < nice.couplings.size(); ++c) {
            const V ld = additive_forward(nice.couplings[c], all, h, p);
            push(ld, "NICE coupling " + std::to_string(c));
        }
        const V ld = scale_forward(nice.log_scale, h, p);
        push(ld, "NICE scale layer");
        return {h, logdet};
    }
    const auto& glow = model.glow();
    for (std::size_t l = 0; l < glow.levels.size(); ++l) {
        const auto& level = glow.levels[l];
        for (std::size_t s = 0; s < level.steps.size(); ++s) {
            const auto& step = level.steps[s];
            const std::string tag = "Glow level " + std::to_string(l) + " step " + std::to_string(s);
            V ld = actnorm_forward(step.actnorm, level.active, h, p);
            push(ld, tag + " actnorm");
            ld = linear_forward(step.linear, level.active, h, p);
            push(ld, tag + " invertible linear");
            ld = affine_forward(step.coupling, level.active, h, p);
            push(ld, tag + " affine coupling");
        }
    }
    return {h, logdet};
}

struct TensorParams {
    const std::vector<Tensor>& values;
    const Tensor& operator[](std::size_t i) const { return values[i]; }
};

struct VarParams {
    const std::vector<ad::Var>& values;
    const ad::Var& operator[](std::size_t i) const { return values[i]; }
};

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <typename V>
V nll_expression(const V& z, const V& logdet) {
    const double n = static_cast<double>(ad::value_of(z).rows());
    const double d = static_cast<double>(ad::value_of(z).cols());
    const V quad = ad::scale(ad::sum(ad::square(z)), 0.5 / n);
    const V ld = ad::scale(ad::sum(logdet), 1.0 / n);
    return ad::add_scalar_tensor(ad::sub(quad, ld), constant_like<V>(Tensor::Constant(1, 1, 0.5 * d * kLog2Pi)));
}

void check_input(const FlowModel& model, const Tensor& x, const char* what) {
    if (x.cols() != static_cast<Eigen::Index>(model.dim())) {
        throw ShapeError(std::string(what) + ": model dim " + std::to_string(model.dim()) + ", input has " +
                         std::to_string(x.cols()) + " columns");
    }
    if (!x.allFinite()) {
        throw ValueError(std::string(what) + ": input contains non-finite values");
    }
}

}  // namespace

std::uint32_t dim_of(const ArchSpec& spec) {
    return std::visit([](const auto& s) { return s.dim; }, spec);
}

std::size_t FlowModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
}

FlowModel FlowModel::create(const ArchSpec& spec, std::uint64_t seed) {
    FlowModel model;
    model.spec_ = spec;
    SplitMix64 rng(seed);
    Builder b(model.params_, model.names_, rng);
    if (const auto* nice_spec = std::get_if<NiceSpec>(&spec)) {
        if (nice_spec->dim < 2) throw ConfigError("NICE needs dim >= 2");
        if (nice_spec->couplings < 1) throw ConfigError("NICE needs at least one coupling");
        NiceLayout nice;
        const auto all = iota_cols(0, static_cast<int>(nice_spec->dim));
        for (std::uint32_t c = 0; c < nice_spec->couplings; ++c) {
            AdditiveCoupling coupling;
            coupling.parity = c % 2 == 0 ? MaskParity::even : MaskParity::odd;
            const auto [cond, trans] = split(all, coupling.parity);
            coupling.net = b.net(static_cast<int>(cond.size()), static_cast<int>(trans.size()), nice_spec->hidden_layers,
                                 nice_spec->hidden_units, "coupling" + std::to_string(c));
            nice.couplings.push_back(std::move(coupling));
        }
        nice.log_scale = b.zeros(1, nice_spec->dim, "log_scale");
        model.layout_ = std::move(nice);
        return model;
    }
    const auto& g = std::get<GlowSpec>(spec);
    if (g.levels < 1 || g.depth < 1) throw ConfigError("Glow needs levels >= 1 and depth >= 1");
    GlowLayout glow;
    std::vector<int> active = iota_cols(0, static_cast<int>(g.dim));
    for (std::uint32_t l = 0; l < g.levels; ++l) {
        if (active.size() < 2) {
            throw ConfigError("Glow level " + std::to_string(l) + " would have " + std::to_string(active.size()) +
                              " active dimensions; need >= 2");
        }
        GlowLevel level;
        level.active = active;
        const auto n = static_cast<Eigen::Index>(active.size());
        for (std::uint32_t s = 0; s < g.depth; ++s) {
            const std::string tag = "level" + std::to_string(l) + ".step" + std::to_string(s);
            GlowStep step;
            step.actnorm.bias = b.zeros(1, n, tag + ".actnorm.bias");
            step.actnorm.log_scale = b.zeros(1, n, tag + ".actnorm.log_scale");
            step.linear.permutation = iota_cols(0, static_cast<int>(n));
            shuffle(step.linear.permutation.begin(), step.linear.permutation.end(), rng);
            step.linear.sign = Tensor::Ones(1, n);
            step.linear.lower = b.zeros(n, n, tag + ".linear.lower");
            step.linear.upper = b.zeros(n, n, tag + ".linear.upper");
            step.linear.log_diag = b.zeros(1, n, tag + ".linear.log_diag");
            step.coupling.parity = s % 2 == 0 ? MaskParity::even : MaskParity::odd;
            const auto [cond, trans] = split(active, step.coupling.parity);
            step.coupling.net = b.net(static_cast<int>(cond.size()), 2 * static_cast<int>(trans.size()),
                                      g.hidden_layers, g.hidden_units, tag + ".coupling");
            level.steps.push_back(std::move(step));
        }
        glow.levels.push_back(std::move(level));
        active.resize(active.size() - active.size() / 2);
    }
    model.layout_ = std::move(glow);
    return model;
}

FlowOutput flow_forward(const FlowModel& model, const Tensor& x, std::vector<Tensor>* layer_logdets) {
    check_input(model, x, "flow_forward");
    auto [z, logdet] = forward_impl<Tensor>(model, x, TensorParams{model.parameters()}, layer_logdets);
    return {std::move(z), std::move(logdet)};
}

Tensor flow_inverse(const FlowModel& model, const Tensor& z) {
    check_input(model, z, "flow_inverse");
    const auto& p = model.parameters();
    Tensor h = z;
    auto check = [&](const std::string& layer) {
        if (!h.allFinite()) throw NumericError("non-finite value in inverse of " + layer);
    };
    if (!model.is_glow()) {
        const auto& nice = model.nice();
        const auto all = iota_cols(0, static_cast<int>(model.dim()));
        h = ad::mul_row(h, ad::exp(Tensor(-p[nice.log_scale])));
        check("NICE scale layer");
        for (std::size_t c = nice.couplings.size(); c-- > 0;) {
            const auto [cond, trans] = split(all, nice.couplings[c].parity);
            const Tensor shift = net_forward(nice.couplings[c].net, ad::gather_cols(h, cond), TensorParams{p});
            h = ad::replace_cols(h, trans, ad::gather_cols(h, trans) - shift);
            check("NICE coupling " + std::to_string(c));
        }
        return h;
    }
    const auto& glow = model.glow();
    for (std::size_t l = glow.levels.size(); l-- > 0;) {
        const auto& level = glow.levels[l];
        for (std::size_t s = level.steps.size(); s-- > 0;) {
            const auto& step = level.steps[s];
            const std::string tag = "Glow level " + std::to_string(l) + " step " + std::to_string(s);

            const auto [cond, trans] = split(level.active, step.coupling.parity);
            const int m = static_cast<int>(trans.size());
            const Tensor out = net_forward(step.coupling.net, ad::gather_cols(h, cond), TensorParams{p});
            const Tensor shift = out.leftCols(m);
            const Tensor log_scale = ad::clamp(Tensor(out.rightCols(m)), -kAffineScaleClamp, kAffineScaleClamp);
            const Tensor restored = (ad::gather_cols(h, trans) - shift).cwiseProduct(ad::exp(Tensor(-log_scale)));
            h = ad::replace_cols(h, trans, restored);
            check(tag + " affine coupling");

            // x * P * L * U' = y  =>  solve against U', then L, then undo P.
            const auto n = static_cast<Eigen::Index>(level.active.size());
            const auto& lin = step.linear;
            Tensor upper = p[lin.upper].cwiseProduct(strict_upper_mask(n));
            upper.diagonal() = ad::exp(p[lin.log_diag]).cwiseProduct(lin.sign).transpose();
            const Tensor lower = p[lin.lower].cwiseProduct(strict_lower_mask(n)) + Tensor::Identity(n, n);
            const Tensor y = ad::gather_cols(h, level.active);
            const Tensor t1 = upper.transpose().triangularView<Eigen::Lower>().solve(y.transpose());
            const Tensor t2 = lower.transpose().triangularView<Eigen::UnitUpper>().solve(t1);
            const Tensor x = t2.transpose() * permutation_matrix(lin.permutation).transpose();
            h = ad::replace_cols(h, level.active, x);
            check(tag + " invertible linear");

            const Tensor unscaled =
                ad::mul_row(ad::gather_cols(h, level.active), ad::exp(Tensor(-p[step.actnorm.log_scale])));
            h = ad::replace_cols(h, level.active, ad::add_row(unscaled, Tensor(-p[step.actnorm.bias])));
            check(tag + " actnorm");
        }
    }
    return h;
}

double nll(const FlowModel& model, const Tensor& batch) {
    if (batch.rows() == 0) {
        throw EmptyInputError("nll needs a non-empty batch");
    }
    const auto out = flow_forward(model, batch);
    return nll_expression<Tensor>(out.z, out.logdet)(0, 0);
}

std::vector<Tensor> nll_gradient(const FlowModel& model, const Tensor& batch) {
    if (batch.rows() == 0) {
        throw EmptyInputError("nll_gradient needs a non-empty batch");
    }
    check_input(model, batch, "nll_gradient");
    std::vector<ad::Var> leaves;
    leaves.reserve(model.parameters().size());
    for (const auto& t : model.parameters()) leaves.push_back(ad::Var::parameter(t));
    const auto [z, logdet] = forward_impl<ad::Var>(model, ad::Var::constant(batch), VarParams{leaves}, nullptr);
    ad::backward(nll_expression<ad::Var>(z, logdet));
    std::vector<Tensor> grads;
    grads.reserve(leaves.size());
    for (const auto& leaf : leaves) {
        grads.push_back(leaf.has_grad() ? leaf.grad() : Tensor::Zero(leaf.rows(), leaf.cols()));
    }
    return grads;
}

ad::Var forward_loss(const FlowModel& model, const std::vector<ad::Var>& leaves, const Tensor& batch) {
    check_input(model, batch, "forward_loss");
    const auto [z, logdet] = forward_impl<ad::Var>(model, ad::Var::constant(batch), VarParams{leaves}, nullptr);
    return nll_expression<ad::Var>(z, logdet);
}

void initialize_actnorm(FlowModel& model, const Tensor& batch) {
    if (!model.is_glow()) {
        throw ConfigError("actnorm initialisation applies to Glow models only");
    }
    if (batch.rows() == 0) {
        throw EmptyInputError("actnorm initialisation needs a non-empty batch");
    }
    check_input(model, batch, "initialize_actnorm");
    auto& p = model.parameters();
    auto& glow = model.glow_mutable();
    Tensor h = batch;
    for (const auto& level : glow.levels) {
        for (const auto& step : level.steps) {
            const Tensor a = ad::gather_cols(h, level.active);
            const Eigen::RowVectorXd mean = a.colwise().mean();
            const Eigen::RowVectorXd stddev = ((a.rowwise() - mean).array().square().colwise().mean()).sqrt();
            p[step.actnorm.bias] = -mean;
            p[step.actnorm.log_scale] = -(stddev.array() + 1e-6).log().matrix();
            actnorm_forward(step.actnorm, level.active, h, TensorParams{p});
            linear_forward(step.linear, level.active, h, TensorParams{p});
            affine_forward(step.coupling, level.active, h, TensorParams{p});
        }
    }
    glow.actnorm_initialized = true;
}

Tensor to_tensor(const EmbeddingMatrix& W) { return W; }
EmbeddingMatrix to_embedding(const Tensor& t) { return t; }

EmbeddingMatrix apply_flow(const FlowModel& model, const EmbeddingMatrix& W) {
    constexpr Eigen::Index kChunk = 4096;
    EmbeddingMatrix out(W.rows(), W.cols());
    if (W.cols() != static_cast<Eigen::Index>(model.dim())) {
        throw ShapeError("apply_flow: model dim " + std::to_string(model.dim()) + ", input dim " +
                         std::to_string(W.cols()));
    }
    for (Eigen::Index start = 0; start < W.rows(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, W.rows() - start);
        const Tensor x = W.middleRows(start, len);
        out.middleRows(start, len) = flow_forward(model, x).z;
    }
    return out;
}

}  // namespace isoret::flow
