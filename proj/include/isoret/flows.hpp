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
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "isoret/autodiff.hpp"
#include "isoret/embedding_store.hpp"

namespace isoret::flow {

using ad::Tensor;

/// Which half of the active coordinates conditions a coupling: `even` means
/// positions 0, 2, 4, ... are passed through and feed the coupling network,
/// the odd positions are transformed.
enum class MaskParity : std::uint8_t { even = 0, odd = 1 };

/// Additive-coupling flow: `couplings` alternating-parity additive couplings
/// followed by a per-dimension scale exp(log_scale).
struct NiceSpec {
    std::uint32_t dim = 2;
    std::uint32_t couplings = 4;
    std::uint32_t hidden_layers = 5;
    std::uint32_t hidden_units = 1000;
};

/// Multi-level flow on vectors. Each level runs `depth` steps of
/// actnorm -> invertible linear (LU) -> affine coupling over the active
/// coordinates, then (except after the last level) factors the second half of
/// the active coordinates out to the prior.
struct GlowSpec {
    std::uint32_t dim = 2;
    std::uint32_t levels = 2;
    std::uint32_t depth = 3;
    std::uint32_t hidden_layers = 2;
    std::uint32_t hidden_units = 512;
};

using ArchSpec = std::variant<NiceSpec, GlowSpec>;

std::uint32_t dim_of(const ArchSpec& spec);

/// Bias-plus-weight layers; ReLU between layers, none after the last.
/// Weight is in x out (rows are inputs), bias is 1 x out.
struct CouplingNet {
    struct Dense {
        std::size_t weight = 0;
        std::size_t bias = 0;
    };
    std::vector<Dense> layers;
};

struct AdditiveCoupling {
    MaskParity parity = MaskParity::even;
    CouplingNet net;
};

struct NiceLayout {
    std::vector<AdditiveCoupling> couplings;
    std::size_t log_scale = 0;  // 1 x D
};

/// y = (x + bias) * exp(log_scale)
struct ActNorm {
    std::size_t bias = 0;       // 1 x n
    std::size_t log_scale = 0;  // 1 x n
};

/// y = x * W with W = P * L * (U + diag(sign * exp(log_diag))); only the
/// strictly lower part of `lower` and strictly upper part of `upper` are used.
/// P has P(permutation[j], j) = 1, so (x * P)_j = x_{permutation[j]}.
struct InvertibleLinear {
    std::vector<int> permutation;
    Tensor sign;  // 1 x n, entries +-1, fixed
    std::size_t lower = 0;
    std::size_t upper = 0;
    std::size_t log_diag = 0;  // 1 x n
};

/// Transformed half: y = x * exp(clamp(s, -5, 5)) + t, where the coupling net
/// emits [t | s] from the conditioning half.
struct AffineCoupling {
    MaskParity parity = MaskParity::even;
    CouplingNet net;
};

struct GlowStep {
    ActNorm actnorm;
    InvertibleLinear linear;
    AffineCoupling coupling;
};

struct GlowLevel {
    std::vector<int> active;  // coordinate indices this level transforms
    std::vector<GlowStep> steps;
};

struct GlowLayout {
    std::vector<GlowLevel> levels;
    bool actnorm_initialized = false;
};

constexpr double kAffineScaleClamp = 5.0;

/// A NICE or Glow model. Parameters live in one flat list, in the traversal
/// order used by FLW1:
///   NICE: per coupling, per dense layer (weight, bias); then log_scale.
///   Glow: per level, per step: actnorm (bias, log_scale), linear (lower,
///         upper, log_diag), coupling dense layers (weight, bias).
/// Freshly created models are the identity map up to Glow's permutations:
/// coupling output layers, NICE log_scale, actnorm, and LU factors start at
/// zero. Hidden layers draw U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from
/// SplitMix64(seed) with zero biases.
class FlowModel {
public:
    static FlowModel create(const ArchSpec& spec, std::uint64_t seed);

    const ArchSpec& spec() const noexcept { return spec_; }
    bool is_glow() const noexcept { return std::holds_alternative<GlowSpec>(spec_); }
    std::uint32_t dim() const noexcept { return dim_of(spec_); }

    std::vector<Tensor>& parameters() noexcept { return params_; }
    const std::vector<Tensor>& parameters() const noexcept { return params_; }
    const std::vector<std::string>& parameter_names() const noexcept { return names_; }
    std::size_t parameter_count() const noexcept;

    const NiceLayout& nice() const { return std::get<NiceLayout>(layout_); }
    const GlowLayout& glow() const { return std::get<GlowLayout>(layout_); }
    GlowLayout& glow_mutable() { return std::get<GlowLayout>(layout_); }

private:
    FlowModel() = default;
    friend FlowModel decode_flow(std::span<const char> bytes);

    ArchSpec spec_;
    std::variant<NiceLayout, GlowLayout> layout_;
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
};

struct FlowOutput {
    Tensor z;       // n x D
    Tensor logdet;  // n x 1, log|det Df(x)| per row
};

/// Forward map f. When `layer_logdets` is given, it receives one n x 1 column
/// per layer whose sum is `logdet`. Throws NumericError naming the layer that
/// produced a non-finite value.
FlowOutput flow_forward(const FlowModel& model, const Tensor& x, std::vector<Tensor>* layer_logdets = nullptr);

/// Inverse map g = f^-1.
Tensor flow_inverse(const FlowModel& model, const Tensor& z);

/// Mean over rows of D/2 log(2 pi) + |f(x)|^2 / 2 - logdet(x).
double nll(const FlowModel& model, const Tensor& batch);

/// Exact gradient of nll() for every parameter, same order and shapes as
/// FlowModel::parameters().
std::vector<Tensor> nll_gradient(const FlowModel& model, const Tensor& batch);

/// Glow only: sets every actnorm so that its output on `batch` has zero mean
/// and unit variance per coordinate, propagating the batch layer by layer.
void initialize_actnorm(FlowModel& model, const Tensor& batch);

/// Row-wise f, logdets discarded.
EmbeddingMatrix apply_flow(const FlowModel& model, const EmbeddingMatrix& W);

Tensor to_tensor(const EmbeddingMatrix& W);
EmbeddingMatrix to_embedding(const Tensor& t);

/// FLW1 (little-endian): "FLW1" | version u32 = 1 | arch u32 (0 NICE, 1 Glow)
/// | dim u32 | hyperparameters u32[] (NICE: couplings, hidden_layers,
/// hidden_units; Glow: levels, depth, hidden_layers, hidden_units,
/// actnorm_initialized) | Glow only, per level and step: permutation u32[n],
/// sign f64[n] | parameters f64, traversal order, each row-major.
std::vector<char> encode_flow(const FlowModel& model);
FlowModel decode_flow(std::span<const char> bytes);
void save_flow(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_flow(const std::filesystem::path& path);

struct FlowTrainConfig {
    double learning_rate = 1e-4;
    std::uint32_t batch_size = 256;
    std::uint32_t epochs = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

struct TrainReport {
    double initial_nll = 0.0;        // identity-initialised model on all rows
    std::vector<double> epoch_nll;   // mean per-row nll over each epoch's batches
    std::uint64_t steps = 0;
    std::string checksum;            // sha256 of the FLW1 encoding
};

struct TrainResult {
    FlowModel model;
    TrainReport report;
};

/// Maximum-likelihood training with Adam. Deterministic in (W, arch, cfg):
/// SplitMix64(cfg.seed) yields an init seed and a shuffle seed; each epoch
/// reshuffles the row order (Fisher-Yates) when cfg.shuffle is set. Glow
/// actnorms are data-initialised on the first batch before step 1. Throws
/// TrainingError with the step index if the loss becomes non-finite.
TrainResult train_flow(const EmbeddingMatrix& W, const ArchSpec& arch, const FlowTrainConfig& cfg);

}  // namespace isoret::flow
