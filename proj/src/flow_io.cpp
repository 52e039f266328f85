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

#include <string_view>

#include "isoret/binary_io.hpp"
#include "isoret/error.hpp"
#include "isoret/flows.hpp"

namespace isoret::flow {

namespace {

constexpr std::string_view kMagic = "FLW1";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kArchNice = 0;
constexpr std::uint32_t kArchGlow = 1;
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxHyper = 1u << 20;

void put_tensor(io::ByteWriter& w, const Tensor& t) {
    const RowMatrix<double> row_major = t;
    w.f64s(std::span<const double>(row_major.data(), static_cast<std::size_t>(row_major.size())));
}

void get_tensor(io::ByteReader& r, Tensor& t) {
    RowMatrix<double> row_major(t.rows(), t.cols());
    r.f64s(std::span<double>(row_major.data(), static_cast<std::size_t>(row_major.size())));
    t = row_major;
}

FlowModel create_checked(const ArchSpec& spec) {
    try {
        return FlowModel::create(spec, 0);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("FLW1 header describes an invalid model: ") + e.what());
    }
}

}  // namespace

std::vector<char> encode_flow(const FlowModel& model) {
    io::ByteWriter w;
    w.bytes(kMagic);
    w.put<std::uint32_t>(kVersion);
    if (const auto* nice = std::get_if<NiceSpec>(&model.spec())) {
        w.put<std::uint32_t>(kArchNice);
        w.put<std::uint32_t>(nice->dim);
        w.put<std::uint32_t>(nice->couplings);
        w.put<std::uint32_t>(nice->hidden_layers);
        w.put<std::uint32_t>(nice->hidden_units);
    } else {
        const auto& g = std::get<GlowSpec>(model.spec());
        w.put<std::uint32_t>(kArchGlow);
        w.put<std::uint32_t>(g.dim);
        w.put<std::uint32_t>(g.levels);
        w.put<std::uint32_t>(g.depth);
        w.put<std::uint32_t>(g.hidden_layers);
        w.put<std::uint32_t>(g.hidden_units);
        w.put<std::uint32_t>(model.glow().actnorm_initialized ? 1 : 0);
        for (const auto& level : model.glow().levels) {
            for (const auto& step : level.steps) {
                for (int v : step.linear.permutation) w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
                put_tensor(w, step.linear.sign);
            }
        }
    }
    for (const auto& t : model.parameters()) put_tensor(w, t);
    return w.release();
}

FlowModel decode_flow(std::span<const char> bytes) {
    io::ByteReader r(bytes, "FLW1");
    if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
        throw FormatError("not a FLW1 file (bad magic)");
    }
    if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
        throw FormatError("unsupported FLW1 version " + std::to_string(v));
    }
    const auto arch = r.get<std::uint32_t>();
    auto hyper = [&] {
        const auto v = r.get<std::uint32_t>();
        if (v > kMaxHyper) throw FormatError("FLW1 hyperparameter out of range: " + std::to_string(v));
        return v;
    };
    FlowModel model;
    if (arch == kArchNice) {
        NiceSpec spec;
        spec.dim = hyper();
        spec.couplings = hyper();
        spec.hidden_layers = hyper();
        spec.hidden_units = hyper();
        model = create_checked(spec);
    } else if (arch == kArchGlow) {
        GlowSpec spec;
        spec.dim = hyper();
        spec.levels = hyper();
        spec.depth = hyper();
        spec.hidden_layers = hyper();
        spec.hidden_units = hyper();
        const auto initialized = r.get<std::uint32_t>();
        model = create_checked(spec);
        auto& glow = model.glow_mutable();
        glow.actnorm_initialized = initialized != 0;
        for (auto& level : glow.levels) {
            for (auto& step : level.steps) {
                const auto n = step.linear.permutation.size();
                std::vector<bool> seen(n, false);
                for (auto& v : step.linear.permutation) {
                    const auto idx = r.get<std::uint32_t>();
                    if (idx >= n || seen[idx]) throw FormatError("FLW1 permutation is not a permutation");
                    seen[idx] = true;
                    v = static_cast<int>(idx);
                }
                get_tensor(r, step.linear.sign);
                if (!(step.linear.sign.array().abs() == 1.0).all()) {
                    throw FormatError("FLW1 LU sign entries must be +-1");
                }
            }
        }
    } else {
        throw FormatError("unknown FLW1 arch tag " + std::to_string(arch));
    }
    for (auto& t : model.parameters()) {
        get_tensor(r, t);
        if (!t.allFinite()) throw ValueError("FLW1 holds non-finite parameters");
    }
    if (r.remaining() != 0) {
        throw FormatError("FLW1 has " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return model;
}

void save_flow(const FlowModel& model, const std::filesystem::path& path) { io::write_file(path, encode_flow(model)); }

FlowModel load_flow(const std::filesystem::path& path) { return decode_flow(io::read_file(path)); }

}  // namespace isoret::flow
