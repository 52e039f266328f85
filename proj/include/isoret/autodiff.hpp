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

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace isoret::ad {

using Tensor = Eigen::MatrixXd;

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;  // empty until a gradient reaches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(const Node&)> backward;
};

}  // namespace detail

/// Handle to a node of the reverse-mode graph. Copies share the node.
///
/// Results of operations on a Var that requires gradients keep their inputs
/// alive until the result is released; with no such input (or inside a
/// NoGradGuard) nothing is recorded and intermediates die immediately.
class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    const Tensor& value() const { return node_->value; }
    /// Leaf values only; used by optimisers.
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool has_grad() const { return node_ && node_->grad.size() != 0; }
    void zero_grad() { node_->grad.resize(0, 0); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }

    /// Used by op implementations.
    explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

/// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
/// `loss` must be 1 x 1. Leaf gradients accumulate across calls.
void backward(const Var& loss);

// Every op exists for Var (recorded) and Tensor (plain evaluation) so layer
// code can be written once as a template over the value type.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row is 1 x cols, broadcast down
Var mul_row(const Var& a, const Var& row);
Var add_scalar_tensor(const Var& a, const Var& s);  // s is 1 x 1
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var exp(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var square(const Var& a);
Var row_sum(const Var& a);  // n x 1
Var sum(const Var& a);      // 1 x 1
Var gather_cols(const Var& a, std::span<const int> cols);
Var replace_cols(const Var& a, std::span<const int> cols, const Var& b);
Var mul_const(const Var& a, const Tensor& c);
Var add_const(const Var& a, const Tensor& c);
Var diag(const Var& row);  // 1 x n -> n x n

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor add_scalar_tensor(const Tensor& a, const Tensor& s);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor square(const Tensor& a);
Tensor row_sum(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor gather_cols(const Tensor& a, std::span<const int> cols);
Tensor replace_cols(const Tensor& a, std::span<const int> cols, const Tensor& b);
Tensor mul_const(const Tensor& a, const Tensor& c);
Tensor add_const(const Tensor& a, const Tensor& c);
Tensor diag(const Tensor& row);

inline const Tensor& value_of(const Var& v) { return v.value(); }
inline const Tensor& value_of(const Tensor& t) { return t; }

}  // namespace isoret::ad
