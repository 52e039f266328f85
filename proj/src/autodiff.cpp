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

#include "isoret/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace isoret::ad {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

thread_local bool g_grad_enabled = true;

void accumulate(Node& node, const Tensor& contribution) {
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.size() == 0) {
        node.grad = contribution;
    } else {
        node.grad += contribution;
    }
}

template <typename Backward>
Var record(Tensor value, std::vector<NodePtr> parents, Backward&& fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            needs = needs || p->requires_grad;
        }
    }
    node->requires_grad = needs;
    if (needs) {
        node->parents = std::move(parents);
        node->backward = std::forward<Backward>(fn);
    }
    return Var(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

void backward(const Var& loss) {
    const NodePtr& root = loss.node();
    if (!root || root->value.size() != 1) {
        throw std::invalid_argument("backward: loss must be a 1 x 1 tensor");
    }
    if (!root->requires_grad) {
        return;
    }
    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    accumulate(*root, Tensor::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad.size() != 0) {
            node->backward(*node);
        }
    }
}

// ---- recorded ops ---------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    auto pa = a.node();
    auto pb = b.node();
    return record(a.value() * b.value(), {pa, pb}, [pa, pb](const Node& self) {
        if (pa->requires_grad) accumulate(*pa, self.grad * pb->value.transpose());
        if (pb->requires_grad) accumulate(*pb, pa->value.transpose() * self.grad);
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    auto pa = a.node();
    auto pb = b.node();
    return record(a.value() + b.value(), {pa, pb}, [pa, pb](const Node& self) {
        accumulate(*pa, self.grad);
        accumulate(*pb, self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    auto pa = a.node();
    auto pb = b.node();
    return record(a.value() - b.value(), {pa, pb}, [pa, pb](const Node& self) {
        accumulate(*pa, self.grad);
        if (pb->requires_grad) accumulate(*pb, -self.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    auto pa = a.node();
    auto pb = b.node();
    return record(a.value().cwiseProduct(b.value()), {pa, pb}, [pa, pb](const Node& self) {
        if (pa->requires_grad) accumulate(*pa, self.grad.cwiseProduct(pb->value));
        if (pb->requires_grad) accumulate(*pb, self.grad.cwiseProduct(pa->value));
    });
}

Var add_row(const Var& a, const Var& row) {
    auto pa = a.node();
    auto pr = row.node();
    return record(add_row(a.value(), row.value()), {pa, pr}, [pa, pr](const Node& self) {
        accumulate(*pa, self.grad);
        if (pr->requires_grad) accumulate(*pr, self.grad.colwise().sum());
    });
}

Var mul_row(const Var& a, const Var& row) {
    auto pa = a.node();
    auto pr = row.node();
    return record(mul_row(a.value(), row.value()), {pa, pr}, [pa, pr](const Node& self) {
        if (pa->requires_grad) accumulate(*pa, mul_row(self.grad, pr->value));
        if (pr->requires_grad) accumulate(*pr, self.grad.cwiseProduct(pa->value).colwise().sum());
    });
}

Var add_scalar_tensor(const Var& a, const Var& s) {
    auto pa = a.node();
    auto ps = s.node();
    return record(add_scalar_tensor(a.value(), s.value()), {pa, ps}, [pa, ps](const Node& self) {
        accumulate(*pa, self.grad);
        if (ps->requires_grad) accumulate(*ps, Tensor::Constant(1, 1, self.grad.sum()));
    });
}

Var scale(const Var& a, double factor) {
    auto pa = a.node();
    return record(a.value() * factor, {pa}, [pa, factor](const Node& self) { accumulate(*pa, self.grad * factor); });
}

Var relu(const Var& a) {
    auto pa = a.node();
    return record(relu(a.value()), {pa}, [pa](const Node& self) {
        accumulate(*pa, (pa->value.array() > 0.0).select(self.grad, 0.0));
    });
}

Var exp(const Var& a) {
    auto pa = a.node();
    return record(exp(a.value()), {pa}, [pa](const Node& self) {
        accumulate(*pa, self.grad.cwiseProduct(self.value));
    });
}

Var clamp(const Var& a, double lo, double hi) {
    auto pa = a.node();
    return record(clamp(a.value(), lo, hi), {pa}, [pa, lo, hi](const Node& self) {
        accumulate(*pa, (pa->value.array() >= lo && pa->value.array() <= hi).select(self.grad, 0.0));
    });
}

Var square(const Var& a) {
    auto pa = a.node();
    return record(square(a.value()), {pa}, [pa](const Node& self) {
        accumulate(*pa, 2.0 * self.grad.cwiseProduct(pa->value));
    });
}

Var row_sum(const Var& a) {
    auto pa = a.node();
    return record(row_sum(a.value()), {pa}, [pa](const Node& self) {
        accumulate(*pa, self.grad.replicate(1, pa->value.cols()));
    });
}

Var sum(const Var& a) {
    auto pa = a.node();
    return record(sum(a.value()), {pa}, [pa](const Node& self) {
        accumulate(*pa, Tensor::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
    });
}

Var gather_cols(const Var& a, std::span<const int> cols) {
    auto pa = a.node();
    std::vector<int> idx(cols.begin(), cols.end());
    return record(gather_cols(a.value(), cols), {pa}, [pa, idx](const Node& self) {
        Tensor g = Tensor::Zero(pa->value.rows(), pa->value.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            g.col(idx[k]) += self.grad.col(static_cast<Eigen::Index>(k));
        }
        accumulate(*pa, g);
    });
}

Var replace_cols(const Var& a, std::span<const int> cols, const Var& b) {
    auto pa = a.node();
    auto pb = b.node();
    std::vector<int> idx(cols.begin(), cols.end());
    return record(replace_cols(a.value(), cols, b.value()), {pa, pb}, [pa, pb, idx](const Node& self) {
        if (pa->requires_grad) {
            Tensor g = self.grad;
            for (int c : idx) g.col(c).setZero();
            accumulate(*pa, g);
        }
        if (pb->requires_grad) accumulate(*pb, gather_cols(self.grad, idx));
    });
}

Var mul_const(const Var& a, const Tensor& c) {
    check_same_shape(a.value(), c, "mul_const");
    auto pa = a.node();
    return record(a.value().cwiseProduct(c), {pa}, [pa, c](const Node& self) {
        accumulate(*pa, self.grad.cwiseProduct(c));
    });
}

Var add_const(const Var& a, const Tensor& c) {
    check_same_shape(a.value(), c, "add_const");
    auto pa = a.node();
    return record(a.value() + c, {pa}, [pa](const Node& self) { accumulate(*pa, self.grad); });
}

Var diag(const Var& row) {
    auto pr = row.node();
    return record(diag(row.value()), {pr}, [pr](const Node& self) {
        accumulate(*pr, self.grad.diagonal().transpose());
    });
}

// ---- plain evaluation -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ");
    }
    Tensor out(a.rows(), b.cols());
    out.noalias() = a * b;
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { check_same_shape(a, b, "add"); return a + b; }
Tensor sub(const Tensor& a, const Tensor& b) { check_same_shape(a, b, "sub"); return a - b; }
Tensor mul(const Tensor& a, const Tensor& b) { check_same_shape(a, b, "mul"); return a.cwiseProduct(b); }

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument("add_row: row shape mismatch");
    }
    return a.rowwise() + row.row(0);
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument("mul_row: row shape mismatch");
    }
    Tensor out = a;
    out.array().rowwise() *= row.row(0).array();
    return out;
}

Tensor add_scalar_tensor(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) {
        throw std::invalid_argument("add_scalar_tensor: expected a 1 x 1 tensor");
    }
    return a.array() + s(0, 0);
}

Tensor scale(const Tensor& a, double factor) { return a * factor; }
Tensor relu(const Tensor& a) { return a.cwiseMax(0.0); }
Tensor exp(const Tensor& a) { return a.array().exp(); }
Tensor clamp(const Tensor& a, double lo, double hi) { return a.cwiseMax(lo).cwiseMin(hi); }
Tensor square(const Tensor& a) { return a.array().square(); }
Tensor row_sum(const Tensor& a) { return a.rowwise().sum(); }
Tensor sum(const Tensor& a) { return Tensor::Constant(1, 1, a.sum()); }

Tensor gather_cols(const Tensor& a, std::span<const int> cols) {
    Tensor out(a.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
    }
    return out;
}

Tensor replace_cols(const Tensor& a, std::span<const int> cols, const Tensor& b) {
    if (b.rows() != a.rows() || b.cols() != static_cast<Eigen::Index>(cols.size())) {
        throw std::invalid_argument("replace_cols: shape mismatch");
    }
    Tensor out = a;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.col(cols[k]) = b.col(static_cast<Eigen::Index>(k));
    }
    return out;
}

Tensor mul_const(const Tensor& a, const Tensor& c) { return mul(a, c); }
Tensor add_const(const Tensor& a, const Tensor& c) { return add(a, c); }

Tensor diag(const Tensor& row) {
    Tensor out = Tensor::Zero(row.size(), row.size());
    out.diagonal() = row.reshaped();
    return out;
}

}  // namespace isoret::ad
