#pragma once

#include "bggan/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace bggan {

/// Every graph node carries its op kind so built networks can be audited
/// structurally (e.g. the pooling-only instance-norm construction).
enum class OpKind {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    ScalarMul,
    ScalarAdd,
    Sqrt,
    Abs,
    Tanh,
    Relu,
    LeakyRelu,
    Clamp,
    MaskMul,
    MatMul,
    Transpose,
    Reshape,
    Im2Col,
    Col2Im,
    ColsToNCHW,
    NCHWToCols,
    AvgPool,
    AvgPoolGrad,
    MaxPool,
    SumTo,
    BcastTo,
    ConcatC,
    SliceC,
    DwConv,
};

enum class OpCategory {
    Input,          // leaves and constants
    Elementwise,    // same-shape arithmetic, activations, masks
    Broadcast,      // size-1 axis expansion
    Pooling,        // spatial window pooling and its adjoint
    ReductionAxis,  // axis-reduction primitives (sum/mean over axes)
    Linalg,         // dense matrix products
    DataMovement,   // reshape, concat, slice, gather/scatter layouts
};

inline OpCategory op_category(OpKind k) {
    switch (k) {
        case OpKind::Leaf:
        case OpKind::Constant:
            return OpCategory::Input;
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul:
        case OpKind::Div:
        case OpKind::ScalarMul:
        case OpKind::ScalarAdd:
        case OpKind::Sqrt:
        case OpKind::Abs:
        case OpKind::Tanh:
        case OpKind::Relu:
        case OpKind::LeakyRelu:
        case OpKind::Clamp:
        case OpKind::MaskMul:
            return OpCategory::Elementwise;
        case OpKind::BcastTo:
            return OpCategory::Broadcast;
        case OpKind::AvgPool:
        case OpKind::AvgPoolGrad:
        case OpKind::MaxPool:
            return OpCategory::Pooling;
        case OpKind::SumTo:
            return OpCategory::ReductionAxis;
        case OpKind::MatMul:
        case OpKind::Transpose:
            return OpCategory::Linalg;
        default:
            return OpCategory::DataMovement;
    }
}

inline const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Constant: return "constant";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::ScalarMul: return "scalar_mul";
        case OpKind::ScalarAdd: return "scalar_add";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Abs: return "abs";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Clamp: return "clamp";
        case OpKind::MaskMul: return "mask_mul";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Reshape: return "reshape";
        case OpKind::Im2Col: return "im2col";
        case OpKind::Col2Im: return "col2im";
        case OpKind::ColsToNCHW: return "cols_to_nchw";
        case OpKind::NCHWToCols: return "nchw_to_cols";
        case OpKind::AvgPool: return "avgpool";
        case OpKind::AvgPoolGrad: return "avgpool_adjoint";
        case OpKind::MaxPool: return "maxpool";
        case OpKind::SumTo: return "sum_to";
        case OpKind::BcastTo: return "bcast_to";
        case OpKind::ConcatC: return "concat_channels";
        case OpKind::SliceC: return "slice_channels";
        case OpKind::DwConv: return "dwconv";
    }
    return "unknown";
}

template <typename Scalar>
class Var;

template <typename Scalar>
struct Node {
    Tensor4<Scalar> value;
    OpKind kind = OpKind::Constant;
    bool requires_grad = false;
    std::vector<Var<Scalar>> parents;
    // Given the output gradient (as a graph value), produce one gradient per
    // parent; an undefined Var means "no gradient for this parent".
    std::function<std::vector<Var<Scalar>>(const Var<Scalar>&)> backward;
};

/// Handle to a node in the computation tape. Cheap to copy.
template <typename Scalar>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<Scalar>> n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    Node<Scalar>* node() const { return node_.get(); }
    const Tensor4<Scalar>& value() const { return node_->value; }
    Tensor4<Scalar>& value() { return node_->value; }
    const Shape4& shape() const { return node_->value.shape; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    OpKind kind() const { return node_->kind; }

private:
    std::shared_ptr<Node<Scalar>> node_;
};

template <typename Scalar>
Var<Scalar> make_leaf(Tensor4<Scalar> v, bool requires_grad = false) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(v);
    n->kind = requires_grad ? OpKind::Leaf : OpKind::Constant;
    n->requires_grad = requires_grad;
    return Var<Scalar>(std::move(n));
}

template <typename Scalar>
Var<Scalar> make_constant(Tensor4<Scalar> v) {
    return make_leaf(std::move(v), false);
}

/// Detach: same values, fresh leaf, no history.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& x, bool requires_grad = false) {
    return make_leaf(x.value(), requires_grad);
}

namespace detail {
inline bool& grad_recording_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

/// While alive, newly created ops do not record parents/backward closures.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_recording_flag()) { detail::grad_recording_flag() = false; }
    ~NoGradGuard() { detail::grad_recording_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_recording() { return detail::grad_recording_flag(); }

template <typename Scalar>
using GradMap = std::unordered_map<const Node<Scalar>*, Var<Scalar>>;

namespace detail {

template <typename Scalar>
void topo_collect(const Var<Scalar>& v, std::unordered_set<const Node<Scalar>*>& seen,
                  std::vector<Var<Scalar>>& order) {
    if (!v.defined() || !v.node()->requires_grad) return;
    if (seen.count(v.node())) return;
    // Iterative DFS; graphs can be deep.
    struct Frame {
        Var<Scalar> var;
        size_t next_parent = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({v, 0});
    seen.insert(v.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        auto& parents = f.var.node()->parents;
        bool descended = false;
        while (f.next_parent < parents.size()) {
            const Var<Scalar>& p = parents[f.next_parent++];
            if (p.defined() && p.node()->requires_grad && !seen.count(p.node())) {
                seen.insert(p.node());
                stack.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().next_parent >= stack.back().var.node()->parents.size())) {
            order.push_back(stack.back().var);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Declared here, defined in ops.hpp (needs the add op).
template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b);

/// Reverse-mode sweep from `root`. Returns the gradient of sum(root * seed)
/// (seed defaults to ones) with respect to every reachable requires-grad
/// node. With create_graph the returned gradients are themselves
/// differentiable graph values, enabling gradient-penalty style double
/// backprop.
template <typename Scalar>
GradMap<Scalar> backward(const Var<Scalar>& root, bool create_graph = false,
                         const Tensor4<Scalar>* seed = nullptr) {
    GradMap<Scalar> grads;
    if (!root.defined() || !root.node()->requires_grad) return grads;

    std::unordered_set<const Node<Scalar>*> seen;
    std::vector<Var<Scalar>> order;  // post-order: parents before children
    detail::topo_collect(root, seen, order);

    Tensor4<Scalar> seed_t = seed ? *seed : Tensor4<Scalar>::ones(root.shape());
    if (seed_t.shape != root.shape()) throw ShapeError("backward: seed shape mismatch");

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    grads[root.node()] = make_constant(std::move(seed_t));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Var<Scalar>& v = *it;
        auto g_it = grads.find(v.node());
        if (g_it == grads.end()) continue;  // unreachable from root
        if (!v.node()->backward) continue;  // leaf
        Var<Scalar> g = g_it->second;
        std::vector<Var<Scalar>> pgrads = v.node()->backward(g);
        auto& parents = v.node()->parents;
        for (size_t i = 0; i < parents.size(); ++i) {
            if (i >= pgrads.size() || !pgrads[i].defined()) continue;
            const Var<Scalar>& p = parents[i];
            if (!p.defined() || !p.node()->requires_grad) continue;
            auto existing = grads.find(p.node());
            if (existing == grads.end())
                grads[p.node()] = pgrads[i];
            else
                existing->second = existing->second + pgrads[i];
        }
    }
    return grads;
}

/// Walks the forward construction of `root` and returns every node whose op
/// category is outside `allowed`. Leaves/constants always pass; traversal
/// stops at `boundaries` (treated as inputs), so a layer can be audited
/// without inspecting whatever produced its input.
template <typename Scalar>
std::vector<OpKind> audit_graph(const Var<Scalar>& root, const std::vector<OpCategory>& allowed,
                                const std::vector<Var<Scalar>>& boundaries = {}) {
    std::unordered_set<const Node<Scalar>*> stop;
    for (const auto& b : boundaries)
        if (b.defined()) stop.insert(b.node());
    std::vector<OpKind> violations;
    std::unordered_set<const Node<Scalar>*> seen;
    std::vector<Var<Scalar>> stack{root};
    while (!stack.empty()) {
        Var<Scalar> v = stack.back();
        stack.pop_back();
        if (!v.defined() || seen.count(v.node())) continue;
        seen.insert(v.node());
        if (stop.count(v.node())) continue;
        OpCategory cat = op_category(v.node()->kind);
        bool ok = cat == OpCategory::Input;
        for (OpCategory a : allowed) ok = ok || cat == a;
        if (!ok) violations.push_back(v.node()->kind);
        for (const auto& p : v.node()->parents) stack.push_back(p);
    }
    return violations;
}

}  // namespace bggan
