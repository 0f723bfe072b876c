#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gradmask/tensor.hpp"

namespace gradmask::ad {

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Relu,
    Sigmoid,
    Softplus,
    Abs,
    SqrtEps,
    Matmul,
    Transpose,
    Conv2d,
    Conv2dDx,
    Conv2dDw,
    BroadcastChannels,
    ChannelSum,
    MaxPool,
    ScatterIdx,
    GatherIdx,
    Sum,
    Mean,
    Reshape,
    Select,
    PutScalar,
    FillLike,
    Custom,
};

const char* op_name(Op op) noexcept;

class Node;

// Extension point for ops defined by tensor-level functions only. Such ops
// differentiate once; they carry no second-order rule, so grad() with
// create_graph through them is rejected.
struct CustomOpDef {
    std::string name;
    std::function<Tensor(std::span<const Tensor>)> forward;
    std::function<std::vector<Tensor>(std::span<const Tensor>, const Tensor&)> backward;
};

struct OpRecord {
    Op kind = Op::Leaf;
    std::vector<Node> inputs;
    double scalar = 0.0;     // Scale factor
    int i0 = 0;              // conv/pool stride
    int i1 = 0;              // conv pad / pool k
    std::size_t index = 0;   // Select / PutScalar position
    Shape shape0;            // auxiliary shape (reshape source, scatter target, ...)
    std::shared_ptr<const std::vector<std::uint32_t>> indices; // pool/gather routing
    std::shared_ptr<const CustomOpDef> custom;
};

struct NodeData {
    Tensor value;
    bool requires_grad = false;
    std::uint64_t id = 0; // creation order; fixes gradient accumulation order
    std::unique_ptr<OpRecord> op; // null for leaves

    ~NodeData();
};

// Value-semantics handle to one vertex of the (acyclic) computation graph.
class Node {
public:
    Node() = default;
    explicit Node(std::shared_ptr<NodeData> d) : d_(std::move(d)) {}

    bool defined() const noexcept { return static_cast<bool>(d_); }
    const Tensor& value() const { return d_->value; }
    bool requires_grad() const { return d_->requires_grad; }
    bool is_leaf() const { return !d_->op; }

    // Replaces a leaf's value (parameter updates). The tensor itself is
    // immutable; graphs recorded against the old value must not be reused.
    void set_value(Tensor v);

    const std::shared_ptr<NodeData>& impl() const noexcept { return d_; }

private:
    std::shared_ptr<NodeData> d_;
};

Node lift(Tensor t, bool requires_grad);
Node constant(Tensor t);

// Graph recording toggle for the current thread. With recording off every op
// produces a detached leaf holding the same numeric value.
bool recording_enabled() noexcept;

class RecordScope {
public:
    explicit RecordScope(bool enabled);
    ~RecordScope();
    RecordScope(const RecordScope&) = delete;
    RecordScope& operator=(const RecordScope&) = delete;

private:
    bool previous_;
};

// ---- differentiable ops over Nodes ----
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
Node div(const Node& a, const Node& b);
Node scale(const Node& a, double c);
Node neg(const Node& a);
Node relu(const Node& a);
Node sigmoid(const Node& a);
Node softplus(const Node& a);
Node abs(const Node& a);
Node sqrt_eps(const Node& a);
Node matmul(const Node& a, const Node& b);
Node transpose(const Node& a);
Node conv2d(const Node& x, const Node& w, int stride, int pad);
Node broadcast_channels(const Node& b, std::uint32_t h, std::uint32_t w);
Node channel_sum(const Node& x);
Node sum(const Node& x);
Node mean(const Node& x);
Node reshape(const Node& x, const Shape& shape);
Node select(const Node& x, std::size_t index);
Node custom(const std::shared_ptr<const CustomOpDef>& def, std::span<const Node> inputs);

struct MaxPoolNodes {
    Node values;
    std::shared_ptr<const std::vector<std::uint32_t>> argmax;
};
MaxPoolNodes maxpool2d(const Node& x, int k, int stride);

// d(output)/d(wrt[i]) for a rank-0 output. Unreachable targets yield zero
// tensors. With create_graph the results are differentiable again; without it
// they are plain leaves. Numeric values are identical either way.
std::vector<Node> grad(const Node& output, std::span<const Node> wrt, bool create_graph);

// Lossless flatten/restore of parameter leaves, in the order given. All
// parameters must share one dtype.
Tensor checkpoint_params(std::span<const Node> params);
void restore_params(std::span<Node> params, const Tensor& flat);

} // namespace gradmask::ad
