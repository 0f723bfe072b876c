#include "gradmask/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_map>
#include <unordered_set>

namespace gradmask::ad {

const char* op_name(Op op) noexcept {
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Abs: return "abs";
    case Op::SqrtEps: return "sqrt_eps";
    case Op::Matmul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Conv2d: return "conv2d";
    case Op::Conv2dDx: return "conv2d_dx";
    case Op::Conv2dDw: return "conv2d_dw";
    case Op::BroadcastChannels: return "broadcast_channels";
    case Op::ChannelSum: return "channel_sum";
    case Op::MaxPool: return "maxpool2d";
    case Op::ScatterIdx: return "scatter_index";
    case Op::GatherIdx: return "gather_index";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Reshape: return "reshape";
    case Op::Select: return "select";
    case Op::PutScalar: return "put_scalar";
    case Op::FillLike: return "fill_like";
    case Op::Custom: return "custom";
    }
    return "unknown";
}

namespace {

std::atomic<std::uint64_t> g_next_id{1};

thread_local bool g_recording = true;

} // namespace

NodeData::~NodeData() {
    // Unwind long input chains iteratively; recursive shared_ptr teardown can
    // exhaust the stack on big training graphs.
    if (!op) return;
    std::vector<std::unique_ptr<OpRecord>> pending;
    pending.push_back(std::move(op));
    while (!pending.empty()) {
        std::unique_ptr<OpRecord> rec = std::move(pending.back());
        pending.pop_back();
        for (Node& in : rec->inputs) {
            std::shared_ptr<NodeData> d = in.impl();
            if (d && d.use_count() == 2 && d->op) // `d` plus the graph edge we are dropping
                pending.push_back(std::move(d->op));
        }
    }
}

bool recording_enabled() noexcept { return g_recording; }

RecordScope::RecordScope(bool enabled) : previous_(g_recording) { g_recording = enabled; }
RecordScope::~RecordScope() { g_recording = previous_; }

void Node::set_value(Tensor v) {
    if (!d_) raise(ErrorCode::Contract, "set_value on empty node");
    if (d_->op) raise(ErrorCode::Contract, "set_value is only valid on leaf nodes");
    if (v.shape() != d_->value.shape() || v.dtype() != d_->value.dtype())
        raise(ErrorCode::Shape, "set_value: replacement must match shape and dtype");
    d_->value = std::move(v);
}

Node lift(Tensor t, bool requires_grad) {
    auto d = std::make_shared<NodeData>();
    d->value = std::move(t);
    d->requires_grad = requires_grad;
    d->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return Node(std::move(d));
}

Node constant(Tensor t) { return lift(std::move(t), false); }

namespace {

Node make_node(Tensor value, Op kind, std::vector<Node> inputs,
               const std::function<void(OpRecord&)>& fill = {}) {
    auto d = std::make_shared<NodeData>();
    d->value = std::move(value);
    d->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    bool rg = false;
    if (g_recording)
        for (const Node& in : inputs) rg = rg || in.requires_grad();
    d->requires_grad = rg;
    if (rg) {
        d->op = std::make_unique<OpRecord>();
        d->op->kind = kind;
        d->op->inputs = std::move(inputs);
        if (fill) fill(*d->op);
    }
    return Node(std::move(d));
}

void check_defined(const Node& n, const char* op) {
    if (!n.defined()) raise(ErrorCode::Contract, std::string(op) + ": empty node");
}

} // namespace

Node add(const Node& a, const Node& b) {
    check_defined(a, "add");
    check_defined(b, "add");
    return make_node(gradmask::add(a.value(), b.value()), Op::Add, {a, b});
}

Node sub(const Node& a, const Node& b) {
    check_defined(a, "sub");
    check_defined(b, "sub");
    return make_node(gradmask::sub(a.value(), b.value()), Op::Sub, {a, b});
}

Node mul(const Node& a, const Node& b) {
    check_defined(a, "mul");
    check_defined(b, "mul");
    return make_node(gradmask::mul(a.value(), b.value()), Op::Mul, {a, b});
}

Node div(const Node& a, const Node& b) {
    check_defined(a, "div");
    check_defined(b, "div");
    return make_node(gradmask::div(a.value(), b.value()), Op::Div, {a, b});
}

Node scale(const Node& a, double c) {
    check_defined(a, "scale");
    return make_node(gradmask::scale(a.value(), c), Op::Scale, {a},
                     [c](OpRecord& r) { r.scalar = c; });
}

Node neg(const Node& a) { return scale(a, -1.0); }

Node relu(const Node& a) {
    check_defined(a, "relu");
    return make_node(gradmask::relu(a.value()), Op::Relu, {a});
}

Node sigmoid(const Node& a) {
    check_defined(a, "sigmoid");
    return make_node(gradmask::sigmoid(a.value()), Op::Sigmoid, {a});
}

Node softplus(const Node& a) {
    check_defined(a, "softplus");
    return make_node(gradmask::softplus(a.value()), Op::Softplus, {a});
}

Node abs(const Node& a) {
    check_defined(a, "abs");
    return make_node(gradmask::abs(a.value()), Op::Abs, {a});
}

Node sqrt_eps(const Node& a) {
    check_defined(a, "sqrt_eps");
    return make_node(gradmask::sqrt_eps(a.value()), Op::SqrtEps, {a});
}

Node matmul(const Node& a, const Node& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    return make_node(gradmask::matmul(a.value(), b.value()), Op::Matmul, {a, b});
}

Node transpose(const Node& a) {
    check_defined(a, "transpose");
    return make_node(gradmask::transpose2d(a.value()), Op::Transpose, {a});
}

Node conv2d(const Node& x, const Node& w, int stride, int pad) {
    check_defined(x, "conv2d");
    check_defined(w, "conv2d");
    return make_node(gradmask::conv2d_nobias(x.value(), w.value(), stride, pad), Op::Conv2d, {x, w},
                     [&](OpRecord& r) {
                         r.i0 = stride;
                         r.i1 = pad;
                     });
}

namespace {

// Adjoint halves of conv2d; exposed as ops of their own so that conv2d's
// backward pass is itself differentiable.
Node conv2d_dx_node(const Node& gy, const Node& w, const Shape& x_shape, int stride, int pad) {
    return make_node(gradmask::conv2d_dx(gy.value(), w.value(), x_shape, stride, pad), Op::Conv2dDx,
                     {gy, w}, [&](OpRecord& r) {
                         r.i0 = stride;
                         r.i1 = pad;
                         r.shape0 = x_shape;
                     });
}

Node conv2d_dw_node(const Node& x, const Node& gy, const Shape& w_shape, int stride, int pad) {
    return make_node(gradmask::conv2d_dw(x.value(), gy.value(), w_shape, stride, pad), Op::Conv2dDw,
                     {x, gy}, [&](OpRecord& r) {
                         r.i0 = stride;
                         r.i1 = pad;
                         r.shape0 = w_shape;
                     });
}

Node gather_index_node(const Node& x, std::shared_ptr<const std::vector<std::uint32_t>> idx,
                       const Shape& out_shape) {
    return make_node(gradmask::gather_index(x.value(), *idx, out_shape), Op::GatherIdx, {x},
                     [&](OpRecord& r) { r.indices = std::move(idx); });
}

Node scatter_index_node(const Node& g, std::shared_ptr<const std::vector<std::uint32_t>> idx,
                        const Shape& in_shape) {
    return make_node(gradmask::scatter_index(g.value(), *idx, in_shape), Op::ScatterIdx, {g},
                     [&](OpRecord& r) {
                         r.indices = std::move(idx);
                         r.shape0 = in_shape;
                     });
}

Node fill_like_node(const Node& g, const Shape& shape) {
    return make_node(gradmask::fill_like(g.value(), shape), Op::FillLike, {g},
                     [&](OpRecord& r) { r.shape0 = shape; });
}

Node put_scalar_node(const Node& g, std::size_t index, const Shape& shape) {
    return make_node(gradmask::put_scalar(g.value(), index, shape), Op::PutScalar, {g},
                     [&](OpRecord& r) {
                         r.index = index;
                         r.shape0 = shape;
                     });
}

} // namespace

Node broadcast_channels(const Node& b, std::uint32_t h, std::uint32_t w) {
    check_defined(b, "broadcast_channels");
    return make_node(gradmask::broadcast_channels(b.value(), h, w), Op::BroadcastChannels, {b});
}

Node channel_sum(const Node& x) {
    check_defined(x, "channel_sum");
    return make_node(gradmask::channel_sum(x.value()), Op::ChannelSum, {x},
                     [&](OpRecord& r) { r.shape0 = x.value().shape(); });
}

Node sum(const Node& x) {
    check_defined(x, "sum");
    return make_node(gradmask::reduce_sum(x.value()), Op::Sum, {x});
}

Node mean(const Node& x) {
    check_defined(x, "mean");
    return make_node(gradmask::reduce_mean(x.value()), Op::Mean, {x});
}

Node reshape(const Node& x, const Shape& shape) {
    check_defined(x, "reshape");
    return make_node(gradmask::reshape(x.value(), shape), Op::Reshape, {x},
                     [&](OpRecord& r) { r.shape0 = x.value().shape(); });
}

Node select(const Node& x, std::size_t index) {
    check_defined(x, "select");
    return make_node(gradmask::select(x.value(), index), Op::Select, {x},
                     [&](OpRecord& r) { r.index = index; });
}

MaxPoolNodes maxpool2d(const Node& x, int k, int stride) {
    check_defined(x, "maxpool2d");
    MaxPoolResult res = gradmask::maxpool2d(x.value(), k, stride);
    auto idx = std::make_shared<const std::vector<std::uint32_t>>(std::move(res.argmax));
    Node values = make_node(std::move(res.values), Op::MaxPool, {x}, [&](OpRecord& r) {
        r.i0 = stride;
        r.i1 = k;
        r.indices = idx;
    });
    return {std::move(values), std::move(idx)};
}

Node custom(const std::shared_ptr<const CustomOpDef>& def, std::span<const Node> inputs) {
    if (!def || !def->forward || !def->backward)
        raise(ErrorCode::Validation, "custom op definition is incomplete");
    std::vector<Tensor> values;
    values.reserve(inputs.size());
    for (const Node& n : inputs) {
        check_defined(n, "custom");
        values.push_back(n.value());
    }
    return make_node(def->forward(values), Op::Custom,
                     std::vector<Node>(inputs.begin(), inputs.end()),
                     [&](OpRecord& r) { r.custom = def; });
}

namespace {

using AdjointMap = std::unordered_map<const NodeData*, Node>;

void accumulate(AdjointMap& adj, const Node& target, const Node& contribution) {
    if (!target.requires_grad()) return;
    auto [it, inserted] = adj.try_emplace(target.impl().get(), contribution);
    if (!inserted) it->second = add(it->second, contribution);
}

// Emits the adjoint contributions of one recorded op. Every rule is written
// in terms of Node ops, which is what makes grad-of-grad work: with recording
// enabled the backward pass extends the graph it walks.
void apply_vjp(const Node& n, const Node& g, AdjointMap& adj) {
    const OpRecord& r = *n.impl()->op;
    const std::vector<Node>& in = r.inputs;
    switch (r.kind) {
    case Op::Leaf:
        break;
    case Op::Add:
        accumulate(adj, in[0], g);
        accumulate(adj, in[1], g);
        break;
    case Op::Sub:
        accumulate(adj, in[0], g);
        accumulate(adj, in[1], neg(g));
        break;
    case Op::Mul:
        accumulate(adj, in[0], mul(g, in[1]));
        accumulate(adj, in[1], mul(g, in[0]));
        break;
    case Op::Div:
        // out = a/b: da = g/b, db = -g*out/b
        accumulate(adj, in[0], div(g, in[1]));
        accumulate(adj, in[1], neg(div(mul(g, n), in[1])));
        break;
    case Op::Scale:
        accumulate(adj, in[0], scale(g, r.scalar));
        break;
    case Op::Relu:
        // Routing mask is constant under further differentiation; relu'(0)=0.
        accumulate(adj, in[0], mul(g, constant(relu_mask(in[0].value()))));
        break;
    case Op::Sigmoid: {
        const Node& y = n;
        Node one = constant(Tensor::full(y.value().shape(), 1.0, y.value().dtype()));
        accumulate(adj, in[0], mul(g, mul(y, sub(one, y))));
        break;
    }
    case Op::Softplus:
        accumulate(adj, in[0], mul(g, sigmoid(in[0])));
        break;
    case Op::Abs:
        // sign(0) = 0 by definition.
        accumulate(adj, in[0], mul(g, constant(sign(in[0].value()))));
        break;
    case Op::SqrtEps:
        // out = sqrt(a+eps): da = g / (2*out); out >= sqrt(eps) > 0
        accumulate(adj, in[0], div(scale(g, 0.5), n));
        break;
    case Op::Matmul:
        accumulate(adj, in[0], matmul(g, transpose(in[1])));
        accumulate(adj, in[1], matmul(transpose(in[0]), g));
        break;
    case Op::Transpose:
        accumulate(adj, in[0], transpose(g));
        break;
    case Op::Conv2d:
        accumulate(adj, in[0], conv2d_dx_node(g, in[1], in[0].value().shape(), r.i0, r.i1));
        accumulate(adj, in[1], conv2d_dw_node(in[0], g, in[1].value().shape(), r.i0, r.i1));
        break;
    case Op::Conv2dDx:
        // n = conv_dx(gy, w); <u, conv_dx(gy, w)> = <conv(u, w), gy>
        accumulate(adj, in[0], conv2d(g, in[1], r.i0, r.i1));
        accumulate(adj, in[1], conv2d_dw_node(g, in[0], in[1].value().shape(), r.i0, r.i1));
        break;
    case Op::Conv2dDw:
        // n = conv_dw(x, gy); <v, conv_dw(x, gy)> = <conv(x, v), gy>
        accumulate(adj, in[0], conv2d_dx_node(in[1], g, in[0].value().shape(), r.i0, r.i1));
        accumulate(adj, in[1], conv2d(in[0], g, r.i0, r.i1));
        break;
    case Op::BroadcastChannels:
        accumulate(adj, in[0], channel_sum(g));
        break;
    case Op::ChannelSum:
        accumulate(adj, in[0], broadcast_channels(g, r.shape0[1], r.shape0[2]));
        break;
    case Op::MaxPool:
        // Gradient follows the recorded argmax; the routing itself is treated
        // as constant when differentiating again.
        accumulate(adj, in[0], scatter_index_node(g, r.indices, in[0].value().shape()));
        break;
    case Op::ScatterIdx:
        accumulate(adj, in[0], gather_index_node(g, r.indices, in[0].value().shape()));
        break;
    case Op::GatherIdx:
        accumulate(adj, in[0], scatter_index_node(g, r.indices, in[0].value().shape()));
        break;
    case Op::Sum:
        accumulate(adj, in[0], fill_like_node(g, in[0].value().shape()));
        break;
    case Op::Mean:
        accumulate(adj, in[0],
                   scale(fill_like_node(g, in[0].value().shape()),
                         1.0 / static_cast<double>(in[0].value().numel())));
        break;
    case Op::Reshape:
        accumulate(adj, in[0], reshape(g, r.shape0));
        break;
    case Op::Select:
        accumulate(adj, in[0], put_scalar_node(g, r.index, in[0].value().shape()));
        break;
    case Op::PutScalar:
        accumulate(adj, in[0], select(g, r.index));
        break;
    case Op::FillLike:
        accumulate(adj, in[0], sum(g));
        break;
    case Op::Custom: {
        std::vector<Tensor> values;
        values.reserve(in.size());
        for (const Node& i : in) values.push_back(i.value());
        std::vector<Tensor> grads = r.custom->backward(values, g.value());
        if (grads.size() != in.size())
            raise(ErrorCode::Contract,
                  "custom op '" + r.custom->name + "' returned wrong gradient count");
        for (std::size_t i = 0; i < in.size(); ++i)
            accumulate(adj, in[i], constant(std::move(grads[i])));
        break;
    }
    }
}

} // namespace

std::vector<Node> grad(const Node& output, std::span<const Node> wrt, bool create_graph) {
    if (!output.defined()) raise(ErrorCode::Contract, "grad: empty output node");
    if (output.value().shape().rank() != 0)
        raise(ErrorCode::Contract,
              "grad: output must be rank-0, got shape " + output.value().shape().str());

    // Reverse topological order == descending creation id over the reachable
    // recorded subgraph. This fixes the gradient accumulation order.
    std::vector<Node> topo;
    {
        std::unordered_set<const NodeData*> seen;
        std::vector<Node> stack{output};
        seen.insert(output.impl().get());
        while (!stack.empty()) {
            Node n = std::move(stack.back());
            stack.pop_back();
            if (!n.impl()->op) continue;
            if (create_graph && n.impl()->op->kind == Op::Custom)
                raise(ErrorCode::Unsupported, "op 'custom:" + n.impl()->op->custom->name +
                                                  "' has no second-order rule; create_graph "
                                                  "is not available through it");
            topo.push_back(n);
            for (const Node& in : n.impl()->op->inputs) {
                if (!in.requires_grad()) continue;
                if (seen.insert(in.impl().get()).second) stack.push_back(in);
            }
        }
        std::sort(topo.begin(), topo.end(),
                  [](const Node& a, const Node& b) { return a.impl()->id > b.impl()->id; });
    }

    RecordScope record(create_graph);
    AdjointMap adj;
    adj.emplace(output.impl().get(), constant(Tensor::scalar(1.0, output.value().dtype())));

    for (const Node& n : topo) {
        auto it = adj.find(n.impl().get());
        if (it == adj.end()) continue; // no path from output
        Node g = it->second;
        apply_vjp(n, g, adj);
    }

    std::vector<Node> result;
    result.reserve(wrt.size());
    for (const Node& w : wrt) {
        if (!w.defined()) raise(ErrorCode::Contract, "grad: empty wrt node");
        auto it = adj.find(w.impl().get());
        if (it != adj.end())
            result.push_back(it->second);
        else
            result.push_back(constant(Tensor::zeros(w.value().shape(), w.value().dtype())));
    }
    return result;
}

Tensor checkpoint_params(std::span<const Node> params) {
    if (params.empty()) raise(ErrorCode::Contract, "checkpoint_params: no parameters");
    const Dtype dt = params.front().value().dtype();
    std::size_t total = 0;
    for (const Node& p : params) {
        if (p.value().dtype() != dt)
            raise(ErrorCode::Dtype, "checkpoint_params: mixed parameter dtypes");
        total += p.value().numel();
    }
    Tensor flat(Shape{static_cast<std::uint32_t>(total)}, dt);
    std::size_t offset = 0;
    for (const Node& p : params) {
        for (std::size_t i = 0; i < p.value().numel(); ++i) flat.set(offset + i, p.value().at(i));
        offset += p.value().numel();
    }
    return flat;
}

void restore_params(std::span<Node> params, const Tensor& flat) {
    std::size_t total = 0;
    for (const Node& p : params) total += p.value().numel();
    if (flat.shape().rank() != 1 || flat.numel() != total)
        raise(ErrorCode::Shape, "restore_params: flat length " + std::to_string(flat.numel()) +
                                    " does not match parameter count " + std::to_string(total));
    std::size_t offset = 0;
    for (Node& p : params) {
        if (p.value().dtype() != flat.dtype())
            raise(ErrorCode::Dtype, "restore_params: dtype mismatch");
        Tensor v(p.value().shape(), p.value().dtype());
        for (std::size_t i = 0; i < v.numel(); ++i) v.set(i, flat.at(offset + i));
        offset += v.numel();
        p.set_value(std::move(v));
    }
}

} // namespace gradmask::ad
