#include "fatlab/graph.hpp"

#include <cmath>

#include "fatlab/kernels.hpp"

namespace fatlab {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::input: return "input";
        case OpKind::constant: return "constant";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::matmul: return "matmul";
        case OpKind::bias_add: return "bias_add";
        case OpKind::relu: return "relu";
        case OpKind::softmax_ce: return "softmax_ce";
        case OpKind::margin: return "margin";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::sum_sq: return "sum_sq";
        case OpKind::scale: return "scale";
    }
    return "?";
}

namespace {

std::string node_desc(NodeId id, const Node& n) {
    std::string s = "node #" + std::to_string(id) + " (" + op_name(n.kind);
    if (!n.name.empty()) s += " '" + n.name + "'";
    s += ")";
    return s;
}

void require_same_shape(const Node& x, const Node& y, const char* op) {
    if (x.shape != y.shape)
        throw ValueError(std::string(op) + ": shape mismatch " + shape_to_string(x.shape) +
                         " vs " + shape_to_string(y.shape));
}

void require_matrix(const Node& x, const char* op) {
    if (x.shape.size() != 2)
        throw ValueError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_to_string(x.shape));
}

}  // namespace

NodeId Graph::push(Node n) {
    n.value.assign(shape_numel(n.shape), 0.0);
    nodes_.push_back(std::move(n));
    forward_done_ = false;
    return (NodeId)(nodes_.size() - 1);
}

const Node& Graph::at(NodeId id) const {
    if (id < 0 || id >= (NodeId)nodes_.size())
        throw ValueError("bad node id " + std::to_string(id));
    return nodes_[id];
}

NodeId Graph::input(const std::string& name, std::vector<int64_t> shape) {
    if (name.empty()) throw ValueError("input needs a name");
    if (inputs_.count(name)) throw ValueError("duplicate input '" + name + "'");
    Node n;
    n.kind = OpKind::input;
    n.shape = std::move(shape);
    n.name = name;
    NodeId id = push(std::move(n));
    inputs_[name] = id;
    return id;
}

NodeId Graph::constant(Tensor t, const std::string& name) {
    Node n;
    n.kind = OpKind::constant;
    n.shape = t.shape;
    n.name = name;
    NodeId id = push(std::move(n));
    nodes_[id].value = std::move(t.data);
    return id;
}

NodeId Graph::add(NodeId x, NodeId y) {
    require_same_shape(at(x), at(y), "add");
    Node n;
    n.kind = OpKind::add;
    n.a = x;
    n.b = y;
    n.shape = at(x).shape;
    return push(std::move(n));
}

NodeId Graph::sub(NodeId x, NodeId y) {
    require_same_shape(at(x), at(y), "sub");
    Node n;
    n.kind = OpKind::sub;
    n.a = x;
    n.b = y;
    n.shape = at(x).shape;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId x, NodeId y) {
    require_same_shape(at(x), at(y), "mul");
    Node n;
    n.kind = OpKind::mul;
    n.a = x;
    n.b = y;
    n.shape = at(x).shape;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId x, NodeId y) {
    require_matrix(at(x), "matmul");
    require_matrix(at(y), "matmul");
    if (at(x).shape[1] != at(y).shape[0])
        throw ValueError("matmul: inner dims " + shape_to_string(at(x).shape) + " x " +
                         shape_to_string(at(y).shape));
    Node n;
    n.kind = OpKind::matmul;
    n.a = x;
    n.b = y;
    n.shape = {at(x).shape[0], at(y).shape[1]};
    return push(std::move(n));
}

NodeId Graph::bias_add(NodeId x, NodeId b) {
    require_matrix(at(x), "bias_add");
    if (at(b).shape.size() != 1 || at(b).shape[0] != at(x).shape[1])
        throw ValueError("bias_add: bias " + shape_to_string(at(b).shape) + " vs matrix " +
                         shape_to_string(at(x).shape));
    Node n;
    n.kind = OpKind::bias_add;
    n.a = x;
    n.b = b;
    n.shape = at(x).shape;
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    Node n;
    n.kind = OpKind::relu;
    n.a = x;
    n.shape = at(x).shape;
    return push(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int32_t> labels) {
    require_matrix(at(logits), "softmax_ce");
    int64_t rows = at(logits).shape[0];
    int64_t cols = at(logits).shape[1];
    if ((int64_t)labels.size() != rows)
        throw ValueError("softmax_ce: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    for (int32_t y : labels)
        if (y < 0 || y >= cols) throw ValueError("softmax_ce: label " + std::to_string(y) +
                                                 " out of range [0," + std::to_string(cols) + ")");
    Node n;
    n.kind = OpKind::softmax_ce;
    n.a = logits;
    n.shape = {};
    n.labels = std::move(labels);
    return push(std::move(n));
}

NodeId Graph::margin_loss(NodeId logits, std::vector<int32_t> labels) {
    require_matrix(at(logits), "margin");
    int64_t rows = at(logits).shape[0];
    int64_t cols = at(logits).shape[1];
    if (cols < 2) throw ValueError("margin: needs at least 2 classes");
    if ((int64_t)labels.size() != rows)
        throw ValueError("margin: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    for (int32_t y : labels)
        if (y < 0 || y >= cols) throw ValueError("margin: label out of range");
    Node n;
    n.kind = OpKind::margin;
    n.a = logits;
    n.shape = {};
    n.labels = std::move(labels);
    return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
    Node n;
    n.kind = OpKind::sum;
    n.a = x;
    n.shape = {};
    return push(std::move(n));
}

NodeId Graph::mean(NodeId x) {
    Node n;
    n.kind = OpKind::mean;
    n.a = x;
    n.shape = {};
    return push(std::move(n));
}

NodeId Graph::sum_squares(NodeId x) {
    Node n;
    n.kind = OpKind::sum_sq;
    n.a = x;
    n.shape = {};
    return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
    Node n;
    n.kind = OpKind::scale;
    n.a = x;
    n.shape = at(x).shape;
    n.factor = factor;
    return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeId id) {
    at(id);
    outputs_[name] = id;
}

void Graph::check_finite(NodeId id) const {
    const Node& n = nodes_[id];
    for (size_t i = 0; i < n.value.size(); ++i)
        if (!std::isfinite(n.value[i]))
            throw InternalError("non-finite value at element " + std::to_string(i) + " of " +
                                node_desc(id, n));
}

void Graph::eval_node(NodeId id) {
    Node& n = nodes_[id];
    const double* av = n.a >= 0 ? nodes_[n.a].value.data() : nullptr;
    const double* bv = n.b >= 0 ? nodes_[n.b].value.data() : nullptr;
    int64_t an = n.a >= 0 ? (int64_t)nodes_[n.a].value.size() : 0;
    switch (n.kind) {
        case OpKind::input:
        case OpKind::constant:
            return;
        case OpKind::add:
            kernels::ew_add(av, bv, n.value.data(), an);
            return;
        case OpKind::sub:
            kernels::ew_sub(av, bv, n.value.data(), an);
            return;
        case OpKind::mul:
            kernels::ew_mul(av, bv, n.value.data(), an);
            return;
        case OpKind::matmul: {
            const Node& A = nodes_[n.a];
            const Node& B = nodes_[n.b];
            kernels::matmul_nn(av, bv, n.value.data(), A.shape[0], A.shape[1], B.shape[1], false);
            return;
        }
        case OpKind::bias_add: {
            const Node& A = nodes_[n.a];
            kernels::bias_add(av, bv, n.value.data(), A.shape[0], A.shape[1]);
            return;
        }
        case OpKind::relu:
            kernels::relu(av, n.value.data(), an);
            return;
        case OpKind::softmax_ce: {
            const Node& A = nodes_[n.a];
            int64_t rows = A.shape[0], cols = A.shape[1];
            n.aux.assign(rows * cols, 0.0);
            std::vector<double> row_loss(rows);
            kernels::softmax_ce_rows(av, n.labels.data(), n.aux.data(), row_loss.data(), rows, cols);
            double s = 0.0;
            for (int64_t r = 0; r < rows; ++r) s += row_loss[r];
            n.value[0] = s / (double)rows;
            return;
        }
        case OpKind::margin: {
            const Node& A = nodes_[n.a];
            int64_t rows = A.shape[0], cols = A.shape[1];
            n.aux_i.assign(rows, 0);
            double s = 0.0;
            for (int64_t r = 0; r < rows; ++r) {
                const double* z = av + r * cols;
                int32_t y = n.labels[r];
                int32_t best = y == 0 ? 1 : 0;
                for (int32_t c = 0; c < cols; ++c)
                    if (c != y && z[c] > z[best]) best = c;
                n.aux_i[r] = best;
                s += z[best] - z[y];
            }
            n.value[0] = s / (double)rows;
            return;
        }
        case OpKind::sum: {
            double s = 0.0;
            for (int64_t i = 0; i < an; ++i) s += av[i];
            n.value[0] = s;
            return;
        }
        case OpKind::mean: {
            double s = 0.0;
            for (int64_t i = 0; i < an; ++i) s += av[i];
            n.value[0] = s / (double)an;
            return;
        }
        case OpKind::sum_sq: {
            double s = 0.0;
            for (int64_t i = 0; i < an; ++i) s += av[i] * av[i];
            n.value[0] = s;
            return;
        }
        case OpKind::scale: {
            for (int64_t i = 0; i < an; ++i) n.value[i] = n.factor * av[i];
            return;
        }
    }
    throw InternalError("unhandled op in eval");
}

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& bindings) {
    for (const auto& [name, t] : bindings) {
        auto it = inputs_.find(name);
        if (it == inputs_.end()) throw ValueError("binding for unknown input '" + name + "'");
        Node& n = nodes_[it->second];
        if (t.shape != n.shape)
            throw ValueError("input '" + name + "': bound " + shape_to_string(t.shape) +
                             ", declared " + shape_to_string(n.shape));
        n.value = t.data;
    }
    for (const auto& [name, id] : inputs_)
        if (!bindings.count(name)) throw ValueError("input '" + name + "' not bound");

    for (NodeId id = 0; id < (NodeId)nodes_.size(); ++id) {
        eval_node(id);
        check_finite(id);
    }
    forward_done_ = true;

    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : outputs_)
        out.emplace(name, Tensor(nodes_[id].shape, nodes_[id].value));
    return out;
}

std::map<std::string, Tensor> Graph::backward(const std::string& output,
                                              const std::vector<std::string>& wanted) {
    if (!forward_done_) throw ValueError("backward before forward");
    auto oit = outputs_.find(output);
    if (oit == outputs_.end()) throw ValueError("unknown output '" + output + "'");
    NodeId out_id = oit->second;
    if (shape_numel(nodes_[out_id].shape) != 1)
        throw ValueError("backward: output '" + output + "' is not scalar");

    // Which nodes lead to a gradient the caller asked for.
    std::vector<char> leads(nodes_.size(), 0);
    if (wanted.empty()) {
        for (const auto& [name, id] : inputs_) leads[id] = 1;
    } else {
        for (const auto& name : wanted) {
            auto it = inputs_.find(name);
            if (it == inputs_.end()) throw ValueError("backward: unknown input '" + name + "'");
            leads[it->second] = 1;
        }
    }
    for (NodeId id = 0; id < (NodeId)nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (n.a >= 0 && leads[n.a]) leads[id] = 1;
        if (n.b >= 0 && leads[n.b]) leads[id] = 1;
    }

    // Which nodes the output actually depends on.
    std::vector<char> feeds(nodes_.size(), 0);
    feeds[out_id] = 1;
    for (NodeId id = (NodeId)nodes_.size() - 1; id >= 0; --id) {
        if (!feeds[id]) continue;
        const Node& n = nodes_[id];
        if (n.a >= 0) feeds[n.a] = 1;
        if (n.b >= 0) feeds[n.b] = 1;
    }

    std::vector<char> active(nodes_.size(), 0);
    for (size_t i = 0; i < nodes_.size(); ++i) active[i] = leads[i] && feeds[i];

    backward_visited_ = 0;
    for (NodeId id = 0; id < (NodeId)nodes_.size(); ++id) {
        if (active[id]) nodes_[id].grad.assign(nodes_[id].value.size(), 0.0);
        else nodes_[id].grad.clear();
    }
    if (active[out_id]) nodes_[out_id].grad[0] = 1.0;

    for (NodeId id = (NodeId)nodes_.size() - 1; id >= 0; --id) {
        if (!active[id]) continue;
        Node& n = nodes_[id];
        ++backward_visited_;
        const double* g = n.grad.data();
        double* ga = (n.a >= 0 && active[n.a]) ? nodes_[n.a].grad.data() : nullptr;
        double* gb = (n.b >= 0 && active[n.b]) ? nodes_[n.b].grad.data() : nullptr;
        int64_t an = n.a >= 0 ? (int64_t)nodes_[n.a].value.size() : 0;
        switch (n.kind) {
            case OpKind::input:
            case OpKind::constant:
                break;
            case OpKind::add:
                if (ga) kernels::acc(g, ga, an);
                if (gb) kernels::acc(g, gb, an);
                break;
            case OpKind::sub:
                if (ga) kernels::acc(g, ga, an);
                if (gb) kernels::acc_scaled(g, -1.0, gb, an);
                break;
            case OpKind::mul:
                if (ga) kernels::acc_mul(g, nodes_[n.b].value.data(), ga, an);
                if (gb) kernels::acc_mul(g, nodes_[n.a].value.data(), gb, an);
                break;
            case OpKind::matmul: {
                const Node& A = nodes_[n.a];
                const Node& B = nodes_[n.b];
                int64_t m = A.shape[0], k = A.shape[1], c = B.shape[1];
                if (ga) kernels::matmul_nt(g, B.value.data(), ga, m, c, k, true);
                if (gb) kernels::matmul_tn(A.value.data(), g, gb, m, k, c, true);
                break;
            }
            case OpKind::bias_add: {
                const Node& A = nodes_[n.a];
                if (ga) kernels::acc(g, ga, an);
                if (gb) kernels::col_sum_acc(g, gb, A.shape[0], A.shape[1]);
                break;
            }
            case OpKind::relu:
                if (ga) kernels::relu_backward(nodes_[n.a].value.data(), g, ga, an);
                break;
            case OpKind::softmax_ce: {
                const Node& A = nodes_[n.a];
                if (ga)
                    kernels::softmax_ce_backward(n.aux.data(), n.labels.data(),
                                                 n.grad[0] / (double)A.shape[0], ga,
                                                 A.shape[0], A.shape[1]);
                break;
            }
            case OpKind::margin: {
                const Node& A = nodes_[n.a];
                if (ga) {
                    int64_t cols = A.shape[1];
                    double gs = n.grad[0] / (double)A.shape[0];
                    for (int64_t r = 0; r < A.shape[0]; ++r) {
                        ga[r * cols + n.aux_i[r]] += gs;
                        ga[r * cols + n.labels[r]] -= gs;
                    }
                }
                break;
            }
            case OpKind::sum:
                if (ga) {
                    double gs = n.grad[0];
                    for (int64_t i = 0; i < an; ++i) ga[i] += gs;
                }
                break;
            case OpKind::mean:
                if (ga) {
                    double gs = n.grad[0] / (double)an;
                    for (int64_t i = 0; i < an; ++i) ga[i] += gs;
                }
                break;
            case OpKind::sum_sq:
                if (ga) kernels::acc_scaled(nodes_[n.a].value.data(), 2.0 * n.grad[0], ga, an);
                break;
            case OpKind::scale:
                if (ga) kernels::acc_scaled(g, n.factor, ga, an);
                break;
        }
    }

    std::map<std::string, Tensor> out;
    if (wanted.empty()) {
        for (const auto& [name, id] : inputs_)
            out.emplace(name, Tensor(nodes_[id].shape, nodes_[id].grad));
    } else {
        for (const auto& name : wanted) {
            NodeId id = inputs_.at(name);
            if (nodes_[id].grad.empty())
                out.emplace(name, Tensor(nodes_[id].shape));  // input does not feed the output
            else
                out.emplace(name, Tensor(nodes_[id].shape, nodes_[id].grad));
        }
    }
    return out;
}

const std::vector<double>& Graph::value(NodeId id) const { return at(id).value; }

const std::vector<double>& Graph::grad_of(NodeId id) const {
    const Node& n = at(id);
    if (n.grad.empty()) throw ValueError("no gradient on " + node_desc(id, n));
    return n.grad;
}

const std::vector<int64_t>& Graph::shape_of(NodeId id) const { return at(id).shape; }

NodeId Graph::input_id(const std::string& name) const {
    auto it = inputs_.find(name);
    if (it == inputs_.end()) throw ValueError("unknown input '" + name + "'");
    return it->second;
}

NodeId Graph::output_id(const std::string& name) const {
    auto it = outputs_.find(name);
    if (it == outputs_.end()) throw ValueError("unknown output '" + name + "'");
    return it->second;
}

FdReport finite_diff_check(Graph& g, const std::string& output,
                           const std::map<std::string, Tensor>& bindings,
                           const std::string& input_name, double step) {
    g.forward(bindings);
    auto back = g.backward(output, {input_name});
    const Tensor& analytic = back.at(input_name);

    std::map<std::string, Tensor> b = bindings;
    Tensor& xin = b.at(input_name);
    FdReport rep;
    for (int64_t i = 0; i < xin.numel(); ++i) {
        double keep = xin.data[i];
        xin.data[i] = keep + step;
        double fp = g.forward(b).at(output).data[0];
        xin.data[i] = keep - step;
        double fm = g.forward(b).at(output).data[0];
        xin.data[i] = keep;
        double numeric = (fp - fm) / (2.0 * step);
        double a = analytic.data[i];
        double abs_err = std::fabs(a - numeric);
        double rel_err = abs_err / std::max(1.0, std::fabs(a));
        if (rel_err > rep.max_rel_err) {
            rep.max_rel_err = rel_err;
            rep.worst_index = i;
            rep.worst_analytic = a;
            rep.worst_numeric = numeric;
        }
        if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
    }
    g.forward(bindings);  // restore clean forward state
    return rep;
}

}  // namespace fatlab
