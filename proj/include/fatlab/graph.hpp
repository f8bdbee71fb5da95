#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fatlab/tensor.hpp"

namespace fatlab {

using NodeId = int32_t;

enum class OpKind : uint8_t {
    input,
    constant,
    add,
    sub,
    mul,
    matmul,
    bias_add,
    relu,
    softmax_ce,
    margin,
    sum,
    mean,
    sum_sq,
    scale,
};

const char* op_name(OpKind k);

struct Node {
    OpKind kind;
    NodeId a = -1;
    NodeId b = -1;
    std::vector<int64_t> shape;
    double factor = 1.0;             // scale
    std::vector<int32_t> labels;     // softmax_ce, margin
    std::string name;                // input, constant
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> aux;         // softmax_ce: cached probs
    std::vector<int32_t> aux_i;      // margin: cached competitor per row
};

// Reverse-mode tape over dense tensors. Build once, then forward/backward any
// number of times. Rebuilding per batch is cheap; node buffers dwarf the
// bookkeeping. Reductions accumulate serially in index order and the matrix
// kernels fix their accumulation order per output element, so repeated runs
// and different backends give bit-identical floats.
class Graph {
  public:
    NodeId input(const std::string& name, std::vector<int64_t> shape);
    NodeId constant(Tensor t, const std::string& name = "");
    NodeId add(NodeId x, NodeId y);
    NodeId sub(NodeId x, NodeId y);
    NodeId mul(NodeId x, NodeId y);
    NodeId matmul(NodeId x, NodeId y);
    NodeId bias_add(NodeId x, NodeId b);
    NodeId relu(NodeId x);
    // mean over rows of (logsumexp(z_r) - z_r[label_r]); labels baked per graph
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int32_t> labels);
    // mean over rows of (max_{j != label} z_j - z_label)
    NodeId margin_loss(NodeId logits, std::vector<int32_t> labels);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId sum_squares(NodeId x);
    NodeId scale(NodeId x, double factor);

    void mark_output(const std::string& name, NodeId id);

    // Binds every graph input (exact names, exact shapes), evaluates nodes in
    // build order, checks each intermediate for non-finite values, returns
    // the marked outputs.
    std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& bindings);

    // d(output)/d(input) for the named scalar output. If wanted is non-empty
    // only those inputs get gradients and subgraphs feeding nothing wanted
    // are skipped entirely (an attack never pays for weight gradients).
    std::map<std::string, Tensor> backward(const std::string& output,
                                           const std::vector<std::string>& wanted = {});

    const std::vector<double>& value(NodeId id) const;
    const std::vector<double>& grad_of(NodeId id) const;
    const std::vector<int64_t>& shape_of(NodeId id) const;
    NodeId input_id(const std::string& name) const;
    NodeId output_id(const std::string& name) const;
    size_t node_count() const { return nodes_.size(); }
    size_t backward_visited() const { return backward_visited_; }

  private:
    std::vector<Node> nodes_;
    std::map<std::string, NodeId> inputs_;
    std::map<std::string, NodeId> outputs_;
    bool forward_done_ = false;
    size_t backward_visited_ = 0;

    NodeId push(Node n);
    const Node& at(NodeId id) const;
    void eval_node(NodeId id);
    void check_finite(NodeId id) const;
};

struct FdReport {
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference check of d(output)/d(input_name) across every element of
// that input. rel err is |analytic - numeric| / max(1, |analytic|). Only
// meaningful where the function is differentiable; at a ReLU kink the report
// shows the mismatch rather than hiding it.
FdReport finite_diff_check(Graph& g, const std::string& output,
                           const std::map<std::string, Tensor>& bindings,
                           const std::string& input_name, double step = 1e-6);

}  // namespace fatlab
