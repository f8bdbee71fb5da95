#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fatlab/model.hpp"
#include "fatlab/tensor.hpp"

namespace fatlab {

enum class RegKind { none, guided, nuclear, lipschitz };
enum class RegPlacement { min_only, min_max };

const char* reg_kind_name(RegKind k);
RegKind parse_reg_kind(const std::string& s);
const char* placement_name(RegPlacement p);
RegPlacement parse_placement(const std::string& s);

struct RegularizerSpec {
    RegKind kind = RegKind::none;
    double lambda = 0.0;
    RegPlacement placement = RegPlacement::min_only;
    double norm_floor = 1e-8;

    void validate() const;
};

// λ · mean over batch rows of ‖logits_adv_r − logits_clean_r‖²₂.
// The λ multiply is always the outermost op so values are exactly linear in λ.
double guided_reg(const Tensor& logits_adv, const Tensor& logits_clean, double lambda);

// λ · nuclear norm of (logits_adv − logits_clean).
double nuclear_reg(const Tensor& logits_adv, const Tensor& logits_clean, double lambda);

// Per-row weights 1 / max(‖δ_r − η_r‖²₂, norm_floor), shape [B,1]. Held
// constant in backward: δ and η are attack artifacts, not decision variables.
Tensor lipschitz_row_weights(const Tensor& delta, const Tensor& eta, double norm_floor);

// λ · mean over rows of w_r · (‖logit diff‖² + ‖feature diff‖²) with w_r as
// above. Mirrors the graph assembly op for op so both give identical bits.
double lipschitz_reg(const Tensor& logits_adv, const Tensor& logits_eta,
                     const Tensor& feat_adv, const Tensor& feat_eta,
                     const Tensor& delta, const Tensor& eta,
                     double lambda, double norm_floor);

// 1 − cos of two flattened gradient batches; degenerate (zero-norm) input
// returns 1 and sets *degenerate.
double grad_alignment_value(const std::vector<double>& ga, const std::vector<double>& gb,
                            bool* degenerate = nullptr);

// 1 − cos(∇_x CE at x, ∇_x CE at x+η). Diagnostic only, never a training term.
double grad_alignment_metric(const ModelParams& params, const Tensor& x,
                             const std::vector<int32_t>& y, const Tensor& eta);

// Training objective: CE(f(x_adv), y) + λ·R. Graph inputs: params,
// "x_adv", plus "x_eta" (lipschitz) or "x_clean" (guided/nuclear).
// Outputs: "loss", "ce", "reg". For mixed labels (mixup/cutmix) the CE part
// is weight_a·CE(y_a) + (1−weight_a)·CE(y_b).
struct CompositeGraph {
    Graph g;
    bool needs_eta = false;
    bool needs_clean = false;
};

CompositeGraph build_composite_graph(const ModelSpec& spec, int64_t batch,
                                     const std::vector<int32_t>& labels_a,
                                     const std::vector<int32_t>& labels_b, double weight_a,
                                     const RegularizerSpec& reg,
                                     const Tensor* row_weights,       // lipschitz, [B,1]
                                     const Tensor* nuclear_gradient); // nuclear, [B,C]

// Spec-level composite loss value at (x+δ, x+η): builds the graph, runs it.
double composite_loss(const ModelParams& params, const Tensor& batch,
                      const std::vector<int32_t>& labels, const Tensor& delta,
                      const Tensor& eta, const RegularizerSpec& reg);

}  // namespace fatlab
