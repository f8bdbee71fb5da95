#include "fatlab/regularizers.hpp"

#include <cmath>
#include <cstdio>

#include "fatlab/svd.hpp"

namespace fatlab {

const char* reg_kind_name(RegKind k) {
    switch (k) {
        case RegKind::none: return "none";
        case RegKind::guided: return "guided";
        case RegKind::nuclear: return "nuclear";
        case RegKind::lipschitz: return "lipschitz";
    }
    return "?";
}

RegKind parse_reg_kind(const std::string& s) {
    if (s == "none") return RegKind::none;
    if (s == "guided") return RegKind::guided;
    if (s == "nuclear") return RegKind::nuclear;
    if (s == "lipschitz") return RegKind::lipschitz;
    throw ValueError("unknown regularizer kind '" + s + "'");
}

const char* placement_name(RegPlacement p) {
    return p == RegPlacement::min_only ? "min_only" : "min_max";
}

RegPlacement parse_placement(const std::string& s) {
    if (s == "min_only") return RegPlacement::min_only;
    if (s == "min_max") return RegPlacement::min_max;
    throw ValueError("unknown regularizer placement '" + s + "'");
}

void RegularizerSpec::validate() const {
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw ValueError("regularizer: lambda must be finite and >= 0");
    if (!(norm_floor > 0.0)) throw ValueError("regularizer: norm_floor must be > 0");
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ValueError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

// Σ_c of elementwise squares per row, accumulated in column order — the exact
// arithmetic the graph's mul + matmul-with-ones assembly performs.
double row_sq_sum(const double* a, const double* b, int64_t cols) {
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
        double d = a[c] - b[c];
        s += d * d;
    }
    return s;
}

}  // namespace

double guided_reg(const Tensor& logits_adv, const Tensor& logits_clean, double lambda) {
    require_same(logits_adv, logits_clean, "guided_reg");
    if (logits_adv.shape.size() != 2) throw ValueError("guided_reg: expected [B,C] logits");
    int64_t B = logits_adv.shape[0], C = logits_adv.shape[1];
    double acc = 0.0;
    for (int64_t r = 0; r < B; ++r)
        acc += row_sq_sum(logits_adv.data.data() + r * C, logits_clean.data.data() + r * C, C);
    return lambda * (acc / (double)B);
}

double nuclear_reg(const Tensor& logits_adv, const Tensor& logits_clean, double lambda) {
    require_same(logits_adv, logits_clean, "nuclear_reg");
    if (logits_adv.shape.size() != 2) throw ValueError("nuclear_reg: expected [B,C] logits");
    if (logits_adv.shape[0] > 512 || logits_adv.shape[1] > 512)
        throw ValueError("nuclear_reg: matrix larger than 512 per side");
    Tensor d(logits_adv.shape);
    for (int64_t i = 0; i < d.numel(); ++i)
        d.data[i] = logits_adv.data[i] - logits_clean.data[i];
    return lambda * nuclear_norm(d);
}

Tensor lipschitz_row_weights(const Tensor& delta, const Tensor& eta, double norm_floor) {
    require_same(delta, eta, "lipschitz_row_weights");
    if (delta.shape.size() != 2) throw ValueError("lipschitz_row_weights: expected [B,D]");
    int64_t B = delta.shape[0], D = delta.shape[1];
    Tensor w({B, 1});
    for (int64_t r = 0; r < B; ++r) {
        double s = row_sq_sum(delta.data.data() + r * D, eta.data.data() + r * D, D);
        w.data[r] = 1.0 / std::max(s, norm_floor);
    }
    return w;
}

double lipschitz_reg(const Tensor& logits_adv, const Tensor& logits_eta,
                     const Tensor& feat_adv, const Tensor& feat_eta,
                     const Tensor& delta, const Tensor& eta,
                     double lambda, double norm_floor) {
    require_same(logits_adv, logits_eta, "lipschitz_reg logits");
    require_same(feat_adv, feat_eta, "lipschitz_reg features");
    require_same(delta, eta, "lipschitz_reg perturbations");
    int64_t B = logits_adv.shape[0], C = logits_adv.shape[1], H = feat_adv.shape[1];
    if (feat_adv.shape[0] != B || delta.shape[0] != B)
        throw ValueError("lipschitz_reg: batch size mismatch");
    Tensor w = lipschitz_row_weights(delta, eta, norm_floor);
    double acc = 0.0;
    for (int64_t r = 0; r < B; ++r) {
        double sl = row_sq_sum(logits_adv.data.data() + r * C, logits_eta.data.data() + r * C, C);
        double sf = row_sq_sum(feat_adv.data.data() + r * H, feat_eta.data.data() + r * H, H);
        acc += (sl + sf) * w.data[r];
    }
    return lambda * (acc / (double)B);
}

double grad_alignment_value(const std::vector<double>& ga, const std::vector<double>& gb,
                            bool* degenerate) {
    if (ga.size() != gb.size()) throw ValueError("grad_alignment: length mismatch");
    if (degenerate) *degenerate = false;
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (size_t i = 0; i < ga.size(); ++i) {
        dot += ga[i] * gb[i];
        sa += ga[i] * ga[i];
        sb += gb[i] * gb[i];
    }
    double denom = std::sqrt(sa * sb);
    if (denom == 0.0) {
        if (degenerate) *degenerate = true;
        std::fprintf(stderr, "grad_alignment: zero-norm gradient, reporting metric 1\n");
        return 1.0;
    }
    double metric = 1.0 - dot / denom;
    if (metric < 0.0) metric = 0.0;
    if (metric > 2.0) metric = 2.0;
    return metric;
}

double grad_alignment_metric(const ModelParams& params, const Tensor& x,
                             const std::vector<int32_t>& y, const Tensor& eta) {
    require_same(x, eta, "grad_alignment_metric");
    int64_t B = x.shape[0];
    Graph g;
    ParamNodes pn = add_param_inputs(g, params.spec);
    NodeId xin = g.input("x", x.shape);
    Tower t = add_tower(g, params.spec, pn, xin);
    g.mark_output("loss", g.softmax_cross_entropy(t.logits, y));

    auto bindings = param_bindings(params);
    bindings.emplace("x", x);
    g.forward(bindings);
    std::vector<double> ga = g.backward("loss", {"x"}).at("x").data;

    Tensor xp(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) xp.data[i] = x.data[i] + eta.data[i];
    bindings.erase("x");
    bindings.emplace("x", xp);
    g.forward(bindings);
    std::vector<double> gb = g.backward("loss", {"x"}).at("x").data;
    (void)B;
    return grad_alignment_value(ga, gb);
}

CompositeGraph build_composite_graph(const ModelSpec& spec, int64_t batch,
                                     const std::vector<int32_t>& labels_a,
                                     const std::vector<int32_t>& labels_b, double weight_a,
                                     const RegularizerSpec& reg,
                                     const Tensor* row_weights,
                                     const Tensor* nuclear_gradient) {
    reg.validate();
    if (weight_a < 0.0 || weight_a > 1.0) throw ValueError("composite: weight_a outside [0,1]");
    CompositeGraph cg;
    Graph& g = cg.g;
    ParamNodes pn = add_param_inputs(g, spec);
    NodeId x_adv = g.input("x_adv", {batch, spec.input_dim});
    Tower adv = add_tower(g, spec, pn, x_adv);

    NodeId ce;
    if (weight_a == 1.0) {
        ce = g.softmax_cross_entropy(adv.logits, labels_a);
    } else {
        NodeId ce_a = g.softmax_cross_entropy(adv.logits, labels_a);
        NodeId ce_b = g.softmax_cross_entropy(adv.logits, labels_b);
        ce = g.add(g.scale(ce_a, weight_a), g.scale(ce_b, 1.0 - weight_a));
    }

    NodeId clean_logits = -1;
    NodeId reg_node;
    switch (reg.kind) {
        case RegKind::none:
            reg_node = g.constant(Tensor({}, std::vector<double>{0.0}), "reg_zero");
            break;
        case RegKind::guided: {
            cg.needs_clean = true;
            NodeId x_clean = g.input("x_clean", {batch, spec.input_dim});
            Tower clean = add_tower(g, spec, pn, x_clean);
            clean_logits = clean.logits;
            NodeId diff = g.sub(adv.logits, clean.logits);
            NodeId sq = g.mul(diff, diff);
            NodeId ones = g.constant(Tensor({spec.num_classes, 1}, 1.0), "ones_c");
            NodeId rows = g.matmul(sq, ones);
            reg_node = g.scale(g.mean(rows), reg.lambda);
            break;
        }
        case RegKind::nuclear: {
            cg.needs_clean = true;
            if (!nuclear_gradient)
                throw ValueError("composite: nuclear needs the precomputed subgradient");
            NodeId x_clean = g.input("x_clean", {batch, spec.input_dim});
            Tower clean = add_tower(g, spec, pn, x_clean);
            clean_logits = clean.logits;
            NodeId diff = g.sub(adv.logits, clean.logits);
            NodeId gconst = g.constant(*nuclear_gradient, "nuclear_uv");
            reg_node = g.scale(g.sum(g.mul(diff, gconst)), reg.lambda);
            break;
        }
        case RegKind::lipschitz: {
            cg.needs_eta = true;
            if (!row_weights) throw ValueError("composite: lipschitz needs row weights");
            NodeId x_eta = g.input("x_eta", {batch, spec.input_dim});
            Tower eta = add_tower(g, spec, pn, x_eta);
            NodeId dl = g.sub(adv.logits, eta.logits);
            NodeId df = g.sub(adv.features, eta.features);
            NodeId sql = g.mul(dl, dl);
            NodeId sqf = g.mul(df, df);
            NodeId ones_c = g.constant(Tensor({spec.num_classes, 1}, 1.0), "ones_c");
            NodeId ones_h = g.constant(Tensor({spec.hidden_dims.back(), 1}, 1.0), "ones_h");
            NodeId rows = g.add(g.matmul(sql, ones_c), g.matmul(sqf, ones_h));
            NodeId weighted = g.mul(rows, g.constant(*row_weights, "row_w"));
            reg_node = g.scale(g.mean(weighted), reg.lambda);
            break;
        }
        default:
            throw ValueError("composite: unhandled regularizer kind");
    }

    g.mark_output("ce", ce);
    g.mark_output("reg", reg_node);
    g.mark_output("loss", reg.kind == RegKind::none ? ce : g.add(ce, reg_node));
    g.mark_output("logits_adv", adv.logits);
    if (clean_logits >= 0) g.mark_output("logits_clean", clean_logits);
    return cg;
}

double composite_loss(const ModelParams& params, const Tensor& batch,
                      const std::vector<int32_t>& labels, const Tensor& delta,
                      const Tensor& eta, const RegularizerSpec& reg) {
    require_same(batch, delta, "composite_loss delta");
    require_same(batch, eta, "composite_loss eta");
    int64_t B = batch.shape[0];

    Tensor x_adv(batch.shape), x_eta(batch.shape);
    for (int64_t i = 0; i < batch.numel(); ++i) {
        x_adv.data[i] = batch.data[i] + delta.data[i];
        x_eta.data[i] = batch.data[i] + eta.data[i];
    }

    Tensor row_w;
    Tensor nuc_g;
    if (reg.kind == RegKind::lipschitz) row_w = lipschitz_row_weights(delta, eta, reg.norm_floor);
    if (reg.kind == RegKind::nuclear) {
        Tensor ladv, lclean;
        model_forward(params, x_adv, &ladv, nullptr);
        model_forward(params, batch, &lclean, nullptr);
        Tensor d(ladv.shape);
        for (int64_t i = 0; i < d.numel(); ++i) d.data[i] = ladv.data[i] - lclean.data[i];
        nuc_g = nuclear_subgradient(d);
    }

    CompositeGraph cg = build_composite_graph(params.spec, B, labels, labels, 1.0, reg,
                                              reg.kind == RegKind::lipschitz ? &row_w : nullptr,
                                              reg.kind == RegKind::nuclear ? &nuc_g : nullptr);
    auto bindings = param_bindings(params);
    bindings.emplace("x_adv", x_adv);
    if (cg.needs_eta) bindings.emplace("x_eta", x_eta);
    if (cg.needs_clean) bindings.emplace("x_clean", batch);
    return cg.g.forward(bindings).at("loss").data[0];
}

}  // namespace fatlab
