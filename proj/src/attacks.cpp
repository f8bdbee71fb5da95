#include "fatlab/attacks.hpp"

#include <cmath>

#include "fatlab/svd.hpp"

namespace fatlab {

const char* init_scheme_name(InitScheme s) {
    switch (s) {
        case InitScheme::zero: return "zero";
        case InitScheme::normal_half: return "normal_half";
        case InitScheme::uniform_full: return "uniform_full";
        case InitScheme::bernoulli_half: return "bernoulli_half";
        case InitScheme::atta_prior: return "atta_prior";
        case InitScheme::pgi_momentum: return "pgi_momentum";
    }
    return "?";
}

InitScheme parse_init_scheme(const std::string& s) {
    if (s == "zero") return InitScheme::zero;
    if (s == "normal_half") return InitScheme::normal_half;
    if (s == "uniform_full") return InitScheme::uniform_full;
    if (s == "bernoulli_half") return InitScheme::bernoulli_half;
    if (s == "atta_prior") return InitScheme::atta_prior;
    if (s == "pgi_momentum") return InitScheme::pgi_momentum;
    throw ValueError("unknown init scheme '" + s + "'");
}

const char* attack_loss_name(AttackLoss l) {
    return l == AttackLoss::cross_entropy ? "cross_entropy" : "margin";
}

AttackLoss parse_attack_loss(const std::string& s) {
    if (s == "cross_entropy") return AttackLoss::cross_entropy;
    if (s == "margin") return AttackLoss::margin;
    throw ValueError("unknown attack loss '" + s + "'");
}

double default_alpha(InitScheme scheme, double epsilon) {
    switch (scheme) {
        case InitScheme::zero: return epsilon;
        case InitScheme::normal_half: return epsilon / 2.0;
        case InitScheme::uniform_full: return 1.25 * epsilon;
        case InitScheme::bernoulli_half:
        case InitScheme::atta_prior:
        case InitScheme::pgi_momentum: return epsilon;
    }
    return epsilon;
}

double AttackConfig::resolved_alpha() const {
    return alpha > 0.0 ? alpha : default_alpha(init, epsilon);
}

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0) || epsilon > 1.0)
        throw ValueError("attack: epsilon must be in [0,1] (0 disables the attack)");
    if (steps < 1) throw ValueError("attack: steps must be >= 1");
    if (epsilon > 0.0) {
        double a = resolved_alpha();
        if (!(a > 0.0)) throw ValueError("attack: alpha must be > 0");
        if (steps == 1 && a > 2.0 * epsilon + 1e-15)
            throw ValueError("attack: single-step alpha > 2*epsilon cannot change the projection");
    }
    if (pgi_mu < 0.0 || !std::isfinite(pgi_mu)) throw ValueError("attack: pgi_mu must be finite and >= 0");
}

PriorState PriorState::make(int64_t n, int64_t dim, double epsilon, double mu, bool with_momentum) {
    PriorState s;
    s.n = n;
    s.dim = dim;
    s.epsilon = epsilon;
    s.mu = mu;
    s.eta.assign(n * dim, 0.0);
    if (with_momentum) s.momentum.assign(n * dim, 0.0);
    return s;
}

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

void fill_init_row(double* row, int64_t dim, InitScheme scheme, double epsilon,
                   const rng::Key& key, uint64_t counter_base, const double* prior_row) {
    switch (scheme) {
        case InitScheme::zero:
            for (int64_t i = 0; i < dim; ++i) row[i] = 0.0;
            return;
        case InitScheme::normal_half: {
            double half = epsilon / 2.0;
            for (int64_t i = 0; i < dim; ++i)
                row[i] = clamp(half * rng::normal(key, counter_base + i), -epsilon, epsilon);
            return;
        }
        case InitScheme::uniform_full:
            for (int64_t i = 0; i < dim; ++i)
                row[i] = epsilon * rng::uniform(key, counter_base + i, -1.0, 1.0);
            return;
        case InitScheme::bernoulli_half: {
            double half = epsilon / 2.0;
            for (int64_t i = 0; i < dim; ++i)
                row[i] = half * rng::sign_draw(key, counter_base + i);
            return;
        }
        case InitScheme::atta_prior:
        case InitScheme::pgi_momentum:
            if (prior_row)
                for (int64_t i = 0; i < dim; ++i) row[i] = prior_row[i];
            else
                for (int64_t i = 0; i < dim; ++i) row[i] = 0.0;
            return;
    }
    throw ValueError("unknown init scheme");
}

Tensor sample_init(InitScheme scheme, double epsilon, const std::vector<int64_t>& shape,
                   const PriorState* prior, const std::vector<int64_t>& sample_ids,
                   const rng::Key& key) {
    if (shape.size() != 2) throw ValueError("sample_init: expected [B,D] shape");
    int64_t B = shape[0], D = shape[1];
    bool prior_based = scheme == InitScheme::atta_prior || scheme == InitScheme::pgi_momentum;
    if (prior_based && prior) {
        if (prior->dim != D) throw ValueError("sample_init: prior dim mismatch");
        if ((int64_t)sample_ids.size() != B) throw ValueError("sample_init: ids do not match batch");
    }
    Tensor eta(shape);
    for (int64_t r = 0; r < B; ++r) {
        const double* prow = nullptr;
        if (prior_based && prior) {
            int64_t id = sample_ids[r];
            if (id < 0 || id >= prior->n)
                throw ValueError("sample_init: sample id " + std::to_string(id) + " out of range");
            prow = prior->eta.data() + id * D;
        }
        fill_init_row(eta.data.data() + r * D, D, scheme, epsilon, key, (uint64_t)(r * D), prow);
    }
    return eta;
}

Tensor fgsm_step(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y,
                 const Tensor& eta, double alpha, double epsilon,
                 const AttackObjective& obj, Tensor* signed_grad_out) {
    if (!x.same_shape(eta))
        throw ValueError("fgsm_step: x " + x.shape_str() + " vs eta " + eta.shape_str());
    int64_t B = x.shape[0], D = x.shape[1];

    Tensor x_pert(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) x_pert.data[i] = x.data[i] + eta.data[i];

    Graph g;
    ParamNodes pn = add_param_inputs(g, params.spec);
    NodeId xin = g.input("x", x.shape);
    Tower t = add_tower(g, params.spec, pn, xin);
    NodeId loss = obj.loss == AttackLoss::margin ? g.margin_loss(t.logits, y)
                                                 : g.softmax_cross_entropy(t.logits, y);
    if ((obj.add_guided || obj.add_nuclear) && obj.lambda != 0.0) {
        Tensor clean_logits;
        model_forward(params, x, &clean_logits, nullptr);
        NodeId ref = g.constant(clean_logits, "clean_logits");
        NodeId diff = g.sub(t.logits, ref);
        NodeId reg;
        if (obj.add_guided) {
            NodeId ones = g.constant(Tensor({params.spec.num_classes, 1}, 1.0), "ones_c");
            reg = g.scale(g.mean(g.matmul(g.mul(diff, diff), ones)), obj.lambda);
        } else {
            Tensor adv_logits;
            model_forward(params, x_pert, &adv_logits, nullptr);
            Tensor d(adv_logits.shape);
            for (int64_t i = 0; i < d.numel(); ++i) d.data[i] = adv_logits.data[i] - clean_logits.data[i];
            reg = g.scale(g.sum(g.mul(diff, g.constant(nuclear_subgradient(d), "nuclear_uv"))), obj.lambda);
        }
        loss = g.add(loss, reg);
    }
    g.mark_output("objective", loss);

    auto bindings = param_bindings(params);
    bindings.emplace("x", x_pert);
    g.forward(bindings);
    Tensor grad = g.backward("objective", {"x"}).at("x");
    for (int64_t i = 0; i < grad.numel(); ++i)
        if (!std::isfinite(grad.data[i]))
            throw InternalError("fgsm_step: non-finite input gradient at element " + std::to_string(i));

    if (signed_grad_out) {
        *signed_grad_out = Tensor(x.shape);
        for (int64_t i = 0; i < x.numel(); ++i) signed_grad_out->data[i] = sgn(grad.data[i]);
    }

    Tensor delta(x.shape);
    for (int64_t r = 0; r < B; ++r) {
        for (int64_t i = 0; i < D; ++i) {
            int64_t k = r * D + i;
            double d = clamp(eta.data[k] + alpha * sgn(grad.data[k]), -epsilon, epsilon);
            delta.data[k] = clamp(d, -x.data[k], 1.0 - x.data[k]);
        }
    }
    return delta;
}

Tensor pgd(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y,
           const AttackConfig& cfg, const rng::Key& key,
           const PriorState* prior, const std::vector<int64_t>* sample_ids,
           const AttackObjective& obj, Tensor* signed_grad_out, const Tensor* init_override) {
    cfg.validate();
    if (cfg.epsilon == 0.0) return Tensor(x.shape);

    Tensor delta;
    if (init_override) {
        if (!init_override->same_shape(x)) throw ValueError("pgd: init override shape mismatch");
        delta = *init_override;
        for (double v : delta.data)
            if (std::fabs(v) > cfg.epsilon + 1e-12)
                throw ValueError("pgd: init override outside the epsilon ball");
    } else {
        std::vector<int64_t> no_ids;
        delta = sample_init(cfg.init, cfg.epsilon, x.shape, prior,
                            sample_ids ? *sample_ids : no_ids, key);
    }

    double alpha = cfg.resolved_alpha();
    AttackObjective step_obj = obj;
    step_obj.loss = cfg.loss;
    for (int s = 0; s < cfg.steps; ++s)
        delta = fgsm_step(params, x, y, delta, alpha, cfg.epsilon, step_obj,
                          s + 1 == cfg.steps ? signed_grad_out : nullptr);
    return delta;
}

Tensor margin_pgd(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y,
                  AttackConfig cfg, const rng::Key& key) {
    cfg.loss = AttackLoss::margin;
    return pgd(params, x, y, cfg, key);
}

void update_prior_state(PriorState& state, const std::vector<int64_t>& sample_ids,
                        const Tensor& delta, const Tensor& signed_grad, InitScheme scheme,
                        double alpha) {
    int64_t B = delta.shape[0], D = delta.shape[1];
    if (D != state.dim) throw ValueError("prior update: dim mismatch");
    if ((int64_t)sample_ids.size() != B) throw ValueError("prior update: ids do not match batch");
    double eps = state.epsilon;

    for (int64_t r = 0; r < B; ++r) {
        int64_t id = sample_ids[r];
        if (id < 0 || id >= state.n)
            throw ValueError("prior update: sample id " + std::to_string(id) + " out of range");
        double* erow = state.eta.data() + id * D;
        if (scheme == InitScheme::atta_prior) {
            const double* drow = delta.data.data() + r * D;
            for (int64_t i = 0; i < D; ++i) erow[i] = clamp(drow[i], -eps, eps);
        } else if (scheme == InitScheme::pgi_momentum) {
            if (state.momentum.empty()) throw ValueError("prior update: state lacks momentum");
            if (!signed_grad.same_shape(delta)) throw ValueError("prior update: signed grad shape");
            double* grow = state.momentum.data() + id * D;
            const double* gc = signed_grad.data.data() + r * D;
            for (int64_t i = 0; i < D; ++i) {
                grow[i] = state.mu * grow[i] + gc[i];
                erow[i] = clamp(erow[i] + alpha * sgn(grow[i]), -eps, eps);
            }
        } else {
            throw ValueError("prior update: scheme keeps no state");
        }
    }
}

}  // namespace fatlab
