#include "fatlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fatlab/eval.hpp"
#include "fatlab/svd.hpp"

namespace fatlab {

const char* lr_kind_name(LrKind k) { return k == LrKind::multistep ? "multistep" : "cyclic"; }

LrKind parse_lr_kind(const std::string& s) {
    if (s == "multistep") return LrKind::multistep;
    if (s == "cyclic") return LrKind::cyclic;
    throw ValueError("unknown lr schedule '" + s + "'");
}

void LrSchedule::validate(int64_t epochs) const {
    if (kind == LrKind::multistep) {
        // base 0 is a legitimate frozen-parameter probe
        if (base < 0.0 || !(factor > 0.0))
            throw ValueError("lr: base must be >= 0 and factor > 0");
        for (size_t i = 0; i < milestones.size(); ++i) {
            if (milestones[i] < 0 || milestones[i] >= epochs)
                throw ValueError("lr: milestones must lie in [0, epochs)");
            if (i > 0 && milestones[i] <= milestones[i - 1])
                throw ValueError("lr: milestones must be strictly increasing");
        }
    } else {
        if (!(max_lr > 0.0)) throw ValueError("lr: max_lr must be > 0");
    }
}

double lr_at(const LrSchedule& s, int64_t epoch, int64_t global_step, int64_t total_steps) {
    if (s.kind == LrKind::multistep) {
        double lr = s.base;
        for (int64_t m : s.milestones)
            if (m <= epoch) lr *= s.factor;
        return lr;
    }
    if (total_steps <= 0) return 0.0;
    double t = (double)global_step / (double)total_steps;
    if (t < 0.0) t = 0.0;
    if (t > 1.0) t = 1.0;
    return s.max_lr * (1.0 - std::fabs(2.0 * t - 1.0));
}

CoStatus co_monitor(const std::vector<double>& robust_history, double collapse_fraction) {
    double peak = 0.0;
    for (size_t i = 0; i < robust_history.size(); ++i) {
        peak = std::max(peak, robust_history[i]);
        if (robust_history[i] < collapse_fraction * peak)
            return {true, (int64_t)i + 1};
    }
    return {false, -1};
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValueError("train: epochs must be >= 1");
    if (batch_size < 1) throw ValueError("train: batch_size must be >= 1");
    lr.validate(epochs);
    if (momentum < 0.0 || momentum >= 1.0) throw ValueError("train: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ValueError("train: weight_decay must be >= 0");
    attack.validate();
    regularizer.validate();
    wa.validate();
    co.eval_attack.validate();
    if (co.collapse_fraction < 0.0 || co.collapse_fraction > 1.0)
        throw ValueError("train: collapse_fraction must be in [0,1]");
    if (eval_subset < 1) throw ValueError("train: eval_subset must be >= 1");
}

SgdState SgdState::make(const ModelSpec& spec) {
    SgdState st;
    int64_t prev = spec.input_dim;
    for (int64_t h : spec.hidden_dims) {
        st.vw.emplace_back(std::vector<int64_t>{prev, h});
        st.vb.emplace_back(std::vector<int64_t>{h});
        prev = h;
    }
    st.vw.emplace_back(std::vector<int64_t>{prev, spec.num_classes});
    st.vb.emplace_back(std::vector<int64_t>{spec.num_classes});
    return st;
}

namespace {

void sgd_apply(Tensor& p, const Tensor& g, Tensor& v, double lr, double momentum, double wd,
               const std::string& name) {
    for (int64_t i = 0; i < p.numel(); ++i) {
        if (!std::isfinite(g.data[i])) {
            char msg[128];
            std::snprintf(msg, sizeof msg, "sgd_step: non-finite gradient in %s at index %lld",
                          name.c_str(), (long long)i);
            throw InternalError(msg);
        }
        v.data[i] = momentum * v.data[i] + (g.data[i] + wd * p.data[i]);
        p.data[i] -= lr * v.data[i];
    }
}

}  // namespace

void sgd_step(ModelParams& params, const std::map<std::string, Tensor>& grads, SgdState& vel,
              double lr, double momentum, double weight_decay) {
    for (size_t l = 0; l < params.weights.size(); ++l) {
        std::string wn = "w" + std::to_string(l), bn = "b" + std::to_string(l);
        sgd_apply(params.weights[l], grads.at(wn), vel.vw[l], lr, momentum, weight_decay, wn);
        sgd_apply(params.biases[l], grads.at(bn), vel.vb[l], lr, momentum, weight_decay, bn);
    }
}

TrainState make_train_state(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& train) {
    spec.validate();
    cfg.validate();
    if (train.n < 1) throw ValueError("train: empty dataset");
    if (train.dim != spec.input_dim) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "train: model input_dim %lld vs dataset dim %lld",
                      (long long)spec.input_dim, (long long)train.dim);
        throw ValueError(msg);
    }
    if (train.num_classes > spec.num_classes)
        throw ValueError("train: dataset has more classes than the model head");
    cfg.augment.validate(train.image_h, train.image_w);

    TrainState st;
    st.spec = spec;
    st.params = init_params(spec, cfg.seed);
    st.velocity = SgdState::make(spec);
    st.wa_active = cfg.wa.kind != WaKind::none;
    if (st.wa_active) st.ema = make_ema_state(st.params, cfg.wa);
    st.prior_active = cfg.attack.init == InitScheme::atta_prior ||
                      cfg.attack.init == InitScheme::pgi_momentum;
    if (st.prior_active)
        st.prior = PriorState::make(train.n, train.dim, cfg.attack.epsilon, cfg.attack.pgi_mu,
                                    cfg.attack.init == InitScheme::pgi_momentum);
    st.steps_per_epoch = (train.n + cfg.batch_size - 1) / cfg.batch_size;
    st.total_steps = cfg.epochs * st.steps_per_epoch;
    st.started = std::chrono::steady_clock::now();
    return st;
}

RunRecord train_epoch(TrainState& st, const Dataset& train, const Dataset& eval_ds,
                      const TrainConfig& cfg) {
    const uint64_t e = (uint64_t)st.epoch;
    const int64_t n = train.n, D = train.dim;
    const bool pgi = cfg.attack.init == InitScheme::pgi_momentum;
    const auto pnames = param_names(st.spec);

    std::vector<int64_t> perm(n);
    for (int64_t i = 0; i < n; ++i) perm[i] = i;
    rng::Key shuffle_key{cfg.seed, rng::Stream::shuffle, e, 0};
    for (int64_t i = n - 1; i > 0; --i) {
        int64_t j = (int64_t)rng::below(shuffle_key, (uint64_t)i, (uint64_t)(i + 1));
        std::swap(perm[i], perm[j]);
    }

    AttackObjective obj;
    if (cfg.regularizer.placement == RegPlacement::min_max) {
        obj.add_guided = cfg.regularizer.kind == RegKind::guided;
        obj.add_nuclear = cfg.regularizer.kind == RegKind::nuclear;
        obj.lambda = cfg.regularizer.lambda;
    }

    int64_t clean_total = 0, robust_total = 0;
    double delta_sum = 0.0, ce_sum = 0.0, reg_sum = 0.0;
    int64_t applied0 = st.ema.updates_applied, skipped0 = st.ema.updates_skipped;
    double first_lr = lr_at(cfg.lr, (int64_t)e, (int64_t)e * st.steps_per_epoch, st.total_steps);

    for (int64_t b0 = 0, bi = 0; b0 < n; b0 += cfg.batch_size, ++bi) {
        int64_t b = std::min(cfg.batch_size, n - b0);
        std::vector<int64_t> ids(perm.begin() + b0, perm.begin() + b0 + b);
        Tensor xb = train.gather(ids);
        std::vector<int32_t> yb = train.gather_labels(ids);

        AugmentedBatch aug = augment_batch(xb, yb, train.image_h, train.image_w, cfg.augment,
                                           {cfg.seed, rng::Stream::augment, e, (uint64_t)bi});

        Tensor eta, delta, signed_grad;
        std::map<std::string, Tensor> outs;
        std::map<std::string, Tensor> grads;
        try {
            rng::Key atk_key{cfg.seed, rng::Stream::attack_init, e, (uint64_t)bi};
            eta = sample_init(cfg.attack.init, cfg.attack.epsilon, {b, D},
                              st.prior_active ? &st.prior : nullptr, ids, atk_key);
            delta = pgd(st.params, aug.x, aug.dominant, cfg.attack, atk_key,
                        st.prior_active ? &st.prior : nullptr, &ids, obj,
                        pgi ? &signed_grad : nullptr, &eta);

            Tensor x_adv(aug.x.shape);
            for (int64_t i = 0; i < b * D; ++i) x_adv.data[i] = aug.x.data[i] + delta.data[i];

            Tensor row_w, nuc_g;
            const Tensor* row_w_p = nullptr;
            const Tensor* nuc_g_p = nullptr;
            if (cfg.regularizer.kind == RegKind::lipschitz) {
                row_w = lipschitz_row_weights(delta, eta, cfg.regularizer.norm_floor);
                row_w_p = &row_w;
            } else if (cfg.regularizer.kind == RegKind::nuclear) {
                Tensor ladv, lcl;
                model_forward(st.params, x_adv, &ladv, nullptr);
                model_forward(st.params, aug.x, &lcl, nullptr);
                Tensor diff(ladv.shape);
                for (int64_t i = 0; i < diff.numel(); ++i)
                    diff.data[i] = ladv.data[i] - lcl.data[i];
                nuc_g = nuclear_subgradient(diff);
                nuc_g_p = &nuc_g;
            }

            CompositeGraph cg = build_composite_graph(st.spec, b, aug.y_a, aug.y_b, aug.weight_a,
                                                      cfg.regularizer, row_w_p, nuc_g_p);
            auto bindings = param_bindings(st.params);
            bindings.emplace("x_adv", std::move(x_adv));
            if (cg.needs_eta) {
                Tensor x_eta(aug.x.shape);
                for (int64_t i = 0; i < b * D; ++i) x_eta.data[i] = aug.x.data[i] + eta.data[i];
                bindings.emplace("x_eta", std::move(x_eta));
            }
            if (cg.needs_clean) bindings.emplace("x_clean", aug.x);

            outs = cg.g.forward(bindings);
            grads = cg.g.backward("loss", pnames);
        } catch (const InternalError& err) {
            char msg[256];
            std::snprintf(msg, sizeof msg, "epoch %lld batch %lld: %s", (long long)(e + 1),
                          (long long)bi, err.msg.c_str());
            throw InternalError(msg);
        }

        int64_t robust_correct = count_correct(outs.at("logits_adv"), aug.dominant);
        int64_t clean_correct;
        if (outs.count("logits_clean")) {
            clean_correct = count_correct(outs.at("logits_clean"), aug.dominant);
        } else {
            Tensor lcl;
            model_forward(st.params, aug.x, &lcl, nullptr);
            clean_correct = count_correct(lcl, aug.dominant);
        }

        int64_t gstep = (int64_t)e * st.steps_per_epoch + bi;
        sgd_step(st.params, grads, st.velocity,
                 lr_at(cfg.lr, (int64_t)e, gstep, st.total_steps), cfg.momentum,
                 cfg.weight_decay);

        QualitySnapshot snap = make_snapshot(clean_correct, robust_correct, b);
        if (st.wa_active) {
            if (cfg.wa.kind == WaKind::ema)
                ema_update(st.ema, st.params);
            else
                auto_ema_update(st.ema, st.params, snap);
        }
        if (st.prior_active && cfg.attack.epsilon > 0.0)
            update_prior_state(st.prior, ids, delta, signed_grad, cfg.attack.init,
                               cfg.attack.resolved_alpha());

        clean_total += clean_correct;
        robust_total += robust_correct;
        delta_sum += snap.delta_ratio;
        ce_sum += outs.at("ce").data[0] * (double)b;
        reg_sum += outs.at("reg").data[0] * (double)b;
    }

    const ModelParams& eval_model = st.wa_active ? st.ema.theta_avg : st.params;
    int64_t m = std::min<int64_t>(cfg.eval_subset, eval_ds.n);
    Tensor ex = eval_ds.take(0, m).x;
    std::vector<int32_t> ey(eval_ds.y.begin(), eval_ds.y.begin() + m);
    std::vector<int64_t> eids(m);
    for (int64_t i = 0; i < m; ++i) eids[i] = i;
    Tensor elog;
    int64_t eval_clean = 0, eval_robust = 0;
    try {
        model_forward(eval_model, ex, &elog, nullptr);
        eval_clean = count_correct(elog, ey);
        eval_robust = count_robust_correct(eval_model, ex, ey, eids, cfg.co.eval_attack,
                                           cfg.seed, (1ULL << 32) | e);
    } catch (const InternalError& err) {
        char msg[256];
        std::snprintf(msg, sizeof msg, "epoch %lld eval: %s", (long long)(e + 1), err.msg.c_str());
        throw InternalError(msg);
    }

    RunRecord rec;
    rec.epoch = (int64_t)e + 1;
    rec.lr = first_lr;
    rec.train_clean_acc = (double)clean_total / (double)n;
    rec.train_robust_acc = (double)robust_total / (double)n;
    rec.delta_ratio_mean = delta_sum / (double)st.steps_per_epoch;
    rec.eval_clean_acc = (double)eval_clean / (double)m;
    rec.eval_robust_acc = (double)eval_robust / (double)m;
    rec.loss_ce = ce_sum / (double)n;
    rec.loss_reg = reg_sum / (double)n;
    rec.wa_updates_applied = st.ema.updates_applied - applied0;
    rec.wa_updates_skipped = st.ema.updates_skipped - skipped0;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - st.started).count();
    st.epoch += 1;
    return rec;
}

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string run_record_csv_header() {
    return "epoch,lr,train_clean_acc,train_robust_acc,delta_ratio_mean,eval_clean_acc,"
           "eval_robust_acc,loss_ce,loss_reg,wa_updates_applied,wa_updates_skipped,wall_seconds";
}

std::string run_record_csv_row(const RunRecord& r) {
    std::string s = std::to_string(r.epoch);
    s += "," + fmt_g(r.lr);
    s += "," + fmt_g(r.train_clean_acc);
    s += "," + fmt_g(r.train_robust_acc);
    s += "," + fmt_g(r.delta_ratio_mean);
    s += "," + fmt_g(r.eval_clean_acc);
    s += "," + fmt_g(r.eval_robust_acc);
    s += "," + fmt_g(r.loss_ce);
    s += "," + fmt_g(r.loss_reg);
    s += "," + std::to_string(r.wa_updates_applied);
    s += "," + std::to_string(r.wa_updates_skipped);
    s += "," + fmt_g(r.wall_seconds);
    return s;
}

std::string run_record_json(const RunRecord& r) {
    std::string s = "{\"epoch\": " + std::to_string(r.epoch);
    s += ", \"lr\": " + fmt_g(r.lr);
    s += ", \"train_clean_acc\": " + fmt_g(r.train_clean_acc);
    s += ", \"train_robust_acc\": " + fmt_g(r.train_robust_acc);
    s += ", \"delta_ratio_mean\": " + fmt_g(r.delta_ratio_mean);
    s += ", \"eval_clean_acc\": " + fmt_g(r.eval_clean_acc);
    s += ", \"eval_robust_acc\": " + fmt_g(r.eval_robust_acc);
    s += ", \"loss_ce\": " + fmt_g(r.loss_ce);
    s += ", \"loss_reg\": " + fmt_g(r.loss_reg);
    s += ", \"wa_updates_applied\": " + std::to_string(r.wa_updates_applied);
    s += ", \"wa_updates_skipped\": " + std::to_string(r.wa_updates_skipped);
    s += ", \"wall_seconds\": " + fmt_g(r.wall_seconds) + "}";
    return s;
}

TrainResult train(const ModelSpec& spec, const Dataset& train_ds, const Dataset& eval_ds,
                  const TrainConfig& cfg, const TrainSink* sink) {
    TrainState st = make_train_state(spec, cfg, train_ds);
    TrainResult res;
    res.wa_active = st.wa_active;
    double best_acc = -1.0;
    std::vector<double> robust_history;

    for (int64_t ep = 0; ep < cfg.epochs; ++ep) {
        RunRecord rec = train_epoch(st, train_ds, eval_ds, cfg);
        robust_history.push_back(rec.eval_robust_acc);
        res.records.push_back(rec);
        if (sink && sink->on_record) sink->on_record(rec);

        if (rec.eval_robust_acc > best_acc) {
            best_acc = rec.eval_robust_acc;
            res.best_epoch = rec.epoch;
            res.best_params = st.wa_active ? st.ema.theta_avg : st.params;
        }
        if (cfg.lr.kind == LrKind::multistep && sink && sink->on_checkpoint) {
            for (int64_t m : cfg.lr.milestones)
                if (m == rec.epoch)
                    sink->on_checkpoint("milestone_" + std::to_string(m), st.params, false,
                                        rec.epoch);
        }
    }

    res.final_params = st.params;
    if (st.wa_active) res.averaged = st.ema.theta_avg;
    res.co = co_monitor(robust_history, cfg.co.collapse_fraction);
    if (sink && sink->on_checkpoint) {
        sink->on_checkpoint("final", st.params, false, cfg.epochs);
        if (st.wa_active) sink->on_checkpoint("final_averaged", st.ema.theta_avg, true, cfg.epochs);
        sink->on_checkpoint("best", res.best_params, st.wa_active, res.best_epoch);
    }
    return res;
}

}  // namespace fatlab
