#include "fatlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fatlab/kernels.hpp"

namespace fatlab {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double mean_ce(const ModelParams& params, const Tensor& x, const std::vector<int32_t>& y) {
    int64_t n = x.shape[0];
    if ((int64_t)y.size() != n) throw ValueError("mean_ce: label count mismatch");
    Tensor logits;
    model_forward(params, x, &logits, nullptr);
    int64_t c = logits.shape[1];
    std::vector<double> probs(n * c), row_loss(n);
    kernels::softmax_ce_rows(logits.data.data(), y.data(), probs.data(), row_loss.data(), n, c);
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += row_loss[i];
    return s / (double)n;
}

int64_t count_robust_correct(const ModelParams& params, const Tensor& x,
                             const std::vector<int32_t>& y,
                             const std::vector<int64_t>& sample_ids, const AttackConfig& atk,
                             uint64_t seed, uint64_t tag, int64_t eval_batch) {
    atk.validate();
    int64_t n = x.shape[0], d = x.shape[1];
    if ((int64_t)y.size() != n || (int64_t)sample_ids.size() != n)
        throw ValueError("count_robust_correct: row/label/id count mismatch");
    if (eval_batch < 1) throw ValueError("count_robust_correct: eval_batch must be >= 1");

    int64_t correct = 0;
    for (int64_t s = 0; s < n; s += eval_batch) {
        int64_t b = std::min(eval_batch, n - s);
        Tensor xb({b, d});
        std::copy(x.data.begin() + s * d, x.data.begin() + (s + b) * d, xb.data.begin());
        std::vector<int32_t> yb(y.begin() + s, y.begin() + s + b);

        Tensor eta0({b, d});
        for (int64_t r = 0; r < b; ++r) {
            rng::Key k{seed, rng::Stream::attack_init, tag, (uint64_t)sample_ids[s + r]};
            fill_init_row(eta0.data.data() + r * d, d, atk.init, atk.epsilon, k, 0, nullptr);
        }
        rng::Key unused{seed, rng::Stream::attack_init, tag, 0};
        Tensor delta = pgd(params, xb, yb, atk, unused, nullptr, nullptr, {}, nullptr, &eta0);

        Tensor x_adv({b, d});
        for (int64_t i = 0; i < b * d; ++i) x_adv.data[i] = xb.data[i] + delta.data[i];
        Tensor logits;
        model_forward(params, x_adv, &logits, nullptr);
        correct += count_correct(logits, yb);
    }
    return correct;
}

EvalReport evaluate(const ModelParams& params, const Dataset& ds,
                    const std::vector<std::pair<std::string, AttackConfig>>& attacks,
                    uint64_t seed, int64_t eval_batch) {
    if (ds.n < 1) throw ValueError("evaluate: empty dataset");
    if (ds.dim != params.spec.input_dim) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "evaluate: model input_dim %lld vs dataset dim %lld",
                      (long long)params.spec.input_dim, (long long)ds.dim);
        throw ValueError(msg);
    }
    EvalReport rep;
    rep.n_samples = ds.n;
    Tensor logits;
    model_forward(params, ds.x, &logits, nullptr);
    rep.clean_acc = (double)count_correct(logits, ds.y) / (double)ds.n;
    rep.clean_ce = mean_ce(params, ds.x, ds.y);

    std::vector<int64_t> ids(ds.n);
    for (int64_t i = 0; i < ds.n; ++i) ids[i] = i;
    for (size_t a = 0; a < attacks.size(); ++a) {
        AttackResult r;
        r.name = attacks[a].first;
        r.config = attacks[a].second;
        int64_t c = count_robust_correct(params, ds.x, ds.y, ids, r.config, seed, (uint64_t)a,
                                         eval_batch);
        r.robust_acc = (double)c / (double)ds.n;
        rep.attacks.push_back(std::move(r));
    }
    return rep;
}

std::string eval_report_json(const EvalReport& r) {
    std::string s = "{\n";
    s += "  \"clean_acc\": " + fmt_g(r.clean_acc) + ",\n";
    s += "  \"clean_ce\": " + fmt_g(r.clean_ce) + ",\n";
    s += "  \"n_samples\": " + std::to_string(r.n_samples) + ",\n";
    s += "  \"attacks\": [";
    for (size_t i = 0; i < r.attacks.size(); ++i) {
        const AttackResult& a = r.attacks[i];
        s += i ? ",\n    {" : "\n    {";
        s += "\"name\": \"" + a.name + "\", ";
        s += "\"robust_acc\": " + fmt_g(a.robust_acc) + ", ";
        s += "\"epsilon\": " + fmt_g(a.config.epsilon) + ", ";
        s += "\"alpha\": " + fmt_g(a.config.resolved_alpha()) + ", ";
        s += "\"steps\": " + std::to_string(a.config.steps) + ", ";
        s += "\"init\": \"" + std::string(init_scheme_name(a.config.init)) + "\", ";
        s += "\"loss\": \"" + std::string(attack_loss_name(a.config.loss)) + "\"}";
    }
    s += r.attacks.empty() ? "]\n}\n" : "\n  ]\n}\n";
    return s;
}

LandscapeGrid landscape_grid(const ModelParams& params, const Tensor& samples,
                             const std::vector<int32_t>& labels, double eta_mag, int64_t n1,
                             int64_t n2, uint64_t seed) {
    if (!(eta_mag > 0.0)) throw ValueError("landscape: eta_mag must be > 0");
    if (n1 < 1 || n2 < 1 || n1 % 2 == 0 || n2 % 2 == 0)
        throw ValueError("landscape: n1 and n2 must be odd and >= 1");
    int64_t n = samples.shape[0], d = samples.shape[1];
    if ((int64_t)labels.size() != n) throw ValueError("landscape: label count mismatch");

    LandscapeGrid g;
    g.n1 = n1;
    g.n2 = n2;
    g.eta_mag = eta_mag;
    g.r1 = Tensor({n, d});
    for (int64_t i = 0; i < n; ++i) {
        rng::Key k{seed, rng::Stream::landscape, 0, (uint64_t)i};
        for (int64_t j = 0; j < d; ++j)
            g.r1.data[i * d + j] = eta_mag * rng::sign_draw(k, (uint64_t)j);
    }

    // per-sample CE input gradient; mean-over-rows scaling never flips a sign
    Graph gr;
    ParamNodes pn = add_param_inputs(gr, params.spec);
    NodeId x = gr.input("x", {n, d});
    Tower t = add_tower(gr, params.spec, pn, x);
    gr.mark_output("loss", gr.softmax_cross_entropy(t.logits, labels));
    auto bindings = param_bindings(params);
    bindings.emplace("x", samples);
    gr.forward(bindings);
    Tensor gx = gr.backward("loss", {"x"}).at("x");
    g.r2 = Tensor({n, d});
    for (int64_t i = 0; i < n * d; ++i) g.r2.data[i] = eta_mag * sign_of(gx.data[i]);

    g.values.resize(n1 * n2);
    Tensor xp({n, d});
    for (int64_t i = 0; i < n1; ++i) {
        double a = n1 == 1 ? 0.0 : -1.0 + 2.0 * (double)i / (double)(n1 - 1);
        for (int64_t j = 0; j < n2; ++j) {
            double b = n2 == 1 ? 0.0 : -1.0 + 2.0 * (double)j / (double)(n2 - 1);
            for (int64_t e = 0; e < n * d; ++e) {
                double v = samples.data[e] + a * g.r1.data[e] + b * g.r2.data[e];
                xp.data[e] = std::clamp(v, 0.0, 1.0);
            }
            g.values[i * n2 + j] = mean_ce(params, xp, labels);
        }
    }
    return g;
}

std::string landscape_csv(const LandscapeGrid& g) {
    std::string s = "# a_axis";
    for (int64_t i = 0; i < g.n1; ++i)
        s += "," + fmt_g(g.n1 == 1 ? 0.0 : -1.0 + 2.0 * (double)i / (double)(g.n1 - 1));
    s += "\n# b_axis";
    for (int64_t j = 0; j < g.n2; ++j)
        s += "," + fmt_g(g.n2 == 1 ? 0.0 : -1.0 + 2.0 * (double)j / (double)(g.n2 - 1));
    s += "\n# eta_mag," + fmt_g(g.eta_mag) + "\n";
    s += "a,b,mean_ce\n";
    for (int64_t i = 0; i < g.n1; ++i) {
        double a = g.n1 == 1 ? 0.0 : -1.0 + 2.0 * (double)i / (double)(g.n1 - 1);
        for (int64_t j = 0; j < g.n2; ++j) {
            double b = g.n2 == 1 ? 0.0 : -1.0 + 2.0 * (double)j / (double)(g.n2 - 1);
            s += fmt_g(a) + "," + fmt_g(b) + "," + fmt_g(g.at(i, j)) + "\n";
        }
    }
    return s;
}

std::vector<SweepPoint> strength_sweep(const ModelParams& params, const Dataset& ds,
                                       const std::vector<double>& eps_list,
                                       const AttackConfig& tmpl, uint64_t seed,
                                       int64_t eval_batch) {
    if (eps_list.empty()) throw ValueError("strength_sweep: empty epsilon list");
    for (size_t i = 1; i < eps_list.size(); ++i)
        if (eps_list[i] < eps_list[i - 1])
            throw ValueError("strength_sweep: epsilon list must be sorted ascending");
    if (tmpl.alpha != 0.0 && !(tmpl.epsilon > 0.0))
        throw ValueError("strength_sweep: explicit alpha needs template epsilon > 0 to scale");

    int64_t n = ds.n, d = ds.dim;
    std::vector<char> alive(n, 1);
    Tensor prev({n, d});  // carried perturbation, zero before the first point
    std::vector<SweepPoint> out;

    for (size_t gi = 0; gi < eps_list.size(); ++gi) {
        AttackConfig cfg = tmpl;
        cfg.epsilon = eps_list[gi];
        if (tmpl.alpha != 0.0) cfg.alpha = tmpl.alpha * (cfg.epsilon / tmpl.epsilon);
        cfg.validate();

        for (int64_t s = 0; s < n; s += eval_batch) {
            int64_t b = std::min(eval_batch, n - s);
            Tensor xb({b, d});
            std::copy(ds.x.data.begin() + s * d, ds.x.data.begin() + (s + b) * d,
                      xb.data.begin());
            std::vector<int32_t> yb(ds.y.begin() + s, ds.y.begin() + s + b);

            // fresh candidate, keyed exactly like evaluate() at tag gi
            Tensor eta0({b, d});
            for (int64_t r = 0; r < b; ++r) {
                rng::Key k{seed, rng::Stream::attack_init, (uint64_t)gi, (uint64_t)(s + r)};
                fill_init_row(eta0.data.data() + r * d, d, cfg.init, cfg.epsilon, k, 0, nullptr);
            }
            rng::Key unused{seed, rng::Stream::attack_init, (uint64_t)gi, 0};
            Tensor delta_f = pgd(params, xb, yb, cfg, unused, nullptr, nullptr, {}, nullptr, &eta0);

            Tensor x_adv({b, d});
            for (int64_t i = 0; i < b * d; ++i) x_adv.data[i] = xb.data[i] + delta_f.data[i];
            Tensor logits;
            model_forward(params, x_adv, &logits, nullptr);
            std::vector<int32_t> pred = predict(logits);
            for (int64_t r = 0; r < b; ++r)
                if (pred[r] != yb[r]) alive[s + r] = 0;

            const Tensor* carry = &delta_f;
            Tensor delta_r;
            if (gi > 0) {  // replay the carried smaller-ε perturbation as init
                Tensor init_prev({b, d});
                std::copy(prev.data.begin() + s * d, prev.data.begin() + (s + b) * d,
                          init_prev.data.begin());
                delta_r = pgd(params, xb, yb, cfg, unused, nullptr, nullptr, {}, nullptr,
                              &init_prev);
                for (int64_t i = 0; i < b * d; ++i) x_adv.data[i] = xb.data[i] + delta_r.data[i];
                model_forward(params, x_adv, &logits, nullptr);
                pred = predict(logits);
                for (int64_t r = 0; r < b; ++r)
                    if (pred[r] != yb[r]) alive[s + r] = 0;
                carry = &delta_r;
            }
            std::copy(carry->data.begin(), carry->data.end(), prev.data.begin() + s * d);
        }

        int64_t cnt = 0;
        for (int64_t i = 0; i < n; ++i) cnt += alive[i];
        out.push_back({eps_list[gi], (double)cnt / (double)n});
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& pts) {
    std::string s = "epsilon,robust_acc\n";
    for (const auto& p : pts) s += fmt_g(p.epsilon) + "," + fmt_g(p.robust_acc) + "\n";
    return s;
}

}  // namespace fatlab
