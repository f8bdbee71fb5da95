#include <cmath>

#include "doctest.h"
#include "fatlab/attacks.hpp"
#include "fatlab/regularizers.hpp"
#include "fatlab/svd.hpp"
#include "test_helpers.hpp"

using namespace fatlab;
using fatlab::testing::random_tensor;

TEST_CASE("guided reg value and exact linearity in lambda") {
    Tensor adv({1, 2}, std::vector<double>{1.0, 0.0});
    Tensor clean({1, 2}, std::vector<double>{0.0, 0.0});
    // diff norm^2 = 1, lambda = 2 -> 2
    CHECK(guided_reg(adv, clean, 2.0) == 2.0);
    CHECK(guided_reg(adv, clean, 0.0) == 0.0);

    Tensor a = random_tensor({5, 3}, 1, -2, 2), b = random_tensor({5, 3}, 2, -2, 2);
    double base = guided_reg(a, b, 1.0);
    for (double lam : {0.5, 3.0, 12.0, 17.25}) CHECK(guided_reg(a, b, lam) == lam * base);
}

TEST_CASE("guided reg of identical logits is zero") {
    Tensor a = random_tensor({4, 6}, 3, -1, 1);
    CHECK(guided_reg(a, a, 12.0) == 0.0);
}

TEST_CASE("nuclear reg uses the nuclear norm of the logit difference") {
    Tensor clean({2, 2}, 0.0);
    Tensor adv({2, 2}, std::vector<double>{1, 2, 2, 4});
    CHECK(nuclear_reg(adv, clean, 1.0) == doctest::Approx(5.0).epsilon(1e-14));
    double base = nuclear_reg(adv, clean, 1.0);
    for (double lam : {0.25, 2.0, 8.0}) CHECK(nuclear_reg(adv, clean, lam) == lam * base);
}

TEST_CASE("lipschitz reg identity at delta == eta") {
    Tensor logits = random_tensor({3, 4}, 4, -1, 1);
    Tensor feats = random_tensor({3, 8}, 5, -1, 1);
    Tensor delta = random_tensor({3, 6}, 6, -0.1, 0.1);
    CHECK(lipschitz_reg(logits, logits, feats, feats, delta, delta, 12.0, 1e-8) == 0.0);
}

TEST_CASE("lipschitz reg single-row worked example") {
    // logit diff norm^2 = 2, feature diff norm^2 = 1, |delta-eta|^2 = 0.5
    // -> 12 / 0.5 * 3 = 72
    Tensor ladv({1, 2}, std::vector<double>{1.0, 1.0});
    Tensor leta({1, 2}, 0.0);
    Tensor fadv({1, 1}, std::vector<double>{1.0});
    Tensor feta({1, 1}, 0.0);
    Tensor delta({1, 2}, std::vector<double>{0.5, 0.5});
    Tensor eta({1, 2}, 0.0);
    CHECK(lipschitz_reg(ladv, leta, fadv, feta, delta, eta, 12.0, 1e-8) == 72.0);
}

TEST_CASE("lipschitz reg scales exactly linearly in lambda") {
    Tensor ladv = random_tensor({6, 3}, 7, -1, 1), leta = random_tensor({6, 3}, 8, -1, 1);
    Tensor fadv = random_tensor({6, 9}, 9, -1, 1), feta = random_tensor({6, 9}, 10, -1, 1);
    Tensor delta = random_tensor({6, 5}, 11, -0.1, 0.1), eta = random_tensor({6, 5}, 12, -0.05, 0.05);
    double base = lipschitz_reg(ladv, leta, fadv, feta, delta, eta, 1.0, 1e-8);
    for (double lam : {0.5, 2.0, 12.0, 99.0})
        CHECK(lipschitz_reg(ladv, leta, fadv, feta, delta, eta, lam, 1e-8) == lam * base);
}

TEST_CASE("norm floor guards near-identical perturbations") {
    Tensor ladv({1, 2}, std::vector<double>{1e-3, 0.0});
    Tensor leta({1, 2}, 0.0);
    Tensor f({1, 1}, 0.0);
    Tensor delta({1, 3}, std::vector<double>{1e-9, 0, 0});
    Tensor eta({1, 3}, 0.0);
    // |delta-eta|^2 = 1e-18 < 1e-8 -> denominator floors at 1e-8
    double got = lipschitz_reg(ladv, leta, f, f, delta, eta, 1.0, 1e-8);
    CHECK(got == doctest::Approx(1e-6 / 1e-8).epsilon(1e-12));

    Tensor w = lipschitz_row_weights(delta, eta, 1e-8);
    CHECK(w.data[0] == 1e8);
}

TEST_CASE("row weights are per row") {
    Tensor delta({2, 2}, std::vector<double>{0.5, 0.5, 1.0, 0.0});
    Tensor eta({2, 2}, 0.0);
    Tensor w = lipschitz_row_weights(delta, eta, 1e-8);
    CHECK(w.shape == std::vector<int64_t>{2, 1});
    CHECK(w.data[0] == 1.0 / 0.5);
    CHECK(w.data[1] == 1.0 / 1.0);
}

TEST_CASE("grad alignment metric is zero at eta zero and positive off kinks") {
    ModelSpec spec{5, {7}, 3};
    ModelParams p = init_params(spec, 15);
    Tensor x = random_tensor({4, 5}, 13, 0.1, 0.9);
    std::vector<int32_t> y{0, 1, 2, 1};
    Tensor eta0({4, 5}, 0.0);
    CHECK(grad_alignment_metric(p, x, y, eta0) == 0.0);

    Tensor eta({4, 5}, 0.02);
    double m = grad_alignment_metric(p, x, y, eta);
    CHECK(m >= 0.0);
    CHECK(m <= 2.0);
}

TEST_CASE("grad alignment handles degenerate zero gradients") {
    std::vector<double> za(6, 0.0), zb(6, 1.0);
    bool degenerate = false;
    double v = grad_alignment_value(za, zb, &degenerate);
    CHECK(degenerate);
    CHECK(v == 1.0);

    std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
    CHECK(grad_alignment_value(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> c{2.0, 0.0};
    CHECK(grad_alignment_value(a, c) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    std::vector<double> d{-3.0, 0.0};
    CHECK(grad_alignment_value(a, d) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("composite graph reproduces the value-level ops for every kind") {
    ModelSpec spec{6, {8, 7}, 3};
    ModelParams p = init_params(spec, 21);
    int64_t B = 5;
    Tensor x = random_tensor({B, 6}, 50, 0.1, 0.9);
    Tensor delta = random_tensor({B, 6}, 51, -0.08, 0.08);
    Tensor eta = random_tensor({B, 6}, 52, -0.04, 0.04);
    std::vector<int32_t> y{0, 1, 2, 0, 2};

    Tensor xa(x.shape), xe(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) {
        xa.data[i] = x.data[i] + delta.data[i];
        xe.data[i] = x.data[i] + eta.data[i];
    }
    Tensor ladv, fadv, leta, feta, lcl;
    model_forward(p, xa, &ladv, &fadv);
    model_forward(p, xe, &leta, &feta);
    model_forward(p, x, &lcl, nullptr);

    auto run = [&](const RegularizerSpec& reg) {
        const Tensor* row_w_p = nullptr;
        const Tensor* nuc_p = nullptr;
        Tensor row_w, nuc;
        if (reg.kind == RegKind::lipschitz) {
            row_w = lipschitz_row_weights(delta, eta, reg.norm_floor);
            row_w_p = &row_w;
        }
        if (reg.kind == RegKind::nuclear) {
            Tensor diff(ladv.shape);
            for (int64_t i = 0; i < diff.numel(); ++i) diff.data[i] = ladv.data[i] - lcl.data[i];
            nuc = nuclear_subgradient(diff);
            nuc_p = &nuc;
        }
        CompositeGraph cg = build_composite_graph(spec, B, y, y, 1.0, reg, row_w_p, nuc_p);
        auto bind = param_bindings(p);
        bind.emplace("x_adv", xa);
        if (cg.needs_eta) bind.emplace("x_eta", xe);
        if (cg.needs_clean) bind.emplace("x_clean", x);
        return cg.g.forward(bind);
    };

    RegularizerSpec none;
    auto out_none = run(none);
    CHECK(out_none.at("reg").data[0] == 0.0);
    CHECK(out_none.at("loss").data[0] == out_none.at("ce").data[0]);

    RegularizerSpec guided{RegKind::guided, 7.0, RegPlacement::min_only, 1e-8};
    auto out_g = run(guided);
    CHECK(out_g.at("reg").data[0] == guided_reg(ladv, lcl, 7.0));
    CHECK(out_g.at("loss").data[0] == out_g.at("ce").data[0] + out_g.at("reg").data[0]);
    CHECK(out_g.at("ce").data[0] == out_none.at("ce").data[0]);

    RegularizerSpec lip{RegKind::lipschitz, 12.0, RegPlacement::min_only, 1e-8};
    auto out_l = run(lip);
    CHECK(out_l.at("reg").data[0] ==
          lipschitz_reg(ladv, leta, fadv, feta, delta, eta, 12.0, 1e-8));

    // nuclear: in-graph term is <G, z_adv - z_clean> with constant G = UV^T of
    // the observed diff, so its value equals the true nuclear norm scaled by lambda
    RegularizerSpec nuc{RegKind::nuclear, 3.0, RegPlacement::min_only, 1e-8};
    auto out_n = run(nuc);
    Tensor diff(ladv.shape);
    for (int64_t i = 0; i < diff.numel(); ++i) diff.data[i] = ladv.data[i] - lcl.data[i];
    CHECK(out_n.at("reg").data[0] == doctest::Approx(3.0 * nuclear_norm(diff)).epsilon(1e-10));
}

TEST_CASE("composite_loss value helper agrees with the graph") {
    ModelSpec spec{4, {6}, 2};
    ModelParams p = init_params(spec, 33);
    Tensor x = random_tensor({3, 4}, 60, 0.2, 0.8);
    Tensor delta = random_tensor({3, 4}, 61, -0.05, 0.05);
    Tensor eta = random_tensor({3, 4}, 62, -0.02, 0.02);
    std::vector<int32_t> y{0, 1, 1};

    for (RegKind kind : {RegKind::none, RegKind::guided, RegKind::lipschitz, RegKind::nuclear}) {
        RegularizerSpec reg;
        reg.kind = kind;
        reg.lambda = kind == RegKind::none ? 0.0 : 5.0;
        double v = composite_loss(p, x, y, delta, eta, reg);
        CHECK(std::isfinite(v));
        if (kind == RegKind::none) {
            RegularizerSpec lip{RegKind::lipschitz, 0.0, RegPlacement::min_only, 1e-8};
            // lambda 0 lipschitz adds nothing
            CHECK(composite_loss(p, x, y, delta, eta, lip) == v);
        }
    }
}

TEST_CASE("mixed-label composite weights the two CE terms") {
    ModelSpec spec{4, {5}, 3};
    ModelParams p = init_params(spec, 44);
    int64_t B = 4;
    Tensor xa = random_tensor({B, 4}, 70, 0.1, 0.9);
    std::vector<int32_t> ya{0, 1, 2, 0}, yb{2, 0, 1, 1};

    auto ce_of = [&](const std::vector<int32_t>& labels) {
        Graph g;
        ParamNodes pn = add_param_inputs(g, spec);
        NodeId xin = g.input("x", xa.shape);
        Tower t = add_tower(g, spec, pn, xin);
        g.mark_output("ce", g.softmax_cross_entropy(t.logits, labels));
        auto bind = param_bindings(p);
        bind.emplace("x", xa);
        return g.forward(bind).at("ce").data[0];
    };

    RegularizerSpec none;
    const double wa = 0.3;
    CompositeGraph cg = build_composite_graph(spec, B, ya, yb, wa, none, nullptr, nullptr);
    auto bind = param_bindings(p);
    bind.emplace("x_adv", xa);
    auto out = cg.g.forward(bind);
    double want = wa * ce_of(ya) + (1.0 - wa) * ce_of(yb);
    CHECK(out.at("ce").data[0] == doctest::Approx(want).epsilon(1e-14));

    // weight_a == 1 collapses to plain CE on labels_a regardless of labels_b
    CompositeGraph cg1 = build_composite_graph(spec, B, ya, yb, 1.0, none, nullptr, nullptr);
    auto bind1 = param_bindings(p);
    bind1.emplace("x_adv", xa);
    CHECK(cg1.g.forward(bind1).at("ce").data[0] == ce_of(ya));
}

TEST_CASE("min_max placement feeds guided and nuclear into the attack objective") {
    Tensor a({2, 3}, std::vector<double>{0.5, -0.2, 0.4, -0.1, 0.6, -0.3});
    ModelParams p = fatlab::testing::linear_softmax_params(a);
    Tensor x = random_tensor({3, 3}, 80, 0.3, 0.7);
    std::vector<int32_t> y{0, 1, 0};
    Tensor eta({3, 3}, 0.0);

    AttackObjective plain;
    AttackObjective with_guided;
    with_guided.add_guided = true;
    with_guided.lambda = 50.0;

    Tensor d1 = fgsm_step(p, x, y, eta, 0.03, 0.06, plain);
    Tensor d2 = fgsm_step(p, x, y, eta, 0.03, 0.06, with_guided);
    // at eta=0 the guided term's gradient is zero (diff == 0), so the step agrees
    CHECK(d1.data == d2.data);

    // from a nonzero start the guided gradient shifts some signs
    Tensor eta2({3, 3}, std::vector<double>{0.02, -0.02, 0.01, -0.01, 0.02, 0.0, 0.01, 0.02, -0.02});
    Tensor d3 = fgsm_step(p, x, y, eta2, 0.03, 0.06, plain);
    Tensor d4 = fgsm_step(p, x, y, eta2, 0.03, 0.06, with_guided);
    CHECK(d3.data != d4.data);
}

TEST_CASE("regularizer spec validation") {
    RegularizerSpec r;
    r.kind = RegKind::lipschitz;
    r.lambda = -1.0;
    CHECK_THROWS_AS(r.validate(), ValueError);
    r.lambda = 12.0;
    r.norm_floor = 0.0;
    CHECK_THROWS_AS(r.validate(), ValueError);
    r.norm_floor = 1e-8;
    CHECK_NOTHROW(r.validate());
}

TEST_CASE("kind and placement parsing round trips") {
    for (RegKind k : {RegKind::none, RegKind::guided, RegKind::nuclear, RegKind::lipschitz})
        CHECK(parse_reg_kind(reg_kind_name(k)) == k);
    for (RegPlacement pl : {RegPlacement::min_only, RegPlacement::min_max})
        CHECK(parse_placement(placement_name(pl)) == pl);
    CHECK_THROWS_AS(parse_reg_kind("frobenius"), ValueError);
    CHECK_THROWS_AS(parse_placement("outer"), ValueError);
}
