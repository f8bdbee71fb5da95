#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "fatlab/augment.hpp"
#include "test_helpers.hpp"

using namespace fatlab;
using fatlab::testing::random_tensor;

namespace {
rng::Key akey(uint64_t a) { return rng::Key{4242, rng::Stream::augment, a, 0}; }
}

TEST_CASE("cutout_at zeroes exactly the clipped square") {
    int64_t h = 8, w = 10;
    Tensor img({h, w}, 1.0);
    cutout_at(img.data.data(), h, w, 4, 4, 5);
    // top = 2, left = 3: rows 2..5, cols 3..6
    int64_t zeros = 0;
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
            bool inside = r >= 2 && r < 6 && c >= 3 && c < 7;
            CHECK(img.at(r, c) == (inside ? 0.0 : 1.0));
            zeros += img.at(r, c) == 0.0;
        }
    CHECK(zeros == 16);
}

TEST_CASE("cutout clips at borders instead of wrapping") {
    int64_t h = 6, w = 6;
    Tensor img({h, w}, 1.0);
    cutout_at(img.data.data(), h, w, 4, 0, 0);
    // top = -2, left = -2: rows 0..1, cols 0..1 survive the clip
    int64_t zeros = 0;
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) zeros += img.at(r, c) == 0.0;
    CHECK(zeros == 4);
    CHECK(img.at(0, 0) == 0.0);
    CHECK(img.at(1, 1) == 0.0);
    CHECK(img.at(2, 2) == 1.0);

    Tensor img2({h, w}, 1.0);
    cutout_at(img2.data.data(), h, w, 4, 5, 5);
    int64_t zeros2 = 0;
    for (int64_t i = 0; i < img2.numel(); ++i) zeros2 += img2.data[i] == 0.0;
    CHECK(zeros2 == 9);  // rows 3..5 × cols 3..5
}

TEST_CASE("cutout size zero is the identity") {
    Tensor img = random_tensor({5, 7}, 1, 0.0, 1.0);
    Tensor out = cutout(img, 0, akey(1));
    CHECK(out.data == img.data);
    Tensor img2({4, 4}, 1.0);
    cutout_at(img2.data.data(), 4, 4, 0, 2, 2);
    for (double v : img2.data) CHECK(v == 1.0);
}

TEST_CASE("cutout validates shape and size") {
    Tensor img({3, 3}, 1.0);
    CHECK_THROWS_AS(cutout(img, 4, akey(2)), ValueError);
    Tensor flat({9}, 1.0);
    CHECK_THROWS_AS(cutout(flat, 2, akey(2)), ValueError);
}

TEST_CASE("cutout is deterministic per key and varies across keys") {
    Tensor img = random_tensor({9, 9}, 3, 0.1, 1.0);
    Tensor a = cutout(img, 3, akey(5));
    Tensor b = cutout(img, 3, akey(5));
    CHECK(a.data == b.data);
    bool any_diff = false;
    for (uint64_t k = 0; k < 8 && !any_diff; ++k)
        any_diff = cutout(img, 3, akey(100 + k)).data != a.data;
    CHECK(any_diff);
}

TEST_CASE("resolved cutout size defaults to a quarter of the short side") {
    AugmentSpec s;
    s.kind = AugKind::cutout;
    CHECK(s.resolved_cutout(28, 28) == 7);
    CHECK(s.resolved_cutout(1, 512) == 0);
    CHECK(s.resolved_cutout(32, 16) == 4);
    s.cutout_size = 5;
    CHECK(s.resolved_cutout(28, 28) == 5);
    s.cutout_size = 40;
    CHECK_THROWS_AS(s.validate(28, 28), ValueError);
}

TEST_CASE("beta draw stays in the unit interval and is deterministic") {
    for (double a : {0.3, 1.0, 4.0}) {
        double mean = 0.0;
        int n = 2000;
        for (int i = 0; i < n; ++i) {
            double v = beta_draw(a, a, akey(7), (uint64_t)i);
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            mean += v;
        }
        mean /= n;
        CHECK(std::abs(mean - 0.5) < 0.03);  // symmetric beta has mean 1/2
    }
    CHECK(beta_draw(1.0, 1.0, akey(8), 3) == beta_draw(1.0, 1.0, akey(8), 3));
    CHECK(beta_draw(1.0, 1.0, akey(8), 3) != beta_draw(1.0, 1.0, akey(8), 4));
}

TEST_CASE("mixup blends convexly and reports the weight") {
    Tensor x1 = random_tensor({4, 4}, 10, 0.0, 1.0);
    Tensor x2 = random_tensor({4, 4}, 11, 0.0, 1.0);
    MixResult r = mixup(x1, 3, x2, 7, 1.0, akey(9));
    CHECK(r.label_a == 3);
    CHECK(r.label_b == 7);
    CHECK(r.weight_a >= 0.0);
    CHECK(r.weight_a <= 1.0);
    for (int64_t i = 0; i < x1.numel(); ++i) {
        double want = r.weight_a * x1.data[i] + (1.0 - r.weight_a) * x2.data[i];
        CHECK(r.x.data[i] == want);
        REQUIRE(r.x.data[i] >= std::min(x1.data[i], x2.data[i]) - 1e-15);
        REQUIRE(r.x.data[i] <= std::max(x1.data[i], x2.data[i]) + 1e-15);
        REQUIRE(r.x.data[i] >= 0.0);
        REQUIRE(r.x.data[i] <= 1.0);
    }
    CHECK_THROWS_AS(mixup(x1, 0, random_tensor({2, 2}, 12, 0, 1), 1, 1.0, akey(9)), ValueError);
}

TEST_CASE("cutmix weight equals one minus the pasted area fraction") {
    Tensor x1({8, 8}, 1.0);
    Tensor x2({8, 8}, 2.0);
    for (uint64_t s = 0; s < 20; ++s) {
        MixResult r = cutmix(x1, 0, x2, 1, akey(20), s);
        int64_t pasted = 0;
        for (double v : r.x.data) {
            REQUIRE((v == 1.0 || v == 2.0));
            pasted += v == 2.0;
        }
        CHECK(r.weight_a == 1.0 - (double)pasted / 64.0);
        CHECK(r.label_a == 0);
        CHECK(r.label_b == 1);
    }
    Tensor flat({64}, 1.0);
    CHECK_THROWS_AS(cutmix(flat, 0, flat, 1, akey(20)), ValueError);
}

TEST_CASE("augment none is a passthrough") {
    Tensor x = random_tensor({3, 6}, 30, 0.0, 1.0);
    std::vector<int32_t> y{0, 2, 1};
    AugmentSpec spec;
    AugmentedBatch b = augment_batch(x, y, 2, 3, spec, akey(31));
    CHECK(b.x.data == x.data);
    CHECK(b.y_a == y);
    CHECK(b.y_b == y);
    CHECK(b.weight_a == 1.0);
    CHECK(b.dominant == y);
}

TEST_CASE("batch cutout zeroes one clipped square per row") {
    int64_t B = 6, h = 8, w = 8;
    Tensor x({B, h * w}, 1.0);
    std::vector<int32_t> y(B, 0);
    AugmentSpec spec;
    spec.kind = AugKind::cutout;
    spec.cutout_size = 3;
    AugmentedBatch b = augment_batch(x, y, h, w, spec, akey(32));
    CHECK(b.weight_a == 1.0);
    CHECK(b.y_b == y);
    std::set<std::vector<double>> rows;
    for (int64_t r = 0; r < B; ++r) {
        int64_t zeros = 0;
        for (int64_t i = 0; i < h * w; ++i) {
            double v = b.x.data[r * h * w + i];
            REQUIRE((v == 0.0 || v == 1.0));
            zeros += v == 0.0;
        }
        CHECK(zeros >= 4);  // 3×3 patch clipped at worst to 2×2
        CHECK(zeros <= 9);
        rows.insert(std::vector<double>(b.x.data.begin() + r * h * w,
                                        b.x.data.begin() + (r + 1) * h * w));
    }
    CHECK(rows.size() > 1);  // centers drawn per row

    AugmentedBatch again = augment_batch(x, y, h, w, spec, akey(32));
    CHECK(again.x.data == b.x.data);
    AugmentedBatch other = augment_batch(x, y, h, w, spec, akey(33));
    CHECK(other.x.data != b.x.data);
}

TEST_CASE("batch mixup shares one weight and permutes partners") {
    int64_t B = 8, D = 5;
    Tensor x({B, D});
    std::vector<int32_t> y(B);
    for (int64_t r = 0; r < B; ++r) {
        y[r] = (int32_t)r;
        for (int64_t c = 0; c < D; ++c) x.at(r, c) = (double)r / 10.0;
    }
    AugmentSpec spec;
    spec.kind = AugKind::mixup;
    spec.mixup_alpha = 1.0;
    AugmentedBatch b = augment_batch(x, y, 1, D, spec, akey(40));
    CHECK(b.y_a == y);
    double lam = b.weight_a;
    CHECK(lam >= 0.0);
    CHECK(lam <= 1.0);
    std::vector<bool> used(B, false);
    for (int64_t r = 0; r < B; ++r) {
        int32_t partner = b.y_b[r];
        REQUIRE(partner >= 0);
        REQUIRE(partner < (int32_t)B);
        CHECK_FALSE(used[partner]);  // partners form a permutation
        used[partner] = true;
        for (int64_t c = 0; c < D; ++c) {
            double want = lam * ((double)r / 10.0) + (1.0 - lam) * ((double)partner / 10.0);
            CHECK(b.x.at(r, c) == want);
        }
        CHECK(b.dominant[r] == (lam >= 0.5 ? b.y_a[r] : b.y_b[r]));
    }
}

TEST_CASE("batch cutmix pastes one shared rectangle and weights by area") {
    int64_t B = 5, h = 6, w = 7;
    Tensor x({B, h * w});
    std::vector<int32_t> y(B);
    for (int64_t r = 0; r < B; ++r) {
        y[r] = (int32_t)r;
        for (int64_t i = 0; i < h * w; ++i) x.data[r * h * w + i] = (double)(r + 1);
    }
    AugmentSpec spec;
    spec.kind = AugKind::cutmix;
    bool saw_mixed_row = false;
    for (uint64_t trial = 0; trial < 12; ++trial) {
        AugmentedBatch b = augment_batch(x, y, h, w, spec, akey(50 + trial));
        for (int64_t r = 0; r < B; ++r) {
            double own = (double)(r + 1);
            int64_t foreign = 0;
            double partner_val = 0.0;
            for (int64_t i = 0; i < h * w; ++i) {
                double v = b.x.data[r * h * w + i];
                if (v != own) {
                    ++foreign;
                    if (partner_val == 0.0) partner_val = v;
                    CHECK(v == partner_val);  // a single partner row fills the patch
                }
            }
            double frac = (double)foreign / (double)(h * w);
            if (foreign > 0) {
                saw_mixed_row = true;
                CHECK(b.weight_a == 1.0 - frac);
                CHECK((double)(b.y_b[r] + 1) == partner_val);
            }
            CHECK(b.dominant[r] == (b.weight_a >= 0.5 ? b.y_a[r] : b.y_b[r]));
        }
    }
    CHECK(saw_mixed_row);
}

TEST_CASE("augment batch validates its geometry") {
    Tensor x({2, 6}, 0.5);
    std::vector<int32_t> y{0, 1};
    AugmentSpec spec;
    CHECK_THROWS_AS(augment_batch(x, y, 2, 2, spec, akey(60)), ValueError);
    std::vector<int32_t> bad{0};
    CHECK_THROWS_AS(augment_batch(x, bad, 2, 3, spec, akey(60)), ValueError);
    AugmentSpec mix;
    mix.kind = AugKind::mixup;
    mix.mixup_alpha = 0.0;
    CHECK_THROWS_AS(augment_batch(x, y, 2, 3, mix, akey(60)), ValueError);
    CHECK_THROWS_AS(parse_aug_kind("random_crop"), ValueError);
    for (AugKind k : {AugKind::none, AugKind::cutout, AugKind::mixup, AugKind::cutmix})
        CHECK(parse_aug_kind(aug_kind_name(k)) == k);
}
