#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fatlab/rng.hpp"
#include "fatlab/tensor.hpp"

namespace fatlab {

enum class AugKind { none, cutout, mixup, cutmix };

const char* aug_kind_name(AugKind k);
AugKind parse_aug_kind(const std::string& s);

struct AugmentSpec {
    AugKind kind = AugKind::none;
    int64_t cutout_size = -1;   // -1 -> min(H,W)/4
    double mixup_alpha = 1.0;

    int64_t resolved_cutout(int64_t h, int64_t w) const;
    void validate(int64_t h, int64_t w) const;
};

// Zero a size×size square centered at (cy,cx), clipped at the borders.
void cutout_at(double* image, int64_t h, int64_t w, int64_t size, int64_t cy, int64_t cx);
Tensor cutout(const Tensor& image_hw, int64_t size, const rng::Key& key, uint64_t counter_base = 0);

double beta_draw(double alpha, double beta, const rng::Key& key, uint64_t slot);

struct MixResult {
    Tensor x;
    int32_t label_a = 0;
    int32_t label_b = 0;
    double weight_a = 1.0;  // loss weight of label_a; label_b gets 1-weight_a
};

MixResult mixup(const Tensor& x1, int32_t y1, const Tensor& x2, int32_t y2, double mixup_alpha,
                const rng::Key& key, uint64_t slot = 0);

MixResult cutmix(const Tensor& x1_hw, int32_t y1, const Tensor& x2_hw, int32_t y2,
                 const rng::Key& key, uint64_t slot = 0);

// Batch pipeline form. Pairing for mixup/cutmix is a seeded shuffle of the
// batch; the mixing weight is drawn once per batch so the loss stays two
// weighted CE terms. dominant[i] is the label holding the larger weight,
// which is what the Δ quality metric counts against.
struct AugmentedBatch {
    Tensor x;
    std::vector<int32_t> y_a;
    std::vector<int32_t> y_b;
    double weight_a = 1.0;
    std::vector<int32_t> dominant;
};

AugmentedBatch augment_batch(const Tensor& x, const std::vector<int32_t>& y, int64_t h, int64_t w,
                             const AugmentSpec& spec, const rng::Key& key);

}  // namespace fatlab
