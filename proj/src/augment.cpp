#include "fatlab/augment.hpp"

#include <cmath>

namespace fatlab {

const char* aug_kind_name(AugKind k) {
    switch (k) {
        case AugKind::none: return "none";
        case AugKind::cutout: return "cutout";
        case AugKind::mixup: return "mixup";
        case AugKind::cutmix: return "cutmix";
    }
    return "?";
}

AugKind parse_aug_kind(const std::string& s) {
    if (s == "none") return AugKind::none;
    if (s == "cutout") return AugKind::cutout;
    if (s == "mixup") return AugKind::mixup;
    if (s == "cutmix") return AugKind::cutmix;
    throw ValueError("unknown augmentation '" + s + "'");
}

int64_t AugmentSpec::resolved_cutout(int64_t h, int64_t w) const {
    return cutout_size >= 0 ? cutout_size : std::min(h, w) / 4;
}

void AugmentSpec::validate(int64_t h, int64_t w) const {
    if (kind == AugKind::cutout && resolved_cutout(h, w) > std::min(h, w))
        throw ValueError("augment: cutout size exceeds image side");
    if (kind == AugKind::mixup && (!(mixup_alpha > 0.0) || !std::isfinite(mixup_alpha)))
        throw ValueError("augment: mixup_alpha must be finite and > 0");
}

void cutout_at(double* image, int64_t h, int64_t w, int64_t size, int64_t cy, int64_t cx) {
    if (size <= 0) return;
    int64_t top = cy - size / 2, left = cx - size / 2;
    int64_t r0 = std::max<int64_t>(0, top), r1 = std::min(h, top + size);
    int64_t c0 = std::max<int64_t>(0, left), c1 = std::min(w, left + size);
    for (int64_t r = r0; r < r1; ++r)
        for (int64_t c = c0; c < c1; ++c) image[r * w + c] = 0.0;
}

Tensor cutout(const Tensor& image_hw, int64_t size, const rng::Key& key, uint64_t counter_base) {
    if (image_hw.shape.size() != 2) throw ValueError("cutout: expected H×W image");
    int64_t h = image_hw.shape[0], w = image_hw.shape[1];
    if (size > std::min(h, w)) throw ValueError("cutout: size exceeds image side");
    Tensor out = image_hw;
    if (size <= 0) return out;
    int64_t cy = (int64_t)rng::below(key, counter_base, (uint64_t)h);
    int64_t cx = (int64_t)rng::below(key, counter_base + 1, (uint64_t)w);
    cutout_at(out.data.data(), h, w, size, cy, cx);
    return out;
}

namespace {

// Marsaglia-Tsang gamma; each (key, region) pair owns a disjoint counter
// range so rejection retries never collide with other draws.
double gamma_draw(double shape, const rng::Key& key, uint64_t region) {
    uint64_t normal_base = region * 8192;          // normal(i) burns raw counters 2i, 2i+1
    uint64_t uniform_base = region * 16384 + 8192; // raw counters
    if (shape < 1.0) {
        double u = rng::uniform01(key, uniform_base + 4000);
        if (u < 1e-300) u = 1e-300;
        return gamma_draw(shape + 1.0, key, region) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (uint64_t attempt = 0; attempt < 1000; ++attempt) {
        double x = rng::normal(key, normal_base + attempt);
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = rng::uniform01(key, uniform_base + attempt);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(std::max(u, 1e-300)) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
    throw InternalError("gamma_draw: rejection loop exhausted");
}

}  // namespace

double beta_draw(double alpha, double beta, const rng::Key& key, uint64_t slot) {
    if (alpha == 1.0 && beta == 1.0) return rng::uniform01(key, slot * 32768 + 31000);
    double ga = gamma_draw(alpha, key, 2 * slot);
    double gb = gamma_draw(beta, key, 2 * slot + 1);
    double s = ga + gb;
    return s > 0.0 ? ga / s : 0.5;
}

MixResult mixup(const Tensor& x1, int32_t y1, const Tensor& x2, int32_t y2, double mixup_alpha,
                const rng::Key& key, uint64_t slot) {
    if (!x1.same_shape(x2)) throw ValueError("mixup: shape mismatch");
    double lam = beta_draw(mixup_alpha, mixup_alpha, key, slot);
    MixResult r;
    r.x = Tensor(x1.shape);
    for (int64_t i = 0; i < x1.numel(); ++i)
        r.x.data[i] = lam * x1.data[i] + (1.0 - lam) * x2.data[i];
    r.label_a = y1;
    r.label_b = y2;
    r.weight_a = lam;
    return r;
}

MixResult cutmix(const Tensor& x1_hw, int32_t y1, const Tensor& x2_hw, int32_t y2,
                 const rng::Key& key, uint64_t slot) {
    if (!x1_hw.same_shape(x2_hw)) throw ValueError("cutmix: shape mismatch");
    if (x1_hw.shape.size() != 2) throw ValueError("cutmix: expected H×W images");
    int64_t h = x1_hw.shape[0], w = x1_hw.shape[1];
    double lam = beta_draw(1.0, 1.0, key, slot);
    double ratio = std::sqrt(1.0 - lam);
    int64_t ph = (int64_t)std::floor((double)h * ratio);
    int64_t pw = (int64_t)std::floor((double)w * ratio);
    int64_t cy = (int64_t)rng::below(key, slot * 32768 + 31001, (uint64_t)h);
    int64_t cx = (int64_t)rng::below(key, slot * 32768 + 31002, (uint64_t)w);
    int64_t r0 = std::max<int64_t>(0, cy - ph / 2), r1 = std::min(h, cy - ph / 2 + ph);
    int64_t c0 = std::max<int64_t>(0, cx - pw / 2), c1 = std::min(w, cx - pw / 2 + pw);

    MixResult r;
    r.x = x1_hw;
    for (int64_t i = r0; i < r1; ++i)
        for (int64_t j = c0; j < c1; ++j) r.x.data[i * w + j] = x2_hw.data[i * w + j];
    int64_t area = std::max<int64_t>(0, r1 - r0) * std::max<int64_t>(0, c1 - c0);
    double frac = (double)area / (double)(h * w);
    r.label_a = y1;
    r.label_b = y2;
    r.weight_a = 1.0 - frac;
    return r;
}

AugmentedBatch augment_batch(const Tensor& x, const std::vector<int32_t>& y, int64_t h, int64_t w,
                             const AugmentSpec& spec, const rng::Key& key) {
    if (x.shape.size() != 2) throw ValueError("augment_batch: expected [B,D]");
    int64_t B = x.shape[0], D = x.shape[1];
    if (h * w != D) throw ValueError("augment_batch: H*W does not match feature width");
    if ((int64_t)y.size() != B) throw ValueError("augment_batch: label count mismatch");
    spec.validate(h, w);

    AugmentedBatch out;
    out.x = x;
    out.y_a = y;
    out.y_b = y;
    out.weight_a = 1.0;
    out.dominant = y;
    if (spec.kind == AugKind::none) return out;

    if (spec.kind == AugKind::cutout) {
        int64_t size = spec.resolved_cutout(h, w);
        const uint64_t centers = 1ULL << 21;
        for (int64_t r = 0; r < B; ++r) {
            int64_t cy = (int64_t)rng::below(key, centers + 2 * (uint64_t)r, (uint64_t)h);
            int64_t cx = (int64_t)rng::below(key, centers + 2 * (uint64_t)r + 1, (uint64_t)w);
            cutout_at(out.x.data.data() + r * D, h, w, size, cy, cx);
        }
        return out;
    }

    // pairing permutation for the mixing augmentations
    std::vector<int64_t> perm(B);
    for (int64_t i = 0; i < B; ++i) perm[i] = i;
    const uint64_t shuffle_base = 1ULL << 20;
    for (int64_t i = B - 1; i > 0; --i) {
        int64_t j = (int64_t)rng::below(key, shuffle_base + (uint64_t)i, (uint64_t)(i + 1));
        std::swap(perm[i], perm[j]);
    }

    if (spec.kind == AugKind::mixup) {
        double lam = beta_draw(spec.mixup_alpha, spec.mixup_alpha, key, 0);
        for (int64_t r = 0; r < B; ++r) {
            const double* a = x.data.data() + r * D;
            const double* b = x.data.data() + perm[r] * D;
            double* o = out.x.data.data() + r * D;
            for (int64_t i = 0; i < D; ++i) o[i] = lam * a[i] + (1.0 - lam) * b[i];
            out.y_b[r] = y[perm[r]];
        }
        out.weight_a = lam;
    } else {  // cutmix: one patch geometry per batch
        double lam = beta_draw(1.0, 1.0, key, 0);
        double ratio = std::sqrt(1.0 - lam);
        int64_t ph = (int64_t)std::floor((double)h * ratio);
        int64_t pw = (int64_t)std::floor((double)w * ratio);
        int64_t cy = (int64_t)rng::below(key, 31001, (uint64_t)h);
        int64_t cx = (int64_t)rng::below(key, 31002, (uint64_t)w);
        int64_t r0 = std::max<int64_t>(0, cy - ph / 2), r1 = std::min(h, cy - ph / 2 + ph);
        int64_t c0 = std::max<int64_t>(0, cx - pw / 2), c1 = std::min(w, cx - pw / 2 + pw);
        int64_t area = std::max<int64_t>(0, r1 - r0) * std::max<int64_t>(0, c1 - c0);
        for (int64_t r = 0; r < B; ++r) {
            const double* b = x.data.data() + perm[r] * D;
            double* o = out.x.data.data() + r * D;
            for (int64_t i = r0; i < r1; ++i)
                for (int64_t j = c0; j < c1; ++j) o[i * w + j] = b[i * w + j];
            out.y_b[r] = y[perm[r]];
        }
        out.weight_a = 1.0 - (double)area / (double)(h * w);
    }

    for (int64_t r = 0; r < B; ++r)
        out.dominant[r] = out.weight_a >= 0.5 ? out.y_a[r] : out.y_b[r];
    return out;
}

}  // namespace fatlab
