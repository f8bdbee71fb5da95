#include "fatlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fatlab {

Tensor Dataset::gather(const std::vector<int64_t>& rows) const {
    Tensor out({(int64_t)rows.size(), dim});
    for (size_t r = 0; r < rows.size(); ++r) {
        int64_t i = rows[r];
        if (i < 0 || i >= n) throw ValueError("dataset gather: row out of range");
        std::copy(x.data.begin() + i * dim, x.data.begin() + (i + 1) * dim,
                  out.data.begin() + (int64_t)r * dim);
    }
    return out;
}

std::vector<int32_t> Dataset::gather_labels(const std::vector<int64_t>& rows) const {
    std::vector<int32_t> out(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        int64_t i = rows[r];
        if (i < 0 || i >= n) throw ValueError("dataset gather: row out of range");
        out[r] = y[i];
    }
    return out;
}

Dataset Dataset::take(int64_t start, int64_t count) const {
    if (start < 0 || count < 0 || start + count > n) throw ValueError("dataset take: bad range");
    Dataset out;
    out.n = count;
    out.dim = dim;
    out.num_classes = num_classes;
    out.image_h = image_h;
    out.image_w = image_w;
    out.x = Tensor({count, dim});
    std::copy(x.data.begin() + start * dim, x.data.begin() + (start + count) * dim,
              out.x.data.begin());
    out.y.assign(y.begin() + start, y.begin() + start + count);
    return out;
}

Dataset make_blobs(int64_t n, int64_t dim, int64_t classes, double margin, uint64_t seed) {
    if (n < 1) throw ValueError("make_blobs: n must be >= 1");
    if (classes < 2) throw ValueError("make_blobs: need at least 2 classes");
    if (dim < classes) throw ValueError("make_blobs: dim must be >= classes (one axis per class)");
    if (!(margin > 0.0) || !std::isfinite(margin)) throw ValueError("make_blobs: margin must be > 0");
    // geometry: base level b on every coordinate, class axis raised by 2*margin,
    // noise clamped to ±margin/2; top sample coordinate is b + 2.5*margin
    double r = margin / 2.0;
    double b = 0.02 + r;
    if (b + 2.0 * margin + r > 0.98)
        throw ValueError("make_blobs: margin too large for the unit box (max ~0.32)");

    Dataset ds;
    ds.n = n;
    ds.dim = dim;
    ds.num_classes = classes;
    ds.image_h = 1;
    ds.image_w = dim;
    ds.x = Tensor({n, dim});
    ds.y.resize(n);

    rng::Key key{seed, rng::Stream::data_gen, 0, 0};
    double sigma = r / 3.0;
    for (int64_t i = 0; i < n; ++i) {
        int32_t k = (int32_t)(i % classes);
        ds.y[i] = k;
        double* row = ds.x.data.data() + i * dim;
        for (int64_t d = 0; d < dim; ++d) {
            double noise = sigma * rng::normal(key, (uint64_t)(i * dim + d));
            noise = std::clamp(noise, -r, r);
            double v = b + (d == k ? 2.0 * margin : 0.0) + noise;
            row[d] = std::clamp(v, 0.0, 1.0);
        }
    }
    return ds;
}

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size()) {
        char msg[256];
        std::snprintf(msg, sizeof msg, "%s: truncated at byte offset %zu (need 4 bytes, have %zu)",
                      path.c_str(), off, b.size() - std::min(b.size(), off));
        throw ValueError(msg);
    }
    return ((uint32_t)b[off] << 24) | ((uint32_t)b[off + 1] << 16) | ((uint32_t)b[off + 2] << 8) |
           (uint32_t)b[off + 3];
}

}  // namespace

Tensor load_idx_images(const std::string& path, int64_t* image_h, int64_t* image_w) {
    auto bytes = read_file_bytes(path);
    uint32_t magic = be32(bytes, 0, path);
    if (magic != 0x00000803u) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "%s: bad image magic 0x%08x at byte offset 0 (expected 0x00000803)",
                      path.c_str(), magic);
        throw ValueError(msg);
    }
    int64_t n = be32(bytes, 4, path);
    int64_t h = be32(bytes, 8, path);
    int64_t w = be32(bytes, 12, path);
    if (n < 1 || h < 1 || w < 1) throw ValueError(path + ": non-positive IDX dimensions");
    size_t need = 16 + (size_t)n * h * w;
    if (bytes.size() != need) {
        char msg[256];
        std::snprintf(msg, sizeof msg, "%s: expected %zu bytes for %lld x %lld x %lld, got %zu",
                      path.c_str(), need, (long long)n, (long long)h, (long long)w, bytes.size());
        throw ValueError(msg);
    }
    Tensor x({n, h * w});
    for (size_t i = 0; i < (size_t)(n * h * w); ++i) x.data[i] = bytes[16 + i] / 255.0;
    if (image_h) *image_h = h;
    if (image_w) *image_w = w;
    return x;
}

std::vector<int32_t> load_idx_labels(const std::string& path) {
    auto bytes = read_file_bytes(path);
    uint32_t magic = be32(bytes, 0, path);
    if (magic != 0x00000801u) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "%s: bad label magic 0x%08x at byte offset 0 (expected 0x00000801)",
                      path.c_str(), magic);
        throw ValueError(msg);
    }
    int64_t n = be32(bytes, 4, path);
    if (n < 1) throw ValueError(path + ": non-positive label count");
    if (bytes.size() != 8 + (size_t)n) {
        char msg[256];
        std::snprintf(msg, sizeof msg, "%s: expected %zu bytes for %lld labels, got %zu",
                      path.c_str(), 8 + (size_t)n, (long long)n, bytes.size());
        throw ValueError(msg);
    }
    std::vector<int32_t> y(n);
    for (int64_t i = 0; i < n; ++i) y[i] = bytes[8 + i];
    return y;
}

Dataset load_dataset(const DatasetDescriptor& desc) {
    if (desc.source == DataSource::synthetic_blobs)
        return make_blobs(desc.n, desc.dim, desc.classes, desc.margin, desc.seed);

    Dataset ds;
    ds.x = load_idx_images(desc.images_path, &ds.image_h, &ds.image_w);
    ds.y = load_idx_labels(desc.labels_path);
    ds.n = ds.x.shape[0];
    ds.dim = ds.x.shape[1];
    if ((int64_t)ds.y.size() != ds.n) {
        char msg[256];
        std::snprintf(msg, sizeof msg, "label count %zu does not match image count %lld",
                      ds.y.size(), (long long)ds.n);
        throw ValueError(msg);
    }
    int32_t maxl = 0;
    for (int32_t v : ds.y) maxl = std::max(maxl, v);
    ds.num_classes = std::max<int64_t>(2, (int64_t)maxl + 1);
    return ds;
}

}  // namespace fatlab
