#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fatlab/rng.hpp"
#include "fatlab/tensor.hpp"

namespace fatlab {

struct Dataset {
    int64_t n = 0;
    int64_t dim = 0;
    int64_t num_classes = 0;
    int64_t image_h = 1;
    int64_t image_w = 0;
    Tensor x;  // [n, dim], values in [0,1]
    std::vector<int32_t> y;

    Tensor gather(const std::vector<int64_t>& rows) const;
    std::vector<int32_t> gather_labels(const std::vector<int64_t>& rows) const;
    Dataset take(int64_t start, int64_t count) const;
};

enum class DataSource { idx_files, synthetic_blobs };

struct DatasetDescriptor {
    DataSource source = DataSource::synthetic_blobs;
    // idx_files
    std::string images_path;
    std::string labels_path;
    // synthetic_blobs
    int64_t n = 1000;
    int64_t dim = 2;
    int64_t classes = 2;
    double margin = 0.3;
    uint64_t seed = 7;
};

// Gaussian clusters in the unit box. Class k owns coordinate axis k: its
// cluster sits 2*margin higher along that axis than every other class, noise
// is clamped to ±margin/2 per coordinate, so any two samples from distinct
// classes are at least `margin` apart in L-inf (hence also L2), and the
// axis-indicator linear classifier separates them with logit gap ≥ margin.
Dataset make_blobs(int64_t n, int64_t dim, int64_t classes, double margin, uint64_t seed);

Tensor load_idx_images(const std::string& path, int64_t* image_h, int64_t* image_w);
std::vector<int32_t> load_idx_labels(const std::string& path);

Dataset load_dataset(const DatasetDescriptor& desc);

}  // namespace fatlab
