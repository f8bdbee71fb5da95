#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fatlab {

// All numeric state lives in dense row-major double tensors. The optional
// grad buffer is allocated lazily and always matches data in length.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shp);
    Tensor(std::vector<int64_t> shp, double fill);
    Tensor(std::vector<int64_t> shp, std::vector<double> values);

    int64_t numel() const;
    void alloc_grad();
    void zero_grad();
    bool same_shape(const Tensor& other) const;
    std::string shape_str() const;

    double& at(int64_t r, int64_t c);
    double at(int64_t r, int64_t c) const;
    int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

// Thrown for caller mistakes: bad shapes, bad config values, malformed files.
struct ValueError : std::exception {
    std::string msg;
    explicit ValueError(std::string m) : msg(std::move(m)) {}
    const char* what() const noexcept override { return msg.c_str(); }
};

// Thrown when internal state goes bad (non-finite values, broken invariants).
struct InternalError : std::exception {
    std::string msg;
    explicit InternalError(std::string m) : msg(std::move(m)) {}
    const char* what() const noexcept override { return msg.c_str(); }
};

}  // namespace fatlab
