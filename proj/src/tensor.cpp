#include "fatlab/tensor.hpp"

#include <sstream>

namespace fatlab {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shp) : shape(std::move(shp)) {
    data.assign(shape_numel(shape), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shp, double fill) : shape(std::move(shp)) {
    data.assign(shape_numel(shape), fill);
}

Tensor::Tensor(std::vector<int64_t> shp, std::vector<double> values)
    : shape(std::move(shp)), data(std::move(values)) {
    if ((int64_t)data.size() != shape_numel(shape))
        throw ValueError("tensor init: " + std::to_string(data.size()) +
                         " values for shape " + shape_to_string(shape));
}

int64_t Tensor::numel() const { return shape_numel(shape); }

void Tensor::alloc_grad() { grad.assign(data.size(), 0.0); }

void Tensor::zero_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    else grad.assign(grad.size(), 0.0);
}

bool Tensor::same_shape(const Tensor& other) const { return shape == other.shape; }

std::string Tensor::shape_str() const { return shape_to_string(shape); }

double& Tensor::at(int64_t r, int64_t c) { return data[r * cols() + c]; }
double Tensor::at(int64_t r, int64_t c) const { return data[r * cols() + c]; }

}  // namespace fatlab
