#include "probcontour/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "probcontour/errors.hpp"

namespace probcontour {

int shape_product(const std::vector<int>& dims) {
    int n = 1;
    for (const int d : dims) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(dims));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<int> dims)
    : shape(std::move(dims)), data(static_cast<std::size_t>(shape_product(shape)), 0.0) {}

Tensor::Tensor(std::vector<int> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    if (static_cast<int>(data.size()) != shape_product(shape)) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

}  // namespace probcontour
