#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace probcontour {

/// Dense row-major 64-bit float tensor. Invariant: data.size() equals the
/// product of shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims);
    Tensor(std::vector<int> dims, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

    int size() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return data.size() == 1 && shape.empty(); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }

    /// 2-D access, row-major.
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

    void fill(double v);
    bool all_finite() const;
    std::string shape_str() const;
};

int shape_product(const std::vector<int>& dims);
std::string shape_to_string(const std::vector<int>& dims);

}  // namespace probcontour
