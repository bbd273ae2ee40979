#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace sab {

/// Dense 2-D matrix of 64-bit floats, row-major. The single value type the
/// engine passes around; shapes are always explicit, no broadcasting.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols);
    Tensor(int rows, int cols, std::initializer_list<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator()(int r, int c) { return data_[std::size_t(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[std::size_t(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    void fill(double v);
    void zero() { fill(0.0); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;
    std::string shape_str() const;  // e.g. "3x4"

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// Throws std::invalid_argument naming both shapes when a/b differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace sab
