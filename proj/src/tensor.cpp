#include "sab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sab {

Tensor::Tensor(int rows, int cols)
    : rows_(rows), cols_(cols), data_(std::size_t(rows) * std::size_t(cols), 0.0) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative shape");
}

Tensor::Tensor(int rows, int cols, std::initializer_list<double> values) : Tensor(rows, cols) {
    if (values.size() != data_.size())
        throw std::invalid_argument("Tensor: initializer size does not match " + shape_str());
    std::copy(values.begin(), values.end(), data_.begin());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace sab
