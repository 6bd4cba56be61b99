#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sm {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);

// Dense row-major double tensor. All model math runs in double so that
// finite-difference gradient checks are meaningful.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const Shape& shape() const { return shape_; }

    // 2D view: all leading dims collapsed into rows, last dim = cols.
    int64_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
    int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    Tensor reshaped(Shape new_shape) const;

    bool all_finite() const;
    double max_abs() const;

    void fill(double v);
    void add_(const Tensor& o);             // elementwise +=
    void add_scaled_(const Tensor& o, double s);

private:
    Shape shape_;
    std::vector<double> data_;
};

int64_t shape_numel(const Shape& s);

// Elementwise max |a-b|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
// Cosine similarity; returns 0 when either vector has zero norm.
double cosine(const Tensor& a, const Tensor& b);

// C = A * B for 2D row-major matrices (collapsed views are fine).
void matmul_into(Tensor& out, const Tensor& a, const Tensor& b);

Tensor randn(Shape shape, class Rng& rng, double stddev = 1.0);

}  // namespace sm
