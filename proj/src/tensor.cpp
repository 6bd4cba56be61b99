#include "stylemill/tensor.hpp"

#include <Eigen/Core>
#include <cmath>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        SM_CHECK(d >= 0, "negative dim in shape ", shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    SM_CHECK(shape_numel(shape_) == static_cast<int64_t>(data_.size()),
             "tensor data size ", data_.size(), " does not match shape ", shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    SM_CHECK(shape_numel(new_shape) == numel(),
             "reshape ", shape_str(shape_), " -> ", shape_str(new_shape), ": element count differs");
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

void Tensor::add_(const Tensor& o) {
    SM_CHECK(same_shape(o), "add_: shape mismatch ", shape_str(shape_), " vs ", shape_str(o.shape_));
    for (int64_t i = 0; i < numel(); ++i) data_[static_cast<size_t>(i)] += o[i];
}

void Tensor::add_scaled_(const Tensor& o, double s) {
    SM_CHECK(numel() == o.numel(), "add_scaled_: size mismatch");
    for (int64_t i = 0; i < numel(); ++i) data_[static_cast<size_t>(i)] += s * o[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    SM_CHECK(a.numel() == b.numel(), "max_abs_diff: size mismatch ",
             shape_str(a.shape()), " vs ", shape_str(b.shape()));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double dot(const Tensor& a, const Tensor& b) {
    SM_CHECK(a.numel() == b.numel(), "dot: size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double cosine(const Tensor& a, const Tensor& b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void matmul_into(Tensor& out, const Tensor& a, const Tensor& b) {
    const int64_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    SM_CHECK(k == k2, "matmul: inner dims differ, ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    SM_CHECK(out.rows() == m && out.cols() == n, "matmul: bad output shape");
    Eigen::Map<const EMat> ma(a.data(), m, k);
    Eigen::Map<const EMat> mb(b.data(), k, n);
    Eigen::Map<EMat> mo(out.data(), m, n);
    mo.noalias() = ma * mb;
}

Tensor randn(Shape shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

}  // namespace sm
