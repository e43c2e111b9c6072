#pragma once

// Dense row-major tensor of doubles. Tiny on purpose: the model shapes are
// rank <= 3 almost everywhere, so indexing helpers stop at four axes.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "hocslm/common.hpp"

namespace hocslm {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        v_.assign(count(shape_), fill);
    }

    static std::size_t count(const Shape& s) {
        std::size_t n = 1;
        for (int d : s) n *= static_cast<std::size_t>(d);
        return n;
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

    static Tensor scalar(double v) {
        Tensor t(Shape{});
        t.v_ = {v};
        return t;
    }

    static Tensor from(Shape s, std::vector<double> data) {
        Tensor t;
        t.shape_ = std::move(s);
        if (data.size() != count(t.shape_))
            throw ShapeMismatch("from(): data size does not match " + shape_str(t.shape_));
        t.v_ = std::move(data);
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const noexcept { return v_.size(); }
    bool empty() const noexcept { return v_.empty(); }

    double* data() noexcept { return v_.data(); }
    const double* data() const noexcept { return v_.data(); }

    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    double& at(int i) { return v_[static_cast<std::size_t>(i)]; }
    double at(int i) const { return v_[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return v_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return v_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return v_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return v_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return v_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        return v_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    double item() const {
        if (v_.size() != 1) throw ShapeMismatch("item() on tensor with " + shape_str(shape_));
        return v_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void add_(const Tensor& o) {
        if (!same_shape(o)) throw ShapeMismatch("add_: " + shape_str(shape_) + " vs " + shape_str(o.shape_));
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    }

    void axpy_(double a, const Tensor& o) {
        if (!same_shape(o)) throw ShapeMismatch("axpy_: " + shape_str(shape_) + " vs " + shape_str(o.shape_));
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += a * o.v_[i];
    }

    void scale_(double a) {
        for (double& x : v_) x *= a;
    }

    void fill_(double a) { std::fill(v_.begin(), v_.end(), a); }

    double sum() const { return std::accumulate(v_.begin(), v_.end(), 0.0); }

    double sq_norm() const {
        double s = 0.0;
        for (double x : v_) s += x * x;
        return s;
    }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    Tensor reshaped(Shape s) const {
        if (count(s) != v_.size())
            throw ShapeMismatch("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor t;
        t.shape_ = std::move(s);
        t.v_ = v_;
        return t;
    }

private:
    Shape shape_;
    std::vector<double> v_;
};

inline Tensor random_gauss(Shape s, Rng& rng, double stddev) {
    Tensor t(std::move(s));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gauss() * stddev;
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("max_abs_diff shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace hocslm
