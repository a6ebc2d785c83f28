#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ifom/error.hpp"

namespace ifom {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

/// Dense row-major array of doubles. Value semantics; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw InvalidInput("tensor data size " + std::to_string(data_.size()) +
                               " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& vec() noexcept { return data_; }
    const std::vector<double>& vec() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // 4-D accessors for (N, C, H, W) layouts.
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw InvalidInput("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Slice along the leading axis: rows [begin, end).
    Tensor rows(std::size_t begin, std::size_t end) const {
        Shape s = shape_;
        std::size_t stride = numel() / shape_[0];
        s[0] = end - begin;
        return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                        data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
    }

    bool operator==(const Tensor& o) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stacks equally shaped tensors along a new leading axis.
inline Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw InvalidInput("stack of zero tensors");
    Shape s{items.size()};
    s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
    std::vector<double> out;
    out.reserve(shape_numel(s));
    for (const auto& t : items) {
        if (t.shape() != items[0].shape())
            throw InvalidInput("stack: shape " + shape_str(t.shape()) + " vs " + shape_str(items[0].shape()));
        out.insert(out.end(), t.vec().begin(), t.vec().end());
    }
    return Tensor(std::move(s), std::move(out));
}

/// Concatenates along the leading axis.
inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
        throw InvalidInput("concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Shape s = a.shape();
    s[0] += b.dim(0);
    std::vector<double> out(a.vec());
    out.insert(out.end(), b.vec().begin(), b.vec().end());
    return Tensor(std::move(s), std::move(out));
}

inline double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, v < 0 ? -v : v);
    return m;
}

}  // namespace ifom
