#ifndef PAIRCLF_CORE_TENSOR_HPP
#define PAIRCLF_CORE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pairclf/core/error.hpp"

namespace pairclf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Cache-line aligned allocation. Eigen's vectorized reductions peel
/// elements up to the first aligned address, so a fixed alignment keeps
/// floating-point results independent of where the heap places a buffer.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Dense row-major array with an explicit shape. Extents are positive.
template <class T>
class Tensor {
public:
    using value_type = T;
    using Storage = std::vector<T, AlignedAllocator<T>>;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}

    Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (shape_size(shape_) != data_.size())
            throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }
    /// Plain copy of the values.
    std::vector<T> values() const { return {data_.begin(), data_.end()}; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Number of elements per index of the leading axis.
    std::size_t row_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

    Tensor reshaped(Shape shape) const {
        Tensor out(std::move(shape), data_);
        return out;
    }

    template <class U>
    Tensor<U> cast() const {
        typename Tensor<U>::Storage out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    /// Copy of rows [begin, end) along the leading axis.
    Tensor slice_rows(std::size_t begin, std::size_t end) const {
        Shape s = shape_;
        s[0] = end - begin;
        const std::size_t rs = row_size();
        return Tensor(std::move(s), Storage(data_.begin() + static_cast<std::ptrdiff_t>(begin * rs),
                                                   data_.begin() + static_cast<std::ptrdiff_t>(end * rs)));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_extents() const {
        for (auto e : shape_)
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    }

    Shape shape_;
    Storage data_;
};

/// Stack equally shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack(std::span<const Tensor<T>* const> items) {
    if (items.empty()) throw ShapeError("stack of zero tensors");
    const Shape& inner = items.front()->shape();
    Shape s{items.size()};
    s.insert(s.end(), inner.begin(), inner.end());
    typename Tensor<T>::Storage data;
    data.reserve(shape_size(s));
    for (const auto* t : items) {
        if (t->shape() != inner)
            throw ShapeError("stack: shape " + shape_str(t->shape()) + " differs from " + shape_str(inner));
        data.insert(data.end(), t->data().begin(), t->data().end());
    }
    return Tensor<T>(std::move(s), std::move(data));
}

/// Pairwise summation: a fixed reduction tree, independent of thread count.
template <class T>
double pairwise_sum(std::span<const T> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (auto v : values) s += static_cast<double>(v);
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

template <class T>
double pairwise_sum(const std::vector<T>& values) {
    return pairwise_sum(std::span<const T>(values));
}

} // namespace pairclf

#endif // PAIRCLF_CORE_TENSOR_HPP
