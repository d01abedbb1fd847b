#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "finr/common.hpp"

namespace finr {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

inline size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }
inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Node;
class Tensor;

namespace detail {

struct TensorImpl {
    Shape shape;
    DType dtype = DType::F32;
    std::vector<std::byte> bytes;
    bool requires_grad = false;
    bool traced = false;
    std::shared_ptr<Node> node;  // producer; null for leaves

    int64_t numel() const { return static_cast<int64_t>(bytes.size() / dtype_size(dtype)); }
};

}  // namespace detail

// Dense row-major n-dimensional array, the substrate for all computation.
// Value-semantics handle: copies share the underlying buffer. Complex data is
// represented as a real tensor with a trailing axis of extent 2 (re, im).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dt = DType::F32);
    static Tensor full(Shape shape, double value, DType dt = DType::F32);
    static Tensor scalar(double value, DType dt = DType::F32);
    // Copies the given values (converted to dtype).
    static Tensor from_values(Shape shape, std::span<const double> values, DType dt = DType::F32);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t extent(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
    int64_t numel() const { return impl_->numel(); }
    DType dtype() const { return impl_->dtype; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v);
    bool traced() const { return impl_->traced; }
    Tensor& set_traced(bool v) { impl_->traced = v; return *this; }

    template <class T>
    std::span<T> data() {
        check_type<T>();
        return {reinterpret_cast<T*>(impl_->bytes.data()), static_cast<size_t>(numel())};
    }
    template <class T>
    std::span<const T> data() const {
        check_type<T>();
        return {reinterpret_cast<const T*>(impl_->bytes.data()), static_cast<size_t>(numel())};
    }

    // Generic (slow) element access by flat index.
    double at(int64_t flat) const;
    void set(int64_t flat, double value);
    // Value of a one-element tensor.
    double item() const;

    // Deep copy without graph attachment.
    Tensor clone() const;
    // Same buffer, detached from the graph and untraced.
    Tensor detach() const;
    // Buffer copy converted to dtype; never attached to the graph.
    Tensor astype(DType dt) const;

    bool all_finite() const;

    const std::shared_ptr<Node>& node() const { return impl_->node; }
    void set_node(std::shared_ptr<Node> n) { impl_->node = std::move(n); }
    const detail::TensorImpl* key() const { return impl_.get(); }

private:
    template <class T>
    void check_type() const {
        static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
        const DType want = std::is_same_v<T, float> ? DType::F32 : DType::F64;
        if (!impl_ || impl_->dtype != want)
            throw DomainError(std::string("tensor dtype is ") + (impl_ ? dtype_name(impl_->dtype) : "undefined") +
                              ", accessed as " + dtype_name(want));
    }

    std::shared_ptr<detail::TensorImpl> impl_;
    friend Tensor make_tensor(Shape, DType);
};

// Allocates an uninitialized-zero tensor (internal builder).
Tensor make_tensor(Shape shape, DType dt);

// While a guard is alive on this thread, no graph nodes are recorded.
// Backward passes and plain numeric code run under a guard.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    static bool active();
};

}  // namespace finr
