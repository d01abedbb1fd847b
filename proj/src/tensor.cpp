#include "finr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace finr {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor make_tensor(Shape shape, DType dt) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->dtype = dt;
    t.impl_->bytes.resize(static_cast<size_t>(shape_numel(t.impl_->shape)) * dtype_size(dt));
    return t;
}

Tensor Tensor::zeros(Shape shape, DType dt) { return make_tensor(std::move(shape), dt); }

Tensor Tensor::full(Shape shape, double value, DType dt) {
    Tensor t = make_tensor(std::move(shape), dt);
    const int64_t n = t.numel();
    if (dt == DType::F32) {
        auto d = t.data<float>();
        std::fill(d.begin(), d.end(), static_cast<float>(value));
    } else {
        auto d = t.data<double>();
        std::fill(d.begin(), d.end(), value);
    }
    (void)n;
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({}, value, dt); }

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dt) {
    Tensor t = make_tensor(std::move(shape), dt);
    if (static_cast<int64_t>(values.size()) != t.numel())
        throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(t.shape()));
    if (dt == DType::F32) {
        auto d = t.data<float>();
        for (size_t i = 0; i < values.size(); ++i) d[i] = static_cast<float>(values[i]);
    } else {
        auto d = t.data<double>();
        std::copy(values.begin(), values.end(), d.begin());
    }
    return t;
}

Tensor& Tensor::set_requires_grad(bool v) {
    if (v && impl_->node)
        throw ContractError("requires_grad can only be enabled on leaf tensors");
    impl_->requires_grad = v;
    return *this;
}

double Tensor::at(int64_t flat) const {
    return impl_->dtype == DType::F32 ? static_cast<double>(data<float>()[static_cast<size_t>(flat)])
                                      : data<double>()[static_cast<size_t>(flat)];
}

void Tensor::set(int64_t flat, double value) {
    if (impl_->dtype == DType::F32)
        data<float>()[static_cast<size_t>(flat)] = static_cast<float>(value);
    else
        data<double>()[static_cast<size_t>(flat)] = value;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return at(0);
}

Tensor Tensor::clone() const {
    Tensor t = make_tensor(impl_->shape, impl_->dtype);
    std::memcpy(t.impl_->bytes.data(), impl_->bytes.data(), impl_->bytes.size());
    return t;
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->dtype = impl_->dtype;
    t.impl_->bytes = impl_->bytes;  // copy of bytes keeps detach safe under later in-place updates
    return t;
}

Tensor Tensor::astype(DType dt) const {
    if (dt == impl_->dtype) return clone();
    Tensor t = make_tensor(impl_->shape, dt);
    const int64_t n = numel();
    if (dt == DType::F64) {
        auto src = data<float>();
        auto dst = t.data<double>();
        for (int64_t i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = src[static_cast<size_t>(i)];
    } else {
        auto src = data<double>();
        auto dst = t.data<float>();
        for (int64_t i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = static_cast<float>(src[static_cast<size_t>(i)]);
    }
    return t;
}

bool Tensor::all_finite() const {
    const int64_t n = numel();
    if (impl_->dtype == DType::F32) {
        auto d = data<float>();
        for (int64_t i = 0; i < n; ++i)
            if (!std::isfinite(d[static_cast<size_t>(i)])) return false;
    } else {
        auto d = data<double>();
        for (int64_t i = 0; i < n; ++i)
            if (!std::isfinite(d[static_cast<size_t>(i)])) return false;
    }
    return true;
}

namespace {
thread_local int g_no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool NoGradGuard::active() { return g_no_grad_depth > 0; }

}  // namespace finr
