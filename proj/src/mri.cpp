#include "finr/mri.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

#include "kernels.hpp"
#include "node_util.hpp"

namespace finr {

namespace {

// FFTW plan cache keyed by (nx, ny, sign). Plans are created with
// FFTW_ESTIMATE (size-only heuristics, so planning is deterministic) and
// executed on external buffers. All transforms run in double; f32 tensors are
// widened per plane, which keeps one plan set and one rounding behavior.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache c;
        return c;
    }

    fftw_plan get(int64_t nx, int64_t ny, int sign) {
        std::lock_guard<std::mutex> lk(mu_);
        const Key key{nx, ny, sign};
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<fftw_complex> scratch(static_cast<size_t>(nx * ny));
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(nx), static_cast<int>(ny), scratch.data(), scratch.data(),
                                       sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p) throw NumericalError("fftw plan creation failed");
        plans_.emplace(key, p);
        return p;
    }

private:
    using Key = std::tuple<int64_t, int64_t, int>;
    std::map<Key, fftw_plan> plans_;
    std::mutex mu_;
};

inline int64_t shift_fwd(int64_t i, int64_t n) { return (i + n / 2) % n; }  // roll by floor(n/2)

// Centered orthonormal transform of all (axis_x, axis_y) planes of x.
// For each plane: scratch = ifftshift(plane); FFT; plane' = fftshift * scale.
template <class T>
void fft_planes(const Tensor& x, Tensor& out, int axis_x, int axis_y, bool inverse) {
    const Shape& s = x.shape();
    const int rank = x.rank();
    const int64_t nx = s[static_cast<size_t>(axis_x)];
    const int64_t ny = s[static_cast<size_t>(axis_y)];
    const auto strides = kernels::contiguous_strides(s);
    const int64_t sx = strides[static_cast<size_t>(axis_x)];
    const int64_t sy = strides[static_cast<size_t>(axis_y)];

    // Enumerate plane base offsets: iterate all dims except axis_x, axis_y
    // and the trailing complex axis.
    std::vector<int64_t> loop_dims, loop_strides;
    for (int d = 0; d + 1 < rank; ++d) {
        if (d == axis_x || d == axis_y) continue;
        loop_dims.push_back(s[static_cast<size_t>(d)]);
        loop_strides.push_back(strides[static_cast<size_t>(d)]);
    }
    int64_t n_planes = 1;
    for (int64_t e : loop_dims) n_planes *= e;

    fftw_plan plan = PlanCache::instance().get(nx, ny, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
    const double scale = 1.0 / std::sqrt(static_cast<double>(nx * ny));

    const T* src = x.data<T>().data();
    T* dst = out.data<T>().data();

    parallel_for_chunks(n_planes, 8, [&](int64_t, int64_t p0, int64_t p1) {
        std::vector<fftw_complex> scratch(static_cast<size_t>(nx * ny));
        for (int64_t p = p0; p < p1; ++p) {
            // decompose plane index into the base offset
            int64_t base = 0, rem = p;
            for (size_t d = loop_dims.size(); d-- > 0;) {
                base += (rem % loop_dims[d]) * loop_strides[d];
                rem /= loop_dims[d];
            }
            // gather with ifftshift: scratch[i,j] = plane[(i+floor(nx/2))%nx, ...]
            for (int64_t i = 0; i < nx; ++i) {
                const int64_t pi = shift_fwd(i, nx);
                for (int64_t j = 0; j < ny; ++j) {
                    const int64_t pj = shift_fwd(j, ny);
                    const int64_t off = base + pi * sx + pj * sy;
                    scratch[static_cast<size_t>(i * ny + j)][0] = static_cast<double>(src[off]);
                    scratch[static_cast<size_t>(i * ny + j)][1] = static_cast<double>(src[off + 1]);
                }
            }
            fftw_execute_dft(plan, scratch.data(), scratch.data());
            // scatter with fftshift and orthonormal scale
            for (int64_t i = 0; i < nx; ++i) {
                for (int64_t j = 0; j < ny; ++j) {
                    const int64_t oi = shift_fwd(i, nx);
                    const int64_t oj = shift_fwd(j, ny);
                    const int64_t off = base + oi * sx + oj * sy;
                    dst[off] = static_cast<T>(scratch[static_cast<size_t>(i * ny + j)][0] * scale);
                    dst[off + 1] = static_cast<T>(scratch[static_cast<size_t>(i * ny + j)][1] * scale);
                }
            }
        }
    });
}

class Fft2Node final : public Node {
public:
    Fft2Node(std::vector<Tensor> in, int ax, int ay, bool inverse)
        : Node(std::move(in)), ax_(ax), ay_(ay), inverse_(inverse) {}
    std::string_view name() const override { return "fft2_centered"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        // Unitary transform: adjoint = inverse.
        sink.add(inputs_[0], fft2_centered(g, ax_, ay_, !inverse_));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? fft2_centered(t[0], ax_, ay_, inverse_) : Tensor{};
    }
    int ax_, ay_;
    bool inverse_;
};

void check_complex_trailing(const Tensor& t, const char* what) {
    if (t.rank() < 1 || t.extent(t.rank() - 1) != 2)
        throw ShapeError(std::string(what) + ": expected trailing complex axis, got " + shape_str(t.shape()));
}

}  // namespace

Tensor fft2_centered(const Tensor& x, int axis_x, int axis_y, bool inverse) {
    check_complex_trailing(x, "fft2_centered");
    if (axis_x == axis_y || axis_x < 0 || axis_y < 0 || axis_x >= x.rank() - 1 || axis_y >= x.rank() - 1)
        throw ShapeError("fft2_centered: bad axes " + std::to_string(axis_x) + "," + std::to_string(axis_y) +
                         " for " + shape_str(x.shape()));
    Tensor out = make_tensor(x.shape(), x.dtype());
    kernels::dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        fft_planes<T>(x, out, axis_x, axis_y, inverse);
    });
    attach_node<Fft2Node>(out, {x}, axis_x, axis_y, inverse);
    return out;
}

Tensor apply_sensitivities(const Tensor& image, const Tensor& maps) {
    if (image.rank() != 4 || image.extent(3) != 2)
        throw ShapeError("apply_sensitivities: image must be [Nx,Ny,Nt,2], got " + shape_str(image.shape()));
    if (maps.rank() != 4 || maps.extent(3) != 2)
        throw ShapeError("apply_sensitivities: maps must be [Nc,Nx,Ny,2], got " + shape_str(maps.shape()));
    if (maps.extent(1) != image.extent(0) || maps.extent(2) != image.extent(1))
        throw ShapeError("apply_sensitivities: grid mismatch " + shape_str(image.shape()) + " vs " +
                         shape_str(maps.shape()));
    // maps [Nc,Nx,Ny,2] -> [Nc,Nx,Ny,1,2]; image -> [1,Nx,Ny,Nt,2]
    Tensor m = reshape(maps, {maps.extent(0), maps.extent(1), maps.extent(2), 1, 2});
    Tensor im = reshape(image, {1, image.extent(0), image.extent(1), image.extent(2), 2});
    return complex_mul(m, im);
}

Tensor mask_broadcast(const Tensor& mask) {
    if (mask.rank() != 3) throw ShapeError("mask must be [Nx,Ny,Nt], got " + shape_str(mask.shape()));
    return reshape(mask, {1, mask.extent(0), mask.extent(1), mask.extent(2), 1});
}

Tensor forward_operator(const Tensor& image, const KSpaceDataset& ds) {
    Tensor coil_images = apply_sensitivities(image, ds.maps);
    Tensor k = fft2_centered(coil_images, 1, 2, false);
    return mul(k, mask_broadcast(ds.mask));
}

Tensor adjoint_operator(const Tensor& y, const KSpaceDataset& ds) {
    Tensor masked = mul(y, mask_broadcast(ds.mask));
    Tensor imgs = fft2_centered(masked, 1, 2, true);
    Tensor m = reshape(ds.maps, {ds.maps.extent(0), ds.maps.extent(1), ds.maps.extent(2), 1, 2});
    Tensor weighted = complex_mul(complex_conj(m), imgs);  // [Nc,Nx,Ny,Nt,2]
    return sum(weighted, 0, false);
}

void KSpaceDataset::validate() const {
    if (y.rank() != 5 || y.extent(4) != 2) throw ShapeError("dataset: y must be [Nc,Nx,Ny,Nt,2], got " + shape_str(y.shape()));
    if (mask.shape() != Shape{nx(), ny(), nt()})
        throw ShapeError("dataset: mask shape " + shape_str(mask.shape()) + " does not match y " + shape_str(y.shape()));
    if (maps.shape() != Shape{nc(), nx(), ny(), 2})
        throw ShapeError("dataset: maps shape " + shape_str(maps.shape()) + " does not match y " + shape_str(y.shape()));

    for (int64_t i = 0; i < mask.numel(); ++i) {
        const double v = mask.at(i);
        if (v != 0.0 && v != 1.0) throw ContractError("dataset: mask entry " + std::to_string(v) + " not in {0,1}");
    }
    // y must be zero wherever the mask is zero
    const int64_t plane = nx() * ny() * nt();
    for (int64_t c = 0; c < nc(); ++c)
        for (int64_t i = 0; i < plane; ++i) {
            if (mask.at(i) == 0.0) {
                if (y.at((c * plane + i) * 2) != 0.0 || y.at((c * plane + i) * 2 + 1) != 0.0)
                    throw ContractError("dataset: nonzero k-space sample outside the mask");
            }
        }
    // sum over coils of |maps|^2 == 1
    const int64_t px = nx() * ny();
    for (int64_t i = 0; i < px; ++i) {
        double sos = 0;
        for (int64_t c = 0; c < nc(); ++c) {
            const double re = maps.at((c * px + i) * 2), im = maps.at((c * px + i) * 2 + 1);
            sos += re * re + im * im;
        }
        if (sos > 0 && std::abs(sos - 1.0) > 1e-3)
            throw ContractError("dataset: sum-of-squares of maps is " + std::to_string(sos) + " at pixel " +
                                std::to_string(i));
    }
}

}  // namespace finr
