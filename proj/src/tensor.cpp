#include "gradmask/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace gradmask {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Dtype: return "dtype";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Contract: return "contract";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::Internal: return "internal";
    }
    return "unknown";
}

const char* dtype_name(Dtype dt) noexcept { return dt == Dtype::F32 ? "f32" : "f64"; }
std::size_t dtype_size(Dtype dt) noexcept { return dt == Dtype::F32 ? 4 : 8; }

Shape::Shape(std::initializer_list<std::uint32_t> dims) {
    if (dims.size() > kMaxRank) raise(ErrorCode::Shape, "rank exceeds 4");
    for (std::uint32_t d : dims) dims_[static_cast<std::size_t>(rank_++)] = d;
}

Shape::Shape(std::span<const std::uint32_t> dims) {
    if (dims.size() > kMaxRank) raise(ErrorCode::Shape, "rank exceeds 4");
    for (std::uint32_t d : dims) dims_[static_cast<std::size_t>(rank_++)] = d;
}

std::size_t Shape::numel() const noexcept {
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[static_cast<std::size_t>(i)];
    return n;
}

bool Shape::operator==(const Shape& other) const noexcept {
    if (rank_ != other.rank_) return false;
    for (int i = 0; i < rank_; ++i)
        if (dims_[static_cast<std::size_t>(i)] != other.dims_[static_cast<std::size_t>(i)]) return false;
    return true;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rank_; ++i) {
        if (i) os << 'x';
        os << dims_[static_cast<std::size_t>(i)];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, Dtype dtype) : shape_(shape), dtype_(dtype) {
    if (dtype == Dtype::F32)
        buf_ = std::vector<float>(shape.numel(), 0.0f);
    else
        buf_ = std::vector<double>(shape.numel(), 0.0);
}

Tensor Tensor::zeros(Shape shape, Dtype dtype) { return Tensor(shape, dtype); }

Tensor Tensor::full(Shape shape, double value, Dtype dtype) {
    Tensor t(shape, dtype);
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, value);
    return t;
}

Tensor Tensor::scalar(double value, Dtype dtype) { return full(Shape{}, value, dtype); }

Tensor Tensor::from(std::span<const double> values, Shape shape, Dtype dtype) {
    if (values.size() != shape.numel())
        raise(ErrorCode::Shape, "value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape.str());
    Tensor t(shape, dtype);
    for (std::size_t i = 0; i < values.size(); ++i) t.set(i, values[i]);
    return t;
}

double Tensor::at(std::size_t i) const {
    return dtype_ == Dtype::F32 ? static_cast<double>(data<float>()[i]) : data<double>()[i];
}

void Tensor::set(std::size_t i, double v) {
    if (dtype_ == Dtype::F32)
        data<float>()[i] = static_cast<float>(v);
    else
        data<double>()[i] = v;
}

double Tensor::scalar_value() const {
    if (numel() != 1) raise(ErrorCode::Contract, "scalar_value on tensor of shape " + shape_.str());
    return at(0);
}

std::vector<double> Tensor::to_doubles() const {
    std::vector<double> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
    return out;
}

Tensor Tensor::cast(Dtype target) const {
    if (target == dtype_) return *this;
    Tensor t(shape_, target);
    for (std::size_t i = 0; i < numel(); ++i) t.set(i, at(i));
    return t;
}

bool Tensor::all_finite() const noexcept {
    for (std::size_t i = 0; i < numel(); ++i)
        if (!std::isfinite(at(i))) return false;
    return true;
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
    if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
    if (dtype_ == Dtype::F32)
        return std::memcmp(data<float>().data(), other.data<float>().data(), numel() * 4) == 0;
    return std::memcmp(data<double>().data(), other.data<double>().data(), numel() * 8) == 0;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        raise(ErrorCode::Shape, std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        raise(ErrorCode::Dtype, std::string(op) + ": dtype mismatch " +
                                    dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()));
}

template <typename T, typename F>
Tensor binary_impl(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape(), a.dtype());
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <typename F>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f) {
    require_same_shape(a, b, name);
    require_same_dtype(a, b, name);
    return a.dtype() == Dtype::F32 ? binary_impl<float>(a, b, f) : binary_impl<double>(a, b, f);
}

template <typename T, typename F>
Tensor unary_impl(const Tensor& a, F f) {
    Tensor out(a.shape(), a.dtype());
    auto pa = a.data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = f(pa[i]);
    return out;
}

template <typename F>
Tensor unary_op(const Tensor& a, F f) {
    return a.dtype() == Dtype::F32 ? unary_impl<float>(a, f) : unary_impl<double>(a, f);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "add", [](auto x, auto y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "sub", [](auto x, auto y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "mul", [](auto x, auto y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "div", [](auto x, auto y) { return x / y; });
}

Tensor scale(const Tensor& a, double c) {
    if (a.dtype() == Dtype::F32) {
        const float cf = static_cast<float>(c);
        return unary_impl<float>(a, [cf](float x) { return x * cf; });
    }
    return unary_impl<double>(a, [c](double x) { return x * c; });
}

Tensor add_scalar(const Tensor& a, double c) {
    if (a.dtype() == Dtype::F32) {
        const float cf = static_cast<float>(c);
        return unary_impl<float>(a, [cf](float x) { return x + cf; });
    }
    return unary_impl<double>(a, [c](double x) { return x + c; });
}

Tensor sub_scalar(const Tensor& a, double c) { return add_scalar(a, -c); }

Tensor relu(const Tensor& a) {
    return unary_op(a, [](auto x) { return x > 0 ? x : decltype(x)(0); });
}

Tensor relu_mask(const Tensor& a) {
    return unary_op(a, [](auto x) { return x > 0 ? decltype(x)(1) : decltype(x)(0); });
}

Tensor sign(const Tensor& a) {
    return unary_op(a, [](auto x) {
        using T = decltype(x);
        return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0));
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](auto x) {
        using T = decltype(x);
        // Evaluate on the negative branch only; avoids exp overflow.
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
    });
}

Tensor softplus(const Tensor& a) {
    return unary_op(a, [](auto x) {
        using T = decltype(x);
        // ln(1 + e^x) = max(x,0) + log1p(e^{-|x|})
        T m = x > 0 ? x : T(0);
        return m + std::log1p(std::exp(-std::fabs(static_cast<double>(x))));
    });
}

Tensor abs(const Tensor& a) {
    return unary_op(a, [](auto x) { return x < 0 ? -x : x; });
}

Tensor sqrt_eps(const Tensor& a) {
    return unary_op(a, [](auto x) {
        using T = decltype(x);
        return static_cast<T>(std::sqrt(static_cast<double>(x) + kSqrtEpsilon));
    });
}

namespace {

template <typename T>
Tensor matmul_impl(const Tensor& a, const Tensor& b) {
    const std::uint32_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out(Shape{m, n}, a.dtype());
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.data<T>();
    for (std::uint32_t i = 0; i < m; ++i) {
        for (std::uint32_t l = 0; l < k; ++l) {
            const T av = pa[i * k + l];
            if (av == T(0)) continue;
            const T* brow = &pb[l * n];
            T* orow = &po[i * n];
            for (std::uint32_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2)
        raise(ErrorCode::Shape, "matmul: operands must be rank 2, got " + a.shape().str() + " and " +
                                    b.shape().str());
    require_same_dtype(a, b, "matmul");
    if (a.shape()[1] != b.shape()[0])
        raise(ErrorCode::Shape, "matmul: inner extents differ, " + a.shape().str() + " vs " +
                                    b.shape().str());
    return a.dtype() == Dtype::F32 ? matmul_impl<float>(a, b) : matmul_impl<double>(a, b);
}

Tensor transpose2d(const Tensor& a) {
    if (a.shape().rank() != 2) raise(ErrorCode::Shape, "transpose2d: rank 2 required");
    const std::uint32_t m = a.shape()[0], n = a.shape()[1];
    Tensor out(Shape{n, m}, a.dtype());
    for (std::uint32_t i = 0; i < m; ++i)
        for (std::uint32_t j = 0; j < n; ++j) out.set(j * m + i, a.at(i * n + j));
    return out;
}

namespace {

struct ConvDims {
    std::uint32_t c, h, w, f, kh, kw, oh, ow;
};

ConvDims conv_check(const Shape& xs, const Shape& ws, int stride, int pad) {
    if (xs.rank() != 3) raise(ErrorCode::Shape, "conv2d: input must be [C,H,W], got " + xs.str());
    if (ws.rank() != 4) raise(ErrorCode::Shape, "conv2d: weight must be [F,C,kh,kw], got " + ws.str());
    if (stride < 1) raise(ErrorCode::Validation, "conv2d: stride must be >= 1");
    if (pad < 0) raise(ErrorCode::Validation, "conv2d: pad must be >= 0");
    ConvDims d{};
    d.c = xs[0]; d.h = xs[1]; d.w = xs[2];
    d.f = ws[0]; d.kh = ws[2]; d.kw = ws[3];
    if (ws[1] != d.c)
        raise(ErrorCode::Shape, "conv2d: weight channels " + std::to_string(ws[1]) +
                                    " do not match input channels " + std::to_string(d.c));
    if (d.kh % 2 == 0 || d.kw % 2 == 0) raise(ErrorCode::Validation, "conv2d: kernel extents must be odd");
    const std::int64_t ohn = static_cast<std::int64_t>(d.h) + 2 * pad - d.kh;
    const std::int64_t own = static_cast<std::int64_t>(d.w) + 2 * pad - d.kw;
    if (ohn < 0 || own < 0 || ohn % stride != 0 || own % stride != 0)
        raise(ErrorCode::Shape, "conv2d: output extent not integral for input " + xs.str());
    d.oh = static_cast<std::uint32_t>(ohn / stride + 1);
    d.ow = static_cast<std::uint32_t>(own / stride + 1);
    return d;
}

template <typename T>
Tensor conv_fwd(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvDims& d, int stride,
                int pad) {
    Tensor out(Shape{d.f, d.oh, d.ow}, x.dtype());
    auto px = x.data<T>();
    auto pw = w.data<T>();
    auto po = out.data<T>();
    for (std::uint32_t f = 0; f < d.f; ++f) {
        const T bv = bias ? bias->data<T>()[f] : T(0);
        for (std::uint32_t oy = 0; oy < d.oh; ++oy) {
            for (std::uint32_t ox = 0; ox < d.ow; ++ox) {
                T acc = bv;
                const std::int64_t iy0 = static_cast<std::int64_t>(oy) * stride - pad;
                const std::int64_t ix0 = static_cast<std::int64_t>(ox) * stride - pad;
                for (std::uint32_t c = 0; c < d.c; ++c) {
                    for (std::uint32_t ky = 0; ky < d.kh; ++ky) {
                        const std::int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        for (std::uint32_t kx = 0; kx < d.kw; ++kx) {
                            const std::int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            acc += px[(c * d.h + static_cast<std::uint32_t>(iy)) * d.w +
                                      static_cast<std::uint32_t>(ix)] *
                                   pw[((f * d.c + c) * d.kh + ky) * d.kw + kx];
                        }
                    }
                }
                po[(f * d.oh + oy) * d.ow + ox] = acc;
            }
        }
    }
    return out;
}

template <typename T>
Tensor conv_dx_impl(const Tensor& gy, const Tensor& w, const ConvDims& d, int stride, int pad) {
    Tensor out(Shape{d.c, d.h, d.w}, gy.dtype());
    auto pg = gy.data<T>();
    auto pw = w.data<T>();
    auto po = out.data<T>();
    for (std::uint32_t f = 0; f < d.f; ++f) {
        for (std::uint32_t oy = 0; oy < d.oh; ++oy) {
            for (std::uint32_t ox = 0; ox < d.ow; ++ox) {
                const T g = pg[(f * d.oh + oy) * d.ow + ox];
                if (g == T(0)) continue;
                const std::int64_t iy0 = static_cast<std::int64_t>(oy) * stride - pad;
                const std::int64_t ix0 = static_cast<std::int64_t>(ox) * stride - pad;
                for (std::uint32_t c = 0; c < d.c; ++c) {
                    for (std::uint32_t ky = 0; ky < d.kh; ++ky) {
                        const std::int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        for (std::uint32_t kx = 0; kx < d.kw; ++kx) {
                            const std::int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            po[(c * d.h + static_cast<std::uint32_t>(iy)) * d.w +
                               static_cast<std::uint32_t>(ix)] +=
                                g * pw[((f * d.c + c) * d.kh + ky) * d.kw + kx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor conv_dw_impl(const Tensor& x, const Tensor& gy, const ConvDims& d, int stride, int pad) {
    Tensor out(Shape{d.f, d.c, d.kh, d.kw}, x.dtype());
    auto px = x.data<T>();
    auto pg = gy.data<T>();
    auto po = out.data<T>();
    for (std::uint32_t f = 0; f < d.f; ++f) {
        for (std::uint32_t oy = 0; oy < d.oh; ++oy) {
            for (std::uint32_t ox = 0; ox < d.ow; ++ox) {
                const T g = pg[(f * d.oh + oy) * d.ow + ox];
                if (g == T(0)) continue;
                const std::int64_t iy0 = static_cast<std::int64_t>(oy) * stride - pad;
                const std::int64_t ix0 = static_cast<std::int64_t>(ox) * stride - pad;
                for (std::uint32_t c = 0; c < d.c; ++c) {
                    for (std::uint32_t ky = 0; ky < d.kh; ++ky) {
                        const std::int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        for (std::uint32_t kx = 0; kx < d.kw; ++kx) {
                            const std::int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            po[((f * d.c + c) * d.kh + ky) * d.kw + kx] +=
                                g * px[(c * d.h + static_cast<std::uint32_t>(iy)) * d.w +
                                       static_cast<std::uint32_t>(ix)];
                        }
                    }
                }
            }
        }
    }
    return out;
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const ConvDims d = conv_check(x.shape(), w.shape(), stride, pad);
    require_same_dtype(x, w, "conv2d");
    require_same_dtype(x, bias, "conv2d");
    if (bias.shape() != Shape{d.f})
        raise(ErrorCode::Shape, "conv2d: bias must be [F], got " + bias.shape().str());
    return x.dtype() == Dtype::F32 ? conv_fwd<float>(x, w, &bias, d, stride, pad)
                                   : conv_fwd<double>(x, w, &bias, d, stride, pad);
}

Tensor conv2d_nobias(const Tensor& x, const Tensor& w, int stride, int pad) {
    const ConvDims d = conv_check(x.shape(), w.shape(), stride, pad);
    require_same_dtype(x, w, "conv2d");
    return x.dtype() == Dtype::F32 ? conv_fwd<float>(x, w, nullptr, d, stride, pad)
                                   : conv_fwd<double>(x, w, nullptr, d, stride, pad);
}

Tensor conv2d_dx(const Tensor& grad_y, const Tensor& w, const Shape& x_shape, int stride, int pad) {
    const ConvDims d = conv_check(x_shape, w.shape(), stride, pad);
    require_same_dtype(grad_y, w, "conv2d_dx");
    if (grad_y.shape() != Shape{d.f, d.oh, d.ow})
        raise(ErrorCode::Shape, "conv2d_dx: upstream shape " + grad_y.shape().str() +
                                    " does not match output " + Shape{d.f, d.oh, d.ow}.str());
    return grad_y.dtype() == Dtype::F32 ? conv_dx_impl<float>(grad_y, w, d, stride, pad)
                                        : conv_dx_impl<double>(grad_y, w, d, stride, pad);
}

Tensor conv2d_dw(const Tensor& x, const Tensor& grad_y, const Shape& w_shape, int stride, int pad) {
    const ConvDims d = conv_check(x.shape(), w_shape, stride, pad);
    require_same_dtype(x, grad_y, "conv2d_dw");
    if (grad_y.shape() != Shape{d.f, d.oh, d.ow})
        raise(ErrorCode::Shape, "conv2d_dw: upstream shape " + grad_y.shape().str() +
                                    " does not match output " + Shape{d.f, d.oh, d.ow}.str());
    return x.dtype() == Dtype::F32 ? conv_dw_impl<float>(x, grad_y, d, stride, pad)
                                   : conv_dw_impl<double>(x, grad_y, d, stride, pad);
}

MaxPoolResult maxpool2d(const Tensor& x, int k, int stride) {
    if (x.shape().rank() != 3) raise(ErrorCode::Shape, "maxpool2d: input must be [C,H,W]");
    if (k < 1 || stride < 1) raise(ErrorCode::Validation, "maxpool2d: k and stride must be >= 1");
    const std::uint32_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (static_cast<std::uint32_t>(k) > h || static_cast<std::uint32_t>(k) > w)
        raise(ErrorCode::Shape, "maxpool2d: window larger than input " + x.shape().str());
    const std::uint32_t oh = (h - static_cast<std::uint32_t>(k)) / static_cast<std::uint32_t>(stride) + 1;
    const std::uint32_t ow = (w - static_cast<std::uint32_t>(k)) / static_cast<std::uint32_t>(stride) + 1;
    MaxPoolResult r{Tensor(Shape{c, oh, ow}, x.dtype()), {}};
    r.argmax.resize(static_cast<std::size_t>(c) * oh * ow);
    for (std::uint32_t ch = 0; ch < c; ++ch) {
        for (std::uint32_t oy = 0; oy < oh; ++oy) {
            for (std::uint32_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::uint32_t best_idx = 0;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const std::uint32_t iy = oy * static_cast<std::uint32_t>(stride) +
                                                 static_cast<std::uint32_t>(ky);
                        const std::uint32_t ix = ox * static_cast<std::uint32_t>(stride) +
                                                 static_cast<std::uint32_t>(kx);
                        const std::uint32_t flat = (ch * h + iy) * w + ix;
                        const double v = x.at(flat);
                        if (v > best) {
                            best = v;
                            best_idx = flat;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(ch) * oh + oy) * ow + ox;
                r.values.set(o, x.at(best_idx));
                r.argmax[o] = best_idx;
            }
        }
    }
    return r;
}

Tensor reduce_sum(const Tensor& x) {
    if (x.dtype() == Dtype::F32) {
        float acc = 0.0f;
        for (float v : x.data<float>()) acc += v;
        return Tensor::scalar(acc, Dtype::F32);
    }
    double acc = 0.0;
    for (double v : x.data<double>()) acc += v;
    return Tensor::scalar(acc, Dtype::F64);
}

Tensor reduce_mean(const Tensor& x) {
    if (x.numel() == 0) raise(ErrorCode::Domain, "mean of empty tensor is undefined");
    return scale(reduce_sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape.numel() != x.numel())
        raise(ErrorCode::Shape, "reshape: element count mismatch " + x.shape().str() + " -> " +
                                    shape.str());
    // Row-major contiguous storage; only the shape changes.
    Tensor out(shape, x.dtype());
    if (x.dtype() == Dtype::F32)
        std::copy(x.data<float>().begin(), x.data<float>().end(), out.data<float>().begin());
    else
        std::copy(x.data<double>().begin(), x.data<double>().end(), out.data<double>().begin());
    return out;
}

Tensor select(const Tensor& x, std::size_t index) {
    if (index >= x.numel()) raise(ErrorCode::Shape, "select: index out of range");
    return Tensor::scalar(x.at(index), x.dtype());
}

Tensor put_scalar(const Tensor& g, std::size_t index, const Shape& shape) {
    if (g.numel() != 1) raise(ErrorCode::Contract, "put_scalar: g must be a scalar");
    if (index >= shape.numel()) raise(ErrorCode::Shape, "put_scalar: index out of range");
    Tensor out(shape, g.dtype());
    out.set(index, g.at(0));
    return out;
}

Tensor fill_like(const Tensor& g, const Shape& shape) {
    if (g.numel() != 1) raise(ErrorCode::Contract, "fill_like: g must be a scalar");
    return Tensor::full(shape, g.at(0), g.dtype());
}

Tensor broadcast_channels(const Tensor& b, std::uint32_t h, std::uint32_t w) {
    if (b.shape().rank() != 1) raise(ErrorCode::Shape, "broadcast_channels: bias must be rank 1");
    const std::uint32_t f = b.shape()[0];
    Tensor out(Shape{f, h, w}, b.dtype());
    for (std::uint32_t ch = 0; ch < f; ++ch) {
        const double v = b.at(ch);
        for (std::uint32_t i = 0; i < h * w; ++i) out.set(static_cast<std::size_t>(ch) * h * w + i, v);
    }
    return out;
}

Tensor channel_sum(const Tensor& x) {
    if (x.shape().rank() != 3) raise(ErrorCode::Shape, "channel_sum: input must be [F,H,W]");
    const std::uint32_t f = x.shape()[0];
    const std::size_t hw = static_cast<std::size_t>(x.shape()[1]) * x.shape()[2];
    Tensor out(Shape{f}, x.dtype());
    for (std::uint32_t ch = 0; ch < f; ++ch) {
        double acc = 0.0;
        if (x.dtype() == Dtype::F32) {
            float accf = 0.0f;
            auto px = x.data<float>();
            for (std::size_t i = 0; i < hw; ++i) accf += px[ch * hw + i];
            out.set(ch, accf);
        } else {
            auto px = x.data<double>();
            for (std::size_t i = 0; i < hw; ++i) acc += px[ch * hw + i];
            out.set(ch, acc);
        }
    }
    return out;
}

Tensor gather_index(const Tensor& x, std::span<const std::uint32_t> idx, const Shape& out_shape) {
    if (idx.size() != out_shape.numel())
        raise(ErrorCode::Shape, "gather_index: index count does not match output shape");
    Tensor out(out_shape, x.dtype());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.numel()) raise(ErrorCode::Shape, "gather_index: index out of range");
        out.set(i, x.at(idx[i]));
    }
    return out;
}

Tensor scatter_index(const Tensor& g, std::span<const std::uint32_t> idx, const Shape& in_shape) {
    if (idx.size() != g.numel())
        raise(ErrorCode::Shape, "scatter_index: index count does not match gradient shape");
    Tensor out(in_shape, g.dtype());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= out.numel()) raise(ErrorCode::Shape, "scatter_index: index out of range");
        out.set(idx[i], out.at(idx[i]) + g.at(i));
    }
    return out;
}

} // namespace gradmask
