#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gradmask/error.hpp"

namespace gradmask {

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

const char* dtype_name(Dtype dt) noexcept;
std::size_t dtype_size(Dtype dt) noexcept;

// Row-major dense shape, rank 0..4. Rank 0 is a scalar holding one element.
class Shape {
public:
    static constexpr int kMaxRank = 4;

    Shape() = default;
    Shape(std::initializer_list<std::uint32_t> dims);
    explicit Shape(std::span<const std::uint32_t> dims);

    int rank() const noexcept { return rank_; }
    std::uint32_t operator[](int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::size_t numel() const noexcept;
    bool operator==(const Shape& other) const noexcept;
    bool operator!=(const Shape& other) const noexcept { return !(*this == other); }
    std::string str() const;

private:
    int rank_ = 0;
    std::array<std::uint32_t, kMaxRank> dims_{};
};

// Immutable-by-convention dense array. Kernels never mutate their inputs;
// everything downstream relies on that for thread safety and determinism.
class Tensor {
public:
    Tensor() : Tensor(Shape{}, Dtype::F32) {}
    Tensor(Shape shape, Dtype dtype);

    static Tensor zeros(Shape shape, Dtype dtype);
    static Tensor full(Shape shape, double value, Dtype dtype);
    static Tensor scalar(double value, Dtype dtype);
    // Values are given as doubles and narrowed to the requested dtype.
    static Tensor from(std::span<const double> values, Shape shape, Dtype dtype);

    const Shape& shape() const noexcept { return shape_; }
    Dtype dtype() const noexcept { return dtype_; }
    std::size_t numel() const noexcept { return shape_.numel(); }

    template <typename T>
    std::span<const T> data() const {
        return std::get<std::vector<T>>(buf_);
    }
    template <typename T>
    std::span<T> data() {
        return std::get<std::vector<T>>(buf_);
    }

    // Element access widened to double; convenient for tests and IO.
    double at(std::size_t i) const;
    void set(std::size_t i, double v);
    double scalar_value() const; // requires numel() == 1

    std::vector<double> to_doubles() const;
    Tensor cast(Dtype target) const;

    bool all_finite() const noexcept;
    bool bit_equal(const Tensor& other) const noexcept;

private:
    Shape shape_;
    Dtype dtype_;
    std::variant<std::vector<float>, std::vector<double>> buf_;
};

// ---- elementwise kernels ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Elementwise quotient; caller guarantees b has no zero entries.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// Scalar-with-tensor broadcast forms; scale is the multiplicative one.
Tensor add_scalar(const Tensor& a, double c);
Tensor sub_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor abs(const Tensor& a);
// sqrt(v + kSqrtEpsilon); keeps the L2 norm differentiable at zero.
Tensor sqrt_eps(const Tensor& a);

inline constexpr double kSqrtEpsilon = 1e-12;

// Derivative helpers used by gradient routing. relu'(0) = 0 and sign(0) = 0.
Tensor relu_mask(const Tensor& a); // 1 where a > 0 else 0
Tensor sign(const Tensor& a);

// ---- linear algebra / convolution ----
Tensor matmul(const Tensor& a, const Tensor& b); // [m,k] x [k,n] -> [m,n]
Tensor transpose2d(const Tensor& a);

// Cross-correlation with zero padding; x:[C,H,W], w:[F,C,kh,kw], bias:[F].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor conv2d_nobias(const Tensor& x, const Tensor& w, int stride, int pad);
// Adjoint of conv2d_nobias w.r.t. x: grad_y:[F,H',W'] -> [C,H,W].
Tensor conv2d_dx(const Tensor& grad_y, const Tensor& w, const Shape& x_shape, int stride, int pad);
// Adjoint of conv2d_nobias w.r.t. w: (x, grad_y) -> [F,C,kh,kw].
Tensor conv2d_dw(const Tensor& x, const Tensor& grad_y, const Shape& w_shape, int stride, int pad);

struct MaxPoolResult {
    Tensor values;                      // [C,H',W']
    std::vector<std::uint32_t> argmax;  // flat index into x per output element
};
// Ties resolve to the first (row-major lowest) index inside the window.
MaxPoolResult maxpool2d(const Tensor& x, int k, int stride);

// ---- reductions ----
Tensor reduce_sum(const Tensor& x);  // rank-0
Tensor reduce_mean(const Tensor& x); // rank-0; empty input is a domain error

// ---- structural kernels ----
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor select(const Tensor& x, std::size_t index);                   // rank-0 pick
Tensor put_scalar(const Tensor& g, std::size_t index, const Shape& shape);
Tensor fill_like(const Tensor& g, const Shape& shape);               // broadcast a scalar
Tensor broadcast_channels(const Tensor& b, std::uint32_t h, std::uint32_t w); // [F] -> [F,H,W]
Tensor channel_sum(const Tensor& x);                                 // [F,H,W] -> [F]
Tensor gather_index(const Tensor& x, std::span<const std::uint32_t> idx, const Shape& out_shape);
Tensor scatter_index(const Tensor& g, std::span<const std::uint32_t> idx, const Shape& in_shape);

} // namespace gradmask
