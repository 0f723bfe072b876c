#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gradmask/io.hpp"
#include "gradmask/rng.hpp"
#include "gradmask/tensor.hpp"
#include "oracles.hpp"

using namespace gradmask;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, Dtype dt, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape, dt);
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

Tensor random_int_tensor(Rng& rng, Shape shape, Dtype dt) {
    Tensor t(shape, dt);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.set(i, static_cast<double>(static_cast<long>(rng.below(17)) - 8));
    return t;
}

} // namespace

TEST_CASE("elementwise basics") {
    const Tensor a = Tensor::from(std::vector<double>{1, 2, 3}, Shape{3}, Dtype::F64);
    const Tensor z = Tensor::zeros(Shape{3}, Dtype::F64);
    const Tensor prod = mul(a, z);
    for (std::size_t i = 0; i < 3; ++i) CHECK(prod.at(i) == 0.0);

    const Tensor r = relu(Tensor::from(std::vector<double>{-1.5, 0.0, 2.0}, Shape{3}, Dtype::F64));
    CHECK(r.at(0) == 0.0);
    CHECK(r.at(1) == 0.0);
    CHECK(r.at(2) == 2.0);

    CHECK(sigmoid(Tensor::scalar(0.0, Dtype::F64)).scalar_value() == 0.5);
    CHECK(softplus(Tensor::scalar(0.0, Dtype::F64)).scalar_value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK(add_scalar(Tensor::scalar(1.0, Dtype::F64), 2.5).scalar_value() == 3.5);
    CHECK(sub_scalar(Tensor::scalar(1.0, Dtype::F64), 2.5).scalar_value() == -1.5);

    // sqrt_eps keeps the norm finite and differentiable at zero
    CHECK(sqrt_eps(Tensor::scalar(0.0, Dtype::F64)).scalar_value() ==
          doctest::Approx(1e-6).epsilon(1e-9));

    CHECK(abs(Tensor::from(std::vector<double>{-2, 3}, Shape{2}, Dtype::F64)).at(0) == 2.0);
    CHECK(sign(Tensor::scalar(0.0, Dtype::F64)).scalar_value() == 0.0);
    CHECK(relu_mask(Tensor::scalar(0.0, Dtype::F64)).scalar_value() == 0.0);
}

TEST_CASE("elementwise errors") {
    const Tensor a = Tensor::zeros(Shape{3}, Dtype::F64);
    const Tensor b = Tensor::zeros(Shape{4}, Dtype::F64);
    const Tensor c = Tensor::zeros(Shape{3}, Dtype::F32);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("shape mismatch"), Error);
    CHECK_THROWS_AS(mul(a, c), Error);
    try {
        mul(a, c);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Dtype);
    }
}

TEST_CASE("matmul identity and hand dot product") {
    const Tensor eye = Tensor::from(std::vector<double>{1, 0, 0, 1}, Shape{2, 2}, Dtype::F64);
    const Tensor m = Tensor::from(std::vector<double>{1, 2, 3, 4}, Shape{2, 2}, Dtype::F64);
    CHECK(matmul(eye, m).bit_equal(m));

    const Tensor row = Tensor::from(std::vector<double>{1, 2}, Shape{1, 2}, Dtype::F64);
    const Tensor col = Tensor::from(std::vector<double>{3, 4}, Shape{2, 1}, Dtype::F64);
    CHECK(matmul(row, col).scalar_value() == 11.0);

    CHECK_THROWS_AS(matmul(row, row), Error);
}

TEST_CASE("matmul 5x4 x 4x3 equals triple-loop oracle exactly") {
    Rng rng(101);
    const Tensor a = random_int_tensor(rng, Shape{5, 4}, Dtype::F64);
    const Tensor b = random_int_tensor(rng, Shape{4, 3}, Dtype::F64);
    const std::vector<double> expected = oracles::matmul(a.data<double>(), b.data<double>(), 5, 4, 3);
    const Tensor got = matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(got.at(i) == expected[i]);
}

TEST_CASE("conv2d identity kernel and bias passthrough") {
    Rng rng(7);
    const Tensor x = random_tensor(rng, Shape{1, 3, 3}, Dtype::F64);
    const Tensor identity = Tensor::from(std::vector<double>{1}, Shape{1, 1, 1, 1}, Dtype::F64);
    const Tensor no_bias = Tensor::zeros(Shape{1}, Dtype::F64);
    CHECK(conv2d(x, identity, no_bias, 1, 0).bit_equal(x));

    const Tensor zero_k = Tensor::zeros(Shape{2, 1, 3, 3}, Dtype::F64);
    const Tensor bias = Tensor::from(std::vector<double>{0.5, -1.25}, Shape{2}, Dtype::F64);
    const Tensor out = conv2d(x, zero_k, bias, 1, 1);
    CHECK(out.shape() == Shape{2, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(out.at(i) == 0.5);
        CHECK(out.at(9 + i) == -1.25);
    }
}

TEST_CASE("conv2d random case matches nested-loop oracle") {
    Rng rng(42);
    const Tensor x = random_tensor(rng, Shape{2, 8, 8}, Dtype::F64);
    const Tensor w = random_tensor(rng, Shape{3, 2, 3, 3}, Dtype::F64);
    const Tensor bias = random_tensor(rng, Shape{3}, Dtype::F64);
    const Tensor got = conv2d(x, w, bias, 1, 1);
    const std::vector<double> expected = oracles::conv2d(
        x.data<double>(), w.data<double>(), bias.data<double>(), 2, 8, 8, 3, 3, 3, 1, 1);
    REQUIRE(got.numel() == expected.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i)
        worst = std::max(worst, std::fabs(got.at(i) - expected[i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("conv2d shape errors") {
    const Tensor x = Tensor::zeros(Shape{1, 5, 5}, Dtype::F64);
    const Tensor w = Tensor::zeros(Shape{1, 1, 3, 3}, Dtype::F64);
    const Tensor b = Tensor::zeros(Shape{1}, Dtype::F64);
    // (5 + 0 - 3) % 3 != 0 -> not integral
    CHECK_THROWS_AS(conv2d(x, w, b, 3, 0), Error);
    const Tensor wbad = Tensor::zeros(Shape{1, 2, 3, 3}, Dtype::F64);
    CHECK_THROWS_AS(conv2d(x, wbad, b, 1, 1), Error);
}

TEST_CASE("maxpool single window, tie break, oracle") {
    const Tensor x = Tensor::from(std::vector<double>{1, 2, 3, 4}, Shape{1, 2, 2}, Dtype::F64);
    const MaxPoolResult r = maxpool2d(x, 2, 2);
    CHECK(r.values.scalar_value() == 4.0);
    CHECK(r.argmax[0] == 3);

    const Tensor flat = Tensor::full(Shape{1, 4, 4}, 0.25, Dtype::F64);
    const MaxPoolResult tie = maxpool2d(flat, 2, 2);
    CHECK(tie.argmax[0] == 0);
    CHECK(tie.argmax[1] == 2);
    CHECK(tie.argmax[2] == 8);
    CHECK(tie.argmax[3] == 10);

    Rng rng(11);
    const Tensor big = random_tensor(rng, Shape{1, 6, 6}, Dtype::F64);
    const MaxPoolResult got = maxpool2d(big, 2, 2);
    const oracles::PoolOut expected = oracles::maxpool(big.data<double>(), 1, 6, 6, 2, 2);
    for (std::size_t i = 0; i < expected.values.size(); ++i) {
        CHECK(got.values.at(i) == expected.values[i]);
        CHECK(got.argmax[i] == expected.argmax[i]);
        // output equals the input at the recorded index, exactly
        CHECK(got.values.at(i) == big.at(got.argmax[i]));
    }

    CHECK_THROWS_AS(maxpool2d(x, 3, 1), Error);
}

TEST_CASE("reductions") {
    CHECK(reduce_sum(Tensor::from(std::vector<double>{1, 2, 3}, Shape{3}, Dtype::F64)).scalar_value() ==
          6.0);
    CHECK(reduce_mean(Tensor::from(std::vector<double>{1, 2, 3, 6}, Shape{4}, Dtype::F64))
              .scalar_value() == 3.0);

    const Tensor empty(Shape{0}, Dtype::F64);
    CHECK(reduce_sum(empty).scalar_value() == 0.0);
    CHECK_THROWS_AS(reduce_mean(empty), Error);

    // f32 sum against compensated summation
    Rng rng(5);
    Tensor v(Shape{100}, Dtype::F32);
    for (std::size_t i = 0; i < 100; ++i) v.set(i, rng.uniform(-10.0, 10.0));
    const double kahan = oracles::kahan_sum(v.to_doubles());
    CHECK(std::fabs(reduce_sum(v).scalar_value() - kahan) / std::fabs(kahan) < 1e-6);
}

TEST_CASE("property: matmul and conv2d match oracles on randomized shapes") {
    Rng rng(2024);
    for (int iter = 0; iter < 100; ++iter) {
        const std::uint32_t m = 1 + static_cast<std::uint32_t>(rng.below(5));
        const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng.below(5));
        const std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.below(5));
        const Tensor a = random_tensor(rng, Shape{m, k}, Dtype::F64);
        const Tensor b = random_tensor(rng, Shape{k, n}, Dtype::F64);
        const std::vector<double> mm = oracles::matmul(a.data<double>(), b.data<double>(), m, k, n);
        const Tensor got = matmul(a, b);
        for (std::size_t i = 0; i < mm.size(); ++i)
            CHECK(std::fabs(got.at(i) - mm[i]) < 1e-12);

        const std::uint32_t c = 1 + static_cast<std::uint32_t>(rng.below(3));
        const std::uint32_t f = 1 + static_cast<std::uint32_t>(rng.below(3));
        const std::uint32_t h = 4 + static_cast<std::uint32_t>(rng.below(5));
        const std::uint32_t w = 4 + static_cast<std::uint32_t>(rng.below(5));
        const int pad = static_cast<int>(rng.below(2));
        const Tensor x = random_tensor(rng, Shape{c, h, w}, Dtype::F64);
        const Tensor kt = random_tensor(rng, Shape{f, c, 3, 3}, Dtype::F64);
        const Tensor bias = random_tensor(rng, Shape{f}, Dtype::F64);
        const long oh = static_cast<long>(h) + 2 * pad - 3;
        if (oh < 0 || static_cast<long>(w) + 2 * pad - 3 < 0) continue;
        const Tensor got2 = conv2d(x, kt, bias, 1, pad);
        const std::vector<double> cc = oracles::conv2d(x.data<double>(), kt.data<double>(),
                                                       bias.data<double>(), c, h, w, f, 3, 3, 1, pad);
        for (std::size_t i = 0; i < cc.size(); ++i)
            CHECK(std::fabs(got2.at(i) - cc[i]) < 1e-12);
    }
}

TEST_CASE("kernels are deterministic") {
    Rng rng(9);
    const Tensor x = random_tensor(rng, Shape{2, 6, 6}, Dtype::F32);
    const Tensor w = random_tensor(rng, Shape{3, 2, 3, 3}, Dtype::F32);
    const Tensor b = random_tensor(rng, Shape{3}, Dtype::F32);
    CHECK(conv2d(x, w, b, 1, 1).bit_equal(conv2d(x, w, b, 1, 1)));
    CHECK(sigmoid(x).bit_equal(sigmoid(x)));
}

TEST_CASE("structural kernels") {
    const Tensor x = Tensor::from(std::vector<double>{1, 2, 3, 4, 5, 6}, Shape{2, 3}, Dtype::F64);
    const Tensor t = transpose2d(x);
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at(0) == 1.0);
    CHECK(t.at(1) == 4.0);

    CHECK(reshape(x, Shape{6}).at(5) == 6.0);
    CHECK_THROWS_AS(reshape(x, Shape{5}), Error);

    CHECK(select(x, 2).scalar_value() == 3.0);
    const Tensor put = put_scalar(Tensor::scalar(7.5, Dtype::F64), 4, Shape{2, 3});
    CHECK(put.at(4) == 7.5);
    CHECK(put.at(0) == 0.0);

    const Tensor bc = broadcast_channels(Tensor::from(std::vector<double>{1, 2}, Shape{2}, Dtype::F64),
                                         2, 2);
    CHECK(bc.shape() == Shape{2, 2, 2});
    CHECK(bc.at(3) == 1.0);
    CHECK(bc.at(4) == 2.0);
    const Tensor cs = channel_sum(bc);
    CHECK(cs.at(0) == 4.0);
    CHECK(cs.at(1) == 8.0);

    const std::vector<std::uint32_t> idx{5, 0, 5};
    const Tensor g = gather_index(x, idx, Shape{3});
    CHECK(g.at(0) == 6.0);
    CHECK(g.at(2) == 6.0);
    const Tensor sc = scatter_index(g, idx, Shape{2, 3});
    CHECK(sc.at(5) == 12.0); // duplicate indices accumulate
    CHECK(sc.at(0) == 1.0);
}

TEST_CASE("GMT1 round trips are bit exact") {
    Rng rng(77);
    for (Dtype dt : {Dtype::F32, Dtype::F64}) {
        for (const Shape& shape : {Shape{}, Shape{5}, Shape{2, 3}, Shape{2, 3, 4}, Shape{2, 1, 2, 3}}) {
            const Tensor t = random_tensor(rng, shape, dt);
            std::ostringstream os(std::ios::binary);
            write_gmt(os, t);
            std::istringstream is(os.str(), std::ios::binary);
            const Tensor back = read_gmt(is);
            CHECK(back.bit_equal(t));

            // write -> read -> write produces identical bytes
            std::ostringstream os2(std::ios::binary);
            write_gmt(os2, back);
            CHECK(os.str() == os2.str());
        }
    }
}

TEST_CASE("GMT1 rejects corrupt input") {
    const Tensor t = Tensor::from(std::vector<double>{1, 2}, Shape{2}, Dtype::F32);
    std::ostringstream os(std::ios::binary);
    write_gmt(os, t);
    std::string bytes = os.str();

    std::string tampered = bytes;
    tampered[0] = 'X';
    std::istringstream bad(tampered, std::ios::binary);
    CHECK_THROWS_AS(read_gmt(bad), Error);
    try {
        std::istringstream bad2(tampered, std::ios::binary);
        read_gmt(bad2);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Format);
    }

    std::istringstream truncated(bytes.substr(0, bytes.size() - 3), std::ios::binary);
    CHECK_THROWS_AS(read_gmt(truncated), Error);
}

TEST_CASE("GMT1 file round trip") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "gm_test_tensor.gmt";
    Rng rng(3);
    const Tensor t = random_tensor(rng, Shape{3, 4}, Dtype::F64);
    write_gmt_file(path, t);
    CHECK(read_gmt_file(path).bit_equal(t));
    fs::remove(path);
    CHECK_THROWS_AS(read_gmt_file(path), Error);
}
