#include <doctest.h>

#include <cmath>

#include "pdvmrnn/coding.hpp"
#include "pdvmrnn/kernels.hpp"

using namespace pdvmrnn;

TEST_CASE("population code is a valid distribution peaked at the angle") {
    JointCoder coder({{-2.0, 2.0}, {0.0, 1.0}}, 10);
    CHECK(coder.dim() == 20);
    TensorT<double> code = coder.encode<double>({0.3, 0.5});
    for (int j = 0; j < 2; ++j) {
        double sum = 0;
        for (int i = 0; i < 10; ++i) {
            sum += code.data[j * 10 + i];
            CHECK(code.data[j * 10 + i] >= 0.0);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    // Encoding exactly on a preference center puts the argmax there.
    for (int bin = 0; bin < 10; ++bin) {
        TensorT<double> c = coder.encode<double>({coder.center(0, bin), 0.5});
        int arg = 0;
        for (int i = 1; i < 10; ++i) {
            if (c.data[i] > c.data[arg]) arg = i;
        }
        CHECK(arg == bin);
    }
    // Encoded blocks satisfy the KL-loss input contract.
    CHECK_NOTHROW(kl_loss(code, code, 10));
    CHECK(kl_loss(code, code, 10) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("encode/decode roundtrip bias stays within half a bin spacing") {
    JointCoder coder({{-2.4, 2.4}}, 10);
    const double spacing = (2.4 + 2.4) / 9.0;
    double worst_all = 0.0, worst_interior = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double a = -2.4 + 4.8 * double(i) / 200.0;
        auto dec = coder.decode(coder.encode<double>({a}));
        const double err = std::abs(dec[0] - a);
        worst_all = std::max(worst_all, err);
        if (a > -2.4 + 2 * spacing && a < 2.4 - 2 * spacing) {
            worst_interior = std::max(worst_interior, err);
        }
    }
    CHECK(worst_all < 0.5 * spacing);      // including the range limits
    CHECK(worst_interior < 0.02 * spacing); // interior is nearly exact
}

TEST_CASE("coder validates ranges, angles, and code mass") {
    CHECK_THROWS_AS(JointCoder({{1.0, 1.0}}, 10), ValidationError);
    CHECK_THROWS_AS(JointCoder({{0.0, 1.0}}, 1), ValidationError);
    JointCoder coder({{0.0, 1.0}}, 5);
    CHECK_THROWS_AS(coder.encode<double>({1.5}), ValidationError);
    CHECK_THROWS_AS(coder.encode<double>({0.1, 0.2}), ShapeError);
    TensorT<double> zero({5});
    CHECK_THROWS_AS(coder.decode(zero), ValidationError);
    TensorT<double> short_code({3});
    CHECK_THROWS_AS(coder.decode(short_code), ShapeError);
}

TEST_CASE("frame normalization maps bytes to [-1,1] and back exactly") {
    std::vector<uint8_t> pix(16);
    for (int i = 0; i < 16; ++i) pix[i] = uint8_t(i * 17);
    TensorT<float> t = normalize_frame<float>(pix, 4);
    CHECK(t.shape == std::vector<int>{4, 4, 1});
    for (auto v : t.data) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }
    CHECK(t.data[0] == doctest::Approx(-1.0));
    CHECK(t.data[15] == doctest::Approx(1.0));
    auto back = denormalize_frame(t);
    for (int i = 0; i < 16; ++i) CHECK(back[i] == pix[i]);
    CHECK_THROWS_AS(normalize_frame<float>(pix, 5), ShapeError);
}
