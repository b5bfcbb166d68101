#include "doctest.h"

#include "m2t/ops.hpp"
#include "support/op_cases.hpp"
#include "support/testing.hpp"

#include <cmath>
#include <functional>
#include <string>

using namespace m2t;
using namespace m2t::testing;

namespace {

template <typename T>
void run_gradchecks(double h, double tol, double floor, bool five_point)
{
    Rng rng(2024);
    for (const auto& c : op_cases<T>()) {
        std::vector<BasicTensor<T>> leaves;
        for (const auto& s : c.inputs)
            leaves.push_back(random_tensor<T>(s, rng));
        auto res = gradcheck<T>(leaves, [&] { return probe_loss(c.fn(leaves)); }, h, 0, 1, floor, five_point);
        INFO(c.name << " rel error " << res.max_rel_error);
        CHECK(res.max_rel_error < tol);
    }
}

} // namespace

TEST_SUITE("ops")
{
    TEST_CASE("every op passes the 64-bit finite-difference check")
    {
        run_gradchecks<double>(1e-4, 1e-6, 1e-6, true);
    }

    TEST_CASE("every op passes the 32-bit finite-difference check")
    {
        // Float round-off dominates tiny gradients, so the denominator has a floor.
        run_gradchecks<float>(1e-2, 1e-3, 1e-1, false);
    }

    TEST_CASE("conv3d zero kernel gives zeros and identity kernel gives the input")
    {
        Tensor x(Shape{1, 1, 4, 4, 4}, 1.0f);
        Tensor w(Shape{1, 1, 3, 3, 3}, 0.0f);
        Tensor b(Shape{1}, 0.0f);
        const auto z = conv3d(x, w, b, Conv3dOptions::same(3));
        CHECK(z.shape() == x.shape());
        for (float v : z.data())
            CHECK(v == 0.0f);
        w.mutable_data()[13] = 1.0f;
        Rng rng(1);
        const auto r = random_tensor(Shape{1, 1, 4, 4, 4}, rng);
        CHECK(bit_equal(conv3d(r, w, b, Conv3dOptions::same(3)).data(), r.data()));
    }

    TEST_CASE("conv3d matches direct summation")
    {
        Rng rng(5);
        const auto x = random_tensor(Shape{1, 1, 5, 5, 5}, rng);
        const auto w = random_tensor(Shape{1, 1, 3, 3, 3}, rng);
        const auto b = random_tensor(Shape{1}, rng);
        const auto opts = Conv3dOptions::same(3, 2);
        const auto y = conv3d(x, w, b, opts);
        const auto ref = naive_conv3d(x, w, b, opts);
        REQUIRE(y.numel() == static_cast<Index>(ref.size()));
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(y.data()[i] - ref[i]) < 1e-5);

        // Multi-channel, strided, batched.
        const auto x2 = random_tensor(Shape{2, 3, 7, 6, 5}, rng);
        const auto w2 = random_tensor(Shape{4, 3, 3, 3, 3}, rng);
        const auto b2 = random_tensor(Shape{4}, rng);
        const Conv3dOptions o2{{2, 1, 2}, {1, 1, 1}, {1, 1, 1}};
        const auto y2 = conv3d(x2, w2, b2, o2);
        const auto ref2 = naive_conv3d(x2, w2, b2, o2);
        CHECK(max_abs_diff<double>(std::vector<double>(y2.data().begin(), y2.data().end()), ref2) < 1e-5);
    }

    TEST_CASE("conv3d on volumes large enough to be processed in several slabs")
    {
        Rng rng(12);
        const auto x = random_tensor(Shape{2, 8, 6, 20, 40}, rng);
        const auto w = random_tensor(Shape{5, 8, 3, 3, 3}, rng);
        const auto b = random_tensor(Shape{5}, rng);
        for (const auto& o : {Conv3dOptions::same(3, 2), Conv3dOptions{{1, 2, 2}, {1, 1, 1}, {1, 1, 1}}}) {
            const auto y = conv3d(x, w, b, o);
            const auto ref = naive_conv3d(x, w, b, o);
            CHECK(max_abs_diff<double>(std::vector<double>(y.data().begin(), y.data().end()), ref) < 1e-4);
        }
        auto xd = random_tensor<double>(Shape{1, 4, 4, 12, 30}, rng);
        auto wd = random_tensor<double>(Shape{3, 4, 3, 3, 3}, rng);
        auto bd = random_tensor<double>(Shape{3}, rng);
        const auto res = gradcheck<double>(
            {xd, wd, bd}, [&] { return probe_loss(conv3d(xd, wd, bd, Conv3dOptions::same(3))); }, 1e-4,
            40, 3, 1e-6);
        CHECK(res.max_rel_error < 1e-6);
    }

    TEST_CASE("dilated same padding preserves extents")
    {
        Rng rng(2);
        for (Index d : {1, 2, 3})
            for (const Shape& s : {Shape{1, 1, 7, 7, 7}, Shape{1, 2, 8, 5, 9}}) {
                const auto x = random_tensor(s, rng);
                const auto w = random_tensor(Shape{1, s[1], 3, 3, 3}, rng);
                CHECK(conv3d(x, w, Tensor(), Conv3dOptions::same(3, d)).shape() ==
                      Shape{1, 1, s[2], s[3], s[4]});
            }
        CHECK_THROWS_AS(conv_output_extent(2, 3, 1, 0, 2), ShapeError);
    }

    TEST_CASE("instance_norm examples")
    {
        const Tensor one(Shape{1}, 1.0f), zero(Shape{1}, 0.0f);
        const Tensor c(Shape{1, 1, 2, 2, 2}, 3.0f);
        const auto cn = instance_norm(c, one, zero);
        for (float v : cn.data())
            CHECK(v == 0.0f);
        const Tensor pm(Shape{1, 1, 1, 1, 2}, std::vector<float>{-1, 1});
        const auto y = instance_norm(pm, one, zero, 0.0f);
        CHECK(y.data()[0] == doctest::Approx(-1.0));
        CHECK(y.data()[1] == doctest::Approx(1.0));
        CHECK_THROWS_AS(instance_norm(Tensor(Shape{1, 1, 1, 1, 1}), one, zero), ShapeError);

        Rng rng(9);
        const auto x = random_tensor(Shape{1, 2, 2, 2, 2}, rng, -3, 5);
        const auto z = instance_norm(x, Tensor(Shape{2}, 1.0f), Tensor(Shape{2}, 0.0f));
        for (int ch = 0; ch < 2; ++ch) {
            double m = 0, s = 0;
            for (int i = 0; i < 8; ++i)
                m += z.data()[ch * 8 + i];
            m /= 8;
            for (int i = 0; i < 8; ++i)
                s += (z.data()[ch * 8 + i] - m) * (z.data()[ch * 8 + i] - m);
            CHECK(std::abs(m) < 1e-5);
            CHECK(std::abs(std::sqrt(s / 8) - 1.0) < 1e-3);
        }
    }

    TEST_CASE("softmax examples")
    {
        const auto a = softmax_lastdim(Tensor(Shape{3}, 0.0f));
        for (float v : a.data())
            CHECK(v == doctest::Approx(1.0 / 3.0));
        const auto b = softmax_lastdim(Tensor(Shape{2}, std::vector<float>{1000, 0}));
        CHECK(b.data()[0] == doctest::Approx(1.0));
        CHECK(b.data()[1] < 1e-30);
        const auto c = softmax_lastdim(Tensor(Shape{3}, std::vector<float>{1, 2, 3}));
        CHECK(c.data()[0] == doctest::Approx(0.09003).epsilon(1e-4));
        CHECK(c.data()[1] == doctest::Approx(0.24473).epsilon(1e-4));
        CHECK(c.data()[2] == doctest::Approx(0.66524).epsilon(1e-4));

        Rng rng(4);
        const auto x = random_tensor(Shape{50, 9}, rng, -1e4, 1e4);
        const auto y = softmax_lastdim(x);
        for (int r = 0; r < 50; ++r) {
            double s = 0;
            for (int i = 0; i < 9; ++i) {
                CHECK(y.data()[r * 9 + i] >= 0.0f);
                s += y.data()[r * 9 + i];
            }
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }

    TEST_CASE("trilinear upsample examples")
    {
        const auto c = trilinear_upsample(Tensor(Shape{1, 1, 2, 3, 2}, 0.7f), 2);
        CHECK(c.shape() == Shape{1, 1, 4, 6, 4});
        for (float v : c.data())
            CHECK(v == doctest::Approx(0.7));
        const auto r = trilinear_upsample(Tensor(Shape{1, 1, 1, 1, 2}, std::vector<float>{0, 1}), 2);
        CHECK(r.shape() == Shape{1, 1, 2, 2, 4});
        const float expect[] = {0.0f, 0.25f, 0.75f, 1.0f};
        for (int i = 0; i < 4; ++i)
            CHECK(r.data()[i] == doctest::Approx(expect[i]).epsilon(1e-7));
        CHECK_THROWS_AS(trilinear_upsample(r, 1), ShapeError);

        // Interior samples of a linear ramp lie on the ramp.
        const Index n = 6;
        std::vector<double> ramp;
        for (Index d = 0; d < n; ++d)
            for (Index h = 0; h < n; ++h)
                for (Index w = 0; w < n; ++w)
                    ramp.push_back(0.5 * d - 0.25 * h + 0.125 * w);
        const auto up = trilinear_upsample(Tensor64(Shape{1, 1, n, n, n}, ramp), 2);
        for (Index d = 1; d < 2 * n - 1; ++d)
            for (Index h = 1; h < 2 * n - 1; ++h)
                for (Index w = 1; w < 2 * n - 1; ++w) {
                    auto src = [](Index o) { return (o + 0.5) / 2.0 - 0.5; };
                    const double expect_v = 0.5 * src(d) - 0.25 * src(h) + 0.125 * src(w);
                    CHECK(std::abs(up.at({0, 0, d, h, w}) - expect_v) < 1e-6);
                }
    }

    TEST_CASE("haar3d examples")
    {
        const auto c = haar3d(Tensor64(Shape{1, 1, 2, 4, 2}, 1.5));
        for (Index s = 0; s < 8; ++s)
            for (Index i = 0; i < 2; ++i) {
                const double v = c.data()[static_cast<std::size_t>(s * 2 + i)];
                if (s == 0)
                    CHECK(v == doctest::Approx(1.5 * 2.0 * std::sqrt(2.0)));
                else
                    CHECK(v == 0.0);
            }

        std::vector<double> impulse(8, 0.0);
        impulse[0] = 1.0;
        const auto im = haar3d(Tensor64(Shape{1, 1, 2, 2, 2}, impulse));
        for (double v : im.data())
            CHECK(std::abs(v) == doctest::Approx(0.35355339).epsilon(1e-7));
        // Corner 0 has parity 0 for every subband, so all signs are positive.
        for (double v : im.data())
            CHECK(v > 0.0);
        // Corner 7 (all bits set): sign (-1)^popcount(s).
        std::vector<double> last(8, 0.0);
        last[7] = 1.0;
        const auto il = haar3d(Tensor64(Shape{1, 1, 2, 2, 2}, last));
        for (int s = 0; s < 8; ++s)
            CHECK((il.data()[static_cast<std::size_t>(s)] > 0) == (std::popcount(static_cast<unsigned>(s)) % 2 == 0));

        Rng rng(8);
        const auto x = random_tensor<double>(Shape{2, 3, 4, 6, 2}, rng);
        const auto sb = haar3d(x);
        double e_in = 0, e_out = 0;
        for (double v : x.data())
            e_in += v * v;
        for (double v : sb.data())
            e_out += v * v;
        CHECK(std::abs(e_in - e_out) / e_in < 1e-5);
        CHECK(max_abs_diff(haar3d_inverse(sb).data(), x.data()) < 1e-5);
        CHECK_THROWS_AS(haar3d(Tensor(Shape{1, 1, 3, 2, 2})), ShapeError);
    }

    TEST_CASE("layout helpers")
    {
        Rng rng(3);
        const auto x = random_tensor(Shape{1, 1, 3, 2, 5}, rng);
        const auto e = reflect_pad_to_even(x);
        CHECK(e.shape() == Shape{1, 1, 4, 2, 6});
        CHECK(e.at({0, 0, 3, 1, 5}) == x.at({0, 0, 1, 1, 3}));
        const auto p = pad3d(x, {1, 0, 0}, {0, 0, 2});
        CHECK(p.shape() == Shape{1, 1, 4, 2, 7});
        CHECK(p.at({0, 0, 0, 0, 0}) == 0.0f);
        CHECK(bit_equal(crop3d(p, {1, 0, 0}, {3, 2, 5}).data(), x.data()));
        const auto cc = concat<float>({x, x}, 1);
        CHECK(cc.shape() == Shape{1, 2, 3, 2, 5});
        const auto pm = permute(Tensor(Shape{2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}), {1, 0});
        CHECK(pm.data()[1] == 4.0f);
    }

    TEST_CASE("forward and backward are bit-reproducible")
    {
        auto run = [] {
            Rng rng(77);
            auto x = random_tensor(Shape{1, 2, 6, 6, 6}, rng);
            auto w = random_tensor(Shape{3, 2, 3, 3, 3}, rng);
            w.set_requires_grad(true);
            Tape<float> tape;
            const auto y = conv3d(x, w, Tensor(), Conv3dOptions::same(3));
            tape.backward(probe_loss(instance_norm(y, Tensor(Shape{3}, 1.0f), Tensor(Shape{3}, 0.0f))));
            return std::make_pair(std::vector<float>(y.data().begin(), y.data().end()), w.grad());
        };
        const auto a = run();
        const auto b = run();
        CHECK(a.first == b.first);
        CHECK(a.second == b.second);
    }
}
