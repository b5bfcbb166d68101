#include "doctest.h"

#include "m2t/metrics.hpp"
#include "support/testing.hpp"

#include <cmath>
#include <numbers>

using namespace m2t;
using namespace m2t::testing;

namespace {

Volume random_hu(const Vec3& e, Rng& rng, double lo = -1000.0, double hi = 2000.0)
{
    Volume v(e, Modality::CT, IntensityUnit::HU);
    for (auto& x : v.data)
        x = static_cast<float>(lo + (hi - lo) * rng.uniform());
    return v;
}

Volume random_mask(const Vec3& e, Rng& rng, double p = 0.5)
{
    Volume m(e, Modality::MASK, IntensityUnit::Arbitrary);
    for (auto& x : m.data)
        x = rng.uniform() < p ? 1.0f : 0.0f;
    return m;
}

Volume full_mask(const Vec3& e) { return Volume(e, Modality::MASK, IntensityUnit::Arbitrary, 1.0f); }

// Direct windowed oracle.
double ssim_oracle(const Volume& a, const Volume& b, const Volume& mask, const SsimParams& p)
{
    const Vec3& e = a.extents;
    const Index w = p.window, h = w / 2;
    const double n = static_cast<double>(w * w * w);
    const double c1 = std::pow(p.k1 * p.data_range, 2), c2 = std::pow(p.k2 * p.data_range, 2);
    double total = 0.0;
    Index count = 0;
    for (Index z = h; z + h < e[0]; ++z)
        for (Index y = h; y + h < e[1]; ++y)
            for (Index x = h; x + h < e[2]; ++x) {
                if (mask.at(z, y, x) == 0.0f)
                    continue;
                double ma = 0, mb = 0;
                for (Index dz = -h; dz <= h; ++dz)
                    for (Index dy = -h; dy <= h; ++dy)
                        for (Index dx = -h; dx <= h; ++dx) {
                            ma += a.at(z + dz, y + dy, x + dx);
                            mb += b.at(z + dz, y + dy, x + dx);
                        }
                ma /= n;
                mb /= n;
                double va = 0, vb = 0, cab = 0;
                for (Index dz = -h; dz <= h; ++dz)
                    for (Index dy = -h; dy <= h; ++dy)
                        for (Index dx = -h; dx <= h; ++dx) {
                            const double da = a.at(z + dz, y + dy, x + dx) - ma;
                            const double db = b.at(z + dz, y + dy, x + dx) - mb;
                            va += da * da;
                            vb += db * db;
                            cab += da * db;
                        }
                va /= n;
                vb /= n;
                cab /= n;
                total += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

} // namespace

TEST_SUITE("metrics")
{
    TEST_CASE("MAE")
    {
        Rng rng(1);
        const Volume a = random_hu({5, 6, 7}, rng), b = random_hu({5, 6, 7}, rng), c = random_hu({5, 6, 7}, rng);
        const Volume m = random_mask({5, 6, 7}, rng);
        CHECK(mae(a, a, m) == 0.0);
        Volume shifted = a;
        for (std::size_t i = 0; i < shifted.data.size(); ++i)
            if (m.data[i] != 0.0f)
                shifted.data[i] += 10.0f;
        CHECK(mae(shifted, a, m) == doctest::Approx(10.0).epsilon(1e-6));

        double acc = 0.0;
        Index n = 0;
        for (std::size_t i = 0; i < a.data.size(); ++i)
            if (m.data[i] != 0.0f) {
                acc += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
                ++n;
            }
        CHECK(mae(a, b, m) == doctest::Approx(acc / static_cast<double>(n)).epsilon(1e-12));
        CHECK(mae(a, b, m) == mae(b, a, m));
        CHECK(mae(a, c, m) <= mae(a, b, m) + mae(b, c, m) + 1e-9);

        CHECK_THROWS_AS(mae(a, b, Volume({5, 6, 7}, Modality::MASK, IntensityUnit::Arbitrary)), DataError);
        CHECK_THROWS_AS(mae(a, random_hu({5, 6, 8}, rng), m), DataError);
    }

    TEST_CASE("PSNR")
    {
        Volume a({4, 4, 4}, Modality::CT, IntensityUnit::HU, 0.0f);
        Volume b = a;
        const Volume m = full_mask(a.extents);
        CHECK(psnr(a, a, m) == kPsnrCapDb);
        for (auto& v : b.data)
            v = 0.1f;
        CHECK(psnr(b, a, m, 2.0) == doctest::Approx(26.0206).epsilon(1e-5));
        CHECK(psnr_from_mse(0.01, 2.0) == doctest::Approx(10.0 * std::log10(400.0)).epsilon(1e-15));
        CHECK(psnr_from_mse(4024.0 * 4024.0, kDefaultDataRange) == 0.0);
        double prev = INFINITY;
        for (double mse = 1e-3; mse < 1e6; mse *= 3.7) {
            const double p = psnr_from_mse(mse, kDefaultDataRange);
            CHECK(p < prev);
            prev = p;
        }
    }

    TEST_CASE("SSIM")
    {
        Rng rng(2);
        const Volume a = random_hu({11, 11, 11}, rng), b = random_hu({11, 11, 11}, rng);
        const Volume m = random_mask({11, 11, 11}, rng, 0.7);
        CHECK(ssim(a, a, m) == 1.0);
        CHECK(ssim(a, b, m) == doctest::Approx(ssim(b, a, m)).epsilon(1e-12));
        const SsimParams p;
        CHECK(std::abs(ssim(a, b, m) - ssim_oracle(a, b, m, p)) < 1e-6);

        SsimParams small;
        small.data_range = 2.0;
        small.window = 3;
        // Every 3-voxel run along W sums to zero, so each window mean is 0.
        Volume za({9, 9, 9}, Modality::MRI, IntensityUnit::Normalized), zb = za;
        for (Index z = 0; z < 9; ++z)
            for (Index y = 0; y < 9; ++y) {
                const double amp = 0.2 + 0.6 * rng.uniform();
                for (Index x = 0; x < 9; ++x) {
                    za.at(z, y, x) = static_cast<float>(amp * std::cos(2.0 * std::numbers::pi * x / 3.0 + 0.4));
                    zb.at(z, y, x) = -za.at(z, y, x);
                }
            }
        const Volume fm = full_mask(za.extents);
        CHECK(ssim(za, zb, fm, small) < 0.0);
        CHECK(std::abs(ssim(za, zb, fm, small) - ssim_oracle(za, zb, fm, small)) < 1e-6);
        const double s = ssim(a, b, m);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);

        CHECK_THROWS_AS(ssim(random_hu({6, 11, 11}, rng), random_hu({6, 11, 11}, rng), full_mask({6, 11, 11})),
                        DataError);
        Volume corner({11, 11, 11}, Modality::MASK, IntensityUnit::Arbitrary);
        corner.at(0, 0, 0) = 1.0f;
        CHECK_THROWS_AS(ssim(a, b, corner), DataError);
    }

    TEST_CASE("Dice")
    {
        const Vec3 e{4, 4, 4};
        Volume a(e, Modality::MASK, IntensityUnit::Arbitrary), b = a;
        CHECK(dice(a, b) == 1.0);
        for (Index z = 1; z < 3; ++z)
            for (Index y = 1; y < 3; ++y)
                for (Index x = 1; x < 3; ++x) {
                    a.at(z, y, x) = 1.0f;
                    b.at(z, y, x + 1) = 1.0f;
                }
        CHECK(dice(a, a) == 1.0);
        CHECK(dice(a, b) == 0.5);
        CHECK(dice(b, a) == 0.5);
        Volume far(e, Modality::MASK, IntensityUnit::Arbitrary);
        far.at(0, 0, 0) = 1.0f;
        CHECK(dice(a, far) == 0.0);
        Volume bad = a;
        bad.modality = Modality::CT;
        CHECK_THROWS_AS(dice(bad, a), DataError);
    }

    TEST_CASE("evaluate and report")
    {
        Rng rng(3);
        const Volume ref = random_hu({9, 10, 11}, rng);
        const Volume body = full_mask(ref.extents);
        const auto same = evaluate(ref, ref, body, {bone_structures(ref, ref)});
        CHECK(same.mae_hu == 0.0);
        CHECK(same.ssim == 1.0);
        CHECK(same.psnr_db == kPsnrCapDb);
        CHECK(same.dice.at("bone") == 1.0);
        CHECK(same.body_voxels == 990);

        const Json j = to_json(same);
        CHECK(j.at("config").at("ssim_window") == 7);
        CHECK(j.at("config").at("data_range_hu") == 4024.0);
        CHECK(j.at("mask") == "body");
        CHECK(j.at("structure_voxels").at("bone").at("pred") == same.structure_voxels.at("bone").first);

        Volume sct = ref;
        sct.modality = Modality::SCT;
        for (auto& v : sct.data)
            v += 20.0f;
        const auto r = evaluate(sct, ref, body, {bone_structures(sct, ref)});
        CHECK(r.mae_hu == doctest::Approx(20.0).epsilon(1e-6));
        CHECK(r.dice.at("bone") < 1.0);
        CHECK_THROWS_AS(evaluate(normalize_hu(sct), ref, body, {}), DataError);
    }
}
