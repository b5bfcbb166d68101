#include "doctest.h"

#include "m2t/volume.hpp"
#include "support/testing.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace m2t;
using namespace m2t::testing;

namespace {

Volume random_hu(const Vec3& e, Rng& rng, double lo = -1500.0, double hi = 3500.0)
{
    Volume v(e, Modality::CT, IntensityUnit::HU);
    for (auto& x : v.data)
        x = static_cast<float>(lo + (hi - lo) * rng.uniform());
    return v;
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("m2t_test_" + name)).string();
}

} // namespace

TEST_SUITE("volume")
{
    TEST_CASE("HU normalization endpoints and round trip")
    {
        CHECK(normalize_hu_value(-1024.0) == -1.0);
        CHECK(normalize_hu_value(3000.0) == 1.0);
        CHECK(normalize_hu_value(988.0) == 0.0);
        CHECK(normalize_hu_value(-3000.0) == -1.0);
        CHECK(normalize_hu_value(5000.0) == 1.0);

        Rng rng(1);
        const Volume ct = random_hu({6, 7, 8}, rng);
        const Volume n = normalize_hu(ct);
        n.validate();
        const Volume back = denormalize_hu(n);
        CHECK(back.unit == IntensityUnit::HU);
        CHECK(back.modality == Modality::SCT);
        double worst = 0.0;
        for (std::size_t i = 0; i < ct.data.size(); ++i) {
            const double clipped = std::clamp(static_cast<double>(ct.data[i]), kHuMin, kHuMax);
            worst = std::max(worst, std::abs(back.data[i] - clipped));
        }
        CHECK(worst < 0.5);
        CHECK_THROWS_AS(normalize_hu(n), DataError);
    }

    TEST_CASE("MRI min-max normalization")
    {
        Volume v({1, 1, 4}, Modality::MRI, IntensityUnit::Arbitrary);
        v.data = {2.0f, 4.0f, 3.0f, 6.0f};
        const auto n = normalize_mri(v);
        CHECK(n.data == std::vector<float>{-1.0f, 0.0f, -0.5f, 1.0f});
        v.data = {5.0f, 5.0f, 5.0f, 5.0f};
        CHECK(normalize_mri(v).data == std::vector<float>(4, 0.0f));
    }

    TEST_CASE("RVOL round trip is bit exact")
    {
        Rng rng(2);
        Volume v = random_hu({3, 5, 7}, rng);
        v.spacing = {2.5, 0.7, 1.0 / 3.0};
        v.comment = "round trip";
        const auto path = temp_path("rt.rvol");
        write_rvol(path, v);
        CHECK(std::filesystem::file_size(path) == kRvolHeaderBytes + 4 * 105);
        const Volume r = read_rvol(path);
        CHECK(r.extents == v.extents);
        CHECK(r.spacing == v.spacing);
        CHECK(r.modality == Modality::CT);
        CHECK(r.unit == IntensityUnit::HU);
        CHECK(r.comment == "round trip");
        CHECK(bit_equal(std::span<const float>(r.data), std::span<const float>(v.data)));

        // W fastest, little-endian: voxel (0, 0, 1) follows voxel (0, 0, 0).
        std::ifstream in(path, std::ios::binary);
        in.seekg(static_cast<std::streamoff>(kRvolHeaderBytes + 4));
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        CHECK(std::bit_cast<float>(bits) == v.at(0, 0, 1));
        std::filesystem::remove(path);
    }

    TEST_CASE("RVOL rejects malformed files")
    {
        const auto path = temp_path("bad.rvol");
        {
            std::ofstream out(path, std::ios::binary);
            out << "NOPE";
        }
        CHECK_THROWS_AS(read_rvol(path), DataError);
        Volume v({2, 2, 2}, Modality::CT, IntensityUnit::HU);
        write_rvol(path, v);
        std::filesystem::resize_file(path, kRvolHeaderBytes + 12);
        CHECK_THROWS_WITH_AS(read_rvol(path), doctest::Contains("truncated"), DataError);
        CHECK_THROWS_AS(read_rvol(temp_path("missing.rvol")), DataError);
        std::filesystem::remove(path);

        Volume bad({2, 2, 2}, Modality::MASK, IntensityUnit::Arbitrary);
        bad.data[3] = 0.5f;
        CHECK_THROWS_AS(write_rvol(path, bad), DataError);
        Volume norm({2, 2, 2}, Modality::MRI, IntensityUnit::Normalized);
        norm.data[0] = 1.5f;
        CHECK_THROWS_AS(norm.validate(), DataError);
        norm.data[0] = 0.0f;
        norm.spacing[1] = 0.0;
        CHECK_THROWS_AS(norm.validate(), DataError);
    }

    TEST_CASE("resampling identity and constants")
    {
        Rng rng(3);
        const Volume v = random_hu({5, 6, 7}, rng);
        const Volume same = resample_isotropic(v, 1.0);
        CHECK(same.extents == v.extents);
        CHECK(bit_equal(std::span<const float>(same.data), std::span<const float>(v.data)));

        Volume c({4, 6, 5}, Modality::CT, IntensityUnit::HU, 42.0f);
        c.spacing = {2.0, 1.5, 0.8};
        const Volume r = resample_isotropic(c, 1.0);
        CHECK(r.extents == Vec3{8, 9, 4});
        CHECK(r.spacing == std::array<double, 3>{1.0, 1.0, 1.0});
        for (float x : r.data)
            CHECK(x == doctest::Approx(42.0f).epsilon(1e-6));
    }

    TEST_CASE("resampling a linear ramp reproduces the analytic ramp")
    {
        // Physical position of voxel i is (i + 0.5) * spacing.
        const double sp = 2.0;
        Volume v({3, 4, 10}, Modality::CT, IntensityUnit::HU);
        v.spacing = {1.0, 1.0, sp};
        for (Index z = 0; z < 3; ++z)
            for (Index y = 0; y < 4; ++y)
                for (Index x = 0; x < 10; ++x)
                    v.at(z, y, x) = static_cast<float>(3.0 * (x + 0.5) * sp - 7.0);
        const Volume r = resample_isotropic(v, 1.0);
        CHECK(r.extents == Vec3{3, 4, 20});
        Index checked = 0;
        for (Index x = 0; x < 20; ++x) {
            const double pos = x + 0.5;
            if (pos < 0.5 * sp || pos > (10 - 0.5) * sp)
                continue; // clamped edge
            ++checked;
            for (Index z = 0; z < 3; ++z)
                for (Index y = 0; y < 4; ++y)
                    CHECK(std::abs(r.at(z, y, x) - (3.0 * pos - 7.0)) < 1e-4);
        }
        CHECK(checked == 18);
    }

    TEST_CASE("body mask")
    {
        Volume air({6, 8, 8}, Modality::CT, IntensityUnit::HU, -1024.0f);
        const Volume empty = body_mask(air);
        for (float m : empty.data)
            CHECK(m == 0.0f);

        PhantomSpec s;
        s.extents = {12, 20, 24};
        s.noise_sigma = 0.0;
        const PhantomComponent body{"soft", {5.5, 9.3, 11.7}, {4.8, 7.9, 9.6}};
        s.components = {body};
        const auto pair = make_phantom_pair(s);
        const Volume m = body_mask(pair.ct);
        m.validate();
        Index mismatches = 0;
        for (Index z = 0; z < 12; ++z)
            for (Index y = 0; y < 20; ++y)
                for (Index x = 0; x < 24; ++x)
                    mismatches += (m.at(z, y, x) == 1.0f) != inside_ellipsoid(body, z, y, x);
        CHECK(mismatches == 0);

        Volume as_ct = m;
        as_ct.modality = Modality::CT;
        as_ct.unit = IntensityUnit::HU;
        for (auto& x : as_ct.data)
            x = x == 1.0f ? 0.0f : -1024.0f;
        CHECK(body_mask(as_ct).data == m.data);
    }

    TEST_CASE("body mask keeps the largest component and fills slice holes")
    {
        Volume ct({3, 9, 9}, Modality::CT, IntensityUnit::HU, -1024.0f);
        for (Index z = 0; z < 3; ++z)
            for (Index y = 1; y <= 7; ++y)
                for (Index x = 1; x <= 7; ++x)
                    ct.at(z, y, x) = (y == 4 && x == 4) ? -1000.0f : 0.0f; // air core
        ct.at(1, 0, 8) = 200.0f; // isolated speck
        const Volume m = body_mask(ct);
        CHECK(m.at(1, 4, 4) == 1.0f);
        CHECK(m.at(1, 0, 8) == 0.0f);
        double count = 0;
        for (float v : m.data)
            count += v;
        CHECK(count == 3 * 49);
    }

    TEST_CASE("phantoms are deterministic and geometric")
    {
        const PhantomSpec desk = desk_phantom_spec();
        const auto a = make_phantom_pair(desk);
        const auto b = make_phantom_pair(desk);
        CHECK(bit_equal(std::span<const float>(a.mri.data), std::span<const float>(b.mri.data)));
        CHECK(bit_equal(std::span<const float>(a.ct.data), std::span<const float>(b.ct.data)));
        CHECK(a.ct.extents == Vec3{16, 32, 32});

        PhantomSpec other = desk;
        other.seed = 8;
        CHECK_FALSE(bit_equal(std::span<const float>(a.mri.data),
                              std::span<const float>(make_phantom_pair(other).mri.data)));

        // Body mask holds every component voxel.
        const Volume m = body_mask(a.ct);
        for (std::size_t i = 0; i < a.labels.size(); ++i)
            if (a.labels[i] != 0)
                CHECK(m.data[i] == 1.0f);

        PhantomSpec none;
        none.extents = {4, 5, 6};
        none.noise_sigma = 0.05;
        const auto air = make_phantom_pair(none);
        double mean = 0.0;
        for (std::size_t i = 0; i < air.ct.data.size(); ++i) {
            CHECK(air.ct.data[i] == -1024.0f);
            mean += air.mri.data[i];
        }
        CHECK(std::abs(mean / 120.0) < 0.03);
    }

    TEST_CASE("component voxel counts match ellipsoid volumes")
    {
        for (const std::array<double, 3> r : {std::array<double, 3>{4, 4, 4}, {4.5, 6, 8}, {5, 4, 7.25}}) {
            PhantomSpec s;
            s.extents = {24, 24, 24};
            s.noise_sigma = 0.0;
            s.components = {{"bone", {11.3, 11.6, 11.9}, r}};
            const auto p = make_phantom_pair(s);
            double count = 0;
            for (auto l : p.labels)
                count += l == 1;
            const double analytic = 4.0 / 3.0 * std::numbers::pi * r[0] * r[1] * r[2];
            CHECK(std::abs(count - analytic) / analytic < 0.05);
        }
    }

    TEST_CASE("random components stay inside the body")
    {
        PhantomSpec s;
        s.extents = {16, 32, 32};
        s.seed = 3;
        s.components = {{"soft", {7.5, 15.5, 15.5}, {7, 14, 14}}};
        s.random_components = 6;
        const auto p = make_phantom_pair(s);
        Index seen = 0;
        for (Index z = 0; z < 16; ++z)
            for (Index y = 0; y < 32; ++y)
                for (Index x = 0; x < 32; ++x) {
                    const auto l = p.labels[p.ct.offset(z, y, x)];
                    if (l > 1) {
                        ++seen;
                        CHECK(inside_ellipsoid(s.components[0], z, y, x));
                    }
                }
        CHECK(seen > 0);
    }

    TEST_CASE("phantom spec JSON")
    {
        const auto s = desk_phantom_spec(11);
        CHECK(to_json(phantom_spec_from_json(to_json(s))) == to_json(s));
        auto j = to_json(s);
        j["components"][2]["tissue"] = "marrow";
        CHECK_THROWS_WITH_AS(phantom_spec_from_json(j), doctest::Contains("marrow"), ConfigError);
        j = to_json(s);
        j["components"][0]["radius"] = 2;
        CHECK_THROWS_WITH_AS(phantom_spec_from_json(j), doctest::Contains("phantom.components[0].radius"),
                             ConfigError);
        j = to_json(s);
        j["components"][0]["center"] = {7.5, 15.5, 30.0};
        CHECK_THROWS_WITH_AS(phantom_spec_from_json(j), doctest::Contains("leaves the volume"), ConfigError);
    }

    TEST_CASE("patch sampling")
    {
        Rng rng(4);
        const Volume mri = random_hu({10, 12, 14}, rng);
        const Volume ct = random_hu({10, 12, 14}, rng);
        Volume full(ct.extents, Modality::MASK, IntensityUnit::Arbitrary, 1.0f);
        const auto whole = sample_patch(mri, ct, full, ct.extents, rng);
        CHECK(whole.origin == Vec3{0, 0, 0});
        CHECK(whole.ct.data == ct.data);
        CHECK(whole.mri.data == mri.data);

        // Off-center mask: a small block near one corner.
        Volume mask(ct.extents, Modality::MASK, IntensityUnit::Arbitrary, 0.0f);
        for (Index z = 6; z < 9; ++z)
            for (Index y = 1; y < 3; ++y)
                for (Index x = 9; x < 13; ++x)
                    mask.at(z, y, x) = 1.0f;
        const Vec3 patch{4, 4, 6};
        Index inside = 0;
        for (int i = 0; i < 10000; ++i) {
            const auto s = sample_patch(mri, ct, mask, patch, rng);
            inside += mask.at(s.origin[0] + 2, s.origin[1] + 2, s.origin[2] + 3) == 1.0f;
            if (i % 1000 == 0) {
                CHECK(s.ct.data == crop(ct, s.origin, patch).data);
                CHECK(s.mri.data == crop(mri, s.origin, patch).data);
            }
        }
        CHECK(inside == 10000);

        Volume nothing(ct.extents, Modality::MASK, IntensityUnit::Arbitrary, 0.0f);
        CHECK_THROWS_AS(sample_patch(mri, ct, nothing, patch, rng), DataError);
        CHECK_THROWS_AS(sample_patch(mri, ct, full, Vec3{11, 4, 4}, rng), DataError);
    }
}
