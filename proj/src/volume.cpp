#include "m2t/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace m2t {

namespace {

constexpr const char* kModalityNames[] = {"MRI", "CT", "SCT", "MASK"};
constexpr const char* kUnitNames[] = {"HU", "normalized", "arbitrary"};

void check_extents(const Vec3& e, const char* what)
{
    for (Index v : e)
        if (v < 1)
            throw DataError(std::string(what) + ": extents " + vec3_str(e) + " must be positive");
}

std::uint32_t bswap32(std::uint32_t v)
{
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

void to_little_endian(std::vector<float>& data)
{
    if constexpr (std::endian::native == std::endian::big)
        for (auto& f : data)
            f = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(f)));
}

} // namespace

std::string to_string(Modality m) { return kModalityNames[static_cast<int>(m)]; }
std::string to_string(IntensityUnit u) { return kUnitNames[static_cast<int>(u)]; }

Modality parse_modality(const std::string& s)
{
    for (int i = 0; i < 4; ++i)
        if (s == kModalityNames[i])
            return static_cast<Modality>(i);
    throw DataError("unknown modality '" + s + "'");
}

IntensityUnit parse_unit(const std::string& s)
{
    for (int i = 0; i < 3; ++i)
        if (s == kUnitNames[i])
            return static_cast<IntensityUnit>(i);
    throw DataError("unknown intensity unit '" + s + "'");
}

Volume::Volume(Vec3 e, Modality m, IntensityUnit u, float fill) : extents(e), modality(m), unit(u)
{
    check_extents(e, "volume");
    data.assign(static_cast<std::size_t>(voxels()), fill);
}

void Volume::validate() const
{
    check_extents(extents, "volume");
    for (double s : spacing)
        if (!(s > 0.0) || !std::isfinite(s))
            throw DataError("volume: spacing must be positive and finite");
    if (data.size() != static_cast<std::size_t>(voxels()))
        throw DataError("volume: data size " + std::to_string(data.size()) + " does not match extents " +
                        vec3_str(extents));
    for (float v : data)
        if (!std::isfinite(v))
            throw DataError("volume: non-finite voxel value");
    if (unit == IntensityUnit::Normalized && modality != Modality::MASK)
        for (float v : data)
            if (v < -1.0f || v > 1.0f)
                throw DataError("volume: normalized value " + std::to_string(v) + " outside [-1, 1]");
    if (modality == Modality::MASK)
        for (float v : data)
            if (v != 0.0f && v != 1.0f)
                throw DataError("volume: mask value " + std::to_string(v) + " is not 0 or 1");
}

void require_same_extents(const Volume& a, const Volume& b, const char* what)
{
    if (a.extents != b.extents)
        throw DataError(std::string(what) + ": extents differ, " + vec3_str(a.extents) + " vs " +
                        vec3_str(b.extents));
}

// ---- RVOL -----------------------------------------------------------------

void write_rvol(const std::string& path, const Volume& v)
{
    v.validate();
    if (v.comment.find('\n') != std::string::npos)
        throw DataError("rvol: comment must be a single line");
    std::ostringstream h;
    h << std::setprecision(17);
    h << "RVOL1\n";
    h << "extents " << v.extents[0] << ' ' << v.extents[1] << ' ' << v.extents[2] << '\n';
    h << "spacing " << v.spacing[0] << ' ' << v.spacing[1] << ' ' << v.spacing[2] << '\n';
    h << "unit " << to_string(v.unit) << '\n';
    h << "modality " << to_string(v.modality) << '\n';
    h << "comment " << v.comment << '\n';
    std::string header = h.str();
    if (header.size() > kRvolHeaderBytes)
        throw DataError("rvol: header exceeds " + std::to_string(kRvolHeaderBytes) + " bytes; shorten the comment");
    header.resize(kRvolHeaderBytes, '\0');

    std::vector<float> body = v.data;
    to_little_endian(body);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size() * 4));
    if (!out)
        throw DataError("write failed for " + path);
}

Volume read_rvol(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path);
    std::string header(kRvolHeaderBytes, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header.size()));
    if (in.gcount() != static_cast<std::streamsize>(kRvolHeaderBytes))
        throw DataError(path + ": truncated RVOL header");
    header.resize(std::strlen(header.c_str()));

    std::istringstream lines(header);
    std::string line;
    if (!std::getline(lines, line) || line != "RVOL1")
        throw DataError(path + ": not an RVOL1 file");
    Volume v;
    bool have_extents = false, have_spacing = false, have_unit = false, have_modality = false;
    while (std::getline(lines, line)) {
        const auto sp = line.find(' ');
        const std::string key = line.substr(0, sp);
        const std::string rest = sp == std::string::npos ? std::string() : line.substr(sp + 1);
        std::istringstream vals(rest);
        if (key == "extents") {
            have_extents = static_cast<bool>(vals >> v.extents[0] >> v.extents[1] >> v.extents[2]);
        } else if (key == "spacing") {
            have_spacing = static_cast<bool>(vals >> v.spacing[0] >> v.spacing[1] >> v.spacing[2]);
        } else if (key == "unit") {
            v.unit = parse_unit(rest);
            have_unit = true;
        } else if (key == "modality") {
            v.modality = parse_modality(rest);
            have_modality = true;
        } else if (key == "comment") {
            v.comment = rest;
        } else if (!key.empty()) {
            throw DataError(path + ": unknown RVOL header field '" + key + "'");
        }
    }
    if (!(have_extents && have_spacing && have_unit && have_modality))
        throw DataError(path + ": RVOL header lacks extents, spacing, unit or modality");
    check_extents(v.extents, path.c_str());

    v.data.resize(static_cast<std::size_t>(v.voxels()));
    in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(v.data.size() * 4))
        throw DataError(path + ": truncated voxel data");
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError(path + ": trailing bytes after voxel data");
    to_little_endian(v.data);
    v.validate();
    return v;
}

// ---- intensities ----------------------------------------------------------

double normalize_hu_value(double hu)
{
    const double c = std::clamp(hu, kHuMin, kHuMax);
    return (c - 0.5 * (kHuMin + kHuMax)) / (0.5 * (kHuMax - kHuMin));
}

double denormalize_hu_value(double v) { return v * 0.5 * (kHuMax - kHuMin) + 0.5 * (kHuMin + kHuMax); }

Volume normalize_hu(const Volume& ct)
{
    if (ct.unit != IntensityUnit::HU)
        throw DataError("normalize_hu: input must be in HU, got " + to_string(ct.unit));
    Volume out = ct;
    out.unit = IntensityUnit::Normalized;
    for (auto& v : out.data)
        v = static_cast<float>(normalize_hu_value(v));
    return out;
}

Volume denormalize_hu(const Volume& normalized, Modality modality)
{
    if (normalized.unit != IntensityUnit::Normalized)
        throw DataError("denormalize_hu: input must be normalized, got " + to_string(normalized.unit));
    Volume out = normalized;
    out.unit = IntensityUnit::HU;
    out.modality = modality;
    for (auto& v : out.data)
        v = static_cast<float>(denormalize_hu_value(std::clamp(static_cast<double>(v), -1.0, 1.0)));
    return out;
}

Volume normalize_mri(const Volume& mri)
{
    Volume out = mri;
    out.unit = IntensityUnit::Normalized;
    if (mri.data.empty())
        return out;
    const auto [lo_it, hi_it] = std::minmax_element(mri.data.begin(), mri.data.end());
    const double lo = *lo_it, hi = *hi_it;
    for (auto& v : out.data)
        v = hi > lo ? static_cast<float>(std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0)) : 0.0f;
    return out;
}

// ---- resampling -----------------------------------------------------------

Volume resample_isotropic(const Volume& v, double target_mm)
{
    if (!(target_mm > 0.0) || !std::isfinite(target_mm))
        throw ConfigError("resample_isotropic: target spacing must be positive");
    v.validate();
    Vec3 ext{};
    for (int a = 0; a < 3; ++a)
        ext[a] = std::max<Index>(1, std::llround(static_cast<double>(v.extents[a]) * v.spacing[a] / target_mm));
    Volume out(ext, v.modality, v.unit);
    out.spacing = {target_mm, target_mm, target_mm};
    out.comment = v.comment;

    // Per-axis lower index and weight, precomputed.
    std::array<std::vector<Index>, 3> i0;
    std::array<std::vector<double>, 3> frac;
    for (int a = 0; a < 3; ++a) {
        const Index n = v.extents[a];
        for (Index j = 0; j < ext[a]; ++j) {
            double s = (static_cast<double>(j) + 0.5) * target_mm / v.spacing[a] - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(n - 1));
            const Index lo = std::min<Index>(static_cast<Index>(std::floor(s)), std::max<Index>(n - 2, 0));
            i0[a].push_back(lo);
            frac[a].push_back(n == 1 ? 0.0 : s - static_cast<double>(lo));
        }
    }
    const Vec3& e = v.extents;
    auto src = [&](Index z, Index y, Index x) {
        return static_cast<double>(v.at(std::min(z, e[0] - 1), std::min(y, e[1] - 1), std::min(x, e[2] - 1)));
    };
    for (Index z = 0; z < ext[0]; ++z)
        for (Index y = 0; y < ext[1]; ++y)
            for (Index x = 0; x < ext[2]; ++x) {
                const Index z0 = i0[0][z], y0 = i0[1][y], x0 = i0[2][x];
                const double fz = frac[0][z], fy = frac[1][y], fx = frac[2][x];
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double w = (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
                            if (w != 0.0)
                                acc += w * src(z0 + dz, y0 + dy, x0 + dx);
                        }
                out.at(z, y, x) = static_cast<float>(acc);
            }
    if (v.modality == Modality::MASK)
        for (auto& m : out.data)
            m = m >= 0.5f ? 1.0f : 0.0f;
    return out;
}

// ---- masks ----------------------------------------------------------------

Volume threshold_mask(const Volume& ct, double threshold_hu)
{
    if (ct.unit != IntensityUnit::HU)
        throw DataError("threshold_mask: input must be in HU");
    Volume m(ct.extents, Modality::MASK, IntensityUnit::Arbitrary);
    m.spacing = ct.spacing;
    for (std::size_t i = 0; i < ct.data.size(); ++i)
        m.data[i] = ct.data[i] > threshold_hu ? 1.0f : 0.0f;
    return m;
}

Volume body_mask(const Volume& ct)
{
    Volume m = threshold_mask(ct, kBodyThresholdHu);
    const Vec3 e = m.extents;
    const std::size_t n = m.data.size();

    // Largest 6-connected foreground component.
    std::vector<std::int32_t> label(n, 0);
    std::vector<std::size_t> stack;
    std::int32_t best = 0, next = 0;
    std::size_t best_size = 0;
    const std::ptrdiff_t sw = 1, sh = e[2], sd = e[1] * e[2];
    for (std::size_t s = 0; s < n; ++s) {
        if (m.data[s] == 0.0f || label[s])
            continue;
        ++next;
        std::size_t size = 0;
        label[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++size;
            const Index x = static_cast<Index>(i) % e[2];
            const Index y = static_cast<Index>(i) / e[2] % e[1];
            const Index z = static_cast<Index>(i) / (e[1] * e[2]);
            const std::pair<bool, std::ptrdiff_t> nb[6] = {{x > 0, -sw},        {x + 1 < e[2], sw},
                                                           {y > 0, -sh},        {y + 1 < e[1], sh},
                                                           {z > 0, -sd},        {z + 1 < e[0], sd}};
            for (const auto& [ok, d] : nb) {
                if (!ok)
                    continue;
                const std::size_t j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + d);
                if (m.data[j] != 0.0f && !label[j]) {
                    label[j] = next;
                    stack.push_back(j);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best = next;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        m.data[i] = (best != 0 && label[i] == best) ? 1.0f : 0.0f;

    // Per axial slice: background not 4-reachable from the slice border is a hole.
    const std::size_t plane = static_cast<std::size_t>(e[1] * e[2]);
    std::vector<char> outside(plane);
    for (Index z = 0; z < e[0]; ++z) {
        float* s = m.data.data() + static_cast<std::size_t>(z) * plane;
        std::fill(outside.begin(), outside.end(), 0);
        auto seed = [&](Index y, Index x) {
            const std::size_t i = static_cast<std::size_t>(y * e[2] + x);
            if (s[i] == 0.0f && !outside[i]) {
                outside[i] = 1;
                stack.push_back(i);
            }
        };
        for (Index y = 0; y < e[1]; ++y) {
            seed(y, 0);
            seed(y, e[2] - 1);
        }
        for (Index x = 0; x < e[2]; ++x) {
            seed(0, x);
            seed(e[1] - 1, x);
        }
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const Index x = static_cast<Index>(i) % e[2], y = static_cast<Index>(i) / e[2];
            if (x > 0)
                seed(y, x - 1);
            if (x + 1 < e[2])
                seed(y, x + 1);
            if (y > 0)
                seed(y - 1, x);
            if (y + 1 < e[1])
                seed(y + 1, x);
        }
        for (std::size_t i = 0; i < plane; ++i)
            if (!outside[i])
                s[i] = 1.0f;
    }
    return m;
}

// ---- cropping and tensors -------------------------------------------------

Volume crop(const Volume& v, const Vec3& origin, const Vec3& extents)
{
    for (int a = 0; a < 3; ++a)
        if (origin[a] < 0 || extents[a] < 1 || origin[a] + extents[a] > v.extents[a])
            throw DataError("crop: region " + vec3_str(origin) + " + " + vec3_str(extents) + " exceeds volume " +
                            vec3_str(v.extents));
    Volume out(extents, v.modality, v.unit);
    out.spacing = v.spacing;
    for (Index z = 0; z < extents[0]; ++z)
        for (Index y = 0; y < extents[1]; ++y) {
            const float* src = &v.data[v.offset(origin[0] + z, origin[1] + y, origin[2])];
            std::copy(src, src + extents[2], &out.data[out.offset(z, y, 0)]);
        }
    return out;
}

Tensor to_tensor(const Volume& v)
{
    return Tensor(Shape{1, 1, v.extents[0], v.extents[1], v.extents[2]}, v.data);
}

Volume from_tensor(const Tensor& t, Modality modality, IntensityUnit unit)
{
    if (t.rank() != 5 || t.dim(0) != 1 || t.dim(1) != 1)
        throw ShapeError("from_tensor: expected [1,1,D,H,W], got " + shape_str(t.shape()));
    Volume v({t.dim(2), t.dim(3), t.dim(4)}, modality, unit);
    const auto d = t.data();
    std::copy(d.begin(), d.end(), v.data.begin());
    return v;
}

// ---- phantoms -------------------------------------------------------------

const std::vector<Tissue>& tissue_table()
{
    static const std::vector<Tissue> table = {
        {"soft", 0.55, 40.0},   {"fat", 0.95, -100.0},   {"fluid", 0.80, 15.0},
        {"bone", 0.12, 1100.0}, {"dense", 0.08, 1500.0},
    };
    return table;
}

const Tissue& tissue_by_name(const std::string& name)
{
    for (const auto& t : tissue_table())
        if (t.name == name)
            return t;
    throw ConfigError("unknown tissue '" + name + "'");
}

bool inside_ellipsoid(const PhantomComponent& c, Index z, Index y, Index x)
{
    const double p[3] = {static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
    double r = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = (p[a] - c.center[a]) / c.radii[a];
        r += d * d;
    }
    return r <= 1.0;
}

void PhantomSpec::validate() const
{
    for (Index e : extents)
        if (e < 1)
            throw ConfigError("phantom: extents " + vec3_str(extents) + " must be positive");
    for (double s : spacing)
        if (!(s > 0.0))
            throw ConfigError("phantom: spacing must be positive");
    if (!(noise_sigma >= 0.0))
        throw ConfigError("phantom: noise_sigma must be nonnegative");
    if (random_components < 0)
        throw ConfigError("phantom: random_components must be nonnegative");
    if (random_components > 0 && components.empty())
        throw ConfigError("phantom: random components need an enclosing first component");
    for (std::size_t i = 0; i < components.size(); ++i) {
        const auto& c = components[i];
        const std::string where = "phantom.components[" + std::to_string(i) + "]";
        const Tissue& t = tissue_by_name(c.tissue);
        if (t.hu < kHuMin || t.hu > kHuMax)
            throw ConfigError(where + ": HU outside the clip range");
        for (int a = 0; a < 3; ++a) {
            if (!(c.radii[a] > 0.0))
                throw ConfigError(where + ": radii must be positive");
            if (c.center[a] - c.radii[a] < -0.5 || c.center[a] + c.radii[a] > static_cast<double>(extents[a]) - 0.5)
                throw ConfigError(where + ": ellipsoid leaves the volume");
        }
    }
}

Json to_json(const PhantomSpec& s)
{
    Json comps = Json::array();
    for (const auto& c : s.components)
        comps.push_back(Json{{"tissue", c.tissue}, {"center", c.center}, {"radii", c.radii}});
    return Json{{"extents", s.extents},
                {"spacing", s.spacing},
                {"seed", s.seed},
                {"components", comps},
                {"random_components", s.random_components},
                {"noise_sigma", s.noise_sigma}};
}

PhantomSpec phantom_spec_from_json(const Json& j, const std::string& path)
{
    PhantomSpec s;
    JsonObjectReader r(j, path);
    r.optional("extents", s.extents);
    r.optional("spacing", s.spacing);
    r.optional("seed", s.seed);
    if (const Json* comps = r.take("components")) {
        if (!comps->is_array())
            throw ConfigError("'" + r.qualified("components") + "' must be an array");
        s.components.clear();
        for (std::size_t i = 0; i < comps->size(); ++i) {
            PhantomComponent c;
            JsonObjectReader cr((*comps)[i], r.qualified("components") + "[" + std::to_string(i) + "]");
            cr.required("tissue", c.tissue);
            cr.required("center", c.center);
            cr.required("radii", c.radii);
            cr.finish();
            s.components.push_back(c);
        }
    }
    r.optional("random_components", s.random_components);
    r.optional("noise_sigma", s.noise_sigma);
    r.finish();
    s.validate();
    return s;
}

PhantomSpec desk_phantom_spec(std::uint64_t seed)
{
    PhantomSpec s;
    s.extents = {16, 32, 32};
    s.seed = seed;
    s.noise_sigma = 0.02;
    s.components = {
        {"fat", {7.5, 15.5, 15.5}, {7.4, 14.5, 14.0}},
        {"soft", {7.5, 15.5, 15.5}, {6.2, 12.5, 12.0}},
        {"bone", {7.5, 21.5, 15.5}, {4.5, 4.0, 4.0}},
        {"dense", {7.5, 21.5, 15.5}, {2.5, 2.0, 2.0}},
        {"fluid", {7.5, 11.0, 9.5}, {3.5, 3.5, 3.0}},
        {"fluid", {7.5, 11.0, 21.5}, {3.5, 3.5, 3.0}},
        {"fat", {5.0, 8.0, 15.5}, {2.0, 1.5, 2.5}},
    };
    return s;
}

PhantomPair make_phantom_pair(const PhantomSpec& spec)
{
    spec.validate();
    Rng rng(spec.seed);
    std::vector<PhantomComponent> comps = spec.components;
    if (spec.random_components > 0) {
        // Random inclusions drawn strictly inside the first component.
        const PhantomComponent body = comps.front();
        const double rmin = std::min({body.radii[0], body.radii[1], body.radii[2]});
        const auto& table = tissue_table();
        for (Index k = 0; k < spec.random_components; ++k) {
            PhantomComponent c;
            c.tissue = table[static_cast<std::size_t>(rng.uniform_int(1, static_cast<Index>(table.size()) - 1))].name;
            const double rmax = std::max(1.0, 0.35 * rmin);
            for (auto& r : c.radii)
                r = 1.0 + rng.uniform() * (rmax - 1.0);
            const double margin = std::max(0.0, 1.0 - std::max({c.radii[0], c.radii[1], c.radii[2]}) / rmin);
            // Uniform direction and radius within the shrunken unit ball.
            double u[3], norm = 0.0;
            do {
                norm = 0.0;
                for (auto& v : u) {
                    v = 2.0 * rng.uniform() - 1.0;
                    norm += v * v;
                }
            } while (norm > 1.0);
            for (int a = 0; a < 3; ++a)
                c.center[a] = body.center[a] + u[a] * margin * body.radii[a];
            comps.push_back(c);
        }
    }

    PhantomPair p;
    p.mri = Volume(spec.extents, Modality::MRI, IntensityUnit::Arbitrary, 0.0f);
    p.ct = Volume(spec.extents, Modality::CT, IntensityUnit::HU, static_cast<float>(kHuMin));
    p.mri.spacing = p.ct.spacing = spec.spacing;
    p.labels.assign(p.ct.data.size(), 0);
    const Vec3& e = spec.extents;
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
        const auto& c = comps[ci];
        const Tissue& t = tissue_by_name(c.tissue);
        Index lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max<Index>(0, static_cast<Index>(std::floor(c.center[a] - c.radii[a])));
            hi[a] = std::min<Index>(e[a] - 1, static_cast<Index>(std::ceil(c.center[a] + c.radii[a])));
        }
        for (Index z = lo[0]; z <= hi[0]; ++z)
            for (Index y = lo[1]; y <= hi[1]; ++y)
                for (Index x = lo[2]; x <= hi[2]; ++x)
                    if (inside_ellipsoid(c, z, y, x)) {
                        const std::size_t i = p.ct.offset(z, y, x);
                        p.mri.data[i] = static_cast<float>(t.mri);
                        p.ct.data[i] = static_cast<float>(t.hu);
                        p.labels[i] = static_cast<std::int32_t>(ci + 1);
                    }
    }
    if (spec.noise_sigma > 0.0)
        for (auto& v : p.mri.data)
            v += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
    std::ostringstream note;
    note << "phantom seed " << spec.seed << " components " << comps.size();
    p.mri.comment = p.ct.comment = note.str();
    return p;
}

// ---- patches --------------------------------------------------------------

PatchSample sample_patch(const Volume& mri, const Volume& ct, const Volume& mask, const Vec3& patch, Rng& rng)
{
    require_same_extents(mri, ct, "sample_patch");
    require_same_extents(mri, mask, "sample_patch");
    const Vec3& e = mri.extents;
    for (int a = 0; a < 3; ++a)
        if (patch[a] < 1 || patch[a] > e[a])
            throw DataError("sample_patch: patch " + vec3_str(patch) + " does not fit volume " + vec3_str(e));
    const Vec3 span{e[0] - patch[0], e[1] - patch[1], e[2] - patch[2]};
    auto valid = [&](const Vec3& o) {
        return mask.at(o[0] + patch[0] / 2, o[1] + patch[1] / 2, o[2] + patch[2] / 2) != 0.0f;
    };

    Vec3 origin{};
    bool found = false;
    for (int attempt = 0; attempt < 64 && !found; ++attempt) {
        for (int a = 0; a < 3; ++a)
            origin[a] = rng.uniform_int(0, span[a]);
        found = valid(origin);
    }
    if (!found) {
        std::vector<Vec3> candidates;
        for (Index z = 0; z <= span[0]; ++z)
            for (Index y = 0; y <= span[1]; ++y)
                for (Index x = 0; x <= span[2]; ++x)
                    if (valid({z, y, x}))
                        candidates.push_back({z, y, x});
        if (candidates.empty())
            throw DataError("sample_patch: no patch of extents " + vec3_str(patch) + " has its centre in the mask");
        origin = candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<Index>(candidates.size()) - 1))];
    }
    return PatchSample{origin, crop(mri, origin, patch), crop(ct, origin, patch)};
}

} // namespace m2t
