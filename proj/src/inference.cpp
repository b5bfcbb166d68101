#include "m2t/inference.hpp"

#include "m2t/train.hpp"

#include <sstream>

namespace m2t {

std::vector<Index> axis_origins(Index n, Index p, Index s)
{
    std::vector<Index> o;
    for (Index x = 0; x + p <= n; x += s)
        o.push_back(x);
    if (o.back() + p < n)
        o.push_back(n - p);
    return o;
}

SlidingWindowPlan plan_windows(const Vec3& volume, const Vec3& patch, std::optional<Vec3> stride)
{
    SlidingWindowPlan plan;
    plan.volume = volume;
    plan.patch = patch;
    for (int a = 0; a < 3; ++a) {
        if (volume[a] < 1 || patch[a] < 1 || patch[a] > volume[a])
            throw ConfigError("plan_windows: patch " + vec3_str(patch) + " must fit volume " + vec3_str(volume));
        plan.stride[a] = stride ? (*stride)[a] : std::max<Index>(1, patch[a] / 2);
        if (plan.stride[a] < 1 || plan.stride[a] > patch[a])
            throw ConfigError("plan_windows: stride " + vec3_str(*stride) + " must lie in [1, patch " +
                              vec3_str(patch) + "]");
    }
    std::array<std::vector<Index>, 3> o;
    std::array<std::vector<std::int32_t>, 3> cover;
    for (int a = 0; a < 3; ++a) {
        o[a] = axis_origins(volume[a], patch[a], plan.stride[a]);
        cover[a].assign(static_cast<std::size_t>(volume[a]), 0);
        for (Index x : o[a])
            for (Index i = x; i < x + patch[a]; ++i)
                ++cover[a][static_cast<std::size_t>(i)];
    }
    for (Index z : o[0])
        for (Index y : o[1])
            for (Index x : o[2])
                plan.origins.push_back({z, y, x});
    plan.coverage.reserve(static_cast<std::size_t>(volume[0] * volume[1] * volume[2]));
    for (auto cz : cover[0])
        for (auto cy : cover[1])
            for (auto cx : cover[2])
                plan.coverage.push_back(cz * cy * cx);
    return plan;
}

Volume synthesize_volume(const Volume& mri, const WindowModel& model, const SlidingWindowPlan& plan)
{
    if (mri.extents != plan.volume)
        throw ShapeError("synthesize_volume: plan is for " + vec3_str(plan.volume) + ", volume is " +
                         vec3_str(mri.extents));
    NoGradScope<float> ng;
    std::vector<double> acc(mri.data.size(), 0.0);
    const Vec3& p = plan.patch;
    for (const Vec3& o : plan.origins) {
        const Tensor y = model(to_tensor(crop(mri, o, p)));
        if (y.shape() != Shape{1, 1, p[0], p[1], p[2]})
            throw ShapeError("synthesize_volume: window model returned " + shape_str(y.shape()));
        const auto d = y.data();
        std::size_t k = 0;
        for (Index z = 0; z < p[0]; ++z)
            for (Index yy = 0; yy < p[1]; ++yy) {
                double* dst = &acc[mri.offset(o[0] + z, o[1] + yy, o[2])];
                for (Index x = 0; x < p[2]; ++x)
                    dst[x] += static_cast<double>(d[k++]);
            }
    }
    Volume out(mri.extents, Modality::SCT, IntensityUnit::Normalized);
    out.spacing = mri.spacing;
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.data[i] = static_cast<float>(acc[i] / plan.coverage[i]);
    return out;
}

Volume synthesize_volume(const Volume& mri, const Generator<float>& g, const SlidingWindowPlan& plan)
{
    const Index r = g.config().reduction();
    for (Index e : plan.patch)
        if (e % r != 0)
            throw ConfigError("synthesize_volume: patch " + vec3_str(plan.patch) + " must be multiples of " +
                              std::to_string(r) + " for this generator");
    return synthesize_volume(mri, WindowModel([&g](const Tensor& x) { return g.forward(x); }), plan);
}

namespace {

Volume edge_pad(const Volume& v, const Vec3& extents)
{
    Volume out(extents, v.modality, v.unit);
    out.spacing = v.spacing;
    for (Index z = 0; z < extents[0]; ++z)
        for (Index y = 0; y < extents[1]; ++y)
            for (Index x = 0; x < extents[2]; ++x)
                out.at(z, y, x) = v.at(std::min(z, v.extents[0] - 1), std::min(y, v.extents[1] - 1),
                                       std::min(x, v.extents[2] - 1));
    return out;
}

} // namespace

Volume synthesize_to_hu(const Volume& mri, const Generator<float>& g, const SynthesisOptions& opts,
                        const std::string& provenance)
{
    mri.validate();
    bool iso = true;
    for (double s : mri.spacing)
        iso = iso && s == 1.0;
    const Volume resampled = iso ? mri : resample_isotropic(mri, 1.0);
    const Volume norm = normalize_mri(resampled);
    Vec3 padded = norm.extents;
    for (int a = 0; a < 3; ++a)
        padded[a] = std::max(padded[a], opts.patch[a]);
    const Volume input = padded == norm.extents ? norm : edge_pad(norm, padded);
    const auto plan = plan_windows(input.extents, opts.patch, opts.stride);
    Volume sct = synthesize_volume(input, g, plan);
    if (padded != norm.extents)
        sct = crop(sct, {0, 0, 0}, norm.extents);
    Volume hu = denormalize_hu(sct, Modality::SCT);
    std::ostringstream c;
    if (!provenance.empty())
        c << provenance << ' ';
    c << "patch " << vec3_str(plan.patch) << " stride " << vec3_str(plan.stride) << " windows "
      << plan.origins.size();
    hu.comment = c.str();
    return hu;
}

Volume synthesize_file(const std::string& mri_path, const std::string& checkpoint_path, const std::string& out_path,
                       std::optional<Vec3> stride, std::optional<Vec3> patch)
{
    const Checkpoint ckpt = read_checkpoint(checkpoint_path);
    const Generator<float> g = load_generator(ckpt);
    SynthesisOptions opts;
    opts.stride = stride;
    if (patch)
        opts.patch = *patch;
    else if (ckpt.meta.contains("run"))
        opts.patch = ckpt.meta.at("run").at("train").at("patch").get<Vec3>();
    const Volume mri = read_rvol(mri_path);
    const Volume hu = synthesize_to_hu(mri, g, opts, "sct ckpt " + file_digest(checkpoint_path));
    write_rvol(out_path, hu);
    return hu;
}

} // namespace m2t
