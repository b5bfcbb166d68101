#include "m2t/metrics.hpp"

#include <cmath>

namespace m2t {

namespace {

// Neumaier summation.
class Accumulator {
public:
    void add(double v)
    {
        const double t = sum_ + v;
        comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0, comp_ = 0.0;
};

void check_mask(const Volume& mask, const char* what)
{
    if (mask.modality != Modality::MASK)
        throw DataError(std::string(what) + ": mask volume must have modality MASK");
    for (float v : mask.data)
        if (v != 0.0f && v != 1.0f)
            throw DataError(std::string(what) + ": mask is not binary");
}

void check_inputs(const Volume& pred, const Volume& ref, const Volume& mask, const char* what)
{
    require_same_extents(pred, ref, what);
    require_same_extents(pred, mask, what);
    check_mask(mask, what);
}

// Sum over a window along one axis; `stride` is the element distance of the axis.
std::vector<double> box_axis(const std::vector<double>& in, const Vec3& e, int axis, Index w)
{
    std::vector<double> out(in.size(), 0.0);
    const Index n = e[axis];
    const Index stride = axis == 2 ? 1 : (axis == 1 ? e[2] : e[1] * e[2]);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const Index pos = static_cast<Index>(i) / stride % n;
        if (pos + w > n)
            continue;
        double s = 0.0;
        for (Index k = 0; k < w; ++k)
            s += in[i + static_cast<std::size_t>(k * stride)];
        out[i] = s;
    }
    return out;
}

// Window sums keyed by the window's lowest corner.
std::vector<double> box_sum(std::vector<double> v, const Vec3& e, Index w)
{
    for (int a = 2; a >= 0; --a)
        v = box_axis(v, e, a, w);
    return v;
}

} // namespace

double masked_mse(const Volume& pred, const Volume& ref, const Volume& mask)
{
    check_inputs(pred, ref, mask, "mse");
    Accumulator acc;
    Index n = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i)
        if (mask.data[i] != 0.0f) {
            const double d = static_cast<double>(pred.data[i]) - ref.data[i];
            acc.add(d * d);
            ++n;
        }
    if (n == 0)
        throw DataError("mse: mask is empty");
    return acc.value() / static_cast<double>(n);
}

double mae(const Volume& pred, const Volume& ref, const Volume& mask)
{
    check_inputs(pred, ref, mask, "mae");
    Accumulator acc;
    Index n = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i)
        if (mask.data[i] != 0.0f) {
            acc.add(std::abs(static_cast<double>(pred.data[i]) - ref.data[i]));
            ++n;
        }
    if (n == 0)
        throw DataError("mae: mask is empty");
    return acc.value() / static_cast<double>(n);
}

double psnr_from_mse(double mse, double data_range)
{
    if (!(data_range > 0.0))
        throw ConfigError("psnr: data_range must be positive");
    if (mse <= 0.0)
        return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(data_range * data_range / mse));
}

double psnr(const Volume& pred, const Volume& ref, const Volume& mask, double data_range)
{
    return psnr_from_mse(masked_mse(pred, ref, mask), data_range);
}

double ssim(const Volume& pred, const Volume& ref, const Volume& mask, const SsimParams& p)
{
    check_inputs(pred, ref, mask, "ssim");
    if (p.window < 1 || p.window % 2 == 0)
        throw ConfigError("ssim: window must be a positive odd size");
    if (!(p.data_range > 0.0))
        throw ConfigError("ssim: data_range must be positive");
    const Vec3& e = pred.extents;
    for (Index v : e)
        if (v < p.window)
            throw DataError("ssim: volume " + vec3_str(e) + " is smaller than the window");

    const std::size_t n = pred.data.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = pred.data[i];
        y[i] = ref.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const Index w = p.window, h = w / 2;
    const auto sx = box_sum(x, e, w), sy = box_sum(y, e, w);
    const auto sxx = box_sum(xx, e, w), syy = box_sum(yy, e, w), sxy = box_sum(xy, e, w);
    const double inv = 1.0 / static_cast<double>(w * w * w);
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);

    Accumulator acc;
    Index count = 0;
    for (Index z = 0; z + w <= e[0]; ++z)
        for (Index yv = 0; yv + w <= e[1]; ++yv)
            for (Index xv = 0; xv + w <= e[2]; ++xv) {
                if (mask.at(z + h, yv + h, xv + h) == 0.0f)
                    continue;
                const std::size_t i = pred.offset(z, yv, xv);
                const double mx = sx[i] * inv, my = sy[i] * inv;
                const double vx = sxx[i] * inv - mx * mx;
                const double vy = syy[i] * inv - my * my;
                const double cxy = sxy[i] * inv - mx * my;
                acc.add((2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
                ++count;
            }
    if (count == 0)
        throw DataError("ssim: no complete window is centred inside the mask");
    return acc.value() / static_cast<double>(count);
}

double dice(const Volume& a, const Volume& b)
{
    require_same_extents(a, b, "dice");
    check_mask(a, "dice");
    check_mask(b, "dice");
    Index inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool ia = a.data[i] != 0.0f, ib = b.data[i] != 0.0f;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

StructureMasks bone_structures(const Volume& pred_hu, const Volume& ref_hu)
{
    return StructureMasks{"bone", threshold_mask(pred_hu, kBoneThresholdHu), threshold_mask(ref_hu, kBoneThresholdHu)};
}

MetricsReport evaluate(const Volume& pred_hu, const Volume& ref_hu, const Volume& body,
                       const std::vector<StructureMasks>& structures, const std::string& mask_id,
                       const SsimParams& params)
{
    if (pred_hu.unit != IntensityUnit::HU || ref_hu.unit != IntensityUnit::HU)
        throw DataError("evaluate: both volumes must be in HU");
    MetricsReport r;
    r.mae_hu = mae(pred_hu, ref_hu, body);
    r.psnr_db = psnr(pred_hu, ref_hu, body, params.data_range);
    r.ssim = ssim(pred_hu, ref_hu, body, params);
    for (float v : body.data)
        r.body_voxels += v != 0.0f;
    for (const auto& s : structures) {
        require_same_extents(pred_hu, s.pred, "evaluate");
        if (r.dice.count(s.name))
            throw DataError("evaluate: duplicate structure '" + s.name + "'");
        r.dice[s.name] = dice(s.pred, s.ref);
        Index np = 0, nr = 0;
        for (std::size_t i = 0; i < s.pred.data.size(); ++i) {
            np += s.pred.data[i] != 0.0f;
            nr += s.ref.data[i] != 0.0f;
        }
        r.structure_voxels[s.name] = {np, nr};
    }
    r.mask_id = mask_id;
    r.ssim_params = params;
    r.data_range = params.data_range;
    return r;
}

Json to_json(const MetricsReport& r)
{
    Json voxels = Json::object();
    for (const auto& [name, c] : r.structure_voxels)
        voxels[name] = Json{{"pred", c.first}, {"ref", c.second}};
    return Json{{"mae_hu", r.mae_hu},
                {"ssim", r.ssim},
                {"psnr_db", r.psnr_db},
                {"dice", r.dice},
                {"body_voxels", r.body_voxels},
                {"structure_voxels", voxels},
                {"mask", r.mask_id},
                {"config",
                 {{"ssim_window", r.ssim_params.window},
                  {"ssim_k1", r.ssim_params.k1},
                  {"ssim_k2", r.ssim_params.k2},
                  {"data_range_hu", r.data_range},
                  {"psnr_cap_db", kPsnrCapDb},
                  {"empty_dice", 1.0}}}};
}

} // namespace m2t
