#include "m2t/discriminator.hpp"

namespace m2t {

namespace {

Index stride_product(const std::vector<DiscLayerConfig>& layers)
{
    Index s = 1;
    for (const auto& l : layers)
        s *= l.stride;
    return s;
}

void validate_path(const std::vector<DiscLayerConfig>& layers, const std::string& where)
{
    if (layers.empty())
        throw ConfigError(where + ": at least one layer is required");
    for (const auto& l : layers) {
        if (l.channels < 1)
            throw ConfigError(where + ": channels must be positive");
        if (l.stride != 1 && l.stride != 2)
            throw ConfigError(where + ": stride must be 1 or 2");
    }
}

Json path_json(const std::vector<DiscLayerConfig>& layers)
{
    Json a = Json::array();
    for (const auto& l : layers)
        a.push_back(Json{{"channels", l.channels}, {"stride", l.stride}});
    return a;
}

std::vector<DiscLayerConfig> path_from_json(const Json& j, const std::string& path)
{
    if (!j.is_array())
        throw ConfigError("'" + path + "' must be an array");
    std::vector<DiscLayerConfig> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        DiscLayerConfig l;
        JsonObjectReader r(j[i], path + "[" + std::to_string(i) + "]");
        r.required("channels", l.channels);
        r.required("stride", l.stride);
        r.finish();
        out.push_back(l);
    }
    return out;
}

Conv3dOptions conv3_opts(Index stride)
{
    return Conv3dOptions{{stride, stride, stride}, {1, 1, 1}, {1, 1, 1}};
}

} // namespace

Index DiscriminatorConfig::output_stride() const { return stride_product(conv_path); }

void DiscriminatorConfig::validate() const
{
    if (in_channels != 1 && in_channels != 2)
        throw ConfigError("discriminator: in_channels must be 1 or 2");
    validate_path(conv_path, "discriminator.conv_path");
    validate_path(wave_path, "discriminator.wave_path");
    if (stride_product(conv_path) != 2 * stride_product(wave_path))
        throw ConfigError("discriminator: conv path stride (" + std::to_string(stride_product(conv_path)) +
                          ") must equal twice the wave path stride (" +
                          std::to_string(stride_product(wave_path)) + ")");
    if (fusion_channels < 1)
        throw ConfigError("discriminator: fusion_channels must be positive");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
        throw ConfigError("discriminator: leaky_slope must be in [0, 1)");
}

Json to_json(const DiscriminatorConfig& cfg)
{
    return Json{{"in_channels", cfg.in_channels},
                {"conv_path", path_json(cfg.conv_path)},
                {"wave_path", path_json(cfg.wave_path)},
                {"fusion_channels", cfg.fusion_channels},
                {"leaky_slope", cfg.leaky_slope},
                {"instance_norm", cfg.instance_norm}};
}

DiscriminatorConfig discriminator_config_from_json(const Json& j, const std::string& path)
{
    DiscriminatorConfig c;
    JsonObjectReader r(j, path);
    r.optional("in_channels", c.in_channels);
    if (const Json* p = r.take("conv_path"))
        c.conv_path = path_from_json(*p, r.qualified("conv_path"));
    if (const Json* p = r.take("wave_path"))
        c.wave_path = path_from_json(*p, r.qualified("wave_path"));
    r.optional("fusion_channels", c.fusion_channels);
    r.optional("leaky_slope", c.leaky_slope);
    r.optional("instance_norm", c.instance_norm);
    r.finish();
    c.validate();
    return c;
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg))
{
    cfg_.validate();
    auto make_path = [this](const std::vector<DiscLayerConfig>& layers, const std::string& prefix,
                            Index cin) {
        std::vector<Layer> out;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string name = prefix + std::to_string(i);
            Layer l;
            l.conv = make_conv(params_, name, cin, layers[i].channels, 3, conv3_opts(layers[i].stride));
            if (cfg_.instance_norm && i > 0)
                l.norm = make_norm(params_, name + ".norm", layers[i].channels);
            out.push_back(std::move(l));
            cin = layers[i].channels;
        }
        return out;
    };
    conv_path_ = make_path(cfg_.conv_path, "conv", cfg_.in_channels);
    wave_path_ = make_path(cfg_.wave_path, "wave", 8 * cfg_.in_channels);
    const Index cat = cfg_.conv_path.back().channels + cfg_.wave_path.back().channels;
    fuse_.conv = make_conv(params_, "fuse", cat, cfg_.fusion_channels, 3, conv3_opts(1));
    if (cfg_.instance_norm)
        fuse_.norm = make_norm(params_, "fuse.norm", cfg_.fusion_channels);
    out_ = make_conv(params_, "out", cfg_.fusion_channels, 1, 3, conv3_opts(1));

    // Kaiming on hidden convs; the output conv is small so initial logits sit near 0.
    Rng rng(seed);
    for (auto& [name, t] : params_.items()) {
        if (t.rank() != 5)
            continue;
        auto w = t;
        if (name == "out.weight")
            init_trunc_normal(w, 0.02, rng);
        else
            init_kaiming(w, rng);
    }
}

template <typename T>
BasicTensor<T> Discriminator<T>::apply(const Layer& l, const BasicTensor<T>& x) const
{
    auto h = l.conv(x);
    if (l.norm.scale.defined())
        h = instance_norm(h, l.norm.scale, l.norm.shift);
    return leaky_relu(h, static_cast<T>(cfg_.leaky_slope));
}

template <typename T>
Vec3 Discriminator<T>::output_extents(const Vec3& input) const
{
    auto check = [&](const Vec3& e, bool normed, const char* where) {
        for (Index v : e)
            if (v < 1)
                throw ShapeError("discriminator: input " + vec3_str(input) + " too small (" + where + ")");
        if (normed && e[0] * e[1] * e[2] < 2)
            throw ShapeError("discriminator: input " + vec3_str(input) + " too small for instance norm (" +
                             where + ")");
    };
    auto step = [](Vec3 e, Index stride) {
        for (auto& v : e)
            v = conv_output_extent(v, 3, stride, 1, 1);
        return e;
    };
    Vec3 c = input;
    for (std::size_t i = 0; i < cfg_.conv_path.size(); ++i) {
        check(c, false, "conv path");
        c = step(c, cfg_.conv_path[i].stride);
        check(c, cfg_.instance_norm && i > 0, "conv path");
    }
    Vec3 w{(input[0] + 1) / 2, (input[1] + 1) / 2, (input[2] + 1) / 2};
    for (std::size_t i = 0; i < cfg_.wave_path.size(); ++i) {
        w = step(w, cfg_.wave_path[i].stride);
        check(w, cfg_.instance_norm && i > 0, "wave path");
    }
    if (c != w)
        throw ShapeError("discriminator: paths disagree on " + vec3_str(input) + ": " + vec3_str(c) + " vs " +
                         vec3_str(w));
    check(c, cfg_.instance_norm, "fusion");
    return c;
}

template <typename T>
BasicTensor<T> Discriminator<T>::forward(const BasicTensor<T>& x) const
{
    if (x.rank() != 5 || x.dim(1) != cfg_.in_channels)
        throw ShapeError("discriminator: expected [B," + std::to_string(cfg_.in_channels) + ",D,H,W], got " +
                         shape_str(x.shape()));
    output_extents({x.dim(2), x.dim(3), x.dim(4)});

    auto c = x;
    for (const auto& l : conv_path_)
        c = apply(l, c);
    auto w = haar3d(reflect_pad_to_even(x));
    for (const auto& l : wave_path_)
        w = apply(l, w);
    return out_(apply(fuse_, concat<T>({c, w}, 1)));
}

template class Discriminator<float>;
template class Discriminator<double>;

} // namespace m2t
