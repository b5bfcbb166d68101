#include "m2t/generator.hpp"

namespace m2t {

GeneratorConfig GeneratorConfig::desk_default()
{
    GeneratorConfig c;
    c.stages = {StageConfig{16, 2, {4, 4, 4}, {1, 2}, 2}, StageConfig{32, 4, {4, 4, 4}, {1, 2}, 2},
                StageConfig{64, 4, {4, 4, 4}, {1, 2}, 2}};
    c.bottleneck = StageConfig{64, 4, {4, 4, 4}, {1, 2}, 1};
    return c;
}

namespace {

void validate_stage(const StageConfig& s, const std::string& where)
{
    if (s.channels < 1)
        throw ConfigError(where + ": channels must be positive");
    if (s.heads < 1 || s.channels % s.heads != 0)
        throw ConfigError(where + ": heads (" + std::to_string(s.heads) + ") must divide channels (" +
                          std::to_string(s.channels) + ")");
    WindowSpec::regular(s.window).validate();
    if (s.dilations.empty())
        throw ConfigError(where + ": dilation set is empty");
    for (Index d : s.dilations)
        if (d < 1)
            throw ConfigError(where + ": dilations must be >= 1");
    if (s.blocks < 1)
        throw ConfigError(where + ": blocks must be >= 1");
}

Json stage_json(const StageConfig& s)
{
    return Json{{"channels", s.channels}, {"heads", s.heads},   {"window", s.window},
                {"dilations", s.dilations}, {"blocks", s.blocks}};
}

StageConfig stage_from_json(const Json& j, const std::string& path, StageConfig s)
{
    JsonObjectReader r(j, path);
    r.optional("channels", s.channels);
    r.optional("heads", s.heads);
    r.optional("window", s.window);
    r.optional("dilations", s.dilations);
    r.optional("blocks", s.blocks);
    r.finish();
    return s;
}

} // namespace

void GeneratorConfig::validate() const
{
    if (in_channels < 1 || out_channels < 1 || stem_channels < 1)
        throw ConfigError("generator: channel counts must be positive");
    if (stages.empty())
        throw ConfigError("generator: at least one encoder stage is required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        validate_stage(stages[i], "generator.stages[" + std::to_string(i) + "]");
        if (i > 0 && stages[i].channels < stages[i - 1].channels)
            throw ConfigError("generator: stage channels must be non-decreasing");
    }
    validate_stage(bottleneck, "generator.bottleneck");
    if (bottleneck.channels != stages.back().channels)
        throw ConfigError("generator.bottleneck: channels must equal the last stage's (" +
                          std::to_string(stages.back().channels) + ")");
}

Json to_json(const GeneratorConfig& cfg)
{
    Json stages = Json::array();
    for (const auto& s : cfg.stages)
        stages.push_back(stage_json(s));
    return Json{{"in_channels", cfg.in_channels},     {"out_channels", cfg.out_channels},
                {"stem_channels", cfg.stem_channels}, {"stages", stages},
                {"bottleneck", stage_json(cfg.bottleneck)}};
}

GeneratorConfig generator_config_from_json(const Json& j, const std::string& path)
{
    GeneratorConfig c = GeneratorConfig::desk_default();
    JsonObjectReader r(j, path);
    r.optional("in_channels", c.in_channels);
    r.optional("out_channels", c.out_channels);
    r.optional("stem_channels", c.stem_channels);
    if (const Json* st = r.take("stages")) {
        if (!st->is_array())
            throw ConfigError("'" + r.qualified("stages") + "' must be an array");
        c.stages.clear();
        for (std::size_t i = 0; i < st->size(); ++i)
            c.stages.push_back(stage_from_json((*st)[i], r.qualified("stages") + "[" + std::to_string(i) + "]",
                                               StageConfig{}));
    }
    if (const Json* b = r.take("bottleneck"))
        c.bottleneck = stage_from_json(*b, r.qualified("bottleneck"), c.bottleneck);
    r.finish();
    c.validate();
    return c;
}

Vec3 required_padding(const GeneratorConfig& cfg, const Vec3& extents)
{
    const Index r = cfg.reduction();
    Vec3 pad{};
    for (int a = 0; a < 3; ++a)
        pad[a] = (r - extents[a] % r) % r;
    return pad;
}

template <typename T>
BasicTensor<T> SwinPath<T>::operator()(const BasicTensor<T>& x) const
{
    auto h = conv(x);
    for (std::size_t i = 0; i < blocks.size(); ++i)
        h = swin_block(h, blocks[i], windows[i]);
    return h;
}

template <typename T>
BasicTensor<T> TransformerBranch<T>::operator()(const BasicTensor<T>& x) const
{
    auto out = paths.front()(x);
    for (std::size_t i = 1; i < paths.size(); ++i)
        out = add(out, paths[i](x));
    return out;
}

template <typename T>
BasicTensor<T> fuse_features(const BasicTensor<T>& f_c, const BasicTensor<T>& f_t,
                             const Conv3dLayer<T>& proj)
{
    if (f_c.shape() != f_t.shape())
        throw ShapeError("fuse_features: f_c " + shape_str(f_c.shape()) + " vs f_t " +
                         shape_str(f_t.shape()));
    if (proj.weight.dim(0) != f_c.dim(1) || proj.weight.dim(1) != 2 * f_c.dim(1))
        throw ShapeError("fuse_features: projection " + shape_str(proj.weight.shape()) +
                         " does not map 2C -> C for C = " + std::to_string(f_c.dim(1)));
    return add(proj(concat<T>({f_c, f_t}, 1)), f_c);
}

template <typename T>
StageFeatures<T> EncoderStage<T>::operator()(const BasicTensor<T>& x) const
{
    StageFeatures<T> s;
    s.f_c = conv_b(conv_a(x));
    s.f_t = branch(x);
    s.f = fuse_features(s.f_c, s.f_t, fuse);
    return s;
}

namespace {

template <typename T>
ConvNormRelu<T> make_conv_norm(ParameterSet<T>& ps, const std::string& name, Index cin, Index cout)
{
    return ConvNormRelu<T>{make_conv(ps, name + ".conv", cin, cout, 3, Conv3dOptions::same(3)),
                           make_norm(ps, name + ".norm", cout)};
}

template <typename T>
TransformerBranch<T> make_branch(ParameterSet<T>& ps, const std::string& name, Index cin,
                                 const StageConfig& s)
{
    TransformerBranch<T> br;
    for (Index d : s.dilations) {
        const std::string pn = name + ".tpath_d" + std::to_string(d);
        SwinPath<T> p;
        p.conv = make_conv(ps, pn + ".conv", cin, s.channels, 3, Conv3dOptions::same(3, d));
        for (Index b = 0; b < s.blocks; ++b) {
            p.blocks.push_back(make_swin_block(ps, pn + ".swin" + std::to_string(b), s.channels,
                                               s.heads, s.window));
            p.windows.push_back(b % 2 == 0 ? WindowSpec::regular(s.window)
                                           : WindowSpec::shifted_half(s.window));
        }
        br.paths.push_back(std::move(p));
    }
    return br;
}

template <typename T>
Conv3dLayer<T> make_fuse(ParameterSet<T>& ps, const std::string& name, Index channels)
{
    return make_conv(ps, name + ".fuse", 2 * channels, channels, 1, Conv3dOptions{});
}

} // namespace

template <typename T>
Generator<T>::Generator(GeneratorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg))
{
    cfg_.validate();
    stem_ = make_conv(params_, "stem", cfg_.in_channels, cfg_.stem_channels, 3, Conv3dOptions::same(3));
    Index cin = cfg_.stem_channels;
    for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
        const auto& s = cfg_.stages[i];
        const std::string name = "enc" + std::to_string(i);
        EncoderStage<T> st;
        st.conv_a = make_conv_norm(params_, name + ".conv_a", cin, s.channels);
        st.conv_b = make_conv_norm(params_, name + ".conv_b", s.channels, s.channels);
        st.branch = make_branch(params_, name, cin, s);
        st.fuse = make_fuse(params_, name, s.channels);
        stages_.push_back(std::move(st));
        if (i + 1 < cfg_.stages.size()) {
            down_.push_back(make_conv(params_, "down" + std::to_string(i), s.channels,
                                      cfg_.stages[i + 1].channels, 3,
                                      Conv3dOptions{{2, 2, 2}, {1, 1, 1}, {1, 1, 1}}));
            cin = cfg_.stages[i + 1].channels;
        } else {
            cin = s.channels;
        }
    }
    bottleneck_.branch = make_branch(params_, "bottleneck", cin, cfg_.bottleneck);
    bottleneck_.fuse = make_fuse(params_, "bottleneck", cin);

    Index cur = cin;
    for (std::size_t lvl = 0; lvl + 1 < cfg_.stages.size(); ++lvl) {
        const Index skip = cfg_.stages[cfg_.stages.size() - 2 - lvl].channels;
        const std::string name = "dec" + std::to_string(lvl);
        decoder_.push_back(DecoderLevel<T>{make_conv_norm(params_, name + ".conv_a", cur + skip, skip),
                                           make_conv_norm(params_, name + ".conv_b", skip, skip)});
        cur = skip;
    }
    head_ = make_conv(params_, "head", cur, cfg_.out_channels, 1, Conv3dOptions{});

    // Kaiming for convolutions, truncated normal inside Swin blocks, zero
    // biases, zero fusion projections.
    Rng rng(seed);
    for (auto& [name, t] : params_.items()) {
        if (is_fusion_param(name) || t.rank() != 5)
            continue;
        auto w = t;
        init_kaiming(w, rng);
    }
    auto init_branch = [&rng](TransformerBranch<T>& br) {
        for (auto& p : br.paths)
            for (auto& b : p.blocks)
                init_swin_block(b, rng);
    };
    for (auto& st : stages_)
        init_branch(st.branch);
    init_branch(bottleneck_.branch);
}

template <typename T>
BasicTensor<T> Generator<T>::forward(const BasicTensor<T>& mri) const
{
    if (mri.rank() != 5 || mri.dim(1) != cfg_.in_channels)
        throw ShapeError("generator: expected [B," + std::to_string(cfg_.in_channels) +
                         ",D,H,W], got " + shape_str(mri.shape()));
    const Vec3 ext{mri.dim(2), mri.dim(3), mri.dim(4)};
    const Vec3 pad = required_padding(cfg_, ext);
    if (pad != Vec3{0, 0, 0})
        throw ShapeError("generator: extents " + vec3_str(ext) + " must be multiples of " +
                         std::to_string(cfg_.reduction()) + "; pad by " + vec3_str(pad));

    auto h = stem_(mri);
    std::vector<StageFeatures<T>> feats;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        feats.push_back(stages_[i](h));
        h = i < down_.size() ? down_[i](feats.back().f) : feats.back().f;
    }
    const auto b = bottleneck_(h);
    std::vector<StageFeatures<T>> skips(feats.rbegin() + 1, feats.rend());
    return decoder_and_head(b, skips);
}

template <typename T>
BasicTensor<T> Generator<T>::decoder_and_head(const BasicTensor<T>& bottleneck_out,
                                              const std::vector<StageFeatures<T>>& skips) const
{
    if (skips.size() != decoder_.size())
        throw ShapeError("decoder: expected " + std::to_string(decoder_.size()) + " skips, got " +
                         std::to_string(skips.size()));
    auto h = bottleneck_out;
    for (std::size_t lvl = 0; lvl < decoder_.size(); ++lvl) {
        const auto up = trilinear_upsample(h, 2);
        const auto& skip = skips[lvl].f;
        if (skip.rank() != 5 || skip.dim(0) != up.dim(0) || skip.dim(2) != up.dim(2) ||
            skip.dim(3) != up.dim(3) || skip.dim(4) != up.dim(4))
            throw ShapeError("decoder: skip " + shape_str(skip.shape()) + " does not match upsampled " +
                             shape_str(up.shape()));
        h = decoder_[lvl].conv_b(decoder_[lvl].conv_a(concat<T>({up, skip}, 1)));
    }
    return tanh(head_(h));
}

template <typename T>
bool Generator<T>::is_transformer_param(const std::string& name)
{
    return name.find(".tpath_") != std::string::npos;
}

template <typename T>
bool Generator<T>::is_fusion_param(const std::string& name)
{
    return name.find(".fuse.") != std::string::npos;
}

template struct SwinPath<float>;
template struct SwinPath<double>;
template struct TransformerBranch<float>;
template struct TransformerBranch<double>;
template struct EncoderStage<float>;
template struct EncoderStage<double>;
template BasicTensor<float> fuse_features(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const Conv3dLayer<float>&);
template BasicTensor<double> fuse_features(const BasicTensor<double>&, const BasicTensor<double>&,
                                           const Conv3dLayer<double>&);
template class Generator<float>;
template class Generator<double>;

} // namespace m2t
