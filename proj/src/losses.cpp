#include "m2t/losses.hpp"

namespace m2t {

void LossWeights::validate() const
{
    if (!(gan >= 0.0 && l1 >= 0.0 && perc >= 0.0))
        throw ConfigError("loss weights must be nonnegative");
}

Json to_json(const LossWeights& w)
{
    return Json{{"lambda_gan", w.gan}, {"lambda_l1", w.l1}, {"lambda_perc", w.perc}};
}

LossWeights loss_weights_from_json(const Json& j, const std::string& path)
{
    LossWeights w;
    JsonObjectReader r(j, path);
    r.optional("lambda_gan", w.gan);
    r.optional("lambda_l1", w.l1);
    r.optional("lambda_perc", w.perc);
    r.finish();
    w.validate();
    return w;
}

template <typename T>
BasicTensor<T> gan_loss_generator(const BasicTensor<T>& fake_logits)
{
    return bce_with_logits_mean(fake_logits, T(1));
}

template <typename T>
BasicTensor<T> gan_loss_discriminator(const BasicTensor<T>& real_logits, const BasicTensor<T>& fake_logits)
{
    return scale(add(bce_with_logits_mean(real_logits, T(1)), bce_with_logits_mean(fake_logits, T(0))),
                 T(0.5));
}

template <typename T>
SeededConvExtractor<T>::SeededConvExtractor(std::uint64_t seed, Index in_channels, std::vector<Index> widths)
    : in_channels_(in_channels)
{
    if (in_channels < 1 || widths.empty())
        throw ConfigError("feature extractor: need positive input channels and at least one layer");
    Rng rng(seed);
    Index cin = in_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::string name = "fx" + std::to_string(i);
        Conv3dLayer<T> l;
        l.weight = params_.add(name + ".weight", {widths[i], cin, 1, 3, 3});
        l.bias = params_.add(name + ".bias", {widths[i]});
        l.opts = Conv3dOptions{{1, 2, 2}, {0, 1, 1}, {1, 1, 1}};
        init_kaiming(l.weight, rng);
        layers_.push_back(l);
        cin = widths[i];
    }
    params_.set_requires_grad(false);
}

template <typename T>
std::vector<BasicTensor<T>> SeededConvExtractor<T>::features(const BasicTensor<T>& images) const
{
    if (images.rank() != 5 || images.dim(1) != in_channels_ || images.dim(2) != 1)
        throw ShapeError("feature extractor: expected [N," + std::to_string(in_channels_) + ",1,H,W], got " +
                         shape_str(images.shape()));
    std::vector<BasicTensor<T>> taps;
    auto h = images;
    for (const auto& l : layers_) {
        h = relu(l(h));
        taps.push_back(h);
    }
    return taps;
}

namespace {

// [B, 1, D, H, W] -> [B*D, C, 1, H, W] with the channel replicated C times.
template <typename T>
BasicTensor<T> axial_slices(const BasicTensor<T>& v, Index channels)
{
    const Index b = v.dim(0), d = v.dim(2), h = v.dim(3), w = v.dim(4);
    const auto s = permute(v, {0, 2, 1, 3, 4}).reshape({b * d, 1, 1, h, w});
    if (channels == 1)
        return s;
    return concat<T>(std::vector<BasicTensor<T>>(static_cast<std::size_t>(channels), s), 1);
}

} // namespace

template <typename T>
BasicTensor<T> perceptual_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                               const FeatureExtractor<T>& fx)
{
    if (pred.shape() != target.shape())
        throw ShapeError("perceptual_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    if (pred.rank() != 5 || pred.dim(1) != 1)
        throw ShapeError("perceptual_loss: expected single-channel volumes, got " + shape_str(pred.shape()));
    const auto fp = fx.features(axial_slices(pred, fx.in_channels()));
    const auto ft = fx.features(axial_slices(target, fx.in_channels()));
    if (fp.empty())
        throw ShapeError("perceptual_loss: extractor produced no feature taps");
    auto total = l1_mean(fp[0], ft[0]);
    for (std::size_t i = 1; i < fp.size(); ++i)
        total = add(total, l1_mean(fp[i], ft[i]));
    return scale(total, static_cast<T>(1.0 / static_cast<double>(fp.size())));
}

template <typename T>
BasicTensor<T> total_generator_loss(const LossParts<T>& parts, const LossWeights& w)
{
    const BasicTensor<T>* in[3] = {&parts.gan, &parts.l1, &parts.perc};
    const double lambda[3] = {w.gan, w.l1, w.perc};
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
        if (!in[i]->defined() || in[i]->numel() != 1 || in[i]->rank() != 0)
            throw ShapeError("total_generator_loss: every component must be a scalar");
        acc += lambda[i] * static_cast<double>(in[i]->item());
    }
    auto y = BasicTensor<T>::scalar(static_cast<T>(acc));
    detail::check_finite(y, "total_generator_loss");
    if (auto* tape = detail::recording_tape<T>({in[0], in[1], in[2]})) {
        detail::mark_tracked(y);
        tape->record("total_generator_loss",
                     [g = parts.gan.node(), l = parts.l1.node(), p = parts.perc.node(), yn = y.node(), w] {
                         if (yn->grad.empty())
                             return;
                         const double gy = static_cast<double>(yn->grad[0]);
                         const std::pair<TensorNode<T>*, double> terms[3] = {
                             {g.get(), w.gan}, {l.get(), w.l1}, {p.get(), w.perc}};
                         for (const auto& [node, lambda] : terms)
                             if (node->requires_grad)
                                 detail::grad_buffer(*node)[0] += static_cast<T>(lambda * gy);
                     });
    }
    return y;
}

#define M2T_INSTANTIATE(T)                                                                            \
    template BasicTensor<T> gan_loss_generator(const BasicTensor<T>&);                                \
    template BasicTensor<T> gan_loss_discriminator(const BasicTensor<T>&, const BasicTensor<T>&);     \
    template class SeededConvExtractor<T>;                                                            \
    template BasicTensor<T> perceptual_loss(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                            const FeatureExtractor<T>&);                              \
    template BasicTensor<T> total_generator_loss(const LossParts<T>&, const LossWeights&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
