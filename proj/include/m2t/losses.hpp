#pragma once

// Adversarial, L1 and perceptual objectives and their weighted total.

#include "m2t/config.hpp"
#include "m2t/params.hpp"

#include <cstdint>
#include <vector>

namespace m2t {

struct LossWeights {
    double gan = 1.0;
    double l1 = 20.0;
    double perc = 1.0;

    void validate() const;
};

Json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const Json& j, const std::string& path = "loss");

/// BCE-with-logits of every patch logit against "real".
template <typename T>
BasicTensor<T> gan_loss_generator(const BasicTensor<T>& fake_logits);

/// 0.5 * [BCE(real, 1) + BCE(fake, 0)].
template <typename T>
BasicTensor<T> gan_loss_discriminator(const BasicTensor<T>& real_logits, const BasicTensor<T>& fake_logits);

template <typename T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target)
{
    return l1_mean(pred, target);
}

/// 2-D feature network for the perceptual loss. Inputs are image batches
/// laid out as [N, C, 1, H, W]; the result holds one tap per layer.
template <typename T>
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual Index in_channels() const = 0;
    virtual std::vector<BasicTensor<T>> features(const BasicTensor<T>& images) const = 0;
};

/// Fixed random conv net: 3x3 convs, stride 2, ReLU, tap after each layer.
/// Weights are drawn from `seed` and never trained.
template <typename T>
class SeededConvExtractor final : public FeatureExtractor<T> {
public:
    explicit SeededConvExtractor(std::uint64_t seed, Index in_channels = 3,
                                 std::vector<Index> widths = {8, 16, 32, 32});

    Index in_channels() const override { return in_channels_; }
    std::vector<BasicTensor<T>> features(const BasicTensor<T>& images) const override;
    const ParameterSet<T>& parameters() const noexcept { return params_; }

private:
    Index in_channels_;
    ParameterSet<T> params_;
    std::vector<Conv3dLayer<T>> layers_;
};

/// Mean over tapped layers of the mean absolute feature difference, with
/// every axial slice of the [B, 1, D, H, W] volumes fed to `fx` as an image
/// (the single channel replicated to fx.in_channels()).
template <typename T>
BasicTensor<T> perceptual_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                               const FeatureExtractor<T>& fx);

template <typename T>
struct LossParts {
    BasicTensor<T> gan;
    BasicTensor<T> l1;
    BasicTensor<T> perc;
};

/// w.gan * gan + w.l1 * l1 + w.perc * perc, summed in double precision.
template <typename T>
BasicTensor<T> total_generator_loss(const LossParts<T>& parts, const LossWeights& w);

} // namespace m2t
