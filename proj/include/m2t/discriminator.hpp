#pragma once

// Wave3D discriminator: a strided conv stack and a Haar-subband conv stack
// meet at a common resolution and are reduced to a 1-channel logit map.

#include "m2t/config.hpp"
#include "m2t/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace m2t {

struct DiscLayerConfig {
    Index channels = 16;
    Index stride = 2;
};

struct DiscriminatorConfig {
    /// 1, or 2 when the MRI is concatenated to the CT/sCT input.
    Index in_channels = 1;
    std::vector<DiscLayerConfig> conv_path{{16, 2}, {32, 2}, {64, 1}};
    /// Runs on the 8 * in_channels Haar subbands, which start at stride 2.
    std::vector<DiscLayerConfig> wave_path{{16, 2}, {32, 1}};
    Index fusion_channels = 64;
    double leaky_slope = 0.2;
    /// Instance norm after every conv except the first of each path and the
    /// output conv. Off gives a translation-covariant map.
    bool instance_norm = true;

    void validate() const;

    /// Product of the conv-path strides.
    Index output_stride() const;
};

Json to_json(const DiscriminatorConfig& cfg);
DiscriminatorConfig discriminator_config_from_json(const Json& j,
                                                   const std::string& path = "discriminator");

template <typename T>
class Discriminator {
public:
    explicit Discriminator(DiscriminatorConfig cfg, std::uint64_t seed = 0);

    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;
    Discriminator(Discriminator&&) noexcept = default;
    Discriminator& operator=(Discriminator&&) noexcept = default;

    const DiscriminatorConfig& config() const noexcept { return cfg_; }
    ParameterSet<T>& parameters() noexcept { return params_; }
    const ParameterSet<T>& parameters() const noexcept { return params_; }

    /// [B, in, D, H, W] -> raw logits [B, 1, d, h, w].
    BasicTensor<T> forward(const BasicTensor<T>& x) const;

    /// Logit-map extents for an input; throws ShapeError if the input is
    /// too small for the layer stack.
    Vec3 output_extents(const Vec3& input) const;

    template <typename U>
    Discriminator<U> converted() const
    {
        Discriminator<U> d(cfg_, 0);
        params_.copy_values_to(d.parameters());
        return d;
    }

private:
    struct Layer {
        Conv3dLayer<T> conv;
        NormParams<T> norm; // undefined tensors when unnormalized
    };

    BasicTensor<T> apply(const Layer& l, const BasicTensor<T>& x) const;

    DiscriminatorConfig cfg_;
    ParameterSet<T> params_;
    std::vector<Layer> conv_path_;
    std::vector<Layer> wave_path_;
    Layer fuse_;
    Conv3dLayer<T> out_;
};

} // namespace m2t
