#pragma once

// MRI -> CT generator: conv stem, encoder stages with a convolutional
// stream and a parallel dilated Swin branch, a Swin bottleneck and a
// trilinear-upsampling decoder with skip connections.

#include "m2t/config.hpp"
#include "m2t/swin3d.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace m2t {

struct StageConfig {
    Index channels = 16;
    Index heads = 2;
    Vec3 window{4, 4, 4};
    std::vector<Index> dilations{1, 2};
    /// Swin blocks per dilation path, alternating regular and shifted windows.
    Index blocks = 2;
};

struct GeneratorConfig {
    Index in_channels = 1;
    Index out_channels = 1;
    Index stem_channels = 16;
    std::vector<StageConfig> stages;
    /// Operates on the last stage's output; channels must match it.
    StageConfig bottleneck;

    /// 3 stages [16, 32, 64], heads [2, 4, 4], window 4^3, bottleneck 64.
    static GeneratorConfig desk_default();

    void validate() const;

    /// Spatial extents must be multiples of this.
    Index reduction() const { return Index{1} << (stages.size() - 1); }
};

Json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const Json& j, const std::string& path = "generator");

/// Voxels to append per axis so `extents` become valid generator input.
Vec3 required_padding(const GeneratorConfig& cfg, const Vec3& extents);

template <typename T>
struct StageFeatures {
    BasicTensor<T> f_c; // convolutional stream
    BasicTensor<T> f_t; // transformer branch
    BasicTensor<T> f;   // fused
};

/// Conv3x3x3 + instance norm + ReLU.
template <typename T>
struct ConvNormRelu {
    Conv3dLayer<T> conv;
    NormParams<T> norm;

    BasicTensor<T> operator()(const BasicTensor<T>& x) const
    {
        return relu(instance_norm(conv(x), norm.scale, norm.shift));
    }
};

/// Dilated conv followed by a chain of Swin blocks.
template <typename T>
struct SwinPath {
    Conv3dLayer<T> conv;
    std::vector<SwinBlockParams<T>> blocks;
    std::vector<WindowSpec> windows;

    BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

/// Sum of the dilation paths.
template <typename T>
struct TransformerBranch {
    std::vector<SwinPath<T>> paths;

    BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

/// Conv1x1x1([f_c, f_t]) + f_c.
template <typename T>
BasicTensor<T> fuse_features(const BasicTensor<T>& f_c, const BasicTensor<T>& f_t,
                             const Conv3dLayer<T>& proj);

template <typename T>
struct EncoderStage {
    ConvNormRelu<T> conv_a, conv_b;
    TransformerBranch<T> branch;
    Conv3dLayer<T> fuse;

    StageFeatures<T> operator()(const BasicTensor<T>& x) const;
};

template <typename T>
struct Bottleneck {
    TransformerBranch<T> branch;
    Conv3dLayer<T> fuse;

    BasicTensor<T> operator()(const BasicTensor<T>& x) const
    {
        return fuse_features(x, branch(x), fuse);
    }
};

template <typename T>
struct DecoderLevel {
    ConvNormRelu<T> conv_a, conv_b;
};

template <typename T>
class Generator {
public:
    /// Builds and initializes all parameters from `seed`.
    explicit Generator(GeneratorConfig cfg, std::uint64_t seed = 0);

    Generator(const Generator&) = delete;
    Generator& operator=(const Generator&) = delete;
    Generator(Generator&&) noexcept = default;
    Generator& operator=(Generator&&) noexcept = default;

    const GeneratorConfig& config() const noexcept { return cfg_; }
    ParameterSet<T>& parameters() noexcept { return params_; }
    const ParameterSet<T>& parameters() const noexcept { return params_; }

    /// [B, in, D, H, W] -> [B, out, D, H, W] in (-1, 1).
    BasicTensor<T> forward(const BasicTensor<T>& mri) const;

    BasicTensor<T> stem(const BasicTensor<T>& x) const { return stem_(x); }
    const std::vector<EncoderStage<T>>& stages() const noexcept { return stages_; }
    /// Stride-2 conv between stage i and i + 1.
    const std::vector<Conv3dLayer<T>>& downsamplers() const noexcept { return down_; }
    const Bottleneck<T>& bottleneck() const noexcept { return bottleneck_; }

    /// `skips` ordered deepest first, one per decoder level.
    BasicTensor<T> decoder_and_head(const BasicTensor<T>& bottleneck_out,
                                    const std::vector<StageFeatures<T>>& skips) const;

    /// Copy of the network in another element type, same parameter values.
    template <typename U>
    Generator<U> converted() const
    {
        Generator<U> g(cfg_, 0);
        params_.copy_values_to(g.parameters());
        return g;
    }

    /// Parameters of the dilated conv + Swin paths (stages and bottleneck).
    static bool is_transformer_param(const std::string& name);
    /// The 1x1x1 fusion projections.
    static bool is_fusion_param(const std::string& name);

private:
    GeneratorConfig cfg_;
    ParameterSet<T> params_;
    Conv3dLayer<T> stem_;
    std::vector<EncoderStage<T>> stages_;
    std::vector<Conv3dLayer<T>> down_;
    Bottleneck<T> bottleneck_;
    std::vector<DecoderLevel<T>> decoder_;
    Conv3dLayer<T> head_;
};

} // namespace m2t
