#pragma once

// Full-volume synthesis by sliding windows with overlap-aware averaging.

#include "m2t/generator.hpp"
#include "m2t/volume.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace m2t {

struct SlidingWindowPlan {
    Vec3 volume{0, 0, 0};
    Vec3 patch{0, 0, 0};
    Vec3 stride{0, 0, 0};
    /// Cartesian product of the per-axis origins, z slowest.
    std::vector<Vec3> origins;
    /// Number of windows covering each voxel, W fastest.
    std::vector<std::int32_t> coverage;
};

/// Origins 0, s, 2s, ... while the window fits, plus a final origin
/// clamped to n - p when the last stride leaves voxels uncovered.
std::vector<Index> axis_origins(Index n, Index p, Index s);

/// Stride defaults to max(1, patch / 2) per axis. Requires patch <= volume
/// and 1 <= stride <= patch on every axis.
SlidingWindowPlan plan_windows(const Vec3& volume, const Vec3& patch, std::optional<Vec3> stride = std::nullopt);

/// Maps a [1, 1, p, p, p] window to a prediction of the same shape.
using WindowModel = std::function<Tensor(const Tensor&)>;

/// Normalized MRI in, normalized sCT out. Each voxel is the sum of the
/// covering window predictions (accumulated in double, plan order) divided
/// by its coverage.
Volume synthesize_volume(const Volume& mri, const WindowModel& model, const SlidingWindowPlan& plan);

/// Same, with the generator as the window model. Throws ConfigError when
/// the patch does not suit the generator.
Volume synthesize_volume(const Volume& mri, const Generator<float>& g, const SlidingWindowPlan& plan);

struct SynthesisOptions {
    Vec3 patch{16, 16, 16};
    std::optional<Vec3> stride;
};

/// Raw MRI -> 1 mm resampling -> normalization -> windowed synthesis ->
/// HU. Volumes smaller than the patch are edge-padded for the forward
/// passes and cropped back. The comment field records the checkpoint
/// digest and the plan.
Volume synthesize_to_hu(const Volume& mri, const Generator<float>& g, const SynthesisOptions& opts,
                        const std::string& provenance = "");

/// File-in/file-out wrapper around synthesize_to_hu.
Volume synthesize_file(const std::string& mri_path, const std::string& checkpoint_path, const std::string& out_path,
                       std::optional<Vec3> stride = std::nullopt, std::optional<Vec3> patch = std::nullopt);

} // namespace m2t
