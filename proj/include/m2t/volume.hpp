#pragma once

// Scalar volumes, the RVOL file format, intensity preprocessing, body
// masks, synthetic paired phantoms and patch sampling.

#include "m2t/config.hpp"
#include "m2t/rng.hpp"
#include "m2t/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace m2t {

enum class Modality { MRI, CT, SCT, MASK };
enum class IntensityUnit { HU, Normalized, Arbitrary };

std::string to_string(Modality m);
std::string to_string(IntensityUnit u);
Modality parse_modality(const std::string& s);
IntensityUnit parse_unit(const std::string& s);

struct Volume {
    Vec3 extents{0, 0, 0}; // (D, H, W)
    std::array<double, 3> spacing{1.0, 1.0, 1.0}; // mm, same axis order
    Modality modality = Modality::MRI;
    IntensityUnit unit = IntensityUnit::Arbitrary;
    std::vector<float> data; // W fastest
    /// Free-form provenance, single line.
    std::string comment;

    Volume() = default;
    Volume(Vec3 extents, Modality modality, IntensityUnit unit, float fill = 0.0f);

    Index voxels() const { return extents[0] * extents[1] * extents[2]; }
    std::size_t offset(Index z, Index y, Index x) const
    {
        return static_cast<std::size_t>((z * extents[1] + y) * extents[2] + x);
    }
    float& at(Index z, Index y, Index x) { return data[offset(z, y, x)]; }
    float at(Index z, Index y, Index x) const { return data[offset(z, y, x)]; }

    /// Throws DataError on inconsistent extents/spacing/data, normalized
    /// values outside [-1, 1] or non-binary masks.
    void validate() const;
};

/// Throws DataError unless both volumes have equal extents.
void require_same_extents(const Volume& a, const Volume& b, const char* what);

inline constexpr std::size_t kRvolHeaderBytes = 256;

Volume read_rvol(const std::string& path);
void write_rvol(const std::string& path, const Volume& v);

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 3000.0;

/// Clip to [kHuMin, kHuMax], then map affinely onto [-1, 1].
Volume normalize_hu(const Volume& ct);
/// Inverse map of normalize_hu (exact on the clipped range up to float rounding).
Volume denormalize_hu(const Volume& normalized, Modality modality = Modality::SCT);
double normalize_hu_value(double hu);
double denormalize_hu_value(double v);

/// Min-max map onto [-1, 1]; a constant volume maps to 0.
Volume normalize_mri(const Volume& mri);

/// Trilinear resampling to `target_mm` on every axis. New extents are
/// round(extent * spacing / target); voxel j samples source index
/// (j + 0.5) * target / spacing - 0.5, clamped to the volume.
Volume resample_isotropic(const Volume& v, double target_mm);

inline constexpr double kBodyThresholdHu = -500.0;
inline constexpr double kBoneThresholdHu = 300.0;

/// HU > -500, largest 6-connected component, holes filled per axial slice.
Volume body_mask(const Volume& ct);

/// HU > threshold (bone analog for Dice).
Volume threshold_mask(const Volume& ct, double threshold_hu = kBoneThresholdHu);

Volume crop(const Volume& v, const Vec3& origin, const Vec3& extents);

/// [1, 1, D, H, W] tensor view of the data (copied).
Tensor to_tensor(const Volume& v);
/// Inverse of to_tensor for a [1, 1, D, H, W] tensor.
Volume from_tensor(const Tensor& t, Modality modality, IntensityUnit unit);

// ---- synthetic phantoms ---------------------------------------------------

struct Tissue {
    std::string name;
    double mri;
    double hu;
};

/// Built-in lookup; MRI -> HU across tissues is non-monotonic.
const std::vector<Tissue>& tissue_table();
const Tissue& tissue_by_name(const std::string& name);

struct PhantomComponent {
    std::string tissue = "soft";
    std::array<double, 3> center{0, 0, 0}; // voxel coordinates (z, y, x)
    std::array<double, 3> radii{1, 1, 1};
};

struct PhantomSpec {
    Vec3 extents{16, 32, 32};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
    /// Painted in order, later components overwrite earlier ones.
    std::vector<PhantomComponent> components;
    /// Extra randomly placed components inside the first one, drawn from seed.
    Index random_components = 0;
    double noise_sigma = 0.02;

    void validate() const;
};

Json to_json(const PhantomSpec& s);
PhantomSpec phantom_spec_from_json(const Json& j, const std::string& path = "phantom");

/// The 32x32x16 (W x H x D) phantom used for the desk-scale learning check.
PhantomSpec desk_phantom_spec(std::uint64_t seed = 7);

struct PhantomPair {
    Volume mri; // arbitrary units, noisy
    Volume ct;  // HU, noiseless
    /// Component index + 1 per voxel (last painter wins), 0 for air.
    std::vector<std::int32_t> labels;
};

PhantomPair make_phantom_pair(const PhantomSpec& spec);

/// Voxels whose centre lies inside the ellipsoid.
bool inside_ellipsoid(const PhantomComponent& c, Index z, Index y, Index x);

// ---- patch sampling -------------------------------------------------------

struct PatchSample {
    Vec3 origin{0, 0, 0};
    Volume mri;
    Volume ct;
};

/// Uniform random patch whose centre (origin + extents / 2) lies in `mask`.
/// Rejection sampling first; falls back to enumerating valid origins.
/// Throws DataError if no origin qualifies.
PatchSample sample_patch(const Volume& mri, const Volume& ct, const Volume& mask, const Vec3& patch, Rng& rng);

} // namespace m2t
