#pragma once

// Masked image-quality metrics and overlap scores.

#include "m2t/config.hpp"
#include "m2t/volume.hpp"

#include <map>
#include <string>
#include <vector>

namespace m2t {

inline constexpr double kDefaultDataRange = kHuMax - kHuMin; // 4024 HU
inline constexpr double kPsnrCapDb = 100.0;

struct SsimParams {
    Index window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = kDefaultDataRange;
};

/// Mean |pred - ref| over mask voxels. Throws DataError on an empty mask.
double mae(const Volume& pred, const Volume& ref, const Volume& mask);

/// Mean squared error over mask voxels.
double masked_mse(const Volume& pred, const Volume& ref, const Volume& mask);

/// 10 log10(range^2 / masked MSE), capped at kPsnrCapDb.
double psnr(const Volume& pred, const Volume& ref, const Volume& mask, double data_range = kDefaultDataRange);
double psnr_from_mse(double mse, double data_range);

/// Uniform-window 3-D SSIM (population moments) averaged over every window
/// that lies inside the volume and whose centre voxel is in the mask.
double ssim(const Volume& pred, const Volume& ref, const Volume& mask, const SsimParams& params = {});

/// 2|A n B| / (|A| + |B|); two empty masks score 1.
double dice(const Volume& a, const Volume& b);

struct StructureMasks {
    std::string name;
    Volume pred;
    Volume ref;
};

struct MetricsReport {
    double mae_hu = 0.0;
    double ssim = 0.0;
    double psnr_db = 0.0;
    std::map<std::string, double> dice;
    Index body_voxels = 0;
    std::map<std::string, std::pair<Index, Index>> structure_voxels; // (pred, ref)
    std::string mask_id;
    SsimParams ssim_params;
    double data_range = kDefaultDataRange;
};

Json to_json(const MetricsReport& r);

/// All metrics for HU volumes; structure masks come from outside (for the
/// phantoms, threshold-derived via bone_structures).
MetricsReport evaluate(const Volume& pred_hu, const Volume& ref_hu, const Volume& body,
                       const std::vector<StructureMasks>& structures, const std::string& mask_id = "body",
                       const SsimParams& params = {});

/// "bone" structure: HU > 300 in both volumes.
StructureMasks bone_structures(const Volume& pred_hu, const Volume& ref_hu);

} // namespace m2t
