#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ossimm/types.hpp"

namespace ossimm {

struct AnalysisConfig {
    double corr_threshold = 0.45;
    int n_dct = 4;
    double te_eff_s = 0.0175;
    double signal_mask_frac = 0.10;
    double r2s_mask_max_hz = 50.0;
    double r2s_range_lo_hz = 12.0;
    double r2s_range_hi_hz = 38.0;
    // Frames dropped before functional analysis (rest plus the first task
    // cycle on the default phantom); -1 derives it from the task.
    int discard_frames = -1;

    void validate() const;
};

/// Per-voxel l2 norm across fast time: [N x n_c] -> [N].
RVector combine_fast_time(const CMatrix& x);

/// Orthonormal DCT-II basis vectors k = 0..n_dct-1 as columns of [T x n_dct].
RMatrix dct_basis(int length, int n_dct);

struct Detrended {
    std::vector<double> residual;       // all n_dct components removed
    std::vector<double> mean_restored;  // residual plus the k = 0 component
};
Detrended detrend_dct(std::span<const double> tc, int n_dct);

struct ActivationResult {
    RVector correlation;                // Pearson r per voxel
    std::vector<std::uint8_t> active;   // r > threshold (sign = +1) or r < -threshold (sign = -1)
    int count_total = 0;
    int count_in_roi = 0;
};

/// Correlates every row of series [N x T] with the reference. A constant
/// voxel has r = 0. roi may be empty.
ActivationResult activation_map(const RMatrix& series, std::span<const double> reference,
                                double threshold, std::span<const std::uint8_t> roi = {},
                                int sign = +1);

/// Pearson correlation; 0 when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// mean / std of the residual after fitting DCT trends (including the mean)
/// and the task regressor. Zero residual std gives +infinity.
RVector tsnr_map(const RMatrix& series, std::span<const double> task_regressor, int n_dct);

/// Removes DCT trends from every row, then correlates with the equally
/// detrended reference.
ActivationResult detrended_activation(const RMatrix& series, std::span<const double> reference,
                                      int n_dct, double threshold,
                                      std::span<const std::uint8_t> roi = {}, int sign = +1);

struct DynamicActivation {
    ActivationResult weighted;  // |m0| exp(-R2* TE_eff), positive correlation
    ActivationResult r2star;    // R2*, negative correlation
};
DynamicActivation dynamic_quant_activation(const RMatrix& m0_abs, const RMatrix& r2star_hz,
                                           double te_eff_s, std::span<const double> reference,
                                           int n_dct, double threshold,
                                           std::span<const std::uint8_t> roi = {});

/// Voxels with magnitude above frac * max, reference R2* below max_hz and,
/// when requested, reference R2* inside (lo, hi).
std::vector<std::uint8_t> quant_mask(const RVector& magnitude, const RVector& ref_r2s_hz,
                                     const AnalysisConfig& cfg, bool additional,
                                     std::span<const std::uint8_t> support = {});

/// RMSE over voxels where mask is set. Throws when the mask is empty.
double r2s_rmse(const RVector& est, const RVector& ref, std::span<const std::uint8_t> mask);

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// ||est - truth|| / ||truth||.
double nrmse(const RMatrix& est, const RMatrix& truth);
double nrmse(const CMatrix& est, const CMatrix& truth);

/// RFC-4180 CSV. Fields containing separators or quotes are quoted.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Binary (P5) 8-bit grayscale render of a row-major map, scaled from
/// [lo, hi]; lo == hi selects the map's own range.
void write_pgm(const std::string& path, const RVector& map, int ny, int nx, double lo = 0.0,
               double hi = 0.0);

}  // namespace ossimm
