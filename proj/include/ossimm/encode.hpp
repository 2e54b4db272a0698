#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ossimm/types.hpp"

namespace ossimm {

/// Samples of one fast-time frame: either a Cartesian mask over the centered
/// k-space grid (index (ky + ny/2) * nx + (kx + nx/2)), or an explicit list
/// of (kx, ky) locations in cycles/FOV for exact nonuniform encoding.
struct FramePattern {
    std::vector<std::uint8_t> mask;
    std::vector<std::array<double, 2>> coords;

    bool is_cartesian() const { return !mask.empty(); }
    Eigen::Index n_samples() const;
};

struct SamplingPattern {
    int ny = 0;
    int nx = 0;
    std::vector<FramePattern> frames;

    Eigen::Index n_frames() const { return static_cast<Eigen::Index>(frames.size()); }
    void validate() const;
};

struct SensitivityMaps {
    int ny = 0;
    int nx = 0;
    CMatrix maps;  // [ny*nx x n_coils]

    int n_coils() const { return static_cast<int>(maps.cols()); }
    Eigen::Index n_voxels() const { return maps.rows(); }
};

/// Samples of one slow-time set: one [n_samples x n_coils] block per frame.
struct KSpaceData {
    SamplingPattern pattern;
    std::vector<CMatrix> samples;
    double noise_sigma = 0.0;
};

/// Frame-wise encoding A: coil sensitivities, orthonormal 2D DFT and
/// per-frame sampling. Frames are independent and processed in parallel.
class EncodingOperator {
public:
    EncodingOperator(SensitivityMaps sens, SamplingPattern pattern);

    /// x is [N x n_frames]; returns one [n_samples x n_coils] block per frame.
    std::vector<CMatrix> forward(const CMatrix& x) const;
    CMatrix adjoint(const std::vector<CMatrix>& y) const;
    /// A'A x.
    CMatrix normal(const CMatrix& x) const;

    std::vector<CMatrix> forward_serial(const CMatrix& x) const;
    CMatrix adjoint_serial(const std::vector<CMatrix>& y) const;

    const SensitivityMaps& sensitivities() const { return sens_; }
    const SamplingPattern& pattern() const { return pattern_; }
    Eigen::Index n_voxels() const { return sens_.n_voxels(); }
    Eigen::Index n_frames() const { return pattern_.n_frames(); }

private:
    CMatrix forward_frame(const CMatrix& x, Eigen::Index t) const;
    CVector adjoint_frame(const CMatrix& y, Eigen::Index t) const;
    void check_image(const CMatrix& x) const;
    void check_data(const std::vector<CMatrix>& y) const;

    SensitivityMaps sens_;
    SamplingPattern pattern_;
    // FFT-order linear index of each Cartesian sample, per frame.
    std::vector<std::vector<Eigen::Index>> fft_index_;
};

/// Largest singular value of A by power iteration on A'A from a fixed-seed
/// random start.
double spectral_norm(const EncodingOperator& op, int n_iters, std::uint64_t seed = 0x5eed);

/// Inner product sum conj(a) b over all coil/frame samples.
cplx data_inner(const std::vector<CMatrix>& a, const std::vector<CMatrix>& b);
double data_norm2(const std::vector<CMatrix>& a);

// --- sampling and sensitivity generators ---

/// Variable-density pseudo-random Cartesian mask with n_samples distinct
/// locations; the k-space center is always included.
FramePattern variable_density_mask(int ny, int nx, Eigen::Index n_samples, std::uint64_t seed,
                                   double density_power = 2.0);

/// Per-frame sample budget ceil(ny*nx / acceleration).
Eigen::Index sample_budget(int ny, int nx, double acceleration);

/// Masks for one slow-time set; frame (set, fast) is seeded from
/// (seed, set * n_c + fast).
SamplingPattern set_pattern(int ny, int nx, int n_c, double acceleration, std::uint64_t seed,
                            Eigen::Index set_index, double density_power = 2.0);

/// Smooth complex Gaussian-bump coil profiles, normalized to unit
/// root-sum-of-squares at every voxel.
SensitivityMaps gaussian_sensitivities(int ny, int nx, int n_coils);

}  // namespace ossimm
