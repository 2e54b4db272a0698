#pragma once

#include <cstdint>
#include <vector>

#include "ossimm/encode.hpp"
#include "ossimm/manifold.hpp"

namespace ossimm {

/// Block design: rest, then n_cycles of (block on, block off).
struct TaskSpec {
    double rest_s = 10.0;
    double block_s = 10.0;
    int n_cycles = 3;
    double frame_period_s = 0.15;  // n_c * TR

    void validate() const;
    int n_frames() const;
    double frame_time(int j) const { return j * frame_period_s; }
    /// 0/1 task waveform sampled at the frame times.
    std::vector<double> boxcar() const;
};

/// Double-gamma response; each gamma has its mode at the given delay.
struct HrfSpec {
    double peak_delay_s = 6.0;
    double undershoot_delay_s = 16.0;
    double peak_dispersion_s = 1.0;
    double undershoot_dispersion_s = 1.0;
    double undershoot_ratio = 1.0 / 6.0;
    double kernel_length_s = 32.0;
};

struct Shape {
    enum class Kind { Disk, Annulus };
    Kind kind = Kind::Disk;
    double cy = 0.0;
    double cx = 0.0;
    double r_inner = 0.0;  // annulus only
    double r_outer = 1.0;

    bool contains(int iy, int ix) const;
};

struct Region {
    Shape shape;
    VoxelParams params;
};

struct PhantomSpec {
    int ny = 40;
    int nx = 40;
    std::vector<Region> regions;  // painted in order; later regions win
    Shape activation_roi;
    double delta_t2p_s = 0.0154;
    TaskSpec task;
    HrfSpec hrf;
    double drift_hz_per_min = 1.0;
    double resp_amp_hz = 0.5;
    double resp_period_s = 4.2;
    double tsnr_db = 38.0;
    std::uint64_t seed = 1;

    void validate() const;
    Eigen::Index n_voxels() const { return static_cast<Eigen::Index>(ny) * nx; }
    /// Index of the region covering each voxel, or -1 outside the object.
    std::vector<int> region_index() const;
    std::vector<std::uint8_t> support_mask() const;
    std::vector<std::uint8_t> roi_mask() const;
};

/// Desk-scale default: 40x40 head-like object with an edge ring outside the
/// R2* dictionary range and an activation disk in one gray-matter region.
PhantomSpec default_phantom_spec();

/// Double-gamma kernel sampled at 0, dt, 2dt, ... < kernel_length, peak 1.
std::vector<double> hrf_kernel(const HrfSpec& spec, double dt_s);

/// Boxcar convolved with the HRF, scaled to a maximum of 1.
std::vector<double> task_reference(const TaskSpec& task, const HrfSpec& hrf);

/// baseline + delta_t2p * reference(t) for an activated voxel.
std::vector<double> t2p_timecourse(const PhantomSpec& spec, double baseline_t2p_s);

/// base + drift * t / 60 + resp_amp * sin(2 pi t / resp_period) per frame.
std::vector<double> f0_timecourse(const PhantomSpec& spec, double base_f0_hz);

/// Noiseless images and true parameters for every slow-time frame.
struct GroundTruth {
    int ny = 0;
    int nx = 0;
    std::vector<CMatrix> frames;  // per slow-time frame, [N x n_c]
    RMatrix t2p_s;                // [N x T]
    RMatrix f0_hz;                // [N x T]
    RMatrix r2star_hz;            // [N x T]
    CVector m0;                   // [N]
    RVector t1_s;                 // [N]
    RVector t2_s;                 // [N]
    std::vector<std::uint8_t> support;
    std::vector<std::uint8_t> roi;
    std::vector<double> reference;  // task reference per frame

    Eigen::Index n_voxels() const { return m0.size(); }
    int n_frames() const { return static_cast<int>(frames.size()); }
};

/// Evaluates voxel_signal for each voxel and frame. Voxels sharing
/// (T1, T2, f0) in a frame share one isochromat bank.
GroundTruth generate_series(const PhantomSpec& spec, const SequenceParams& seq,
                            int cauchy_k = 4000, double f_max_hz = 200.0);

/// Complex noise level per sample for which the mean over support voxels of
/// 20 log10(|combined signal| / residual std) equals tsnr_db.
double noise_sigma_for_tsnr(const GroundTruth& truth, double tsnr_db);

/// Image-domain noisy copy of one frame; stream derived from (seed, frame).
CMatrix add_image_noise(const CMatrix& frame, double sigma, std::uint64_t seed, int frame_index);

/// k-space samples A x + noise for one slow-time frame.
KSpaceData acquire(const CMatrix& frame, const SensitivityMaps& sens, const SamplingPattern& pattern,
                   double sigma, std::uint64_t seed, int frame_index);

}  // namespace ossimm
