#pragma once

#include <span>
#include <vector>

#include "ossimm/physics.hpp"
#include "ossimm/types.hpp"

namespace ossimm {

struct VoxelParams {
    double t1_s = 1.4;
    double t2_s = 0.0926;
    double t2p_s = 0.1;
    double f0_hz = 0.0;
    cplx m0{1.0, 0.0};

    double r2star_hz() const { return 1.0 / t2_s + 1.0 / t2p_s; }
    void validate() const;
};

/// T2' from R2* and T2. Throws std::invalid_argument when R2* <= 1/T2.
double t2prime_from_r2star(double r2star_hz, double t2_s);

/// Intravoxel off-resonance distribution sampled on a uniform grid.
struct CauchyGrid {
    std::vector<double> f_offsets_hz;
    std::vector<double> weights;  // sums to 1
    double raw_mass = 0.0;        // sum of unnormalized density * spacing
};

/// Scale parameter gamma = 1 / (2 pi T2').
double cauchy_scale_hz(double t2p_s);
double cauchy_density(double f_hz, double gamma_hz);

/// k uniform offsets on [-f_max, f_max].
std::vector<double> cauchy_offsets(int k, double f_max_hz);
/// Truncated Cauchy weights on the given offsets, renormalized to sum to 1.
std::vector<double> cauchy_weights(std::span<const double> offsets_hz, double t2p_s);

CauchyGrid cauchy_grid(double t2p_s, int k, double f_max_hz);

/// T2'-weighted voxel signal: sum_i w_i * isochromat(f0 + offset_i), times m0.
FastTimeSignal voxel_signal(const SequenceParams& seq, const VoxelParams& vox,
                            const CauchyGrid& grid);

/// Unit-m0 voxel signals for several T2' values sharing (T1, T2, f0) and the
/// same Cauchy offsets. Row j corresponds to t2p_values_s[j].
CMatrix voxel_signals(const SequenceParams& seq, double t1_s, double t2_s, double f0_hz,
                      std::span<const double> t2p_values_s, std::span<const double> offsets_hz);

/// Values lo + k*step for k = 0, 1, ... while below hi; hi itself is appended
/// when include_endpoint is set and it is not already hit.
std::vector<double> uniform_grid(double lo, double hi, double step, bool include_endpoint);

/// Parameter grid of the dictionary. T2' values are derived from the R2* grid
/// at a single reference T2, so the T2' axis is shared by every T2 slice.
struct DictionaryGrid {
    std::vector<double> t2_values_s;
    std::vector<double> r2star_values_hz;
    std::vector<double> f0_values_hz;
    double fixed_t1_s = 1.4;
    double reference_t2_s = 0.0926;

    std::vector<double> t2p_values_s() const;
    void validate() const;
};

/// Grid of unit-normalized manifold atoms. Atom ordering is T2-major, then
/// T2' (R2* at the reference T2), then f0.
struct Dictionary {
    SequenceParams seq;
    DictionaryGrid grid;
    int cauchy_k = 4000;
    double f_max_hz = 200.0;

    CMatrixRowMajor atoms;  // [n_atoms x n_c], unit rows
    RVector norms;          // pre-normalization l2 norms
    std::vector<double> t2_s;
    std::vector<double> t2p_s;
    std::vector<double> r2star_hz;
    std::vector<double> f0_hz;
    std::vector<int> t2_index;
    std::vector<int> t2p_index;
    std::vector<int> f0_index;

    // Real stacked form used by the blocked matcher: column j is
    // [Re(atom_j); Im(atom_j)], length 2 n_c.
    RMatrix match_basis;

    Eigen::Index size() const { return atoms.rows(); }
    int n_c() const { return static_cast<int>(atoms.cols()); }
    bool varies_t2() const { return grid.t2_values_s.size() > 1; }

    /// Atom index of grid coordinates.
    Eigen::Index index_of(int i_t2, int i_t2p, int i_f0) const;

    /// 3D sub-dictionary at the T2 grid point nearest to t2_s.
    Dictionary slice_t2(double t2_s) const;
    /// 3D sub-dictionary at the T2' grid point nearest to t2p_s.
    Dictionary slice_t2prime(double t2p_s) const;

    /// Rebuilds match_basis from atoms.
    void refresh_match_basis();
};

/// Builds every atom by voxel_signal with m0 = 1 and l2-normalizes it.
/// Parallel over (T2, f0) columns; bit-identical to the serial build.
Dictionary build_dictionary(const SequenceParams& seq, const DictionaryGrid& grid,
                            int cauchy_k = 4000, double f_max_hz = 200.0);
Dictionary build_dictionary_serial(const SequenceParams& seq, const DictionaryGrid& grid,
                                   int cauchy_k = 4000, double f_max_hz = 200.0);

/// Dictionary from stored atoms and norms laid out in build order.
Dictionary assemble_dictionary(const SequenceParams& seq, const DictionaryGrid& grid, int cauchy_k,
                               double f_max_hz, CMatrixRowMajor atoms, RVector norms);

}  // namespace ossimm
