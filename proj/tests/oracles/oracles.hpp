#pragma once

// Independent reference implementations used only by the tests.

#include <vector>

#include "ossimm/encode.hpp"
#include "ossimm/manifold.hpp"
#include "ossimm/types.hpp"

namespace oracle {

using ossimm::CMatrix;
using ossimm::CVector;
using ossimm::cplx;

/// Homogeneous 4x4 matrix stepper: every TR is one product of elementary
/// rotation and relaxation matrices, applied TR by TR from equilibrium.
/// Returns n_record demodulated samples after n_warmup TRs.
CVector bloch_isochromat(double tr_s, double te_s, double flip_rad, int n_c, long n_warmup,
                         double t1_s, double t2_s, double f0_hz, cplx m0, int n_record);

/// Dense matrix of the encoding for one frame: rows ordered coil-major over
/// the frame's samples (ascending centered mask index, or coordinate order).
CMatrix dense_frame_matrix(const ossimm::SensitivityMaps& sens, const ossimm::FramePattern& f,
                           int ny, int nx);

/// Block-diagonal dense A over all frames of a pattern.
CMatrix dense_encoding(const ossimm::SensitivityMaps& sens, const ossimm::SamplingPattern& p);

/// Stacks per-frame [n_samples x n_coils] blocks into the dense row order.
CVector stack_data(const std::vector<CMatrix>& y);

/// Per-atom least squares over the unnormalized manifold atoms.
struct LsFit {
    Eigen::Index atom = 0;
    cplx m0{0.0, 0.0};
    double residual2 = 0.0;
};
LsFit brute_force_ls(const CVector& v, const ossimm::Dictionary& dict);

/// Singular-value soft threshold through a divide-and-conquer SVD.
CMatrix svt(const CMatrix& x, double threshold);

/// Largest singular value of a dense matrix.
double largest_singular_value(const CMatrix& a);

}  // namespace oracle
