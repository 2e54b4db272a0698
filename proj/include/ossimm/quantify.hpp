#pragma once

#include <optional>
#include <vector>

#include "ossimm/manifold.hpp"

namespace ossimm {

struct VoxelEstimate {
    cplx m0_hat{0.0, 0.0};
    double t2p_hat_s = 0.0;
    double f0_hat_hz = 0.0;
    std::optional<double> t2_hat_s;  // only when the dictionary varies T2
    double r2star_hat_hz = 0.0;
    double residual = 0.0;  // ||v - m0 Phi||_2
    Eigen::Index atom_index = 0;
    bool degenerate = false;  // all-zero input
};

/// Grid-search variable projection: picks the atom maximizing |<atom, v>|^2
/// (lowest index on ties) and the closed-form m0 for it.
VoxelEstimate varpro_match(const Eigen::Ref<const CVector>& v, const Dictionary& dict);

/// Squared distance from v to its best manifold fit.
double regularizer_value(const Eigen::Ref<const CVector>& v, const Dictionary& dict);

/// Per-voxel parameter maps over N voxels.
struct ParameterMaps {
    CVector m0;
    RVector t2p_s;
    RVector f0_hz;
    RVector t2_s;
    RVector r2star_hz;
    RVector residual;
    std::vector<Eigen::Index> atom_index;
    std::vector<std::uint8_t> degenerate;
    bool has_t2 = false;

    Eigen::Index size() const { return m0.size(); }
    VoxelEstimate at(Eigen::Index n) const;
};

/// Applies varpro_match to every row of x [N x n_c]. Voxel blocks are matched
/// against the dictionary with real matrix products, in parallel.
ParameterMaps quantify_image(const CMatrix& x, const Dictionary& dict);

/// Single-threaded reference: one varpro_match call per voxel.
ParameterMaps quantify_image_serial(const CMatrix& x, const Dictionary& dict);

/// Rows m0_hat * Phi(theta_hat), i.e. the manifold projection of each voxel.
CMatrix manifold_projection(const ParameterMaps& maps, const Dictionary& dict);

/// Sum over voxels of squared residuals.
double total_regularizer(const ParameterMaps& maps);

}  // namespace ossimm
