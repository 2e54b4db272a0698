#include "ossimm/quantify.hpp"

#include <algorithm>

namespace ossimm {

namespace {

constexpr Eigen::Index kVoxelBlock = 64;
constexpr Eigen::Index kAtomBlock = 2048;

void check_inputs(Eigen::Index n_c, const Dictionary& dict) {
    if (dict.size() == 0) throw std::invalid_argument("dictionary is empty");
    if (n_c != dict.n_c())
        throw std::invalid_argument("signal length does not match dictionary n_c");
}

VoxelEstimate finalize(const Eigen::Ref<const CVector>& v, const Dictionary& dict,
                       Eigen::Index j) {
    VoxelEstimate e;
    e.atom_index = j;
    const auto i = static_cast<std::size_t>(j);
    e.t2p_hat_s = dict.t2p_s[i];
    e.f0_hat_hz = dict.f0_hz[i];
    e.r2star_hat_hz = dict.r2star_hz[i];
    if (dict.varies_t2()) e.t2_hat_s = dict.t2_s[i];
    // <unit atom, v>; m0 = <Phi, v> / ||Phi||^2 with Phi = norm * unit atom.
    const cplx c = dict.atoms.row(j).dot(v.transpose());  // dot conjugates the left operand
    e.m0_hat = c / dict.norms[j];
    e.residual = (v.transpose() - c * dict.atoms.row(j)).norm();
    return e;
}

VoxelEstimate degenerate_estimate(const Dictionary& dict) {
    VoxelEstimate e;
    e.t2p_hat_s = dict.t2p_s[0];
    e.f0_hat_hz = dict.f0_hz[0];
    e.r2star_hat_hz = dict.r2star_hz[0];
    if (dict.varies_t2()) e.t2_hat_s = dict.t2_s[0];
    e.degenerate = true;
    return e;
}

ParameterMaps allocate_maps(Eigen::Index n, bool has_t2) {
    ParameterMaps m;
    m.m0 = CVector::Zero(n);
    m.t2p_s = RVector::Zero(n);
    m.f0_hz = RVector::Zero(n);
    m.t2_s = RVector::Zero(n);
    m.r2star_hz = RVector::Zero(n);
    m.residual = RVector::Zero(n);
    m.atom_index.assign(static_cast<std::size_t>(n), 0);
    m.degenerate.assign(static_cast<std::size_t>(n), 0);
    m.has_t2 = has_t2;
    return m;
}

void store(ParameterMaps& m, Eigen::Index n, const VoxelEstimate& e, const Dictionary& dict) {
    m.m0[n] = e.m0_hat;
    m.t2p_s[n] = e.t2p_hat_s;
    m.f0_hz[n] = e.f0_hat_hz;
    m.t2_s[n] = dict.t2_s[static_cast<std::size_t>(e.atom_index)];
    m.r2star_hz[n] = e.r2star_hat_hz;
    m.residual[n] = e.residual;
    m.atom_index[static_cast<std::size_t>(n)] = e.atom_index;
    m.degenerate[static_cast<std::size_t>(n)] = e.degenerate ? 1 : 0;
}

// Best atom for each voxel of one block using stacked real products.
void match_block(const CMatrix& x, Eigen::Index v0, Eigen::Index nv, const Dictionary& dict,
                 RMatrix& stacked, RMatrix& corr, std::vector<Eigen::Index>& best) {
    const Eigen::Index nc = dict.n_c();
    stacked.resize(2 * nv, 2 * nc);
    const auto block = x.middleRows(v0, nv);
    stacked.topLeftCorner(nv, nc) = block.real();
    stacked.topRightCorner(nv, nc) = block.imag();
    stacked.bottomLeftCorner(nv, nc) = block.imag();
    stacked.bottomRightCorner(nv, nc) = -block.real();

    std::vector<double> best_power(static_cast<std::size_t>(nv), -1.0);
    best.assign(static_cast<std::size_t>(nv), 0);
    const Eigen::Index n_atoms = dict.size();
    for (Eigen::Index a0 = 0; a0 < n_atoms; a0 += kAtomBlock) {
        const Eigen::Index na = std::min(kAtomBlock, n_atoms - a0);
        corr.noalias() = stacked * dict.match_basis.middleCols(a0, na);
        for (Eigen::Index j = 0; j < na; ++j) {
            const double* col = corr.col(j).data();
            for (Eigen::Index b = 0; b < nv; ++b) {
                const double p = col[b] * col[b] + col[nv + b] * col[nv + b];
                auto& bp = best_power[static_cast<std::size_t>(b)];
                if (p > bp) {
                    bp = p;
                    best[static_cast<std::size_t>(b)] = a0 + j;
                }
            }
        }
    }
}

}  // namespace

VoxelEstimate varpro_match(const Eigen::Ref<const CVector>& v, const Dictionary& dict) {
    check_inputs(v.size(), dict);
    if (v.squaredNorm() == 0.0) return degenerate_estimate(dict);
    Eigen::Index best = 0;
    double best_power = -1.0;
    const Eigen::Index nc = dict.n_c();
    for (Eigen::Index j = 0; j < dict.size(); ++j) {
        double re = 0.0;
        double im = 0.0;
        for (Eigen::Index k = 0; k < nc; ++k) {
            const cplx a = dict.atoms(j, k);
            re += a.real() * v[k].real() + a.imag() * v[k].imag();
            im += a.real() * v[k].imag() - a.imag() * v[k].real();
        }
        const double p = re * re + im * im;
        if (p > best_power) {
            best_power = p;
            best = j;
        }
    }
    return finalize(v, dict, best);
}

double regularizer_value(const Eigen::Ref<const CVector>& v, const Dictionary& dict) {
    const double r = varpro_match(v, dict).residual;
    return r * r;
}

VoxelEstimate ParameterMaps::at(Eigen::Index n) const {
    VoxelEstimate e;
    e.m0_hat = m0[n];
    e.t2p_hat_s = t2p_s[n];
    e.f0_hat_hz = f0_hz[n];
    if (has_t2) e.t2_hat_s = t2_s[n];
    e.r2star_hat_hz = r2star_hz[n];
    e.residual = residual[n];
    e.atom_index = atom_index[static_cast<std::size_t>(n)];
    e.degenerate = degenerate[static_cast<std::size_t>(n)] != 0;
    return e;
}

ParameterMaps quantify_image(const CMatrix& x, const Dictionary& dict) {
    if (x.rows() < 1) throw std::invalid_argument("quantify_image: no voxels");
    check_inputs(x.cols(), dict);
    ParameterMaps maps = allocate_maps(x.rows(), dict.varies_t2());
    const Eigen::Index n_blocks = (x.rows() + kVoxelBlock - 1) / kVoxelBlock;
#pragma omp parallel
    {
        RMatrix stacked;
        RMatrix corr;
        std::vector<Eigen::Index> best;
#pragma omp for schedule(static)
        for (Eigen::Index blk = 0; blk < n_blocks; ++blk) {
            const Eigen::Index v0 = blk * kVoxelBlock;
            const Eigen::Index nv = std::min(kVoxelBlock, x.rows() - v0);
            match_block(x, v0, nv, dict, stacked, corr, best);
            for (Eigen::Index b = 0; b < nv; ++b) {
                const Eigen::Index n = v0 + b;
                const CVector v = x.row(n).transpose();
                const VoxelEstimate e = v.squaredNorm() == 0.0
                                            ? degenerate_estimate(dict)
                                            : finalize(v, dict, best[static_cast<std::size_t>(b)]);
                store(maps, n, e, dict);
            }
        }
    }
    return maps;
}

ParameterMaps quantify_image_serial(const CMatrix& x, const Dictionary& dict) {
    if (x.rows() < 1) throw std::invalid_argument("quantify_image: no voxels");
    check_inputs(x.cols(), dict);
    ParameterMaps maps = allocate_maps(x.rows(), dict.varies_t2());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
        const CVector v = x.row(n).transpose();
        store(maps, n, varpro_match(v, dict), dict);
    }
    return maps;
}

CMatrix manifold_projection(const ParameterMaps& maps, const Dictionary& dict) {
    CMatrix m(maps.size(), dict.n_c());
    for (Eigen::Index n = 0; n < maps.size(); ++n) {
        const Eigen::Index j = maps.atom_index[static_cast<std::size_t>(n)];
        m.row(n) = (maps.m0[n] * dict.norms[j]) * dict.atoms.row(j);
    }
    return m;
}

double total_regularizer(const ParameterMaps& maps) { return maps.residual.squaredNorm(); }

}  // namespace ossimm
