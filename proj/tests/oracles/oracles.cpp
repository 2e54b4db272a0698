#include "oracles.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace oracle {

namespace {

using Mat4 = Eigen::Matrix4d;

// Right-handed rotation about z by angle a, embedded in homogeneous form.
Mat4 rot_z(double a) {
    Mat4 m = Mat4::Identity();
    m(0, 0) = std::cos(a);
    m(0, 1) = -std::sin(a);
    m(1, 0) = std::sin(a);
    m(1, 1) = std::cos(a);
    return m;
}

Mat4 rot_x(double a) {
    Mat4 m = Mat4::Identity();
    m(1, 1) = std::cos(a);
    m(1, 2) = -std::sin(a);
    m(2, 1) = std::sin(a);
    m(2, 2) = std::cos(a);
    return m;
}

// Relaxation over tau; the fourth coordinate carries the recovery term.
Mat4 relax(double tau, double t1, double t2, double m_eq) {
    Mat4 m = Mat4::Identity();
    m(0, 0) = std::exp(-tau / t2);
    m(1, 1) = std::exp(-tau / t2);
    m(2, 2) = std::exp(-tau / t1);
    m(2, 3) = m_eq * (1.0 - std::exp(-tau / t1));
    return m;
}

// Free evolution: precession clockwise by 2 pi f tau, then relaxation.
Mat4 free_evolution(double tau, double t1, double t2, double f_hz, double m_eq) {
    return relax(tau, t1, t2, m_eq) * rot_z(-2.0 * M_PI * f_hz * tau);
}

// pi n^2 / n_c with n^2 reduced modulo 2 n_c in integers, so large n stay exact.
double rf_phase(long n, int n_c) { return M_PI * static_cast<double>((n * n) % (2L * n_c)) / n_c; }

}  // namespace

CVector bloch_isochromat(double tr_s, double te_s, double flip_rad, int n_c, long n_warmup,
                         double t1_s, double t2_s, double f0_hz, cplx m0, int n_record) {
    const double m_eq = std::abs(m0);
    const double arg = m_eq > 0.0 ? std::arg(m0) : 0.0;
    const Mat4 to_echo = free_evolution(te_s, t1_s, t2_s, f0_hz, m_eq);
    const Mat4 to_next = free_evolution(tr_s - te_s, t1_s, t2_s, f0_hz, m_eq);
    Eigen::Vector4d m(0.0, 0.0, m_eq, 1.0);
    CVector s(n_record);
    for (long n = 0; n < n_warmup + n_record; ++n) {
        const double phi = rf_phase(n, n_c);
        const Mat4 pulse = rot_z(phi) * rot_x(flip_rad) * rot_z(-phi);
        m = to_echo * pulse * m;
        if (n >= n_warmup) s[n - n_warmup] = cplx(m[0], m[1]) * std::polar(1.0, arg - phi);
        m = to_next * m;
    }
    return s;
}

CMatrix dense_frame_matrix(const ossimm::SensitivityMaps& sens, const ossimm::FramePattern& f,
                           int ny, int nx) {
    std::vector<std::pair<double, double>> k;  // (ky, kx)
    if (f.is_cartesian()) {
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix)
                if (f.mask[static_cast<std::size_t>(iy * nx + ix)]) k.emplace_back(iy - ny / 2, ix - nx / 2);
    } else {
        for (const auto& c : f.coords) k.emplace_back(c[1], c[0]);
    }
    const auto n_s = static_cast<Eigen::Index>(k.size());
    const Eigen::Index n = static_cast<Eigen::Index>(ny) * nx;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    CMatrix a(n_s * sens.n_coils(), n);
    for (int c = 0; c < sens.n_coils(); ++c)
        for (Eigen::Index s = 0; s < n_s; ++s)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    const double ph = -2.0 * M_PI * (k[s].first * y / ny + k[s].second * x / nx);
                    a(c * n_s + s, y * nx + x) = scale * std::polar(1.0, ph) * sens.maps(y * nx + x, c);
                }
    return a;
}

CMatrix dense_encoding(const ossimm::SensitivityMaps& sens, const ossimm::SamplingPattern& p) {
    std::vector<CMatrix> blocks;
    Eigen::Index rows = 0;
    for (const auto& f : p.frames) {
        blocks.push_back(dense_frame_matrix(sens, f, p.ny, p.nx));
        rows += blocks.back().rows();
    }
    const Eigen::Index n = sens.n_voxels();
    CMatrix a = CMatrix::Zero(rows, n * static_cast<Eigen::Index>(blocks.size()));
    Eigen::Index r = 0;
    for (std::size_t t = 0; t < blocks.size(); ++t) {
        a.block(r, static_cast<Eigen::Index>(t) * n, blocks[t].rows(), n) = blocks[t];
        r += blocks[t].rows();
    }
    return a;
}

CVector stack_data(const std::vector<CMatrix>& y) {
    Eigen::Index total = 0;
    for (const auto& b : y) total += b.size();
    CVector v(total);
    Eigen::Index r = 0;
    for (const auto& b : y)
        for (Eigen::Index c = 0; c < b.cols(); ++c)
            for (Eigen::Index s = 0; s < b.rows(); ++s) v[r++] = b(s, c);
    return v;
}

LsFit brute_force_ls(const CVector& v, const ossimm::Dictionary& dict) {
    LsFit best;
    best.residual2 = INFINITY;
    for (Eigen::Index j = 0; j < dict.size(); ++j) {
        CVector phi(dict.n_c());
        for (int k = 0; k < dict.n_c(); ++k) phi[k] = dict.norms[j] * dict.atoms(j, k);
        cplx num(0.0, 0.0);
        double den = 0.0;
        for (int k = 0; k < dict.n_c(); ++k) {
            num += std::conj(phi[k]) * v[k];
            den += std::norm(phi[k]);
        }
        const cplx m0 = num / den;
        double r2 = 0.0;
        for (int k = 0; k < dict.n_c(); ++k) r2 += std::norm(v[k] - m0 * phi[k]);
        if (r2 < best.residual2) best = {j, m0, r2};
    }
    return best;
}

CMatrix svt(const CMatrix& x, double threshold) {
    // Right singular vectors from the Hermitian eigenproblem of X^H X:
    // svt(X) = X V diag(max(s - t, 0) / s) V^H.
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(x.adjoint() * x);
    const CMatrix& v = eig.eigenvectors();
    ossimm::RVector gain = ossimm::RVector::Zero(v.cols());
    for (Eigen::Index i = 0; i < v.cols(); ++i) {
        const double s = std::sqrt(std::max(eig.eigenvalues()[i], 0.0));
        if (s > threshold) gain[i] = (s - threshold) / s;
    }
    return x * v * gain.cast<ossimm::cplx>().asDiagonal() * v.adjoint();
}

double largest_singular_value(const CMatrix& a) {
    Eigen::BDCSVD<CMatrix> svd(a);
    return svd.singularValues()[0];
}

}  // namespace oracle
