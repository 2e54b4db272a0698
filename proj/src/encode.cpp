#include "ossimm/encode.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "ossimm/rng.hpp"

namespace ossimm {

namespace {

// In-place 2D FFT on row-major [ny x nx] arrays. Plans are created once per
// shape under a lock; executing a plan on new arrays is thread-safe.
class Fft2 {
public:
    static void forward(cplx* data, int ny, int nx) { execute(data, ny, nx, FFTW_FORWARD); }
    static void backward(cplx* data, int ny, int nx) { execute(data, ny, nx, FFTW_BACKWARD); }

private:
    static void execute(cplx* data, int ny, int nx, int sign) {
        auto* p = reinterpret_cast<fftw_complex*>(data);
        fftw_execute_dft(plan(ny, nx, sign), p, p);
    }

    static fftw_plan plan(int ny, int nx, int sign) {
        static std::mutex mutex;
        static std::map<std::tuple<int, int, int>, fftw_plan> plans;
        std::lock_guard<std::mutex> lock(mutex);
        const auto key = std::make_tuple(ny, nx, sign);
        auto it = plans.find(key);
        if (it != plans.end()) return it->second;
        CVector scratch(static_cast<Eigen::Index>(ny) * nx);
        auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan pl = fftw_plan_dft_2d(ny, nx, p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans.emplace(key, pl);
        return pl;
    }
};

Eigen::Index positive_mod(Eigen::Index a, Eigen::Index n) { return ((a % n) + n) % n; }

}  // namespace

Eigen::Index FramePattern::n_samples() const {
    if (is_cartesian()) {
        Eigen::Index n = 0;
        for (auto m : mask) n += m ? 1 : 0;
        return n;
    }
    return static_cast<Eigen::Index>(coords.size());
}

void SamplingPattern::validate() const {
    if (ny < 1 || nx < 1) throw std::invalid_argument("sampling pattern: bad image size");
    if (frames.empty()) throw std::invalid_argument("sampling pattern: no frames");
    const auto n = static_cast<std::size_t>(ny) * static_cast<std::size_t>(nx);
    for (const auto& f : frames) {
        if (f.is_cartesian() && f.mask.size() != n)
            throw std::invalid_argument("sampling pattern: mask dims do not match image dims");
        if (f.n_samples() < 1)
            throw std::invalid_argument("sampling pattern: frame without samples");
    }
}

EncodingOperator::EncodingOperator(SensitivityMaps sens, SamplingPattern pattern)
    : sens_(std::move(sens)), pattern_(std::move(pattern)) {
    pattern_.validate();
    if (sens_.ny != pattern_.ny || sens_.nx != pattern_.nx ||
        sens_.n_voxels() != static_cast<Eigen::Index>(pattern_.ny) * pattern_.nx)
        throw std::invalid_argument("sensitivity and sampling dimensions differ");
    if (sens_.n_coils() < 1) throw std::invalid_argument("no coil sensitivities");
    const Eigen::Index ny = pattern_.ny;
    const Eigen::Index nx = pattern_.nx;
    fft_index_.resize(pattern_.frames.size());
    for (std::size_t t = 0; t < pattern_.frames.size(); ++t) {
        const auto& f = pattern_.frames[t];
        if (!f.is_cartesian()) continue;
        for (Eigen::Index iy = 0; iy < ny; ++iy)
            for (Eigen::Index ix = 0; ix < nx; ++ix) {
                if (!f.mask[static_cast<std::size_t>(iy * nx + ix)]) continue;
                const Eigen::Index ky = positive_mod(iy - ny / 2, ny);
                const Eigen::Index kx = positive_mod(ix - nx / 2, nx);
                fft_index_[t].push_back(ky * nx + kx);
            }
    }
}

void EncodingOperator::check_image(const CMatrix& x) const {
    if (x.rows() != n_voxels() || x.cols() != n_frames())
        throw std::invalid_argument("image shape does not match encoding operator");
}

void EncodingOperator::check_data(const std::vector<CMatrix>& y) const {
    if (static_cast<Eigen::Index>(y.size()) != n_frames())
        throw std::invalid_argument("k-space frame count does not match encoding operator");
    for (std::size_t t = 0; t < y.size(); ++t)
        if (y[t].rows() != pattern_.frames[t].n_samples() || y[t].cols() != sens_.n_coils())
            throw std::invalid_argument("k-space sample count does not match pattern");
}

CMatrix EncodingOperator::forward_frame(const CMatrix& x, Eigen::Index t) const {
    const auto& f = pattern_.frames[static_cast<std::size_t>(t)];
    const int n_coils = sens_.n_coils();
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_voxels()));
    CMatrix out(f.n_samples(), n_coils);
    CVector buf(n_voxels());
    if (f.is_cartesian()) {
        const auto& idx = fft_index_[static_cast<std::size_t>(t)];
        for (int c = 0; c < n_coils; ++c) {
            buf = sens_.maps.col(c).cwiseProduct(x.col(t));
            Fft2::forward(buf.data(), pattern_.ny, pattern_.nx);
            for (std::size_t s = 0; s < idx.size(); ++s)
                out(static_cast<Eigen::Index>(s), c) = scale * buf[idx[s]];
        }
        return out;
    }
    for (int c = 0; c < n_coils; ++c) {
        buf = sens_.maps.col(c).cwiseProduct(x.col(t));
        for (std::size_t s = 0; s < f.coords.size(); ++s) {
            const double kx = f.coords[s][0];
            const double ky = f.coords[s][1];
            cplx acc(0.0, 0.0);
            for (int iy = 0; iy < pattern_.ny; ++iy)
                for (int ix = 0; ix < pattern_.nx; ++ix) {
                    const double ph = -kTwoPi * (kx * ix / pattern_.nx + ky * iy / pattern_.ny);
                    acc += buf[iy * pattern_.nx + ix] * std::polar(1.0, ph);
                }
            out(static_cast<Eigen::Index>(s), c) = scale * acc;
        }
    }
    return out;
}

CVector EncodingOperator::adjoint_frame(const CMatrix& y, Eigen::Index t) const {
    const auto& f = pattern_.frames[static_cast<std::size_t>(t)];
    const int n_coils = sens_.n_coils();
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_voxels()));
    CVector img = CVector::Zero(n_voxels());
    CVector buf(n_voxels());
    if (f.is_cartesian()) {
        const auto& idx = fft_index_[static_cast<std::size_t>(t)];
        for (int c = 0; c < n_coils; ++c) {
            buf.setZero();
            for (std::size_t s = 0; s < idx.size(); ++s)
                buf[idx[s]] = scale * y(static_cast<Eigen::Index>(s), c);
            Fft2::backward(buf.data(), pattern_.ny, pattern_.nx);
            img += sens_.maps.col(c).conjugate().cwiseProduct(buf);
        }
        return img;
    }
    for (int c = 0; c < n_coils; ++c) {
        buf.setZero();
        for (std::size_t s = 0; s < f.coords.size(); ++s) {
            const double kx = f.coords[s][0];
            const double ky = f.coords[s][1];
            const cplx ys = scale * y(static_cast<Eigen::Index>(s), c);
            for (int iy = 0; iy < pattern_.ny; ++iy)
                for (int ix = 0; ix < pattern_.nx; ++ix) {
                    const double ph = kTwoPi * (kx * ix / pattern_.nx + ky * iy / pattern_.ny);
                    buf[iy * pattern_.nx + ix] += ys * std::polar(1.0, ph);
                }
        }
        img += sens_.maps.col(c).conjugate().cwiseProduct(buf);
    }
    return img;
}

std::vector<CMatrix> EncodingOperator::forward(const CMatrix& x) const {
    check_image(x);
    std::vector<CMatrix> y(static_cast<std::size_t>(n_frames()));
#pragma omp parallel for schedule(static)
    for (Eigen::Index t = 0; t < n_frames(); ++t) y[static_cast<std::size_t>(t)] = forward_frame(x, t);
    return y;
}

CMatrix EncodingOperator::adjoint(const std::vector<CMatrix>& y) const {
    check_data(y);
    CMatrix x(n_voxels(), n_frames());
#pragma omp parallel for schedule(static)
    for (Eigen::Index t = 0; t < n_frames(); ++t)
        x.col(t) = adjoint_frame(y[static_cast<std::size_t>(t)], t);
    return x;
}

std::vector<CMatrix> EncodingOperator::forward_serial(const CMatrix& x) const {
    check_image(x);
    std::vector<CMatrix> y;
    for (Eigen::Index t = 0; t < n_frames(); ++t) y.push_back(forward_frame(x, t));
    return y;
}

CMatrix EncodingOperator::adjoint_serial(const std::vector<CMatrix>& y) const {
    check_data(y);
    CMatrix x(n_voxels(), n_frames());
    for (Eigen::Index t = 0; t < n_frames(); ++t)
        x.col(t) = adjoint_frame(y[static_cast<std::size_t>(t)], t);
    return x;
}

CMatrix EncodingOperator::normal(const CMatrix& x) const {
    check_image(x);
    CMatrix out(n_voxels(), n_frames());
#pragma omp parallel for schedule(static)
    for (Eigen::Index t = 0; t < n_frames(); ++t)
        out.col(t) = adjoint_frame(forward_frame(x, t), t);
    return out;
}

double spectral_norm(const EncodingOperator& op, int n_iters, std::uint64_t seed) {
    if (n_iters < 1) throw std::invalid_argument("spectral_norm: n_iters must be >= 1");
    Rng rng(seed);
    CMatrix x(op.n_voxels(), op.n_frames());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = rng.complex_normal(1.0);
    x /= x.norm();
    double lambda = 0.0;
    for (int k = 0; k < n_iters; ++k) {
        const CMatrix z = op.normal(x);
        lambda = std::real((x.conjugate().cwiseProduct(z)).sum());
        const double nz = z.norm();
        if (nz == 0.0) return 0.0;
        x = z / nz;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

cplx data_inner(const std::vector<CMatrix>& a, const std::vector<CMatrix>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("data_inner: frame count mismatch");
    cplx acc(0.0, 0.0);
    for (std::size_t t = 0; t < a.size(); ++t) acc += (a[t].conjugate().cwiseProduct(b[t])).sum();
    return acc;
}

double data_norm2(const std::vector<CMatrix>& a) {
    double acc = 0.0;
    for (const auto& m : a) acc += m.squaredNorm();
    return acc;
}

}  // namespace ossimm
