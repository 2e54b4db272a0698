#include <algorithm>
#include <cmath>
#include <numeric>

#include "ossimm/encode.hpp"
#include "ossimm/rng.hpp"

namespace ossimm {

Eigen::Index sample_budget(int ny, int nx, double acceleration) {
    if (!(acceleration >= 1.0)) throw std::invalid_argument("acceleration must be >= 1");
    const double n = static_cast<double>(ny) * nx;
    // Guard against n / acc landing a hair above an integer.
    return static_cast<Eigen::Index>(std::ceil(n / acceleration - 1e-9));
}

FramePattern variable_density_mask(int ny, int nx, Eigen::Index n_samples, std::uint64_t seed,
                                   double density_power) {
    const Eigen::Index n = static_cast<Eigen::Index>(ny) * nx;
    if (ny < 1 || nx < 1) throw std::invalid_argument("mask: bad image size");
    if (n_samples < 1 || n_samples > n)
        throw std::invalid_argument("mask: sample count must lie in [1, ny*nx]");
    const Eigen::Index center = static_cast<Eigen::Index>(ny / 2) * nx + nx / 2;

    // Weighted sampling without replacement (Efraimidis-Spirakis): keep the
    // largest log(u)/w keys. The weight decays with normalized radius.
    Rng rng(seed);
    std::vector<double> key(static_cast<std::size_t>(n));
    for (Eigen::Index iy = 0; iy < ny; ++iy)
        for (Eigen::Index ix = 0; ix < nx; ++ix) {
            const double ky = (static_cast<double>(iy) - ny / 2) / std::max(1, ny / 2);
            const double kx = (static_cast<double>(ix) - nx / 2) / std::max(1, nx / 2);
            const double r = std::sqrt(kx * kx + ky * ky);
            const double w = 1.0 / (1.0 + std::pow(r / 0.25, density_power));
            key[static_cast<std::size_t>(iy * nx + ix)] = std::log(rng.uniform_open()) / w;
        }
    key[static_cast<std::size_t>(center)] = 0.0;  // maximum possible key

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::partial_sort(order.begin(), order.begin() + n_samples, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                          const double ka = key[static_cast<std::size_t>(a)];
                          const double kb = key[static_cast<std::size_t>(b)];
                          return ka > kb || (ka == kb && a < b);
                      });
    FramePattern f;
    f.mask.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n_samples; ++i) f.mask[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    return f;
}

SamplingPattern set_pattern(int ny, int nx, int n_c, double acceleration, std::uint64_t seed,
                            Eigen::Index set_index, double density_power) {
    if (n_c < 1) throw std::invalid_argument("set_pattern: n_c must be >= 1");
    const Eigen::Index budget = sample_budget(ny, nx, acceleration);
    SamplingPattern p;
    p.ny = ny;
    p.nx = nx;
    for (int k = 0; k < n_c; ++k) {
        const auto stream = static_cast<std::uint64_t>(set_index * n_c + k);
        p.frames.push_back(variable_density_mask(ny, nx, budget, Rng::stream_seed(seed, stream), density_power));
    }
    return p;
}

SensitivityMaps gaussian_sensitivities(int ny, int nx, int n_coils) {
    if (ny < 1 || nx < 1 || n_coils < 1)
        throw std::invalid_argument("gaussian_sensitivities: bad dimensions");
    SensitivityMaps s;
    s.ny = ny;
    s.nx = nx;
    s.maps.resize(static_cast<Eigen::Index>(ny) * nx, n_coils);
    const double width = 0.45;
    for (int c = 0; c < n_coils; ++c) {
        const double th = kTwoPi * c / n_coils;
        const double cx = 0.5 + 0.45 * std::cos(th);
        const double cy = 0.5 + 0.45 * std::sin(th);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const double x = (ix + 0.5) / nx;
                const double y = (iy + 0.5) / ny;
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double mag = std::exp(-d2 / (2.0 * width * width));
                const double ph = th + kPi * ((x - 0.5) * std::cos(th) + 0.5 * (y - 0.5) * std::sin(th));
                s.maps(iy * nx + ix, c) = std::polar(mag, ph);
            }
    }
    for (Eigen::Index v = 0; v < s.maps.rows(); ++v) s.maps.row(v) /= s.maps.row(v).norm();
    return s;
}

}  // namespace ossimm
