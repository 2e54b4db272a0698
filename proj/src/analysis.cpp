#include "ossimm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace ossimm {

namespace {

RVector to_vec(std::span<const double> s) {
    return Eigen::Map<const RVector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

// Residual of each row of `series` after least-squares projection onto the
// orthonormal columns of `basis`.
RMatrix project_out(const RMatrix& series, const RMatrix& basis) {
    return series - (series * basis) * basis.transpose();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

void AnalysisConfig::validate() const {
    if (!(corr_threshold > 0.0 && corr_threshold < 1.0))
        throw std::invalid_argument("corr_threshold must lie in (0, 1)");
    if (n_dct < 1) throw std::invalid_argument("n_dct must be >= 1");
    if (!(te_eff_s > 0.0)) throw std::invalid_argument("te_eff_s must be > 0");
    if (!(r2s_range_lo_hz < r2s_range_hi_hz)) throw std::invalid_argument("bad R2* range");
}

RVector combine_fast_time(const CMatrix& x) {
    if (x.cols() < 1) throw std::invalid_argument("combine_fast_time: n_c must be >= 1");
    return x.rowwise().norm();
}

RMatrix dct_basis(int length, int n_dct) {
    if (length < 1 || n_dct < 1) throw std::invalid_argument("dct_basis: bad sizes");
    RMatrix b(length, n_dct);
    for (int k = 0; k < n_dct; ++k) {
        const double scale = k == 0 ? std::sqrt(1.0 / length) : std::sqrt(2.0 / length);
        for (int t = 0; t < length; ++t) b(t, k) = scale * std::cos(kPi * k * (t + 0.5) / length);
    }
    return b;
}

Detrended detrend_dct(std::span<const double> tc, int n_dct) {
    const int n = static_cast<int>(tc.size());
    if (n <= n_dct) throw std::invalid_argument("detrend_dct: series must be longer than n_dct");
    const RMatrix b = dct_basis(n, n_dct);
    const RVector x = to_vec(tc);
    const RVector coef = b.transpose() * x;
    const RVector res = x - b * coef;
    const RVector with_mean = res + b.col(0) * coef[0];
    Detrended d;
    d.residual.assign(res.data(), res.data() + n);
    d.mean_restored.assign(with_mean.data(), with_mean.data() + n);
    return d;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    const RVector x = to_vec(a);
    const RVector y = to_vec(b);
    const RVector dx = x.array() - x.mean();
    const RVector dy = y.array() - y.mean();
    const double nx = dx.norm();
    const double ny = dy.norm();
    // Relative tolerance so rounding noise on a constant series is not
    // mistaken for signal.
    if (nx <= 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()) * std::sqrt(double(x.size())) ||
        ny <= 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff()) * std::sqrt(double(y.size())))
        return 0.0;
    return std::clamp(dx.dot(dy) / (nx * ny), -1.0, 1.0);
}

ActivationResult activation_map(const RMatrix& series, std::span<const double> reference,
                                double threshold, std::span<const std::uint8_t> roi, int sign) {
    if (series.cols() < 3) throw std::invalid_argument("activation_map: need at least 3 frames");
    if (static_cast<Eigen::Index>(reference.size()) != series.cols())
        throw std::invalid_argument("activation_map: reference length mismatch");
    if (!roi.empty() && static_cast<Eigen::Index>(roi.size()) != series.rows())
        throw std::invalid_argument("activation_map: ROI size mismatch");
    const RVector ref = to_vec(reference);
    if ((ref.array() - ref.mean()).matrix().norm() == 0.0)
        throw std::invalid_argument("activation_map: constant reference");
    ActivationResult out;
    out.correlation.resize(series.rows());
    out.active.assign(static_cast<std::size_t>(series.rows()), 0);
#pragma omp parallel for schedule(static)
    for (Eigen::Index v = 0; v < series.rows(); ++v) {
        const RVector row = series.row(v).transpose();
        out.correlation[v] = pearson({row.data(), static_cast<std::size_t>(row.size())}, reference);
    }
    for (Eigen::Index v = 0; v < series.rows(); ++v) {
        const double r = out.correlation[v];
        const bool on = sign >= 0 ? r > threshold : r < -threshold;
        out.active[static_cast<std::size_t>(v)] = on;
        out.count_total += on;
        if (on && !roi.empty() && roi[static_cast<std::size_t>(v)]) ++out.count_in_roi;
    }
    return out;
}

RVector tsnr_map(const RMatrix& series, std::span<const double> task_regressor, int n_dct) {
    const Eigen::Index t = series.cols();
    if (t < 3) throw std::invalid_argument("tsnr_map: need at least 3 frames");
    if (static_cast<Eigen::Index>(task_regressor.size()) != t)
        throw std::invalid_argument("tsnr_map: regressor length mismatch");
    if (n_dct < 1 || t <= n_dct + 1) throw std::invalid_argument("tsnr_map: too few frames for the model");
    RMatrix design(t, n_dct + 1);
    design.leftCols(n_dct) = dct_basis(static_cast<int>(t), n_dct);
    design.col(n_dct) = to_vec(task_regressor);
    // Orthonormal basis of the nuisance + task space.
    Eigen::HouseholderQR<RMatrix> qr(design);
    const RMatrix q = qr.householderQ() * RMatrix::Identity(t, n_dct + 1);
    const RMatrix res = project_out(series, q);
    const double dof = static_cast<double>(t - (n_dct + 1));
    RVector out(series.rows());
    for (Eigen::Index v = 0; v < series.rows(); ++v) {
        const double mean = series.row(v).mean();
        const double sd = std::sqrt(res.row(v).squaredNorm() / dof);
        const double scale = std::max(1.0, std::abs(mean));
        out[v] = sd <= 1e-13 * scale ? std::numeric_limits<double>::infinity() : mean / sd;
    }
    return out;
}

ActivationResult detrended_activation(const RMatrix& series, std::span<const double> reference,
                                      int n_dct, double threshold,
                                      std::span<const std::uint8_t> roi, int sign) {
    const auto ref = detrend_dct(reference, n_dct).residual;
    const RMatrix b = dct_basis(static_cast<int>(series.cols()), n_dct);
    return activation_map(project_out(series, b), ref, threshold, roi, sign);
}

DynamicActivation dynamic_quant_activation(const RMatrix& m0_abs, const RMatrix& r2star_hz,
                                           double te_eff_s, std::span<const double> reference,
                                           int n_dct, double threshold,
                                           std::span<const std::uint8_t> roi) {
    if (m0_abs.rows() != r2star_hz.rows() || m0_abs.cols() != r2star_hz.cols())
        throw std::invalid_argument("dynamic_quant_activation: map series dims differ");
    const RMatrix weighted = m0_abs.cwiseProduct((-te_eff_s * r2star_hz).array().exp().matrix());
    DynamicActivation d;
    d.weighted = detrended_activation(weighted, reference, n_dct, threshold, roi, +1);
    d.r2star = detrended_activation(r2star_hz, reference, n_dct, threshold, roi, -1);
    return d;
}

std::vector<std::uint8_t> quant_mask(const RVector& magnitude, const RVector& ref_r2s_hz,
                                     const AnalysisConfig& cfg, bool additional,
                                     std::span<const std::uint8_t> support) {
    if (magnitude.size() != ref_r2s_hz.size())
        throw std::invalid_argument("quant_mask: size mismatch");
    const double cut = cfg.signal_mask_frac * magnitude.maxCoeff();
    std::vector<std::uint8_t> m(static_cast<std::size_t>(magnitude.size()), 0);
    for (Eigen::Index v = 0; v < magnitude.size(); ++v) {
        bool on = magnitude[v] > cut && ref_r2s_hz[v] < cfg.r2s_mask_max_hz;
        if (additional) on = on && ref_r2s_hz[v] > cfg.r2s_range_lo_hz && ref_r2s_hz[v] < cfg.r2s_range_hi_hz;
        if (!support.empty()) on = on && support[static_cast<std::size_t>(v)];
        m[static_cast<std::size_t>(v)] = on;
    }
    return m;
}

double r2s_rmse(const RVector& est, const RVector& ref, std::span<const std::uint8_t> mask) {
    if (est.size() != ref.size() || static_cast<Eigen::Index>(mask.size()) != est.size())
        throw std::invalid_argument("r2s_rmse: size mismatch");
    double acc = 0.0;
    int n = 0;
    for (Eigen::Index v = 0; v < est.size(); ++v) {
        if (!mask[static_cast<std::size_t>(v)]) continue;
        const double d = est[v] - ref[v];
        acc += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("r2s_rmse: empty mask");
    return std::sqrt(acc / n);
}

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dice: size mismatch");
    std::size_t inter = 0;
    std::size_t na = 0;
    std::size_t nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] != 0;
        nb += b[i] != 0;
        inter += a[i] && b[i];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double nrmse(const RMatrix& est, const RMatrix& truth) {
    if (est.rows() != truth.rows() || est.cols() != truth.cols())
        throw std::invalid_argument("nrmse: size mismatch");
    return (est - truth).norm() / truth.norm();
}

double nrmse(const CMatrix& est, const CMatrix& truth) {
    if (est.rows() != truth.rows() || est.cols() != truth.cols())
        throw std::invalid_argument("nrmse: size mismatch");
    return (est - truth).norm() / truth.norm();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << csv_field(fields[i]);
        }
        out << "\r\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
}

void write_pgm(const std::string& path, const RVector& map, int ny, int nx, double lo, double hi) {
    if (map.size() != static_cast<Eigen::Index>(ny) * nx)
        throw std::invalid_argument("write_pgm: map size does not match dims");
    if (lo == hi) {
        lo = map.minCoeff();
        hi = map.maxCoeff();
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << nx << ' ' << ny << "\n255\n";
    for (Eigen::Index i = 0; i < map.size(); ++i) {
        const double v = std::isfinite(map[i]) ? (map[i] - lo) / span : 1.0;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
    }
}

}  // namespace ossimm
