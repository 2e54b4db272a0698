#include "ossimm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "ossimm/rng.hpp"

namespace ossimm {

namespace {

// Gamma density with mode at `delay` and scale `dispersion`.
double gamma_mode_pdf(double t, double delay, double dispersion) {
    if (t <= 0.0) return 0.0;
    const double shape = delay / dispersion + 1.0;
    const double x = t / dispersion;
    return std::exp((shape - 1.0) * std::log(x) - x - std::lgamma(shape)) / dispersion;
}

}  // namespace

void TaskSpec::validate() const {
    if (!(rest_s > 0.0) || !(block_s > 0.0) || n_cycles < 1 || !(frame_period_s > 0.0))
        throw std::invalid_argument("task: all durations and counts must be positive");
}

int TaskSpec::n_frames() const {
    const double total = rest_s + 2.0 * block_s * n_cycles;
    return static_cast<int>(std::floor(total / frame_period_s + 1e-9));
}

std::vector<double> TaskSpec::boxcar() const {
    validate();
    std::vector<double> b(static_cast<std::size_t>(n_frames()), 0.0);
    for (int j = 0; j < n_frames(); ++j) {
        const double t = frame_time(j) - rest_s;
        if (t < 0.0) continue;
        const double phase = std::fmod(t, 2.0 * block_s);
        b[static_cast<std::size_t>(j)] = phase < block_s ? 1.0 : 0.0;
    }
    return b;
}

bool Shape::contains(int iy, int ix) const {
    const double dy = iy - cy;
    const double dx = ix - cx;
    const double r = std::sqrt(dy * dy + dx * dx);
    if (kind == Kind::Annulus) return r > r_inner && r <= r_outer;
    return r <= r_outer;
}

void PhantomSpec::validate() const {
    if (ny < 1 || nx < 1) throw std::invalid_argument("phantom: bad image size");
    if (regions.empty()) throw std::invalid_argument("phantom: no regions");
    for (const auto& r : regions) r.params.validate();
    task.validate();
    if (!std::isfinite(tsnr_db)) throw std::invalid_argument("phantom: tsnr_db must be finite");
    if (!(resp_period_s > 0.0)) throw std::invalid_argument("phantom: resp_period_s must be > 0");
    const auto support = support_mask();
    const auto roi = roi_mask();
    for (std::size_t i = 0; i < roi.size(); ++i)
        if (roi[i] && !support[i])
            throw std::invalid_argument("phantom: activation ROI leaves the object support");
    const auto idx = region_index();
    for (std::size_t i = 0; i < roi.size(); ++i) {
        if (!roi[i]) continue;
        const auto& p = regions[static_cast<std::size_t>(idx[i])].params;
        if (!(p.t2p_s + delta_t2p_s > 0.0))
            throw std::invalid_argument("phantom: activated T2' must stay positive");
    }
}

std::vector<int> PhantomSpec::region_index() const {
    std::vector<int> idx(static_cast<std::size_t>(n_voxels()), -1);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            for (std::size_t r = 0; r < regions.size(); ++r)
                if (regions[r].shape.contains(iy, ix)) idx[static_cast<std::size_t>(iy * nx + ix)] = static_cast<int>(r);
    return idx;
}

std::vector<std::uint8_t> PhantomSpec::support_mask() const {
    const auto idx = region_index();
    std::vector<std::uint8_t> m(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        m[i] = idx[i] >= 0 && std::abs(regions[static_cast<std::size_t>(idx[i])].params.m0) > 0.0;
    return m;
}

std::vector<std::uint8_t> PhantomSpec::roi_mask() const {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(n_voxels()), 0);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) m[static_cast<std::size_t>(iy * nx + ix)] = activation_roi.contains(iy, ix);
    return m;
}

PhantomSpec default_phantom_spec() {
    PhantomSpec s;
    const double c = 19.5;
    auto region = [](Shape::Kind kind, double cy, double cx, double r_in, double r_out,
                     double r2star, double f0, cplx m0) {
        Region r;
        r.shape = {kind, cy, cx, r_in, r_out};
        r.params.t1_s = 1.4;
        r.params.t2_s = 0.0926;
        r.params.t2p_s = t2prime_from_r2star(r2star, r.params.t2_s);
        r.params.f0_hz = f0;
        r.params.m0 = m0;
        return r;
    };
    using K = Shape::Kind;
    s.regions = {
        region(K::Disk, c, c, 0.0, 17.0, 17.0, 1.0, std::polar(0.8, 0.3)),
        region(K::Annulus, c, c, 15.0, 17.0, 45.0, -2.0, std::polar(0.6, 0.1)),
        region(K::Disk, c, 11.5, 0.0, 5.0, 20.0, 0.5, std::polar(1.0, 0.5)),
        region(K::Disk, 12.0, 26.0, 0.0, 4.0, 26.0, -1.5, std::polar(0.9, -0.2)),
        region(K::Disk, 27.0, 26.0, 0.0, 4.0, 14.0, 2.0, std::polar(0.7, 0.7)),
    };
    s.activation_roi = {K::Disk, c, 11.5, 0.0, 3.0};
    return s;
}

std::vector<double> hrf_kernel(const HrfSpec& spec, double dt_s) {
    if (!(dt_s > 0.0)) throw std::invalid_argument("hrf_kernel: dt must be > 0");
    const auto n = static_cast<std::size_t>(std::ceil(spec.kernel_length_s / dt_s - 1e-9));
    std::vector<double> h(std::max<std::size_t>(n, 1));
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double t = static_cast<double>(i) * dt_s;
        h[i] = gamma_mode_pdf(t, spec.peak_delay_s, spec.peak_dispersion_s) -
               spec.undershoot_ratio * gamma_mode_pdf(t, spec.undershoot_delay_s, spec.undershoot_dispersion_s);
    }
    const double peak = *std::max_element(h.begin(), h.end());
    if (!(peak > 0.0)) throw NumericalError("hrf_kernel: non-positive peak");
    for (auto& v : h) v /= peak;
    return h;
}

std::vector<double> task_reference(const TaskSpec& task, const HrfSpec& hrf) {
    const auto box = task.boxcar();
    const auto h = hrf_kernel(hrf, task.frame_period_s);
    std::vector<double> r(box.size(), 0.0);
    for (std::size_t j = 0; j < box.size(); ++j)
        for (std::size_t i = 0; i < h.size() && i <= j; ++i) r[j] += h[i] * box[j - i];
    const double peak = *std::max_element(r.begin(), r.end());
    if (!(peak > 0.0)) throw NumericalError("task_reference: task produced no response");
    for (auto& v : r) v /= peak;
    return r;
}

std::vector<double> t2p_timecourse(const PhantomSpec& spec, double baseline_t2p_s) {
    auto r = task_reference(spec.task, spec.hrf);
    for (auto& v : r) v = baseline_t2p_s + spec.delta_t2p_s * v;
    return r;
}

std::vector<double> f0_timecourse(const PhantomSpec& spec, double base_f0_hz) {
    std::vector<double> f(static_cast<std::size_t>(spec.task.n_frames()));
    for (int j = 0; j < spec.task.n_frames(); ++j) {
        const double t = spec.task.frame_time(j);
        f[static_cast<std::size_t>(j)] = base_f0_hz + spec.drift_hz_per_min / 60.0 * t +
                                         spec.resp_amp_hz * std::sin(kTwoPi * t / spec.resp_period_s);
    }
    return f;
}

GroundTruth generate_series(const PhantomSpec& spec, const SequenceParams& seq, int cauchy_k,
                            double f_max_hz) {
    spec.validate();
    seq.validate();
    const Eigen::Index n = spec.n_voxels();
    const int n_t = spec.task.n_frames();
    const auto region = spec.region_index();

    GroundTruth g;
    g.ny = spec.ny;
    g.nx = spec.nx;
    g.support = spec.support_mask();
    g.roi = spec.roi_mask();
    g.reference = task_reference(spec.task, spec.hrf);
    g.m0 = CVector::Zero(n);
    g.t1_s = RVector::Zero(n);
    g.t2_s = RVector::Zero(n);
    g.t2p_s = RMatrix::Zero(n, n_t);
    g.f0_hz = RMatrix::Zero(n, n_t);
    g.r2star_hz = RMatrix::Zero(n, n_t);
    g.frames.assign(static_cast<std::size_t>(n_t), CMatrix::Zero(n, seq.n_c));

    const std::vector<double> drift = f0_timecourse(spec, 0.0);
    const std::vector<double> ref = g.reference;
    for (Eigen::Index v = 0; v < n; ++v) {
        if (!g.support[static_cast<std::size_t>(v)]) continue;
        const auto& p = spec.regions[static_cast<std::size_t>(region[static_cast<std::size_t>(v)])].params;
        g.m0[v] = p.m0;
        g.t1_s[v] = p.t1_s;
        g.t2_s[v] = p.t2_s;
        for (int j = 0; j < n_t; ++j) {
            const bool active = g.roi[static_cast<std::size_t>(v)] != 0;
            const double t2p = p.t2p_s + (active ? spec.delta_t2p_s * ref[static_cast<std::size_t>(j)] : 0.0);
            g.t2p_s(v, j) = t2p;
            g.f0_hz(v, j) = p.f0_hz + drift[static_cast<std::size_t>(j)];
            g.r2star_hz(v, j) = 1.0 / p.t2_s + 1.0 / t2p;
        }
    }

    const auto offsets = cauchy_offsets(cauchy_k, f_max_hz);
#pragma omp parallel for schedule(dynamic)
    for (int j = 0; j < n_t; ++j) {
        // Group voxels by (T1, T2, f0); each group shares one bank and
        // distinct T2' values become rows of one mixing product.
        std::map<std::tuple<double, double, double>, std::vector<Eigen::Index>> groups;
        for (Eigen::Index v = 0; v < n; ++v)
            if (g.support[static_cast<std::size_t>(v)])
                groups[{g.t1_s[v], g.t2_s[v], g.f0_hz(v, j)}].push_back(v);
        CMatrix& frame = g.frames[static_cast<std::size_t>(j)];
        for (const auto& [key, voxels] : groups) {
            std::vector<double> t2ps;
            for (auto v : voxels) t2ps.push_back(g.t2p_s(v, j));
            std::sort(t2ps.begin(), t2ps.end());
            t2ps.erase(std::unique(t2ps.begin(), t2ps.end()), t2ps.end());
            const auto [t1, t2, f0] = key;
            const CMatrix sig = voxel_signals(seq, t1, t2, f0, t2ps, offsets);
            for (auto v : voxels) {
                const auto row = std::lower_bound(t2ps.begin(), t2ps.end(), g.t2p_s(v, j)) - t2ps.begin();
                frame.row(v) = g.m0[v] * sig.row(row);
            }
        }
    }
    return g;
}

double noise_sigma_for_tsnr(const GroundTruth& truth, double tsnr_db) {
    if (!std::isfinite(tsnr_db)) throw std::invalid_argument("tsnr_db must be finite");
    // The noise component of the combined magnitude along the signal
    // direction has std sigma / sqrt(2), so tSNR_v = sqrt(2) |s_v| / sigma.
    double mean_db = 0.0;
    int count = 0;
    for (Eigen::Index v = 0; v < truth.n_voxels(); ++v) {
        if (!truth.support[static_cast<std::size_t>(v)]) continue;
        double mag = 0.0;
        for (const auto& f : truth.frames) mag += f.row(v).norm();
        mag /= static_cast<double>(truth.frames.size());
        if (mag <= 0.0) continue;
        mean_db += 20.0 * std::log10(mag);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("noise calibration: empty support");
    mean_db /= count;
    return std::sqrt(2.0) * std::pow(10.0, (mean_db - tsnr_db) / 20.0);
}

CMatrix add_image_noise(const CMatrix& frame, double sigma, std::uint64_t seed, int frame_index) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    CMatrix out = frame;
    if (sigma == 0.0) return out;
    Rng rng(Rng::stream_seed(seed, static_cast<std::uint64_t>(frame_index)));
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) += rng.complex_normal(sigma);
    return out;
}

KSpaceData acquire(const CMatrix& frame, const SensitivityMaps& sens, const SamplingPattern& pattern,
                   double sigma, std::uint64_t seed, int frame_index) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    EncodingOperator op(sens, pattern);
    KSpaceData d;
    d.pattern = pattern;
    d.samples = op.forward_serial(frame);
    d.noise_sigma = sigma;
    if (sigma > 0.0) {
        Rng rng(Rng::stream_seed(seed ^ 0x6b73706163650000ULL, static_cast<std::uint64_t>(frame_index)));
        for (auto& m : d.samples)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) += rng.complex_normal(sigma);
    }
    return d;
}

}  // namespace ossimm
