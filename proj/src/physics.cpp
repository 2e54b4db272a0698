#include "ossimm/physics.hpp"

#include <cmath>
#include <vector>

namespace ossimm {

namespace {

bool finite_all(std::initializer_list<double> values) {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

// Free precession and relaxation over an interval: the transverse part is
// multiplied by E2 * exp(-i 2 pi f tau), Mz relaxes toward the equilibrium.
struct FreeEvolution {
    double e2c;
    double e2s;
    double e1;
    double recovery;

    FreeEvolution(double tau, double t1, double t2, double f_hz, double m_eq) {
        const double theta = kTwoPi * f_hz * tau;
        const double e2 = std::exp(-tau / t2);
        e1 = std::exp(-tau / t1);
        e2c = e2 * std::cos(theta);
        e2s = e2 * std::sin(theta);
        recovery = m_eq * (1.0 - e1);
    }

    void apply(Eigen::Vector3d& m) const {
        const double x = m.x();
        const double y = m.y();
        m.x() = e2c * x + e2s * y;
        m.y() = -e2s * x + e2c * y;
        m.z() = e1 * m.z() + recovery;
    }

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d p;
        p << e2c, e2s, 0.0, -e2s, e2c, 0.0, 0.0, 0.0, e1;
        return p;
    }
};

// Per-sequence tables: RF rotations for one phase period.
class SteadyStateSolver {
public:
    explicit SteadyStateSolver(const SequenceParams& seq) : seq_(seq) {
        // pi n^2 / n_c is periodic in n with period n_c (even n_c) or 2 n_c (odd).
        period_ = (seq.n_c % 2 == 0) ? seq.n_c : 2 * seq.n_c;
        rotations_.reserve(period_);
        phases_.reserve(period_);
        const double ca = std::cos(seq.flip_rad);
        const double sa = std::sin(seq.flip_rad);
        for (int n = 0; n < period_; ++n) {
            const double phi = quadratic_phase(n, seq.n_c);
            phases_.push_back(phi);
            // Rodrigues rotation about (cos phi, sin phi, 0).
            const double ux = std::cos(phi);
            const double uy = std::sin(phi);
            Eigen::Matrix3d r;
            r << ca + ux * ux * (1 - ca), ux * uy * (1 - ca), uy * sa,
                 ux * uy * (1 - ca), ca + uy * uy * (1 - ca), -ux * sa,
                 -uy * sa, ux * sa, ca;
            rotations_.push_back(r);
        }
    }

    // Writes n_c samples of the unit-phase signal (|m0| = m_eq) into out.
    template <class Out>
    void run(double t1, double t2, double f_hz, double m_eq, Out&& out) const {
        const FreeEvolution to_echo(seq_.te_s, t1, t2, f_hz, m_eq);
        const FreeEvolution to_next(seq_.tr_s - seq_.te_s, t1, t2, f_hz, m_eq);
        const FreeEvolution full_tr(seq_.tr_s, t1, t2, f_hz, m_eq);
        const Eigen::Matrix3d p_tr = full_tr.matrix();
        const Eigen::Vector3d r_tr(0.0, 0.0, full_tr.recovery);

        // Affine map over one phase period: m -> a m + b.
        Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
        Eigen::Vector3d b = Eigen::Vector3d::Zero();
        for (int n = 0; n < period_; ++n) {
            const Eigen::Matrix3d k = p_tr * rotations_[n];
            a = (k * a).eval();
            b = (k * b + r_tr).eval();
        }

        Eigen::Vector3d m(0.0, 0.0, m_eq);
        const long long n_periods = seq_.n_warmup_tr / period_;
        for (long long i = 0; i < n_periods; ++i) m = (a * m + b).eval();

        long long n = n_periods * period_;
        for (; n < seq_.n_warmup_tr; ++n) {
            m = rotations_[n % period_] * m;
            full_tr.apply(m);
        }
        for (int k = 0; k < seq_.n_c; ++k, ++n) {
            const int idx = static_cast<int>(n % period_);
            m = rotations_[idx] * m;
            to_echo.apply(m);
            out(k, cplx(m.x(), m.y()) * std::polar(1.0, -phases_[idx]));
            to_next.apply(m);
        }
    }

private:
    SequenceParams seq_;
    int period_ = 0;
    std::vector<Eigen::Matrix3d> rotations_;
    std::vector<double> phases_;
};

void validate_tissue(double t1, double t2, double f0) {
    if (!finite_all({t1, t2, f0}))
        throw std::invalid_argument("isochromat parameters must be finite");
    if (t1 <= 0.0 || t2 <= 0.0)
        throw std::invalid_argument("T1 and T2 must be positive");
    if (t2 > t1) throw std::invalid_argument("T2 must not exceed T1");
}

void check_freqs(std::span<const double> freqs_hz) {
    for (double f : freqs_hz)
        if (!std::isfinite(f)) throw std::invalid_argument("off-resonance frequency must be finite");
}

}  // namespace

void SequenceParams::validate() const {
    if (!finite_all({tr_s, te_s, flip_rad}))
        throw std::invalid_argument("sequence parameters must be finite");
    if (!(te_s > 0.0 && te_s < tr_s))
        throw std::invalid_argument("sequence requires 0 < TE < TR");
    if (!(flip_rad >= 0.0 && flip_rad < kPi))
        throw std::invalid_argument("flip angle must lie in [0, pi)");
    if (n_c < 2) throw std::invalid_argument("cycle length n_c must be >= 2");
    if (n_warmup_tr <= 0 || n_warmup_tr % n_c != 0)
        throw std::invalid_argument("n_warmup_tr must be a positive multiple of n_c");
}

void IsochromatParams::validate() const {
    validate_tissue(t1_s, t2_s, f0_hz);
    if (!std::isfinite(m0.real()) || !std::isfinite(m0.imag()))
        throw std::invalid_argument("m0 must be finite");
}

double quadratic_phase(long long n, int n_c) {
    if (n_c < 2) throw std::invalid_argument("quadratic_phase: n_c must be >= 2");
    if (n < 0) throw std::invalid_argument("quadratic_phase: n must be >= 0");
    // pi n^2 / n_c mod 2 pi == pi (n^2 mod 2 n_c) / n_c, reduced exactly in integers.
    const long long two_nc = 2LL * n_c;
    const long long r = n % two_nc;
    const long long q = (r * r) % two_nc;
    return kPi * static_cast<double>(q) / static_cast<double>(n_c);
}

FastTimeSignal simulate_isochromat(const SequenceParams& seq, const IsochromatParams& iso) {
    seq.validate();
    iso.validate();
    const SteadyStateSolver solver(seq);
    FastTimeSignal s(seq.n_c);
    const cplx phase = std::abs(iso.m0) > 0.0 ? iso.m0 / std::abs(iso.m0) : cplx(1.0, 0.0);
    solver.run(iso.t1_s, iso.t2_s, iso.f0_hz, std::abs(iso.m0),
               [&](int k, cplx v) { s[k] = v * phase; });
    return s;
}

CMatrix isochromat_bank(const SequenceParams& seq, double t1_s, double t2_s,
                        std::span<const double> freqs_hz) {
    seq.validate();
    validate_tissue(t1_s, t2_s, 0.0);
    check_freqs(freqs_hz);
    const SteadyStateSolver solver(seq);
    const auto n = static_cast<std::ptrdiff_t>(freqs_hz.size());
    CMatrixRowMajor rows(n, seq.n_c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        solver.run(t1_s, t2_s, freqs_hz[i], 1.0, [&](int k, cplx v) { rows(i, k) = v; });
    return rows;
}

CMatrix isochromat_bank_serial(const SequenceParams& seq, double t1_s, double t2_s,
                               std::span<const double> freqs_hz) {
    seq.validate();
    validate_tissue(t1_s, t2_s, 0.0);
    check_freqs(freqs_hz);
    const SteadyStateSolver solver(seq);
    CMatrix out(static_cast<Eigen::Index>(freqs_hz.size()), seq.n_c);
    for (std::size_t i = 0; i < freqs_hz.size(); ++i)
        solver.run(t1_s, t2_s, freqs_hz[i], 1.0,
                   [&](int k, cplx v) { out(static_cast<Eigen::Index>(i), k) = v; });
    return out;
}

}  // namespace ossimm
