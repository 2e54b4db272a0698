#include "ossimm/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ossimm {

namespace {

RMatrix weight_matrix(std::span<const double> t2p_values_s, std::span<const double> offsets_hz) {
    RMatrix w(static_cast<Eigen::Index>(t2p_values_s.size()),
              static_cast<Eigen::Index>(offsets_hz.size()));
    for (std::size_t j = 0; j < t2p_values_s.size(); ++j) {
        const auto wj = cauchy_weights(offsets_hz, t2p_values_s[j]);
        for (std::size_t i = 0; i < wj.size(); ++i)
            w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = wj[i];
    }
    return w;
}

// rows of (weights * bank), computed with two real products.
CMatrix mix(const RMatrix& weights, const CMatrix& bank) {
    const RMatrix re = weights * bank.real();
    const RMatrix im = weights * bank.imag();
    CMatrix out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
}

std::vector<double> shifted(std::span<const double> offsets_hz, double f0_hz) {
    std::vector<double> freqs(offsets_hz.size());
    for (std::size_t i = 0; i < offsets_hz.size(); ++i) freqs[i] = f0_hz + offsets_hz[i];
    return freqs;
}

void check_increasing(const std::vector<double>& v, const char* name) {
    if (v.empty()) throw std::invalid_argument(std::string("dictionary grid: empty ") + name);
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]))
            throw std::invalid_argument(std::string("dictionary grid: ") + name +
                                        " must be strictly increasing");
}

struct BuildPlan {
    std::vector<double> offsets;
    std::vector<double> t2p;
    RMatrix weights;
};

BuildPlan plan_build(const SequenceParams& seq, const DictionaryGrid& grid, int cauchy_k,
                     double f_max_hz) {
    seq.validate();
    grid.validate();
    if (cauchy_k < 1) throw std::invalid_argument("build_dictionary: cauchy_k must be >= 1");
    BuildPlan plan;
    plan.offsets = cauchy_k == 1 ? std::vector<double>{0.0} : cauchy_offsets(cauchy_k, f_max_hz);
    plan.t2p = grid.t2p_values_s();
    plan.weights = weight_matrix(plan.t2p, plan.offsets);
    return plan;
}

Dictionary allocate(const SequenceParams& seq, const DictionaryGrid& grid, int cauchy_k,
                    double f_max_hz, const BuildPlan& plan) {
    Dictionary d;
    d.seq = seq;
    d.grid = grid;
    d.cauchy_k = cauchy_k;
    d.f_max_hz = f_max_hz;
    const auto n_t2 = grid.t2_values_s.size();
    const auto n_t2p = plan.t2p.size();
    const auto n_f0 = grid.f0_values_hz.size();
    const auto n = static_cast<Eigen::Index>(n_t2 * n_t2p * n_f0);
    d.atoms.resize(n, seq.n_c);
    d.norms.resize(n);
    d.t2_s.resize(n);
    d.t2p_s.resize(n);
    d.r2star_hz.resize(n);
    d.f0_hz.resize(n);
    d.t2_index.resize(n);
    d.t2p_index.resize(n);
    d.f0_index.resize(n);
    for (std::size_t a = 0; a < n_t2; ++a)
        for (std::size_t b = 0; b < n_t2p; ++b)
            for (std::size_t c = 0; c < n_f0; ++c) {
                const auto idx = static_cast<std::size_t>(
                    d.index_of(static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)));
                d.t2_s[idx] = grid.t2_values_s[a];
                d.t2p_s[idx] = plan.t2p[b];
                d.r2star_hz[idx] = 1.0 / grid.t2_values_s[a] + 1.0 / plan.t2p[b];
                d.f0_hz[idx] = grid.f0_values_hz[c];
                d.t2_index[idx] = static_cast<int>(a);
                d.t2p_index[idx] = static_cast<int>(b);
                d.f0_index[idx] = static_cast<int>(c);
            }
    return d;
}

// Fills every atom of one (T2, f0) column. Columns are the unit of
// parallel work, so the isochromat bank inside is evaluated serially.
void build_column(Dictionary& d, const BuildPlan& plan, int i_t2, int i_f0) {
    const double t2 = d.grid.t2_values_s[i_t2];
    const auto freqs = shifted(plan.offsets, d.grid.f0_values_hz[i_f0]);
    const CMatrix bank = isochromat_bank_serial(d.seq, d.grid.fixed_t1_s, t2, freqs);
    const CMatrix sigs = mix(plan.weights, bank);
    for (Eigen::Index j = 0; j < sigs.rows(); ++j) {
        const Eigen::Index idx = d.index_of(i_t2, static_cast<int>(j), i_f0);
        const double nrm = sigs.row(j).norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm))
            throw NumericalError("build_dictionary: atom with zero or non-finite norm");
        d.norms[idx] = nrm;
        d.atoms.row(idx) = sigs.row(j) / nrm;
    }
}

Dictionary build_impl(const SequenceParams& seq, const DictionaryGrid& grid, int cauchy_k,
                      double f_max_hz, bool serial) {
    const BuildPlan plan = plan_build(seq, grid, cauchy_k, f_max_hz);
    Dictionary d = allocate(seq, grid, cauchy_k, f_max_hz, plan);
    const int n_t2 = static_cast<int>(grid.t2_values_s.size());
    const int n_f0 = static_cast<int>(grid.f0_values_hz.size());
    const int n_cols = n_t2 * n_f0;
    if (serial) {
        for (int c = 0; c < n_cols; ++c) build_column(d, plan, c / n_f0, c % n_f0);
    } else {
#pragma omp parallel for schedule(dynamic, 1)
        for (int c = 0; c < n_cols; ++c) build_column(d, plan, c / n_f0, c % n_f0);
    }
    d.refresh_match_basis();
    return d;
}

}  // namespace

void VoxelParams::validate() const {
    if (!(t1_s > 0.0 && t2_s > 0.0 && t2p_s > 0.0))
        throw std::invalid_argument("voxel time constants must be positive");
    if (!std::isfinite(f0_hz) || !std::isfinite(r2star_hz()))
        throw std::invalid_argument("voxel parameters must be finite");
}

double t2prime_from_r2star(double r2star_hz, double t2_s) {
    const double r2p = r2star_hz - 1.0 / t2_s;
    if (!(r2p > 0.0)) {
        std::ostringstream msg;
        msg << "R2* = " << r2star_hz << " Hz does not exceed 1/T2 = " << 1.0 / t2_s
            << " Hz (T2 = " << t2_s * 1e3 << " ms)";
        throw std::invalid_argument(msg.str());
    }
    return 1.0 / r2p;
}

double cauchy_scale_hz(double t2p_s) {
    if (!(t2p_s > 0.0)) throw std::invalid_argument("T2' must be positive");
    return 1.0 / (kTwoPi * t2p_s);
}

double cauchy_density(double f_hz, double gamma_hz) {
    return gamma_hz / (kPi * (gamma_hz * gamma_hz + f_hz * f_hz));
}

std::vector<double> cauchy_offsets(int k, double f_max_hz) {
    if (k < 2) throw std::invalid_argument("cauchy grid needs k >= 2");
    if (!(f_max_hz > 0.0)) throw std::invalid_argument("cauchy grid needs f_max > 0");
    std::vector<double> f(static_cast<std::size_t>(k));
    const double step = 2.0 * f_max_hz / (k - 1);
    for (int i = 0; i < k; ++i) f[i] = -f_max_hz + step * i;
    // Force exact symmetry about 0.
    for (int i = 0; i < k / 2; ++i) f[k - 1 - i] = -f[i];
    if (k % 2 == 1) f[k / 2] = 0.0;
    return f;
}

std::vector<double> cauchy_weights(std::span<const double> offsets_hz, double t2p_s) {
    const double gamma = cauchy_scale_hz(t2p_s);
    std::vector<double> w(offsets_hz.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = cauchy_density(offsets_hz[i], gamma);
        total += w[i];
    }
    if (!(total > 0.0)) throw NumericalError("cauchy weights underflow");
    for (double& x : w) x /= total;
    return w;
}

CauchyGrid cauchy_grid(double t2p_s, int k, double f_max_hz) {
    if (!(t2p_s > 0.0)) throw std::invalid_argument("cauchy_grid: T2' must be positive");
    CauchyGrid g;
    g.f_offsets_hz = cauchy_offsets(k, f_max_hz);
    const double gamma = cauchy_scale_hz(t2p_s);
    const double step = 2.0 * f_max_hz / (k - 1);
    double raw = 0.0;
    for (double f : g.f_offsets_hz) raw += cauchy_density(f, gamma);
    g.raw_mass = raw * step;
    g.weights = cauchy_weights(g.f_offsets_hz, t2p_s);
    return g;
}

FastTimeSignal voxel_signal(const SequenceParams& seq, const VoxelParams& vox,
                            const CauchyGrid& grid) {
    vox.validate();
    if (grid.f_offsets_hz.empty() || grid.f_offsets_hz.size() != grid.weights.size())
        throw std::invalid_argument("voxel_signal: malformed Cauchy grid");
    const auto freqs = shifted(grid.f_offsets_hz, vox.f0_hz);
    const CMatrix bank = isochromat_bank(seq, vox.t1_s, vox.t2_s, freqs);
    const Eigen::Map<const RMatrix> w(grid.weights.data(), 1,
                                      static_cast<Eigen::Index>(grid.weights.size()));
    const CMatrix s = mix(w, bank);
    return vox.m0 * s.row(0).transpose();
}

CMatrix voxel_signals(const SequenceParams& seq, double t1_s, double t2_s, double f0_hz,
                      std::span<const double> t2p_values_s, std::span<const double> offsets_hz) {
    const auto freqs = shifted(offsets_hz, f0_hz);
    const CMatrix bank = isochromat_bank(seq, t1_s, t2_s, freqs);
    return mix(weight_matrix(t2p_values_s, offsets_hz), bank);
}

std::vector<double> uniform_grid(double lo, double hi, double step, bool include_endpoint) {
    if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("uniform_grid: bad range");
    const double tol = 1e-9 * step;
    std::vector<double> v;
    for (long k = 0;; ++k) {
        const double x = lo + step * static_cast<double>(k);
        if (x > hi + tol) break;
        if (std::abs(x - hi) <= tol) {
            if (include_endpoint) v.push_back(hi);
            break;
        }
        v.push_back(x);
    }
    if (include_endpoint && (v.empty() || v.back() != hi)) v.push_back(hi);
    return v;
}

std::vector<double> DictionaryGrid::t2p_values_s() const {
    std::vector<double> t2p;
    t2p.reserve(r2star_values_hz.size());
    for (double r : r2star_values_hz) t2p.push_back(t2prime_from_r2star(r, reference_t2_s));
    return t2p;
}

void DictionaryGrid::validate() const {
    check_increasing(t2_values_s, "T2 values");
    check_increasing(r2star_values_hz, "R2* values");
    check_increasing(f0_values_hz, "f0 values");
    if (!(fixed_t1_s > 0.0)) throw std::invalid_argument("dictionary grid: T1 must be positive");
    if (!(reference_t2_s > 0.0))
        throw std::invalid_argument("dictionary grid: reference T2 must be positive");
    for (double t2 : t2_values_s)
        if (!(t2 > 0.0) || t2 > fixed_t1_s)
            throw std::invalid_argument("dictionary grid: T2 values must lie in (0, T1]");
    for (double r : r2star_values_hz) {
        if (!(r > 1.0 / reference_t2_s)) {
            std::ostringstream msg;
            msg << "dictionary grid: pair (T2 = " << reference_t2_s * 1e3 << " ms, R2* = " << r
                << " Hz) has R2* <= 1/T2";
            throw std::invalid_argument(msg.str());
        }
    }
}

Eigen::Index Dictionary::index_of(int i_t2, int i_t2p, int i_f0) const {
    const auto n_t2p = static_cast<Eigen::Index>(grid.r2star_values_hz.size());
    const auto n_f0 = static_cast<Eigen::Index>(grid.f0_values_hz.size());
    return (static_cast<Eigen::Index>(i_t2) * n_t2p + i_t2p) * n_f0 + i_f0;
}

namespace {

template <class Keep>
Dictionary subset(const Dictionary& d, DictionaryGrid grid, Keep&& keep) {
    Dictionary s;
    s.seq = d.seq;
    s.grid = std::move(grid);
    s.cauchy_k = d.cauchy_k;
    s.f_max_hz = d.f_max_hz;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (keep(static_cast<std::size_t>(i))) rows.push_back(i);
    const auto n = static_cast<Eigen::Index>(rows.size());
    s.atoms.resize(n, d.atoms.cols());
    s.norms.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto src = rows[static_cast<std::size_t>(r)];
        const auto i = static_cast<std::size_t>(src);
        s.atoms.row(r) = d.atoms.row(src);
        s.norms[r] = d.norms[src];
        s.t2_s.push_back(d.t2_s[i]);
        s.t2p_s.push_back(d.t2p_s[i]);
        s.r2star_hz.push_back(d.r2star_hz[i]);
        s.f0_hz.push_back(d.f0_hz[i]);
        s.t2_index.push_back(s.grid.t2_values_s.size() == 1 ? 0 : d.t2_index[i]);
        s.t2p_index.push_back(s.grid.r2star_values_hz.size() == 1 ? 0 : d.t2p_index[i]);
        s.f0_index.push_back(d.f0_index[i]);
    }
    s.refresh_match_basis();
    return s;
}

int nearest(const std::vector<double>& v, double x) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (std::abs(v[i] - x) < std::abs(v[best] - x)) best = i;
    return best;
}

}  // namespace

Dictionary Dictionary::slice_t2(double t2) const {
    const int k = nearest(grid.t2_values_s, t2);
    DictionaryGrid g = grid;
    g.t2_values_s = {grid.t2_values_s[k]};
    return subset(*this, std::move(g), [&](std::size_t i) { return t2_index[i] == k; });
}

Dictionary Dictionary::slice_t2prime(double t2p) const {
    const auto values = grid.t2p_values_s();
    const int k = nearest(values, t2p);
    DictionaryGrid g = grid;
    g.r2star_values_hz = {grid.r2star_values_hz[k]};
    return subset(*this, std::move(g), [&](std::size_t i) { return t2p_index[i] == k; });
}

void Dictionary::refresh_match_basis() {
    const Eigen::Index nc = atoms.cols();
    match_basis.resize(2 * nc, atoms.rows());
    for (Eigen::Index j = 0; j < atoms.rows(); ++j) {
        match_basis.col(j).head(nc) = atoms.row(j).real().transpose();
        match_basis.col(j).tail(nc) = atoms.row(j).imag().transpose();
    }
}

Dictionary build_dictionary(const SequenceParams& seq, const DictionaryGrid& grid, int cauchy_k,
                            double f_max_hz) {
    return build_impl(seq, grid, cauchy_k, f_max_hz, false);
}

Dictionary assemble_dictionary(const SequenceParams& seq, const DictionaryGrid& grid, int cauchy_k,
                               double f_max_hz, CMatrixRowMajor atoms, RVector norms) {
    grid.validate();
    BuildPlan plan;
    plan.t2p = grid.t2p_values_s();
    Dictionary d = allocate(seq, grid, cauchy_k, f_max_hz, plan);
    if (atoms.rows() != d.size() || atoms.cols() != seq.n_c || norms.size() != d.size())
        throw std::invalid_argument("assemble_dictionary: atom array does not match the grid");
    d.atoms = std::move(atoms);
    d.norms = std::move(norms);
    d.refresh_match_basis();
    return d;
}

Dictionary build_dictionary_serial(const SequenceParams& seq, const DictionaryGrid& grid,
                                   int cauchy_k, double f_max_hz) {
    return build_impl(seq, grid, cauchy_k, f_max_hz, true);
}

}  // namespace ossimm
