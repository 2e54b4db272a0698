#include "ossimm/recon.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace ossimm {

namespace {

double inner_re(const CMatrix& a, const CMatrix& b) {
    return std::real((a.conjugate().cwiseProduct(b)).sum());
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite value");
}

void check_x0(const EncodingOperator& op, const CMatrix& x0) {
    if (x0.rows() != op.n_voxels() || x0.cols() != op.n_frames())
        throw std::invalid_argument("initial image dims do not match the encoding operator");
}

double nuclear_norm(const CMatrix& x) {
    Eigen::JacobiSVD<CMatrix> svd(x);
    return svd.singularValues().sum();
}

// One pooled frame: samples averaged per k-location.
struct PooledFrame {
    FramePattern pattern;
    CMatrix samples;
};

PooledFrame pool_frame(const std::vector<KSpaceData>& window, std::size_t i, int n_coils) {
    const auto& first = window.front().pattern;
    const bool cart = first.frames[i].is_cartesian();
    PooledFrame out;
    if (cart) {
        const auto n = static_cast<std::size_t>(first.ny) * static_cast<std::size_t>(first.nx);
        CMatrix sum = CMatrix::Zero(static_cast<Eigen::Index>(n), n_coils);
        std::vector<int> count(n, 0);
        for (const auto& set : window) {
            const auto& f = set.pattern.frames[i];
            if (!f.is_cartesian()) throw std::invalid_argument("data sharing: mixed sampling types");
            Eigen::Index s = 0;
            for (std::size_t p = 0; p < n; ++p) {
                if (!f.mask[p]) continue;
                sum.row(static_cast<Eigen::Index>(p)) += set.samples[i].row(s++);
                ++count[p];
            }
        }
        out.pattern.mask.assign(n, 0);
        Eigen::Index n_pooled = 0;
        for (std::size_t p = 0; p < n; ++p) n_pooled += count[p] > 0 ? 1 : 0;
        if (n_pooled == 0) throw std::invalid_argument("data sharing: empty pooled frame");
        out.samples.resize(n_pooled, n_coils);
        Eigen::Index s = 0;
        for (std::size_t p = 0; p < n; ++p) {
            if (count[p] == 0) continue;
            out.pattern.mask[p] = 1;
            out.samples.row(s++) = sum.row(static_cast<Eigen::Index>(p)) / static_cast<double>(count[p]);
        }
        return out;
    }
    std::map<std::array<double, 2>, std::pair<Eigen::Index, int>> where;
    std::vector<Eigen::RowVectorXcd> sums;
    for (const auto& set : window) {
        const auto& f = set.pattern.frames[i];
        if (f.is_cartesian()) throw std::invalid_argument("data sharing: mixed sampling types");
        for (std::size_t s = 0; s < f.coords.size(); ++s) {
            auto [it, inserted] = where.try_emplace(f.coords[s], static_cast<Eigen::Index>(sums.size()), 0);
            if (inserted) sums.push_back(Eigen::RowVectorXcd::Zero(n_coils));
            sums[static_cast<std::size_t>(it->second.first)] += set.samples[i].row(static_cast<Eigen::Index>(s));
            ++it->second.second;
        }
    }
    if (where.empty()) throw std::invalid_argument("data sharing: empty pooled frame");
    out.samples.resize(static_cast<Eigen::Index>(where.size()), n_coils);
    Eigen::Index s = 0;
    for (const auto& [k, v] : where) {
        out.pattern.coords.push_back(k);
        out.samples.row(s++) = sums[static_cast<std::size_t>(v.first)] / static_cast<double>(v.second);
    }
    return out;
}

}  // namespace

void OssimmConfig::validate() const {
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
    if (n_outer < 1) throw std::invalid_argument("n_outer must be >= 1");
    if (n_cg < 1) throw std::invalid_argument("n_cg must be >= 1");
    if (!(kappa_target > 1.0)) throw std::invalid_argument("kappa_target must be > 1");
}

void LowRankConfig::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (n_pogm < 1) throw std::invalid_argument("n_pogm must be >= 1");
    if (!(lipschitz >= 0.0)) throw std::invalid_argument("lipschitz must be >= 0");
}

CgResult conjugate_gradient(const std::function<CMatrix(const CMatrix&)>& apply_m,
                            const CMatrix& b, CMatrix x0, int n_iters) {
    if (n_iters < 1) throw std::invalid_argument("CG needs at least one iteration");
    CgResult out;
    out.x = std::move(x0);
    CMatrix r = b - apply_m(out.x);
    CMatrix p = r;
    double rr = r.squaredNorm();
    out.residual_norms.push_back(std::sqrt(rr));
    for (int k = 0; k < n_iters; ++k) {
        if (rr == 0.0) break;
        const CMatrix mp = apply_m(p);
        const double pmp = inner_re(p, mp);
        if (!(pmp > 0.0)) break;  // search direction in the null space
        const double a = rr / pmp;
        out.x += a * p;
        r -= a * mp;
        const double rr_new = r.squaredNorm();
        require_finite(rr_new, "conjugate gradient");
        out.residual_norms.push_back(std::sqrt(rr_new));
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return out;
}

CMatrix data_shared_init(const std::vector<KSpaceData>& window, const SensitivityMaps& sens) {
    if (window.empty()) throw std::invalid_argument("data sharing: empty window");
    const auto& ref = window.front().pattern;
    for (const auto& set : window) {
        if (set.pattern.ny != ref.ny || set.pattern.nx != ref.nx ||
            set.pattern.frames.size() != ref.frames.size() ||
            set.samples.size() != ref.frames.size())
            throw std::invalid_argument("data sharing: inconsistent sets in window");
    }
    CMatrix x(static_cast<Eigen::Index>(ref.ny) * ref.nx, static_cast<Eigen::Index>(ref.frames.size()));
    for (std::size_t i = 0; i < ref.frames.size(); ++i) {
        PooledFrame pf = pool_frame(window, i, sens.n_coils());
        SamplingPattern single{ref.ny, ref.nx, {std::move(pf.pattern)}};
        EncodingOperator op(sens, std::move(single));
        x.col(static_cast<Eigen::Index>(i)) = op.adjoint({pf.samples}).col(0);
    }
    return x;
}

double data_term(const EncodingOperator& op, const std::vector<CMatrix>& y, const CMatrix& x) {
    const auto ax = op.forward(x);
    double acc = 0.0;
    for (std::size_t t = 0; t < ax.size(); ++t) acc += (ax[t] - y[t]).squaredNorm();
    return 0.5 * acc;
}

ReconResult reconstruct_ossimm(const EncodingOperator& op, const std::vector<CMatrix>& y,
                               const Dictionary& dict, const OssimmConfig& cfg,
                               const CMatrix& x0) {
    cfg.validate();
    check_x0(op, x0);
    if (dict.n_c() != op.n_frames())
        throw std::invalid_argument("dictionary n_c does not match the number of frames");
    const CMatrix aty = op.adjoint(y);
    const double two_beta = 2.0 * cfg.beta;
    auto apply_m = [&](const CMatrix& v) -> CMatrix {
        CMatrix out = op.normal(v);
        if (two_beta != 0.0) out += two_beta * v;
        return out;
    };

    ReconResult res;
    res.x_hat = x0;
    ParameterMaps maps = quantify_image(res.x_hat, dict);
    auto cost = [&](const CMatrix& x, const ParameterMaps& m) {
        const double c = data_term(op, y, x) + cfg.beta * total_regularizer(m);
        require_finite(c, "OSSIMM cost");
        return c;
    };
    res.cost_trace.push_back(cost(res.x_hat, maps));
    for (int it = 0; it < cfg.n_outer; ++it) {
        const CMatrix m = manifold_projection(maps, dict);
        CMatrix b = aty;
        if (two_beta != 0.0) b += two_beta * m;
        res.x_hat = conjugate_gradient(apply_m, b, res.x_hat, cfg.n_cg).x;
        maps = quantify_image(res.x_hat, dict);
        res.cost_trace.push_back(cost(res.x_hat, maps));
    }
    res.maps = std::move(maps);
    return res;
}

ReconResult reconstruct_lowrank(const EncodingOperator& op, const std::vector<CMatrix>& y,
                                const LowRankConfig& cfg, const CMatrix& x0) {
    cfg.validate();
    check_x0(op, x0);
    double lip = cfg.lipschitz;
    if (lip == 0.0) {
        const double s = spectral_norm(op, 30);
        lip = s * s;
    }
    if (!(lip > 0.0)) throw NumericalError("low-rank: zero Lipschitz constant");
    const double step = 1.0 / lip;
    const CMatrix aty = op.adjoint(y);
    auto grad = [&](const CMatrix& x) -> CMatrix { return op.normal(x) - aty; };
    auto cost = [&](const CMatrix& x) {
        double c = data_term(op, y, x);
        if (cfg.alpha != 0.0) c += cfg.alpha * nuclear_norm(x);
        require_finite(c, "low-rank cost");
        return c;
    };
    auto prox = [&](const CMatrix& w, double gamma) -> CMatrix {
        return cfg.alpha == 0.0 ? w : svt(w, gamma * cfg.alpha);
    };

    ReconResult res;
    CMatrix x = x0;
    CMatrix u_old = x0;
    CMatrix w_old = x0;
    double theta_old = 1.0;
    double gamma_old = step;
    double f_x = cost(x);
    res.cost_trace.push_back(f_x);
    for (int k = 1; k <= cfg.n_pogm; ++k) {
        const bool last = k == cfg.n_pogm;
        const CMatrix u = x - step * grad(x);
        auto pogm_step = [&](double th_old, const CMatrix& u_prev, const CMatrix& w_prev,
                             double g_prev, double& th_new, double& g_new, CMatrix& w_new) {
            th_new = 0.5 * (1.0 + std::sqrt(1.0 + (last ? 8.0 : 4.0) * th_old * th_old));
            g_new = step * (2.0 * th_old + th_new - 1.0) / th_new;
            w_new = u + ((th_old - 1.0) / th_new) * (u - u_prev) + (th_old / th_new) * (u - x);
            if (th_old != 1.0)
                w_new += ((th_old - 1.0) / (lip * g_prev * th_new)) * (w_prev - x);
            return prox(w_new, g_new);
        };
        double theta = 0.0;
        double gamma = 0.0;
        CMatrix w;
        CMatrix x_new = pogm_step(theta_old, u_old, w_old, gamma_old, theta, gamma, w);
        double f_new = cost(x_new);
        if (f_new > f_x) {
            // Restart: drop momentum and take the plain step from x.
            x_new = pogm_step(1.0, u, x, step, theta, gamma, w);
            f_new = cost(x_new);
        }
        theta_old = theta;
        gamma_old = gamma;
        u_old = u;
        w_old = std::move(w);
        x = std::move(x_new);
        f_x = f_new;
        res.cost_trace.push_back(f_x);
    }
    res.x_hat = std::move(x);
    return res;
}

ReconResult reconstruct_cgsense(const EncodingOperator& op, const std::vector<CMatrix>& y,
                                double lambda, int n_iters, const CMatrix& x0) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (n_iters < 1) throw std::invalid_argument("cgSENSE needs at least one iteration");
    check_x0(op, x0);
    auto apply_m = [&](const CMatrix& v) -> CMatrix {
        CMatrix out = op.normal(v);
        if (lambda != 0.0) out += lambda * v;
        return out;
    };
    auto cost = [&](const CMatrix& x) {
        const double c = data_term(op, y, x) + 0.5 * lambda * x.squaredNorm();
        require_finite(c, "cgSENSE cost");
        return c;
    };
    ReconResult res;
    res.cost_trace.push_back(cost(x0));
    CgResult cg = conjugate_gradient(apply_m, op.adjoint(y), x0, n_iters);
    res.x_hat = std::move(cg.x);
    res.residual_trace = std::move(cg.residual_norms);
    res.cost_trace.push_back(cost(res.x_hat));
    return res;
}

double default_cgsense_lambda(double sigma_a) { return 1e-3 * sigma_a * sigma_a; }

double auto_beta(double sigma_a, double kappa_target) {
    if (!(sigma_a > 0.0)) throw std::invalid_argument("auto_beta: sigma must be > 0");
    if (!(kappa_target > 1.0)) throw std::invalid_argument("auto_beta: kappa_target must be > 1");
    return sigma_a * sigma_a / (2.0 * (kappa_target - 1.0));
}

CMatrix svt(const CMatrix& x, double threshold) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("svt: threshold must be >= 0");
    Eigen::JacobiSVD<CMatrix, Eigen::ColPivHouseholderQRPreconditioner> svd(
        x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RVector s = (svd.singularValues().array() - threshold).max(0.0).matrix();
    return svd.matrixU() * s.cast<cplx>().asDiagonal() * svd.matrixV().adjoint();
}

int numerical_rank(const CMatrix& x, double rel_cutoff) {
    Eigen::JacobiSVD<CMatrix> svd(x);
    const RVector& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) r += s[i] > rel_cutoff * s[0] ? 1 : 0;
    return r;
}

double auto_alpha(const EncodingOperator& op, const std::vector<CMatrix>& y,
                  const LowRankConfig& cfg, const CMatrix& x0) {
    if (cfg.rank_target < 1 || cfg.rank_target > op.n_frames())
        throw std::invalid_argument("rank_target must lie in [1, n_c]");
    LowRankConfig c = cfg;
    if (c.lipschitz == 0.0) {
        const double s = spectral_norm(op, 30);
        c.lipschitz = s * s;
    }
    std::ostringstream trace;
    auto rank_at = [&](double alpha) {
        c.alpha = alpha;
        const int r = numerical_rank(reconstruct_lowrank(op, y, c, x0).x_hat);
        trace << " (alpha=" << alpha << ", rank=" << r << ")";
        return r;
    };
    auto ok = [&](int r) { return std::abs(r - cfg.rank_target) <= 1; };

    // Bracket [lo, hi] with rank(lo) > target > rank(hi), stepping by 4x.
    double a = Eigen::JacobiSVD<CMatrix>(op.adjoint(y)).singularValues()[0];
    if (!(a > 0.0)) throw std::invalid_argument("auto_alpha: zero data");
    int r = rank_at(a);
    if (ok(r)) return a;
    double lo = a;
    double hi = a;
    for (int guard = 0; r > cfg.rank_target; ++guard) {
        if (guard == 30) throw NumericalError("auto_alpha: could not bracket rank target;" + trace.str());
        lo = hi;
        hi *= 4.0;
        r = rank_at(hi);
        if (ok(r)) return hi;
    }
    for (int guard = 0; r < cfg.rank_target && lo == hi; ++guard) {
        if (guard == 60) throw NumericalError("auto_alpha: could not bracket rank target;" + trace.str());
        hi = lo;
        lo /= 4.0;
        r = rank_at(lo);
        if (ok(r)) return lo;
        if (r < cfg.rank_target) hi = lo;
    }
    for (int it = 0; it < 40; ++it) {
        const double mid = std::sqrt(lo * hi);
        const int r = rank_at(mid);
        if (ok(r)) return mid;
        if (r > cfg.rank_target) lo = mid;
        else hi = mid;
    }
    throw NumericalError("auto_alpha: bisection did not reach rank target;" + trace.str());
}

}  // namespace ossimm
