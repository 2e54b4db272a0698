#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "ossimm/encode.hpp"
#include "ossimm/manifold.hpp"
#include "ossimm/quantify.hpp"

namespace ossimm {

struct OssimmConfig {
    double beta = 0.0;
    int n_outer = 4;
    int n_cg = 2;
    double kappa_target = 15.0;

    void validate() const;
};

struct LowRankConfig {
    double alpha = 0.0;
    int n_pogm = 15;
    int rank_target = 4;
    // Lipschitz constant sigma(A)^2 of the data-term gradient; computed by
    // power iteration when left at zero.
    double lipschitz = 0.0;

    void validate() const;
};

struct ReconResult {
    CMatrix x_hat;                    // [N x n_c]
    std::vector<double> cost_trace;   // initial cost, then one entry per iteration
    std::vector<double> residual_trace;  // CG normal-equation residual norms (cgSENSE)
    std::optional<ParameterMaps> maps;   // OSSIMM only
};

/// Conjugate gradient for a Hermitian positive (semi)definite operator.
struct CgResult {
    CMatrix x;
    std::vector<double> residual_norms;  // ||b - M x_k|| for k = 0..iterations
};
CgResult conjugate_gradient(const std::function<CMatrix(const CMatrix&)>& apply_m,
                            const CMatrix& b, CMatrix x0, int n_iters);

/// Pools frame i of every set in the window into one densified frame,
/// averages repeated k-locations (weight 1 / sample count) and returns the
/// adjoint reconstruction of each pooled frame, [N x n_c].
CMatrix data_shared_init(const std::vector<KSpaceData>& window, const SensitivityMaps& sens);

/// Alternates manifold projection of the current images with n_cg CG steps
/// on (A'A + 2 beta I) X = A'y + 2 beta M.
ReconResult reconstruct_ossimm(const EncodingOperator& op, const std::vector<CMatrix>& y,
                               const Dictionary& dict, const OssimmConfig& cfg,
                               const CMatrix& x0);

/// POGM with function-value restart for 1/2 ||A X - y||^2 + alpha ||X||_*.
ReconResult reconstruct_lowrank(const EncodingOperator& op, const std::vector<CMatrix>& y,
                                const LowRankConfig& cfg, const CMatrix& x0);

/// CG on (A'A + lambda I) X = A'y, warm-started at x0.
ReconResult reconstruct_cgsense(const EncodingOperator& op, const std::vector<CMatrix>& y,
                                double lambda, int n_iters, const CMatrix& x0);

/// Default cgSENSE regularization 1e-3 sigma(A)^2.
double default_cgsense_lambda(double sigma_a);

/// beta = sigma^2 / (2 (kappa - 1)).
double auto_beta(double sigma_a, double kappa_target);

/// Bisection over alpha until the low-rank reconstruction has numerical rank
/// within rank_target +- 1.
double auto_alpha(const EncodingOperator& op, const std::vector<CMatrix>& y,
                  const LowRankConfig& cfg, const CMatrix& x0);

/// Singular-value soft thresholding.
CMatrix svt(const CMatrix& x, double threshold);

/// Count of singular values above rel_cutoff * sigma_1 (0 for a zero matrix).
int numerical_rank(const CMatrix& x, double rel_cutoff = 1e-3);

/// 1/2 ||A X - y||^2.
double data_term(const EncodingOperator& op, const std::vector<CMatrix>& y, const CMatrix& x);

}  // namespace ossimm
