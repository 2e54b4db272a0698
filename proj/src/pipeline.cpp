#include "ossimm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include "ossimm/container.hpp"
#include "ossimm/rng.hpp"

namespace ossimm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void ensure_dir(const RunConfig& cfg) { fs::create_directories(cfg.output_dir); }

void write_sidecar(const std::string& path, const std::string& stage, const RunConfig& cfg,
                   const std::vector<std::string>& inputs, const json& extra = json::object()) {
    json j;
    j["stage"] = stage;
    j["config_hash"] = cfg.hash_hex();
    j["tool_version"] = kToolVersion;
    j["inputs"] = inputs;
    j["info"] = extra;
    std::ofstream out(path + ".json", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path + ".json");
    out << j.dump(2) << '\n';
}

Container read_input(const RunConfig& cfg, const std::string& file, const std::string& stage) {
    const std::string path = stage_path(cfg, file);
    if (!fs::exists(path)) throw MissingInputError(path, stage);
    return Container::read(path);
}

RMatrix combined_series(const std::vector<CMatrix>& images) {
    if (images.empty()) throw std::invalid_argument("empty image series");
    RMatrix m(images.front().rows(), static_cast<Eigen::Index>(images.size()));
    for (std::size_t t = 0; t < images.size(); ++t) m.col(static_cast<Eigen::Index>(t)) = combine_fast_time(images[t]);
    return m;
}

std::vector<std::uint64_t> dims2(Eigen::Index a, Eigen::Index b) {
    return {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b)};
}

Container dictionary_container(const Dictionary& d) {
    Container c;
    c.put_c128("atoms", dims2(d.size(), d.n_c()), d.atoms.data());
    c.put_vector("norms", d.norms);
    c.put_vector("atom_t2_s", d.t2_s);
    c.put_vector("atom_t2p_s", d.t2p_s);
    c.put_vector("atom_r2star_hz", d.r2star_hz);
    c.put_vector("atom_f0_hz", d.f0_hz);
    c.put_vector("grid_t2_s", d.grid.t2_values_s);
    c.put_vector("grid_r2star_hz", d.grid.r2star_values_hz);
    c.put_vector("grid_f0_hz", d.grid.f0_values_hz);
    c.put_scalar("fixed_t1_s", d.grid.fixed_t1_s);
    c.put_scalar("reference_t2_s", d.grid.reference_t2_s);
    c.put_scalar("cauchy_k", d.cauchy_k);
    c.put_scalar("f_max_hz", d.f_max_hz);
    return c;
}

Dictionary load_dictionary(const RunConfig& cfg) {
    const Container c = read_input(cfg, "dictionary.osmm", "build-dict");
    DictionaryGrid g;
    g.t2_values_s = c.f64("grid_t2_s");
    g.r2star_values_hz = c.f64("grid_r2star_hz");
    g.f0_values_hz = c.f64("grid_f0_hz");
    g.fixed_t1_s = c.scalar("fixed_t1_s");
    g.reference_t2_s = c.scalar("reference_t2_s");
    const auto& a = c.get("atoms");
    if (a.dims.size() != 2) throw ContainerError("atoms must be 2D");
    const auto atoms_flat = c.c128("atoms");
    CMatrixRowMajor atoms = Eigen::Map<const CMatrixRowMajor>(
        atoms_flat.data(), static_cast<Eigen::Index>(a.dims[0]), static_cast<Eigen::Index>(a.dims[1]));
    return assemble_dictionary(cfg.sequence, g, static_cast<int>(c.scalar("cauchy_k")), c.scalar("f_max_hz"),
                               std::move(atoms), c.rvector("norms"));
}

GroundTruth load_truth(const RunConfig& cfg) {
    const Container c = read_input(cfg, "phantom.osmm", "phantom");
    GroundTruth g;
    g.ny = static_cast<int>(c.scalar("ny"));
    g.nx = static_cast<int>(c.scalar("nx"));
    g.frames = c.stack("truth_images");
    g.t2p_s = c.rmatrix("t2p_s");
    g.f0_hz = c.rmatrix("f0_hz");
    g.r2star_hz = c.rmatrix("r2star_hz");
    g.m0 = c.cvector("m0");
    g.t1_s = c.rvector("t1_s");
    g.t2_s = c.rvector("t2_s");
    g.support = c.u8("support");
    g.roi = c.u8("roi");
    g.reference = c.f64("reference");
    return g;
}

struct Acquisition {
    SensitivityMaps sens;
    std::vector<KSpaceData> data;
};

Acquisition load_acquisition(const RunConfig& cfg) {
    const Container c = read_input(cfg, "kspace.osmm", "acquire");
    Acquisition a;
    a.sens.ny = static_cast<int>(c.scalar("ny"));
    a.sens.nx = static_cast<int>(c.scalar("nx"));
    a.sens.maps = c.cmatrix("sensitivities");
    const double sigma = c.scalar("noise_sigma");
    const auto& m = c.get("masks");
    if (m.dims.size() != 3) throw ContainerError("masks must be [T, n_c, ny*nx]");
    const auto masks = c.u8("masks");
    const CMatrix samples = c.cmatrix("samples");
    const auto n_t = m.dims[0];
    const auto n_c = m.dims[1];
    const auto n_pix = m.dims[2];
    Eigen::Index row = 0;
    for (std::uint64_t t = 0; t < n_t; ++t) {
        KSpaceData d;
        d.pattern.ny = a.sens.ny;
        d.pattern.nx = a.sens.nx;
        d.noise_sigma = sigma;
        for (std::uint64_t k = 0; k < n_c; ++k) {
            FramePattern f;
            const auto* base = masks.data() + (t * n_c + k) * n_pix;
            f.mask.assign(base, base + n_pix);
            const Eigen::Index ns = f.n_samples();
            if (row + ns > samples.rows()) throw ContainerError("k-space samples truncated");
            d.samples.push_back(samples.middleRows(row, ns));
            row += ns;
            d.pattern.frames.push_back(std::move(f));
        }
        a.data.push_back(std::move(d));
    }
    return a;
}

MapSeries load_maps(const RunConfig& cfg, const std::string& method) {
    const Container c = read_input(cfg, "maps_" + method + ".osmm", "quantify --method " + method);
    return {c.rmatrix("m0_abs"), c.rmatrix("r2star_hz"), c.rmatrix("t2p_s"), c.rmatrix("f0_hz")};
}

std::vector<CMatrix> load_recon(const RunConfig& cfg, const std::string& method) {
    return read_input(cfg, "recon_" + method + ".osmm", "recon --method " + method).stack("images");
}

void check_method(const std::string& m) {
    if (m != "ossimm" && m != "lr" && m != "cgsense")
        throw ConfigError("unknown method " + m + " (expected ossimm, lr or cgsense)");
}

double mean_over_mask(const RVector& v, const std::vector<std::uint8_t>& mask) {
    double acc = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (mask[static_cast<std::size_t>(i)] && std::isfinite(v[i])) {
            acc += v[i];
            ++n;
        }
    return n ? acc / n : 0.0;
}

}  // namespace

// --- in-memory building blocks ---

Dictionary make_dictionary(const RunConfig& cfg) {
    return build_dictionary(cfg.sequence, cfg.dictionary.grid(), cfg.dictionary.cauchy_k, cfg.dictionary.f_max_hz);
}

GroundTruth make_phantom(const RunConfig& cfg) {
    PhantomSpec p = cfg.phantom;
    p.task.frame_period_s = cfg.sequence.n_c * cfg.sequence.tr_s;
    return generate_series(p, cfg.sequence, cfg.dictionary.cauchy_k, cfg.dictionary.f_max_hz);
}

SensitivityMaps make_sensitivities(const RunConfig& cfg) {
    return gaussian_sensitivities(cfg.phantom.ny, cfg.phantom.nx, cfg.sampling.n_coils);
}

std::vector<KSpaceData> make_acquisition(const RunConfig& cfg, const GroundTruth& truth,
                                         const SensitivityMaps& sens) {
    const double sigma = noise_sigma_for_tsnr(truth, cfg.phantom.tsnr_db);
    std::vector<KSpaceData> data(truth.frames.size());
#pragma omp parallel for schedule(static)
    for (int j = 0; j < truth.n_frames(); ++j) {
        const SamplingPattern p = set_pattern(truth.ny, truth.nx, cfg.sequence.n_c, cfg.sampling.acceleration,
                                              cfg.seeds.sampling, j, cfg.sampling.density_power);
        data[static_cast<std::size_t>(j)] = acquire(truth.frames[static_cast<std::size_t>(j)], sens, p, sigma,
                                                    cfg.seeds.noise, j);
    }
    return data;
}

std::vector<CMatrix> make_initial_images(const RunConfig& cfg, const std::vector<KSpaceData>& data,
                                         const SensitivityMaps& sens, const std::string& init) {
    const Eigen::Index n = sens.n_voxels();
    std::vector<CMatrix> x0(data.size());
    if (init == "zero") {
        for (auto& x : x0) x = CMatrix::Zero(n, cfg.sequence.n_c);
    } else if (init == "adjoint") {
#pragma omp parallel for schedule(static)
        for (std::size_t j = 0; j < data.size(); ++j)
            x0[j] = EncodingOperator(sens, data[j].pattern).adjoint_serial(data[j].samples);
    } else if (init == "datashared") {
        // Consecutive blocks of share_window slow-time frames share one
        // pooled initial image.
        const std::size_t w = static_cast<std::size_t>(cfg.recon.share_window);
        const std::size_t n_blocks = (data.size() + w - 1) / w;
#pragma omp parallel for schedule(static)
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const auto lo = data.begin() + static_cast<std::ptrdiff_t>(b * w);
            const auto hi = data.begin() + static_cast<std::ptrdiff_t>(std::min(data.size(), (b + 1) * w));
            const CMatrix x = data_shared_init(std::vector<KSpaceData>(lo, hi), sens);
            for (auto j = b * w; j < std::min(data.size(), (b + 1) * w); ++j) x0[j] = x;
        }
    } else {
        throw ConfigError("unknown init " + init);
    }
    return x0;
}

SeriesRecon reconstruct_series(const RunConfig& cfg, const std::string& method,
                               const std::vector<KSpaceData>& data, const SensitivityMaps& sens,
                               const Dictionary* dict, const ReconOverrides& over, std::ostream& log) {
    check_method(method);
    if (data.empty()) throw std::invalid_argument("no k-space data");
    SeriesRecon out;
    out.method = method;
    const auto x0 = make_initial_images(cfg, data, sens, over.init.value_or(cfg.recon.init));

    // One spectral-norm estimate per run; every frame has the same sample
    // budget and density, so sigma(A) barely varies between frames.
    const EncodingOperator op0(sens, data.front().pattern);
    out.sigma_a = spectral_norm(op0, cfg.recon.power_iters);
    log << method << ": sigma(A) = " << fmt(out.sigma_a) << " (" << cfg.recon.power_iters
        << " power iterations, frame 0)\n";

    OssimmConfig oc;
    LowRankConfig lc;
    double lambda = 0.0;
    if (method == "ossimm") {
        if (!dict) throw std::invalid_argument("OSSIMM needs a dictionary");
        oc.kappa_target = cfg.recon.kappa_target;
        oc.n_outer = over.n_outer.value_or(cfg.recon.n_outer);
        oc.n_cg = over.n_cg.value_or(cfg.recon.n_cg);
        if (over.beta) oc.beta = *over.beta;
        else if (cfg.recon.beta >= 0.0 && !over.force_auto) oc.beta = cfg.recon.beta;
        else oc.beta = auto_beta(out.sigma_a, oc.kappa_target);
        out.parameter = oc.beta;
        out.parameter_name = "beta";
        log << "ossimm: beta = " << fmt(oc.beta) << " (kappa_target " << fmt(oc.kappa_target) << "), "
            << oc.n_outer << " outer x " << oc.n_cg << " CG\n";
    } else if (method == "lr") {
        lc.n_pogm = cfg.recon.n_pogm;
        lc.rank_target = cfg.recon.rank_target;
        lc.lipschitz = out.sigma_a * out.sigma_a;
        if (over.alpha) lc.alpha = *over.alpha;
        else if (cfg.recon.alpha >= 0.0 && !over.force_auto) lc.alpha = cfg.recon.alpha;
        else lc.alpha = auto_alpha(EncodingOperator(sens, data.front().pattern), data.front().samples, lc, x0.front());
        out.parameter = lc.alpha;
        out.parameter_name = "alpha";
        log << "lr: alpha = " << fmt(lc.alpha) << " (rank target " << lc.rank_target << "), "
            << lc.n_pogm << " POGM iterations\n";
    } else {
        if (over.lambda) lambda = *over.lambda;
        else if (cfg.recon.lambda >= 0.0 && !over.force_auto) lambda = cfg.recon.lambda;
        else lambda = default_cgsense_lambda(out.sigma_a);
        out.parameter = lambda;
        out.parameter_name = "lambda";
        log << "cgsense: lambda = " << fmt(lambda) << ", " << cfg.recon.cg_iters << " CG iterations\n";
    }

    out.images.resize(data.size());
    out.cost_traces.resize(data.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t j = 0; j < data.size(); ++j) {
        const EncodingOperator op(sens, data[j].pattern);
        ReconResult r;
        if (method == "ossimm") r = reconstruct_ossimm(op, data[j].samples, *dict, oc, x0[j]);
        else if (method == "lr") r = reconstruct_lowrank(op, data[j].samples, lc, x0[j]);
        else r = reconstruct_cgsense(op, data[j].samples, lambda, cfg.recon.cg_iters, x0[j]);
        out.images[j] = std::move(r.x_hat);
        out.cost_traces[j] = std::move(r.cost_trace);
    }
    return out;
}

MapSeries quantify_series(const std::vector<CMatrix>& images, const Dictionary& dict) {
    if (images.empty()) throw std::invalid_argument("empty image series");
    const Eigen::Index n = images.front().rows();
    const auto t = static_cast<Eigen::Index>(images.size());
    MapSeries m{RMatrix(n, t), RMatrix(n, t), RMatrix(n, t), RMatrix(n, t)};
    for (Eigen::Index j = 0; j < t; ++j) {
        const ParameterMaps p = quantify_image(images[static_cast<std::size_t>(j)], dict);
        m.m0_abs.col(j) = p.m0.cwiseAbs();
        m.r2star_hz.col(j) = p.r2star_hz;
        m.t2p_s.col(j) = p.t2p_s;
        m.f0_hz.col(j) = p.f0_hz;
    }
    return m;
}

int analysis_start_frame(const RunConfig& cfg) {
    if (cfg.analysis.discard_frames >= 0) return cfg.analysis.discard_frames;
    const auto& t = cfg.phantom.task;
    const double period = cfg.sequence.n_c * cfg.sequence.tr_s;
    return static_cast<int>(std::ceil((t.rest_s + 2.0 * t.block_s) / period - 1e-9));
}

MethodMetrics analyze_method(const RunConfig& cfg, const GroundTruth& truth,
                             const std::vector<CMatrix>& images, const MapSeries& maps,
                             const std::string& method) {
    const auto& ac = cfg.analysis;
    const int n_t = truth.n_frames();
    if (static_cast<int>(images.size()) != n_t || maps.r2star_hz.cols() != n_t)
        throw std::invalid_argument("analysis: frame counts differ from the phantom");
    const int t0 = analysis_start_frame(cfg);
    if (n_t - t0 <= ac.n_dct + 2) throw std::invalid_argument("analysis: too few frames after discard");
    const int nt = n_t - t0;

    MethodMetrics m;
    m.method = method;
    double num = 0.0;
    double den = 0.0;
    for (int j = 0; j < n_t; ++j) {
        num += (images[static_cast<std::size_t>(j)] - truth.frames[static_cast<std::size_t>(j)]).squaredNorm();
        den += truth.frames[static_cast<std::size_t>(j)].squaredNorm();
    }
    m.nrmse_images = std::sqrt(num / den);
    const RMatrix est_comb = combined_series(images);
    const RMatrix true_comb = combined_series(truth.frames);
    m.nrmse_combined = nrmse(est_comb, true_comb);

    // R2* accuracy against phantom truth.
    const RVector true_mag = true_comb.rowwise().mean();
    const RVector true_mean_r2s = truth.r2star_hz.middleCols(t0, nt).rowwise().mean();
    const auto mask = quant_mask(true_mag, true_mean_r2s, ac, false, truth.support);
    const auto mask_add = quant_mask(true_mag, true_mean_r2s, ac, true, truth.support);
    auto pooled = [&](const std::vector<std::uint8_t>& mk) {
        double acc = 0.0;
        long cnt = 0;
        for (int j = t0; j < n_t; ++j)
            for (Eigen::Index v = 0; v < truth.n_voxels(); ++v)
                if (mk[static_cast<std::size_t>(v)]) {
                    const double d = maps.r2star_hz(v, j) - truth.r2star_hz(v, j);
                    acc += d * d;
                    ++cnt;
                }
        if (cnt == 0) throw std::invalid_argument("r2s_rmse: empty mask");
        return std::sqrt(acc / static_cast<double>(cnt));
    };
    m.rmse_hz = pooled(mask);
    m.rmse_masked_hz = pooled(mask_add);
    const RVector est_mean_r2s = maps.r2star_hz.middleCols(t0, nt).rowwise().mean();
    m.mean_map_rmse_hz = r2s_rmse(est_mean_r2s, true_mean_r2s, mask);
    m.mean_map_rmse_masked_hz = r2s_rmse(est_mean_r2s, true_mean_r2s, mask_add);

    // Functional analysis on the kept frames.
    const std::vector<double> ref(truth.reference.begin() + t0, truth.reference.end());
    const RMatrix series = est_comb.middleCols(t0, nt);
    const ActivationResult act = detrended_activation(series, ref, ac.n_dct, ac.corr_threshold, truth.roi, +1);
    m.n_activated = act.count_total;
    m.n_activated_roi = act.count_in_roi;
    m.dice = dice(act.active, truth.roi);
    m.mean_tsnr = mean_over_mask(tsnr_map(series, ref, ac.n_dct), truth.support);

    const DynamicActivation dyn = dynamic_quant_activation(maps.m0_abs.middleCols(t0, nt),
                                                           maps.r2star_hz.middleCols(t0, nt), ac.te_eff_s,
                                                           ref, ac.n_dct, ac.corr_threshold, truth.roi);
    m.r2s_roi_corr = mean_over_mask(dyn.r2star.correlation, truth.roi);
    m.weighted_roi_corr = mean_over_mask(dyn.weighted.correlation, truth.roi);
    m.n_r2s_activated_roi = dyn.r2star.count_in_roi;
    m.n_weighted_activated_roi = dyn.weighted.count_in_roi;
    return m;
}

// --- estimation modes ---

EstimationModesResult run_estimation_modes(const RunConfig& cfg, const EstimationModesConfig& em,
                                           std::ostream& log) {
    const SequenceParams& seq = cfg.sequence;
    PhantomSpec p = cfg.phantom;
    p.task.frame_period_s = seq.n_c * seq.tr_s;
    const int n_t = p.task.n_frames();
    const double t2p0 = t2prime_from_r2star(em.r2star_hz, em.t2_s);
    const auto t2p_tc = t2p_timecourse(p, t2p0);
    const auto f0_tc = f0_timecourse(p, em.f0_hz);
    const auto offsets = cauchy_offsets(cfg.dictionary.cauchy_k, cfg.dictionary.f_max_hz);

    EstimationModesResult res;
    res.reference = task_reference(p.task, p.hrf);
    res.t2p_true_s.resize(n_t);
    res.r2star_true_hz.resize(n_t);
    CMatrix clean(n_t, seq.n_c);
#pragma omp parallel for schedule(dynamic)
    for (int j = 0; j < n_t; ++j) {
        const double t2p = t2p_tc[static_cast<std::size_t>(j)];
        clean.row(j) = voxel_signals(seq, em.t1_s, em.t2_s, f0_tc[static_cast<std::size_t>(j)],
                                     std::vector<double>{t2p}, offsets).row(0);
    }
    for (int j = 0; j < n_t; ++j) {
        res.t2p_true_s[j] = t2p_tc[static_cast<std::size_t>(j)];
        res.r2star_true_hz[j] = 1.0 / em.t2_s + 1.0 / res.t2p_true_s[j];
    }
    // Single-voxel tSNR of the combined magnitude: sqrt(2) |s| / sigma.
    const double mean_mag = clean.rowwise().norm().mean();
    res.noise_sigma = std::sqrt(2.0) * mean_mag * std::pow(10.0, -p.tsnr_db / 20.0);
    CMatrix noisy = clean;
    for (int j = 0; j < n_t; ++j) {
        Rng rng(Rng::stream_seed(cfg.seeds.noise, static_cast<std::uint64_t>(j)));
        for (Eigen::Index k = 0; k < noisy.cols(); ++k) noisy(j, k) += rng.complex_normal(res.noise_sigma);
    }

    DictionaryGrid g;
    g.t2_values_s = uniform_grid(em.t2_lo_s, em.t2_hi_s, em.t2_step_s, true);
    g.r2star_values_hz = uniform_grid(cfg.dictionary.r2star_lo_hz, cfg.dictionary.r2star_hi_hz, em.r2star_step_hz, true);
    g.f0_values_hz = uniform_grid(em.f0_lo_hz, em.f0_hi_hz, cfg.dictionary.f0_step_hz, false);
    g.fixed_t1_s = cfg.dictionary.t1_s;
    g.reference_t2_s = cfg.dictionary.reference_t2_s;
    log << "estimation-modes: building " << g.t2_values_s.size() << " x " << g.r2star_values_hz.size() << " x "
        << g.f0_values_hz.size() << " dictionary\n";
    const Dictionary d4 = build_dictionary(seq, g, cfg.dictionary.cauchy_k, cfg.dictionary.f_max_hz);

    struct Mode {
        const char* name;
        const char* desc;
        Dictionary dict;
    };
    std::vector<Mode> modes;
    modes.push_back({"a", "joint T2 and T2' (4D dictionary)", d4});
    modes.push_back({"b", "T2' fixed at baseline, T2 estimated", d4.slice_t2prime(t2p0)});
    modes.push_back({"c", "T2 fixed at the true value, T2' estimated", d4.slice_t2(em.t2_s)});
    modes.push_back({"d", "T2 fixed at a biased value, T2' estimated", d4.slice_t2(em.biased_t2_s)});

    const RVector ref = Eigen::Map<const RVector>(res.reference.data(), n_t);
    const RVector ref_c = ref.array() - ref.mean();
    for (auto& md : modes) {
        const ParameterMaps pm = quantify_image(noisy, md.dict);
        ModeResult r;
        r.mode = md.name;
        r.description = md.desc;
        r.t2p_hat_s = pm.t2p_s;
        r.t2_hat_s = pm.t2_s;
        r.r2star_hat_hz = pm.r2star_hz;
        r.m0_err = (pm.m0.array() - 1.0).abs();
        const RVector t2p_c = r.t2p_hat_s.array() - r.t2p_hat_s.mean();
        r.t2p_change_s = t2p_c.dot(ref_c) / ref_c.squaredNorm();
        r.r2star_rel_err = ((r.r2star_hat_hz - res.r2star_true_hz).array().abs() / res.r2star_true_hz.array()).mean();
        r.t2_std_s = std::sqrt((r.t2_hat_s.array() - r.t2_hat_s.mean()).square().mean());
        r.t2p_std_s = std::sqrt(t2p_c.array().square().mean());
        r.m0_err_mean = r.m0_err.mean();
        log << "mode " << r.mode << ": dT2' = " << fmt(r.t2p_change_s * 1e3) << " ms, R2* rel err = "
            << fmt(r.r2star_rel_err) << ", std T2 = " << fmt(r.t2_std_s * 1e3) << " ms, m0 err = "
            << fmt(r.m0_err_mean) << "\n";
        res.modes.push_back(std::move(r));
    }
    return res;
}

// --- file-based stages ---

std::string stage_path(const RunConfig& cfg, const std::string& file) {
    return (fs::path(cfg.output_dir) / file).string();
}

void stage_simulate_signal(const RunConfig& cfg, const std::vector<double>& t1_s,
                           const std::vector<double>& t2_s, const std::vector<double>& f0_hz,
                           double t2p_s, std::ostream& log) {
    if (t1_s.empty() || t2_s.empty() || f0_hz.empty()) throw ConfigError("simulate-signal: empty sweep");
    ensure_dir(cfg);
    std::vector<std::array<double, 3>> params;
    for (double t1 : t1_s)
        for (double t2 : t2_s)
            for (double f0 : f0_hz) params.push_back({t1, t2, f0});
    CMatrix sig(static_cast<Eigen::Index>(params.size()), cfg.sequence.n_c);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto [t1, t2, f0] = params[i];
        if (t2p_s > 0.0) {
            VoxelParams v{t1, t2, t2p_s, f0, {1.0, 0.0}};
            sig.row(static_cast<Eigen::Index>(i)) =
                voxel_signal(cfg.sequence, v, cauchy_grid(t2p_s, cfg.dictionary.cauchy_k, cfg.dictionary.f_max_hz));
        } else {
            IsochromatParams p{t1, t2, f0, {1.0, 0.0}};
            sig.row(static_cast<Eigen::Index>(i)) = simulate_isochromat(cfg.sequence, p);
        }
    }
    Container c;
    c.put_matrix("signals", sig);
    std::vector<double> a, b, f;
    for (const auto& p : params) {
        a.push_back(p[0]);
        b.push_back(p[1]);
        f.push_back(p[2]);
    }
    c.put_vector("t1_s", a);
    c.put_vector("t2_s", b);
    c.put_vector("f0_hz", f);
    c.put_scalar("t2p_s", t2p_s);
    const std::string path = stage_path(cfg, "signals.osmm");
    c.write(path);
    write_sidecar(path, "simulate-signal", cfg, {});

    const double peak = sig.cwiseAbs().maxCoeff();
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < sig.rows(); ++i)
        for (Eigen::Index k = 0; k < sig.cols(); ++k)
            rows.push_back({fmt(a[static_cast<std::size_t>(i)]), fmt(b[static_cast<std::size_t>(i)]),
                            fmt(f[static_cast<std::size_t>(i)]), std::to_string(k), fmt(sig(i, k).real()),
                            fmt(sig(i, k).imag()), fmt(std::abs(sig(i, k))),
                            fmt(peak > 0.0 ? std::abs(sig(i, k)) / peak : 0.0)});
    write_csv(stage_path(cfg, "signals.csv"), {"t1_s", "t2_s", "f0_hz", "k", "re", "im", "abs", "abs_norm"}, rows);
    log << "simulate-signal: wrote " << sig.rows() << " signals of length " << sig.cols() << " to " << path << "\n";
}

void stage_build_dict(const RunConfig& cfg, std::ostream& log) {
    ensure_dir(cfg);
    const Dictionary d = make_dictionary(cfg);
    const std::string path = stage_path(cfg, "dictionary.osmm");
    dictionary_container(d).write(path);
    write_sidecar(path, "build-dict", cfg, {}, {{"n_atoms", d.size()}});
    log << "build-dict: " << d.size() << " atoms -> " << path << "\n";
}

void stage_phantom(const RunConfig& cfg, std::ostream& log) {
    ensure_dir(cfg);
    const GroundTruth g = make_phantom(cfg);
    Container c;
    c.put_scalar("ny", g.ny);
    c.put_scalar("nx", g.nx);
    c.put_stack("truth_images", g.frames);
    c.put_matrix("t2p_s", g.t2p_s);
    c.put_matrix("f0_hz", g.f0_hz);
    c.put_matrix("r2star_hz", g.r2star_hz);
    c.put_vector("m0", g.m0);
    c.put_vector("t1_s", g.t1_s);
    c.put_vector("t2_s", g.t2_s);
    c.put_mask("support", g.support);
    c.put_mask("roi", g.roi);
    c.put_vector("reference", g.reference);
    const std::string path = stage_path(cfg, "phantom.osmm");
    c.write(path);
    write_sidecar(path, "phantom", cfg, {}, {{"n_frames", g.n_frames()}});
    RVector mean_r2s = g.r2star_hz.rowwise().mean();
    write_pgm(stage_path(cfg, "truth_r2star.pgm"), mean_r2s, g.ny, g.nx, 0.0, 50.0);
    log << "phantom: " << g.n_frames() << " frames of " << g.ny << "x" << g.nx << " -> " << path << "\n";
}

void stage_acquire(const RunConfig& cfg, std::ostream& log) {
    const GroundTruth g = load_truth(cfg);
    const SensitivityMaps sens = make_sensitivities(cfg);
    const auto data = make_acquisition(cfg, g, sens);
    Container c;
    c.put_scalar("ny", g.ny);
    c.put_scalar("nx", g.nx);
    c.put_matrix("sensitivities", sens.maps);
    c.put_scalar("noise_sigma", data.front().noise_sigma);
    const auto n_pix = static_cast<std::uint64_t>(g.ny) * static_cast<std::uint64_t>(g.nx);
    std::vector<std::uint8_t> masks;
    Eigen::Index total = 0;
    for (const auto& d : data)
        for (std::size_t k = 0; k < d.pattern.frames.size(); ++k) {
            masks.insert(masks.end(), d.pattern.frames[k].mask.begin(), d.pattern.frames[k].mask.end());
            total += d.samples[k].rows();
        }
    c.put_u8("masks", {data.size(), static_cast<std::uint64_t>(cfg.sequence.n_c), n_pix}, masks.data());
    CMatrix samples(total, sens.n_coils());
    Eigen::Index row = 0;
    for (const auto& d : data)
        for (const auto& s : d.samples) {
            samples.middleRows(row, s.rows()) = s;
            row += s.rows();
        }
    c.put_matrix("samples", samples);
    const std::string path = stage_path(cfg, "kspace.osmm");
    c.write(path);
    write_sidecar(path, "acquire", cfg, {"phantom.osmm"}, {{"noise_sigma", data.front().noise_sigma}});
    log << "acquire: " << data.size() << " frames, sigma = " << fmt(data.front().noise_sigma) << " -> " << path
        << "\n";
}

void stage_recon(const RunConfig& cfg, const std::string& method, const ReconOverrides& over,
                 std::ostream& log) {
    check_method(method);
    const Acquisition acq = load_acquisition(cfg);
    std::optional<Dictionary> dict;
    if (method == "ossimm") dict = load_dictionary(cfg);
    const SeriesRecon r = reconstruct_series(cfg, method, acq.data, acq.sens, dict ? &*dict : nullptr, over, log);
    Container c;
    c.put_stack("images", r.images);
    std::size_t len = 0;
    for (const auto& t : r.cost_traces) len = std::max(len, t.size());
    std::vector<double> traces(r.cost_traces.size() * len, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < r.cost_traces.size(); ++j)
        std::copy(r.cost_traces[j].begin(), r.cost_traces[j].end(), traces.begin() + static_cast<std::ptrdiff_t>(j * len));
    c.put_f64("cost_traces", {r.cost_traces.size(), len}, traces.data());
    c.put_scalar("sigma_a", r.sigma_a);
    c.put_scalar(r.parameter_name, r.parameter);
    const std::string path = stage_path(cfg, "recon_" + method + ".osmm");
    c.write(path);
    std::vector<std::string> inputs = {"kspace.osmm"};
    if (method == "ossimm") inputs.push_back("dictionary.osmm");
    write_sidecar(path, "recon", cfg, inputs,
                  {{"method", method}, {"sigma_a", r.sigma_a}, {r.parameter_name, r.parameter}});
    log << "recon: " << method << " -> " << path << "\n";
}

void stage_quantify(const RunConfig& cfg, const std::string& method, std::ostream& log) {
    check_method(method);
    const auto images = load_recon(cfg, method);
    const Dictionary dict = load_dictionary(cfg);
    const MapSeries m = quantify_series(images, dict);
    Container c;
    c.put_matrix("m0_abs", m.m0_abs);
    c.put_matrix("r2star_hz", m.r2star_hz);
    c.put_matrix("t2p_s", m.t2p_s);
    c.put_matrix("f0_hz", m.f0_hz);
    const std::string path = stage_path(cfg, "maps_" + method + ".osmm");
    c.write(path);
    write_sidecar(path, "quantify", cfg, {"recon_" + method + ".osmm", "dictionary.osmm"}, {{"method", method}});
    log << "quantify: " << method << " -> " << path << "\n";
}

namespace {

const std::vector<std::string> kMetricsHeader = {"method", "rmse_hz", "rmse_masked_hz", "n_activated", "mean_tsnr",
                                                 "nrmse", "nrmse_combined", "dice", "mean_map_rmse_hz",
                                                 "mean_map_rmse_masked_hz", "r2s_roi_corr", "weighted_roi_corr"};

std::vector<std::string> metrics_row(const MethodMetrics& m) {
    return {m.method, fmt(m.rmse_hz), fmt(m.rmse_masked_hz), std::to_string(m.n_activated), fmt(m.mean_tsnr),
            fmt(m.nrmse_images), fmt(m.nrmse_combined), fmt(m.dice), fmt(m.mean_map_rmse_hz),
            fmt(m.mean_map_rmse_masked_hz), fmt(m.r2s_roi_corr), fmt(m.weighted_roi_corr)};
}

}  // namespace

void stage_analyze(const RunConfig& cfg, const std::string& method, std::ostream& log) {
    check_method(method);
    const GroundTruth g = load_truth(cfg);
    const auto images = load_recon(cfg, method);
    const MapSeries maps = load_maps(cfg, method);
    const MethodMetrics m = analyze_method(cfg, g, images, maps, method);
    write_csv(stage_path(cfg, "metrics_" + method + ".csv"), kMetricsHeader, {metrics_row(m)});

    const int t0 = analysis_start_frame(cfg);
    const int nt = g.n_frames() - t0;
    const RVector mean_r2s = maps.r2star_hz.middleCols(t0, nt).rowwise().mean();
    const std::vector<double> ref(g.reference.begin() + t0, g.reference.end());
    const ActivationResult act = detrended_activation(combined_series(images).middleCols(t0, nt), ref,
                                                      cfg.analysis.n_dct, cfg.analysis.corr_threshold, g.roi);
    Container c;
    c.put_vector("mean_r2star_hz", mean_r2s);
    c.put_vector("correlation", act.correlation);
    c.put_mask("activation", act.active);
    const std::string path = stage_path(cfg, "analysis_" + method + ".osmm");
    c.write(path);
    write_sidecar(path, "analyze", cfg, {"phantom.osmm", "recon_" + method + ".osmm", "maps_" + method + ".osmm"},
                  {{"method", method}});
    write_pgm(stage_path(cfg, "r2star_" + method + ".pgm"), mean_r2s, g.ny, g.nx, 0.0, 50.0);
    RVector act_map(static_cast<Eigen::Index>(act.active.size()));
    for (std::size_t i = 0; i < act.active.size(); ++i) act_map[static_cast<Eigen::Index>(i)] = act.active[i];
    write_pgm(stage_path(cfg, "activation_" + method + ".pgm"), act_map, g.ny, g.nx, 0.0, 1.0);
    log << "analyze: " << method << " NRMSE " << fmt(m.nrmse_combined) << ", R2* RMSE " << fmt(m.rmse_masked_hz)
        << " Hz (masked), " << m.n_activated << " activated, Dice " << fmt(m.dice) << "\n";
}

void stage_estimation_modes(const RunConfig& cfg, const EstimationModesConfig& em, std::ostream& log) {
    ensure_dir(cfg);
    const EstimationModesResult r = run_estimation_modes(cfg, em, log);
    std::vector<std::vector<std::string>> rows;
    Container c;
    c.put_vector("t2p_true_s", r.t2p_true_s);
    c.put_vector("r2star_true_hz", r.r2star_true_hz);
    for (const auto& m : r.modes) {
        const RVector t2s_hat = m.r2star_hat_hz.cwiseInverse();
        const RVector t2s_true = r.r2star_true_hz.cwiseInverse();
        rows.push_back({m.mode, m.description, fmt(m.t2p_hat_s.mean() * 1e3), fmt(m.t2p_change_s * 1e3),
                        fmt(((m.t2p_hat_s - r.t2p_true_s).array().abs()).mean() * 1e3),
                        fmt(t2s_hat.mean() * 1e3), fmt(((t2s_hat - t2s_true).array().abs()).mean() * 1e3),
                        fmt(m.r2star_rel_err), fmt(m.t2_hat_s.mean() * 1e3), fmt(m.t2_std_s * 1e3),
                        fmt(m.m0_err_mean)});
        c.put_vector("t2p_hat_s_" + m.mode, m.t2p_hat_s);
        c.put_vector("t2_hat_s_" + m.mode, m.t2_hat_s);
        c.put_vector("r2star_hat_hz_" + m.mode, m.r2star_hat_hz);
        c.put_vector("m0_err_" + m.mode, m.m0_err);
    }
    write_csv(stage_path(cfg, "estimation_modes.csv"),
              {"mode", "description", "t2p_hat_mean_ms", "t2p_change_ms", "t2p_abs_err_ms", "t2s_hat_mean_ms",
               "t2s_abs_err_ms", "r2s_rel_err", "t2_hat_mean_ms", "t2_hat_std_ms", "m0_err"},
              rows);
    const std::string path = stage_path(cfg, "estimation_modes.osmm");
    c.write(path);
    write_sidecar(path, "estimation-modes", cfg, {}, {{"noise_sigma", r.noise_sigma}});
    log << "estimation-modes: wrote " << stage_path(cfg, "estimation_modes.csv") << "\n";
}

void stage_report(const RunConfig& cfg, std::ostream& log) {
    const GroundTruth g = load_truth(cfg);
    std::vector<std::vector<std::string>> rows;
    for (const auto& method : cfg.recon.methods) {
        const auto images = load_recon(cfg, method);
        const MapSeries maps = load_maps(cfg, method);
        rows.push_back(metrics_row(analyze_method(cfg, g, images, maps, method)));
    }
    const std::string path = stage_path(cfg, "report.csv");
    write_csv(path, kMetricsHeader, rows);
    log << "report: " << rows.size() << " methods -> " << path << "\n";
}

}  // namespace ossimm
