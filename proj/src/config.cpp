#include "ossimm/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace ossimm {

using nlohmann::json;

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    const json* sub(const std::string& key) {
        known_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items())
            if (!known_.count(item.key())) throw ConfigError("unknown key " + path_ + "." + item.key());
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

Shape parse_shape(const json& j, const std::string& path, bool roi) {
    Section s(j, path);
    Shape sh;
    std::string kind = "disk";
    double r = -1.0;
    if (!roi) s.get("shape", kind);
    s.get("cy", sh.cy);
    s.get("cx", sh.cx);
    if (roi) {
        s.get("r", r);
        sh.r_outer = r;
    } else {
        s.get("r_inner", sh.r_inner);
        s.get("r_outer", sh.r_outer);
    }
    if (kind == "disk") sh.kind = Shape::Kind::Disk;
    else if (kind == "annulus") sh.kind = Shape::Kind::Annulus;
    else throw ConfigError(path + ".shape: expected disk or annulus");
    if (!(sh.r_outer > 0.0)) throw ConfigError(path + ": radius must be > 0");
    s.finish();
    return sh;
}

Region parse_region(const json& j, const std::string& path) {
    Section s(j, path);
    Region r;
    // Shape keys and physics keys share one object.
    json shape_part = json::object();
    for (const char* k : {"shape", "cy", "cx", "r_inner", "r_outer"}) {
        s.sub(k);
        if (j.contains(k)) shape_part[k] = j.at(k);
    }
    r.shape = parse_shape(shape_part, path, false);
    double r2star = 20.0;
    double t2p = -1.0;
    double m0_abs = 1.0;
    double m0_phase = 0.0;
    double m0_re = 0.0;
    double m0_im = 0.0;
    const bool cartesian_m0 = j.contains("m0_re") || j.contains("m0_im");
    if (cartesian_m0 && (j.contains("m0_abs") || j.contains("m0_phase")))
        throw ConfigError(path + ": give m0 either as m0_abs/m0_phase or as m0_re/m0_im");
    if (j.contains("t2p_s") && j.contains("r2star_hz"))
        throw ConfigError(path + ": give either r2star_hz or t2p_s");
    s.get("t1_s", r.params.t1_s);
    s.get("t2_s", r.params.t2_s);
    s.get("r2star_hz", r2star);
    s.get("f0_hz", r.params.f0_hz);
    s.get("m0_abs", m0_abs);
    s.get("m0_phase", m0_phase);
    s.get("m0_re", m0_re);
    s.get("m0_im", m0_im);
    s.get("t2p_s", t2p);
    s.finish();
    if (j.contains("t2p_s")) {
        if (!(t2p > 0.0)) throw ConfigError(path + ".t2p_s: must be positive");
        r.params.t2p_s = t2p;
    } else {
        try {
            r.params.t2p_s = t2prime_from_r2star(r2star, r.params.t2_s);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }
    r.params.m0 = cartesian_m0 ? cplx(m0_re, m0_im) : std::polar(m0_abs, m0_phase);
    return r;
}

json shape_json(const Shape& s) {
    return {{"shape", s.kind == Shape::Kind::Disk ? "disk" : "annulus"},
            {"cy", s.cy}, {"cx", s.cx}, {"r_inner", s.r_inner}, {"r_outer", s.r_outer}};
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

DictionaryGrid DictionaryConfig::grid() const {
    DictionaryGrid g;
    if (t2_step_s == 0.0) g.t2_values_s = {t2_lo_s};
    else g.t2_values_s = uniform_grid(t2_lo_s, t2_hi_s, t2_step_s, true);
    g.r2star_values_hz = uniform_grid(r2star_lo_hz, r2star_hi_hz, r2star_step_hz, true);
    g.f0_values_hz = uniform_grid(f0_lo_hz, f0_hi_hz, f0_step_hz, false);
    g.fixed_t1_s = t1_s;
    g.reference_t2_s = reference_t2_s;
    return g;
}

void RunConfig::validate() const {
    try {
        sequence.validate();
        PhantomSpec p = phantom;
        p.task.frame_period_s = sequence.n_c * sequence.tr_s;
        p.validate();
        dictionary.grid().validate();
        analysis.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(sampling.acceleration >= 1.0)) throw ConfigError("sampling.acceleration must be >= 1");
    if (sampling.n_coils < 1) throw ConfigError("sampling.n_coils must be >= 1");
    if (dictionary.cauchy_k < 1 || !(dictionary.f_max_hz > 0.0))
        throw ConfigError("dictionary: cauchy_k and f_max_hz must be positive");
    for (const auto& m : recon.methods)
        if (m != "ossimm" && m != "lr" && m != "cgsense") throw ConfigError("recon.methods: unknown method " + m);
    if (recon.init != "zero" && recon.init != "adjoint" && recon.init != "datashared")
        throw ConfigError("recon.init must be zero, adjoint or datashared");
    if (recon.n_outer < 1 || recon.n_cg < 1 || recon.n_pogm < 1 || recon.cg_iters < 1 ||
        recon.share_window < 1 || recon.power_iters < 1)
        throw ConfigError("recon: iteration counts must be >= 1");
    if (!(recon.kappa_target > 1.0)) throw ConfigError("recon.kappa_target must be > 1");
    if (recon.rank_target < 1 || recon.rank_target > sequence.n_c)
        throw ConfigError("recon.rank_target must lie in [1, n_c]");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

json RunConfig::to_json() const {
    json regions = json::array();
    for (const auto& r : phantom.regions) {
        json o = shape_json(r.shape);
        o["t1_s"] = r.params.t1_s;
        o["t2_s"] = r.params.t2_s;
        o["t2p_s"] = r.params.t2p_s;
        o["f0_hz"] = r.params.f0_hz;
        o["m0_re"] = r.params.m0.real();
        o["m0_im"] = r.params.m0.imag();
        regions.push_back(o);
    }
    json j;
    j["sequence"] = {{"tr_s", sequence.tr_s}, {"te_s", sequence.te_s},
                     {"flip_deg", sequence.flip_rad * 180.0 / kPi}, {"n_c", sequence.n_c},
                     {"n_warmup_tr", sequence.n_warmup_tr}};
    j["phantom"] = {{"ny", phantom.ny},
                    {"nx", phantom.nx},
                    {"regions", regions},
                    {"activation_roi", {{"cy", phantom.activation_roi.cy},
                                        {"cx", phantom.activation_roi.cx},
                                        {"r", phantom.activation_roi.r_outer}}},
                    {"delta_t2p_s", phantom.delta_t2p_s},
                    {"task", {{"rest_s", phantom.task.rest_s},
                              {"block_s", phantom.task.block_s},
                              {"n_cycles", phantom.task.n_cycles}}},
                    {"drift_hz_per_min", phantom.drift_hz_per_min},
                    {"resp_amp_hz", phantom.resp_amp_hz},
                    {"resp_period_s", phantom.resp_period_s},
                    {"tsnr_db", phantom.tsnr_db}};
    j["sampling"] = {{"acceleration", sampling.acceleration},
                     {"n_coils", sampling.n_coils},
                     {"density_power", sampling.density_power}};
    const auto& d = dictionary;
    j["dictionary"] = {{"t2_s", {{"lo", d.t2_lo_s}, {"hi", d.t2_hi_s}, {"step", d.t2_step_s}}},
                       {"r2star_hz", {{"lo", d.r2star_lo_hz}, {"hi", d.r2star_hi_hz}, {"step", d.r2star_step_hz}}},
                       {"f0_hz", {{"lo", d.f0_lo_hz}, {"hi", d.f0_hi_hz}, {"step", d.f0_step_hz}}},
                       {"t1_s", d.t1_s},
                       {"reference_t2_s", d.reference_t2_s},
                       {"cauchy_k", d.cauchy_k},
                       {"f_max_hz", d.f_max_hz}};
    const auto& r = recon;
    j["recon"] = {{"methods", r.methods}, {"beta", r.beta}, {"kappa_target", r.kappa_target},
                  {"n_outer", r.n_outer}, {"n_cg", r.n_cg}, {"alpha", r.alpha},
                  {"rank_target", r.rank_target}, {"n_pogm", r.n_pogm}, {"lambda", r.lambda},
                  {"cg_iters", r.cg_iters}, {"init", r.init}, {"share_window", r.share_window},
                  {"power_iters", r.power_iters}};
    const auto& a = analysis;
    j["analysis"] = {{"corr_threshold", a.corr_threshold}, {"n_dct", a.n_dct},
                     {"te_eff_s", a.te_eff_s}, {"signal_mask_frac", a.signal_mask_frac},
                     {"r2s_mask_max_hz", a.r2s_mask_max_hz},
                     {"r2s_range_hz", {a.r2s_range_lo_hz, a.r2s_range_hi_hz}},
                     {"discard_frames", a.discard_frames}};
    j["seeds"] = {{"phantom", seeds.phantom}, {"sampling", seeds.sampling}, {"noise", seeds.noise}};
    j["output_dir"] = output_dir;
    return j;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_json().dump()); }

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    Section root(j, "config");
    if (const json* s = root.sub("sequence")) {
        Section q(*s, "sequence");
        double flip_deg = c.sequence.flip_rad * 180.0 / kPi;
        q.get("tr_s", c.sequence.tr_s);
        q.get("te_s", c.sequence.te_s);
        q.get("flip_deg", flip_deg);
        q.get("n_c", c.sequence.n_c);
        q.get("n_warmup_tr", c.sequence.n_warmup_tr);
        q.finish();
        c.sequence.flip_rad = flip_deg * kPi / 180.0;
    }
    if (const json* s = root.sub("phantom")) {
        Section p(*s, "phantom");
        p.get("ny", c.phantom.ny);
        p.get("nx", c.phantom.nx);
        if (const json* regions = p.sub("regions")) {
            if (!regions->is_array() || regions->empty())
                throw ConfigError("phantom.regions: expected a non-empty array");
            c.phantom.regions.clear();
            for (std::size_t i = 0; i < regions->size(); ++i)
                c.phantom.regions.push_back(parse_region(regions->at(i), "phantom.regions[" + std::to_string(i) + "]"));
        }
        if (const json* roi = p.sub("activation_roi"))
            c.phantom.activation_roi = parse_shape(*roi, "phantom.activation_roi", true);
        p.get("delta_t2p_s", c.phantom.delta_t2p_s);
        if (const json* t = p.sub("task")) {
            Section ts(*t, "phantom.task");
            ts.get("rest_s", c.phantom.task.rest_s);
            ts.get("block_s", c.phantom.task.block_s);
            ts.get("n_cycles", c.phantom.task.n_cycles);
            ts.finish();
        }
        p.get("drift_hz_per_min", c.phantom.drift_hz_per_min);
        p.get("resp_amp_hz", c.phantom.resp_amp_hz);
        p.get("resp_period_s", c.phantom.resp_period_s);
        p.get("tsnr_db", c.phantom.tsnr_db);
        p.finish();
    }
    if (const json* s = root.sub("sampling")) {
        Section q(*s, "sampling");
        q.get("acceleration", c.sampling.acceleration);
        q.get("n_coils", c.sampling.n_coils);
        q.get("density_power", c.sampling.density_power);
        q.finish();
    }
    if (const json* s = root.sub("dictionary")) {
        Section q(*s, "dictionary");
        auto axis = [&](const char* key, double& lo, double& hi, double& step) {
            if (const json* a = q.sub(key)) {
                Section as(*a, q.path(key));
                as.get("lo", lo);
                as.get("hi", hi);
                as.get("step", step);
                as.finish();
            }
        };
        auto& d = c.dictionary;
        axis("t2_s", d.t2_lo_s, d.t2_hi_s, d.t2_step_s);
        axis("r2star_hz", d.r2star_lo_hz, d.r2star_hi_hz, d.r2star_step_hz);
        axis("f0_hz", d.f0_lo_hz, d.f0_hi_hz, d.f0_step_hz);
        q.get("t1_s", d.t1_s);
        q.get("reference_t2_s", d.reference_t2_s);
        q.get("cauchy_k", d.cauchy_k);
        q.get("f_max_hz", d.f_max_hz);
        q.finish();
        if (d.t2_step_s < 0.0 || !(d.r2star_step_hz > 0.0) || !(d.f0_step_hz > 0.0))
            throw ConfigError("dictionary: grid steps must be positive");
    }
    if (const json* s = root.sub("recon")) {
        Section q(*s, "recon");
        auto& r = c.recon;
        q.get("methods", r.methods);
        q.get("beta", r.beta);
        q.get("kappa_target", r.kappa_target);
        q.get("n_outer", r.n_outer);
        q.get("n_cg", r.n_cg);
        q.get("alpha", r.alpha);
        q.get("rank_target", r.rank_target);
        q.get("n_pogm", r.n_pogm);
        q.get("lambda", r.lambda);
        q.get("cg_iters", r.cg_iters);
        q.get("init", r.init);
        q.get("share_window", r.share_window);
        q.get("power_iters", r.power_iters);
        q.finish();
    }
    if (const json* s = root.sub("analysis")) {
        Section q(*s, "analysis");
        auto& a = c.analysis;
        std::vector<double> range = {a.r2s_range_lo_hz, a.r2s_range_hi_hz};
        q.get("corr_threshold", a.corr_threshold);
        q.get("n_dct", a.n_dct);
        q.get("te_eff_s", a.te_eff_s);
        q.get("signal_mask_frac", a.signal_mask_frac);
        q.get("r2s_mask_max_hz", a.r2s_mask_max_hz);
        q.get("r2s_range_hz", range);
        q.get("discard_frames", a.discard_frames);
        q.finish();
        if (range.size() != 2) throw ConfigError("analysis.r2s_range_hz: expected [lo, hi]");
        a.r2s_range_lo_hz = range[0];
        a.r2s_range_hi_hz = range[1];
    }
    if (const json* s = root.sub("seeds")) {
        Section q(*s, "seeds");
        q.get("phantom", c.seeds.phantom);
        q.get("sampling", c.seeds.sampling);
        q.get("noise", c.seeds.noise);
        q.finish();
    }
    root.get("output_dir", c.output_dir);
    root.finish();
    c.phantom.task.frame_period_s = c.sequence.n_c * c.sequence.tr_s;
    c.phantom.seed = c.seeds.phantom;
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace ossimm
