#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ossimm/analysis.hpp"
#include "ossimm/manifold.hpp"
#include "ossimm/phantom.hpp"
#include "ossimm/physics.hpp"

namespace ossimm {

/// Invalid or unreadable configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SamplingConfig {
    double acceleration = 12.0;
    int n_coils = 4;
    double density_power = 2.0;
};

/// Grid axes; step 0 on the T2 axis means the single value lo.
struct DictionaryConfig {
    double t2_lo_s = 0.0926;
    double t2_hi_s = 0.0926;
    double t2_step_s = 0.0;
    double r2star_lo_hz = 12.0;
    double r2star_hi_hz = 38.0;
    double r2star_step_hz = 0.2;
    double f0_lo_hz = -6.0;
    double f0_hi_hz = 6.0;
    double f0_step_hz = 0.22;
    double t1_s = 1.4;
    double reference_t2_s = 0.0926;
    int cauchy_k = 4000;
    double f_max_hz = 200.0;

    DictionaryGrid grid() const;
};

struct ReconRunConfig {
    std::vector<std::string> methods = {"ossimm", "lr", "cgsense"};
    double beta = -1.0;    // < 0: auto from kappa_target
    double kappa_target = 15.0;
    int n_outer = 4;
    int n_cg = 2;
    double alpha = -1.0;   // < 0: auto from rank_target (on the first set)
    int rank_target = 4;
    int n_pogm = 15;
    double lambda = -1.0;  // < 0: 1e-3 sigma(A)^2
    int cg_iters = 19;
    std::string init = "datashared";  // zero | adjoint | datashared
    int share_window = 10;
    int power_iters = 30;
};

struct Seeds {
    std::uint64_t phantom = 1;
    std::uint64_t sampling = 2;
    std::uint64_t noise = 3;
};

struct RunConfig {
    SequenceParams sequence;
    PhantomSpec phantom = default_phantom_spec();
    SamplingConfig sampling;
    DictionaryConfig dictionary;
    ReconRunConfig recon;
    AnalysisConfig analysis;
    Seeds seeds;
    std::string output_dir = "out";

    void validate() const;
    /// Canonical JSON with every field, defaults included.
    nlohmann::json to_json() const;
    /// FNV-1a 64 of the canonical JSON text.
    std::uint64_t hash() const;
    std::string hash_hex() const;
};

/// Parses a config document. Missing keys take defaults; unknown keys and
/// invalid values raise ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace ossimm
