#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ossimm/container.hpp"
#include "ossimm/pipeline.hpp"

using namespace ossimm;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kNumerical = 4 };

RunConfig resolve_config(const std::string& path, const std::string& output_dir) {
    RunConfig cfg;
    if (!path.empty()) {
        try {
            cfg = load_config(path);
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            if (msg.find(path) != std::string::npos) throw;
            throw ConfigError(path + ": " + msg);
        }
    }
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OSSI manifold-regularized reconstruction and R2* quantification pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    std::string output_dir;
    app.add_option("-c,--config", config_path, "JSON run configuration (defaults when omitted)");
    app.add_option("-o,--output-dir", output_dir, "Override output_dir from the config");

    auto* sim = app.add_subcommand("simulate-signal", "Fast-time signal sweep over (T1, T2, f0)");
    std::vector<double> t1_ms{1400.0}, t2_ms{92.6}, f0_hz{0.0};
    double t2p_ms = 0.0;
    sim->add_option("--t1-ms", t1_ms, "T1 values [ms]");
    sim->add_option("--t2-ms", t2_ms, "T2 values [ms]");
    sim->add_option("--f0-hz", f0_hz, "Off-resonance values [Hz]");
    sim->add_option("--t2p-ms", t2p_ms, "T2' [ms]; 0 simulates single isochromats");

    app.add_subcommand("build-dict", "Build the quantification dictionary");
    app.add_subcommand("phantom", "Generate the dynamic phantom and its ground truth");
    app.add_subcommand("acquire", "Simulate undersampled multi-coil k-space");

    auto* rec = app.add_subcommand("recon", "Reconstruct every slow-time frame");
    std::string method = "ossimm";
    ReconOverrides over;
    double beta = -1.0, alpha = -1.0, lambda = -1.0;
    int outer = 0, cg = 0;
    std::string init;
    rec->add_option("--method", method, "ossimm | lr | cgsense")->check(CLI::IsMember({"ossimm", "lr", "cgsense"}));
    auto* o_beta = rec->add_option("--beta", beta, "OSSIMM regularization weight");
    auto* o_alpha = rec->add_option("--alpha", alpha, "Nuclear-norm weight");
    auto* o_lambda = rec->add_option("--lambda", lambda, "cgSENSE Tikhonov weight");
    rec->add_flag("--auto", over.force_auto, "Pick the method parameter automatically");
    auto* o_outer = rec->add_option("--outer", outer, "OSSIMM outer iterations");
    auto* o_cg = rec->add_option("--cg", cg, "OSSIMM CG steps per outer iteration");
    auto* o_init = rec->add_option("--init", init, "zero | adjoint | datashared")
                       ->check(CLI::IsMember({"zero", "adjoint", "datashared"}));

    auto* quant = app.add_subcommand("quantify", "Per-frame dictionary matching");
    quant->add_option("--method", method, "Reconstruction to quantify")->check(CLI::IsMember({"ossimm", "lr", "cgsense"}));
    auto* ana = app.add_subcommand("analyze", "Accuracy and activation metrics for one method");
    ana->add_option("--method", method, "Method to analyze")->check(CLI::IsMember({"ossimm", "lr", "cgsense"}));
    app.add_subcommand("estimation-modes", "Single-voxel study of four manifold choices");
    app.add_subcommand("report", "Comparison table over the configured methods");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    try {
        const RunConfig cfg = resolve_config(config_path, output_dir);
        auto& log = std::cerr;
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "simulate-signal") {
            auto to_s = [](std::vector<double> v) {
                for (auto& x : v) x *= 1e-3;
                return v;
            };
            stage_simulate_signal(cfg, to_s(t1_ms), to_s(t2_ms), f0_hz, t2p_ms * 1e-3, log);
        } else if (cmd == "build-dict") {
            stage_build_dict(cfg, log);
        } else if (cmd == "phantom") {
            stage_phantom(cfg, log);
        } else if (cmd == "acquire") {
            stage_acquire(cfg, log);
        } else if (cmd == "recon") {
            if (o_beta->count()) over.beta = beta;
            if (o_alpha->count()) over.alpha = alpha;
            if (o_lambda->count()) over.lambda = lambda;
            if (o_outer->count()) over.n_outer = outer;
            if (o_cg->count()) over.n_cg = cg;
            if (o_init->count()) over.init = init;
            stage_recon(cfg, method, over, log);
        } else if (cmd == "quantify") {
            stage_quantify(cfg, method, log);
        } else if (cmd == "analyze") {
            stage_analyze(cfg, method, log);
        } else if (cmd == "estimation-modes") {
            stage_estimation_modes(cfg, EstimationModesConfig{}, log);
        } else if (cmd == "report") {
            stage_report(cfg, log);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const MissingInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissing;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
