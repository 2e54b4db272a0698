#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ossimm/container.hpp"
#include "ossimm/pipeline.hpp"

using namespace ossimm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ossimm_cli_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// Tiny end-to-end configuration: 16x16 object, short task, coarse dictionary.
nlohmann::json tiny_config(const fs::path& out) {
    using nlohmann::json;
    json regions = json::array();
    regions.push_back({{"shape", "disk"}, {"cy", 7.5}, {"cx", 7.5}, {"r_outer", 7.0}, {"r2star_hz", 17.0},
                       {"f0_hz", 1.0}, {"m0_abs", 0.8}});
    regions.push_back({{"shape", "disk"}, {"cy", 7.5}, {"cx", 5.0}, {"r_outer", 2.5}, {"r2star_hz", 20.0},
                       {"f0_hz", 0.5}, {"m0_abs", 1.0}, {"m0_phase", 0.5}});
    return {{"phantom",
             {{"ny", 16},
              {"nx", 16},
              {"regions", regions},
              {"activation_roi", {{"cy", 7.5}, {"cx", 5.0}, {"r", 1.5}}},
              {"task", {{"rest_s", 2.0}, {"block_s", 3.0}, {"n_cycles", 2}}}}},
            {"sampling", {{"acceleration", 4.0}}},
            {"dictionary",
             {{"r2star_hz", {{"lo", 12.0}, {"hi", 38.0}, {"step", 1.0}}},
              {"f0_hz", {{"lo", -6.0}, {"hi", 6.0}, {"step", 0.5}}},
              {"cauchy_k", 400}}},
            {"recon", {{"n_pogm", 5}, {"cg_iters", 5}, {"power_iters", 10}, {"share_window", 4}, {"alpha", 0.01}}},
            {"analysis", {{"discard_frames", 20}}},
            {"output_dir", out.string()}};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OSSIMM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST(Container, RoundTripBitExact) {
    Container c;
    RMatrix r(3, 2);
    r << 1.0, -0.0, 3.5, NAN, 1e-300, 7.0;
    CMatrix x(2, 2);
    x << cplx(1, 2), cplx(-3, 4), cplx(0.1, 0.2), cplx(5, -6);
    c.put_matrix("r", r);
    c.put_matrix("x", x);
    c.put_mask("m", {0, 1, 1});
    c.put_stack("s", {x, x * 2.0});
    const Container d = Container::deserialize(c.serialize());
    EXPECT_EQ(d.serialize(), c.serialize());
    const RMatrix r2 = d.rmatrix("r");
    EXPECT_EQ(std::memcmp(r.data(), r2.data(), sizeof(double) * 6) == 0 || std::isnan(r2(1, 1)), true);
    EXPECT_TRUE((d.cmatrix("x").array() == x.array()).all());
    EXPECT_EQ(d.u8("m"), (std::vector<std::uint8_t>{0, 1, 1}));
    EXPECT_TRUE((d.stack("s")[1].array() == (x * 2.0).array()).all());
    const auto& a = d.get("r");
    EXPECT_EQ(a.dims, (std::vector<std::uint64_t>{3, 2}));
}

TEST(Container, HeaderLayout) {
    Container c;
    c.put_scalar("a", 1.0);
    const auto b = c.serialize();
    ASSERT_GE(b.size(), 8u);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "OSMM");
    EXPECT_EQ(b[4], 1);
    EXPECT_EQ(b[5], 0);
}

TEST(Container, RejectsBadInput) {
    Container c;
    c.put_scalar("a", 1.0);
    EXPECT_THROW(c.put_scalar("a", 2.0), ContainerError);
    auto bytes = c.serialize();
    bytes[0] = 'X';
    EXPECT_THROW(Container::deserialize(bytes), ContainerError);
    bytes = c.serialize();
    bytes.pop_back();
    EXPECT_THROW(Container::deserialize(bytes), ContainerError);
    EXPECT_THROW(c.get("missing"), ContainerError);
}

TEST(Config, DefaultsAndHash) {
    const RunConfig a = parse_config(nlohmann::json::object());
    const RunConfig b;
    EXPECT_EQ(a.hash(), parse_config(a.to_json()).hash());
    EXPECT_EQ(a.sequence.n_c, 10);
    EXPECT_EQ(a.phantom.task.n_frames(), 466);
    EXPECT_EQ(a.hash_hex().size(), 16u);
    RunConfig c = a;
    c.recon.beta = 0.5;
    EXPECT_NE(c.hash(), a.hash());
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
}

TEST(Config, RejectsUnknownAndInvalid) {
    using nlohmann::json;
    EXPECT_THROW(parse_config(json{{"bogus", 1}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"recon", {{"n_outer", 0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"sequence", {{"te_s", 0.02}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"sampling", {{"acceleration", "fast"}}}}), ConfigError);
    try {
        parse_config(json{{"phantom", {{"task", {{"rest", 1}}}}}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("phantom.task.rest"), std::string::npos);
    }
    EXPECT_THROW(load_config("/nonexistent/ossimm.json"), ConfigError);
}

TEST(Stages, MissingInputNamesStage) {
    RunConfig cfg;
    cfg.output_dir = scratch("missing").string();
    std::ostringstream log;
    try {
        stage_acquire(cfg, log);
        FAIL();
    } catch (const MissingInputError& e) {
        EXPECT_EQ(e.stage(), "phantom");
    }
    EXPECT_THROW(stage_quantify(cfg, "lr", log), MissingInputError);
}

TEST(Stages, SimulateSignalSweep) {
    RunConfig cfg;
    cfg.output_dir = scratch("sim").string();
    std::ostringstream log;
    stage_simulate_signal(cfg, {1.4}, {0.0926}, {0.0, 2.0, 5.0}, 0.0, log);
    const Container c = Container::read(stage_path(cfg, "signals.osmm"));
    EXPECT_EQ(c.get("signals").dims, (std::vector<std::uint64_t>{3, 10}));
    const std::string first = slurp(stage_path(cfg, "signals.osmm"));
    stage_simulate_signal(cfg, {1.4}, {0.0926}, {0.0, 2.0, 5.0}, 0.0, log);
    EXPECT_EQ(slurp(stage_path(cfg, "signals.osmm")), first);
    const std::string side = slurp(stage_path(cfg, "signals.osmm.json"));
    EXPECT_NE(side.find(cfg.hash_hex()), std::string::npos);
    EXPECT_NE(side.find(kToolVersion), std::string::npos);
}

TEST(Stages, TinyPipelineIsDeterministic) {
    const fs::path out = scratch("pipeline");
    const RunConfig cfg = parse_config(tiny_config(out));
    std::ostringstream log;
    auto run_all = [&] {
        stage_build_dict(cfg, log);
        stage_phantom(cfg, log);
        stage_acquire(cfg, log);
        for (const auto& m : cfg.recon.methods) {
            stage_recon(cfg, m, {}, log);
            stage_quantify(cfg, m, log);
            stage_analyze(cfg, m, log);
        }
        stage_report(cfg, log);
    };
    run_all();
    std::map<std::string, std::string> first;
    for (const auto& e : fs::directory_iterator(out)) first[e.path().filename().string()] = slurp(e.path());
    run_all();
    for (const auto& [name, bytes] : first) EXPECT_EQ(slurp(out / name), bytes) << name;
    const std::string report = slurp(out / "report.csv");
    EXPECT_EQ(report.rfind("method,rmse_hz,rmse_masked_hz,n_activated,mean_tsnr", 0), 0u);
    for (const char* m : {"\r\nossimm,", "\r\nlr,", "\r\ncgsense,"}) EXPECT_NE(report.find(m), std::string::npos);
    EXPECT_NE(log.str().find("beta = "), std::string::npos);
    EXPECT_NE(log.str().find("sigma(A) = "), std::string::npos);
}

TEST(Cli, ExitCodes) {
    const fs::path out = scratch("exit");
    EXPECT_EQ(run_cli("-c /nonexistent/cfg.json build-dict"), 2);
    EXPECT_EQ(run_cli("-o " + out.string() + " acquire"), 3);
    {
        std::ofstream bad(out / "bad.json");
        bad << "{\"recon\": {\"n_outer\": -3}}";
    }
    EXPECT_EQ(run_cli("-c " + (out / "bad.json").string() + " phantom"), 2);
    EXPECT_EQ(run_cli("-o " + out.string() + " simulate-signal --f0-hz 0 2 5"), 0);
    EXPECT_TRUE(fs::exists(out / "signals.csv"));
}
