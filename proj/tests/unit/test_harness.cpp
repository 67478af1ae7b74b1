#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dilute_rls/cli.hpp"
#include "dilute_rls/experiment.hpp"
#include "oracles.hpp"

using namespace dilute_rls;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test, removed afterwards.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / ("dilute_rls_" + std::string(info->test_suite_name()) + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

    fs::path write(const std::string& name, const std::string& text) const {
        const fs::path p = path_ / name;
        std::ofstream(p) << text;
        return p;
    }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int code;
    std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

ExperimentConfig experiment(const std::string& text) { return parse_experiment(Config::parse(text)); }

}  // namespace

TEST(Config, ParsesCommentsAndWhitespace) {
    const auto cfg = Config::parse("# header\n scenario = arx  # trailing\n\nhorizons=10, 100\n");
    EXPECT_EQ(cfg.get("scenario"), "arx");
    EXPECT_EQ(cfg.get("horizons"), "10, 100");
    EXPECT_FALSE(cfg.has("header"));
    EXPECT_EQ(cfg.canonical(), "horizons=10, 100\nscenario=arx\n");
}

TEST(Config, RejectsMalformedAndDuplicateEntries) {
    try {
        Config::parse("n = 2\njust words\nn = 3\n");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.keys(), (std::vector<std::string>{"line 2", "n"}));
    }
}

TEST(ExperimentConfig, DefaultsAndTypedFields) {
    const auto ec = experiment("scenario = block_excitation\nn = 3\nhorizons = 10, 20\nseeds = 4, 5\nschedule.cap = 7\n");
    EXPECT_EQ(ec.scenario, "block_excitation");
    EXPECT_EQ(ec.n, 3u);
    EXPECT_EQ(ec.horizons, (std::vector<std::size_t>{10, 20}));
    EXPECT_EQ(ec.seeds, (std::vector<std::uint64_t>{4, 5}));
    EXPECT_EQ(ec.schedule().evaluate(1000000), 7u);
    EXPECT_EQ(ec.max_horizon(), 20u);
    EXPECT_EQ(ec.beta, 1.0);
}

TEST(ExperimentConfig, ReportsEveryOffendingKey) {
    try {
        experiment("n = 0\nbeta = -1\nbogus = 1\nschedule.kind = weird\nhorizons = 10, 5\nnoise.scale = abc\n");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.keys(), (std::vector<std::string>{"beta", "bogus", "horizons", "n", "noise.scale", "schedule.kind"}));
    }
    EXPECT_THROW(experiment("theta.kind = finite\nm = 2\ntheta.rows = 1, 2; 3\n"), ValidationError);
    EXPECT_THROW(experiment("graph.kind = metropolis\nn = 3\ngraph.edges = 0-3\n"), ValidationError);
    EXPECT_NO_THROW(experiment("theta.kind = finite\nm = 2\ntheta.rows = 1, 2; 3, 4\n"));
}

TEST(ExperimentConfig, HashIgnoresSeedsAndOutputOnly) {
    const auto base = experiment("n = 3\nbeta = 2\n");
    EXPECT_EQ(base.hash(), experiment("beta = 2\nn = 3\nseeds = 9\noutput.dir = elsewhere\n").hash());
    EXPECT_NE(base.hash(), experiment("n = 3\nbeta = 3\n").hash());
    EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
}

TEST(ExperimentConfig, CertificateOverrides) {
    EXPECT_EQ(experiment("n = 4\n").certified(), (std::pair<double, std::size_t>{0.4, 4}));
    EXPECT_EQ(experiment("n = 4\ngraph.delta = 0.1\ngraph.L = 6\n").certified(), (std::pair<double, std::size_t>{0.1, 6}));
}

TEST(Scenarios, DeterministicPerSeed) {
    for (const std::string& name : known_scenarios()) {
        const auto ec = experiment("scenario = " + name + "\nn = 3\nhorizons = 30\n");
        const auto a = build_scenario(ec, 7, 30), b = build_scenario(ec, 7, 30), c = build_scenario(ec, 8, 30);
        EXPECT_TRUE(a.trajectory == b.trajectory) << name;
        EXPECT_FALSE(a.trajectory == c.trajectory) << name;
        EXPECT_EQ(a.trajectory.layout(), scenario_layout(ec));
    }
}

TEST(Scenarios, BlockExcitationSupportsOwnBlockOnly) {
    const auto ec = experiment("scenario = block_excitation\nn = 3\nblock.size = 2\nhorizons = 20\n");
    const auto sc = build_scenario(ec, 3, 20);
    EXPECT_EQ(sc.theta.support(), std::optional<std::size_t>(6));
    for (std::size_t k = 0; k < 20; ++k)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t q = 1; q <= 6; ++q) {
                const double v = sc.trajectory.phi_component(k, i, q);
                if ((q - 1) / 2 == i) EXPECT_EQ(std::abs(v), 1.0);
                else EXPECT_EQ(v, 0.0);
            }
}

TEST(Scenarios, FiniteExactDefaultRows) {
    const auto field = scenario_field(experiment("scenario = finite_exact\nm = 2\nexogenous.budget = 3\n"));
    EXPECT_EQ(field.support(), std::optional<std::size_t>(3));
    EXPECT_EQ(field.row(3), Vector::Constant(2, 1.0 / 3.0));
}

TEST(Plot, DeterministicAndSinglePointCircle) {
    const std::vector<PlotSeries> series{{"a", {{1, 1}, {10, 0.1}, {100, 0.01}}}, {"b", {{10, 5}}}};
    std::ostringstream x, y;
    write_svg_plot(x, {"T & <U>", "t", "e"}, series);
    write_svg_plot(y, {"T & <U>", "t", "e"}, series);
    EXPECT_EQ(x.str(), y.str());
    EXPECT_NE(x.str().find("<polyline"), std::string::npos);
    EXPECT_NE(x.str().find("<circle"), std::string::npos);
    EXPECT_NE(x.str().find("T &amp; &lt;U&gt;"), std::string::npos);
    std::ostringstream z;
    EXPECT_THROW(write_svg_plot(z, {"t", "x", "y"}, {{"bad", {{0, -1}}}}), ContractViolation);
}

TEST(Cli, ValidationErrorsExitOne) {
    TempDir tmp;
    const auto bad = tmp.write("bad.cfg", "n = 0\nunknown = 1\n");
    const auto r = cli({"simulate", bad.string()});
    EXPECT_EQ(r.code, kExitValidation);
    const auto j = nlohmann::json::parse(r.err);
    EXPECT_EQ(j["error"], "validation");
    EXPECT_EQ(j["keys"], (nlohmann::json{"n", "unknown"}));
    EXPECT_EQ(cli({"simulate", (tmp.path() / "missing.cfg").string()}).code, kExitValidation);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitValidation);
    EXPECT_EQ(cli({"simulate"}).code, kExitValidation);
}

TEST(Cli, AnalyzeWithoutSimulateExitsTwo) {
    TempDir tmp;
    const auto cfg = tmp.write("a.cfg", "horizons = 10\noutput.dir = " + (tmp.path() / "out").string() + "\n");
    const auto r = cli({"analyze", cfg.string()});
    EXPECT_EQ(r.code, kExitRuntime);
    EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "dependency");
}

TEST(Cli, CheckGraph) {
    TempDir tmp;
    const std::string out = "output.dir = " + (tmp.path() / "out").string() + "\n";
    const auto good = cli({"check-graph", tmp.write("g.cfg", "n = 4\n" + out).string()});
    EXPECT_EQ(good.code, kExitOk) << good.err;
    const auto j = nlohmann::json::parse(good.out);
    EXPECT_TRUE(j["ok"].get<bool>());
    EXPECT_EQ(j["path_weight_violations"], 0);
    // Never connected: the check reports failure with a runtime exit code.
    const auto bad = cli({"check-graph", tmp.write("i.cfg", "n = 3\ngraph.kind = identity\n" + out).string()});
    EXPECT_EQ(bad.code, kExitRuntime);
    EXPECT_FALSE(nlohmann::json::parse(bad.out)["jointly_connected"].get<bool>());
}

TEST(Cli, VerifyPassesOnBuiltInGraphs) {
    TempDir tmp;
    for (const std::string g : {"gossip_ring", "complete"}) {
        const auto r = cli({"verify", tmp.write(g + ".cfg", "n = 3\nverify.instances = 4\ngraph.kind = " + g +
                                                               "\noutput.dir = " + (tmp.path() / "out").string() + "\n")
                                          .string()});
        EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
    }
}

TEST(Cli, PipelineRecoversFiniteModel) {
    TempDir tmp;
    const auto cfg = tmp.write("f.cfg", "scenario = finite_exact\nn = 3\nexogenous.budget = 3\nschedule.kind = constant\n"
                                        "schedule.p = 3\nnoise.kind = zero\nbeta = 1000000\nhorizons = 20, 100, 400\n"
                                        "seeds = 2\noutput.dir = " +
                                            (tmp.path() / "out").string() + "\n");
    for (const std::string cmd : {"simulate", "estimate", "analyze"}) {
        const auto r = cli({cmd, cfg.string(), "--threads", "2"});
        ASSERT_EQ(r.code, kExitOk) << cmd << ": " << r.err;
    }
    const auto ec = parse_experiment(Config::load(cfg.string()));
    const fs::path dir = seed_dir(ec, 2);
    for (const char* f : {"trajectory.csv", "provenance.json", "graph/adjacency_0.csv", "run_t400.csv",
                          "estimates_t400.csv", "metrics.csv", "summary.json", "plots/error.svg"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_LT(summary["mean_frobenius_error_sq"].get<double>(), 1e-12);
    EXPECT_TRUE(summary["info_floor_audit_holds"].get<bool>());
    double prev = INFINITY;
    std::istringstream metrics(slurp(dir / "metrics.csv"));
    std::size_t rows = 0;
    for (std::string line; std::getline(metrics, line);)
        if (line.find(",all,mean_frobenius_error_sq,") != std::string::npos) {
            const double v = parse_double(line.substr(line.rfind(',') + 1));
            EXPECT_LT(v, prev);
            prev = v;
            ++rows;
        }
    EXPECT_EQ(rows, 3u);
}

TEST(Cli, SimulateIsByteIdenticalAcrossThreadCounts) {
    TempDir tmp;
    const std::string body = "scenario = arx\nn = 3\nhorizons = 50\nseeds = 1, 2, 3\n";
    const auto cfg = tmp.write("s.cfg", body);
    ASSERT_EQ(cli({"simulate", cfg.string(), "--out", (tmp.path() / "a").string(), "--threads", "1"}).code, 0);
    ASSERT_EQ(cli({"simulate", cfg.string(), "--out", (tmp.path() / "b").string(), "--threads", "3"}).code, 0);
    const std::string hash = hash_hex(experiment(body).hash());
    for (int s = 1; s <= 3; ++s) {
        const fs::path rel = fs::path(hash) / ("seed_" + std::to_string(s)) / "trajectory.csv";
        EXPECT_EQ(slurp(tmp.path() / "a" / rel), slurp(tmp.path() / "b" / rel));
        EXPECT_FALSE(slurp(tmp.path() / "a" / rel).empty());
    }
}

TEST(Cli, SweepIsByteIdenticalAcrossThreadCounts) {
    TempDir tmp;
    const std::string body = "scenario = exogenous_gaussian\nn = 3\nhorizons = 10, 40\nseeds = 1, 2\nsweep.alphas = 1, 2\n";
    const auto cfg = tmp.write("w.cfg", body);
    ASSERT_EQ(cli({"sweep", cfg.string(), "--out", (tmp.path() / "a").string(), "--threads", "1"}).code, 0);
    ASSERT_EQ(cli({"sweep", cfg.string(), "--out", (tmp.path() / "b").string(), "--threads", "3"}).code, 0);
    const fs::path rel = fs::path(hash_hex(experiment(body).hash())) / "sweep.csv";
    const std::string a = slurp(tmp.path() / "a" / rel);
    EXPECT_EQ(a, slurp(tmp.path() / "b" / rel));
    EXPECT_EQ(a.rfind("alpha,seed,t,i,metric,value\n", 0), 0u);
}

TEST(Cli, SeedOverrideKeepsExperimentRoot) {
    TempDir tmp;
    const auto cfg = tmp.write("o.cfg", "horizons = 10\nseeds = 1\noutput.dir = " + (tmp.path() / "out").string() + "\n");
    ASSERT_EQ(cli({"simulate", cfg.string(), "--seed-override", "42"}).code, 0);
    const auto ec = parse_experiment(Config::load(cfg.string()));
    EXPECT_TRUE(fs::exists(experiment_root(ec) / "seed_42" / "trajectory.csv"));
    EXPECT_FALSE(fs::exists(experiment_root(ec) / "seed_1"));
}

TEST(Cli, ResolveThreads) {
    EXPECT_EQ(resolve_threads(5), 5u);
    EXPECT_EQ(resolve_threads(0), 1u);
    ::setenv("DILUTE_RLS_THREADS", "3", 1);
    EXPECT_EQ(resolve_threads(std::nullopt), 3u);
    ::setenv("DILUTE_RLS_THREADS", "many", 1);
    EXPECT_THROW(resolve_threads(std::nullopt), ValidationError);
    ::unsetenv("DILUTE_RLS_THREADS");
    EXPECT_EQ(resolve_threads(std::nullopt), 1u);
}
