#include "dilute_rls/cli.hpp"

#include <algorithm>
#include <cstdlib>

#include "CLI11.hpp"
#include "json.hpp"

#include "dilute_rls/experiment.hpp"

namespace dilute_rls {

std::size_t resolve_threads(std::optional<std::size_t> flag) {
    if (flag) return std::max<std::size_t>(1, *flag);
    if (const char* env = std::getenv("DILUTE_RLS_THREADS")) {
        try {
            return std::max<std::size_t>(1, parse_integer<std::size_t>(env));
        } catch (const ContractViolation&) {
            throw ValidationError({"DILUTE_RLS_THREADS"}, "DILUTE_RLS_THREADS must be a positive integer");
        }
    }
    return 1;
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    auto report = [&](const char* kind, const std::string& message, const std::vector<std::string>& keys = {}) {
        json j = {{"error", kind}, {"message", message}};
        if (!keys.empty()) j["keys"] = keys;
        err << j.dump() << '\n';
    };

    CLI::App app{"Distributed RLS with increasing regressor dimensions"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed_override;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "generate and persist trajectories"},
        {"estimate", "run fixed-horizon or synchronized estimation"},
        {"analyze", "compute metrics, audits and plots"},
        {"sweep", "cross product over horizons, seeds and exponents"},
        {"check-graph", "check graph assumptions and path-weight bounds"},
        {"verify", "run the oracle suites on small instances"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config,--config", config_path, "configuration file");
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--threads", threads, "worker threads (default: DILUTE_RLS_THREADS or 1)");
        sub->add_option("--seed-override", seed_override, "replace the configured seeds with one seed");
    }

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        report("validation", e.what());
        return kExitValidation;
    }

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        if (config_path.empty()) throw ValidationError({"config"}, "a configuration file is required");
        Config raw = Config::load(config_path);
        if (!out_dir.empty()) raw.set("output.dir", out_dir);
        if (seed_override) raw.set("seeds", std::to_string(*seed_override));
        CommandContext ctx{parse_experiment(raw), resolve_threads(threads), &out};

        if (command == "simulate") cmd_simulate(ctx);
        else if (command == "estimate") cmd_estimate(ctx);
        else if (command == "analyze") cmd_analyze(ctx);
        else if (command == "sweep") cmd_sweep(ctx);
        else {
            const bool ok = command == "verify" ? cmd_verify(ctx) : cmd_check_graph(ctx);
            if (!ok) {
                report("check_failed", command + ": at least one check failed");
                return kExitRuntime;
            }
        }
        return kExitOk;
    } catch (const ValidationError& e) {
        report("validation", e.what(), e.keys());
        return kExitValidation;
    } catch (const DependencyError& e) {
        report("dependency", e.what());
        return kExitRuntime;
    } catch (const SimulationDivergence& e) {
        report("divergence", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        report("runtime", e.what());
        return kExitRuntime;
    }
}

}  // namespace dilute_rls
