#pragma once

// Experiment orchestration behind the command-line commands.
//
// Outputs live under <output.dir>/<config hash>/seed_<s>/ and are byte-identical
// for identical (config, seed) regardless of the thread count.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dilute_rls/analysis.hpp"
#include "dilute_rls/config.hpp"
#include "dilute_rls/errors.hpp"
#include "dilute_rls/estimator.hpp"
#include "dilute_rls/format.hpp"
#include "dilute_rls/graph.hpp"
#include "dilute_rls/model.hpp"
#include "dilute_rls/parallel.hpp"
#include "dilute_rls/plot.hpp"
#include "dilute_rls/scenarios.hpp"

namespace dilute_rls {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Per-horizon metrics

struct HorizonMetrics {
    std::size_t t = 0;
    std::size_t p = 0;
    std::vector<double> error_sq;  // per agent
    ExcitationRatios excitation;
    double r = 0.0, s = 0.0, gamma = 0.0, d = 0.0;
    double accumulated_regret = 0.0;
    double phi_P_phi = 0.0;
    InfoFloorAudit info_floor;

    void append_to(MetricsTable& table) const {
        table.add(t, "p_t", double(p));
        for (std::size_t i = 0; i < error_sq.size(); ++i) {
            table.add(t, i, "frobenius_error_sq", error_sq[i]);
            if (i < excitation.noncoop.size()) table.add(t, i, "noncoop_ratio", excitation.noncoop[i]);
        }
        double mean = 0.0;
        for (double e : error_sq) mean += e / double(error_sq.size());
        table.add(t, "mean_frobenius_error_sq", mean);
        table.add(t, "lambda_min_t", excitation.lambda_min_network.value);
        table.add(t, "lambda_min_floored", excitation.lambda_min_network.floored ? 1.0 : 0.0);
        table.add(t, "r_t", r);
        table.add(t, "s_t", s);
        table.add(t, "gamma_t", gamma);
        table.add(t, "d_t", d);
        table.add(t, "excitation_ratio", excitation.coop);
        table.add(t, "accumulated_regret", accumulated_regret);
        table.add(t, "averaged_regret", accumulated_regret / double(t));
        table.add(t, "phi_P_phi_bound", phi_P_phi);
        table.add(t, "info_floor_slack", info_floor.min_lambda_info - info_floor.bound);
    }
};

/// One fixed-horizon run with every metric that needs it, plus the trajectory-only quantities.
inline HorizonMetrics analyze_horizon(const Trajectory& traj, const ParameterField& theta, const GraphSequence& seq,
                                      const DimensionSchedule& sched, const NoiseModel& noise, double beta,
                                      double delta, std::size_t L, std::size_t t) {
    require(t >= 2, "analyze_horizon: horizons must be >= 2");
    HorizonMetrics hm;
    hm.t = t;
    hm.p = sched.evaluate(t);
    RegretSeries regret;
    regret.n = traj.n();
    detail::TruthCache truth(theta);
    RunOptions opt;
    opt.observer = [&](const StepView& v) {
        for (std::size_t i = 0; i < v.before.size(); ++i)
            detail::push_regret(regret, traj, theta, truth, v.k, i, v.before[i].theta);
    };
    const RunRecord rec = run_horizon(traj, seq, sched, beta, t, opt);
    for (const AgentEstimate& e : rec.final_state.estimates) hm.error_sq.push_back(estimation_error_sq(e.theta, theta));
    hm.excitation = excitation_ratios(traj, t, L, beta, sched);
    hm.r = r_t(traj, t, sched);
    hm.s = s_t(traj, theta, t, sched);
    hm.gamma = gamma_t(theta, t, sched);
    hm.d = d_t(noise, traj.n(), t);
    hm.accumulated_regret = regret.accumulated(t);
    for (const StepAudit& a : rec.audits)
        if (std::isfinite(a.b)) hm.phi_P_phi = std::max(hm.phi_P_phi, (1.0 / a.b - 1.0) / double(hm.p));
    hm.info_floor = info_floor_audit(rec, traj, delta, L, beta, sched);
    return hm;
}

// ---------------------------------------------------------------------------
// Paths and I/O helpers

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

inline fs::path experiment_root(const ExperimentConfig& cfg) { return fs::path(cfg.output_dir) / hash_hex(cfg.hash()); }
inline fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
    return experiment_root(cfg) / ("seed_" + std::to_string(seed));
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    writer(out);
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline Trajectory load_trajectory(const ExperimentConfig& cfg, std::uint64_t seed) {
    const fs::path path = seed_dir(cfg, seed) / "trajectory.csv";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("missing trajectory '" + path.string() + "'; run simulate first");
    Trajectory traj = read_trajectory_csv(in, scenario_layout(cfg));
    if (traj.horizon() < cfg.max_horizon() || traj.n() != cfg.n)
        throw DependencyError("trajectory '" + path.string() + "' does not match the configuration; rerun simulate");
    return traj;
}

inline json finite_or_string(double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); }

// ---------------------------------------------------------------------------
// Commands

struct CommandContext {
    ExperimentConfig cfg;
    std::size_t threads = 1;
    std::ostream* out = &std::cout;
};

inline void cmd_simulate(const CommandContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    std::vector<json> reports(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), ctx.threads, [&](std::size_t idx) {
        const std::uint64_t seed = cfg.seeds[idx];
        const Scenario sc = build_scenario(cfg, seed, cfg.max_horizon());
        const fs::path dir = seed_dir(cfg, seed);
        write_file(dir / "trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, sc.trajectory); });
        for (std::size_t k = 0; k < sc.L; ++k)
            write_file(dir / "graph" / ("adjacency_" + std::to_string(k) + ".csv"),
                       [&](std::ostream& o) { write_adjacency_csv(o, sc.graph.at(k)); });
        json prov = {{"seed", seed},
                     {"config_hash", hash_hex(cfg.hash())},
                     {"scenario", cfg.scenario},
                     {"horizon", cfg.max_horizon()},
                     {"lag_cutoff", sc.trajectory.provenance().lag_cutoff},
                     {"dropped_tail_bound", sc.trajectory.provenance().dropped_tail_bound},
                     {"connectivity_warning", sc.graph.connectivity_warning()}};
        write_file(dir / "provenance.json", [&](std::ostream& o) { o << prov.dump(2) << '\n'; });
        reports[idx] = {{"seed", seed}, {"dir", dir.string()}};
    });
    *ctx.out << json{{"command", "simulate"}, {"outputs", reports}}.dump() << '\n';
}

inline void cmd_estimate(const CommandContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const ParameterField theta = scenario_field(cfg);
    const GraphSequence seq = cfg.graph();
    const DimensionSchedule sched = cfg.schedule();
    std::vector<Trajectory> trajs;
    for (std::uint64_t seed : cfg.seeds) trajs.push_back(load_trajectory(cfg, seed));

    if (cfg.mode == "synchronized") {
        for (std::size_t idx = 0; idx < cfg.seeds.size(); ++idx) {
            const SynchronizedRecord sync = run_synchronized(trajs[idx], seq, sched, cfg.beta, cfg.max_horizon(), ctx.threads);
            write_file(seed_dir(cfg, cfg.seeds[idx]) / "synchronized_estimates.csv", [&](std::ostream& o) {
                o << "k,i,row,col,value\n";
                for (std::size_t k : cfg.horizons)
                    for (std::size_t i = 0; i < sync.theta[k].size(); ++i) {
                        const DenseMatrix& th = sync.theta[k][i];
                        for (Eigen::Index r = 0; r < th.rows(); ++r)
                            for (Eigen::Index c = 0; c < th.cols(); ++c)
                                o << k << ',' << i << ',' << r << ',' << c << ',' << format_double(th(r, c)) << '\n';
                    }
            });
        }
    } else {
        struct Cell {
            std::size_t seed_idx, t;
        };
        std::vector<Cell> cells;
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
            for (std::size_t t : cfg.horizons) cells.push_back({s, t});
        parallel_for(cells.size(), ctx.threads, [&](std::size_t c) {
            const Cell cell = cells[c];
            RunOptions opt;
            opt.truth = &theta;
            opt.compute_lambda_min = true;
            const RunRecord rec = run_horizon(trajs[cell.seed_idx], seq, sched, cfg.beta, cell.t, opt);
            const fs::path dir = seed_dir(cfg, cfg.seeds[cell.seed_idx]);
            const std::string tag = "t" + std::to_string(cell.t);
            write_file(dir / ("run_" + tag + ".csv"), [&](std::ostream& o) { write_run_record_csv(o, rec); });
            write_file(dir / ("estimates_" + tag + ".csv"), [&](std::ostream& o) {
                write_estimates_csv(o, std::span<const NetworkRunState>(&rec.final_state, 1));
            });
        });
    }
    *ctx.out << json{{"command", "estimate"}, {"mode", cfg.mode}, {"root", experiment_root(cfg).string()}}.dump() << '\n';
}

inline void emit_plots(const fs::path& dir, const MetricsTable& table, std::size_t n) {
    std::vector<PlotSeries> err;
    for (std::size_t i = 0; i < n; ++i) err.push_back({"agent " + std::to_string(i), table.series("frobenius_error_sq", i)});
    write_file(dir / "error.svg", [&](std::ostream& o) {
        write_svg_plot(o, {"Estimation error", "t", "squared Frobenius error"}, err);
    });
    std::vector<PlotSeries> ex{{"cooperative", table.series("excitation_ratio")}};
    for (std::size_t i = 0; i < n; ++i)
        ex.push_back({"agent " + std::to_string(i) + " alone", table.series("noncoop_ratio", i)});
    write_file(dir / "excitation.svg", [&](std::ostream& o) {
        write_svg_plot(o, {"Excitation ratios", "t", "p_t log t / lambda_min"}, ex);
    });
    std::vector<PlotSeries> reg{{"fixed horizon", table.series("averaged_regret")}};
    const auto sync = table.series("averaged_synchronized_regret");
    if (!sync.empty()) reg.push_back({"synchronized", sync});
    write_file(dir / "regret.svg", [&](std::ostream& o) {
        write_svg_plot(o, {"Averaged regret", "t", "regret / t"}, reg);
    });
}

inline void cmd_analyze(const CommandContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const ParameterField theta = scenario_field(cfg);
    const GraphSequence seq = cfg.graph();
    const DimensionSchedule sched = cfg.schedule();
    const auto [delta, L] = cfg.certified();
    std::vector<std::size_t> horizons;
    for (std::size_t t : cfg.horizons)
        if (t >= 2) horizons.push_back(t);
    require(!horizons.empty(), "analyze: needs a horizon >= 2");

    json outputs = json::array();
    for (std::uint64_t seed : cfg.seeds) {
        const Trajectory traj = load_trajectory(cfg, seed);
        std::vector<HorizonMetrics> per(horizons.size());
        parallel_for(horizons.size(), ctx.threads, [&](std::size_t h) {
            per[h] = analyze_horizon(traj, theta, seq, sched, cfg.noise(), cfg.beta, delta, L, horizons[h]);
        });
        MetricsTable table;
        for (const HorizonMetrics& hm : per) hm.append_to(table);
        if (cfg.mode == "synchronized") {
            const SynchronizedRecord sync = run_synchronized(traj, seq, sched, cfg.beta, cfg.max_horizon(), ctx.threads);
            const RegretSeries reg = regret_synchronized(traj, theta, sync, cfg.max_horizon());
            for (std::size_t t : horizons) {
                table.add(t, "synchronized_regret", reg.accumulated(t));
                table.add(t, "averaged_synchronized_regret", reg.averaged(t));
            }
        }
        const fs::path dir = seed_dir(cfg, seed);
        write_file(dir / "metrics.csv", [&](std::ostream& o) { table.write_csv(o); });
        json summary = table.summary();
        bool floor_ok = true;
        for (const HorizonMetrics& hm : per) floor_ok = floor_ok && hm.info_floor.holds();
        summary["info_floor_audit_holds"] = floor_ok;
        summary["config_hash"] = hash_hex(cfg.hash());
        summary["seed"] = seed;
        summary["final_horizon"] = horizons.back();
        write_file(dir / "summary.json", [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
        emit_plots(dir / "plots", table, cfg.n);
        outputs.push_back({{"seed", seed}, {"dir", dir.string()}});
    }
    *ctx.out << json{{"command", "analyze"}, {"outputs", outputs}}.dump() << '\n';
}

/// Cross product over (alpha, seed, horizon); one CSV regardless of scheduling.
inline void cmd_sweep(const CommandContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const ParameterField theta = scenario_field(cfg);
    const GraphSequence seq = cfg.graph();
    const auto [delta, L] = cfg.certified();
    std::vector<double> alphas = cfg.sweep_alphas;
    if (alphas.empty()) alphas.push_back(cfg.schedule_alpha);

    std::vector<std::optional<Trajectory>> trajs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), ctx.threads, [&](std::size_t s) {
        trajs[s] = build_scenario(cfg, cfg.seeds[s], cfg.max_horizon()).trajectory;
    });

    struct Cell {
        std::size_t alpha_idx, seed_idx, t;
    };
    std::vector<Cell> cells;
    for (std::size_t a = 0; a < alphas.size(); ++a)
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
            for (std::size_t t : cfg.horizons)
                if (t >= 2) cells.push_back({a, s, t});
    // Largest horizons first for load balance; results land in fixed slots.
    std::vector<std::size_t> order(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return cells[x].t > cells[y].t; });

    std::vector<MetricsTable> tables(cells.size());
    parallel_for(order.size(), ctx.threads, [&](std::size_t idx) {
        const Cell cell = cells[order[idx]];
        const HorizonMetrics hm = analyze_horizon(*trajs[cell.seed_idx], theta, seq, cfg.schedule(alphas[cell.alpha_idx]),
                                                  cfg.noise(), cfg.beta, delta, L, cell.t);
        hm.append_to(tables[order[idx]]);
    });

    const fs::path path = experiment_root(cfg) / "sweep.csv";
    write_file(path, [&](std::ostream& o) {
        o << "alpha,seed,t,i,metric,value\n";
        for (std::size_t c = 0; c < cells.size(); ++c)
            for (const MetricsTable::Row& r : tables[c].rows()) {
                o << format_double(alphas[cells[c].alpha_idx]) << ',' << cfg.seeds[cells[c].seed_idx] << ',' << r.t << ',';
                if (r.i == MetricsTable::kAggregate) o << "all";
                else o << r.i;
                o << ',' << r.metric << ',' << format_double(r.value) << '\n';
            }
    });
    *ctx.out << json{{"command", "sweep"}, {"cells", cells.size()}, {"output", path.string()}}.dump() << '\n';
}

/// Graph assumption checks plus the path-weight audit; returns whether all passed.
inline bool cmd_check_graph(const CommandContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const GraphSequence seq = cfg.graph();
    const auto [delta, L] = cfg.certified();
    const std::size_t span = std::max(4 * L, 2 * cfg.remark1_max_length);
    bool balanced = true;
    for (std::size_t k = 0; k < span; ++k) balanced = balanced && is_weight_balanced(seq.at(k));
    const bool nondegenerate = is_delta_nondegenerate(seq, {0, span - 1}, delta);
    const bool connected = is_jointly_connected(seq, L, {0, span / L - 1});
    const Remark1Report r1 = audit_remark1_windows(seq, delta, {0, 2 * L}, cfg.remark1_max_length);
    const bool ok = balanced && nondegenerate && connected && r1.ok();
    json report = {{"command", "check-graph"},
                   {"graph", seq.name()},
                   {"n", seq.n()},
                   {"delta", delta},
                   {"L", L},
                   {"steps_checked", span},
                   {"weight_balanced", balanced},
                   {"delta_nondegenerate", nondegenerate},
                   {"jointly_connected", connected},
                   {"path_weight_windows_checked", r1.windows_checked},
                   {"path_weight_windows_skipped_two_hop", r1.windows_skipped_c},
                   {"path_weight_violations", r1.violations.size()},
                   {"connectivity_warning", seq.connectivity_warning()},
                   {"ok", ok}};
    write_file(experiment_root(cfg) / "check_graph.json", [&](std::ostream& o) { o << report.dump(2) << '\n'; });
    *ctx.out << report.dump() << '\n';
    return ok;
}

/// Oracle suites on small random instances built from the configured graph.
inline bool cmd_verify(const CommandContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const GraphSequence seq = cfg.graph();
    const auto [delta, L] = cfg.certified();
    const std::size_t count = cfg.verify_instances;
    bool symmetric = true;
    for (std::size_t k = 0; k < std::max<std::size_t>(L, 1); ++k)
        symmetric = symmetric && (seq.at(k).weights() - seq.at(k).weights().transpose()).norm() == 0.0;

    struct Result {
        double closed_form_rel = 0.0;
        double lemma3_slack = INFINITY;
        Lemma7Report lemma7;
        bool floor_ok = true;
    };
    std::vector<Result> results(count);
    parallel_for(count, ctx.threads, [&](std::size_t r) {
        const std::uint64_t seed = 0x5eed0000ULL + r;
        const CounterRng rng(seed);
        const std::size_t t = 1 + std::size_t(rng.bits(StreamPurpose::instance, 0, 0, 0) % 30);
        const std::size_t p = 1 + std::size_t(rng.bits(StreamPurpose::instance, 0, 0, 1) % 8);
        const ParameterField theta = ParameterField::geometric(cfg.m, 1.0, 0.6, seed);
        const ExogenousStream stream{p + 4, [rng](std::size_t k, std::size_t i, std::size_t q) {
                                         return rng.gaussian(StreamPurpose::regressor, i, k, q);
                                     }};
        const Trajectory traj = simulate_exogenous(stream, theta, NoiseModel::gaussian(0.1), cfg.n, 50, seed);
        const DimensionSchedule sched = DimensionSchedule::constant(p);
        Result& res = results[r];

        const RunRecord rec = run_horizon(traj, seq, sched, cfg.beta, t);
        for (std::size_t i = 0; i < cfg.n; ++i) {
            const DenseMatrix cf = closed_form_estimate(traj, seq, i, t, cfg.beta, sched);
            const double dev = (cf - rec.final_state.estimates[i].theta).norm() / std::max(1.0, cf.norm());
            res.closed_form_rel = std::max(res.closed_form_rel, dev);
        }
        RunOptions opt;
        opt.keep_states = true;
        opt.observer = [&](const StepView& v) { res.lemma7.merge(lemma7_step(v)); };
        const RunRecord full = run_horizon(traj, seq, sched, cfg.beta, 50, opt);
        res.lemma3_slack = lemma3_audit(full, traj, theta).worst_relative_slack;
        res.floor_ok = info_floor_audit(full, traj, delta, L, cfg.beta, sched).holds();
    });

    double cf = 0.0, l3 = INFINITY;
    Lemma7Report l7;
    bool floor_ok = true;
    for (const Result& r : results) {
        cf = std::max(cf, r.closed_form_rel);
        l3 = std::min(l3, r.lemma3_slack);
        l7.merge(r.lemma7);
        floor_ok = floor_ok && r.floor_ok;
    }
    const bool cf_ok = cf <= 1e-8, l3_ok = l3 >= -1e-7, l7_ok = l7.min_slack_covariance >= -1e-9 &&
                                                             l7.min_slack_transposed >= -1e-9 &&
                                                             (!symmetric || l7.min_slack_stated >= -1e-9);
    const bool ok = cf_ok && l3_ok && l7_ok && floor_ok;
    json report = {{"command", "verify"},
                   {"instances", count},
                   {"closed_form_max_relative_deviation", cf},
                   {"closed_form_ok", cf_ok},
                   {"lyapunov_min_relative_slack", l3},
                   {"lyapunov_ok", l3_ok},
                   {"combination_order_min_slack_stated", l7.min_slack_stated},
                   {"combination_order_min_slack_transposed", l7.min_slack_transposed},
                   {"combination_order_min_slack_covariance", l7.min_slack_covariance},
                   {"combination_order_stated_form_checked", symmetric},
                   {"combination_order_ok", l7_ok},
                   {"information_floor_ok", floor_ok},
                   {"ok", ok}};
    write_file(experiment_root(cfg) / "verify.json", [&](std::ostream& o) { o << report.dump(2) << '\n'; });
    *ctx.out << report.dump() << '\n';
    return ok;
}

}  // namespace dilute_rls
