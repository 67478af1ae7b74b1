#pragma once

// Flat key=value experiment configuration with dotted section names.
//
//   # comment
//   scenario = arx
//   graph.kind = gossip_ring
//   horizons = 100, 1000

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dilute_rls/errors.hpp"
#include "dilute_rls/format.hpp"
#include "dilute_rls/graph.hpp"
#include "dilute_rls/model.hpp"

namespace dilute_rls {

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

/// Raw key/value store; keys are unique and kept sorted.
class Config {
public:
    static Config parse(std::string_view text) {
        Config cfg;
        std::vector<std::string> bad;
        std::size_t line_no = 0;
        std::istringstream in{std::string(text)};
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string body = detail::trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            const std::string key = eq == std::string::npos ? body : detail::trim(std::string_view(body).substr(0, eq));
            if (eq == std::string::npos || key.empty()) {
                bad.push_back("line " + std::to_string(line_no));
                continue;
            }
            if (cfg.values_.count(key)) bad.push_back(key);
            cfg.values_[key] = detail::trim(std::string_view(body).substr(eq + 1));
        }
        if (!bad.empty()) throw ValidationError(bad, "malformed or duplicate configuration entries");
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError({"config"}, "cannot read configuration file '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    void erase(const std::string& key) { values_.erase(key); }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    /// Sorted "key=value" lines, omitting keys that do not affect results.
    std::string canonical(const std::set<std::string>& exclude = {}) const {
        std::string out;
        for (const auto& [k, v] : values_) {
            if (exclude.count(k)) continue;
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

private:
    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed experiment configuration

struct ExperimentConfig {
    std::string scenario = "arx";
    std::size_t n = 4;
    std::size_t m = 1;
    std::size_t l = 1;

    // Parameter field for exogenous scenarios.
    std::string theta_kind = "geometric";  // geometric | finite
    double theta_c = 1.0;
    double theta_lambda = 0.5;
    std::optional<std::uint64_t> theta_seed;
    std::vector<Vector> theta_rows;

    // ARX coefficients A_q = a_c a_rho^q I, B_q = b_c b_rho^q [I 0].
    double arx_a_c = 0.0;
    double arx_a_rho = 0.5;
    double arx_b_c = 1.0;
    double arx_b_rho = 0.5;
    double input_sigma = 1.0;

    std::size_t budget = 0;  // active exogenous components; 0 selects a default
    std::size_t hidden_features = 3;
    std::size_t block_size = 2;

    std::string schedule_kind = "polylog";  // constant | poly | polylog
    std::size_t schedule_p = 1;
    double schedule_alpha = 2.0;
    std::optional<std::size_t> schedule_cap;

    std::string graph_kind = "gossip_ring";  // gossip_ring | complete | identity | metropolis
    std::vector<UndirectedEdge> graph_edges;
    std::optional<std::size_t> graph_L;
    std::optional<double> graph_delta;

    std::string noise_kind = "gaussian";  // gaussian | bounded | zero
    double noise_scale = 0.1;

    double beta = 1.0;
    std::vector<std::size_t> horizons{100};
    std::vector<std::uint64_t> seeds{1};
    std::string mode = "fixed_t";  // fixed_t | synchronized | sweep
    std::string output_dir = "out";
    std::vector<double> sweep_alphas;

    std::size_t remark1_max_length = 12;
    std::size_t verify_instances = 20;

    Config raw;

    std::size_t max_horizon() const { return horizons.back(); }
    /// Hash of every entry that influences results (seeds and output location excluded).
    std::uint64_t hash() const { return fnv1a64(raw.canonical({"seeds", "output.dir"})); }

    DimensionSchedule schedule(std::optional<double> alpha_override = std::nullopt) const {
        const double alpha = alpha_override.value_or(schedule_alpha);
        if (schedule_kind == "constant") return DimensionSchedule::constant(schedule_p);
        if (schedule_kind == "poly") return DimensionSchedule::poly(alpha, schedule_cap);
        return DimensionSchedule::polylog(alpha, schedule_cap);
    }

    NoiseModel noise() const {
        if (noise_kind == "bounded") return NoiseModel::uniform_bounded(noise_scale);
        if (noise_kind == "zero") return NoiseModel::zero();
        return NoiseModel::gaussian(noise_scale);
    }

    GraphSequence graph() const {
        if (graph_kind == "gossip_ring") return gossip_ring(n);
        if (graph_kind == "complete") return complete_uniform(n);
        if (graph_kind == "identity") return identity_graph(n);
        return metropolis_static(n, graph_edges);
    }

    /// (delta, L): config overrides win over the generator certificate.
    std::pair<double, std::size_t> certified() const {
        const GraphCertificate cert = graph().certificate();
        return {graph_delta.value_or(cert.delta), graph_L.value_or(cert.joint_L)};
    }
};

inline const std::set<std::string>& known_scenarios() {
    static const std::set<std::string> s{"arx",          "exogenous_gaussian", "exogenous_bounded",
                                         "hidden_layer", "block_excitation",   "finite_exact"};
    return s;
}

namespace detail {

class FieldReader {
public:
    explicit FieldReader(const Config& cfg) : cfg_(cfg) {}

    template <typename T, typename Parse>
    void read(const std::string& key, T& target, Parse parse) {
        used_.insert(key);
        auto v = cfg_.get(key);
        if (!v) return;
        try {
            target = parse(*v);
        } catch (const std::exception&) {
            bad_.push_back(key);
        }
    }
    template <std::unsigned_integral Int>
    void read(const std::string& key, Int& target) {
        read(key, target, [](const std::string& s) { return parse_integer<Int>(s); });
    }
    void read(const std::string& key, double& target) {
        read(key, target, [](const std::string& s) { return parse_double(s); });
    }
    void read(const std::string& key, std::string& target) {
        read(key, target, [](const std::string& s) { return s; });
    }
    template <typename T>
    void read_optional(const std::string& key, std::optional<T>& target) {
        if (!cfg_.has(key)) {
            used_.insert(key);
            return;
        }
        T value{};
        read(key, value);
        target = value;
    }

    void fail(const std::string& key) { bad_.push_back(key); }
    void check(bool ok, const std::string& key) {
        if (!ok) bad_.push_back(key);
    }

    std::vector<std::string> finish() {
        for (const auto& [k, v] : cfg_.entries())
            if (!used_.count(k)) bad_.push_back(k);
        std::sort(bad_.begin(), bad_.end());
        bad_.erase(std::unique(bad_.begin(), bad_.end()), bad_.end());
        return bad_;
    }

private:
    const Config& cfg_;
    std::set<std::string> used_;
    std::vector<std::string> bad_;
};

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
    std::vector<T> out;
    for (const std::string& item : split(text, ',')) out.push_back(parse(item));
    return out;
}

}  // namespace detail

/// Typed view of a Config; every offending key is reported together.
inline ExperimentConfig parse_experiment(const Config& cfg) {
    ExperimentConfig ec;
    ec.raw = cfg;
    detail::FieldReader r(cfg);
    const auto size_list = [](const std::string& s) {
        return detail::parse_list<std::size_t>(s, [](const std::string& x) { return parse_integer<std::size_t>(x); });
    };
    const auto seed_list = [](const std::string& s) {
        return detail::parse_list<std::uint64_t>(s, [](const std::string& x) { return parse_integer<std::uint64_t>(x); });
    };
    const auto double_list = [](const std::string& s) {
        return detail::parse_list<double>(s, [](const std::string& x) { return parse_double(x); });
    };

    r.read("scenario", ec.scenario);
    r.read("n", ec.n);
    r.read("m", ec.m);
    r.read("l", ec.l);
    r.read("theta.kind", ec.theta_kind);
    r.read("theta.c", ec.theta_c);
    r.read("theta.lambda", ec.theta_lambda);
    r.read_optional("theta.seed", ec.theta_seed);
    r.read("theta.rows", ec.theta_rows, [](const std::string& s) {
        std::vector<Vector> rows;
        for (const std::string& row : detail::split(s, ';')) {
            const auto vals = detail::parse_list<double>(row, [](const std::string& x) { return parse_double(x); });
            rows.push_back(Eigen::Map<const Vector>(vals.data(), Eigen::Index(vals.size())));
        }
        return rows;
    });
    r.read("arx.a_c", ec.arx_a_c);
    r.read("arx.a_rho", ec.arx_a_rho);
    r.read("arx.b_c", ec.arx_b_c);
    r.read("arx.b_rho", ec.arx_b_rho);
    r.read("input.sigma", ec.input_sigma);
    r.read("exogenous.budget", ec.budget);
    r.read("hidden.features", ec.hidden_features);
    r.read("block.size", ec.block_size);
    r.read("schedule.kind", ec.schedule_kind);
    r.read("schedule.p", ec.schedule_p);
    r.read("schedule.alpha", ec.schedule_alpha);
    r.read_optional("schedule.cap", ec.schedule_cap);
    r.read("graph.kind", ec.graph_kind);
    r.read("graph.edges", ec.graph_edges, [](const std::string& s) {
        std::vector<UndirectedEdge> edges;
        for (const std::string& e : detail::split(s, ',')) {
            const auto ends = detail::split(e, '-');
            if (ends.size() != 2) throw ContractViolation("edge");
            edges.emplace_back(parse_integer<std::size_t>(ends[0]), parse_integer<std::size_t>(ends[1]));
        }
        return edges;
    });
    r.read_optional("graph.L", ec.graph_L);
    r.read_optional("graph.delta", ec.graph_delta);
    r.read("noise.kind", ec.noise_kind);
    r.read("noise.scale", ec.noise_scale);
    r.read("beta", ec.beta);
    r.read("horizons", ec.horizons, size_list);
    r.read("seeds", ec.seeds, seed_list);
    r.read("mode", ec.mode);
    r.read("output.dir", ec.output_dir);
    r.read("sweep.alphas", ec.sweep_alphas, double_list);
    r.read("audit.remark1_max_length", ec.remark1_max_length);
    r.read("verify.instances", ec.verify_instances);

    r.check(known_scenarios().count(ec.scenario) != 0, "scenario");
    r.check(ec.n >= 1, "n");
    r.check(ec.m >= 1, "m");
    r.check(ec.l >= 1, "l");
    r.check(ec.theta_kind == "geometric" || ec.theta_kind == "finite", "theta.kind");
    r.check(ec.theta_c >= 0.0, "theta.c");
    r.check(ec.theta_lambda > 0.0 && ec.theta_lambda < 1.0, "theta.lambda");
    if (ec.theta_kind == "finite" || cfg.has("theta.rows")) {
        bool ok = !ec.theta_rows.empty();
        for (const Vector& row : ec.theta_rows) ok = ok && std::size_t(row.size()) == ec.m;
        r.check(ok, "theta.rows");
    }
    r.check(ec.arx_a_rho > 0.0 && ec.arx_a_rho < 1.0, "arx.a_rho");
    r.check(ec.arx_b_rho > 0.0 && ec.arx_b_rho < 1.0, "arx.b_rho");
    r.check(ec.input_sigma >= 0.0, "input.sigma");
    r.check(ec.hidden_features >= 1, "hidden.features");
    r.check(ec.block_size >= 1, "block.size");
    r.check(ec.schedule_kind == "constant" || ec.schedule_kind == "poly" || ec.schedule_kind == "polylog",
            "schedule.kind");
    r.check(ec.schedule_p >= 1, "schedule.p");
    r.check(ec.schedule_alpha > 0.0, "schedule.alpha");
    r.check(!ec.schedule_cap || *ec.schedule_cap >= 1, "schedule.cap");
    r.check(ec.graph_kind == "gossip_ring" || ec.graph_kind == "complete" || ec.graph_kind == "identity" ||
                ec.graph_kind == "metropolis",
            "graph.kind");
    for (auto [u, v] : ec.graph_edges) r.check(u < ec.n && v < ec.n, "graph.edges");
    r.check(!ec.graph_L || *ec.graph_L >= 1, "graph.L");
    r.check(!ec.graph_delta || (*ec.graph_delta > 0.0 && *ec.graph_delta < 1.0), "graph.delta");
    r.check(ec.noise_kind == "gaussian" || ec.noise_kind == "bounded" || ec.noise_kind == "zero", "noise.kind");
    r.check(ec.noise_scale >= 0.0, "noise.scale");
    r.check(ec.beta > 0.0, "beta");
    bool increasing = !ec.horizons.empty() && ec.horizons.front() >= 1;
    for (std::size_t i = 1; i < ec.horizons.size(); ++i) increasing = increasing && ec.horizons[i] > ec.horizons[i - 1];
    r.check(increasing, "horizons");
    r.check(!ec.seeds.empty(), "seeds");
    r.check(ec.mode == "fixed_t" || ec.mode == "synchronized" || ec.mode == "sweep", "mode");
    r.check(!ec.output_dir.empty(), "output.dir");
    for (double a : ec.sweep_alphas) r.check(a > 0.0, "sweep.alphas");
    r.check(ec.remark1_max_length >= 1, "audit.remark1_max_length");
    r.check(ec.verify_instances >= 1, "verify.instances");

    std::vector<std::string> bad = r.finish();
    if (!bad.empty()) {
        std::string msg = "invalid configuration keys:";
        for (const auto& k : bad) msg += " " + k;
        throw ValidationError(bad, msg);
    }
    return ec;
}

}  // namespace dilute_rls
