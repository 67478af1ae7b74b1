#pragma once

// Scenario library: each builder turns a config and a seed into
// (parameter field, trajectory, graph sequence, certified delta and L).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dilute_rls/config.hpp"
#include "dilute_rls/graph.hpp"
#include "dilute_rls/model.hpp"
#include "dilute_rls/rng.hpp"

namespace dilute_rls {

struct Scenario {
    std::string name;
    ParameterField theta;
    Trajectory trajectory;
    GraphSequence graph;
    double delta;
    std::size_t L;
};

/// Rows for finite-support scenarios: the configured rows, else row q = q * ones
/// (block excitation) or (1/q) * ones (exact recovery).
inline std::vector<Vector> default_finite_rows(const ExperimentConfig& cfg, std::size_t count, bool reciprocal) {
    if (!cfg.theta_rows.empty()) return cfg.theta_rows;
    std::vector<Vector> rows;
    for (std::size_t q = 1; q <= count; ++q)
        rows.push_back(Vector::Constant(Eigen::Index(cfg.m), reciprocal ? 1.0 / double(q) : double(q)));
    return rows;
}

inline ArxCoefficients scenario_arx_coefficients(const ExperimentConfig& cfg) {
    return ArxCoefficients::geometric(cfg.m, cfg.l, cfg.arx_a_c, cfg.arx_a_rho, cfg.arx_b_c, cfg.arx_b_rho);
}

/// Largest p the schedule reaches over the configured horizons and sweep exponents.
inline std::size_t max_dimension(const ExperimentConfig& cfg) {
    std::size_t p = cfg.schedule().evaluate(cfg.max_horizon());
    for (double a : cfg.sweep_alphas) p = std::max(p, cfg.schedule(a).evaluate(cfg.max_horizon()));
    return p;
}

/// The ground-truth field a scenario uses (independent of the seed).
inline ParameterField scenario_field(const ExperimentConfig& cfg) {
    if (cfg.scenario == "arx") return arx_parameter_field(scenario_arx_coefficients(cfg));
    if (cfg.scenario == "block_excitation")
        return ParameterField::finite_support(default_finite_rows(cfg, cfg.n * cfg.block_size, false));
    if (cfg.scenario == "finite_exact") {
        const std::size_t support = cfg.budget ? cfg.budget : std::max<std::size_t>(1, std::min<std::size_t>(4, max_dimension(cfg)));
        return ParameterField::finite_support(default_finite_rows(cfg, support, true));
    }
    if (cfg.theta_kind == "finite") return ParameterField::finite_support(cfg.theta_rows);
    return ParameterField::geometric(cfg.m, cfg.theta_c, cfg.theta_lambda, cfg.theta_seed);
}

/// Active exogenous components: configured, else twice the largest p (so residuals are present).
inline std::size_t exogenous_budget(const ExperimentConfig& cfg, const ParameterField& theta) {
    if (cfg.budget) return cfg.budget;
    if (theta.support()) return *theta.support();
    return std::max<std::size_t>(2, 2 * max_dimension(cfg));
}

/// Agent i is excited with i.i.d. +-1 components on coordinates [i b + 1, (i + 1) b] only.
inline ExogenousStream block_excitation_stream(std::size_t n, std::size_t block_size, std::uint64_t seed) {
    const CounterRng rng(seed);
    return {n * block_size, [rng, block_size](std::size_t k, std::size_t i, std::size_t q) {
                const std::size_t block = (q - 1) / block_size;
                return block == i ? rng.rademacher(StreamPurpose::regressor, i, k, q) : 0.0;
            }};
}

inline Scenario build_scenario(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t horizon) {
    const CounterRng rng(seed);
    const NoiseModel noise = cfg.noise();
    const auto [delta, L] = cfg.certified();
    ParameterField theta = scenario_field(cfg);
    const double sigma = cfg.input_sigma;

    if (cfg.scenario == "arx") {
        Trajectory traj = simulate_arx(scenario_arx_coefficients(cfg), gaussian_input(seed, sigma, cfg.l), noise,
                                       cfg.n, horizon, seed);
        return {cfg.scenario, std::move(theta), std::move(traj), cfg.graph(), delta, L};
    }

    ExogenousStream stream;
    if (cfg.scenario == "block_excitation") {
        stream = block_excitation_stream(cfg.n, cfg.block_size, seed);
    } else if (cfg.scenario == "exogenous_bounded") {
        stream = {exogenous_budget(cfg, theta), [rng, sigma](std::size_t k, std::size_t i, std::size_t q) {
                      return sigma * (2.0 * rng.uniform(StreamPurpose::regressor, i, k, q) - 1.0);
                  }};
    } else if (cfg.scenario == "hidden_layer") {
        // Fixed hidden layer u_q = tanh(a_q^T x + c_q) over Gaussian features x.
        const std::size_t f = cfg.hidden_features;
        stream = {exogenous_budget(cfg, theta), [rng, sigma, f](std::size_t k, std::size_t i, std::size_t q) {
                      double z = rng.gaussian(StreamPurpose::hidden_layer, 1, q, 0);
                      for (std::size_t j = 0; j < f; ++j)
                          z += rng.gaussian(StreamPurpose::hidden_layer, 0, q, j) / std::sqrt(double(f)) * sigma *
                               rng.gaussian(StreamPurpose::regressor, i, k, j);
                      return std::tanh(z);
                  }};
    } else {  // exogenous_gaussian, finite_exact
        stream = {exogenous_budget(cfg, theta), [rng, sigma](std::size_t k, std::size_t i, std::size_t q) {
                      return sigma * rng.gaussian(StreamPurpose::regressor, i, k, q);
                  }};
    }
    Trajectory traj = simulate_exogenous(stream, theta, noise, cfg.n, horizon, seed);
    return {cfg.scenario, std::move(theta), std::move(traj), cfg.graph(), delta, L};
}

inline Trajectory::Layout scenario_layout(const ExperimentConfig& cfg) {
    return cfg.scenario == "arx" ? Trajectory::Layout::arx : Trajectory::Layout::exogenous;
}

}  // namespace dilute_rls
