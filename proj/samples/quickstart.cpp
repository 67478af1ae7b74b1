// Estimate an ARX(inf) system over a four-agent gossip ring with a growing regressor dimension.
#include <iostream>

#include "dilute_rls/dilute_rls.hpp"

using namespace dilute_rls;

int main() {
    const std::size_t n = 4, horizon = 2000;
    const auto coefficients = ArxCoefficients::geometric(/*m=*/1, /*l=*/1, /*a_c=*/0.3, /*a_rho=*/0.5,
                                                         /*b_c=*/1.0, /*b_rho=*/0.5);
    const Trajectory traj = simulate_arx(coefficients, gaussian_input(/*seed=*/11, 1.0, 1),
                                         NoiseModel::gaussian(0.1), n, horizon, /*seed=*/11);
    const ParameterField truth = arx_parameter_field(coefficients);
    const GraphSequence graph = gossip_ring(n);
    const DimensionSchedule sched = DimensionSchedule::polylog(2.0);

    for (std::size_t t : {100, 500, 2000}) {
        const RunRecord rec = run_horizon(traj, graph, sched, /*beta=*/1.0, t);
        std::cout << "t=" << t << " p_t=" << rec.p;
        for (std::size_t i = 0; i < n; ++i)
            std::cout << " err" << i << "=" << estimation_error_sq(rec.final_state.estimates[i].theta, truth);
        std::cout << '\n';
    }

    const SynchronizedRecord sync = run_synchronized(traj, graph, sched, 1.0, horizon);
    const RegretSeries regret = regret_synchronized(traj, truth, sync, horizon);
    std::cout << "averaged synchronized regret at t=" << horizon << ": " << regret.averaged(horizon) << '\n';
}
