// Each agent excites only its own block of coordinates: no agent can identify the
// parameter alone, but the network can.
#include <iostream>

#include "dilute_rls/dilute_rls.hpp"

using namespace dilute_rls;

int main() {
    const std::size_t n = 4, block = 2, horizon = 3000;
    std::vector<Vector> rows;
    for (std::size_t q = 1; q <= n * block; ++q) rows.push_back(Vector::Constant(1, double(q)));
    const ParameterField truth = ParameterField::finite_support(rows);
    const Trajectory traj = simulate_exogenous(block_excitation_stream(n, block, 5), truth,
                                               NoiseModel::gaussian(0.1), n, horizon, 5);
    const DimensionSchedule sched = DimensionSchedule::constant(n * block);

    for (const GraphSequence& graph : {gossip_ring(n), identity_graph(n)}) {
        const RunRecord rec = run_horizon(traj, graph, sched, 1.0, horizon);
        const ExcitationRatios ex = excitation_ratios(traj, horizon, graph.certificate().joint_L, 1.0, sched);
        std::cout << graph.name() << ": coop ratio " << ex.coop << ", agent 0 alone " << ex.noncoop[0]
                  << ", agent 0 error " << estimation_error_sq(rec.final_state.estimates[0].theta, truth) << '\n';
    }
}
