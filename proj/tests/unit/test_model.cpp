#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace dilute_rls;

namespace {

DenseMatrix scalar(double v) { return DenseMatrix::Constant(1, 1, v); }

/// Exogenous trajectory whose regressor is all ones on the first `support` components.
Trajectory ones_trajectory(const ParameterField& theta, std::size_t support, std::size_t n, std::size_t horizon) {
    return simulate_exogenous({support, [](std::size_t, std::size_t, std::size_t) { return 1.0; }}, theta,
                              NoiseModel::zero(), n, horizon, 1);
}

Trajectory random_arx(std::uint64_t seed, std::size_t n, std::size_t horizon) {
    const auto co = ArxCoefficients::geometric(2, 1, 0.3, 0.5, 1.0, 0.6);
    return simulate_arx(co, gaussian_input(seed, 1.0, 1), NoiseModel::gaussian(0.1), n, horizon, seed);
}

}  // namespace

TEST(ParameterField, GeometricRowsAndTails) {
    const auto f = ParameterField::geometric(1, 1.0, 0.5);
    EXPECT_DOUBLE_EQ(f.row(1)[0], 0.5);
    EXPECT_DOUBLE_EQ(f.row(3)[0], 0.125);
    for (std::size_t p = 0; p <= 50; ++p) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t q = 400; q > p; --q) {
            sum += f.row(q).norm();
            sq += f.row(q).squaredNorm();
        }
        EXPECT_NEAR(f.tail_norm(p), sum, 1e-12) << p;
        EXPECT_NEAR(f.tail_sq(p), sq, 1e-12) << p;
    }
}

TEST(ParameterField, TailNonIncreasingToZero) {
    const auto f = ParameterField::geometric(3, 2.0, 0.7, 5);
    double prev = INFINITY;
    for (std::size_t p = 0; p < 200; ++p) {
        EXPECT_LE(f.tail_norm(p), prev);
        prev = f.tail_norm(p);
    }
    EXPECT_LT(prev, 1e-25);
    EXPECT_NEAR(f.row(4).norm(), 2.0 * std::pow(0.7, 4), 1e-14);
}

TEST(ParameterField, FiniteSupport) {
    const auto f = ParameterField::finite_support({Vector::Constant(2, 1.0), Vector::Constant(2, 2.0)});
    EXPECT_EQ(f.support(), 2u);
    EXPECT_EQ(f.row(3), Vector::Zero(2));
    EXPECT_DOUBLE_EQ(f.tail_norm(1), std::sqrt(8.0));
    EXPECT_EQ(f.tail_norm(2), 0.0);
    EXPECT_EQ(f.tail_sq(5), 0.0);
    const DenseMatrix t = f.truncated(3);
    EXPECT_EQ(t.rows(), 3);
    EXPECT_EQ(t(1, 0), 2.0);
    EXPECT_EQ(t(2, 1), 0.0);
    EXPECT_THROW(f.row(0), ContractViolation);
    EXPECT_THROW(ParameterField::finite_support({Vector::Ones(1), Vector::Ones(2)}), ContractViolation);
}

TEST(ParameterField, ArxLayoutAlternatesAAndB) {
    const auto co = ArxCoefficients::geometric(1, 1, 0.4, 0.5, 1.0, 0.5);
    const auto f = arx_parameter_field(co);
    EXPECT_DOUBLE_EQ(f.row(1)[0], 0.2);   // A_1
    EXPECT_DOUBLE_EQ(f.row(2)[0], 0.5);   // B_1
    EXPECT_DOUBLE_EQ(f.row(3)[0], 0.1);   // A_2
    EXPECT_DOUBLE_EQ(f.row(4)[0], 0.25);  // B_2
    EXPECT_EQ(f.support(), std::nullopt);
}

TEST(Schedule, Evaluations) {
    const auto s = DimensionSchedule::polylog(2.0);
    EXPECT_EQ(s.evaluate(0), 1u);
    EXPECT_EQ(s.evaluate(1), 1u);
    EXPECT_EQ(s.evaluate(100), std::size_t(std::floor(std::pow(std::log(100.0), 2))));  // 21
    EXPECT_EQ(s.evaluate(100), 21u);
    EXPECT_EQ(s.evaluate(10000), 84u);
    EXPECT_EQ(DimensionSchedule::constant(7).evaluate(3), 7u);
    EXPECT_EQ(DimensionSchedule::poly(0.5).evaluate(100), 10u);
    EXPECT_EQ(DimensionSchedule::poly(2.0).evaluate(5), 5u);  // clamped to t
    EXPECT_EQ(DimensionSchedule::polylog(2.0, 8).evaluate(10000), 8u);
}

TEST(Schedule, NonDecreasingAndLinearlyBounded) {
    for (const auto& s : {DimensionSchedule::polylog(2.0), DimensionSchedule::polylog(3.5), DimensionSchedule::poly(0.7),
                          DimensionSchedule::poly(1.5)}) {
        std::size_t prev = 0;
        for (std::size_t t = 1; t < 5000; ++t) {
            const std::size_t p = s.evaluate(t);
            EXPECT_GE(p, prev);
            EXPECT_GE(p, 1u);
            EXPECT_LE(p, t);
            prev = p;
        }
    }
}

TEST(Schedule, SnapToBlock) {
    EXPECT_EQ(snap_to_block(7, 2), 6u);
    EXPECT_EQ(snap_to_block(1, 3), 3u);
    EXPECT_EQ(snap_to_block(9, 3), 9u);
}

TEST(Noise, Families) {
    const CounterRng rng(3);
    EXPECT_EQ(NoiseModel::zero().sample(rng, 0, 1, 3), Vector::Zero(3));
    const auto b = NoiseModel::uniform_bounded(0.2);
    double mean = 0.0;
    for (std::size_t k = 0; k < 20000; ++k) {
        const double v = b.sample(rng, 1, k, 1)[0];
        EXPECT_LE(std::abs(v), 0.2);
        mean += v / 20000.0;
    }
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_EQ(NoiseModel::gaussian(1.0).growth_rate(1), 1.0);
    EXPECT_DOUBLE_EQ(NoiseModel::gaussian(1.0).growth_rate(1000), std::log(1000.0));
    EXPECT_EQ(b.growth_rate(1000), 1.0);
}

TEST(Rng, CounterStreamsAreIndependentOfOrder) {
    const CounterRng a(42), b(42);
    const double first = a.gaussian(StreamPurpose::noise, 3, 10, 0);
    for (int i = 0; i < 100; ++i) b.gaussian(StreamPurpose::input, 1, std::size_t(i), 0);
    EXPECT_EQ(b.gaussian(StreamPurpose::noise, 3, 10, 0), first);
    EXPECT_NE(a.gaussian(StreamPurpose::noise, 3, 11, 0), first);
    double sum = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < 50000; ++k) {
        const double g = a.gaussian(StreamPurpose::regressor, 0, k, 0);
        sum += g;
        sq += g * g;
    }
    EXPECT_NEAR(sum / 50000.0, 0.0, 0.02);
    EXPECT_NEAR(sq / 50000.0, 1.0, 0.03);
}

TEST(SimulateArx, ZeroCoefficientsGiveNoise) {
    const auto co = ArxCoefficients::finite({scalar(0.0)}, {scalar(0.0)});
    const auto traj = simulate_arx(co, gaussian_input(1, 1.0, 1), NoiseModel::gaussian(1.0), 2, 30, 5);
    for (std::size_t k = 1; k <= 30; ++k)
        for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(traj.y(k, i)[0], traj.w(k, i)[0]);
    EXPECT_EQ(traj.y(0, 0)[0], 0.0);
}

TEST(SimulateArx, ZeroInputZeroNoiseStaysAtZero) {
    const auto co = ArxCoefficients::finite({scalar(0.5)}, {scalar(0.0)});
    const auto traj = simulate_arx(co, constant_input(Vector::Zero(1)), NoiseModel::zero(), 1, 20, 1);
    for (std::size_t k = 0; k <= 20; ++k) EXPECT_EQ(traj.y(k, 0)[0], 0.0);
}

TEST(SimulateArx, UnitInputThroughUnitGain) {
    const auto co = ArxCoefficients::finite({scalar(0.0)}, {scalar(1.0)});
    const auto traj = simulate_arx(co, constant_input(Vector::Ones(1)), NoiseModel::zero(), 3, 20, 1);
    for (std::size_t k = 0; k < 20; ++k)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(traj.y(k + 1, i)[0], 1.0);
}

TEST(SimulateArx, DivergenceReportsStep) {
    const auto co = ArxCoefficients::finite({scalar(3.0)}, {scalar(1.0)});
    try {
        simulate_arx(co, constant_input(Vector::Ones(1)), NoiseModel::zero(), 1, 100, 1);
        FAIL() << "expected divergence";
    } catch (const SimulationDivergence& e) {
        EXPECT_GT(e.step(), 10u);
        EXPECT_LT(e.step(), 40u);
    }
}

TEST(SimulateArx, InfiniteCoefficientsRecordCutoff) {
    const auto traj = random_arx(9, 1, 200);
    EXPECT_GT(traj.provenance().lag_cutoff, 0u);
    EXPECT_LT(traj.provenance().dropped_tail_bound, 1e-14);
}

TEST(SimulateArx, ReproducibleBitForBit) {
    EXPECT_TRUE(random_arx(4, 3, 100) == random_arx(4, 3, 100));
    EXPECT_FALSE(random_arx(4, 3, 100) == random_arx(5, 3, 100));
}

TEST(SimulateExogenous, ZeroFieldGivesNoise) {
    const auto theta = ParameterField::finite_support({Vector::Zero(2)});
    const CounterRng rng(1);
    const auto traj = simulate_exogenous(
        {3, [rng](std::size_t k, std::size_t i, std::size_t q) { return rng.gaussian(StreamPurpose::regressor, i, k, q); }},
        theta, NoiseModel::gaussian(0.5), 2, 10, 1);
    for (std::size_t k = 1; k <= 10; ++k) EXPECT_EQ(traj.y(k, 1), traj.w(k, 1));
}

TEST(SimulateExogenous, SingleComponent) {
    const auto theta = ParameterField::finite_support({Vector::Constant(1, 2.0)});
    const auto traj = ones_trajectory(theta, 1, 1, 5);
    for (std::size_t k = 1; k <= 5; ++k) EXPECT_EQ(traj.y(k, 0)[0], 2.0);
}

TEST(SimulateExogenous, BlockExcitationMatchesDotProduct) {
    const std::size_t n = 3, bs = 2;
    std::vector<Vector> rows;
    for (std::size_t q = 1; q <= n * bs; ++q) rows.push_back(Vector::Constant(1, double(q)));
    const auto theta = ParameterField::finite_support(rows);
    const auto traj = simulate_exogenous(block_excitation_stream(n, bs, 7), theta, NoiseModel::gaussian(0.1), n, 50, 7);
    for (std::size_t k = 0; k < 50; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t q = 1; q <= n * bs; ++q) {
                const double c = traj.phi_component(k, i, q);
                if ((q - 1) / bs != i) EXPECT_EQ(c, 0.0);
                else EXPECT_EQ(std::abs(c), 1.0);
                dot += c * double(q);
            }
            EXPECT_NEAR(traj.y(k + 1, i)[0], dot + traj.w(k + 1, i)[0], 1e-12);
        }
}

TEST(Residual, Examples) {
    const auto geo = ParameterField::geometric(1, 1.0, 0.5);
    const auto traj = ones_trajectory(geo, 4, 1, 3);
    EXPECT_DOUBLE_EQ(residual_eps(traj, geo, 0, 0, 2)[0], 0.1875);
    EXPECT_EQ(residual_eps(traj, geo, 0, 0, 4)[0], 0.0);
    EXPECT_EQ(residual_eps(traj, geo, 0, 0, 10)[0], 0.0);
    const auto fin = ParameterField::finite_support({Vector::Ones(1), Vector::Ones(1)});
    EXPECT_EQ(residual_eps(ones_trajectory(fin, 4, 1, 3), fin, 1, 0, 2)[0], 0.0);
}

TEST(ObserveTruncated, Examples) {
    const auto fin = ParameterField::finite_support({Vector::Constant(1, 0.5), Vector::Constant(1, -1.5)});
    const auto traj = ones_trajectory(fin, 2, 2, 4);
    const auto obs = observe_truncated(traj, fin, 2, 1, 3);
    EXPECT_EQ(obs.y_next, (fin.truncated(3).transpose() * obs.phi).eval());
    const auto zero_phi = simulate_exogenous({1, [](std::size_t, std::size_t, std::size_t) { return 0.0; }}, fin,
                                             NoiseModel::gaussian(1.0), 1, 4, 3);
    const auto z = observe_truncated(zero_phi, fin, 1, 0, 1);
    EXPECT_EQ(z.y_next, Vector(zero_phi.w(2, 0)));
    EXPECT_THROW(observe_truncated(traj, fin, 4, 0, 1), ContractViolation);
}

TEST(Decomposition, IdentityHoldsForArxAndExogenous) {
    const auto co = ArxCoefficients::geometric(2, 1, 0.3, 0.5, 1.0, 0.6);
    const auto arx_theta = arx_parameter_field(co);
    const auto arx = random_arx(3, 2, 40);
    const auto exo = oracle::random_exogenous(3, 3, 2, 7, 40, 0.3);
    for (std::size_t k = 0; k < 40; ++k)
        for (std::size_t p : {1u, 2u, 5u, 9u, 30u}) {
            for (std::size_t i = 0; i < 2; ++i) {
                const auto o = observe_truncated(arx, arx_theta, k, i, p);
                const Vector w = o.y_next - arx_theta.truncated(p).transpose() * o.phi - o.eps;
                EXPECT_LE((w - arx.w(k + 1, i)).norm(), 1e-10) << "arx k=" << k << " p=" << p;
            }
            const auto o = observe_truncated(exo.traj, exo.theta, k, 2, p);
            const Vector w = o.y_next - exo.theta.truncated(p).transpose() * o.phi - o.eps;
            EXPECT_LE((w - exo.traj.w(k + 1, 2)).norm(), 1e-10) << "exo k=" << k << " p=" << p;
        }
}

TEST(Trajectory, PrefixPropertyAndArxLayout) {
    const auto traj = random_arx(8, 2, 20);
    for (std::size_t k = 0; k <= 20; ++k) {
        const Vector big = traj.truncated(k, 1, 40);
        for (std::size_t p = 1; p <= 40; ++p) EXPECT_EQ(traj.truncated(k, 1, p), big.head(Eigen::Index(p)));
        for (std::size_t q = traj.active_support(k) + 1; q <= traj.active_support(k) + 6; ++q)
            EXPECT_EQ(traj.phi_component(k, 1, q), 0.0);
    }
    // phi_k = (y_k, u_k, y_{k-1}, u_{k-1}, ...), block width m + l = 3.
    EXPECT_EQ(traj.phi_component(5, 0, 1), traj.y(5, 0)[0]);
    EXPECT_EQ(traj.phi_component(5, 0, 2), traj.y(5, 0)[1]);
    EXPECT_EQ(traj.phi_component(5, 0, 3), traj.u(5, 0)[0]);
    EXPECT_EQ(traj.phi_component(5, 0, 4), traj.y(4, 0)[0]);
}

TEST(Trajectory, CsvRoundTrip) {
    const auto traj = random_arx(6, 2, 15);
    std::stringstream ss;
    write_trajectory_csv(ss, traj);
    const auto back = read_trajectory_csv(ss, Trajectory::Layout::arx);
    EXPECT_TRUE(back == traj);
    std::stringstream bad("k,i,kind\n");
    EXPECT_THROW(read_trajectory_csv(bad, Trajectory::Layout::arx), ContractViolation);
}
