#pragma once

// Test-only oracles. Each one is written from the defining formula with plain
// loops, so it shares no linear-algebra code with the library under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dilute_rls/dilute_rls.hpp"

namespace oracle {

using dilute_rls::DenseMatrix;
using dilute_rls::Vector;

/// Inverse by Gauss-Jordan elimination with partial pivoting.
inline DenseMatrix gauss_jordan_inverse(const DenseMatrix& a) {
    const Eigen::Index n = a.rows();
    std::vector<std::vector<double>> m(std::size_t(n), std::vector<double>(std::size_t(2 * n), 0.0));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) m[std::size_t(i)][std::size_t(j)] = a(i, j);
        m[std::size_t(i)][std::size_t(n + i)] = 1.0;
    }
    for (std::size_t c = 0; c < std::size_t(n); ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < std::size_t(n); ++r)
            if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        if (m[piv][c] == 0.0) throw std::runtime_error("gauss_jordan_inverse: singular");
        std::swap(m[piv], m[c]);
        const double d = m[c][c];
        for (double& v : m[c]) v /= d;
        for (std::size_t r = 0; r < std::size_t(n); ++r) {
            if (r == c || m[r][c] == 0.0) continue;
            const double f = m[r][c];
            for (std::size_t j = 0; j < std::size_t(2 * n); ++j) m[r][j] -= f * m[c][j];
        }
    }
    DenseMatrix inv(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) inv(i, j) = m[std::size_t(i)][std::size_t(n + j)];
    return inv;
}

inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c = DenseMatrix::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

/// Extreme eigenvalues of a symmetric 3x3 matrix: roots of the characteristic
/// polynomial, bracketed on the Gershgorin interval and refined by bisection.
inline std::pair<double, double> char_poly_extremes3(const DenseMatrix& a) {
    const double tr = a(0, 0) + a(1, 1) + a(2, 2);
    const double minors = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0) +
                          a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    const double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                       a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                       a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    auto f = [&](double x) { return ((x - tr) * x + minors) * x - det; };
    double lo = INFINITY, hi = -INFINITY;
    for (int i = 0; i < 3; ++i) {
        double r = 0.0;
        for (int j = 0; j < 3; ++j)
            if (j != i) r += std::abs(a(i, j));
        lo = std::min(lo, a(i, i) - r);
        hi = std::max(hi, a(i, i) + r);
    }
    lo -= 1.0;
    hi += 1.0;
    auto bisect = [&](double x0, double x1) {
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (x0 + x1);
            if ((f(x0) < 0) == (f(mid) < 0)) x0 = mid;
            else x1 = mid;
        }
        return 0.5 * (x0 + x1);
    };
    std::vector<double> roots;
    const int grid = 20000;
    double prev = lo;
    for (int g = 1; g <= grid; ++g) {
        const double x = lo + (hi - lo) * g / grid;
        if (f(prev) == 0.0) roots.push_back(prev);
        else if ((f(prev) < 0) != (f(x) < 0)) roots.push_back(bisect(prev, x));
        prev = x;
    }
    if (roots.empty()) throw std::runtime_error("char_poly_extremes3: no root bracketed");
    return {roots.front(), roots.back()};
}

/// Single-agent regularized RLS in covariance form, written out with scalar loops.
/// phis[k] (p) and ys[k] (m) are the regressor at k and the observation at k+1.
inline DenseMatrix standalone_rls(const std::vector<Vector>& phis, const std::vector<Vector>& ys, double beta) {
    const std::size_t p = std::size_t(phis.front().size()), m = std::size_t(ys.front().size());
    std::vector<std::vector<double>> P(p, std::vector<double>(p, 0.0)), th(p, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < p; ++i) P[i][i] = beta;
    for (std::size_t k = 0; k < phis.size(); ++k) {
        std::vector<double> pphi(p, 0.0);
        double quad = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) pphi[i] += P[i][j] * phis[k][Eigen::Index(j)];
            quad += phis[k][Eigen::Index(i)] * pphi[i];
        }
        const double denom = 1.0 + quad;
        for (std::size_t c = 0; c < m; ++c) {
            double innov = ys[k][Eigen::Index(c)];
            for (std::size_t i = 0; i < p; ++i) innov -= phis[k][Eigen::Index(i)] * th[i][c];
            for (std::size_t i = 0; i < p; ++i) th[i][c] += pphi[i] * innov / denom;
        }
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) P[i][j] -= pphi[i] * pphi[j] / denom;
    }
    DenseMatrix out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t c = 0; c < m; ++c) out(Eigen::Index(i), Eigen::Index(c)) = th[i][c];
    return out;
}

/// argmin sum ||y - Theta^T phi||^2 + tr(Theta^T Theta) / beta, by normal equations.
inline DenseMatrix batch_ridge(const std::vector<Vector>& phis, const std::vector<Vector>& ys, double beta) {
    const Eigen::Index p = phis.front().size(), m = ys.front().size();
    DenseMatrix g = DenseMatrix::Zero(p, p), r = DenseMatrix::Zero(p, m);
    for (std::size_t k = 0; k < phis.size(); ++k)
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) g(i, j) += phis[k][i] * phis[k][j];
            for (Eigen::Index c = 0; c < m; ++c) r(i, c) += phis[k][i] * ys[k][c];
        }
    for (Eigen::Index i = 0; i < p; ++i) g(i, i) += 1.0 / beta;
    return multiply(gauss_jordan_inverse(g), r);
}

// ---------------------------------------------------------------------------
// Random instances

inline DenseMatrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> nd;
    DenseMatrix a(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
    return a;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

/// B B^T / dim + shift I, symmetric to the last bit.
inline DenseMatrix random_spd(std::mt19937_64& rng, Eigen::Index dim, double shift = 0.5) {
    const DenseMatrix b = random_matrix(rng, dim, dim);
    DenseMatrix s = multiply(b, b.transpose()) / double(dim);
    for (Eigen::Index i = 0; i < dim; ++i) s(i, i) += shift;
    return 0.5 * (s + s.transpose());
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
inline DenseMatrix random_orthogonal(std::mt19937_64& rng, Eigen::Index dim) {
    DenseMatrix q = random_matrix(rng, dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        for (Eigen::Index k = 0; k < j; ++k) q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
        q.col(j) /= q.col(j).norm();
    }
    return q;
}

/// Doubly stochastic matrix with positive diagonal: a convex mix of the identity and random permutations.
inline DenseMatrix random_doubly_stochastic(std::mt19937_64& rng, std::size_t n, std::size_t terms = 3) {
    std::uniform_real_distribution<double> ud(0.2, 1.0);
    std::vector<double> w{ud(rng)};
    std::vector<std::vector<std::size_t>> perms{{}};
    for (std::size_t t = 0; t < terms; ++t) {
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        perms.push_back(perm);
        w.push_back(ud(rng));
    }
    double total = 0.0;
    for (double x : w) total += x;
    DenseMatrix a = DenseMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
    for (std::size_t t = 0; t < perms.size(); ++t)
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = t == 0 ? i : perms[t][i];
            a(Eigen::Index(i), Eigen::Index(j)) += w[t] / total;
        }
    return a;
}

/// Exogenous trajectory with Gaussian regressors over `budget` components and a random finite field.
struct RandomInstance {
    dilute_rls::ParameterField theta;
    dilute_rls::Trajectory traj;
};

inline RandomInstance random_exogenous(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t budget,
                                       std::size_t horizon, double noise_sigma) {
    std::mt19937_64 rng(seed);
    std::vector<Vector> rows;
    for (std::size_t q = 0; q < budget; ++q) rows.push_back(random_vector(rng, Eigen::Index(m)) / double(q + 1));
    auto theta = dilute_rls::ParameterField::finite_support(rows);
    const dilute_rls::CounterRng crng(seed);
    dilute_rls::ExogenousStream stream{budget, [crng](std::size_t k, std::size_t i, std::size_t q) {
                                           return crng.gaussian(dilute_rls::StreamPurpose::regressor, i, k, q);
                                       }};
    auto traj = dilute_rls::simulate_exogenous(stream, theta, dilute_rls::NoiseModel::gaussian(noise_sigma), n,
                                               horizon, seed);
    return {std::move(theta), std::move(traj)};
}

/// Every built-in generator at agent count n (metropolis on a path graph).
inline std::vector<dilute_rls::GraphSequence> builtin_generators(std::size_t n) {
    std::vector<dilute_rls::UndirectedEdge> path;
    for (std::size_t i = 0; i + 1 < n; ++i) path.emplace_back(i, i + 1);
    std::vector<dilute_rls::WeightedDigraph> period;
    for (std::size_t k = 0; k < n; ++k) period.push_back(dilute_rls::gossip_ring(n).at(n - 1 - k));
    return {dilute_rls::gossip_ring(n), dilute_rls::complete_uniform(n), dilute_rls::identity_graph(n),
            dilute_rls::metropolis_static(n, path), dilute_rls::periodic_schedule(std::move(period))};
}

inline double relative_deviation(const DenseMatrix& a, const DenseMatrix& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace oracle
