#pragma once

// Distributed RLS with increasing regressor dimensions.
//
// Every agent runs a local RLS update on its own sample (Step 1) and then
// takes a convex combination of its neighbours' information matrices and
// information-weighted estimates (Step 2). The information matrix P^{-1} is
// the primary state; the covariance P is refreshed once per combination.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dilute_rls/errors.hpp"
#include "dilute_rls/graph.hpp"
#include "dilute_rls/model.hpp"
#include "dilute_rls/numerics.hpp"
#include "dilute_rls/parallel.hpp"

namespace dilute_rls {

struct AgentEstimate {
    DenseMatrix theta;  // p x m
    SpdMatrix info;     // P^{-1}
    SpdMatrix cov;      // P

    std::size_t p() const noexcept { return std::size_t(theta.rows()); }
    std::size_t m() const noexcept { return std::size_t(theta.cols()); }

    /// Theta_0 = init (zero by default), P_0 = beta I.
    static AgentEstimate initial(std::size_t p, std::size_t m, double beta,
                                 const std::optional<DenseMatrix>& init = std::nullopt) {
        require(beta > 0.0, "AgentEstimate::initial: beta must be positive");
        require(p >= 1 && m >= 1, "AgentEstimate::initial: p and m must be >= 1");
        AgentEstimate est;
        est.theta = DenseMatrix::Zero(Eigen::Index(p), Eigen::Index(m));
        if (init) {
            require(init->rows() == Eigen::Index(p) && init->cols() == Eigen::Index(m),
                    "AgentEstimate::initial: initial estimate has wrong shape");
            est.theta = *init;
        }
        est.info = SpdMatrix::identity(Eigen::Index(p), 1.0 / beta);
        est.cov = SpdMatrix::identity(Eigen::Index(p), beta);
        return est;
    }
};

/// Output of Step 1 for one agent.
struct LocalUpdate {
    DenseMatrix theta_bar;
    SpdMatrix info_bar;  // P^{-1} + phi phi^T
    SpdMatrix cov_bar;   // (P^{-1} + phi phi^T)^{-1}
    double b = 1.0;
    double innovation_norm = 0.0;
};

inline LocalUpdate local_update(const AgentEstimate& est, const Vector& phi, const Vector& y_next) {
    require(std::size_t(phi.size()) == est.p(), "local_update: regressor dimension mismatch");
    require(std::size_t(y_next.size()) == est.m(), "local_update: observation dimension mismatch");
    const Eigen::RowVectorXd innovation = y_next.transpose() - phi.transpose() * est.theta;
    require(innovation.allFinite(), "local_update: non-finite innovation");

    DowndateResult down = sherman_morrison_downdate(est.cov, phi);
    const Vector p_phi = est.cov.matrix() * phi;
    LocalUpdate out;
    out.b = down.b;
    out.innovation_norm = innovation.norm();
    out.theta_bar = est.theta;
    out.theta_bar.noalias() += (down.b * p_phi) * innovation;
    DenseMatrix info_bar = est.info.matrix();
    info_bar.noalias() += phi * phi.transpose();
    out.info_bar = SpdMatrix(std::move(info_bar));
    out.cov_bar = std::move(down.p_bar);
    return out;
}

struct NeighborTerm {
    double weight = 0.0;
    const LocalUpdate* update = nullptr;
};

inline constexpr double kWeightSumTolerance = 1e-12;

/// Step 2: info = sum a_ij info_bar_j, theta = info^{-1} sum a_ij info_bar_j theta_bar_j.
inline AgentEstimate combine(std::span<const NeighborTerm> neighbors) {
    require(!neighbors.empty(), "combine: no neighbours");
    double total = 0.0;
    const NeighborTerm* sole = nullptr;
    std::size_t positive = 0;
    for (const NeighborTerm& nb : neighbors) {
        require(nb.update != nullptr, "combine: missing neighbour update");
        require(nb.weight >= 0.0 && std::isfinite(nb.weight), "combine: weights must be finite and non-negative");
        require(nb.update->theta_bar.rows() == neighbors.front().update->theta_bar.rows() &&
                    nb.update->theta_bar.cols() == neighbors.front().update->theta_bar.cols(),
                "combine: neighbour dimensions differ");
        total += nb.weight;
        if (nb.weight > 0.0) {
            sole = &nb;
            ++positive;
        }
    }
    require(std::abs(total - 1.0) <= kWeightSumTolerance, "combine: weights must sum to one");

    if (positive == 1 && sole->weight == 1.0) {
        return {sole->update->theta_bar, sole->update->info_bar, sole->update->cov_bar};
    }
    const Eigen::Index p = neighbors.front().update->theta_bar.rows();
    const Eigen::Index m = neighbors.front().update->theta_bar.cols();
    DenseMatrix info = DenseMatrix::Zero(p, p);
    DenseMatrix rhs = DenseMatrix::Zero(p, p + m);
    for (const NeighborTerm& nb : neighbors) {
        if (nb.weight == 0.0) continue;
        info.noalias() += nb.weight * nb.update->info_bar.matrix();
        rhs.leftCols(m).noalias() += nb.weight * (nb.update->info_bar.matrix() * nb.update->theta_bar);
    }
    rhs.rightCols(p).setIdentity();
    SpdMatrix info_spd(std::move(info));
    const DenseMatrix solved = spd_solve(info_spd, rhs);
    DenseMatrix cov = solved.rightCols(p);
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {solved.leftCols(m), std::move(info_spd), SpdMatrix(std::move(cov))};
}

/// One-step-ahead prediction yhat_{k+1}^T = phi^T Theta.
inline Vector predict(const AgentEstimate& est, const Vector& phi) {
    require(std::size_t(phi.size()) == est.p(), "predict: regressor dimension mismatch");
    return est.theta.transpose() * phi;
}

// ---------------------------------------------------------------------------
// Fixed-horizon runs

struct NetworkRunState {
    std::size_t k = 0;
    std::size_t horizon = 0;
    std::size_t p = 0;
    std::vector<AgentEstimate> estimates;
    DenseMatrix graph;  // A_k in force for the step out of k (empty at the final step)
};

/// Per-(k, i) scalars. Row k describes the state at k and the step out of it;
/// the final row (k = horizon) has no step, so b and innovation are NaN.
struct StepAudit {
    std::size_t k = 0;
    std::size_t i = 0;
    double frobenius_error = std::numeric_limits<double>::quiet_NaN();
    double b = std::numeric_limits<double>::quiet_NaN();
    double innovation_norm = std::numeric_limits<double>::quiet_NaN();
    double lambda_min_info = std::numeric_limits<double>::quiet_NaN();
};

/// Read-only view of one completed step, handed to run observers.
struct StepView {
    std::size_t k;
    std::size_t p;
    const std::vector<AgentEstimate>& before;
    const std::vector<LocalUpdate>& local;
    const std::vector<AgentEstimate>& after;
    const DenseMatrix& graph;
    const std::vector<Vector>& phi;
};

struct RunOptions {
    /// Store full NetworkRunState snapshots every `state_stride` steps (and the last).
    bool keep_states = false;
    std::size_t state_stride = 1;
    /// Ground truth for the frobenius_error column.
    const ParameterField* truth = nullptr;
    bool compute_lambda_min = false;
    std::optional<DenseMatrix> init_theta;
    std::function<void(const StepView&)> observer;
};

struct RunRecord {
    std::size_t horizon = 0;
    std::size_t p = 0;
    std::size_t n = 0;
    std::vector<StepAudit> audits;
    std::vector<NetworkRunState> snapshots;
    NetworkRunState final_state;
};

namespace detail {

inline void record_state_audits(RunRecord& rec, std::size_t k, const std::vector<AgentEstimate>& est,
                                const RunOptions& opt, const DenseMatrix* truth_p) {
    for (std::size_t i = 0; i < est.size(); ++i) {
        StepAudit a;
        a.k = k;
        a.i = i;
        if (truth_p) a.frobenius_error = (*truth_p - est[i].theta).norm();
        if (opt.compute_lambda_min) a.lambda_min_info = lambda_min(est[i].info.matrix());
        rec.audits.push_back(a);
    }
}

}  // namespace detail

/// Algorithm steps k = 0..t-1 at the fixed dimension p_t.
inline RunRecord run_horizon(const Trajectory& traj, const GraphSequence& seq, const DimensionSchedule& sched,
                             double beta, std::size_t t, const RunOptions& opt = {}) {
    require(beta > 0.0, "run_horizon: beta must be positive");
    require(t <= traj.horizon(), "run_horizon: horizon exceeds trajectory length");
    require(seq.n() == traj.n(), "run_horizon: graph and trajectory disagree on agent count");
    require(opt.state_stride >= 1, "run_horizon: state_stride must be >= 1");
    const std::size_t n = traj.n();
    const std::size_t m = traj.m();
    const std::size_t p = sched.evaluate(t);

    RunRecord rec;
    rec.horizon = t;
    rec.p = p;
    rec.n = n;
    std::optional<DenseMatrix> truth_p;
    if (opt.truth) truth_p = opt.truth->truncated(p);

    std::vector<AgentEstimate> est(n, AgentEstimate::initial(p, m, beta, opt.init_theta));
    std::vector<AgentEstimate> next(n);
    std::vector<LocalUpdate> local(n);
    std::vector<Vector> phi(n, Vector(Eigen::Index(p)));
    std::vector<NeighborTerm> terms;
    terms.reserve(n);

    for (std::size_t k = 0; k < t; ++k) {
        const WeightedDigraph g = seq.at(k);
        const DenseMatrix& a = g.weights();
        for (std::size_t i = 0; i < n; ++i) {
            traj.fill_truncated(k, i, phi[i]);
            local[i] = local_update(est[i], phi[i], Vector(traj.y(k + 1, i)));
        }
        for (std::size_t i = 0; i < n; ++i) {
            // Agents with identical weight rows receive identical combinations.
            std::size_t twin = i;
            for (std::size_t r = 0; r < i && twin == i; ++r)
                if (a.row(Eigen::Index(r)) == a.row(Eigen::Index(i))) twin = r;
            if (twin != i) {
                next[i] = next[twin];
                continue;
            }
            terms.clear();
            for (std::size_t j = 0; j < n; ++j) {
                const double w = a(Eigen::Index(i), Eigen::Index(j));
                if (w > 0.0) terms.push_back({w, &local[j]});
            }
            next[i] = combine(terms);
        }

        if (opt.keep_states && k % opt.state_stride == 0) rec.snapshots.push_back({k, t, p, est, a});
        detail::record_state_audits(rec, k, est, opt, truth_p ? &*truth_p : nullptr);
        for (std::size_t i = 0; i < n; ++i) {
            StepAudit& row = rec.audits[rec.audits.size() - n + i];
            row.b = local[i].b;
            row.innovation_norm = local[i].innovation_norm;
        }
        if (opt.observer) opt.observer(StepView{k, p, est, local, next, a, phi});
        std::swap(est, next);
    }
    detail::record_state_audits(rec, t, est, opt, truth_p ? &*truth_p : nullptr);
    rec.final_state = {t, t, p, est, DenseMatrix()};
    if (opt.keep_states) rec.snapshots.push_back(rec.final_state);
    return rec;
}

/// Direct minimiser of the local cost: the independent oracle for run_horizon (zero init).
inline DenseMatrix closed_form_estimate(const Trajectory& traj, const GraphSequence& seq, std::size_t i,
                                        std::size_t t, double beta, const DimensionSchedule& sched) {
    require(t >= 1, "closed_form_estimate: t must be >= 1");
    require(beta > 0.0, "closed_form_estimate: beta must be positive");
    require(t <= traj.horizon() && i < traj.n() && seq.n() == traj.n(), "closed_form_estimate: index out of range");
    const std::size_t p = sched.evaluate(t);
    const auto pi = Eigen::Index(p);
    DenseMatrix info = DenseMatrix::Identity(pi, pi) / beta;
    DenseMatrix rhs = DenseMatrix::Zero(pi, Eigen::Index(traj.m()));
    for (std::size_t l = 0; l < t; ++l) {
        const DenseMatrix prod = adjacency_product(seq, t - 1, l);
        for (std::size_t j = 0; j < traj.n(); ++j) {
            const double a = prod(Eigen::Index(i), Eigen::Index(j));
            if (a == 0.0) continue;
            const Vector phi = traj.truncated(l, j, p);
            info.noalias() += a * (phi * phi.transpose());
            rhs.noalias() += a * (phi * traj.y(l + 1, j).transpose());
        }
    }
    return spd_solve(SpdMatrix(0.5 * (info + info.transpose())), rhs);
}

// ---------------------------------------------------------------------------
// Synchronized (growing-dimension) runs

struct Epoch {
    std::size_t p = 0;
    std::size_t first = 0;  // first step index k in the epoch
    std::size_t last = 0;   // last step index k in the epoch
};

/// Maximal runs of constant p_k over k = 0..t_max (k = 0 evaluates as k = 1).
inline std::vector<Epoch> partition_epochs(const DimensionSchedule& sched, std::size_t t_max) {
    std::vector<Epoch> epochs;
    for (std::size_t k = 0; k <= t_max; ++k) {
        const std::size_t p = sched.evaluate(k);
        if (!epochs.empty() && p < epochs.back().p)
            throw ContractViolation("partition_epochs: dimension schedule is decreasing");
        if (epochs.empty() || p != epochs.back().p) epochs.push_back({p, k, k});
        else epochs.back().last = k;
    }
    return epochs;
}

/// Theta_{k,i}(k) for k = 0..t_max.
struct SynchronizedRecord {
    std::vector<Epoch> epochs;
    std::vector<std::size_t> p;                    // p_k
    std::vector<std::vector<DenseMatrix>> theta;   // theta[k][i]
};

/// Epoch replay: one fixed-dimension run per distinct p, ending at the epoch's last step.
///
/// Because a run's trajectory depends on its horizon only through p_t, the
/// state at step k of a run with horizon e equals Theta_{k,i}(k) whenever
/// p_k = p_e. Epochs are independent and may run on `threads` workers.
inline SynchronizedRecord run_synchronized(const Trajectory& traj, const GraphSequence& seq,
                                           const DimensionSchedule& sched, double beta, std::size_t t_max,
                                           std::size_t threads = 1) {
    require(t_max <= traj.horizon(), "run_synchronized: t_max exceeds trajectory length");
    SynchronizedRecord out;
    out.epochs = partition_epochs(sched, t_max);
    out.p.resize(t_max + 1);
    out.theta.resize(t_max + 1);
    for (const Epoch& e : out.epochs)
        for (std::size_t k = e.first; k <= e.last; ++k) out.p[k] = e.p;

    // Longest epochs first keeps workers balanced.
    std::vector<std::size_t> order(out.epochs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;

    parallel_for(order.size(), threads, [&](std::size_t idx) {
        const Epoch& e = out.epochs[order[idx]];
        RunOptions opt;
        opt.observer = [&](const StepView& v) {
            if (v.k < e.first) return;
            auto& slot = out.theta[v.k];
            slot.resize(v.before.size());
            for (std::size_t i = 0; i < v.before.size(); ++i) slot[i] = v.before[i].theta;
        };
        const RunRecord rec = run_horizon(traj, seq, DimensionSchedule::constant(e.p), beta, e.last, opt);
        auto& slot = out.theta[e.last];
        slot.resize(rec.final_state.estimates.size());
        for (std::size_t i = 0; i < slot.size(); ++i) slot[i] = rec.final_state.estimates[i].theta;
    });
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_run_record_csv(std::ostream& out, const RunRecord& rec) {
    out << "k,i,frobenius_error,b,innovation_norm,lambda_min_info\n";
    for (const StepAudit& a : rec.audits)
        out << a.k << ',' << a.i << ',' << format_double(a.frobenius_error) << ',' << format_double(a.b) << ','
            << format_double(a.innovation_norm) << ',' << format_double(a.lambda_min_info) << '\n';
}

/// Full estimate dump of the given states.
inline void write_estimates_csv(std::ostream& out, std::span<const NetworkRunState> states) {
    out << "k,i,row,col,value\n";
    for (const NetworkRunState& s : states)
        for (std::size_t i = 0; i < s.estimates.size(); ++i) {
            const DenseMatrix& th = s.estimates[i].theta;
            for (Eigen::Index r = 0; r < th.rows(); ++r)
                for (Eigen::Index c = 0; c < th.cols(); ++c)
                    out << s.k << ',' << i << ',' << r << ',' << c << ',' << format_double(th(r, c)) << '\n';
        }
}

}  // namespace dilute_rls
