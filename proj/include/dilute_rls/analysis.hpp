#pragma once

// Measurable quantities behind the convergence and regret results: errors,
// excitation spectra, bound ingredients, regrets and trajectory audits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dilute_rls/errors.hpp"
#include "dilute_rls/estimator.hpp"
#include "dilute_rls/format.hpp"
#include "dilute_rls/graph.hpp"
#include "dilute_rls/model.hpp"
#include "dilute_rls/numerics.hpp"

namespace dilute_rls {

// ---------------------------------------------------------------------------
// Estimation error

/// ||Theta_hat - Theta||^2 with Theta_hat padded by zero rows. Frobenius form by
/// default; `spectral` returns the squared operator norm instead.
inline double estimation_error_sq(const DenseMatrix& estimate, const ParameterField& theta, bool spectral = false) {
    require(std::size_t(estimate.cols()) == theta.m(), "estimation_error_sq: column count mismatch");
    const std::size_t p = std::size_t(estimate.rows());
    const DenseMatrix head = theta.truncated(p) - estimate;
    if (!spectral) return head.squaredNorm() + theta.tail_sq(p);
    // Rows below the tail cutoff are negligible at double precision.
    const std::size_t last = std::max(p, theta.cutoff(1e-300));
    DenseMatrix full(Eigen::Index(last), Eigen::Index(theta.m()));
    full.topRows(Eigen::Index(p)) = -head;
    for (std::size_t q = p + 1; q <= last; ++q) full.row(Eigen::Index(q - 1)) = theta.row(q).transpose();
    const double s = lambda_max(full.transpose() * full);
    return std::max(0.0, s);
}

// ---------------------------------------------------------------------------
// Gram matrices and bound ingredients

/// sum over agents in [agent_first, agent_last] and k in [0, k_end) of phi phi^T, at dimension p.
inline DenseMatrix regressor_gram(const Trajectory& traj, std::size_t p, std::size_t k_end, std::size_t agent_first,
                                  std::size_t agent_last) {
    require(k_end <= traj.horizon() + 1, "regressor_gram: k range exceeds trajectory");
    DenseMatrix gram = DenseMatrix::Zero(Eigen::Index(p), Eigen::Index(p));
    Vector phi(static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < k_end; ++k)
        for (std::size_t i = agent_first; i <= agent_last; ++i) {
            traj.fill_truncated(k, i, phi);
            gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
        }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    return gram;
}

struct LambdaMinT {
    double value = 0.0;
    bool floored = false;  // t <= nL + 2: the sum is empty and the prior floor 1/beta is returned
};

/// lambda_min(sum_i sum_{k=0}^{t-nL-2} phi phi^T + I / beta) at dimension p_t.
inline LambdaMinT lambda_min_t(const Trajectory& traj, std::size_t t, std::size_t L, double beta,
                               const DimensionSchedule& sched) {
    require(beta > 0.0 && L >= 1, "lambda_min_t: beta must be positive and L >= 1");
    require(t <= traj.horizon(), "lambda_min_t: t exceeds trajectory");
    const std::size_t offset = traj.n() * L + 2;
    if (t <= offset) return {1.0 / beta, true};
    const std::size_t p = sched.evaluate(t);
    DenseMatrix gram = regressor_gram(traj, p, t - offset + 1, 0, traj.n() - 1);
    gram.diagonal().array() += 1.0 / beta;
    return {lambda_min(gram), false};
}

/// 1 + sum_i sum_{k<t} ||phi_{k,i}(p_t)||^2.
inline double r_t(const Trajectory& traj, std::size_t t, const DimensionSchedule& sched) {
    require(t >= 1 && t <= traj.horizon(), "r_t: t out of range");
    const std::size_t p = sched.evaluate(t);
    double sum = 1.0;
    Vector phi(static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < t; ++k)
        for (std::size_t i = 0; i < traj.n(); ++i) {
            traj.fill_truncated(k, i, phi);
            sum += phi.squaredNorm();
        }
    return sum;
}

/// sum_i sum_{k<t} ||eps_{k,i}(p_t)||^2.
inline double s_t(const Trajectory& traj, const ParameterField& theta, std::size_t t, const DimensionSchedule& sched) {
    require(t >= 1 && t <= traj.horizon(), "s_t: t out of range");
    const std::size_t p = sched.evaluate(t);
    double sum = 0.0;
    for (std::size_t k = 0; k < t; ++k)
        for (std::size_t i = 0; i < traj.n(); ++i) sum += residual_eps(traj, theta, k, i, p).squaredNorm();
    return sum;
}

/// (sum_{q > p_t} ||Theta^[q]||)^2.
inline double gamma_t(const ParameterField& theta, std::size_t t, const DimensionSchedule& sched) {
    require(t >= 1, "gamma_t: t must be >= 1");
    const double tail = theta.tail_norm(sched.evaluate(t));
    return tail * tail;
}

/// d(t) = (sum_i d_i(t)^2)^{1/2} with identical noise laws across agents.
inline double d_t(const NoiseModel& noise, std::size_t n, std::size_t t) {
    require(t >= 1, "d_t: t must be >= 1");
    return std::sqrt(double(n)) * noise.growth_rate(t);
}

struct ExcitationRatios {
    double coop = 0.0;
    std::vector<double> noncoop;
    LambdaMinT lambda_min_network;
    std::vector<double> lambda_min_local;
};

/// coop = p_t log t / lambda_min(t); noncoop_i = p_t log t / lambda_min(sum_k phi_i phi_i^T + I / beta).
inline ExcitationRatios excitation_ratios(const Trajectory& traj, std::size_t t, std::size_t L, double beta,
                                          const DimensionSchedule& sched) {
    require(t >= 2, "excitation_ratios: t must be >= 2");
    const std::size_t p = sched.evaluate(t);
    const double num = double(p) * std::log(double(t));
    ExcitationRatios out;
    out.lambda_min_network = lambda_min_t(traj, t, L, beta, sched);
    out.coop = num / out.lambda_min_network.value;
    for (std::size_t i = 0; i < traj.n(); ++i) {
        DenseMatrix gram = regressor_gram(traj, p, t, i, i);
        gram.diagonal().array() += 1.0 / beta;
        const double lm = lambda_min(gram);
        out.lambda_min_local.push_back(lm);
        out.noncoop.push_back(num / lm);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Regret

/// Per-(k, i) regret terms, k-major over k = 0..t-1.
struct RegretSeries {
    std::size_t n = 0;
    std::vector<double> regret;         // ||phi^T Theta_tilde + eps^T||^2
    std::vector<double> prediction_sq;  // ||phi^T Theta_tilde||^2
    std::vector<double> residual_sq;    // ||eps||^2

    std::size_t steps() const noexcept { return n == 0 ? 0 : regret.size() / n; }
    /// sum_i sum_{k < t} R_{k,i}.
    double accumulated(std::size_t t) const {
        require(t <= steps(), "RegretSeries::accumulated: t out of range");
        double sum = 0.0;
        for (std::size_t idx = 0; idx < t * n; ++idx) sum += regret[idx];
        return sum;
    }
    double averaged(std::size_t t) const {
        require(t >= 1, "RegretSeries::averaged: t must be >= 1");
        return accumulated(t) / double(t);
    }
    double accumulated_prediction_sq() const {
        double s = 0.0;
        for (double v : prediction_sq) s += v;
        return s;
    }
    double accumulated_residual_sq() const {
        double s = 0.0;
        for (double v : residual_sq) s += v;
        return s;
    }
};

namespace detail {

/// Caches Theta(p) per dimension.
class TruthCache {
public:
    explicit TruthCache(const ParameterField& theta) : theta_(theta) {}
    const DenseMatrix& at(std::size_t p) {
        auto it = cache_.find(p);
        if (it == cache_.end()) it = cache_.emplace(p, theta_.truncated(p)).first;
        return it->second;
    }

private:
    const ParameterField& theta_;
    std::map<std::size_t, DenseMatrix> cache_;
};

inline void push_regret(RegretSeries& out, const Trajectory& traj, const ParameterField& theta, TruthCache& truth,
                        std::size_t k, std::size_t i, const DenseMatrix& estimate) {
    const std::size_t p = std::size_t(estimate.rows());
    const Vector phi = traj.truncated(k, i, p);
    const Vector pred = (truth.at(p) - estimate).transpose() * phi;
    const Vector eps = residual_eps(traj, theta, k, i, p);
    out.regret.push_back((pred + eps).squaredNorm());
    out.prediction_sq.push_back(pred.squaredNorm());
    out.residual_sq.push_back(eps.squaredNorm());
}

}  // namespace detail

/// R_{k,i}(t) from a run recorded with a snapshot at every step.
inline RegretSeries regret_fixed(const Trajectory& traj, const ParameterField& theta, const RunRecord& rec) {
    RegretSeries out;
    out.n = rec.n;
    detail::TruthCache truth(theta);
    std::size_t expected = 0;
    for (const NetworkRunState& s : rec.snapshots) {
        if (s.k >= rec.horizon) break;
        require(s.k == expected, "regret_fixed: run must keep a snapshot at every step");
        for (std::size_t i = 0; i < s.estimates.size(); ++i)
            detail::push_regret(out, traj, theta, truth, s.k, i, s.estimates[i].theta);
        ++expected;
    }
    require(expected == rec.horizon, "regret_fixed: run must keep a snapshot at every step");
    return out;
}

/// R_{k,i}(t) for one fixed horizon, streamed through a run observer (no snapshots kept).
inline RegretSeries regret_fixed(const Trajectory& traj, const ParameterField& theta, const GraphSequence& seq,
                                 const DimensionSchedule& sched, double beta, std::size_t t) {
    RegretSeries out;
    out.n = traj.n();
    detail::TruthCache truth(theta);
    RunOptions opt;
    opt.observer = [&](const StepView& v) {
        for (std::size_t i = 0; i < v.before.size(); ++i)
            detail::push_regret(out, traj, theta, truth, v.k, i, v.before[i].theta);
    };
    run_horizon(traj, seq, sched, beta, t, opt);
    return out;
}

/// R_{k,i}(k) for k = 0..t-1 from a synchronized record.
inline RegretSeries regret_synchronized(const Trajectory& traj, const ParameterField& theta,
                                        const SynchronizedRecord& sync, std::size_t t) {
    require(t <= sync.theta.size(), "regret_synchronized: t exceeds the synchronized record");
    RegretSeries out;
    out.n = traj.n();
    detail::TruthCache truth(theta);
    for (std::size_t k = 0; k < t; ++k)
        for (std::size_t i = 0; i < sync.theta[k].size(); ++i)
            detail::push_regret(out, traj, theta, truth, k, i, sync.theta[k][i]);
    return out;
}

// ---------------------------------------------------------------------------
// Audits

/// Prefix-wise evaluation of the Lyapunov inequality
///   tr V_t + 1/2 sum b ||phi^T Theta_tilde||^2
///     <= tr V_0 + 4 sum ||eps||^2 - 2 sum b phi^T Theta_tilde w + 2 sum b phi^T P phi ||w||^2,
/// with V_k = sum_i Theta_tilde_i^T P^{-1}_i Theta_tilde_i.
struct Lemma3Report {
    std::vector<double> lhs;    // indexed by prefix t' = 0..t
    std::vector<double> rhs;
    std::vector<double> scale;
    double worst_relative_slack = std::numeric_limits<double>::infinity();  // min (rhs - lhs) / scale
    std::size_t worst_prefix = 0;

    bool holds(double rel_tol = 1e-7) const { return worst_relative_slack >= -rel_tol; }
};

inline Lemma3Report lemma3_audit(const RunRecord& rec, const Trajectory& traj, const ParameterField& theta) {
    require(rec.snapshots.size() == rec.horizon + 1, "lemma3_audit: run must keep a snapshot at every step");
    const std::size_t p = rec.p;
    const DenseMatrix truth = theta.truncated(p);
    auto trace_v = [&](const NetworkRunState& s) {
        double v = 0.0;
        for (const AgentEstimate& e : s.estimates) {
            const DenseMatrix err = truth - e.theta;
            v += (err.transpose() * e.info.matrix() * err).trace();
        }
        return v;
    };

    Lemma3Report rep;
    const double v0 = trace_v(rec.snapshots.front());
    double sum_pred = 0.0, sum_eps = 0.0, sum_cross = 0.0, sum_noise = 0.0;
    for (std::size_t tp = 0; tp <= rec.horizon; ++tp) {
        const NetworkRunState& s = rec.snapshots[tp];
        require(s.k == tp, "lemma3_audit: snapshots out of order");
        const double lhs = trace_v(s) + 0.5 * sum_pred;
        const double rhs = v0 + 4.0 * sum_eps - 2.0 * sum_cross + 2.0 * sum_noise;
        const double scale = 1.0 + v0 + 4.0 * sum_eps + 2.0 * std::abs(sum_cross) + 2.0 * sum_noise;
        rep.lhs.push_back(lhs);
        rep.rhs.push_back(rhs);
        rep.scale.push_back(scale);
        const double rel = (rhs - lhs) / scale;
        if (rel < rep.worst_relative_slack) {
            rep.worst_relative_slack = rel;
            rep.worst_prefix = tp;
        }
        if (tp == rec.horizon) break;
        // Accumulate the step out of tp.
        for (std::size_t i = 0; i < s.estimates.size(); ++i) {
            const AgentEstimate& e = s.estimates[i];
            const Vector phi = traj.truncated(tp, i, p);
            const double b = 1.0 / (1.0 + phi.dot(e.cov.matrix() * phi));
            const Eigen::RowVectorXd pred = phi.transpose() * (truth - e.theta);
            const Vector w = traj.w(tp + 1, i);
            sum_pred += b * pred.squaredNorm();
            sum_eps += residual_eps(traj, theta, tp, i, p).squaredNorm();
            sum_cross += b * pred.dot(w.transpose());
            sum_noise += b * phi.dot(e.cov.matrix() * phi) * w.squaredNorm();
        }
    }
    return rep;
}

/// Loewner-order checks on the stacked combination step. `stated` is
/// A^T Pbar^{-1} A <= P^{-1}_{k+1}, `transposed` is A Pbar^{-1} A^T <= P^{-1}_{k+1},
/// `covariance` is A^T P_{k+1} A <= Pbar, with A = A_k (x) I_p.
struct Lemma7Report {
    double min_slack_stated = std::numeric_limits<double>::infinity();
    double min_slack_transposed = std::numeric_limits<double>::infinity();
    double min_slack_covariance = std::numeric_limits<double>::infinity();
    std::size_t steps = 0;

    void merge(const Lemma7Report& o) {
        min_slack_stated = std::min(min_slack_stated, o.min_slack_stated);
        min_slack_transposed = std::min(min_slack_transposed, o.min_slack_transposed);
        min_slack_covariance = std::min(min_slack_covariance, o.min_slack_covariance);
        steps += o.steps;
    }
};

/// Audits one completed step; usable directly as (part of) a run observer.
inline Lemma7Report lemma7_step(const StepView& v) {
    const auto p = Eigen::Index(v.p);
    std::vector<DenseMatrix> info_bar, cov_bar, info_next, cov_next;
    for (std::size_t i = 0; i < v.local.size(); ++i) {
        info_bar.push_back(v.local[i].info_bar.matrix());
        cov_bar.push_back(v.local[i].cov_bar.matrix());
        info_next.push_back(v.after[i].info.matrix());
        cov_next.push_back(v.after[i].cov.matrix());
    }
    const DenseMatrix a = kron_identity(v.graph, p);
    const DenseMatrix ib = block_diagonal(info_bar), cb = block_diagonal(cov_bar);
    const DenseMatrix in = block_diagonal(info_next), cn = block_diagonal(cov_next);
    Lemma7Report rep;
    rep.min_slack_stated = psd_order_slack(a.transpose() * ib * a, in);
    rep.min_slack_transposed = psd_order_slack(a * ib * a.transpose(), in);
    rep.min_slack_covariance = psd_order_slack(a.transpose() * cn * a, cb);
    rep.steps = 1;
    return rep;
}

/// Runs the estimator and audits every step.
inline Lemma7Report lemma7_audit(const Trajectory& traj, const GraphSequence& seq, const DimensionSchedule& sched,
                                 double beta, std::size_t t) {
    Lemma7Report rep;
    RunOptions opt;
    opt.observer = [&](const StepView& v) { rep.merge(lemma7_step(v)); };
    run_horizon(traj, seq, sched, beta, t, opt);
    return rep;
}

/// min_i lambda_min(P^{-1}_{t,i}) against delta^{nL} lambda_min(t).
struct InfoFloorAudit {
    double min_lambda_info = 0.0;
    double bound = 0.0;
    bool floored = false;

    bool holds(double tol = 1e-9) const { return min_lambda_info >= bound - tol * std::max(1.0, bound); }
};

inline InfoFloorAudit info_floor_audit(const RunRecord& rec, const Trajectory& traj, double delta, std::size_t L,
                                       double beta, const DimensionSchedule& sched) {
    InfoFloorAudit out;
    out.min_lambda_info = std::numeric_limits<double>::infinity();
    for (const AgentEstimate& e : rec.final_state.estimates)
        out.min_lambda_info = std::min(out.min_lambda_info, lambda_min(e.info.matrix()));
    const LambdaMinT lm = lambda_min_t(traj, rec.horizon, L, beta, sched);
    out.floored = lm.floored;
    out.bound = std::pow(delta, double(rec.n * L)) * lm.value;
    return out;
}

/// max_k lambda_max(Phi_k^T P_k Phi_k) / p; Phi^T P Phi is diagonal with entries phi_i^T P_i phi_i.
inline double phi_P_phi_bound(const RunRecord& rec, const Trajectory& traj) {
    require(!rec.snapshots.empty(), "phi_P_phi_bound: run must keep snapshots");
    double worst = 0.0;
    for (const NetworkRunState& s : rec.snapshots) {
        if (s.k >= rec.horizon) continue;
        for (std::size_t i = 0; i < s.estimates.size(); ++i) {
            const Vector phi = traj.truncated(s.k, i, rec.p);
            worst = std::max(worst, phi.dot(s.estimates[i].cov.matrix() * phi));
        }
    }
    return worst / double(rec.p);
}

// ---------------------------------------------------------------------------
// Metrics table

/// Long-format metrics: one (t, agent-or-aggregate, metric, value) row each.
class MetricsTable {
public:
    static constexpr std::size_t kAggregate = std::numeric_limits<std::size_t>::max();

    struct Row {
        std::size_t t;
        std::size_t i;
        std::string metric;
        double value;
    };

    void add(std::size_t t, std::size_t i, std::string metric, double value) {
        rows_.push_back({t, i, std::move(metric), value});
    }
    void add(std::size_t t, std::string metric, double value) { add(t, kAggregate, std::move(metric), value); }

    const std::vector<Row>& rows() const noexcept { return rows_; }
    bool empty() const noexcept { return rows_.empty(); }

    /// (t, value) pairs for one metric and agent, in insertion order.
    std::vector<std::pair<double, double>> series(const std::string& metric, std::size_t i = kAggregate) const {
        std::vector<std::pair<double, double>> out;
        for (const Row& r : rows_)
            if (r.metric == metric && r.i == i) out.emplace_back(double(r.t), r.value);
        return out;
    }

    void write_csv(std::ostream& out) const {
        out << "t,i,metric,value\n";
        for (const Row& r : rows_) {
            out << r.t << ',';
            if (r.i == kAggregate) out << "all";
            else out << r.i;
            out << ',' << r.metric << ',' << format_double(r.value) << '\n';
        }
    }

    /// Last value of every aggregate metric, keyed by name.
    nlohmann::json summary() const {
        nlohmann::json j = nlohmann::json::object();
        for (const Row& r : rows_)
            if (r.i == kAggregate) j[r.metric] = std::isfinite(r.value) ? nlohmann::json(r.value) : nlohmann::json(format_double(r.value));
        return j;
    }

private:
    std::vector<Row> rows_;
};

}  // namespace dilute_rls
