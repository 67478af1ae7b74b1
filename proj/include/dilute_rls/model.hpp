#pragma once

// Ground-truth systems: the infinite parameter field, dimension schedules,
// noise models, simulated trajectories and truncated observations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dilute_rls/errors.hpp"
#include "dilute_rls/format.hpp"
#include "dilute_rls/numerics.hpp"
#include "dilute_rls/rng.hpp"

namespace dilute_rls {

// ---------------------------------------------------------------------------
// Parameter field

/// Theta in R^{inf x m}, one row per regressor component (rows are 1-based).
class ParameterField {
public:
    using RowFn = std::function<Vector(std::size_t)>;

    /// Theta^[q] = c lambda^q v_q with unit directions v_q.
    /// Without a seed v_q = 1/sqrt(m) * ones; with a seed v_q is a random unit vector.
    static ParameterField geometric(std::size_t m, double c, double lambda,
                                    std::optional<std::uint64_t> direction_seed = std::nullopt) {
        require(m >= 1, "ParameterField::geometric: m must be >= 1");
        require(c >= 0.0 && lambda > 0.0 && lambda < 1.0, "ParameterField::geometric: need c >= 0, 0 < lambda < 1");
        ParameterField f(m, Kind::geometric);
        f.c_ = c;
        f.rho_ = lambda;
        f.row_fn_ = [m, c, lambda, direction_seed](std::size_t q) {
            Vector v(static_cast<Eigen::Index>(m));
            if (direction_seed) {
                const CounterRng rng(*direction_seed);
                for (std::size_t j = 0; j < m; ++j) v[Eigen::Index(j)] = rng.gaussian(StreamPurpose::theta, 0, q, j);
                if (v.norm() == 0.0) v.setOnes();
            } else {
                v.setOnes();
            }
            v.normalize();
            return Vector(c * std::pow(lambda, double(q)) * v);
        };
        return f;
    }

    /// Theta^[q] = rows[q-1] for q <= rows.size(), zero beyond.
    static ParameterField finite_support(std::vector<Vector> rows) {
        require(!rows.empty(), "ParameterField::finite_support: need at least one row");
        const std::size_t m = std::size_t(rows.front().size());
        require(m >= 1, "ParameterField::finite_support: rows must be non-empty");
        for (const Vector& r : rows) {
            require(std::size_t(r.size()) == m, "ParameterField::finite_support: inconsistent row width");
            require(r.allFinite(), "ParameterField::finite_support: non-finite entry");
        }
        ParameterField f(m, Kind::finite);
        f.rows_ = std::make_shared<const std::vector<Vector>>(std::move(rows));
        return f;
    }

    /// Arbitrary rows with a certified envelope ||Theta^[q]|| <= c rho^q.
    static ParameterField with_envelope(std::size_t m, RowFn rows, double c, double rho) {
        require(m >= 1, "ParameterField::with_envelope: m must be >= 1");
        require(c >= 0.0 && rho > 0.0 && rho < 1.0, "ParameterField::with_envelope: need c >= 0, 0 < rho < 1");
        ParameterField f(m, Kind::envelope);
        f.row_fn_ = std::move(rows);
        f.c_ = c;
        f.rho_ = rho;
        return f;
    }

    std::size_t m() const noexcept { return m_; }

    Vector row(std::size_t q) const {
        require(q >= 1, "ParameterField::row: rows are 1-based");
        if (kind_ == Kind::finite) {
            if (q > rows_->size()) return Vector::Zero(Eigen::Index(m_));
            return (*rows_)[q - 1];
        }
        return row_fn_(q);
    }

    /// Number of leading rows outside of which the field is zero, if finite.
    std::optional<std::size_t> support() const {
        if (kind_ == Kind::finite) return rows_->size();
        return std::nullopt;
    }

    /// Smallest Q with sum_{q > Q} ||Theta^[q]|| <= tol (certified, not estimated).
    std::size_t cutoff(double tol = kTailTolerance) const {
        if (kind_ == Kind::finite) return rows_->size();
        if (c_ == 0.0) return 0;
        // c rho^{Q+1} / (1 - rho) <= tol
        const double q = std::log(tol * (1.0 - rho_) / c_) / std::log(rho_) - 1.0;
        return std::size_t(std::max(0.0, std::ceil(q)));
    }

    /// sum_{q > p} ||Theta^[q]||.
    double tail_norm(std::size_t p) const {
        if (kind_ == Kind::geometric) return c_ * std::pow(rho_, double(p + 1)) / (1.0 - rho_);
        double sum = 0.0;
        const std::size_t last = cutoff(kSummationTolerance);
        for (std::size_t q = last; q > p; --q) sum += row(q).norm();
        return sum;
    }

    /// sum_{q > p} ||Theta^[q]||^2.
    double tail_sq(std::size_t p) const {
        if (kind_ == Kind::geometric) return c_ * c_ * std::pow(rho_, 2.0 * double(p + 1)) / (1.0 - rho_ * rho_);
        double sum = 0.0;
        const std::size_t last = cutoff(kSummationTolerance);
        for (std::size_t q = last; q > p; --q) sum += row(q).squaredNorm();
        return sum;
    }

    /// Theta(p): the first p rows stacked, p x m.
    DenseMatrix truncated(std::size_t p) const {
        DenseMatrix out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m_));
        for (std::size_t q = 1; q <= p; ++q) out.row(Eigen::Index(q - 1)) = row(q).transpose();
        return out;
    }

    static constexpr double kTailTolerance = 1e-15;
    static constexpr double kSummationTolerance = 1e-300;

private:
    enum class Kind { geometric, finite, envelope };

    ParameterField(std::size_t m, Kind kind) : m_(m), kind_(kind) {}

    std::size_t m_;
    Kind kind_;
    RowFn row_fn_;
    std::shared_ptr<const std::vector<Vector>> rows_;
    double c_ = 0.0;
    double rho_ = 0.5;
};

// ---------------------------------------------------------------------------
// ARX coefficients

/// A_q (m x m) and B_q (m x l) with a certified bound ||A_q|| + ||B_q|| <= c rho^q.
struct ArxCoefficients {
    std::size_t m = 1;
    std::size_t l = 1;
    std::function<DenseMatrix(std::size_t)> a;
    std::function<DenseMatrix(std::size_t)> b;
    std::optional<std::size_t> max_lag;
    double envelope_c = 0.0;
    double envelope_rho = 0.5;

    /// A_q = a_c a_rho^q I, B_q = b_c b_rho^q [I 0].
    static ArxCoefficients geometric(std::size_t m, std::size_t l, double a_c, double a_rho, double b_c,
                                     double b_rho) {
        require(m >= 1 && l >= 1, "ArxCoefficients::geometric: m, l must be >= 1");
        require(a_rho > 0.0 && a_rho < 1.0 && b_rho > 0.0 && b_rho < 1.0,
                "ArxCoefficients::geometric: rates must lie in (0, 1)");
        ArxCoefficients co;
        co.m = m;
        co.l = l;
        co.a = [m, a_c, a_rho](std::size_t q) {
            return DenseMatrix(DenseMatrix::Identity(Eigen::Index(m), Eigen::Index(m)) * (a_c * std::pow(a_rho, double(q))));
        };
        co.b = [m, l, b_c, b_rho](std::size_t q) {
            return DenseMatrix(DenseMatrix::Identity(Eigen::Index(m), Eigen::Index(l)) * (b_c * std::pow(b_rho, double(q))));
        };
        co.envelope_c = std::abs(a_c) + std::abs(b_c);
        co.envelope_rho = std::max(a_rho, b_rho);
        return co;
    }

    /// Finitely many lags: a_list[q-1] = A_q, b_list[q-1] = B_q.
    static ArxCoefficients finite(std::vector<DenseMatrix> a_list, std::vector<DenseMatrix> b_list) {
        require(!a_list.empty() && a_list.size() == b_list.size(), "ArxCoefficients::finite: need equal non-empty lists");
        ArxCoefficients co;
        co.m = std::size_t(a_list.front().rows());
        co.l = std::size_t(b_list.front().cols());
        for (std::size_t q = 0; q < a_list.size(); ++q) {
            require(std::size_t(a_list[q].rows()) == co.m && std::size_t(a_list[q].cols()) == co.m &&
                        std::size_t(b_list[q].rows()) == co.m && std::size_t(b_list[q].cols()) == co.l,
                    "ArxCoefficients::finite: inconsistent shapes");
        }
        const std::size_t lags = a_list.size();
        auto as = std::make_shared<const std::vector<DenseMatrix>>(std::move(a_list));
        auto bs = std::make_shared<const std::vector<DenseMatrix>>(std::move(b_list));
        const std::size_t m = co.m, l = co.l;
        co.a = [as, m](std::size_t q) {
            return q <= as->size() ? (*as)[q - 1] : DenseMatrix(DenseMatrix::Zero(Eigen::Index(m), Eigen::Index(m)));
        };
        co.b = [bs, m, l](std::size_t q) {
            return q <= bs->size() ? (*bs)[q - 1] : DenseMatrix(DenseMatrix::Zero(Eigen::Index(m), Eigen::Index(l)));
        };
        co.max_lag = lags;
        return co;
    }

    std::size_t block() const noexcept { return m + l; }
};

/// Theta^T = [A_1, B_1, A_2, B_2, ...] as a parameter field.
inline ParameterField arx_parameter_field(const ArxCoefficients& co) {
    const std::size_t d = co.block();
    auto rows = [co, d](std::size_t r) {
        const std::size_t q = (r - 1) / d + 1;
        const std::size_t o = (r - 1) % d;
        if (co.max_lag && q > *co.max_lag) return Vector(Vector::Zero(Eigen::Index(co.m)));
        if (o < co.m) return Vector(co.a(q).col(Eigen::Index(o)));
        return Vector(co.b(q).col(Eigen::Index(o - co.m)));
    };
    if (co.max_lag) {
        std::vector<Vector> list;
        for (std::size_t r = 1; r <= *co.max_lag * d; ++r) list.push_back(rows(r));
        return ParameterField::finite_support(std::move(list));
    }
    // Row r belongs to lag ceil(r/d) >= r/d, so ||Theta^[r]|| <= c (rho^{1/d})^r.
    return ParameterField::with_envelope(co.m, rows, co.envelope_c, std::pow(co.envelope_rho, 1.0 / double(d)));
}

// ---------------------------------------------------------------------------
// Dimension schedule

class DimensionSchedule {
public:
    enum class Kind { constant, poly, polylog };

    static DimensionSchedule constant(std::size_t p) {
        require(p >= 1, "DimensionSchedule::constant: p must be >= 1");
        return DimensionSchedule(Kind::constant, double(p), p);
    }
    /// p_t = floor(t^alpha), clamped to [1, t].
    static DimensionSchedule poly(double alpha, std::optional<std::size_t> cap = std::nullopt) {
        require(alpha > 0.0, "DimensionSchedule::poly: alpha must be positive");
        return DimensionSchedule(Kind::poly, alpha, 0, cap);
    }
    /// p_t = floor(log^alpha t), clamped to [1, t].
    static DimensionSchedule polylog(double alpha, std::optional<std::size_t> cap = std::nullopt) {
        require(alpha > 0.0, "DimensionSchedule::polylog: alpha must be positive");
        return DimensionSchedule(Kind::polylog, alpha, 0, cap);
    }

    Kind kind() const noexcept { return kind_; }
    double alpha() const noexcept { return alpha_; }
    std::optional<std::size_t> cap() const noexcept { return cap_; }

    /// p_t; t = 0 evaluates as t = 1.
    std::size_t evaluate(std::size_t t) const {
        t = std::max<std::size_t>(t, 1);
        double raw = 0.0;
        switch (kind_) {
            case Kind::constant: return p_;
            case Kind::poly: raw = std::floor(std::pow(double(t), alpha_)); break;
            case Kind::polylog: raw = std::floor(std::pow(std::log(double(t)), alpha_)); break;
        }
        std::size_t p = raw >= 1.0 ? std::size_t(std::min(raw, 1e15)) : 1;
        p = std::min(p, t);
        if (cap_) p = std::min(p, *cap_);
        return std::max<std::size_t>(p, 1);
    }

private:
    DimensionSchedule(Kind kind, double alpha, std::size_t p, std::optional<std::size_t> cap = std::nullopt)
        : kind_(kind), alpha_(alpha), p_(p), cap_(cap) {}

    Kind kind_;
    double alpha_;
    std::size_t p_;
    std::optional<std::size_t> cap_;
};

/// Largest multiple of `block` not exceeding p (at least one block).
inline std::size_t snap_to_block(std::size_t p, std::size_t block) {
    require(block >= 1, "snap_to_block: block must be >= 1");
    return std::max(block, p - p % block);
}

// ---------------------------------------------------------------------------
// Noise

class NoiseModel {
public:
    enum class Kind { gaussian, uniform_bounded, zero };

    static NoiseModel gaussian(double sigma) {
        require(sigma >= 0.0, "NoiseModel::gaussian: sigma must be >= 0");
        return NoiseModel(Kind::gaussian, sigma);
    }
    static NoiseModel uniform_bounded(double a) {
        require(a >= 0.0, "NoiseModel::uniform_bounded: bound must be >= 0");
        return NoiseModel(Kind::uniform_bounded, a);
    }
    static NoiseModel zero() { return NoiseModel(Kind::zero, 0.0); }

    Kind kind() const noexcept { return kind_; }
    double scale() const noexcept { return scale_; }

    Vector sample(const CounterRng& rng, std::size_t agent, std::size_t step, std::size_t m) const {
        Vector w = Vector::Zero(Eigen::Index(m));
        for (std::size_t j = 0; j < m; ++j) {
            switch (kind_) {
                case Kind::gaussian: w[Eigen::Index(j)] = scale_ * rng.gaussian(StreamPurpose::noise, agent, step, j); break;
                case Kind::uniform_bounded:
                    w[Eigen::Index(j)] = scale_ * (2.0 * rng.uniform(StreamPurpose::noise, agent, step, j) - 1.0);
                    break;
                case Kind::zero: break;
            }
        }
        return w;
    }

    /// d_i(t): log t (at least 1) for Gaussian noise, 1 for bounded noise.
    double growth_rate(std::size_t t) const {
        if (kind_ == Kind::gaussian) return std::max(1.0, std::log(double(std::max<std::size_t>(t, 1))));
        return 1.0;
    }

private:
    NoiseModel(Kind kind, double scale) : kind_(kind), scale_(scale) {}

    Kind kind_;
    double scale_;
};

// ---------------------------------------------------------------------------
// Trajectory

/// Per-agent histories y_{k,i}, w_{k,i}, u_{k,i} for 0 <= k <= horizon.
///
/// In the ARX layout phi_{k,i} = (y_k, u_k, y_{k-1}, u_{k-1}, ...), zero before time 0.
/// In the exogenous layout phi_{k,i} = u_{k,i} (l active components).
class Trajectory {
public:
    enum class Layout { arx, exogenous };

    struct Provenance {
        std::size_t lag_cutoff = 0;     // lags simulated (ARX), 0 when exact
        double dropped_tail_bound = 0;  // certified bound on dropped coefficient mass
    };

    Trajectory() = default;

    Trajectory(Layout layout, std::size_t n, std::size_t m, std::size_t l, std::size_t horizon)
        : layout_(layout), n_(n), m_(m), l_(l), horizon_(horizon),
          y_((horizon + 1) * n * m, 0.0), w_((horizon + 1) * n * m, 0.0), u_((horizon + 1) * n * l, 0.0) {
        require(n >= 1 && m >= 1, "Trajectory: n and m must be >= 1");
    }

    Layout layout() const noexcept { return layout_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t m() const noexcept { return m_; }
    std::size_t l() const noexcept { return l_; }
    std::size_t horizon() const noexcept { return horizon_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    void set_provenance(Provenance p) { provenance_ = p; }

    Eigen::Map<const Vector> y(std::size_t k, std::size_t i) const { return view(y_, k, i, m_); }
    Eigen::Map<const Vector> w(std::size_t k, std::size_t i) const { return view(w_, k, i, m_); }
    Eigen::Map<const Vector> u(std::size_t k, std::size_t i) const { return view(u_, k, i, l_); }
    Eigen::Map<Vector> y(std::size_t k, std::size_t i) { return view(y_, k, i, m_); }
    Eigen::Map<Vector> w(std::size_t k, std::size_t i) { return view(w_, k, i, m_); }
    Eigen::Map<Vector> u(std::size_t k, std::size_t i) { return view(u_, k, i, l_); }

    /// Number of leading components of phi_{k,i} that can be nonzero.
    std::size_t active_support(std::size_t k) const {
        return layout_ == Layout::arx ? (m_ + l_) * (k + 1) : l_;
    }

    /// phi^[q]_{k,i}, q >= 1.
    double phi_component(std::size_t k, std::size_t i, std::size_t q) const {
        require(q >= 1, "Trajectory::phi_component: components are 1-based");
        if (layout_ == Layout::exogenous) return q <= l_ ? u_[index(k, i, l_) + q - 1] : 0.0;
        const std::size_t d = m_ + l_;
        const std::size_t lag = (q - 1) / d;
        if (lag > k) return 0.0;
        const std::size_t o = (q - 1) % d;
        return o < m_ ? y_[index(k - lag, i, m_) + o] : u_[index(k - lag, i, l_) + o - m_];
    }

    /// First p components of phi_{k,i}.
    Vector truncated(std::size_t k, std::size_t i, std::size_t p) const {
        Vector out(static_cast<Eigen::Index>(p));
        fill_truncated(k, i, out);
        return out;
    }

    void fill_truncated(std::size_t k, std::size_t i, Eigen::Ref<Vector> out) const {
        require(k <= horizon_ && i < n_, "Trajectory::truncated: index out of range");
        const std::size_t p = std::size_t(out.size());
        if (layout_ == Layout::exogenous) {
            const std::size_t take = std::min(p, l_);
            for (std::size_t q = 0; q < take; ++q) out[Eigen::Index(q)] = u_[index(k, i, l_) + q];
            for (std::size_t q = take; q < p; ++q) out[Eigen::Index(q)] = 0.0;
            return;
        }
        const std::size_t d = m_ + l_;
        for (std::size_t q = 0; q < p; ++q) {
            const std::size_t lag = q / d;
            const std::size_t o = q % d;
            double v = 0.0;
            if (lag <= k) v = o < m_ ? y_[index(k - lag, i, m_) + o] : u_[index(k - lag, i, l_) + o - m_];
            out[Eigen::Index(q)] = v;
        }
    }

    friend bool operator==(const Trajectory& a, const Trajectory& b) {
        return a.layout_ == b.layout_ && a.n_ == b.n_ && a.m_ == b.m_ && a.l_ == b.l_ && a.horizon_ == b.horizon_ &&
               a.y_ == b.y_ && a.w_ == b.w_ && a.u_ == b.u_;
    }

private:
    std::size_t index(std::size_t k, std::size_t i, std::size_t width) const { return (k * n_ + i) * width; }

    Eigen::Map<const Vector> view(const std::vector<double>& data, std::size_t k, std::size_t i, std::size_t width) const {
        require(k <= horizon_ && i < n_, "Trajectory: index out of range");
        return Eigen::Map<const Vector>(data.data() + index(k, i, width), Eigen::Index(width));
    }
    Eigen::Map<Vector> view(std::vector<double>& data, std::size_t k, std::size_t i, std::size_t width) {
        require(k <= horizon_ && i < n_, "Trajectory: index out of range");
        return Eigen::Map<Vector>(data.data() + index(k, i, width), Eigen::Index(width));
    }

    Layout layout_ = Layout::arx;
    std::size_t n_ = 0, m_ = 0, l_ = 0, horizon_ = 0;
    std::vector<double> y_, w_, u_;
    Provenance provenance_;
};

// ---------------------------------------------------------------------------
// Simulation

using InputStream = std::function<Vector(std::size_t k, std::size_t i)>;

inline InputStream gaussian_input(std::uint64_t seed, double sigma, std::size_t l) {
    return [rng = CounterRng(seed), sigma, l](std::size_t k, std::size_t i) {
        Vector u(static_cast<Eigen::Index>(l));
        for (std::size_t j = 0; j < l; ++j) u[Eigen::Index(j)] = sigma * rng.gaussian(StreamPurpose::input, i, k, j);
        return u;
    };
}

inline InputStream constant_input(Vector value) {
    return [value = std::move(value)](std::size_t, std::size_t) { return value; };
}

inline constexpr double kDivergenceThreshold = 1e12;

/// Simulates y_{k+1,i} = sum_q (A_q y_{k+1-q,i} + B_q u_{k+1-q,i}) + w_{k+1,i}.
///
/// Lags beyond the certified cutoff (dropped coefficient mass < truncation_tol)
/// are not evaluated; the cutoff is recorded in the provenance.
inline Trajectory simulate_arx(const ArxCoefficients& co, const InputStream& input, const NoiseModel& noise,
                               std::size_t n, std::size_t horizon, std::uint64_t seed,
                               double truncation_tol = ParameterField::kTailTolerance) {
    require(truncation_tol > 0.0, "simulate_arx: truncation_tol must be positive");
    require(co.a && co.b, "simulate_arx: coefficient generators missing");
    Trajectory traj(Trajectory::Layout::arx, n, co.m, co.l, horizon);
    const CounterRng rng(seed);

    std::size_t lags = horizon;
    Trajectory::Provenance prov;
    if (co.max_lag) {
        lags = std::min(lags, *co.max_lag);
    } else if (co.envelope_c > 0.0) {
        const double rho = co.envelope_rho;
        const double q = std::log(truncation_tol * (1.0 - rho) / co.envelope_c) / std::log(rho) - 1.0;
        const std::size_t cut = std::size_t(std::max(0.0, std::ceil(q)));
        if (cut < lags) {
            lags = cut;
            prov.lag_cutoff = cut;
            prov.dropped_tail_bound = co.envelope_c * std::pow(rho, double(cut + 1)) / (1.0 - rho);
        }
    } else {
        lags = 0;
    }
    traj.set_provenance(prov);

    std::vector<DenseMatrix> a_q(lags + 1), b_q(lags + 1);
    for (std::size_t q = 1; q <= lags; ++q) {
        a_q[q] = co.a(q);
        b_q[q] = co.b(q);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k <= horizon; ++k) {
            const Vector u = input(k, i);
            require(std::size_t(u.size()) == co.l, "simulate_arx: input has wrong dimension");
            traj.u(k, i) = u;
        }
    for (std::size_t k = 0; k < horizon; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const Vector w = noise.sample(rng, i, k + 1, co.m);
            Vector y = w;
            const std::size_t qmax = std::min(lags, k + 1);
            for (std::size_t q = 1; q <= qmax; ++q) {
                y.noalias() += a_q[q] * traj.y(k + 1 - q, i);
                y.noalias() += b_q[q] * traj.u(k + 1 - q, i);
            }
            if (!y.allFinite() || y.norm() > kDivergenceThreshold)
                throw SimulationDivergence(k + 1, "simulate_arx: output diverged at step " + std::to_string(k + 1));
            traj.w(k + 1, i) = w;
            traj.y(k + 1, i) = y;
        }
    }
    return traj;
}

/// Exogenous regressor stream with `budget` active components per (k, i).
struct ExogenousStream {
    std::size_t budget = 1;
    std::function<double(std::size_t k, std::size_t i, std::size_t q)> component;
};

/// Simulates y_{k+1,i}^T = phi_{k,i}^T Theta + w_{k+1,i}^T over the active support.
inline Trajectory simulate_exogenous(const ExogenousStream& stream, const ParameterField& theta,
                                     const NoiseModel& noise, std::size_t n, std::size_t horizon,
                                     std::uint64_t seed) {
    require(stream.budget >= 1 && stream.component, "simulate_exogenous: stream needs a budget and a generator");
    const std::size_t m = theta.m();
    Trajectory traj(Trajectory::Layout::exogenous, n, m, stream.budget, horizon);
    const CounterRng rng(seed);
    const DenseMatrix theta_active = theta.truncated(stream.budget);
    for (std::size_t k = 0; k <= horizon; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            auto u = traj.u(k, i);
            for (std::size_t q = 1; q <= stream.budget; ++q) u[Eigen::Index(q - 1)] = stream.component(k, i, q);
            require(u.allFinite(), "simulate_exogenous: non-finite regressor component");
        }
    for (std::size_t k = 0; k < horizon; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const Vector w = noise.sample(rng, i, k + 1, m);
            const Vector y = theta_active.transpose() * traj.u(k, i) + w;
            if (!y.allFinite() || y.norm() > kDivergenceThreshold)
                throw SimulationDivergence(k + 1, "simulate_exogenous: output diverged at step " + std::to_string(k + 1));
            traj.w(k + 1, i) = w;
            traj.y(k + 1, i) = y;
        }
    return traj;
}

// ---------------------------------------------------------------------------
// Truncated observations

/// eps_{k,i}(p)^T = sum_{q > p} phi^[q]_{k,i} Theta^[q] over the active support.
inline Vector residual_eps(const Trajectory& traj, const ParameterField& theta, std::size_t k, std::size_t i,
                           std::size_t p) {
    require(p >= 1, "residual_eps: p must be >= 1");
    Vector eps = Vector::Zero(Eigen::Index(theta.m()));
    const std::size_t last = std::min(traj.active_support(k), theta.cutoff());
    for (std::size_t q = p + 1; q <= last; ++q) {
        const double c = traj.phi_component(k, i, q);
        if (c != 0.0) eps.noalias() += c * theta.row(q);
    }
    return eps;
}

struct TruncatedObservation {
    Vector phi;
    Vector y_next;
    Vector eps;
};

inline TruncatedObservation observe_truncated(const Trajectory& traj, const ParameterField& theta, std::size_t k,
                                              std::size_t i, std::size_t p) {
    require(k < traj.horizon(), "observe_truncated: k out of range");
    return {traj.truncated(k, i, p), Vector(traj.y(k + 1, i)), residual_eps(traj, theta, k, i, p)};
}

// ---------------------------------------------------------------------------
// CSV

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    out << "k,i,component_kind,index,value\n";
    auto emit = [&](std::size_t k, std::size_t i, char kind, const auto& v) {
        for (Eigen::Index j = 0; j < v.size(); ++j)
            out << k << ',' << i << ',' << kind << ',' << j << ',' << format_double(v[j]) << '\n';
    };
    for (std::size_t k = 0; k <= traj.horizon(); ++k)
        for (std::size_t i = 0; i < traj.n(); ++i) {
            emit(k, i, 'y', traj.y(k, i));
            emit(k, i, 'w', traj.w(k, i));
            emit(k, i, 'u', traj.u(k, i));
        }
}

/// Inverse of write_trajectory_csv. The layout is not stored in the file.
inline Trajectory read_trajectory_csv(std::istream& in, Trajectory::Layout layout) {
    std::string line;
    if (!std::getline(in, line) || line != "k,i,component_kind,index,value")
        throw ContractViolation("read_trajectory_csv: missing or wrong header");
    struct Entry {
        std::size_t k, i, j;
        char kind;
        double value;
    };
    std::vector<Entry> entries;
    std::size_t max_k = 0, max_i = 0, max_y = 0, max_u = 0;
    bool any_u = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::string_view rest(line);
        for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
            cells.push_back(rest.substr(0, pos));
        cells.push_back(rest);
        if (cells.size() != 5 || cells[2].size() != 1) throw ContractViolation("read_trajectory_csv: malformed row");
        Entry e{parse_integer<std::size_t>(cells[0]), parse_integer<std::size_t>(cells[1]),
                parse_integer<std::size_t>(cells[3]), cells[2][0], parse_double(cells[4])};
        if (e.kind != 'y' && e.kind != 'w' && e.kind != 'u')
            throw ContractViolation("read_trajectory_csv: unknown component kind");
        max_k = std::max(max_k, e.k);
        max_i = std::max(max_i, e.i);
        if (e.kind == 'u') {
            max_u = std::max(max_u, e.j);
            any_u = true;
        } else {
            max_y = std::max(max_y, e.j);
        }
        entries.push_back(e);
    }
    if (entries.empty()) throw ContractViolation("read_trajectory_csv: no data rows");
    Trajectory traj(layout, max_i + 1, max_y + 1, any_u ? max_u + 1 : 0, max_k);
    for (const Entry& e : entries) {
        switch (e.kind) {
            case 'y': traj.y(e.k, e.i)[Eigen::Index(e.j)] = e.value; break;
            case 'w': traj.w(e.k, e.i)[Eigen::Index(e.j)] = e.value; break;
            default: traj.u(e.k, e.i)[Eigen::Index(e.j)] = e.value; break;
        }
    }
    return traj;
}

}  // namespace dilute_rls
