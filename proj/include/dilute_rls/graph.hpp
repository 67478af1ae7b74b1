#pragma once

// Time-varying weighted digraphs. A[i][j] = a_ij is the weight agent i puts on
// information received from agent j; every agent keeps a positive self-loop.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dilute_rls/errors.hpp"
#include "dilute_rls/format.hpp"
#include "dilute_rls/numerics.hpp"

namespace dilute_rls {

class WeightedDigraph {
public:
    WeightedDigraph() = default;

    explicit WeightedDigraph(DenseMatrix weights) : a_(std::move(weights)) {
        require(a_.rows() == a_.cols() && a_.rows() >= 1, "WeightedDigraph: adjacency must be square, n >= 1");
        require(a_.allFinite(), "WeightedDigraph: non-finite weight");
        require((a_.array() >= 0.0).all(), "WeightedDigraph: negative weight");
        require((a_.diagonal().array() > 0.0).all(), "WeightedDigraph: self-loop weights must be positive");
    }

    std::size_t n() const noexcept { return static_cast<std::size_t>(a_.rows()); }
    const DenseMatrix& weights() const noexcept { return a_; }
    double weight(std::size_t i, std::size_t j) const { return a_(Eigen::Index(i), Eigen::Index(j)); }
    bool has_edge(std::size_t i, std::size_t j) const { return weight(i, j) > 0.0; }

private:
    DenseMatrix a_;
};

/// Parameters a generator guarantees for its whole sequence.
struct GraphCertificate {
    double delta = 0.0;
    std::size_t joint_L = 1;
    bool jointly_connected = true;
};

/// Deterministic map k -> A_k over a fixed agent set.
class GraphSequence {
public:
    using Generator = std::function<WeightedDigraph(std::size_t)>;

    GraphSequence(std::size_t n, Generator gen, std::string name, GraphCertificate cert,
                  bool connectivity_warning = false)
        : n_(n), gen_(std::move(gen)), name_(std::move(name)), cert_(cert),
          warning_(connectivity_warning) {
        require(n_ >= 1, "GraphSequence: n must be >= 1");
    }

    std::size_t n() const noexcept { return n_; }
    const std::string& name() const noexcept { return name_; }
    const GraphCertificate& certificate() const noexcept { return cert_; }
    /// Set when the generator could not certify joint connectivity.
    bool connectivity_warning() const noexcept { return warning_; }

    WeightedDigraph at(std::size_t k) const {
        WeightedDigraph g = gen_(k);
        if (g.n() != n_) throw ContractViolation("GraphSequence: generator changed agent count");
        return g;
    }

private:
    std::size_t n_;
    Generator gen_;
    std::string name_;
    GraphCertificate cert_;
    bool warning_;
};

/// Closed index interval [first, last].
struct IndexRange {
    std::size_t first = 0;
    std::size_t last = 0;
};

// ---------------------------------------------------------------------------
// Assumption checkers

/// Doubly stochastic within tol (unit in- and out-degree).
inline bool is_weight_balanced(const WeightedDigraph& g, double tol = 1e-12) {
    const DenseMatrix& a = g.weights();
    const Vector rows = a.rowwise().sum();
    const Vector cols = a.colwise().sum().transpose();
    return ((rows.array() - 1.0).abs() <= tol).all() && ((cols.array() - 1.0).abs() <= tol).all();
}

inline bool is_delta_nondegenerate(const GraphSequence& seq, IndexRange range, double delta) {
    require(delta > 0.0, "is_delta_nondegenerate: delta must be positive");
    require(range.first <= range.last, "is_delta_nondegenerate: empty range");
    for (std::size_t k = range.first; k <= range.last; ++k) {
        const WeightedDigraph g = seq.at(k);
        const DenseMatrix& a = g.weights();
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const double w = a.data()[i];
            if (w > 0.0 && !(w > delta)) return false;
        }
    }
    return true;
}

/// Union over steps [first, last]: edge union with averaged weights.
inline DenseMatrix union_weights(const GraphSequence& seq, std::size_t first, std::size_t last) {
    require(first <= last, "union_weights: empty window");
    const auto n = Eigen::Index(seq.n());
    DenseMatrix sum = DenseMatrix::Zero(n, n);
    for (std::size_t k = first; k <= last; ++k) sum += seq.at(k).weights();
    return sum / double(last - first + 1);
}

/// Number of strongly connected components of the support of `a` (Kosaraju).
inline std::size_t count_strong_components(const DenseMatrix& a) {
    const std::size_t n = std::size_t(a.rows());
    // Edge (i, j) with a_ij > 0: i receives from j, information flows j -> i.
    auto adjacent = [&](std::size_t from, std::size_t to, bool reversed) {
        return reversed ? a(Eigen::Index(from), Eigen::Index(to)) > 0.0
                        : a(Eigen::Index(to), Eigen::Index(from)) > 0.0;
    };
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t root = 0; root < n; ++root) {
        if (seen[root]) continue;
        // Iterative DFS recording finish order.
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        seen[root] = 1;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            if (next < n) {
                const std::size_t w = next++;
                if (!seen[w] && adjacent(v, w, false)) {
                    seen[w] = 1;
                    stack.emplace_back(w, 0);
                }
            } else {
                order.push_back(v);
                stack.pop_back();
            }
        }
    }
    std::vector<char> assigned(n, 0);
    std::size_t components = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (assigned[*it]) continue;
        ++components;
        std::vector<std::size_t> stack{*it};
        assigned[*it] = 1;
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            for (std::size_t w = 0; w < n; ++w) {
                if (!assigned[w] && adjacent(v, w, true)) {
                    assigned[w] = 1;
                    stack.push_back(w);
                }
            }
        }
    }
    return components;
}

inline bool is_strongly_connected(const DenseMatrix& a) { return count_strong_components(a) == 1; }

/// Every union G_{tL} u ... u G_{(t+1)L-1}, t in t_range, is strongly connected.
inline bool is_jointly_connected(const GraphSequence& seq, std::size_t L, IndexRange t_range) {
    require(L >= 1, "is_jointly_connected: L must be >= 1");
    for (std::size_t t = t_range.first; t <= t_range.last; ++t) {
        if (!is_strongly_connected(union_weights(seq, t * L, (t + 1) * L - 1))) return false;
    }
    return true;
}

/// A_k A_{k-1} ... A_l.
inline DenseMatrix adjacency_product(const GraphSequence& seq, std::size_t k, std::size_t l) {
    require(k >= l, "adjacency_product: requires k >= l");
    DenseMatrix prod = seq.at(l).weights();
    for (std::size_t step = l + 1; step <= k; ++step) prod = seq.at(step).weights() * prod;
    return prod;
}

// ---------------------------------------------------------------------------
// Lower bounds on entries of adjacency products

struct Remark1Violation {
    char property = 'a';  // 'a' diagonal, 'b' union edge, 'c' two-hop path
    std::size_t k = 0;
    std::size_t s = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    double value = 0.0;
    double bound = 0.0;
};

struct Remark1Report {
    std::vector<Remark1Violation> violations;
    std::size_t windows_checked = 0;
    /// Windows with k == s admit no split point for property (c).
    std::size_t windows_skipped_c = 0;

    bool ok() const noexcept { return violations.empty(); }

    void merge(const Remark1Report& other) {
        violations.insert(violations.end(), other.violations.begin(), other.violations.end());
        windows_checked += other.windows_checked;
        windows_skipped_c += other.windows_skipped_c;
    }
};

namespace detail {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline BoolMatrix support(const DenseMatrix& a) { return (a.array() > 0.0).matrix(); }

inline BoolMatrix bool_product(const BoolMatrix& left, const BoolMatrix& right) {
    const Eigen::Index n = left.rows();
    BoolMatrix out = BoolMatrix::Constant(n, n, false);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index v = 0; v < n; ++v)
            if (left(i, v))
                for (Eigen::Index j = 0; j < n; ++j) out(i, j) = out(i, j) || right(v, j);
    return out;
}

/// Checks (a)-(c) for one window given the product and per-step supports.
inline Remark1Report audit_window(const DenseMatrix& product, const std::vector<BoolMatrix>& steps,
                                  double delta, std::size_t k, std::size_t s) {
    Remark1Report report;
    report.windows_checked = 1;
    const Eigen::Index n = product.rows();
    const double bound = std::pow(delta, double(k - s + 1));
    auto flag = [&](char prop, Eigen::Index i, Eigen::Index j) {
        report.violations.push_back({prop, k, s, std::size_t(i), std::size_t(j), product(i, j), bound});
    };
    for (Eigen::Index i = 0; i < n; ++i)
        if (product(i, i) < bound) flag('a', i, i);

    BoolMatrix all = BoolMatrix::Constant(n, n, false);
    for (const BoolMatrix& e : steps) all = all.array() || e.array();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (all(i, j) && product(i, j) < bound) flag('b', i, j);

    if (k == s) {
        report.windows_skipped_c = 1;
        return report;
    }
    // prefix[r - s] = union of E_s..E_r, suffix = union of E_{r+1}..E_k.
    std::vector<BoolMatrix> prefix(steps.size());
    prefix[0] = steps[0];
    for (std::size_t r = 1; r < steps.size(); ++r) prefix[r] = prefix[r - 1].array() || steps[r].array();
    BoolMatrix suffix = BoolMatrix::Constant(n, n, false);
    BoolMatrix reachable = BoolMatrix::Constant(n, n, false);
    for (std::size_t r = steps.size() - 1; r-- > 0;) {
        suffix = suffix.array() || steps[r + 1].array();
        reachable = reachable.array() || bool_product(suffix, prefix[r]).array();
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (reachable(i, j) && product(i, j) < bound) flag('c', i, j);
    return report;
}

}  // namespace detail

/// Audits the entry lower bounds of A(k, s) for a single window.
inline Remark1Report audit_remark1_bounds(const GraphSequence& seq, double delta, std::size_t k, std::size_t s) {
    require(k >= s, "audit_remark1_bounds: requires k >= s");
    require(is_delta_nondegenerate(seq, {s, k}, delta), "audit_remark1_bounds: sequence is not delta-nondegenerate");
    std::vector<detail::BoolMatrix> steps;
    for (std::size_t step = s; step <= k; ++step) steps.push_back(detail::support(seq.at(step).weights()));
    return detail::audit_window(adjacency_product(seq, k, s), steps, delta, k, s);
}

/// Audits every window [s, k] with s in s_range and length <= max_length.
inline Remark1Report audit_remark1_windows(const GraphSequence& seq, double delta, IndexRange s_range,
                                           std::size_t max_length) {
    require(max_length >= 1, "audit_remark1_windows: max_length must be >= 1");
    require(is_delta_nondegenerate(seq, {s_range.first, s_range.last + max_length - 1}, delta),
            "audit_remark1_windows: sequence is not delta-nondegenerate");
    Remark1Report report;
    for (std::size_t s = s_range.first; s <= s_range.last; ++s) {
        DenseMatrix product = seq.at(s).weights();
        std::vector<detail::BoolMatrix> steps{detail::support(product)};
        for (std::size_t k = s;; ++k) {
            report.merge(detail::audit_window(product, steps, delta, k, s));
            if (k + 1 >= s + max_length) break;
            const DenseMatrix next = seq.at(k + 1).weights();
            product = next * product;
            steps.push_back(detail::support(next));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Generators

namespace detail {

inline DenseMatrix pairwise_average(std::size_t n, std::size_t i, std::size_t j) {
    DenseMatrix w = DenseMatrix::Identity(Eigen::Index(n), Eigen::Index(n));
    if (i == j) return w;
    const auto a = Eigen::Index(i), b = Eigen::Index(j);
    w(a, a) = w(b, b) = 0.5;
    w(a, b) = w(b, a) = 0.5;
    return w;
}

inline double min_positive(const DenseMatrix& a) {
    double m = INFINITY;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a.data()[i] > 0.0) m = std::min(m, a.data()[i]);
    return m;
}

}  // namespace detail

/// Step k averages the pair (k mod n, k+1 mod n). Certified delta = 0.4, L = n.
inline GraphSequence gossip_ring(std::size_t n) {
    require(n >= 1, "gossip_ring: n must be >= 1");
    auto gen = [n](std::size_t k) {
        const std::size_t i = k % n;
        return WeightedDigraph(detail::pairwise_average(n, i, (i + 1) % n));
    };
    return GraphSequence(n, gen, "gossip_ring", {0.4, n, true});
}

inline GraphSequence complete_uniform(std::size_t n) {
    require(n >= 1, "complete_uniform: n must be >= 1");
    const WeightedDigraph g(DenseMatrix::Constant(Eigen::Index(n), Eigen::Index(n), 1.0 / double(n)));
    return GraphSequence(n, [g](std::size_t) { return g; }, "complete_uniform", {0.5 / double(n), 1, true});
}

/// A_k = I: no communication.
inline GraphSequence identity_graph(std::size_t n) {
    require(n >= 1, "identity_graph: n must be >= 1");
    const WeightedDigraph g(DenseMatrix::Identity(Eigen::Index(n), Eigen::Index(n)));
    return GraphSequence(n, [g](std::size_t) { return g; }, "identity", {0.5, 1, n == 1}, n > 1);
}

using UndirectedEdge = std::pair<std::size_t, std::size_t>;

/// Metropolis-Hastings weights on a static undirected graph.
inline GraphSequence metropolis_static(std::size_t n, const std::vector<UndirectedEdge>& edges) {
    require(n >= 1, "metropolis_static: n must be >= 1");
    std::vector<std::size_t> degree(n, 0);
    DenseMatrix adj = DenseMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
    for (auto [u, v] : edges) {
        require(u < n && v < n, "metropolis_static: edge endpoint out of range");
        if (u == v || adj(Eigen::Index(u), Eigen::Index(v)) > 0.0) continue;
        adj(Eigen::Index(u), Eigen::Index(v)) = adj(Eigen::Index(v), Eigen::Index(u)) = 1.0;
        ++degree[u];
        ++degree[v];
    }
    DenseMatrix w = DenseMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
    for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
        for (Eigen::Index j = 0; j < Eigen::Index(n); ++j)
            if (adj(i, j) > 0.0) w(i, j) = 1.0 / (1.0 + double(std::max(degree[std::size_t(i)], degree[std::size_t(j)])));
        w(i, i) = 1.0 - w.row(i).sum();
    }
    const bool connected = is_strongly_connected(w);
    const WeightedDigraph g(w);
    return GraphSequence(n, [g](std::size_t) { return g; }, "metropolis_static",
                         {0.5 * detail::min_positive(w), 1, connected}, !connected);
}

/// Cycles through a user list; certified L is the period when the period union is connected.
inline GraphSequence periodic_schedule(std::vector<WeightedDigraph> period) {
    require(!period.empty(), "periodic_schedule: empty schedule");
    const std::size_t n = period.front().n();
    DenseMatrix sum = DenseMatrix::Zero(Eigen::Index(n), Eigen::Index(n));
    double delta = INFINITY;
    for (const WeightedDigraph& g : period) {
        require(g.n() == n, "periodic_schedule: inconsistent agent count");
        sum += g.weights();
        delta = std::min(delta, detail::min_positive(g.weights()));
    }
    const bool connected = is_strongly_connected(sum);
    auto shared = std::make_shared<const std::vector<WeightedDigraph>>(std::move(period));
    return GraphSequence(
        n, [shared](std::size_t k) { return (*shared)[k % shared->size()]; }, "periodic_schedule",
        {0.5 * delta, shared->size(), connected}, !connected);
}

// ---------------------------------------------------------------------------

inline void write_adjacency_csv(std::ostream& out, const WeightedDigraph& g) {
    out << "i,j,weight\n";
    for (std::size_t i = 0; i < g.n(); ++i)
        for (std::size_t j = 0; j < g.n(); ++j) out << i << ',' << j << ',' << format_double(g.weight(i, j)) << '\n';
}

}  // namespace dilute_rls
