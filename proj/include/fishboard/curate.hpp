// curate.hpp - maximum-likelihood matching of ordered annotation lists onto
// detected fish.
//
// With independent per-fish class posteriors, the highest-likelihood label
// permutation is a linear assignment problem: small images are enumerated
// outright and larger ones go through a shortest-augmenting-path solver.
// Likelihood ties break toward the reading-order permutation (fish labelled
// top to bottom, left to right).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"

namespace fishboard {

inline constexpr double kDefaultPosteriorFloor = 1e-12;
inline constexpr std::size_t kExhaustiveLimit = 8;

enum class AssignMethod { TrivialSmall, Exhaustive, OptimalAssignment };

inline const char* to_string(AssignMethod m) {
    switch (m) {
        case AssignMethod::TrivialSmall: return "trivial_small";
        case AssignMethod::Exhaustive: return "exhaustive";
        case AssignMethod::OptimalAssignment: return "optimal_assignment";
    }
    return "exhaustive";
}

struct Assignment {
    std::vector<std::size_t> perm;  // label index -> detection index
    double log_likelihood = 0.0;
    AssignMethod method = AssignMethod::TrivialSmall;
};

// Reading order of fish detections: bbox centers are clustered into rows
// (a vertical gap above half the median bbox height starts a new row), rows
// run top to bottom and fish left to right inside a row.
inline std::vector<std::size_t> canonical_order(const std::vector<Detection>& fish) {
    if (fish.empty()) throw DataError("canonical_order: no fish detections");
    std::vector<double> cx(fish.size()), cy(fish.size()), heights;
    for (std::size_t i = 0; i < fish.size(); ++i) {
        cx[i] = 0.5 * (fish[i].bbox.x0 + fish[i].bbox.x1);
        cy[i] = 0.5 * (fish[i].bbox.y0 + fish[i].bbox.y1);
        heights.push_back(fish[i].bbox.height());
    }
    std::sort(heights.begin(), heights.end());
    const double median_h = heights.size() % 2 == 1
                                ? heights[heights.size() / 2]
                                : 0.5 * (heights[heights.size() / 2 - 1] + heights[heights.size() / 2]);

    std::vector<std::size_t> by_y(fish.size());
    std::iota(by_y.begin(), by_y.end(), 0);
    std::sort(by_y.begin(), by_y.end(), [&](std::size_t a, std::size_t b) {
        return cy[a] < cy[b] || (cy[a] == cy[b] && a < b);
    });

    std::vector<std::vector<std::size_t>> rows;
    for (std::size_t k = 0; k < by_y.size(); ++k) {
        if (k == 0 || cy[by_y[k]] - cy[by_y[k - 1]] > 0.5 * median_h) rows.emplace_back();
        rows.back().push_back(by_y[k]);
    }
    std::vector<std::size_t> order;
    for (auto& row : rows) {
        std::sort(row.begin(), row.end(), [&](std::size_t a, std::size_t b) {
            return cx[a] < cx[b] || (cx[a] == cx[b] && a < b);
        });
        order.insert(order.end(), row.begin(), row.end());
    }
    return order;
}

// Sum of log posterior terms for one permutation, each term floored at
// epsilon so impossible pairings stay comparable instead of collapsing
// to -inf.
inline double permutation_loglik(const std::vector<std::vector<double>>& posteriors,
                                 const std::vector<int>& labels,
                                 const std::vector<std::size_t>& perm,
                                 double epsilon = kDefaultPosteriorFloor) {
    if (posteriors.size() != labels.size() || labels.size() != perm.size())
        throw DataError("permutation_loglik: size mismatch");
    double ll = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const std::vector<double>& p = posteriors[perm[i]];
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= p.size())
            throw DataError("permutation_loglik: label out of posterior range");
        ll += std::log(std::max(p[static_cast<std::size_t>(label)], epsilon));
    }
    return ll;
}

namespace detail {

// Transposition distance between two permutations: n minus the cycle count
// of p composed with q^-1.
inline std::size_t transposition_distance(const std::vector<std::size_t>& p,
                                          const std::vector<std::size_t>& q) {
    const std::size_t n = p.size();
    std::vector<std::size_t> q_inv(n);
    for (std::size_t i = 0; i < n; ++i) q_inv[q[i]] = i;
    std::vector<bool> seen(n, false);
    std::size_t cycles = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (seen[i]) continue;
        ++cycles;
        std::size_t j = i;
        while (!seen[j]) {
            seen[j] = true;
            j = q_inv[p[j]];
        }
    }
    return n - cycles;
}

// Candidate comparison under a likelihood tie: fewer transpositions away
// from the reference order wins, then lexicographic order in reference
// coordinates.
inline bool closer_to_reference(const std::vector<std::size_t>& a,
                                const std::vector<std::size_t>& b,
                                const std::vector<std::size_t>& reference) {
    const std::size_t da = transposition_distance(a, reference);
    const std::size_t db = transposition_distance(b, reference);
    if (da != db) return da < db;
    std::vector<std::size_t> pos(reference.size());
    for (std::size_t i = 0; i < reference.size(); ++i) pos[reference[i]] = i;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (pos[a[i]] != pos[b[i]]) return pos[a[i]] < pos[b[i]];
    }
    return false;
}

inline std::vector<std::vector<double>> loglik_cost(
    const std::vector<std::vector<double>>& posteriors, const std::vector<int>& labels,
    double epsilon) {
    const std::size_t n = posteriors.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (label < 0 || static_cast<std::size_t>(label) >= posteriors[j].size())
                throw DataError("assign_labels: label out of posterior range");
            cost[i][j] = -std::log(std::max(posteriors[j][static_cast<std::size_t>(label)], epsilon));
        }
    }
    return cost;
}

// Shortest-augmenting-path solver for the square min-cost assignment
// problem; costs must be finite.
inline std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);  // column -> row (1-based)
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace detail

// Highest-likelihood assignment of the ordered labels onto the fish whose
// posteriors are given. The reference order steers tie-breaking only; pass
// canonical_order of the detections when available.
inline Assignment assign_labels(const std::vector<std::vector<double>>& posteriors,
                                const std::vector<int>& labels,
                                const std::vector<std::size_t>& reference_order = {},
                                double epsilon = kDefaultPosteriorFloor) {
    const std::size_t n = posteriors.size();
    if (n != labels.size()) throw CountMismatchError(labels.size(), n);
    if (n == 0) throw DataError("assign_labels: empty input");

    std::vector<std::size_t> reference = reference_order;
    if (reference.empty()) {
        reference.resize(n);
        std::iota(reference.begin(), reference.end(), 0);
    }
    if (reference.size() != n) throw DataError("assign_labels: bad reference order");

    Assignment out;
    if (n <= kExhaustiveLimit) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::vector<std::size_t> best;
        double best_ll = -std::numeric_limits<double>::infinity();
        do {
            const double ll = permutation_loglik(posteriors, labels, perm, epsilon);
            if (ll > best_ll ||
                (ll == best_ll && detail::closer_to_reference(perm, best, reference))) {
                best_ll = ll;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.perm = best;
        out.log_likelihood = best_ll;
        out.method = n <= 2 ? AssignMethod::TrivialSmall : AssignMethod::Exhaustive;
        return out;
    }

    out.perm = detail::solve_assignment(detail::loglik_cost(posteriors, labels, epsilon));
    out.log_likelihood = permutation_loglik(posteriors, labels, out.perm, epsilon);
    out.method = AssignMethod::OptimalAssignment;
    return out;
}

// Exhaustive search exposed for oracle comparisons regardless of n.
inline Assignment assign_labels_exhaustive(const std::vector<std::vector<double>>& posteriors,
                                           const std::vector<int>& labels,
                                           double epsilon = kDefaultPosteriorFloor) {
    const std::size_t n = posteriors.size();
    if (n != labels.size()) throw CountMismatchError(labels.size(), n);
    std::vector<std::size_t> perm(n), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_ll = -std::numeric_limits<double>::infinity();
    do {
        const double ll = permutation_loglik(posteriors, labels, perm, epsilon);
        if (ll > best_ll) {
            best_ll = ll;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    Assignment out;
    out.perm = best;
    out.log_likelihood = best_ll;
    out.method = AssignMethod::Exhaustive;
    return out;
}

// Hungarian path exposed for the same comparisons.
inline Assignment assign_labels_optimal(const std::vector<std::vector<double>>& posteriors,
                                        const std::vector<int>& labels,
                                        double epsilon = kDefaultPosteriorFloor) {
    const std::size_t n = posteriors.size();
    if (n != labels.size()) throw CountMismatchError(labels.size(), n);
    Assignment out;
    out.perm = detail::solve_assignment(detail::loglik_cost(posteriors, labels, epsilon));
    out.log_likelihood = permutation_loglik(posteriors, labels, out.perm, epsilon);
    out.method = AssignMethod::OptimalAssignment;
    return out;
}

}  // namespace fishboard
