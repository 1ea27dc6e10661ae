#ifndef LEAKSPLIT_TESTKIT_ORACLES_HPP
#define LEAKSPLIT_TESTKIT_ORACLES_HPP

#include "../matrix.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/**
 * @file oracles.hpp
 *
 * @brief Slow reference implementations for auditing the fast code paths.
 *
 * Everything here is written directly from definitions over tiny inputs and
 * reuses no algorithm from the rest of the library; only the `Matrix`
 * container is shared.
 */

namespace leaksplit::testkit {

/**
 * @brief One oracle comparison.
 */
struct OracleReport {
    std::string case_id;
    double reference = 0;
    double implementation = 0;
    double abs_error = 0;
    double rel_error = 0;

    static OracleReport compare(std::string case_id, double reference, double implementation) {
        OracleReport r{std::move(case_id), reference, implementation, 0, 0};
        r.abs_error = std::abs(reference - implementation);
        r.rel_error = r.abs_error / std::max(std::abs(reference), 1e-300);
        if (r.abs_error == 0) {
            r.rel_error = 0;
        }
        return r;
    }

    nlohmann::ordered_json to_json() const {
        return {{"case_id", case_id}, {"reference", reference}, {"implementation", implementation},
                {"abs_error", abs_error}, {"rel_error", rel_error}};
    }
};

/// Row-major integer count table, rows = true classes, columns = predicted clusters.
using CountTable = std::vector<std::vector<std::int64_t>>;

namespace detail {

inline void check_table(const CountTable& table, std::int64_t& n, std::vector<std::int64_t>& rows, std::vector<std::int64_t>& cols) {
    if (table.empty() || table.front().empty()) {
        throw std::invalid_argument("oracle: empty table");
    }
    rows.assign(table.size(), 0);
    cols.assign(table.front().size(), 0);
    n = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].size() != cols.size()) {
            throw std::invalid_argument("oracle: ragged table");
        }
        for (std::size_t j = 0; j < cols.size(); ++j) {
            if (table[i][j] < 0) {
                throw std::invalid_argument("oracle: negative count");
            }
            rows[i] += table[i][j];
            cols[j] += table[i][j];
            n += table[i][j];
        }
    }
}

inline long double plogp_sum(const std::vector<std::int64_t>& counts, std::int64_t n) {
    long double h = 0;
    for (auto c : counts) {
        if (c > 0) {
            const long double p = static_cast<long double>(c) / static_cast<long double>(n);
            h -= p * std::log(p);
        }
    }
    return h;
}

}

/**
 * Expected mutual information by brute force: every one of the N! orderings
 * of the predicted labels is paired with the fixed true labels, and the
 * number of orderings producing each cell count is tallied exactly in
 * integers. Logarithms are taken only when the tallies are turned into the
 * expectation. Limited to N <= 10.
 */
inline double oracle_emi(const CountTable& table) {
    std::int64_t n = 0;
    std::vector<std::int64_t> rows, cols;
    detail::check_table(table, n, rows, cols);
    if (n > 10) {
        throw std::invalid_argument("oracle_emi: N = " + std::to_string(n) + " exceeds 10");
    }
    if (n == 0) {
        throw std::invalid_argument("oracle_emi: empty table");
    }

    std::vector<std::size_t> truth, pred;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            for (std::int64_t c = 0; c < table[i][j]; ++c) {
                truth.push_back(i);
                pred.push_back(j);
            }
        }
    }

    const std::size_t r = rows.size();
    const std::size_t s = cols.size();
    const std::size_t un = static_cast<std::size_t>(n);
    // tally[(i * s + j) * (n + 1) + k] = orderings in which cell (i, j) holds k points
    std::vector<std::uint64_t> tally(r * s * (un + 1), 0);
    std::vector<std::size_t> order(un);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::int64_t> cell(r * s);
    std::uint64_t orderings = 0;
    do {
        std::fill(cell.begin(), cell.end(), 0);
        for (std::size_t p = 0; p < un; ++p) {
            ++cell[truth[p] * s + pred[order[p]]];
        }
        for (std::size_t c = 0; c < cell.size(); ++c) {
            ++tally[c * (un + 1) + static_cast<std::size_t>(cell[c])];
        }
        ++orderings;
    } while (std::next_permutation(order.begin(), order.end()));

    long double emi = 0;
    const long double nd = static_cast<long double>(n);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            for (std::size_t k = 1; k <= un; ++k) {
                const auto count = tally[(i * s + j) * (un + 1) + k];
                if (count == 0) {
                    continue;
                }
                const long double weight = static_cast<long double>(count) / static_cast<long double>(orderings);
                const long double kd = static_cast<long double>(k);
                emi += weight * kd / nd * std::log(nd * kd / (static_cast<long double>(rows[i]) * static_cast<long double>(cols[j])));
            }
        }
    }
    return static_cast<double>(emi);
}

/**
 * Builds a count table from two label vectors, classes and clusters in
 * ascending label order.
 */
inline CountTable oracle_table(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred) {
    if (truth.size() != pred.size() || truth.empty()) {
        throw std::invalid_argument("oracle_table: label vectors must be nonempty and equally long");
    }
    const std::set<std::int64_t> classes(truth.begin(), truth.end());
    const std::set<std::int64_t> clusters(pred.begin(), pred.end());
    CountTable table(classes.size(), std::vector<std::int64_t>(clusters.size(), 0));
    for (std::size_t p = 0; p < truth.size(); ++p) {
        const auto i = std::distance(classes.begin(), classes.find(truth[p]));
        const auto j = std::distance(clusters.begin(), clusters.find(pred[p]));
        ++table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return table;
}

/**
 * Adjusted mutual information built on `oracle_emi`. `normalization` is one of
 * "arithmetic", "max", "min", "geometric". Two labelings that are both a
 * single group, or both all singletons, score 1; any other zero denominator
 * scores 0.
 */
inline double oracle_ami(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred,
                         const std::string& normalization = "arithmetic") {
    const auto table = oracle_table(truth, pred);
    std::int64_t n = 0;
    std::vector<std::int64_t> rows, cols;
    detail::check_table(table, n, rows, cols);
    const std::size_t un = static_cast<std::size_t>(n);
    if ((rows.size() == 1 && cols.size() == 1) || (rows.size() == un && cols.size() == un)) {
        return 1.0;
    }

    long double mi = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const auto c = table[i][j];
            if (c > 0) {
                const long double joint = static_cast<long double>(c) / static_cast<long double>(n);
                const long double pi = static_cast<long double>(rows[i]) / static_cast<long double>(n);
                const long double pj = static_cast<long double>(cols[j]) / static_cast<long double>(n);
                mi += joint * std::log(joint / (pi * pj));
            }
        }
    }
    const long double ht = detail::plogp_sum(rows, n);
    const long double hp = detail::plogp_sum(cols, n);
    long double norm;
    if (normalization == "arithmetic") {
        norm = (ht + hp) / 2;
    } else if (normalization == "max") {
        norm = std::max(ht, hp);
    } else if (normalization == "min") {
        norm = std::min(ht, hp);
    } else if (normalization == "geometric") {
        norm = std::sqrt(ht * hp);
    } else {
        throw std::invalid_argument("oracle_ami: unknown normalization '" + normalization + "'");
    }
    const long double emi = oracle_emi(table);
    const long double denominator = norm - emi;
    if (std::abs(denominator) <= 1e-15L) {
        return 0.0;
    }
    return static_cast<double>((mi - emi) / denominator);
}

struct OracleVMeasure {
    double homogeneity;
    double completeness;
    double v;
};

/**
 * V-measure straight from the label vectors, with conditional entropies
 * summed over label pairs.
 */
inline OracleVMeasure oracle_v_measure(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred) {
    if (truth.size() != pred.size() || truth.empty()) {
        throw std::invalid_argument("oracle_v_measure: label vectors must be nonempty and equally long");
    }
    const double n = static_cast<double>(truth.size());
    std::map<std::int64_t, double> class_count, cluster_count;
    std::map<std::pair<std::int64_t, std::int64_t>, double> joint;
    for (std::size_t p = 0; p < truth.size(); ++p) {
        class_count[truth[p]] += 1;
        cluster_count[pred[p]] += 1;
        joint[{truth[p], pred[p]}] += 1;
    }

    double h_c = 0, h_k = 0, h_c_given_k = 0, h_k_given_c = 0;
    for (const auto& [_, c] : class_count) {
        h_c -= c / n * std::log(c / n);
    }
    for (const auto& [_, c] : cluster_count) {
        h_k -= c / n * std::log(c / n);
    }
    for (const auto& [key, c] : joint) {
        h_c_given_k -= c / n * std::log(c / cluster_count[key.second]);
        h_k_given_c -= c / n * std::log(c / class_count[key.first]);
    }

    OracleVMeasure out{};
    out.homogeneity = h_c == 0 ? 1.0 : 1.0 - h_c_given_k / h_c;
    out.completeness = h_k == 0 ? 1.0 : 1.0 - h_k_given_c / h_k;
    out.homogeneity = std::clamp(out.homogeneity, 0.0, 1.0);
    out.completeness = std::clamp(out.completeness, 0.0, 1.0);
    const double sum = out.homogeneity + out.completeness;
    out.v = sum == 0 ? 0.0 : 2 * out.homogeneity * out.completeness / sum;
    return out;
}

/**
 * Central-difference gradient of `loss` at `y`: `(f(y + h e) - f(y - h e)) / 2h`
 * per coordinate.
 */
inline Matrix<double> oracle_finite_diff(const std::function<double(const Matrix<double>&)>& loss, const Matrix<double>& y, double step) {
    if (!(step > 0)) {
        throw std::invalid_argument("oracle_finite_diff: step must be positive");
    }
    Matrix<double> grad(y.rows(), y.cols());
    Matrix<double> probe = y;
    for (std::size_t k = 0; k < y.values().size(); ++k) {
        const double original = probe.values()[k];
        probe.values()[k] = original + step;
        const double up = loss(probe);
        probe.values()[k] = original - step;
        const double down = loss(probe);
        probe.values()[k] = original;
        grad.values()[k] = (up - down) / (2 * step);
    }
    return grad;
}

/**
 * @brief Result of the tiny HDBSCAN oracle: labels in canonical order
 * (largest cluster first, ties by smallest member) and per-cluster stability.
 */
struct OracleClustering {
    std::vector<int> labels;
    std::vector<double> stabilities;
};

/**
 * HDBSCAN from definitions on at most 8 points.
 *
 * 1. Full mutual-reachability matrix from explicit core distances (the
 *    `min_samples`-th nearest other point, capped at N - 1).
 * 2. Distinct weights are visited from largest to smallest. At weight w each
 *    live cluster is broken into the connected components of the graph on
 *    its live points with edges of weight strictly below w. Two or more
 *    components of at least `min_cluster_size` points each become child
 *    clusters; a single large component carries the cluster on; every other
 *    component's points leave the cluster. Lambda is 1 / max(w, 1e-12).
 * 4. Stability of C is the sum over its points of lambda(leave) - lambda(birth).
 * 5. Excess of mass: a non-root cluster is kept iff its stability exceeds the
 *    best total of its descendants.
 */
inline OracleClustering oracle_tiny_hdbscan(const Matrix<double>& points, std::size_t min_cluster_size = 2, std::size_t min_samples = 2) {
    const std::size_t n = points.rows();
    if (n > 8) {
        throw std::invalid_argument("oracle_tiny_hdbscan: N = " + std::to_string(n) + " exceeds 8");
    }
    if (min_cluster_size < 2 || min_samples < 1) {
        throw std::invalid_argument("oracle_tiny_hdbscan: invalid parameters");
    }
    OracleClustering out;
    out.labels.assign(n, -1);
    if (n < 2 || n < min_cluster_size) {
        return out;
    }

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            double s = 0;
            for (std::size_t k = 0; k < points.cols(); ++k) {
                const double diff = points(a, k) - points(b, k);
                s += diff * diff;
            }
            dist[a][b] = std::sqrt(s);
        }
    }
    const std::size_t ms = std::min(min_samples, n - 1);
    std::vector<double> core(n);
    for (std::size_t a = 0; a < n; ++a) {
        std::vector<double> others;
        for (std::size_t b = 0; b < n; ++b) {
            if (b != a) {
                others.push_back(dist[a][b]);
            }
        }
        std::sort(others.begin(), others.end());
        core[a] = others[ms - 1];
    }

    std::vector<std::vector<double>> mr(n, std::vector<double>(n, 0.0));
    std::vector<double> levels;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            if (a != b) {
                mr[a][b] = std::max({dist[a][b], core[a], core[b]});
                levels.push_back(mr[a][b]);
            }
        }
    }
    std::sort(levels.rbegin(), levels.rend());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    struct Cluster {
        std::set<std::size_t> members;
        double birth;
        double stability = 0;
        int parent;
        std::vector<int> children;
    };
    std::vector<Cluster> clusters{{std::set<std::size_t>(), 0.0, 0.0, -1, {}}};
    for (std::size_t p = 0; p < n; ++p) {
        clusters[0].members.insert(p);
    }
    std::vector<int> live_of(n, 0);

    for (double w : levels) {
        const double lambda = 1.0 / std::max(w, 1e-12);
        const std::size_t existing = clusters.size();
        for (std::size_t owner = 0; owner < existing; ++owner) {
            std::vector<std::size_t> live;
            for (auto p : clusters[owner].members) {
                if (live_of[p] == static_cast<int>(owner)) {
                    live.push_back(p);
                }
            }
            if (live.empty()) {
                continue;
            }
            std::vector<std::set<std::size_t>> parts;
            std::set<std::size_t> assigned;
            for (auto start : live) {
                if (assigned.count(start)) {
                    continue;
                }
                std::set<std::size_t> part{start};
                std::vector<std::size_t> stack{start};
                while (!stack.empty()) {
                    const auto cur = stack.back();
                    stack.pop_back();
                    for (auto other : live) {
                        if (mr[cur][other] < w && cur != other && part.insert(other).second) {
                            stack.push_back(other);
                        }
                    }
                }
                assigned.insert(part.begin(), part.end());
                parts.push_back(std::move(part));
            }
            if (parts.size() == 1) {
                continue;
            }

            std::vector<const std::set<std::size_t>*> big;
            for (const auto& part : parts) {
                if (part.size() >= min_cluster_size) {
                    big.push_back(&part);
                } else {
                    for (auto p : part) {
                        clusters[owner].stability += lambda - clusters[owner].birth;
                        live_of[p] = -1;
                    }
                }
            }
            if (big.size() >= 2) {
                for (const auto* part : big) {
                    clusters[owner].stability += (lambda - clusters[owner].birth) * static_cast<double>(part->size());
                    const int id = static_cast<int>(clusters.size());
                    clusters[owner].children.push_back(id);
                    for (auto p : *part) {
                        live_of[p] = id;
                    }
                    clusters.push_back({*part, lambda, 0.0, static_cast<int>(owner), {}});
                }
            }
        }
    }
    // Points still live below the smallest weight leave at that weight's lambda.
    {
        const double lambda = 1.0 / std::max(levels.back(), 1e-12);
        for (std::size_t p = 0; p < n; ++p) {
            if (live_of[p] >= 0) {
                clusters[live_of[p]].stability += lambda - clusters[live_of[p]].birth;
                live_of[p] = -1;
            }
        }
    }

    // Excess of mass, children always have larger ids than parents.
    std::vector<double> subtree_best(clusters.size(), 0.0);
    std::vector<bool> keep(clusters.size(), false);
    for (std::size_t c = clusters.size(); c-- > 1;) {
        double below = 0;
        for (int child : clusters[c].children) {
            below += subtree_best[child];
        }
        if (clusters[c].stability > below) {
            keep[c] = true;
            subtree_best[c] = clusters[c].stability;
        } else {
            subtree_best[c] = below;
        }
    }
    std::vector<std::size_t> chosen;
    for (std::size_t c = 1; c < clusters.size(); ++c) {
        if (!keep[c]) {
            continue;
        }
        bool ancestor_kept = false;
        for (int a = clusters[c].parent; a > 0; a = clusters[a].parent) {
            ancestor_kept = ancestor_kept || keep[a];
        }
        if (!ancestor_kept) {
            chosen.push_back(c);
        }
    }
    std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
        const auto& ma = clusters[a].members;
        const auto& mb = clusters[b].members;
        return ma.size() != mb.size() ? ma.size() > mb.size() : *ma.begin() < *mb.begin();
    });
    for (std::size_t l = 0; l < chosen.size(); ++l) {
        for (auto p : clusters[chosen[l]].members) {
            out.labels[p] = static_cast<int>(l);
        }
        out.stabilities.push_back(clusters[chosen[l]].stability);
    }
    return out;
}

/**
 * kNN preservation expected from an embedding unrelated to the input: each of
 * the k embedded neighbors is one of the k true neighbors with probability
 * k / (N - 1).
 */
inline double oracle_knn_null(std::size_t n, std::size_t k) {
    if (n < 2 || k == 0 || k >= n) {
        throw std::invalid_argument("oracle_knn_null: need 1 <= k < N");
    }
    return static_cast<double>(k) / static_cast<double>(n - 1);
}

}

#endif
