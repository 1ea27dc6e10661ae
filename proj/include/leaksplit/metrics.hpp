#ifndef LEAKSPLIT_METRICS_HPP
#define LEAKSPLIT_METRICS_HPP

#include "matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file metrics.hpp
 *
 * @brief Agreement between a clustering and ground-truth groups: V-measure and
 * adjusted mutual information. All logarithms are natural.
 */

namespace leaksplit {

/**
 * How the noise label (-1) of a predicted clustering is counted.
 *
 * - `single_cluster`: all noise points form one ordinary cluster.
 * - `singletons`: every noise point is its own cluster.
 */
enum class NoisePolicy { single_cluster, singletons };

/**
 * @brief R x S table of co-occurrence counts (true classes x predicted clusters).
 */
struct ContingencyTable {
    Matrix<std::int64_t> counts;
    std::vector<std::int64_t> row_sums;
    std::vector<std::int64_t> col_sums;
    std::int64_t total = 0;

    /// Builds the marginals from a raw count matrix.
    static ContingencyTable from_counts(Matrix<std::int64_t> counts) {
        ContingencyTable t;
        t.row_sums.assign(counts.rows(), 0);
        t.col_sums.assign(counts.cols(), 0);
        for (std::size_t i = 0; i < counts.rows(); ++i) {
            for (std::size_t j = 0; j < counts.cols(); ++j) {
                const auto c = counts(i, j);
                if (c < 0) {
                    throw std::invalid_argument("contingency counts must be nonnegative");
                }
                t.row_sums[i] += c;
                t.col_sums[j] += c;
                t.total += c;
            }
        }
        t.counts = std::move(counts);
        return t;
    }
};

/**
 * Cross-tabulates two labelings. Classes and clusters are ordered by label
 * value; with `NoisePolicy::singletons` each noise point gets its own column
 * after the ordinary clusters.
 */
inline ContingencyTable contingency(std::span<const std::int64_t> truth, std::span<const std::int64_t> pred,
                                    NoisePolicy noise = NoisePolicy::single_cluster) {
    if (truth.size() != pred.size()) {
        throw std::invalid_argument("contingency: label lengths differ (" + std::to_string(truth.size()) + " vs "
                                    + std::to_string(pred.size()) + ")");
    }

    std::map<std::int64_t, std::size_t> rows;
    std::map<std::int64_t, std::size_t> cols;
    std::size_t noise_points = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        rows.emplace(truth[k], 0);
        if (noise == NoisePolicy::singletons && pred[k] == -1) {
            ++noise_points;
        } else {
            cols.emplace(pred[k], 0);
        }
    }
    std::size_t idx = 0;
    for (auto& [_, v] : rows) {
        v = idx++;
    }
    idx = 0;
    for (auto& [_, v] : cols) {
        v = idx++;
    }

    Matrix<std::int64_t> counts(rows.size(), cols.size() + noise_points, 0);
    std::size_t next_singleton = cols.size();
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const std::size_t r = rows[truth[k]];
        const std::size_t c = (noise == NoisePolicy::singletons && pred[k] == -1) ? next_singleton++ : cols[pred[k]];
        ++counts(r, c);
    }
    return ContingencyTable::from_counts(std::move(counts));
}

inline ContingencyTable contingency(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred,
                                    NoisePolicy noise = NoisePolicy::single_cluster) {
    return contingency(std::span<const std::int64_t>(truth), std::span<const std::int64_t>(pred), noise);
}

/**
 * Shannon entropy of a count vector, `-sum (w/N) ln(w/N)`.
 */
inline double entropy(std::span<const std::int64_t> weights) {
    std::int64_t total = 0;
    for (auto w : weights) {
        if (w < 0) {
            throw std::invalid_argument("entropy: negative weight");
        }
        total += w;
    }
    if (total == 0) {
        throw std::invalid_argument("entropy: weights sum to zero");
    }
    const double n = static_cast<double>(total);
    double h = 0;
    for (auto w : weights) {
        if (w > 0) {
            const double p = static_cast<double>(w) / n;
            h -= p * std::log(p);
        }
    }
    return std::max(h, 0.0);
}

inline double entropy(const std::vector<std::int64_t>& weights) {
    return entropy(std::span<const std::int64_t>(weights));
}

inline double mutual_information(const ContingencyTable& table) {
    if (table.total <= 0) {
        throw std::invalid_argument("mutual_information: empty table");
    }
    const double n = static_cast<double>(table.total);
    double mi = 0;
    for (std::size_t i = 0; i < table.counts.rows(); ++i) {
        for (std::size_t j = 0; j < table.counts.cols(); ++j) {
            const auto nij = table.counts(i, j);
            if (nij == 0) {
                continue;
            }
            const double ratio = n * static_cast<double>(nij) / (static_cast<double>(table.row_sums[i]) * static_cast<double>(table.col_sums[j]));
            mi += static_cast<double>(nij) / n * std::log(ratio);
        }
    }
    return std::max(mi, 0.0);
}

/**
 * Expected mutual information between two labelings with the table's
 * marginals under random permutation (hypergeometric model). Each term's
 * probability is evaluated in log space with lgamma.
 */
inline double expected_mutual_information(const ContingencyTable& table) {
    if (table.total <= 0) {
        throw std::invalid_argument("expected_mutual_information: empty table");
    }
    const std::int64_t n = table.total;
    const double nd = static_cast<double>(n);
    auto lfact = [](std::int64_t x) { return std::lgamma(static_cast<double>(x) + 1.0); };
    const double lfact_n = lfact(n);

    double emi = 0;
    for (auto a : table.row_sums) {
        if (a == 0) {
            continue;
        }
        for (auto b : table.col_sums) {
            if (b == 0) {
                continue;
            }
            const std::int64_t start = std::max<std::int64_t>(1, a + b - n);
            const std::int64_t end = std::min(a, b);
            const double fixed = lfact(a) + lfact(b) + lfact(n - a) + lfact(n - b) - lfact_n;
            const double log_ab = std::log(static_cast<double>(a)) + std::log(static_cast<double>(b));
            for (std::int64_t nij = start; nij <= end; ++nij) {
                const double value = static_cast<double>(nij) / nd * (std::log(nd) + std::log(static_cast<double>(nij)) - log_ab);
                const double log_prob = fixed - lfact(nij) - lfact(a - nij) - lfact(b - nij) - lfact(n - a - b + nij);
                emi += value * std::exp(log_prob);
            }
        }
    }
    return emi;
}

/**
 * How the two entropies are combined in the AMI denominator.
 */
enum class AmiNormalization { arithmetic, max, min, geometric };

inline double ami_normalizer(double h_true, double h_pred, AmiNormalization norm) {
    switch (norm) {
    case AmiNormalization::arithmetic:
        return 0.5 * (h_true + h_pred);
    case AmiNormalization::max:
        return std::max(h_true, h_pred);
    case AmiNormalization::min:
        return std::min(h_true, h_pred);
    case AmiNormalization::geometric:
        return std::sqrt(h_true * h_pred);
    }
    return 0.5 * (h_true + h_pred);
}

/**
 * Adjusted mutual information, `(MI - EMI) / (norm(H_true, H_pred) - EMI)`.
 *
 * When both labelings are trivial in the same way (one class and one cluster,
 * or all singletons on both sides) the denominator vanishes with MI = EMI and
 * the score is 1. Any other vanishing denominator scores 0.
 */
inline double ami(const ContingencyTable& table, AmiNormalization norm = AmiNormalization::arithmetic) {
    if (table.total <= 0) {
        throw std::invalid_argument("ami: empty table");
    }
    const auto r = table.row_sums.size();
    const auto s = table.col_sums.size();
    const auto n = static_cast<std::size_t>(table.total);
    if ((r == 1 && s == 1) || (r == n && s == n)) {
        return 1.0;
    }

    const double mi = mutual_information(table);
    const double emi = expected_mutual_information(table);
    const double h_true = entropy(table.row_sums);
    const double h_pred = entropy(table.col_sums);
    const double denominator = ami_normalizer(h_true, h_pred, norm) - emi;
    const double numerator = mi - emi;
    if (std::abs(denominator) <= 1e-15) {
        // Only reachable when one side is trivial under min/geometric normalization.
        return 0.0;
    }
    return numerator / denominator;
}

struct VMeasure {
    double homogeneity;
    double completeness;
    double v;
};

/**
 * Homogeneity `1 - H(true|pred)/H(true)`, completeness `1 - H(pred|true)/H(pred)`
 * and their harmonic mean. A zero marginal entropy makes the matching score 1.
 */
inline VMeasure v_measure(const ContingencyTable& table) {
    if (table.total <= 0) {
        throw std::invalid_argument("v_measure: empty table");
    }
    const double n = static_cast<double>(table.total);
    double h_true_given_pred = 0;
    double h_pred_given_true = 0;
    for (std::size_t i = 0; i < table.counts.rows(); ++i) {
        for (std::size_t j = 0; j < table.counts.cols(); ++j) {
            const auto nij = table.counts(i, j);
            if (nij == 0) {
                continue;
            }
            const double joint = static_cast<double>(nij) / n;
            h_true_given_pred -= joint * std::log(static_cast<double>(nij) / static_cast<double>(table.col_sums[j]));
            h_pred_given_true -= joint * std::log(static_cast<double>(nij) / static_cast<double>(table.row_sums[i]));
        }
    }
    const double h_true = entropy(table.row_sums);
    const double h_pred = entropy(table.col_sums);

    VMeasure out{};
    out.homogeneity = h_true == 0 ? 1.0 : std::clamp(1.0 - h_true_given_pred / h_true, 0.0, 1.0);
    out.completeness = h_pred == 0 ? 1.0 : std::clamp(1.0 - h_pred_given_true / h_pred, 0.0, 1.0);
    const double sum = out.homogeneity + out.completeness;
    out.v = sum == 0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / sum;
    return out;
}

}

#endif
