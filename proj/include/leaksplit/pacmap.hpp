#ifndef LEAKSPLIT_PACMAP_HPP
#define LEAKSPLIT_PACMAP_HPP

#include "knn.hpp"
#include "matrix.hpp"
#include "pca.hpp"
#include "random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file pacmap.hpp
 *
 * @brief Pairwise controlled manifold approximation (PaCMAP) embedding.
 *
 * The embedding is driven by three kinds of pairs: near neighbors chosen by a
 * locally scaled distance, "mid-near" pairs sampled at an intermediate range,
 * and random "further" pairs. The weights of the three attractive/repulsive
 * terms follow a three-phase schedule.
 *
 * @see
 * Wang, Y., Huang, H., Rudin, C. and Shaposhnik, Y. (2021).
 * Understanding how dimension reduction tools work.
 * _Journal of Machine Learning Research_, 22, 1-73.
 */

namespace leaksplit {

struct PacmapConfig {
    std::size_t m = 256;
    std::size_t n_neighbors = 10;
    double mn_ratio = 0.5;
    double fp_ratio = 2.0;
    std::array<std::size_t, 3> iters{100, 100, 250};
    double learning_rate = 1.0;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (m == 0) {
            throw std::invalid_argument("PaCMAP output dimension must be at least 1");
        }
        if (n_neighbors == 0) {
            throw std::invalid_argument("PaCMAP n_neighbors must be at least 1");
        }
        if (!(mn_ratio >= 0) || !(fp_ratio >= 0)) {
            throw std::invalid_argument("PaCMAP pair ratios must be nonnegative");
        }
        if (!(learning_rate > 0)) {
            throw std::invalid_argument("PaCMAP learning rate must be positive");
        }
    }

    std::size_t total_iters() const { return iters[0] + iters[1] + iters[2]; }
    std::size_t n_midnear() const { return static_cast<std::size_t>(std::llround(n_neighbors * mn_ratio)); }
    std::size_t n_further() const { return static_cast<std::size_t>(std::llround(n_neighbors * fp_ratio)); }
};

struct IndexPair {
    std::uint32_t i;
    std::uint32_t j;

    bool operator==(const IndexPair&) const = default;
};

struct PairSets {
    std::vector<IndexPair> neighbor_pairs;
    std::vector<IndexPair> midnear_pairs;
    std::vector<IndexPair> further_pairs;

    bool operator==(const PairSets&) const = default;
};

/**
 * For each point, takes its `min(N - 1, n_neighbors + 50)` Euclidean nearest
 * candidates and keeps the `n_neighbors` smallest by the scaled distance
 * `d_ij^2 / (sigma_i * sigma_j)`, where `sigma_i` is the mean distance from i
 * to its 4th-6th nearest neighbors (floored at 1e-10). Output is grouped by
 * source point, `n_neighbors` pairs each.
 */
template <typename T>
std::vector<IndexPair> build_knn_pairs(const Matrix<T>& x, const PacmapConfig& config) {
    const std::size_t n = x.rows();
    if (n <= config.n_neighbors) {
        throw std::invalid_argument("PaCMAP needs more points (" + std::to_string(n) + ") than n_neighbors ("
                                    + std::to_string(config.n_neighbors) + ")");
    }
    if (!all_finite(x)) {
        throw std::invalid_argument("PaCMAP input contains non-finite values");
    }

    const std::size_t n_candidates = std::min(n - 1, config.n_neighbors + 50);
    const auto knn = exact_knn(x, n_candidates, config.threads);

    std::vector<double> sigma(n);
    const std::size_t hi = std::min<std::size_t>(6, n_candidates);
    const std::size_t lo = std::min<std::size_t>(3, hi - 1);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (std::size_t r = lo; r < hi; ++r) {
            sum += knn[i][r].distance;
        }
        sigma[i] = std::max(sum / static_cast<double>(hi - lo), 1e-10);
    }

    std::vector<IndexPair> pairs;
    pairs.reserve(n * config.n_neighbors);
    std::vector<std::pair<double, std::size_t>> scaled;
    for (std::size_t i = 0; i < n; ++i) {
        scaled.clear();
        for (const auto& nb : knn[i]) {
            scaled.emplace_back(nb.distance * nb.distance / (sigma[i] * sigma[nb.index]), nb.index);
        }
        std::partial_sort(scaled.begin(), scaled.begin() + config.n_neighbors, scaled.end());
        for (std::size_t r = 0; r < config.n_neighbors; ++r) {
            pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(scaled[r].second)});
        }
    }
    return pairs;
}

/**
 * Samples mid-near and further pairs for every point.
 *
 * Mid-near: draw 6 distinct other points and keep the second nearest (with
 * fewer than 6 others available, all of them are used; with a single other
 * point, that point). Further: distinct uniform draws among points that are
 * not the source's neighbors; if every other point is a neighbor, any other
 * point may be drawn.
 */
template <typename T>
PairSets sample_pairs(const Matrix<T>& x, std::vector<IndexPair> neighbor_pairs, const PacmapConfig& config) {
    const std::size_t n = x.rows();
    PairSets out;
    out.neighbor_pairs = std::move(neighbor_pairs);
    if (n < 2) {
        return out;
    }

    std::vector<std::set<std::size_t>> neighbors(n);
    for (const auto& p : out.neighbor_pairs) {
        neighbors[p.i].insert(p.j);
    }

    Rng rng(config.seed);
    const std::size_t n_mn = config.n_midnear();
    const std::size_t n_fp = config.n_further();
    const std::size_t draw = std::min<std::size_t>(6, n - 1);
    std::vector<std::size_t> picks;
    std::vector<std::pair<double, std::size_t>> ranked;

    auto draw_distinct = [&](std::size_t source, std::size_t count, const std::set<std::size_t>* excluded) {
        picks.clear();
        const std::size_t available = n - 1 - (excluded ? excluded->size() : 0);
        if (count >= available) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j != source && !(excluded && excluded->count(j))) {
                    picks.push_back(j);
                }
            }
            return;
        }
        while (picks.size() < count) {
            const std::size_t j = rng.index(n);
            if (j == source || (excluded && excluded->count(j)) || std::find(picks.begin(), picks.end(), j) != picks.end()) {
                continue;
            }
            picks.push_back(j);
        }
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < n_mn; ++t) {
            draw_distinct(i, draw, nullptr);
            ranked.clear();
            for (auto j : picks) {
                ranked.emplace_back(squared_distance(x.row(i), x.row(j)), j);
            }
            std::sort(ranked.begin(), ranked.end());
            const auto chosen = ranked[ranked.size() >= 2 ? 1 : 0].second;
            out.midnear_pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(chosen)});
        }

        const std::set<std::size_t>* excluded = neighbors[i].size() < n - 1 ? &neighbors[i] : nullptr;
        draw_distinct(i, n_fp, excluded);
        for (auto j : picks) {
            out.further_pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
        }
    }
    return out;
}

struct PhaseWeights {
    double neighbor;
    double midnear;
    double further;
};

/**
 * Weight schedule at 0-based iteration `iter`. Phase 1 anneals the mid-near
 * weight linearly from 1000 to 3; phase 2 holds (3, 3, 1); phase 3 drops the
 * mid-near term and relaxes neighbors to (1, 0, 1).
 */
inline PhaseWeights phase_weights(std::size_t iter, const std::array<std::size_t, 3>& phases) {
    if (iter < phases[0]) {
        const double progress = static_cast<double>(iter) / static_cast<double>(phases[0]);
        return {2.0, (1.0 - progress) * 1000.0 + progress * 3.0, 1.0};
    }
    if (iter < phases[0] + phases[1]) {
        return {3.0, 3.0, 1.0};
    }
    return {1.0, 0.0, 1.0};
}

inline constexpr PhaseWeights final_phase_weights{1.0, 0.0, 1.0};

/**
 * PaCMAP loss at `y`, with `d = |y_i - y_j|^2 + 1`:
 * neighbors `w * d / (10 + d)`, mid-near `w * d / (10000 + d)`, further `w / (1 + d)`.
 * When `gradient` is non-null it receives dL/dy, accumulated pair by pair in list order.
 */
inline double pacmap_loss(const Matrix<double>& y, const PairSets& pairs, const PhaseWeights& weights, Matrix<double>* gradient = nullptr) {
    const std::size_t m = y.cols();
    if (gradient) {
        if (gradient->rows() != y.rows() || gradient->cols() != m) {
            *gradient = Matrix<double>(y.rows(), m);
        } else {
            std::fill(gradient->values().begin(), gradient->values().end(), 0.0);
        }
    }

    double loss = 0;
    auto accumulate = [&](const std::vector<IndexPair>& list, auto&& term) {
        for (const auto& p : list) {
            const auto yi = y.row(p.i);
            const auto yj = y.row(p.j);
            const double d = 1.0 + squared_distance(yi, yj);
            const auto [value, slope] = term(d);
            loss += value;
            if (gradient) {
                auto gi = gradient->row(p.i);
                auto gj = gradient->row(p.j);
                const double coef = 2.0 * slope;
                for (std::size_t k = 0; k < m; ++k) {
                    const double g = coef * (yi[k] - yj[k]);
                    gi[k] += g;
                    gj[k] -= g;
                }
            }
        }
    };

    if (weights.neighbor != 0) {
        const double w = weights.neighbor;
        accumulate(pairs.neighbor_pairs, [w](double d) {
            const double denom = 10.0 + d;
            return std::pair{w * d / denom, w * 10.0 / (denom * denom)};
        });
    }
    if (weights.midnear != 0) {
        const double w = weights.midnear;
        accumulate(pairs.midnear_pairs, [w](double d) {
            const double denom = 10000.0 + d;
            return std::pair{w * d / denom, w * 10000.0 / (denom * denom)};
        });
    }
    if (weights.further != 0) {
        const double w = weights.further;
        accumulate(pairs.further_pairs, [w](double d) {
            const double denom = 1.0 + d;
            return std::pair{w / denom, -w / (denom * denom)};
        });
    }
    return loss;
}

/**
 * @brief Fitted embedding plus optimization diagnostics.
 */
struct PacmapResult {
    Matrix<double> embedding;
    PairSets pairs;
    /// Loss under the current phase weights, one entry per iteration.
    std::vector<double> loss_trace;
    /// Loss of the initial and final embedding, both under the final-phase weights.
    double initial_loss = 0;
    double final_loss = 0;
    bool pca_initialized = false;
    std::size_t n_neighbors_used = 0;
};

/**
 * Embeds the rows of `x` into `config.m` dimensions.
 *
 * The initial layout is 0.01 times the PCA projection of `x` onto `m`
 * components, or 0.01 * N(0, 1) noise when that projection does not exist
 * (fewer than `m` nonzero-variance directions). Optimization is Adam with
 * beta1 = 0.9, beta2 = 0.999, eps = 1e-7 and bias-corrected step size.
 * When `N - 1 < n_neighbors`, the neighbor count is reduced to `N - 1`.
 */
template <typename T>
PacmapResult pacmap_fit(const Matrix<T>& x, PacmapConfig config) {
    config.validate();
    const std::size_t n = x.rows();
    if (n < 2) {
        throw std::invalid_argument("PaCMAP needs at least 2 points");
    }
    config.n_neighbors = std::min(config.n_neighbors, n - 1);

    PacmapResult result;
    result.n_neighbors_used = config.n_neighbors;
    result.pairs = sample_pairs(x, build_knn_pairs(x, config), config);

    const std::size_t m = config.m;
    Matrix<double> y(n, m);
    if (m <= std::min(n - 1, x.cols())) {
        try {
            y = pca_project(pca_fit(x, m), x);
            for (auto& v : y.values()) {
                v *= 0.01;
            }
            result.pca_initialized = true;
        } catch (const std::runtime_error&) {
            result.pca_initialized = false;
        }
    }
    if (!result.pca_initialized) {
        Rng rng(derive_seed(config.seed, 1));
        for (auto& v : y.values()) {
            v = 0.01 * rng.normal();
        }
    }

    result.initial_loss = pacmap_loss(y, result.pairs, final_phase_weights);

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-7;
    std::vector<double> first(n * m, 0.0);
    std::vector<double> second(n * m, 0.0);
    Matrix<double> gradient(n, m);
    double beta1_power = 1.0;
    double beta2_power = 1.0;

    const std::size_t total = config.total_iters();
    result.loss_trace.reserve(total);
    for (std::size_t iter = 0; iter < total; ++iter) {
        const double loss = pacmap_loss(y, result.pairs, phase_weights(iter, config.iters), &gradient);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("PaCMAP diverged: non-finite loss at iteration " + std::to_string(iter));
        }
        result.loss_trace.push_back(loss);

        beta1_power *= beta1;
        beta2_power *= beta2;
        const double step = config.learning_rate * std::sqrt(1.0 - beta2_power) / (1.0 - beta1_power);
        auto& values = y.values();
        const auto& grad = gradient.values();
        for (std::size_t k = 0; k < values.size(); ++k) {
            first[k] += (1.0 - beta1) * (grad[k] - first[k]);
            second[k] += (1.0 - beta2) * (grad[k] * grad[k] - second[k]);
            values[k] -= step * first[k] / (std::sqrt(second[k]) + eps);
        }
    }

    if (!all_finite(y)) {
        throw std::runtime_error("PaCMAP diverged: non-finite embedding after " + std::to_string(total) + " iterations");
    }
    result.final_loss = pacmap_loss(y, result.pairs, final_phase_weights);
    result.embedding = std::move(y);
    return result;
}

/**
 * Mean fraction of each point's `k` nearest neighbors in `x` that are also
 * among its `k` nearest neighbors in `y`.
 */
template <typename A, typename B>
double knn_preservation(const Matrix<A>& x, const Matrix<B>& y, std::size_t k, int threads = 1) {
    if (x.rows() != y.rows()) {
        throw std::invalid_argument("knn_preservation: row count mismatch");
    }
    if (k == 0 || k >= x.rows()) {
        throw std::invalid_argument("knn_preservation: k must lie in [1, N)");
    }
    const auto high = exact_knn(x, k, threads);
    const auto low = exact_knn(y, k, threads);
    double total = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<std::size_t> a, b;
        for (const auto& nb : high[i]) {
            a.push_back(nb.index);
        }
        for (const auto& nb : low[i]) {
            b.push_back(nb.index);
        }
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::size_t> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        total += static_cast<double>(common.size()) / static_cast<double>(k);
    }
    return total / static_cast<double>(x.rows());
}

}

#endif
