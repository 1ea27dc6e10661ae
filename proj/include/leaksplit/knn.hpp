#ifndef LEAKSPLIT_KNN_HPP
#define LEAKSPLIT_KNN_HPP

#include "matrix.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

/**
 * @file knn.hpp
 *
 * @brief Exact (brute-force) Euclidean nearest neighbors.
 */

namespace leaksplit {

struct Neighbor {
    std::size_t index;
    double distance;
};

/**
 * Finds the `k` nearest neighbors of every row, excluding the row itself.
 * Neighbors are sorted by distance, ties broken by lower index.
 * Rows are processed independently so the output does not depend on `threads`.
 */
template <typename T>
std::vector<std::vector<Neighbor>> exact_knn(const Matrix<T>& x, std::size_t k, int threads = 1) {
    const std::size_t n = x.rows();
    if (k >= n) {
        throw std::invalid_argument("k (" + std::to_string(k) + ") must be smaller than the number of points ("
                                    + std::to_string(n) + ")");
    }

    std::vector<std::vector<Neighbor>> output(n);
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<Neighbor> candidates;
        candidates.reserve(n - 1);
        const auto xi = x.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                candidates.push_back({j, squared_distance(xi, x.row(j))});
            }
        }
        auto closer = [](const Neighbor& a, const Neighbor& b) {
            return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
        };
        std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), closer);
        candidates.resize(k);
        for (auto& c : candidates) {
            c.distance = std::sqrt(c.distance);
        }
        output[i] = std::move(candidates);
    });
    return output;
}

}

#endif
