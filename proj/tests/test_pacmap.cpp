#include "common.hpp"

#include "leaksplit/pacmap.hpp"
#include "leaksplit/testkit/oracles.hpp"

#include <cmath>
#include <set>

using namespace leaksplit;
using testing_helpers::gaussian_matrix;
using testing_helpers::two_blobs;

namespace {

PacmapConfig small_config(std::size_t m = 2) {
    PacmapConfig config;
    config.m = m;
    config.iters = {30, 30, 60};
    return config;
}

std::vector<std::uint32_t> targets_of(const std::vector<IndexPair>& pairs, std::uint32_t source) {
    std::vector<std::uint32_t> out;
    for (const auto& p : pairs) {
        if (p.i == source) {
            out.push_back(p.j);
        }
    }
    return out;
}

}

TEST(PacmapPairs, CollinearThreePoints) {
    Matrix<double> x(3, 1, std::vector<double>{0, 1, 10});
    PacmapConfig config;
    config.n_neighbors = 1;
    const auto pairs = build_knn_pairs(x, config);
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_EQ(targets_of(pairs, 0), std::vector<std::uint32_t>{1});
    EXPECT_EQ(targets_of(pairs, 1), std::vector<std::uint32_t>{0});
    EXPECT_EQ(targets_of(pairs, 2), std::vector<std::uint32_t>{1});
}

TEST(PacmapPairs, DuplicatesPairWithTheirTwin) {
    const auto base = gaussian_matrix(10, 3, 5, 10.0);
    Matrix<double> x(20, 3);
    for (std::size_t i = 0; i < 20; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            x(i, k) = base(i / 2, k);
        }
    }
    PacmapConfig config;
    config.n_neighbors = 1;
    const auto pairs = build_knn_pairs(x, config);
    for (std::uint32_t i = 0; i < 20; ++i) {
        EXPECT_EQ(targets_of(pairs, i), std::vector<std::uint32_t>{i ^ 1u});
    }
}

TEST(PacmapPairs, CountsAndValidity) {
    const auto x = gaussian_matrix(100, 6, 2);
    PacmapConfig config;
    const auto knn = build_knn_pairs(x, config);
    EXPECT_EQ(knn.size(), 1000u);
    const auto pairs = sample_pairs(x, knn, config);
    EXPECT_EQ(pairs.midnear_pairs.size(), 500u);
    EXPECT_EQ(pairs.further_pairs.size(), 2000u);
    for (std::uint32_t i = 0; i < 100; ++i) {
        const auto nb = targets_of(pairs.neighbor_pairs, i);
        EXPECT_EQ(std::set<std::uint32_t>(nb.begin(), nb.end()).size(), nb.size());
        for (auto j : targets_of(pairs.further_pairs, i)) {
            EXPECT_EQ(std::find(nb.begin(), nb.end(), j), nb.end());
        }
    }
    for (const auto* list : {&pairs.neighbor_pairs, &pairs.midnear_pairs, &pairs.further_pairs}) {
        for (const auto& p : *list) {
            EXPECT_NE(p.i, p.j);
            EXPECT_LT(p.i, 100u);
            EXPECT_LT(p.j, 100u);
        }
    }

    config.mn_ratio = 0;
    EXPECT_TRUE(sample_pairs(x, knn, config).midnear_pairs.empty());
}

TEST(PacmapPairs, SeededAndTranslationInvariant) {
    const auto x = gaussian_matrix(80, 5, 3);
    PacmapConfig config;
    config.seed = 17;
    const auto a = sample_pairs(x, build_knn_pairs(x, config), config);
    const auto b = sample_pairs(x, build_knn_pairs(x, config), config);
    EXPECT_EQ(a.neighbor_pairs, b.neighbor_pairs);
    EXPECT_EQ(a.midnear_pairs, b.midnear_pairs);
    EXPECT_EQ(a.further_pairs, b.further_pairs);

    auto shifted = x;
    for (std::size_t i = 0; i < 80; ++i) {
        for (std::size_t k = 0; k < 5; ++k) {
            shifted(i, k) += 3.0 * static_cast<double>(k) - 7.0;
        }
    }
    EXPECT_EQ(build_knn_pairs(shifted, config), a.neighbor_pairs);
}

TEST(PacmapPairs, Errors) {
    PacmapConfig config;
    EXPECT_THROW(build_knn_pairs(gaussian_matrix(10, 2, 1), config), std::invalid_argument);
    auto x = gaussian_matrix(20, 2, 1);
    x(4, 0) = std::nan("");
    EXPECT_THROW(build_knn_pairs(x, config), std::invalid_argument);
    config.m = 0;
    EXPECT_THROW(config.validate(), std::invalid_argument);
}

TEST(PacmapPairs, FewPointsUseAvailableMidnear) {
    const auto x = gaussian_matrix(4, 2, 6);
    PacmapConfig config;
    config.n_neighbors = 2;
    const auto pairs = sample_pairs(x, build_knn_pairs(x, config), config);
    EXPECT_EQ(pairs.midnear_pairs.size(), 4u);
    EXPECT_FALSE(pairs.further_pairs.empty());
}

TEST(PacmapSchedule, PhaseWeights) {
    const std::array<std::size_t, 3> phases{100, 100, 250};
    EXPECT_EQ(phase_weights(0, phases).midnear, 1000.0);
    EXPECT_NEAR(phase_weights(50, phases).midnear, 501.5, 1e-12);
    EXPECT_EQ(phase_weights(150, phases).neighbor, 3.0);
    EXPECT_EQ(phase_weights(150, phases).midnear, 3.0);
    EXPECT_EQ(phase_weights(300, phases).midnear, 0.0);
    EXPECT_EQ(phase_weights(300, phases).neighbor, 1.0);
}

TEST(PacmapLoss, GradientMatchesFiniteDifferences) {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const auto y = gaussian_matrix(10, 3, 40 + trial);
        PairSets pairs;
        for (std::uint32_t i = 0; i < 10; ++i) {
            const auto j = static_cast<std::uint32_t>((i + 1 + rng.index(9)) % 10);
            pairs.neighbor_pairs.push_back({i, j});
            pairs.midnear_pairs.push_back({i, static_cast<std::uint32_t>((i + 3) % 10)});
            pairs.further_pairs.push_back({i, static_cast<std::uint32_t>((i + 5) % 10)});
        }
        const PhaseWeights weights{2.0, 500.0, 1.0};
        Matrix<double> analytic(10, 3);
        pacmap_loss(y, pairs, weights, &analytic);
        const auto numeric =
            testkit::oracle_finite_diff([&](const Matrix<double>& p) { return pacmap_loss(p, pairs, weights); }, y, 1e-4);
        for (std::size_t k = 0; k < analytic.values().size(); ++k) {
            const double a = analytic.values()[k];
            const double f = numeric.values()[k];
            if (std::abs(a) > 1e-8) {
                EXPECT_LT(std::abs(a - f) / std::max(std::abs(a), std::abs(f)), 1e-4);
            }
        }
    }
}

TEST(PacmapFit, TwoPointsSeparate) {
    Matrix<double> x(2, 3, std::vector<double>{0, 0, 0, 1, 1, 1});
    const auto result = pacmap_fit(x, small_config(4));
    ASSERT_EQ(result.embedding.rows(), 2u);
    EXPECT_TRUE(all_finite(result.embedding));
    EXPECT_GT(euclidean_distance(result.embedding.row(0), result.embedding.row(1)), 0);
}

TEST(PacmapFit, LossDecreasesAndDeterministic) {
    const auto x = two_blobs(100, 10, 20.0, 8);
    auto config = small_config();
    config.seed = 3;
    const auto a = pacmap_fit(x, config);
    EXPECT_LT(a.final_loss, a.initial_loss);
    EXPECT_EQ(a.loss_trace.size(), config.total_iters());
    EXPECT_TRUE(a.pca_initialized);
    const auto b = pacmap_fit(x, config);
    EXPECT_EQ(a.embedding, b.embedding);

    config.threads = 3;
    EXPECT_EQ(pacmap_fit(x, config).embedding, a.embedding);
}

TEST(PacmapFit, RandomInitWhenPcaUnavailable) {
    const auto x = gaussian_matrix(30, 2, 9);
    auto config = small_config(5);
    const auto result = pacmap_fit(x, config);
    EXPECT_FALSE(result.pca_initialized);
    EXPECT_TRUE(all_finite(result.embedding));
    EXPECT_EQ(result.embedding.cols(), 5u);
}

TEST(PacmapFit, SmallInputClampsNeighbors) {
    const auto x = gaussian_matrix(5, 3, 1);
    const auto result = pacmap_fit(x, small_config());
    EXPECT_EQ(result.n_neighbors_used, 4u);
    EXPECT_THROW(pacmap_fit(gaussian_matrix(1, 3, 1), small_config()), std::invalid_argument);
}

TEST(KnnPreservation, IdentityPermutationAndEmbedding) {
    const auto x = gaussian_matrix(500, 4, 12);
    EXPECT_EQ(knn_preservation(x, x, 10), 1.0);

    Rng rng(5);
    std::vector<std::size_t> order(500);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 499; i > 0; --i) {
        std::swap(order[i], order[rng.index(i + 1)]);
    }
    Matrix<double> permuted(500, 4);
    for (std::size_t i = 0; i < 500; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            permuted(i, k) = x(order[i], k);
        }
    }
    const double null_level = testkit::oracle_knn_null(500, 10);
    EXPECT_LT(knn_preservation(x, permuted, 10), 2 * null_level);

    const auto blobs = two_blobs(100, 10, 20.0, 8);
    const auto embedded = pacmap_fit(blobs, small_config()).embedding;
    EXPECT_GT(knn_preservation(blobs, embedded, 10), 2 * testkit::oracle_knn_null(200, 10));
    EXPECT_THROW(knn_preservation(x, x, 500), std::invalid_argument);
}
