#include "common.hpp"

#include "leaksplit/hdbscan.hpp"

#include <numeric>

using namespace leaksplit;
using testing_helpers::TempDir;
using testing_helpers::gaussian_matrix;
using testing_helpers::two_blobs;

namespace {

double tree_weight(const std::vector<WeightedEdge>& edges) {
    double total = 0;
    for (const auto& e : edges) {
        total += e.weight;
    }
    return total;
}

/// Canonical form of a labeling as a set partition: each point maps to the smallest index in its cluster.
std::vector<long> partition_form(const std::vector<int>& labels) {
    std::map<int, long> first;
    std::vector<long> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) {
            out.push_back(-1);
            continue;
        }
        first.emplace(labels[i], static_cast<long>(i));
        out.push_back(first[labels[i]]);
    }
    return out;
}

CorpusManifest manifest_for(const std::vector<std::string>& videos) {
    CorpusManifest m;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        m.records.push_back({"f" + std::to_string(i), videos[i], i, "x.png", std::nullopt});
    }
    return m;
}

}

TEST(CoreDistances, Examples) {
    Matrix<double> line(3, 1, std::vector<double>{0, 1, 3});
    EXPECT_EQ(core_distances(line, 1), (std::vector<double>{1, 1, 2}));

    Matrix<double> dup(4, 1, std::vector<double>{0, 0, 5, 5});
    EXPECT_EQ(core_distances(dup, 1), (std::vector<double>(4, 0.0)));
    EXPECT_EQ(core_distances(Matrix<double>(5, 2, 1.5), 3), (std::vector<double>(5, 0.0)));
    EXPECT_THROW(core_distances(line, 3), std::invalid_argument);
}

TEST(MutualReachability, Examples) {
    EXPECT_EQ(mutual_reachability(5, 1, 2), 5);
    EXPECT_EQ(mutual_reachability(1, 4, 2), 4);
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const double d = rng.uniform(), a = rng.uniform(), b = rng.uniform();
        EXPECT_EQ(mutual_reachability(d, a, b), mutual_reachability(d, b, a));
    }
}

TEST(Mst, ThreePointExample) {
    const double w[3][3] = {{0, 1, 2}, {1, 0, 3}, {2, 3, 0}};
    const auto mst = minimum_spanning_tree(3, [&](std::size_t a, std::size_t b) { return w[a][b]; });
    ASSERT_EQ(mst.size(), 2u);
    EXPECT_EQ(tree_weight(mst), 3.0);
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : mst) {
        edges.emplace(std::min(e.u, e.v), std::max(e.u, e.v));
    }
    EXPECT_EQ(edges, (std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {0, 2}}));

    Matrix<double> two(2, 2, std::vector<double>{0, 0, 3, 4});
    const auto single = build_mst(two, {0, 0});
    ASSERT_EQ(single.size(), 1u);
    EXPECT_EQ(single[0].weight, 5.0);
}

TEST(Mst, NotHeavierThanRandomSpanningTrees) {
    const auto y = gaussian_matrix(40, 3, 7);
    const auto core = core_distances(y, 4);
    const auto mst = build_mst(y, core);
    ASSERT_EQ(mst.size(), 39u);
    const double best = tree_weight(mst);
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        // Random recursive tree: each new vertex attaches to a random earlier one.
        std::vector<std::size_t> order(40);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 39; i > 0; --i) {
            std::swap(order[i], order[rng.index(i + 1)]);
        }
        double total = 0;
        for (std::size_t i = 1; i < 40; ++i) {
            const auto a = order[i], b = order[rng.index(i)];
            total += mutual_reachability(euclidean_distance(y.row(a), y.row(b)), core[a], core[b]);
        }
        EXPECT_LE(best, total + 1e-12);
    }
    auto bad = y;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(build_mst(bad, core), std::invalid_argument);
}

TEST(ExtractClusters, TooFewPointsIsAllNoise) {
    HdbscanParams params;
    params.min_cluster_size = 10;
    const auto labeling = extract_clusters(gaussian_matrix(7, 2, 1), params);
    EXPECT_EQ(labeling.labels, std::vector<int>(7, -1));
    EXPECT_EQ(labeling.n_clusters(), 0u);
    EXPECT_TRUE(extract_clusters(Matrix<double>(1, 2), params).labels == std::vector<int>{-1});
}

TEST(ExtractClusters, TwoSeparatedBlobs) {
    HdbscanParams params;
    params.min_cluster_size = 10;
    const auto y = two_blobs(50, 3, 40.0, 5);
    const auto labeling = extract_clusters(y, params);
    ASSERT_EQ(labeling.n_clusters(), 2u);
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_GE(labeling.labels[i], 0);
        EXPECT_EQ(labeling.labels[i], labeling.labels[i < 50 ? 0 : 50]);
    }
    EXPECT_NE(labeling.labels[0], labeling.labels[50]);
}

TEST(ExtractClusters, FarOutliersAreNoise) {
    auto blobs = two_blobs(50, 2, 40.0, 5);
    Matrix<double> y(105, 2);
    std::copy(blobs.values().begin(), blobs.values().end(), y.values().begin());
    Rng rng(2);
    for (std::size_t i = 100; i < 105; ++i) {
        // Blob diameter is about 6; outliers sit at least 10x that away from both blobs and each other.
        y(i, 0) = 20.0 + 400.0 * std::cos(static_cast<double>(i) * 1.2566);
        y(i, 1) = 400.0 * std::sin(static_cast<double>(i) * 1.2566) + rng.uniform(-1, 1);
    }
    HdbscanParams params;
    params.min_cluster_size = 10;
    const auto labeling = extract_clusters(y, params);
    EXPECT_EQ(labeling.n_clusters(), 2u);
    for (std::size_t i = 100; i < 105; ++i) {
        EXPECT_EQ(labeling.labels[i], -1) << i;
    }
}

TEST(ExtractClusters, PermutationAndScaleInvariance) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix<double> y(90, 2);
        for (std::size_t i = 0; i < 90; ++i) {
            const double cx = static_cast<double>(i % 3) * 12.0;
            y(i, 0) = cx + rng.normal() * (1 + trial % 3);
            y(i, 1) = rng.normal();
        }
        HdbscanParams params;
        params.min_cluster_size = 8;
        const auto base = extract_clusters(y, params);

        auto scaled = y;
        for (auto& v : scaled.values()) {
            v *= 3.5;
        }
        EXPECT_EQ(extract_clusters(scaled, params).labels, base.labels);

        std::vector<std::size_t> order(90);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 89; i > 0; --i) {
            std::swap(order[i], order[rng.index(i + 1)]);
        }
        Matrix<double> permuted(90, 2);
        for (std::size_t i = 0; i < 90; ++i) {
            permuted(i, 0) = y(order[i], 0);
            permuted(i, 1) = y(order[i], 1);
        }
        const auto moved = extract_clusters(permuted, params);
        std::vector<int> back(90);
        for (std::size_t i = 0; i < 90; ++i) {
            back[order[i]] = moved.labels[i];
        }
        EXPECT_EQ(partition_form(back), partition_form(base.labels));

        for (auto size : base.cluster_sizes()) {
            EXPECT_GE(size, params.min_cluster_size);
        }
        for (std::size_t c = 1; c < base.n_clusters(); ++c) {
            EXPECT_GE(base.cluster_sizes()[c - 1], base.cluster_sizes()[c]);
        }
    }
}

TEST(ExtractClusters, PermutationInvariantUnderTiedDistances) {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        // Integer grid points give many equal mutual-reachability weights.
        Matrix<double> y(60, 2);
        for (std::size_t i = 0; i < 60; ++i) {
            y(i, 0) = std::round(static_cast<double>(i % 2) * 9.0 + 1.5 * rng.normal());
            y(i, 1) = std::round(1.5 * rng.normal());
        }
        HdbscanParams params;
        params.min_cluster_size = 5;
        const auto base = extract_clusters(y, params);
        std::vector<std::size_t> order(60);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 59; i > 0; --i) {
            std::swap(order[i], order[rng.index(i + 1)]);
        }
        Matrix<double> permuted(60, 2);
        for (std::size_t i = 0; i < 60; ++i) {
            permuted(i, 0) = y(order[i], 0);
            permuted(i, 1) = y(order[i], 1);
        }
        const auto moved = extract_clusters(permuted, params);
        std::vector<int> back(60);
        for (std::size_t i = 0; i < 60; ++i) {
            back[order[i]] = moved.labels[i];
        }
        EXPECT_EQ(partition_form(back), partition_form(base.labels)) << "trial " << trial;
    }
}

TEST(ExtractClusters, Validation) {
    HdbscanParams params;
    params.min_cluster_size = 1;
    EXPECT_THROW(extract_clusters(gaussian_matrix(5, 2, 1), params), std::invalid_argument);
}

TEST(CondensedTreeJson, ListsEdges) {
    HdbscanParams params;
    params.min_cluster_size = 5;
    const auto fit = hdbscan_fit(two_blobs(20, 2, 30.0, 1), params);
    const auto j = condensed_tree_json(fit.tree);
    EXPECT_EQ(j["n_points"], 40);
    EXPECT_EQ(j["edges"].size(), fit.tree.edges.size());
    EXPECT_GE(fit.tree.edges.size(), 40u);
}

TEST(ClusterSummary, Examples) {
    const auto manifest = manifest_for({"a", "a", "b", "b", "c", "c"});
    ClusterLabeling perfect{{0, 0, 1, 1, 2, 2}, {1, 1, 1}};
    const auto s = cluster_summary(perfect, manifest);
    ASSERT_EQ(s.clusters.size(), 3u);
    for (const auto& c : s.clusters) {
        EXPECT_EQ(c.dominant_fraction, 1.0);
    }
    for (const auto& v : s.videos) {
        EXPECT_EQ(v.cluster_span, 1u);
    }

    ClusterLabeling split{{0, 1, 2, 2, 2, 2}, {1, 1, 1}};
    const auto t = cluster_summary(split, manifest);
    EXPECT_EQ(t.videos[0].video_id, "a");
    EXPECT_EQ(t.videos[0].cluster_span, 2u);

    ClusterLabeling noise{std::vector<int>(6, -1), {}};
    const auto u = cluster_summary(noise, manifest);
    EXPECT_TRUE(u.clusters.empty());
    EXPECT_EQ(u.noise, 6u);
    for (const auto& v : u.videos) {
        EXPECT_EQ(v.cluster_span, 0u);
    }
    EXPECT_THROW(cluster_summary(ClusterLabeling{{0}, {1}}, manifest), std::invalid_argument);
}

TEST(Labeling, CsvRoundTrip) {
    TempDir dir;
    const auto manifest = manifest_for({"a", "a", "b", "b"});
    ClusterLabeling labeling{{1, -1, 0, 0}, {2.5, 0.125}};
    write_labeling(dir / "labels.csv", labeling, manifest);
    const auto back = read_labeling(dir / "labels.csv", manifest);
    EXPECT_EQ(back.labels, labeling.labels);
    EXPECT_EQ(back.stabilities, labeling.stabilities);

    EXPECT_THROW(read_labeling(dir / "missing.csv", manifest), std::runtime_error);
    EXPECT_THROW(read_labeling(dir / "labels.csv", manifest_for({"a"})), std::runtime_error);
}
