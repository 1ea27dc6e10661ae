#include "common.hpp"

#include "leaksplit/csv.hpp"
#include "leaksplit/hash.hpp"
#include "leaksplit/knn.hpp"
#include "leaksplit/matrix.hpp"
#include "leaksplit/matrix_io.hpp"
#include "leaksplit/parallel.hpp"
#include "leaksplit/random.hpp"

#include <atomic>
#include <cmath>
#include <set>

using namespace leaksplit;
using testing_helpers::TempDir;

TEST(Matrix, RowViewsAndCast) {
    Matrix<double> m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(m(1, 2), 6);
    EXPECT_EQ(m.row(1)[0], 4);
    m.row(0)[1] = 9;
    EXPECT_EQ(m(0, 1), 9);
    const auto f = m.cast<float>();
    EXPECT_EQ(f.rows(), 2u);
    EXPECT_FLOAT_EQ(f(1, 1), 5.0f);
    EXPECT_THROW(Matrix<double>(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Matrix, Distances) {
    const std::vector<double> a{0, 0}, b{3, 4};
    EXPECT_DOUBLE_EQ(squared_distance(a, b), 25);
    EXPECT_DOUBLE_EQ(euclidean_distance(a, b), 5);
    Matrix<double> bad(1, 1, std::nan(""));
    EXPECT_FALSE(all_finite(bad));
}

TEST(Random, SeedDeterminism) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        differs = differs || x != c.next();
    }
    EXPECT_TRUE(differs);
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Random, RangesAndMoments) {
    Rng rng(7);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(rng.index(7), 7u);
        const double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sum2 / n, 1.0, 0.02);
}

TEST(Parallel, ThreadCountDoesNotChangeResults) {
    std::vector<double> one(1000), many(1000);
    parallel_for(one.size(), 1, [&](std::size_t i) { one[i] = std::sin(static_cast<double>(i)); });
    parallel_for(many.size(), 7, [&](std::size_t i) { many[i] = std::sin(static_cast<double>(i)); });
    EXPECT_EQ(one, many);
}

TEST(Parallel, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(100, 4,
                              [](std::size_t i) {
                                  if (i == 57) {
                                      throw std::runtime_error("boom");
                                  }
                              }),
                 std::runtime_error);
    std::atomic<int> calls = 0;
    parallel_for(0, 4, [&](std::size_t) { ++calls; });
    EXPECT_EQ(calls, 0);
}

TEST(Knn, MatchesBruteForceAndExcludesSelf) {
    const auto x = testing_helpers::gaussian_matrix(60, 4, 3);
    const auto knn = exact_knn(x, 5, 3);
    ASSERT_EQ(knn.size(), 60u);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < x.rows(); ++j) {
            if (j != i) {
                all.emplace_back(squared_distance(x.row(i), x.row(j)), j);
            }
        }
        std::sort(all.begin(), all.end());
        ASSERT_EQ(knn[i].size(), 5u);
        for (std::size_t k = 0; k < 5; ++k) {
            EXPECT_EQ(knn[i][k].index, all[k].second);
            EXPECT_NEAR(knn[i][k].distance, std::sqrt(all[k].first), 1e-12);
        }
    }
    EXPECT_THROW(exact_knn(x, 60), std::invalid_argument);
}

TEST(Knn, TiesBreakByIndex) {
    Matrix<double> x(4, 1, std::vector<double>{0, 1, -1, 0});
    const auto knn = exact_knn(x, 3);
    EXPECT_EQ(knn[0][0].index, 3u);
    EXPECT_EQ(knn[0][1].index, 1u);
    EXPECT_EQ(knn[0][2].index, 2u);
}

TEST(Csv, QuotedFields) {
    EXPECT_EQ(csv::split_line("a,\"b,c\",,d\r"), (std::vector<std::string>{"a", "b,c", "", "d"}));
    EXPECT_EQ(csv::split_line("\"say \"\"hi\"\"\""), (std::vector<std::string>{"say \"hi\""}));
    EXPECT_EQ(csv::escape("plain"), "plain");
    EXPECT_EQ(csv::split_line(csv::escape("x,\"y\"")), (std::vector<std::string>{"x,\"y\""}));
}

TEST(MatrixIo, EmbeddingRoundTripIsBitExact) {
    TempDir dir;
    Matrix<float> m(3, 2, std::vector<float>{1.5f, -0.0f, 3.25e-8f, 7.0f, -1e30f, 0.1f});
    write_embeddings(dir / "m.emb", m);
    EXPECT_EQ(std::filesystem::file_size(dir / "m.emb"), 12u + 24u);
    const auto back = read_embeddings(dir / "m.emb");
    ASSERT_EQ(back.rows(), 3u);
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_EQ(std::bit_cast<std::uint32_t>(back.values()[k]), std::bit_cast<std::uint32_t>(m.values()[k]));
    }
}

TEST(MatrixIo, RejectsBadFiles) {
    TempDir dir;
    binary::write_file(dir / "magic.emb", "EMB2\x01\0\0\0\x01\0\0\0\0\0\0\0");
    EXPECT_THROW(read_embeddings(dir / "magic.emb"), std::runtime_error);
    std::string zero_dim = "EMB1";
    binary::put_u32(zero_dim, 4);
    binary::put_u32(zero_dim, 0);
    binary::write_file(dir / "zero.emb", zero_dim);
    EXPECT_THROW(read_embeddings(dir / "zero.emb"), std::runtime_error);
    std::string truncated = "EMB1";
    binary::put_u32(truncated, 2);
    binary::put_u32(truncated, 2);
    binary::put_f32(truncated, 1.0f);
    binary::write_file(dir / "short.emb", truncated);
    EXPECT_THROW(read_embeddings(dir / "short.emb"), std::runtime_error);
    EXPECT_THROW(read_embeddings(dir / "missing.emb"), std::runtime_error);
}

TEST(Hash, KnownSha256) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
