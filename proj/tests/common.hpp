#ifndef LEAKSPLIT_TESTS_COMMON_HPP
#define LEAKSPLIT_TESTS_COMMON_HPP

#include "leaksplit/matrix.hpp"
#include "leaksplit/random.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

namespace testing_helpers {

/**
 * Fresh scratch directory named after the running test, removed on destruction.
 */
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "leaksplit_";
        if (info) {
            name += std::string(info->test_suite_name()) + "_" + info->name();
        }
        for (auto& ch : name) {
            if (ch == '/') {
                ch = '_';
            }
        }
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline leaksplit::Matrix<double> gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    leaksplit::Rng rng(seed);
    leaksplit::Matrix<double> m(rows, cols);
    for (auto& v : m.values()) {
        v = scale * rng.normal();
    }
    return m;
}

/// Two Gaussian blobs of `per_blob` points, unit spread, centers `gap` apart on the first axis.
inline leaksplit::Matrix<double> two_blobs(std::size_t per_blob, std::size_t dim, double gap, std::uint64_t seed) {
    auto m = gaussian_matrix(2 * per_blob, dim, seed);
    for (std::size_t i = per_blob; i < 2 * per_blob; ++i) {
        m(i, 0) += gap;
    }
    return m;
}

}

#endif
