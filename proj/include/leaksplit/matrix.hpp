#ifndef LEAKSPLIT_MATRIX_HPP
#define LEAKSPLIT_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file matrix.hpp
 *
 * @brief Dense row-major matrix used for features, embeddings and codebooks.
 */

namespace leaksplit {

/**
 * @brief Row-major dense matrix with value semantics.
 *
 * Rows are observations (frames), columns are dimensions.
 * The row order is the manifest order for every matrix produced by the pipeline.
 *
 * @tparam T Element type, usually `float` (on-disk) or `double` (computation).
 */
template <typename T>
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) + " does not match "
                                        + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_.data() + r * cols_, cols_); }
    std::span<const T> row(std::size_t r) const { return std::span<const T>(data_.data() + r * cols_, cols_); }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    /**
     * Element-wise conversion to another scalar type.
     */
    template <typename U>
    Matrix<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Matrix<U>(rows_, cols_, std::move(out));
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/**
 * Squared Euclidean distance between two equally long indexable ranges,
 * accumulated in double.
 */
template <typename A, typename B>
double squared_distance(const A& a, const B& b) {
    double sum = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sum += diff * diff;
    }
    return sum;
}

template <typename A, typename B>
double euclidean_distance(const A& a, const B& b) {
    return std::sqrt(squared_distance(a, b));
}

template <typename T>
bool all_finite(const Matrix<T>& x) {
    for (const auto& v : x.values()) {
        if (!std::isfinite(static_cast<double>(v))) {
            return false;
        }
    }
    return true;
}

}

#endif
