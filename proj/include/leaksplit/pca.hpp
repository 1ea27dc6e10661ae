#ifndef LEAKSPLIT_PCA_HPP
#define LEAKSPLIT_PCA_HPP

#include "matrix.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file pca.hpp
 *
 * @brief Principal component analysis for fixed-length feature reduction.
 */

namespace leaksplit {

/**
 * @brief Fitted PCA projection: `(x - mean) * components^T`.
 *
 * Rows of `components` are orthonormal and ordered by descending variance
 * (`eigenvalues`, covariance normalized by N - 1). Each component's
 * largest-magnitude entry is positive.
 */
struct PcaModel {
    std::vector<double> mean;
    Matrix<double> components;
    std::vector<double> eigenvalues;

    std::size_t input_dim() const { return mean.size(); }
    std::size_t output_dim() const { return components.rows(); }
};

/**
 * Fits the top `d_out` principal components of the rows of `vectors`.
 *
 * Uses the D x D covariance when D <= N and the N x N Gram matrix otherwise.
 * Throws when `d_out > min(N - 1, D)` or when fewer than `d_out` components
 * carry nonzero variance.
 */
template <typename T>
PcaModel pca_fit(const Matrix<T>& vectors, std::size_t d_out) {
    const std::size_t n = vectors.rows();
    const std::size_t d = vectors.cols();
    if (n < 2) {
        throw std::invalid_argument("pca_fit needs at least 2 rows");
    }
    if (d_out == 0 || d_out > std::min(n - 1, d)) {
        throw std::invalid_argument("pca d_out " + std::to_string(d_out) + " too large for " + std::to_string(n) + "x"
                                    + std::to_string(d) + " input");
    }
    if (!all_finite(vectors)) {
        throw std::invalid_argument("pca_fit: non-finite input");
    }

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = vectors.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            model.mean[k] += static_cast<double>(row[k]);
        }
    }
    for (auto& m : model.mean) {
        m /= static_cast<double>(n);
    }

    Eigen::MatrixXd centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = vectors.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            centered(i, k) = static_cast<double>(row[k]) - model.mean[k];
        }
    }

    const double denom = static_cast<double>(n - 1);
    const bool use_gram = d > n;
    Eigen::MatrixXd scatter = use_gram ? Eigen::MatrixXd(centered * centered.transpose() / denom)
                                       : Eigen::MatrixXd(centered.transpose() * centered / denom);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scatter);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("pca_fit: eigendecomposition failed");
    }

    const auto& values = solver.eigenvalues();
    const auto& vecs = solver.eigenvectors();
    const Eigen::Index size = values.size();
    const double largest = std::max(values(size - 1), 0.0);
    const double tolerance = largest * 1e-10;

    model.components = Matrix<double>(d_out, d);
    for (std::size_t c = 0; c < d_out; ++c) {
        const Eigen::Index idx = size - 1 - static_cast<Eigen::Index>(c);
        const double lambda = values(idx);
        if (!(lambda > tolerance) || largest == 0) {
            throw std::runtime_error("rank deficient below d_out (" + std::to_string(c) + " nonzero components, "
                                     + std::to_string(d_out) + " requested)");
        }

        Eigen::VectorXd direction;
        if (use_gram) {
            direction = centered.transpose() * vecs.col(idx);
            direction /= direction.norm();
        } else {
            direction = vecs.col(idx);
        }

        Eigen::Index argmax = 0;
        for (Eigen::Index k = 1; k < direction.size(); ++k) {
            if (std::abs(direction(k)) > std::abs(direction(argmax))) {
                argmax = k;
            }
        }
        if (direction(argmax) < 0) {
            direction = -direction;
        }

        for (std::size_t k = 0; k < d; ++k) {
            model.components(c, k) = direction(static_cast<Eigen::Index>(k));
        }
        model.eigenvalues.push_back(lambda);
    }
    return model;
}

template <typename T>
Matrix<double> pca_project(const PcaModel& model, const Matrix<T>& vectors) {
    if (vectors.cols() != model.input_dim()) {
        throw std::invalid_argument("pca_project: dimension mismatch (" + std::to_string(vectors.cols()) + " vs "
                                    + std::to_string(model.input_dim()) + ")");
    }
    const std::size_t d = model.input_dim();
    Matrix<double> out(vectors.rows(), model.output_dim());
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
        const auto row = vectors.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            centered[k] = static_cast<double>(row[k]) - model.mean[k];
        }
        for (std::size_t c = 0; c < model.output_dim(); ++c) {
            const auto comp = model.components.row(c);
            double sum = 0;
            for (std::size_t k = 0; k < d; ++k) {
                sum += centered[k] * comp[k];
            }
            out(i, c) = sum;
        }
    }
    return out;
}

}

#endif
