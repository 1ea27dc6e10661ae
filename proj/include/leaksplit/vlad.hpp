#ifndef LEAKSPLIT_VLAD_HPP
#define LEAKSPLIT_VLAD_HPP

#include "descriptors.hpp"
#include "matrix.hpp"
#include "matrix_io.hpp"
#include "parallel.hpp"
#include "pca.hpp"
#include "random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file vlad.hpp
 *
 * @brief k-means codebooks and VLAD aggregation of local descriptors.
 */

namespace leaksplit {

/**
 * @brief K x p matrix of codewords.
 */
struct Codebook {
    Matrix<double> centers;

    std::size_t size() const { return centers.rows(); }
    std::size_t dim() const { return centers.cols(); }
};

inline constexpr std::size_t default_codebook_size = 64;
inline constexpr std::size_t max_codebook_samples = 200000;

/**
 * @brief k-means run details: the codebook plus the inertia after every assignment step.
 */
struct KMeansFit {
    Codebook codebook;
    std::vector<double> inertia_trace;
    std::vector<std::size_t> assignment;
    int iterations = 0;
};

struct KMeansOptions {
    int max_iterations = 100;
    double relative_tolerance = 1e-4;
    int threads = 1;
};

namespace detail {

inline std::size_t nearest_center(std::span<const double> x, const Matrix<double>& centers, double& best) {
    std::size_t arg = 0;
    best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.rows(); ++k) {
        const double d = squared_distance(x, centers.row(k));
        if (d < best) {
            best = d;
            arg = k;
        }
    }
    return arg;
}

inline double assign_points(const Matrix<double>& x, const Matrix<double>& centers, std::vector<std::size_t>& assignment,
                            std::vector<double>& cost, int threads) {
    parallel_for(x.rows(), threads, [&](std::size_t i) { assignment[i] = nearest_center(x.row(i), centers, cost[i]); });
    double inertia = 0;
    for (double c : cost) {
        inertia += c;
    }
    return inertia;
}

}

/**
 * k-means++ seeding followed by Lloyd iterations.
 *
 * Stops after `max_iterations` updates or when the relative inertia decrease
 * falls below `relative_tolerance`. A center that loses all its points is
 * moved onto the point farthest from its own center. Deterministic for a seed.
 */
inline KMeansFit kmeans_fit(const Matrix<double>& x, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {}) {
    const std::size_t n = x.rows();
    if (k == 0) {
        throw std::invalid_argument("codebook size must be positive");
    }
    if (n < k) {
        throw std::invalid_argument("fewer samples (" + std::to_string(n) + ") than codewords (" + std::to_string(k) + ")");
    }
    if (!all_finite(x)) {
        throw std::invalid_argument("k-means input contains non-finite values");
    }

    Rng rng(seed);
    Matrix<double> centers(k, x.cols());
    std::vector<double> closest(n, std::numeric_limits<double>::infinity());
    std::size_t chosen = rng.index(n);
    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0;
            for (double d : closest) {
                total += d;
            }
            if (!(total > 0)) {
                throw std::invalid_argument("fewer distinct samples than codewords (" + std::to_string(k) + ")");
            }
            const double target = rng.uniform() * total;
            double running = 0;
            chosen = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (closest[i] == 0) {
                    continue;
                }
                running += closest[i];
                chosen = i;
                if (running > target) {
                    break;
                }
            }
        }
        const auto src = x.row(chosen);
        std::copy(src.begin(), src.end(), centers.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(x.row(i), centers.row(c)));
        }
    }

    KMeansFit fit;
    fit.assignment.assign(n, 0);
    std::vector<double> cost(n);
    double inertia = detail::assign_points(x, centers, fit.assignment, cost, options.threads);
    fit.inertia_trace.push_back(inertia);

    std::vector<double> sums(k * x.cols());
    std::vector<std::size_t> counts(k);
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = fit.assignment[i];
            ++counts[c];
            const auto row = x.row(i);
            for (std::size_t j = 0; j < x.cols(); ++j) {
                sums[c * x.cols() + j] += row[j];
            }
        }

        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            auto center = centers.row(c);
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < x.cols(); ++j) {
                    center[j] = sums[c * x.cols() + j] / static_cast<double>(counts[c]);
                }
                continue;
            }
            std::size_t farthest = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && (farthest == n || cost[i] > cost[farthest])) {
                    farthest = i;
                }
            }
            taken[farthest] = true;
            const auto src = x.row(farthest);
            std::copy(src.begin(), src.end(), center.begin());
        }

        const double previous = inertia;
        inertia = detail::assign_points(x, centers, fit.assignment, cost, options.threads);
        fit.inertia_trace.push_back(inertia);
        fit.iterations = iter;
        if (previous - inertia <= options.relative_tolerance * previous) {
            break;
        }
    }

    fit.codebook.centers = std::move(centers);
    return fit;
}

inline Codebook train_codebook(const Matrix<double>& descriptor_sample, std::size_t k, std::uint64_t seed, int threads = 1) {
    KMeansOptions options;
    options.threads = threads;
    return kmeans_fit(descriptor_sample, k, seed, options).codebook;
}

/**
 * Pools local descriptors across frames into one training matrix, keeping a
 * seeded uniform subsample of at most `max_samples` rows. Only frames with
 * `include[i]` set are used when a mask is given.
 */
inline Matrix<double> pool_descriptors(const std::vector<LocalDescriptorSet>& sets, std::size_t max_samples, std::uint64_t seed,
                                       const std::vector<bool>* include = nullptr) {
    std::size_t p = 0;
    std::vector<std::pair<std::size_t, std::size_t>> refs;
    for (std::size_t f = 0; f < sets.size(); ++f) {
        if (include && !(*include)[f]) {
            continue;
        }
        const auto& d = sets[f].descriptors;
        if (d.rows() > 0) {
            p = d.cols();
        }
        for (std::size_t r = 0; r < d.rows(); ++r) {
            refs.emplace_back(f, r);
        }
    }

    if (refs.size() > max_samples) {
        // Partial Fisher-Yates, then restore file order for reproducible accumulation.
        Rng rng(seed);
        for (std::size_t i = 0; i < max_samples; ++i) {
            std::swap(refs[i], refs[i + rng.index(refs.size() - i)]);
        }
        refs.resize(max_samples);
        std::sort(refs.begin(), refs.end());
    }

    Matrix<double> out(refs.size(), p);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto src = sets[refs[i].first].descriptors.row(refs[i].second);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

/**
 * @brief Aggregated residual vector of one frame (length K * p), unit norm or zero.
 */
struct VladVector {
    std::string frame_id;
    std::vector<double> values;
};

/**
 * Sums the residuals of each descriptor to its nearest codeword, L2-normalizes
 * every nonzero per-codeword block, then L2-normalizes the concatenation.
 * A frame without descriptors yields the zero vector.
 */
inline VladVector vlad_encode(const LocalDescriptorSet& frame, const Codebook& codebook) {
    const std::size_t k = codebook.size();
    const std::size_t p = codebook.dim();
    VladVector out{frame.frame_id, std::vector<double>(k * p, 0.0)};
    const auto& desc = frame.descriptors;
    if (desc.rows() == 0) {
        return out;
    }
    if (desc.cols() != p) {
        throw std::invalid_argument("descriptor dimension " + std::to_string(desc.cols()) + " does not match codebook dimension "
                                    + std::to_string(p));
    }

    std::vector<double> x(p);
    for (std::size_t r = 0; r < desc.rows(); ++r) {
        const auto row = desc.row(r);
        std::copy(row.begin(), row.end(), x.begin());
        double unused;
        const std::size_t c = detail::nearest_center(x, codebook.centers, unused);
        const auto center = codebook.centers.row(c);
        for (std::size_t j = 0; j < p; ++j) {
            out.values[c * p + j] += x[j] - center[j];
        }
    }

    double total = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::span<double> block(out.values.data() + c * p, p);
        double norm = 0;
        for (double v : block) {
            norm += v * v;
        }
        if (norm > 0) {
            norm = std::sqrt(norm);
            for (double& v : block) {
                v /= norm;
            }
            total += 1.0;
        }
    }
    if (total > 0) {
        double norm = 0;
        for (double v : out.values) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : out.values) {
            v /= norm;
        }
    }
    return out;
}

/**
 * @brief Learned local-descriptor model: codebook plus optional PCA reduction.
 */
struct VladModel {
    Codebook codebook;
    std::optional<PcaModel> pca;
};

/**
 * Persists a VLAD model into `dir`: `codebook.emb`, and when PCA is used
 * `pca_components.emb` and `pca_mean.emb`, all in `EMB1` format, plus a
 * `vlad_model.json` header recording K, p and d_out.
 */
inline void save_vlad_model(const std::filesystem::path& dir, const VladModel& model) {
    write_embeddings(dir / "codebook.emb", model.codebook.centers);
    nlohmann::ordered_json header;
    header["K"] = model.codebook.size();
    header["p"] = model.codebook.dim();
    header["d_out"] = model.pca ? model.pca->output_dim() : model.codebook.size() * model.codebook.dim();
    header["pca"] = model.pca.has_value();
    if (model.pca) {
        write_embeddings(dir / "pca_components.emb", model.pca->components);
        write_embeddings(dir / "pca_mean.emb", Matrix<double>(1, model.pca->mean.size(), model.pca->mean));
    }
    std::ofstream out(dir / "vlad_model.json", std::ios::binary);
    out << header.dump(2) << '\n';
}

inline VladModel load_vlad_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "vlad_model.json");
    if (!in) {
        throw std::runtime_error("cannot open " + (dir / "vlad_model.json").string());
    }
    const auto header = nlohmann::json::parse(in);
    VladModel model;
    model.codebook.centers = read_embeddings(dir / "codebook.emb").cast<double>();
    if (model.codebook.size() != header.at("K").get<std::size_t>() || model.codebook.dim() != header.at("p").get<std::size_t>()) {
        throw std::runtime_error("codebook shape does not match vlad_model.json");
    }
    if (header.at("pca").get<bool>()) {
        PcaModel pca;
        pca.components = read_embeddings(dir / "pca_components.emb").cast<double>();
        const auto mean = read_embeddings(dir / "pca_mean.emb");
        pca.mean.assign(mean.values().begin(), mean.values().end());
        if (pca.components.rows() != header.at("d_out").get<std::size_t>() || pca.components.cols() != pca.mean.size()) {
            throw std::runtime_error("PCA model shape does not match vlad_model.json");
        }
        model.pca = std::move(pca);
    }
    return model;
}

}

#endif
