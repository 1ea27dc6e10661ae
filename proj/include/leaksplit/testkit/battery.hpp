#ifndef LEAKSPLIT_TESTKIT_BATTERY_HPP
#define LEAKSPLIT_TESTKIT_BATTERY_HPP

#include "../hdbscan.hpp"
#include "../metrics.hpp"
#include "../pacmap.hpp"
#include "../random.hpp"
#include "oracles.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

/**
 * @file battery.hpp
 *
 * @brief Randomized comparisons of the library against the oracles.
 */

namespace leaksplit::testkit {

/**
 * @brief Outcome of one family of oracle comparisons.
 */
struct BatteryResult {
    std::string name;
    double tolerance = 0;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst_error = 0;
    std::vector<OracleReport> reports;

    BatteryResult(std::string name_, double tolerance_) : name(std::move(name_)), tolerance(tolerance_) {}

    bool passed() const { return cases > 0 && failures == 0; }

    void record(OracleReport report, double error) {
        ++cases;
        worst_error = std::max(worst_error, error);
        if (!(error <= tolerance)) {
            ++failures;
        }
        reports.push_back(std::move(report));
    }

    nlohmann::ordered_json to_json(bool with_reports = false) const {
        nlohmann::ordered_json j;
        j["name"] = name;
        j["tolerance"] = tolerance;
        j["cases"] = cases;
        j["failures"] = failures;
        j["worst_error"] = worst_error;
        j["passed"] = passed();
        if (with_reports) {
            auto& list = j["reports"] = nlohmann::ordered_json::array();
            for (const auto& r : reports) {
                list.push_back(r.to_json());
            }
        }
        return j;
    }
};

/// Random labeling pair with 1 <= N <= max_n points.
inline std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> random_labeling_pair(Rng& rng, std::size_t max_n) {
    const std::size_t n = 1 + rng.index(max_n);
    const std::size_t r = 1 + rng.index(n);
    const std::size_t s = 1 + rng.index(n);
    std::vector<std::int64_t> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        truth[i] = static_cast<std::int64_t>(rng.index(r));
        pred[i] = static_cast<std::int64_t>(rng.index(s));
    }
    return {truth, pred};
}

/**
 * AMI and EMI against exhaustive enumeration on `count` random labeling pairs.
 */
inline BatteryResult check_ami(std::size_t count, std::uint64_t seed, double tolerance = 1e-10, std::size_t max_n = 8) {
    BatteryResult out{"ami_vs_enumeration", tolerance};
    Rng rng(seed);
    const char* names[] = {"arithmetic", "max", "min", "geometric"};
    for (std::size_t c = 0; c < count; ++c) {
        const auto [truth, pred] = random_labeling_pair(rng, max_n);
        const auto table = contingency(truth, pred);
        const auto norm = static_cast<AmiNormalization>(c % 4);
        const double reference = oracle_ami(truth, pred, names[c % 4]);
        const double value = ami(table, norm);
        auto report = OracleReport::compare("ami/" + std::string(names[c % 4]) + "/" + std::to_string(c), reference, value);
        const double err = report.abs_error;
        out.record(std::move(report), err);

        const double emi_ref = oracle_emi(oracle_table(truth, pred));
        auto emi_report = OracleReport::compare("emi/" + std::to_string(c), emi_ref, expected_mutual_information(table));
        const double emi_err = emi_report.abs_error;
        out.record(std::move(emi_report), emi_err);
    }
    return out;
}

/**
 * V-measure, homogeneity and completeness against the direct formula.
 */
inline BatteryResult check_v_measure(std::size_t count, std::uint64_t seed, double tolerance = 1e-12, std::size_t max_n = 8) {
    BatteryResult out{"v_measure_vs_direct", tolerance};
    Rng rng(seed);
    for (std::size_t c = 0; c < count; ++c) {
        const auto [truth, pred] = random_labeling_pair(rng, max_n);
        const auto value = v_measure(contingency(truth, pred));
        const auto reference = oracle_v_measure(truth, pred);
        const std::pair<double, double> parts[] = {{reference.v, value.v}, {reference.homogeneity, value.homogeneity},
                                                   {reference.completeness, value.completeness}};
        const char* labels[] = {"v", "h", "c"};
        for (int k = 0; k < 3; ++k) {
            auto report = OracleReport::compare(std::string(labels[k]) + "/" + std::to_string(c), parts[k].first, parts[k].second);
            const double err = report.abs_error;
            out.record(std::move(report), err);
        }
    }
    return out;
}

/**
 * Random PaCMAP objective on `n_points` points in `dim` dimensions with random
 * pair sets and phase weights.
 */
inline std::pair<Matrix<double>, std::pair<PairSets, PhaseWeights>> random_pacmap_instance(Rng& rng, std::size_t n_points, std::size_t dim) {
    Matrix<double> y(n_points, dim);
    for (auto& v : y.values()) {
        v = rng.normal();
    }
    PairSets pairs;
    auto draw = [&](std::vector<IndexPair>& list, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) {
            const auto i = static_cast<std::uint32_t>(rng.index(n_points));
            auto j = static_cast<std::uint32_t>(rng.index(n_points - 1));
            j += j >= i;
            list.push_back({i, j});
        }
    };
    draw(pairs.neighbor_pairs, 3 * n_points);
    draw(pairs.midnear_pairs, 2 * n_points);
    draw(pairs.further_pairs, 4 * n_points);
    const PhaseWeights weights{rng.uniform(0.5, 3.0), rng.uniform(0.0, 1000.0), rng.uniform(0.5, 2.0)};
    return {std::move(y), {std::move(pairs), weights}};
}

/**
 * Analytic PaCMAP gradient against central differences. The error of an
 * entry is `|analytic - numeric| / max(|analytic|, |numeric|)`, checked where
 * the analytic magnitude exceeds `floor`.
 */
inline BatteryResult check_pacmap_gradient(std::size_t count, std::uint64_t seed, double tolerance = 1e-4, double step = 1e-5,
                                           double floor = 1e-8) {
    BatteryResult out{"pacmap_gradient_vs_finite_difference", tolerance};
    Rng rng(seed);
    for (std::size_t c = 0; c < count; ++c) {
        auto [y, rest] = random_pacmap_instance(rng, 10, 1 + rng.index(4));
        const auto& [pairs, weights] = rest;
        Matrix<double> analytic(y.rows(), y.cols());
        pacmap_loss(y, pairs, weights, &analytic);
        const auto numeric = oracle_finite_diff([&](const Matrix<double>& probe) { return pacmap_loss(probe, pairs, weights); }, y, step);

        double worst = 0;
        std::size_t worst_k = 0;
        for (std::size_t k = 0; k < analytic.values().size(); ++k) {
            const double a = analytic.values()[k];
            const double f = numeric.values()[k];
            if (std::abs(a) <= floor) {
                continue;
            }
            const double rel = std::abs(a - f) / std::max(std::abs(a), std::abs(f));
            if (rel >= worst) {
                worst = rel;
                worst_k = k;
            }
        }
        auto report = OracleReport::compare("gradient/" + std::to_string(c), numeric.values()[worst_k], analytic.values()[worst_k]);
        out.record(std::move(report), worst);
    }
    return out;
}

/**
 * Random point set for the tiny HDBSCAN comparison: a few Gaussian groups,
 * sometimes snapped to a coarse grid so that equal distances occur.
 */
inline Matrix<double> random_tiny_points(Rng& rng, std::size_t max_n = 8) {
    const std::size_t n = 2 + rng.index(max_n - 1);
    const std::size_t groups = 1 + rng.index(3);
    const bool snap = rng.uniform() < 0.25;
    std::vector<std::pair<double, double>> centers;
    for (std::size_t g = 0; g < groups; ++g) {
        centers.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10));
    }
    Matrix<double> points(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& center = centers[rng.index(groups)];
        points(i, 0) = center.first + rng.normal();
        points(i, 1) = center.second + rng.normal();
        if (snap) {
            points(i, 0) = std::round(points(i, 0));
            points(i, 1) = std::round(points(i, 1));
        }
    }
    return points;
}

/**
 * HDBSCAN (min_cluster_size 2, min_samples 2) against the definitional oracle.
 * A case fails on any label difference or a stability difference above 1e-9
 * relative.
 */
inline BatteryResult check_tiny_hdbscan(std::size_t count, std::uint64_t seed) {
    BatteryResult out{"hdbscan_vs_tiny_oracle", 0.0};
    Rng rng(seed);
    for (std::size_t c = 0; c < count; ++c) {
        const auto points = random_tiny_points(rng);
        HdbscanParams params;
        params.min_cluster_size = 2;
        params.min_samples = 2;
        const auto got = extract_clusters(points, params);
        const auto want = oracle_tiny_hdbscan(points, 2, 2);

        double mismatch = got.labels == want.labels && got.stabilities.size() == want.stabilities.size() ? 0.0 : 1.0;
        if (mismatch == 0) {
            for (std::size_t k = 0; k < want.stabilities.size(); ++k) {
                const double scale = std::max(1.0, std::abs(want.stabilities[k]));
                if (std::abs(got.stabilities[k] - want.stabilities[k]) > 1e-9 * scale) {
                    mismatch = 1.0;
                }
            }
        }
        auto report = OracleReport::compare("tiny_hdbscan/" + std::to_string(c) + "/n=" + std::to_string(points.rows()),
                                            static_cast<double>(want.stabilities.size()), static_cast<double>(got.n_clusters()));
        out.record(std::move(report), mismatch);
    }
    return out;
}

/**
 * kNN preservation of independent random embeddings against its chance level
 * `k / (N - 1)`, averaged over `trials`.
 */
inline BatteryResult check_knn_null(std::size_t trials, std::uint64_t seed, double tolerance = 0.02) {
    BatteryResult out{"knn_preservation_vs_chance", tolerance};
    Rng rng(seed);
    const std::size_t n = 200, k = 10;
    double total = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        Matrix<double> x(n, 5), y(n, 2);
        for (auto& v : x.values()) {
            v = rng.normal();
        }
        for (auto& v : y.values()) {
            v = rng.normal();
        }
        total += knn_preservation(x, y, k);
    }
    const double mean = total / static_cast<double>(trials);
    auto report = OracleReport::compare("knn_null/n=200/k=10", oracle_knn_null(n, k), mean);
    const double err = report.abs_error;
    out.record(std::move(report), err);
    return out;
}

/**
 * The full battery run by the `verify` subcommand.
 */
inline std::vector<BatteryResult> run_oracle_battery(std::uint64_t seed) {
    return {check_ami(500, derive_seed(seed, 1)), check_v_measure(500, derive_seed(seed, 2)),
            check_pacmap_gradient(20, derive_seed(seed, 3)), check_tiny_hdbscan(200, derive_seed(seed, 4)),
            check_knn_null(20, derive_seed(seed, 5))};
}

}

#endif
