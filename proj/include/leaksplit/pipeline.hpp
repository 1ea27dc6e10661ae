#ifndef LEAKSPLIT_PIPELINE_HPP
#define LEAKSPLIT_PIPELINE_HPP

#include "corpus.hpp"
#include "descriptors.hpp"
#include "hash.hpp"
#include "hdbscan.hpp"
#include "matrix_io.hpp"
#include "metrics.hpp"
#include "pacmap.hpp"
#include "parallel.hpp"
#include "pca.hpp"
#include "random.hpp"
#include "splitter.hpp"
#include "vlad.hpp"

#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file pipeline.hpp
 *
 * @brief File-based stages (features, reduce, cluster, split, evaluate) and
 * the end-to-end run that chains them.
 *
 * Each stage reads its inputs from disk and writes its outputs to disk so any
 * stage can be rerun or replaced on its own. Stage artifacts contain no
 * timestamps or timings; those live only in the run manifest.
 */

namespace leaksplit {

enum class FeatureSource { hog, local_descriptors, global_embeddings };

inline const char* feature_source_name(FeatureSource s) {
    switch (s) {
    case FeatureSource::hog:
        return "hog";
    case FeatureSource::local_descriptors:
        return "local";
    case FeatureSource::global_embeddings:
        return "global";
    }
    return "?";
}

/**
 * @brief Every knob of a run.
 */
struct PipelineConfig {
    FeatureSource source = FeatureSource::hog;
    /// LDS1 file for `local_descriptors`, EMB1 file for `global_embeddings`.
    std::filesystem::path feature_file;
    std::size_t hog_side = default_hog_side;
    HogParams hog;
    std::size_t vlad_k = default_codebook_size;
    /// Output dimension of the VLAD PCA. VLAD vectors no longer than this,
    /// or any length when it is 0, are kept as they are.
    std::size_t pca_dim = 1024;
    PacmapConfig pacmap;
    HdbscanParams hdbscan;
    SplitSpec split;
    NoiseGrouping noise_grouping = NoiseGrouping::by_video;
    NoisePolicy metric_noise = NoisePolicy::single_cluster;
    AmiNormalization ami_norm = AmiNormalization::arithmetic;
    bool condensed_tree = false;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (source != FeatureSource::hog && feature_file.empty()) {
            throw std::invalid_argument(std::string("feature source '") + feature_source_name(source) + "' needs an input file");
        }
        if (source == FeatureSource::hog && !feature_file.empty()) {
            throw std::invalid_argument("HOG features are computed from images; do not pass a feature file");
        }
        if (hog_side == 0) {
            throw std::invalid_argument("HOG input side must be positive");
        }
        hog.validate();
        if (hog_side < hog.cell_size * hog.block_cells) {
            throw std::invalid_argument("HOG input side too small for one block");
        }
        if (source == FeatureSource::local_descriptors && vlad_k == 0) {
            throw std::invalid_argument("VLAD codebook size must be positive");
        }
        pacmap.validate();
        hdbscan.validate();
        split.validate();
        if (threads < 1) {
            throw std::invalid_argument("threads must be at least 1");
        }
    }

    /**
     * Stage seeds derive from the run seed so that changing it moves every
     * stochastic stage.
     */
    std::uint64_t codebook_seed() const { return derive_seed(seed, 11); }
    std::uint64_t pacmap_seed() const { return derive_seed(seed, 12); }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["feature_source"] = feature_source_name(source);
        j["feature_file"] = feature_file.string();
        j["hog_side"] = hog_side;
        j["hog"] = {{"cell_size", hog.cell_size}, {"block_cells", hog.block_cells}, {"bins", hog.bins}, {"clip", hog.clip}};
        j["vlad_k"] = vlad_k;
        j["pca_dim"] = pca_dim;
        j["pacmap"] = {{"dim", pacmap.m},
                       {"n_neighbors", pacmap.n_neighbors},
                       {"mn_ratio", pacmap.mn_ratio},
                       {"fp_ratio", pacmap.fp_ratio},
                       {"iters", pacmap.iters},
                       {"learning_rate", pacmap.learning_rate}};
        j["hdbscan"] = {{"min_cluster_size", hdbscan.min_cluster_size}, {"min_samples", hdbscan.effective_min_samples()}};
        j["split"] = {{"ratios", split.ratios}, {"seed", split.seed}};
        j["noise_grouping"] = noise_grouping == NoiseGrouping::by_video ? "by_video" : "singletons";
        j["metric_noise"] = metric_noise == NoisePolicy::single_cluster ? "single_cluster" : "singletons";
        const char* norms[] = {"arithmetic", "max", "min", "geometric"};
        j["ami_norm"] = norms[static_cast<int>(ami_norm)];
        j["seed"] = seed;
        j["threads"] = threads;
        return j;
    }
};

inline AmiNormalization parse_ami_norm(const std::string& name) {
    if (name == "arithmetic") {
        return AmiNormalization::arithmetic;
    }
    if (name == "max") {
        return AmiNormalization::max;
    }
    if (name == "min") {
        return AmiNormalization::min;
    }
    if (name == "geometric") {
        return AmiNormalization::geometric;
    }
    throw std::invalid_argument("unknown AMI normalization '" + name + "'");
}

/// Sink for warnings; defaults to stderr.
using Logger = std::function<void(const std::string&)>;

inline Logger stderr_logger() {
    return [](const std::string& message) { std::cerr << "warning: " << message << '\n'; };
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& value) {
    binary::write_file(path, value.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    return nlohmann::json::parse(binary::read_file(path));
}

/**
 * Computes the feature matrix for the manifest, rows in manifest order, and
 * writes `features.emb` plus `features.json` into `out_dir`.
 */
inline Matrix<float> run_features(const CorpusManifest& manifest, const PipelineConfig& config, const std::filesystem::path& out_dir,
                                  const Logger& warn = stderr_logger()) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    const std::size_t n = manifest.records.size();
    if (n == 0) {
        throw std::invalid_argument("manifest has no frames");
    }

    nlohmann::ordered_json meta;
    meta["source"] = feature_source_name(config.source);
    Matrix<float> features;

    if (config.source == FeatureSource::hog) {
        const std::size_t dim = config.hog.dimension(config.hog_side, config.hog_side);
        features = Matrix<float>(n, dim);
        parallel_for(n, config.threads, [&](std::size_t i) {
            const auto image = load_image(manifest.resolve(manifest.records[i]), config.hog_side);
            const auto hog = compute_hog(image, config.hog, manifest.records[i].frame_id);
            std::copy(hog.values.begin(), hog.values.end(), features.row(i).begin());
        });
        meta["hog_side"] = config.hog_side;
    } else if (config.source == FeatureSource::global_embeddings) {
        features = ingest_global_embeddings(config.feature_file, manifest).values;
    } else {
        const auto sets = ingest_local_descriptors(config.feature_file, manifest);
        const auto sample = pool_descriptors(sets, max_codebook_samples, config.codebook_seed());
        KMeansOptions options;
        options.threads = config.threads;
        const auto fit = kmeans_fit(sample, config.vlad_k, config.codebook_seed(), options);
        VladModel model{fit.codebook, std::nullopt};

        Matrix<double> vlad(n, config.vlad_k * fit.codebook.dim());
        std::size_t empty_frames = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto encoded = vlad_encode(sets[i], model.codebook);
            empty_frames += sets[i].descriptors.rows() == 0;
            std::copy(encoded.values.begin(), encoded.values.end(), vlad.row(i).begin());
        }
        if (empty_frames > 0) {
            warn(std::to_string(empty_frames) + " frame(s) have no local descriptors and get a zero VLAD vector");
        }

        if (config.pca_dim > 0 && vlad.cols() > config.pca_dim) {
            std::size_t d_out = config.pca_dim;
            const std::size_t cap = std::min(n - 1, vlad.cols());
            if (d_out > cap) {
                warn("PCA dimension " + std::to_string(d_out) + " reduced to " + std::to_string(cap) + " (limited by N - 1 and VLAD length)");
                d_out = cap;
            }
            model.pca = pca_fit(vlad, d_out);
            features = pca_project(*model.pca, vlad).cast<float>();
        } else {
            features = vlad.cast<float>();
        }
        save_vlad_model(out_dir, model);
        meta["vlad_k"] = config.vlad_k;
        meta["descriptor_dim"] = fit.codebook.dim();
        meta["kmeans_iterations"] = fit.iterations;
        meta["kmeans_inertia_trace"] = fit.inertia_trace;
        meta["codebook_samples"] = sample.rows();
    }

    if (!all_finite(features)) {
        throw std::runtime_error("feature extraction produced non-finite values");
    }
    meta["rows"] = features.rows();
    meta["cols"] = features.cols();
    write_embeddings(out_dir / "features.emb", features);
    write_json(out_dir / "features.json", meta);
    return features;
}

/**
 * Runs PaCMAP on a feature file and writes `embedding.emb` and
 * `embedding.json` (loss trace and diagnostics).
 */
inline Matrix<float> run_reduce(const std::filesystem::path& features_path, const PipelineConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto features = read_embeddings(features_path);
    auto pacmap = config.pacmap;
    pacmap.seed = config.pacmap_seed();
    pacmap.threads = config.threads;
    const auto result = pacmap_fit(features, pacmap);
    const auto embedding = result.embedding.cast<float>();

    nlohmann::ordered_json meta;
    meta["rows"] = embedding.rows();
    meta["cols"] = embedding.cols();
    meta["n_neighbors_used"] = result.n_neighbors_used;
    meta["pca_initialized"] = result.pca_initialized;
    meta["initial_loss"] = result.initial_loss;
    meta["final_loss"] = result.final_loss;
    meta["loss_trace"] = result.loss_trace;
    write_embeddings(out_dir / "embedding.emb", embedding);
    write_json(out_dir / "embedding.json", meta);
    return embedding;
}

inline nlohmann::ordered_json cluster_summary_json(const ClusterSummary& summary) {
    nlohmann::ordered_json j;
    j["n_clusters"] = summary.clusters.size();
    j["noise"] = summary.noise;
    auto& clusters = j["clusters"] = nlohmann::ordered_json::array();
    for (const auto& c : summary.clusters) {
        clusters.push_back({{"label", c.label},
                            {"size", c.size},
                            {"videos", c.video_ids},
                            {"dominant_video", c.dominant_video},
                            {"dominant_fraction", c.dominant_fraction}});
    }
    auto& videos = j["videos"] = nlohmann::ordered_json::array();
    for (const auto& v : summary.videos) {
        videos.push_back({{"video_id", v.video_id}, {"frames", v.frames}, {"noise_frames", v.noise_frames}, {"clusters", v.cluster_span}});
    }
    return j;
}

/**
 * Clusters an embedding file and writes `labels.csv`, `cluster_summary.json`
 * and, when requested, `condensed_tree.json`.
 */
inline ClusterLabeling run_cluster(const std::filesystem::path& embedding_path, const CorpusManifest& manifest, const PipelineConfig& config,
                                   const std::filesystem::path& out_dir, const Logger& warn = stderr_logger()) {
    std::filesystem::create_directories(out_dir);
    const auto embedding = read_embeddings(embedding_path);
    if (embedding.rows() != manifest.records.size()) {
        throw std::invalid_argument("embedding has " + std::to_string(embedding.rows()) + " rows but manifest has "
                                    + std::to_string(manifest.records.size()));
    }
    auto params = config.hdbscan;
    params.threads = config.threads;
    if (params.min_cluster_size > embedding.rows()) {
        warn("min_cluster_size " + std::to_string(params.min_cluster_size) + " exceeds N = " + std::to_string(embedding.rows())
             + "; every frame is noise");
    }
    const auto result = hdbscan_fit(embedding, params);
    write_labeling(out_dir / "labels.csv", result.labeling, manifest);
    write_json(out_dir / "cluster_summary.json", cluster_summary_json(cluster_summary(result.labeling, manifest)));
    if (config.condensed_tree) {
        write_json(out_dir / "condensed_tree.json", condensed_tree_json(result.tree));
    }
    return result.labeling;
}

/**
 * Splits by cluster and writes `train.csv`, `val.csv`, `test.csv` and
 * `leakage.json` into `out_dir`.
 */
inline LeakageReport run_split(const ClusterLabeling& labeling, const CorpusManifest& manifest, const PipelineConfig& config,
                               const std::filesystem::path& out_dir) {
    const auto assignment = split_frames(labeling, manifest, config.split, config.noise_grouping);
    emit_split(assignment.frame_to_partition, manifest, out_dir);
    const auto report = leakage_report(assignment.frame_to_partition, manifest);
    write_json(out_dir / "leakage.json", report.to_json());
    return report;
}

/**
 * @brief Clustering quality against video ids.
 */
struct EvaluationReport {
    VMeasure v;
    double ami = 0;
    std::size_t n_frames = 0;
    std::size_t n_videos = 0;
    std::size_t n_clusters = 0;
    std::size_t noise = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["v_measure"] = v.v;
        j["homogeneity"] = v.homogeneity;
        j["completeness"] = v.completeness;
        j["ami"] = ami;
        j["n_frames"] = n_frames;
        j["n_videos"] = n_videos;
        j["n_clusters"] = n_clusters;
        j["noise"] = noise;
        return j;
    }
};

inline EvaluationReport evaluate_labeling(const ClusterLabeling& labeling, const CorpusManifest& manifest, NoisePolicy noise,
                                          AmiNormalization norm) {
    if (labeling.labels.size() != manifest.records.size()) {
        throw std::invalid_argument("evaluate: labeling and manifest lengths differ");
    }
    std::map<std::string, std::int64_t> video_index;
    std::vector<std::int64_t> truth, pred;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        auto [it, _] = video_index.try_emplace(manifest.records[i].video_id, static_cast<std::int64_t>(video_index.size()));
        truth.push_back(it->second);
        pred.push_back(labeling.labels[i]);
    }
    const auto table = contingency(truth, pred, noise);
    EvaluationReport report;
    report.v = v_measure(table);
    report.ami = ami(table, norm);
    report.n_frames = truth.size();
    report.n_videos = video_index.size();
    report.n_clusters = labeling.n_clusters();
    report.noise = static_cast<std::size_t>(std::count(labeling.labels.begin(), labeling.labels.end(), -1));
    return report;
}

/**
 * @brief Outcome of a full run; mirrors `run.json`.
 */
struct PipelineRun {
    EvaluationReport evaluation;
    LeakageReport leakage;
    nlohmann::ordered_json manifest;
};

/**
 * Hash of the run inputs: the manifest file and every file it points to, or
 * the external feature file.
 */
inline std::string input_fingerprint(const std::filesystem::path& manifest_path, const CorpusManifest& manifest, const PipelineConfig& config) {
    Sha256 h;
    h.update(binary::read_file(manifest_path));
    if (config.source == FeatureSource::hog) {
        for (const auto& r : manifest.records) {
            h.update(r.frame_id).update(sha256_file(manifest.resolve(r)));
        }
    } else {
        h.update(sha256_file(config.feature_file));
    }
    return h.hex();
}

/**
 * Runs every stage in order into `out_dir` and writes `run.json` with the
 * config echo, per-stage wall times, SHA-256 of each artifact, and a run id
 * derived from the config (minus the thread count) and the input hashes.
 */
inline PipelineRun run_pipeline(const std::filesystem::path& manifest_path, const PipelineConfig& config, const std::filesystem::path& out_dir,
                                const Logger& warn = stderr_logger()) {
    config.validate();
    const auto manifest = load_manifest(manifest_path);
    std::filesystem::create_directories(out_dir);

    using clock = std::chrono::steady_clock;
    nlohmann::ordered_json timings;
    auto timed = [&](const char* stage, auto&& body) {
        const auto start = clock::now();
        auto value = body();
        timings[stage] = std::chrono::duration<double>(clock::now() - start).count();
        return value;
    };

    const auto features_dir = out_dir / "features";
    const auto reduce_dir = out_dir / "reduce";
    const auto cluster_dir = out_dir / "cluster";
    const auto split_dir = out_dir / "split";

    timed("features", [&] { return run_features(manifest, config, features_dir, warn); });
    timed("reduce", [&] { return run_reduce(features_dir / "features.emb", config, reduce_dir); });
    const auto labeling = timed("cluster", [&] { return run_cluster(reduce_dir / "embedding.emb", manifest, config, cluster_dir, warn); });

    PipelineRun run;
    run.leakage = timed("split", [&] { return run_split(labeling, manifest, config, split_dir); });
    run.evaluation = timed("evaluate", [&] {
        auto report = evaluate_labeling(labeling, manifest, config.metric_noise, config.ami_norm);
        write_json(out_dir / "metrics.json", report.to_json());
        return report;
    });

    nlohmann::ordered_json hashes;
    std::vector<std::filesystem::path> artifacts;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(out_dir)) {
        if (entry.is_regular_file() && entry.path().filename() != "run.json") {
            artifacts.push_back(entry.path());
        }
    }
    std::sort(artifacts.begin(), artifacts.end());
    for (const auto& path : artifacts) {
        hashes[std::filesystem::relative(path, out_dir).generic_string()] = sha256_file(path);
    }

    const auto config_json = config.to_json();
    const auto inputs = input_fingerprint(manifest_path, manifest, config);
    nlohmann::ordered_json m;
    auto identity = config_json;
    identity.erase("threads");
    m["run_id"] = sha256_hex(identity.dump() + "\n" + inputs).substr(0, 16);
    m["manifest"] = manifest_path.string();
    m["input_hash"] = inputs;
    m["config"] = config_json;
    m["timings_seconds"] = timings;
    m["artifacts"] = hashes;
    m["metrics"] = run.evaluation.to_json();
    m["leakage"] = run.leakage.to_json();
    write_json(out_dir / "run.json", m);
    run.manifest = std::move(m);
    return run;
}

}

#endif
