#include "leaksplit/leaksplit.hpp"
#include "leaksplit/testkit/battery.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace leaksplit;

struct GlobalOptions {
    std::uint64_t seed = 0;
    int threads = 1;
    bool json = false;
};

struct Ratios {
    std::vector<double> values{0.7, 0.15, 0.15};

    std::array<double, 3> get() const {
        if (values.size() != 3) {
            throw std::invalid_argument("--ratios needs three values (train,val,test)");
        }
        return {values[0], values[1], values[2]};
    }
};

struct Options {
    PipelineConfig config;
    GlobalOptions global;
    std::string manifest;
    std::string out;
    std::string input;
    std::string local_file;
    std::string embeddings_file;
    bool use_hog = false;
    std::vector<std::size_t> iters{100, 100, 250};
    std::size_t min_samples = 0;
    Ratios ratios;
    bool noise_singletons = false;
    std::string ami_norm = "arithmetic";
    SyntheticCorpusParams synth;
};

void add_feature_options(CLI::App* app, Options& o) {
    auto* hog = app->add_flag("--hog", o.use_hog, "Compute HOG descriptors from the frame images (default)");
    auto* local = app->add_option("--local", o.local_file, "LDS1 local-descriptor file; aggregated with VLAD + PCA");
    auto* global = app->add_option("--embeddings", o.embeddings_file, "EMB1 global-embedding file, rows referenced by the manifest");
    hog->excludes(local)->excludes(global);
    local->excludes(global);
    app->add_option("--hog-side", o.config.hog_side, "Square side frames are resized to before HOG")->capture_default_str();
    app->add_option("--vlad-k", o.config.vlad_k, "VLAD codebook size")->capture_default_str();
    app->add_option("--pca-dim", o.config.pca_dim, "PCA output dimension for VLAD vectors (0 = none)")->capture_default_str();
}

void add_reduce_options(CLI::App* app, Options& o) {
    app->add_option("--dim", o.config.pacmap.m, "Embedding dimension")->capture_default_str();
    app->add_option("--n-neighbors", o.config.pacmap.n_neighbors, "PaCMAP neighbor pairs per point")->capture_default_str();
    app->add_option("--mn-ratio", o.config.pacmap.mn_ratio, "Mid-near pairs per neighbor pair")->capture_default_str();
    app->add_option("--fp-ratio", o.config.pacmap.fp_ratio, "Further pairs per neighbor pair")->capture_default_str();
    app->add_option("--iters", o.iters, "Iterations of the three optimization phases")->expected(3)->delimiter(',');
    app->add_option("--learning-rate", o.config.pacmap.learning_rate, "Adam learning rate")->capture_default_str();
}

void add_cluster_options(CLI::App* app, Options& o) {
    app->add_option("--min-cluster-size", o.config.hdbscan.min_cluster_size, "Smallest cluster HDBSCAN reports")->capture_default_str();
    app->add_option("--min-samples", o.min_samples, "Neighbor rank for core distances (default: min-cluster-size)");
    app->add_flag("--condensed-tree", o.config.condensed_tree, "Also write condensed_tree.json");
}

void add_split_options(CLI::App* app, Options& o) {
    app->add_option("--ratios", o.ratios.values, "Train,val,test fractions summing to 1")->expected(3)->delimiter(',');
}

void add_noise_options(CLI::App* app, Options& o) {
    app->add_flag("--noise-as-singletons", o.noise_singletons,
                  "Treat each noise frame as its own group (split) and its own cluster (evaluate)");
}

void add_eval_options(CLI::App* app, Options& o) {
    app->add_option("--ami-norm", o.ami_norm, "AMI normalization")
        ->check(CLI::IsMember({"arithmetic", "max", "min", "geometric"}))
        ->capture_default_str();
}

void finalize(Options& o) {
    auto& c = o.config;
    c.seed = o.global.seed;
    c.threads = o.global.threads;
    c.split.seed = o.global.seed;
    c.pacmap.iters = {o.iters.at(0), o.iters.at(1), o.iters.at(2)};
    c.hdbscan.min_samples = o.min_samples > 0 ? std::optional<std::size_t>(o.min_samples) : std::nullopt;
    c.split.ratios = o.ratios.get();
    c.noise_grouping = o.noise_singletons ? NoiseGrouping::singletons : NoiseGrouping::by_video;
    c.metric_noise = o.noise_singletons ? NoisePolicy::singletons : NoisePolicy::single_cluster;
    c.ami_norm = parse_ami_norm(o.ami_norm);
    if (!o.local_file.empty()) {
        c.source = FeatureSource::local_descriptors;
        c.feature_file = o.local_file;
    } else if (!o.embeddings_file.empty()) {
        c.source = FeatureSource::global_embeddings;
        c.feature_file = o.embeddings_file;
    }
}

void emit(const GlobalOptions& g, const nlohmann::ordered_json& report, const std::string& text) {
    if (g.json) {
        std::cout << report.dump(2) << '\n';
    } else {
        std::cout << text;
    }
}

std::string evaluation_text(const EvaluationReport& r) {
    std::ostringstream s;
    s.precision(4);
    s << std::fixed;
    s << "frames " << r.n_frames << ", videos " << r.n_videos << ", clusters " << r.n_clusters << ", noise " << r.noise << '\n'
      << "V-measure    " << r.v.v << '\n'
      << "homogeneity  " << r.v.homogeneity << '\n'
      << "completeness " << r.v.completeness << '\n'
      << "AMI          " << r.ami << '\n';
    return s.str();
}

std::string leakage_text(const LeakageReport& r) {
    std::ostringstream s;
    s << "train " << r.per_partition_counts[0] << ", val " << r.per_partition_counts[1] << ", test " << r.per_partition_counts[2]
      << " frames\n"
      << "videos leaking across partitions: " << r.videos_leaking << " of " << r.videos_total << " (rate " << r.leakage_rate << ")\n";
    return s.str();
}

}

int main(int argc, char** argv) {
    CLI::App app{"Leakage-aware train/val/test splitting of video frames"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Key-value config file (INI/TOML); command-line flags win");

    Options o;
    app.add_option("--seed", o.global.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", o.global.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_flag("--json", o.global.json, "Print reports as JSON");

    auto* synth = app.add_subcommand("synth", "Write a synthetic multi-video frame corpus");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--videos", o.synth.n_videos, "Number of videos")->capture_default_str();
    synth->add_option("--frames", o.synth.frames_per_video, "Frames per video")->capture_default_str();
    synth->add_option("--side", o.synth.image_side, "Image side in pixels")->capture_default_str();

    auto* features = app.add_subcommand("features", "Compute one feature vector per frame");
    features->add_option("--manifest", o.manifest, "Frame manifest CSV")->required();
    features->add_option("--out", o.out, "Output directory")->required();
    add_feature_options(features, o);

    auto* reduce = app.add_subcommand("reduce", "Embed a feature matrix with PaCMAP");
    reduce->add_option("--features", o.input, "EMB1 feature matrix")->required();
    reduce->add_option("--out", o.out, "Output directory")->required();
    add_reduce_options(reduce, o);

    auto* cluster = app.add_subcommand("cluster", "Cluster an embedding with HDBSCAN");
    cluster->add_option("--embedding", o.input, "EMB1 embedding")->required();
    cluster->add_option("--manifest", o.manifest, "Frame manifest CSV")->required();
    cluster->add_option("--out", o.out, "Output directory")->required();
    add_cluster_options(cluster, o);

    auto* split = app.add_subcommand("split", "Assign whole clusters to train/val/test");
    split->add_option("--labels", o.input, "Labeling CSV")->required();
    split->add_option("--manifest", o.manifest, "Frame manifest CSV")->required();
    split->add_option("--out", o.out, "Output directory")->required();
    add_split_options(split, o);
    add_noise_options(split, o);

    auto* evaluate = app.add_subcommand("evaluate", "Score a labeling against video ids");
    evaluate->add_option("--labels", o.input, "Labeling CSV")->required();
    evaluate->add_option("--manifest", o.manifest, "Frame manifest CSV")->required();
    add_noise_options(evaluate, o);
    add_eval_options(evaluate, o);

    auto* pipeline = app.add_subcommand("pipeline", "Run features, reduce, cluster, split and evaluate");
    pipeline->add_option("--manifest", o.manifest, "Frame manifest CSV")->required();
    pipeline->add_option("--out", o.out, "Output directory")->required();
    add_feature_options(pipeline, o);
    add_reduce_options(pipeline, o);
    add_cluster_options(pipeline, o);
    add_split_options(pipeline, o);
    add_noise_options(pipeline, o);
    add_eval_options(pipeline, o);

    auto* verify = app.add_subcommand("verify", "Compare the library against the reference oracles");
    verify->group("");
    bool verbose = false;
    verify->add_flag("--reports", verbose, "Include every individual comparison");

    CLI11_PARSE(app, argc, argv);

    try {
        finalize(o);
        const auto& g = o.global;
        auto& c = o.config;

        if (*synth) {
            o.synth.seed = g.seed;
            const auto manifest = generate_synthetic_corpus(o.out, o.synth);
            nlohmann::ordered_json r{{"frames", manifest.records.size()},
                                     {"videos", manifest.video_ids().size()},
                                     {"manifest", (std::filesystem::path(o.out) / "manifest.csv").string()}};
            emit(g, r, "wrote " + std::to_string(manifest.records.size()) + " frames of " + std::to_string(manifest.video_ids().size())
                           + " videos to " + o.out + "\n");
        } else if (*features) {
            c.validate();
            const auto manifest = load_manifest(o.manifest);
            const auto matrix = run_features(manifest, c, o.out);
            nlohmann::ordered_json r{{"rows", matrix.rows()}, {"cols", matrix.cols()}, {"source", feature_source_name(c.source)}};
            emit(g, r, "features " + std::to_string(matrix.rows()) + " x " + std::to_string(matrix.cols()) + "\n");
        } else if (*reduce) {
            c.pacmap.validate();
            const auto embedding = run_reduce(o.input, c, o.out);
            const auto meta = read_json(std::filesystem::path(o.out) / "embedding.json");
            nlohmann::ordered_json r{{"rows", embedding.rows()},
                                     {"cols", embedding.cols()},
                                     {"initial_loss", meta["initial_loss"]},
                                     {"final_loss", meta["final_loss"]}};
            emit(g, r, "embedding " + std::to_string(embedding.rows()) + " x " + std::to_string(embedding.cols()) + ", loss "
                           + meta["initial_loss"].dump() + " -> " + meta["final_loss"].dump() + "\n");
        } else if (*cluster) {
            c.hdbscan.validate();
            const auto manifest = load_manifest(o.manifest);
            const auto labeling = run_cluster(o.input, manifest, c, o.out);
            const auto noise = std::count(labeling.labels.begin(), labeling.labels.end(), -1);
            nlohmann::ordered_json r{{"frames", labeling.labels.size()}, {"clusters", labeling.n_clusters()}, {"noise", noise}};
            emit(g, r, std::to_string(labeling.n_clusters()) + " clusters, " + std::to_string(noise) + " noise frames of "
                           + std::to_string(labeling.labels.size()) + "\n");
        } else if (*split) {
            c.split.validate();
            const auto manifest = load_manifest(o.manifest);
            const auto labeling = read_labeling(o.input, manifest);
            const auto report = run_split(labeling, manifest, c, o.out);
            emit(g, report.to_json(), leakage_text(report));
        } else if (*evaluate) {
            const auto manifest = load_manifest(o.manifest);
            const auto labeling = read_labeling(o.input, manifest);
            const auto report = evaluate_labeling(labeling, manifest, c.metric_noise, c.ami_norm);
            emit(g, report.to_json(), evaluation_text(report));
        } else if (*pipeline) {
            const auto run = run_pipeline(o.manifest, c, o.out);
            emit(g, run.manifest, evaluation_text(run.evaluation) + leakage_text(run.leakage) + "run " + run.manifest["run_id"].get<std::string>()
                                      + " written to " + o.out + "\n");
        } else if (*verify) {
            const auto results = testkit::run_oracle_battery(g.seed);
            nlohmann::ordered_json r = nlohmann::ordered_json::array();
            std::string text;
            bool ok = true;
            for (const auto& b : results) {
                r.push_back(b.to_json(verbose));
                ok = ok && b.passed();
                text += std::string(b.passed() ? "ok   " : "FAIL ") + b.name + ": " + std::to_string(b.cases) + " cases, worst error "
                        + std::to_string(b.worst_error) + "\n";
            }
            emit(g, r, text);
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
