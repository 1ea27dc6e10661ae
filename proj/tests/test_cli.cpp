#include "common.hpp"

#include "leaksplit/leaksplit.hpp"

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

using testing_helpers::TempDir;

namespace {

struct Outcome {
    int status;
    std::string output;
};

/// Runs the CLI with `args`, capturing stdout and stderr together.
Outcome run_cli(const std::string& args) {
    const std::string command = std::string(LEAKSPLIT_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) {
        throw std::runtime_error("popen failed");
    }
    std::string output;
    char buffer[4096];
    std::size_t got;
    while ((got = std::fread(buffer, 1, sizeof(buffer), pipe)) > 0) {
        output.append(buffer, got);
    }
    const int raw = pclose(pipe);
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, output};
}

std::string q(const std::filesystem::path& p) {
    return "'" + p.string() + "'";
}

}

TEST(Cli, HelpListsSubcommandsButNotVerify) {
    const auto r = run_cli("--help");
    EXPECT_EQ(r.status, 0);
    for (const char* name : {"synth", "features", "reduce", "cluster", "split", "evaluate", "pipeline", "--seed", "--threads", "--config", "--json"}) {
        EXPECT_NE(r.output.find(name), std::string::npos) << name;
    }
    EXPECT_EQ(r.output.find("verify"), std::string::npos);
}

TEST(Cli, FeatureSourcesAreExclusive) {
    const auto r = run_cli("features --manifest m.csv --out o --local a.lds --embeddings b.emb");
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.output.find("excludes"), std::string::npos) << r.output;
}

TEST(Cli, MissingLabelingFails) {
    TempDir dir;
    leaksplit::generate_synthetic_corpus(dir / "c", {2, 3, 32, 1});
    const auto r = run_cli("evaluate --labels " + q(dir / "nope.csv") + " --manifest " + q(dir / "c" / "manifest.csv"));
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.output.find("error:"), std::string::npos);
}

TEST(Cli, BadRatiosAndThreadsRejected) {
    EXPECT_NE(run_cli("split --labels a --manifest b --out c --ratios 0.5,0.5").status, 0);
    EXPECT_NE(run_cli("--threads 0 synth --out x").status, 0);
}

TEST(Cli, SynthClusterSplitEvaluate) {
    TempDir dir;
    auto r = run_cli("--seed 4 synth --out " + q(dir / "c") + " --videos 4 --frames 6 --side 64");
    ASSERT_EQ(r.status, 0) << r.output;
    const auto manifest = leaksplit::load_manifest(dir / "c" / "manifest.csv");
    ASSERT_EQ(manifest.size(), 24u);

    r = run_cli("features --manifest " + q(dir / "c" / "manifest.csv") + " --out " + q(dir / "f") + " --hog-side 64");
    ASSERT_EQ(r.status, 0) << r.output;
    r = run_cli("reduce --features " + q(dir / "f" / "features.emb") + " --out " + q(dir / "r")
                + " --dim 4 --n-neighbors 4 --iters 20,20,40 --json");
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_TRUE(nlohmann::json::parse(r.output).contains("final_loss"));
    r = run_cli("cluster --embedding " + q(dir / "r" / "embedding.emb") + " --manifest " + q(dir / "c" / "manifest.csv") + " --out "
                + q(dir / "k") + " --min-cluster-size 3 --condensed-tree");
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_TRUE(std::filesystem::exists(dir / "k" / "condensed_tree.json"));

    r = run_cli("split --labels " + q(dir / "k" / "labels.csv") + " --manifest " + q(dir / "c" / "manifest.csv") + " --out " + q(dir / "s")
                + " --ratios 1,0,0");
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_EQ(leaksplit::load_manifest(dir / "s" / "train.csv").size(), 24u);
    EXPECT_EQ(leaksplit::load_manifest(dir / "s" / "test.csv").size(), 0u);

    r = run_cli("evaluate --labels " + q(dir / "k" / "labels.csv") + " --manifest " + q(dir / "c" / "manifest.csv") + " --json");
    ASSERT_EQ(r.status, 0) << r.output;
    const auto j = nlohmann::json::parse(r.output);
    for (const char* key : {"v_measure", "homogeneity", "completeness", "ami", "n_clusters", "noise"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }

    r = run_cli("evaluate --labels " + q(dir / "k" / "labels.csv") + " --manifest " + q(dir / "c" / "manifest.csv"));
    EXPECT_NE(r.output.find("V-measure"), std::string::npos);
    EXPECT_NE(r.output.find("AMI"), std::string::npos);
}

TEST(Cli, ConfigFileSuppliesOptions) {
    TempDir dir;
    ASSERT_EQ(run_cli("synth --out " + q(dir / "c") + " --videos 3 --frames 6 --side 64").status, 0);
    {
        std::ofstream cfg(dir / "run.toml");
        cfg << "seed = 2\n[pipeline]\nhog-side = 64\ndim = 4\nn-neighbors = 4\niters = [10, 10, 20]\nmin-cluster-size = 3\n";
    }
    const auto r = run_cli("--config " + q(dir / "run.toml") + " pipeline --manifest " + q(dir / "c" / "manifest.csv") + " --out "
                           + q(dir / "o") + " --json");
    ASSERT_EQ(r.status, 0) << r.output;
    const auto j = nlohmann::json::parse(r.output);
    EXPECT_EQ(j["config"]["seed"], 2);
    EXPECT_EQ(j["config"]["hog_side"], 64);
    EXPECT_EQ(j["config"]["pacmap"]["dim"], 4);
    EXPECT_EQ(j["config"]["hdbscan"]["min_cluster_size"], 3);
}

TEST(Cli, VerifyPasses) {
    const auto r = run_cli("verify --seed 1");
    EXPECT_EQ(r.status, 0) << r.output;
    EXPECT_NE(r.output.find("ami_vs_enumeration"), std::string::npos);
}
