#ifndef LEAKSPLIT_HDBSCAN_HPP
#define LEAKSPLIT_HDBSCAN_HPP

#include "corpus.hpp"
#include "knn.hpp"
#include "matrix.hpp"
#include "parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

/**
 * @file hdbscan.hpp
 *
 * @brief Hierarchical density-based clustering (HDBSCAN) with excess-of-mass selection.
 *
 * @see
 * Campello, R.J.G.B., Moulavi, D. and Sander, J. (2013).
 * Density-based clustering based on hierarchical density estimates.
 * _PAKDD 2013_, 160-172.
 */

namespace leaksplit {

struct HdbscanParams {
    std::size_t min_cluster_size = 10;
    /// Defaults to `min_cluster_size` when unset.
    std::optional<std::size_t> min_samples;
    int threads = 1;

    std::size_t effective_min_samples() const { return min_samples.value_or(min_cluster_size); }

    void validate() const {
        if (min_cluster_size < 2) {
            throw std::invalid_argument("min_cluster_size must be at least 2");
        }
        if (min_samples && *min_samples < 1) {
            throw std::invalid_argument("min_samples must be at least 1");
        }
    }
};

/**
 * Distance from every point to its `min_samples`-th nearest other point.
 */
template <typename T>
std::vector<double> core_distances(const Matrix<T>& y, std::size_t min_samples, int threads = 1) {
    if (min_samples == 0) {
        throw std::invalid_argument("min_samples must be at least 1");
    }
    if (min_samples >= y.rows()) {
        throw std::invalid_argument("min_samples (" + std::to_string(min_samples) + ") must be smaller than N ("
                                    + std::to_string(y.rows()) + ")");
    }
    const auto knn = exact_knn(y, min_samples, threads);
    std::vector<double> core(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        core[i] = knn[i].back().distance;
    }
    return core;
}

inline double mutual_reachability(double distance, double core_i, double core_j) {
    return std::max({core_i, core_j, distance});
}

struct WeightedEdge {
    std::size_t u;
    std::size_t v;
    double weight;

    bool operator==(const WeightedEdge&) const = default;
};

/**
 * Strict total order on edges: weight, then lower endpoint, then higher endpoint.
 * It makes the minimum spanning tree unique.
 */
inline bool edge_precedes(double wa, std::size_t ua, std::size_t va, double wb, std::size_t ub, std::size_t vb) {
    return std::make_tuple(wa, std::min(ua, va), std::max(ua, va)) < std::make_tuple(wb, std::min(ub, vb), std::max(ub, vb));
}

/**
 * Dense Prim's algorithm over the complete graph on `n` vertices with edge
 * weights `weight(u, v)`. Edges are returned in the order they join the tree.
 */
template <class WeightFunction>
std::vector<WeightedEdge> minimum_spanning_tree(std::size_t n, WeightFunction weight, int threads = 1) {
    std::vector<WeightedEdge> edges;
    if (n < 2) {
        return edges;
    }
    edges.reserve(n - 1);

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<bool> in_tree(n, false);
    std::vector<double> best(n, inf);
    std::vector<std::size_t> via(n, n);

    std::size_t current = 0;
    in_tree[0] = true;
    for (std::size_t step = 1; step < n; ++step) {
        parallel_for(n, threads, [&](std::size_t v) {
            if (in_tree[v]) {
                return;
            }
            const double w = weight(current, v);
            if (via[v] == n || edge_precedes(w, current, v, best[v], via[v], v)) {
                best[v] = w;
                via[v] = current;
            }
        });

        std::size_t next = n;
        for (std::size_t v = 0; v < n; ++v) {
            if (!in_tree[v] && (next == n || edge_precedes(best[v], via[v], v, best[next], via[next], next))) {
                next = v;
            }
        }
        in_tree[next] = true;
        edges.push_back({via[next], next, best[next]});
        current = next;
    }
    return edges;
}

/**
 * Minimum spanning tree of the mutual-reachability graph of `y`.
 */
template <typename T>
std::vector<WeightedEdge> build_mst(const Matrix<T>& y, const std::vector<double>& core, int threads = 1) {
    if (y.rows() < 2) {
        throw std::invalid_argument("build_mst needs at least 2 points");
    }
    if (core.size() != y.rows()) {
        throw std::invalid_argument("build_mst: core distance count does not match point count");
    }
    if (!all_finite(y)) {
        throw std::invalid_argument("build_mst: non-finite coordinates");
    }
    return minimum_spanning_tree(
        y.rows(), [&](std::size_t a, std::size_t b) { return mutual_reachability(euclidean_distance(y.row(a), y.row(b)), core[a], core[b]); },
        threads);
}

/**
 * @brief One merge of the single-linkage dendrogram. Nodes below N are
 * points; merge k creates node N + k.
 */
struct LinkageStep {
    std::size_t left;
    std::size_t right;
    double distance;
    std::size_t size;
};

/**
 * Builds the single-linkage dendrogram by merging MST edges in ascending
 * `edge_precedes` order.
 */
inline std::vector<LinkageStep> single_linkage(std::vector<WeightedEdge> mst, std::size_t n) {
    std::sort(mst.begin(), mst.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return edge_precedes(a.weight, a.u, a.v, b.weight, b.u, b.v);
    });

    std::vector<std::size_t> parent(2 * n, 0);
    std::vector<std::size_t> size(2 * n, 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    std::vector<LinkageStep> steps;
    steps.reserve(mst.size());
    std::size_t next = n;
    for (const auto& e : mst) {
        const std::size_t a = find(e.u);
        const std::size_t b = find(e.v);
        if (a == b) {
            throw std::invalid_argument("single_linkage: input is not a spanning tree");
        }
        steps.push_back({a, b, e.weight, size[a] + size[b]});
        parent[a] = next;
        parent[b] = next;
        size[next] = size[a] + size[b];
        ++next;
    }
    return steps;
}

/**
 * @brief Condensed cluster tree.
 *
 * Point ids are `0..n_points-1`, cluster ids start at `n_points` (the root).
 * Each edge records the lambda (1 / distance) at which `child` leaves `parent`.
 */
struct CondensedTree {
    struct Edge {
        std::size_t parent;
        std::size_t child;
        double lambda;
        std::size_t child_size;
    };

    std::size_t n_points = 0;
    std::vector<Edge> edges;

    std::size_t root() const { return n_points; }
    bool is_cluster(std::size_t id) const { return id >= n_points; }
};

/// Lambda for a merge distance; zero distances are capped at 1e12.
inline double distance_to_lambda(double distance) {
    return 1.0 / std::max(distance, 1e-12);
}

/**
 * Condenses the dendrogram. Merges at one distance are treated as a single
 * multi-way split, so the result does not depend on how equal-weight edges
 * were ordered: at each level a cluster breaks into the components that
 * remain connected strictly below that distance. When two or more of them
 * have at least `min_cluster_size` points each becomes a new cluster;
 * otherwise the single large one (if any) carries on as the parent. Points
 * of every other component fall out of the parent at that lambda.
 */
inline CondensedTree condense_tree(const std::vector<LinkageStep>& linkage, std::size_t n, std::size_t min_cluster_size) {
    CondensedTree tree;
    tree.n_points = n;
    if (linkage.empty()) {
        return tree;
    }

    const std::size_t root = 2 * n - 2;
    auto node_size = [&](std::size_t node) { return node < n ? std::size_t{1} : linkage[node - n].size; };

    auto collect_points = [&](std::size_t node, std::vector<std::size_t>& out) {
        std::vector<std::size_t> stack{node};
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            if (cur < n) {
                out.push_back(cur);
            } else {
                stack.push_back(linkage[cur - n].right);
                stack.push_back(linkage[cur - n].left);
            }
        }
    };

    // Subtrees hanging below `node` whose merge distance is strictly smaller.
    auto components_below = [&](std::size_t node, std::vector<std::size_t>& out) {
        const double level = linkage[node - n].distance;
        out.clear();
        std::vector<std::size_t> stack{node};
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            if (cur >= n && (cur == node || linkage[cur - n].distance == level)) {
                stack.push_back(linkage[cur - n].right);
                stack.push_back(linkage[cur - n].left);
            } else {
                out.push_back(cur);
            }
        }
    };

    std::vector<std::size_t> relabel(2 * n - 1, 0);
    relabel[root] = n;
    std::size_t next_label = n + 1;

    std::vector<std::size_t> queue{root};
    std::vector<std::size_t> parts, big, fallen;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t node = queue[head];
        const double lambda = distance_to_lambda(linkage[node - n].distance);
        const std::size_t parent = relabel[node];

        components_below(node, parts);
        big.clear();
        for (std::size_t part : parts) {
            if (node_size(part) >= min_cluster_size) {
                big.push_back(part);
            } else {
                fallen.clear();
                collect_points(part, fallen);
                for (std::size_t p : fallen) {
                    tree.edges.push_back({parent, p, lambda, 1});
                }
            }
        }

        if (big.size() >= 2) {
            for (std::size_t child : big) {
                relabel[child] = next_label++;
                tree.edges.push_back({parent, relabel[child], lambda, node_size(child)});
                queue.push_back(child);
            }
        } else if (big.size() == 1) {
            relabel[big.front()] = parent;
            queue.push_back(big.front());
        }
    }
    return tree;
}

/**
 * Stability of every cluster: sum over its children of
 * `(lambda_child - lambda_birth) * child_size`. Indexed by `id - n_points`.
 */
inline std::vector<double> cluster_stabilities(const CondensedTree& tree) {
    std::size_t max_id = tree.root();
    for (const auto& e : tree.edges) {
        max_id = std::max(max_id, std::max(e.parent, e.child));
    }
    const std::size_t n_clusters = max_id - tree.n_points + 1;
    std::vector<double> birth(n_clusters, 0.0);
    for (const auto& e : tree.edges) {
        if (tree.is_cluster(e.child)) {
            birth[e.child - tree.n_points] = e.lambda;
        }
    }
    std::vector<double> stability(n_clusters, 0.0);
    for (const auto& e : tree.edges) {
        const std::size_t c = e.parent - tree.n_points;
        stability[c] += (e.lambda - birth[c]) * static_cast<double>(e.child_size);
    }
    return stability;
}

/**
 * Excess-of-mass selection over non-root clusters: a cluster is kept iff its
 * stability exceeds the total stability of the best selection among its
 * descendants. Returns a flag per cluster (indexed by `id - n_points`).
 */
inline std::vector<bool> select_clusters_eom(const CondensedTree& tree, const std::vector<double>& stability) {
    const std::size_t n_clusters = stability.size();
    std::vector<std::vector<std::size_t>> children(n_clusters);
    for (const auto& e : tree.edges) {
        if (tree.is_cluster(e.child)) {
            children[e.parent - tree.n_points].push_back(e.child - tree.n_points);
        }
    }

    std::vector<bool> selected(n_clusters, false);
    std::vector<double> best(stability);
    for (std::size_t c = n_clusters; c-- > 1;) {
        double descendants = 0;
        for (auto child : children[c]) {
            descendants += best[child];
        }
        if (stability[c] > descendants) {
            selected[c] = true;
            std::vector<std::size_t> stack(children[c]);
            while (!stack.empty()) {
                const auto d = stack.back();
                stack.pop_back();
                selected[d] = false;
                stack.insert(stack.end(), children[d].begin(), children[d].end());
            }
        } else {
            best[c] = descendants;
        }
    }
    return selected;
}

/**
 * @brief Flat clustering: label per point (-1 = noise), stability per cluster.
 */
struct ClusterLabeling {
    std::vector<int> labels;
    std::vector<double> stabilities;

    std::size_t n_clusters() const { return stabilities.size(); }

    std::vector<std::size_t> cluster_sizes() const {
        std::vector<std::size_t> sizes(stabilities.size(), 0);
        for (int l : labels) {
            if (l >= 0) {
                ++sizes[static_cast<std::size_t>(l)];
            }
        }
        return sizes;
    }
};

/**
 * Flattens a condensed tree: every point under a selected cluster gets that
 * cluster's label. Labels are numbered by descending cluster size, then by
 * smallest member index.
 */
inline ClusterLabeling label_points(const CondensedTree& tree, const std::vector<bool>& selected, const std::vector<double>& stability) {
    const std::size_t n = tree.n_points;
    std::vector<std::size_t> parent_of(selected.size() + n, std::numeric_limits<std::size_t>::max());
    for (const auto& e : tree.edges) {
        parent_of[e.child] = e.parent;
    }

    std::vector<std::size_t> owner(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t cur = parent_of[p];
        while (cur != std::numeric_limits<std::size_t>::max()) {
            if (selected[cur - n]) {
                owner[p] = cur;
                break;
            }
            cur = cur == tree.root() ? std::numeric_limits<std::size_t>::max() : parent_of[cur];
        }
    }

    struct Info {
        std::size_t cluster;
        std::size_t size;
        std::size_t first;
    };
    std::map<std::size_t, Info> info;
    for (std::size_t p = 0; p < n; ++p) {
        if (owner[p] == std::numeric_limits<std::size_t>::max()) {
            continue;
        }
        auto [it, inserted] = info.try_emplace(owner[p], Info{owner[p], 0, p});
        ++it->second.size;
    }
    std::vector<Info> order;
    for (const auto& [_, v] : info) {
        order.push_back(v);
    }
    std::sort(order.begin(), order.end(), [](const Info& a, const Info& b) {
        return a.size != b.size ? a.size > b.size : a.first < b.first;
    });

    ClusterLabeling out;
    out.labels.assign(n, -1);
    std::map<std::size_t, int> label_of;
    for (std::size_t l = 0; l < order.size(); ++l) {
        label_of[order[l].cluster] = static_cast<int>(l);
        out.stabilities.push_back(stability[order[l].cluster - n]);
    }
    for (std::size_t p = 0; p < n; ++p) {
        if (owner[p] != std::numeric_limits<std::size_t>::max()) {
            out.labels[p] = label_of[owner[p]];
        }
    }
    return out;
}

/**
 * @brief Full HDBSCAN output: the labeling plus the hierarchy it came from.
 */
struct HdbscanResult {
    ClusterLabeling labeling;
    CondensedTree tree;
    std::vector<WeightedEdge> mst;
};

template <typename T>
HdbscanResult hdbscan_fit(const Matrix<T>& y, const HdbscanParams& params = {}) {
    params.validate();
    HdbscanResult result;
    const std::size_t n = y.rows();
    result.tree.n_points = n;
    if (n < params.min_cluster_size || n < 2) {
        result.labeling.labels.assign(n, -1);
        return result;
    }

    const std::size_t min_samples = std::min(params.effective_min_samples(), n - 1);
    const auto core = core_distances(y, min_samples, params.threads);
    result.mst = build_mst(y, core, params.threads);
    result.tree = condense_tree(single_linkage(result.mst, n), n, params.min_cluster_size);
    const auto stability = cluster_stabilities(result.tree);
    const auto selected = select_clusters_eom(result.tree, stability);
    result.labeling = label_points(result.tree, selected, stability);
    return result;
}

/**
 * Clusters the rows of `y`. Inputs too small to hold a cluster come back as all noise.
 */
template <typename T>
ClusterLabeling extract_clusters(const Matrix<T>& y, const HdbscanParams& params = {}) {
    return hdbscan_fit(y, params).labeling;
}

inline nlohmann::ordered_json condensed_tree_json(const CondensedTree& tree) {
    nlohmann::ordered_json out;
    out["n_points"] = tree.n_points;
    auto& edges = out["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : tree.edges) {
        edges.push_back({{"parent", e.parent}, {"child", e.child}, {"lambda", e.lambda}, {"child_size", e.child_size}});
    }
    return out;
}

/**
 * @brief Per-cluster and per-video view of a labeling.
 */
struct ClusterSummary {
    struct Cluster {
        int label;
        std::size_t size;
        std::vector<std::string> video_ids;
        std::string dominant_video;
        double dominant_fraction;
    };
    struct Video {
        std::string video_id;
        std::size_t frames;
        std::size_t noise_frames;
        std::size_t cluster_span;
    };

    std::vector<Cluster> clusters;
    std::vector<Video> videos;
    std::size_t noise = 0;
};

inline ClusterSummary cluster_summary(const ClusterLabeling& labeling, const CorpusManifest& manifest) {
    if (labeling.labels.size() != manifest.records.size()) {
        throw std::invalid_argument("cluster_summary: labeling has " + std::to_string(labeling.labels.size())
                                    + " entries but manifest has " + std::to_string(manifest.records.size()));
    }

    ClusterSummary out;
    std::vector<std::map<std::string, std::size_t>> per_cluster(labeling.n_clusters());
    std::map<std::string, std::set<int>> spans;
    std::map<std::string, std::pair<std::size_t, std::size_t>> frame_counts;
    for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
        const int label = labeling.labels[i];
        const auto& video = manifest.records[i].video_id;
        auto& counts = frame_counts[video];
        ++counts.first;
        spans[video];
        if (label < 0) {
            ++out.noise;
            ++counts.second;
            continue;
        }
        if (static_cast<std::size_t>(label) >= per_cluster.size()) {
            throw std::invalid_argument("cluster_summary: label " + std::to_string(label) + " out of range");
        }
        ++per_cluster[label][video];
        spans[video].insert(label);
    }

    for (std::size_t c = 0; c < per_cluster.size(); ++c) {
        ClusterSummary::Cluster cluster{static_cast<int>(c), 0, {}, {}, 0.0};
        std::size_t best = 0;
        for (const auto& [video, count] : per_cluster[c]) {
            cluster.size += count;
            cluster.video_ids.push_back(video);
            if (count > best) {
                best = count;
                cluster.dominant_video = video;
            }
        }
        cluster.dominant_fraction = cluster.size > 0 ? static_cast<double>(best) / static_cast<double>(cluster.size) : 0.0;
        out.clusters.push_back(std::move(cluster));
    }
    for (const auto& video : manifest.video_ids()) {
        const auto& counts = frame_counts[video];
        out.videos.push_back({video, counts.first, counts.second, spans[video].size()});
    }
    return out;
}

/**
 * Writes the labeling as CSV `frame_id,cluster_id,stability`; noise rows carry stability 0.
 */
inline void write_labeling(const std::filesystem::path& path, const ClusterLabeling& labeling, const CorpusManifest& manifest) {
    if (labeling.labels.size() != manifest.records.size()) {
        throw std::invalid_argument("write_labeling: labeling and manifest lengths differ");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write labeling " + path.string());
    }
    out << "frame_id,cluster_id,stability\n";
    char buffer[64];
    for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
        const int label = labeling.labels[i];
        const double stability = label >= 0 ? labeling.stabilities[label] : 0.0;
        std::snprintf(buffer, sizeof(buffer), "%.17g", stability);
        out << csv::escape(manifest.records[i].frame_id) << ',' << label << ',' << buffer << '\n';
    }
}

/**
 * Reads a labeling CSV and aligns it with the manifest by frame id.
 */
inline ClusterLabeling read_labeling(const std::filesystem::path& path, const CorpusManifest& manifest) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open labeling " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || csv::split_line(line) != std::vector<std::string>{"frame_id", "cluster_id", "stability"}) {
        throw std::runtime_error(path.string() + ": expected header frame_id,cluster_id,stability");
    }

    std::map<std::string, std::pair<int, double>> rows;
    int max_label = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = csv::split_line(line);
        if (fields.size() != 3) {
            throw std::runtime_error(path.string() + ": malformed line '" + line + "'");
        }
        const int label = std::stoi(fields[1]);
        if (label < -1) {
            throw std::runtime_error(path.string() + ": invalid cluster id " + fields[1]);
        }
        if (!rows.emplace(fields[0], std::pair{label, std::stod(fields[2])}).second) {
            throw std::runtime_error(path.string() + ": duplicate frame id '" + fields[0] + "'");
        }
        max_label = std::max(max_label, label);
    }
    if (rows.size() != manifest.records.size()) {
        throw std::runtime_error(path.string() + ": labeling has " + std::to_string(rows.size()) + " rows but manifest has "
                                 + std::to_string(manifest.records.size()));
    }

    ClusterLabeling out;
    out.stabilities.assign(static_cast<std::size_t>(max_label + 1), 0.0);
    for (const auto& record : manifest.records) {
        auto found = rows.find(record.frame_id);
        if (found == rows.end()) {
            throw std::runtime_error(path.string() + ": frame '" + record.frame_id + "' has no label");
        }
        out.labels.push_back(found->second.first);
        if (found->second.first >= 0) {
            out.stabilities[found->second.first] = found->second.second;
        }
    }
    return out;
}

}

#endif
