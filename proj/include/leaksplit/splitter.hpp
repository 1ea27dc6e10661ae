#ifndef LEAKSPLIT_SPLITTER_HPP
#define LEAKSPLIT_SPLITTER_HPP

#include "corpus.hpp"
#include "hdbscan.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file splitter.hpp
 *
 * @brief Whole-cluster assignment to train/validation/test partitions and
 * video-level leakage auditing.
 */

namespace leaksplit {

enum class Partition : int { train = 0, val = 1, test = 2 };

inline constexpr std::array<Partition, 3> all_partitions{Partition::train, Partition::val, Partition::test};

inline const char* partition_name(Partition p) {
    switch (p) {
    case Partition::train:
        return "train";
    case Partition::val:
        return "val";
    case Partition::test:
        return "test";
    }
    return "?";
}

inline Partition parse_partition(const std::string& name) {
    for (auto p : all_partitions) {
        if (name == partition_name(p)) {
            return p;
        }
    }
    throw std::invalid_argument("unknown partition '" + name + "'");
}

/**
 * @brief Target partition fractions (train, val, test).
 *
 * `seed` is carried through configs but the deterministic assigner does not use it.
 */
struct SplitSpec {
    std::array<double, 3> ratios{0.7, 0.15, 0.15};
    std::uint64_t seed = 0;

    void validate() const {
        double sum = 0;
        for (double r : ratios) {
            if (!(r >= 0) || !std::isfinite(r)) {
                throw std::invalid_argument("split ratios must be nonnegative");
            }
            sum += r;
        }
        if (sum == 0) {
            throw std::invalid_argument("all split ratios are zero");
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::invalid_argument("split ratios must sum to 1");
        }
    }
};

/**
 * @brief A set of frames that must land in one partition: an HDBSCAN cluster
 * or a pseudo-cluster of noise frames.
 */
struct FrameGroup {
    std::int64_t id;
    std::vector<std::size_t> members;
};

/// How HDBSCAN noise frames are grouped before splitting.
enum class NoiseGrouping { by_video, singletons };

/**
 * Turns a labeling into split groups. Clusters keep their ids `0..C-1`; noise
 * frames are grouped by video id (or one group per frame with
 * `NoiseGrouping::singletons`, and for frames with an empty video id) into
 * pseudo-clusters numbered from C in order of first appearance.
 */
inline std::vector<FrameGroup> group_noise(const ClusterLabeling& labeling, const CorpusManifest& manifest,
                                           NoiseGrouping grouping = NoiseGrouping::by_video) {
    if (labeling.labels.size() != manifest.records.size()) {
        throw std::invalid_argument("group_noise: labeling has " + std::to_string(labeling.labels.size())
                                    + " entries but manifest has " + std::to_string(manifest.records.size()));
    }

    std::vector<FrameGroup> groups(labeling.n_clusters());
    for (std::size_t c = 0; c < groups.size(); ++c) {
        groups[c].id = static_cast<std::int64_t>(c);
    }
    std::map<std::string, std::size_t> noise_group_of_video;
    for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
        const int label = labeling.labels[i];
        if (label >= 0) {
            groups.at(static_cast<std::size_t>(label)).members.push_back(i);
            continue;
        }
        const auto& video = manifest.records[i].video_id;
        if (grouping == NoiseGrouping::by_video && !video.empty()) {
            auto [it, inserted] = noise_group_of_video.try_emplace(video, groups.size());
            if (inserted) {
                groups.push_back({static_cast<std::int64_t>(groups.size()), {}});
            }
            groups[it->second].members.push_back(i);
        } else {
            groups.push_back({static_cast<std::int64_t>(groups.size()), {i}});
        }
    }
    return groups;
}

struct GroupSize {
    std::int64_t id;
    std::size_t size;
};

/**
 * @brief Partition of every group and the resulting frame counts.
 */
struct SplitAssignment {
    std::map<std::int64_t, Partition> group_to_partition;
    std::array<std::size_t, 3> counts{0, 0, 0};
    /// Per-frame partition, filled by `assign_frames`.
    std::vector<Partition> frame_to_partition;
};

/**
 * Greedy largest-first assignment of whole groups.
 *
 * Groups are visited by descending size (ties: smaller id first). Each goes
 * to the partition with the largest relative deficit
 * `(target - assigned) / max(target, 1)` among partitions whose absolute
 * deficit can hold the whole group; when none can, among partitions with a
 * positive deficit. Ties favor train, then val, then test. Partitions with a
 * zero ratio receive nothing. Every partition ends within the largest group
 * size of its target.
 */
inline SplitAssignment assign_clusters(std::vector<GroupSize> groups, const SplitSpec& spec) {
    spec.validate();
    std::size_t total = 0;
    for (const auto& g : groups) {
        total += g.size;
    }
    if (total == 0) {
        throw std::invalid_argument("assign_clusters: no frames to assign");
    }

    std::stable_sort(groups.begin(), groups.end(), [](const GroupSize& a, const GroupSize& b) {
        return a.size != b.size ? a.size > b.size : a.id < b.id;
    });

    std::array<double, 3> target{};
    for (std::size_t p = 0; p < 3; ++p) {
        target[p] = spec.ratios[p] * static_cast<double>(total);
    }

    SplitAssignment out;
    for (const auto& g : groups) {
        std::array<double, 3> deficit{};
        for (std::size_t p = 0; p < 3; ++p) {
            deficit[p] = target[p] - static_cast<double>(out.counts[p]);
        }

        auto pick = [&](auto&& eligible) {
            std::optional<std::size_t> best;
            double best_score = 0;
            for (std::size_t p = 0; p < 3; ++p) {
                if (spec.ratios[p] == 0 || !eligible(p)) {
                    continue;
                }
                const double score = deficit[p] / std::max(target[p], 1.0);
                if (!best || score > best_score) {
                    best = p;
                    best_score = score;
                }
            }
            return best;
        };

        const double size = static_cast<double>(g.size);
        auto choice = pick([&](std::size_t p) { return deficit[p] >= size; });
        if (!choice) {
            choice = pick([&](std::size_t p) { return deficit[p] > 0; });
        }
        if (!choice) {
            choice = pick([](std::size_t) { return true; });
        }

        out.group_to_partition[g.id] = static_cast<Partition>(*choice);
        out.counts[*choice] += g.size;
    }
    return out;
}

/**
 * Expands group assignments to a per-frame partition vector of length `n_frames`.
 */
inline void assign_frames(SplitAssignment& assignment, const std::vector<FrameGroup>& groups, std::size_t n_frames) {
    std::vector<std::optional<Partition>> frames(n_frames);
    for (const auto& g : groups) {
        auto found = assignment.group_to_partition.find(g.id);
        if (found == assignment.group_to_partition.end()) {
            throw std::invalid_argument("group " + std::to_string(g.id) + " has no partition");
        }
        for (auto member : g.members) {
            frames.at(member) = found->second;
        }
    }
    assignment.frame_to_partition.clear();
    for (std::size_t i = 0; i < n_frames; ++i) {
        if (!frames[i]) {
            throw std::invalid_argument("frame " + std::to_string(i) + " belongs to no group");
        }
        assignment.frame_to_partition.push_back(*frames[i]);
    }
}

/**
 * Groups the labeling (see `group_noise`), assigns groups and expands to frames.
 */
inline SplitAssignment split_frames(const ClusterLabeling& labeling, const CorpusManifest& manifest, const SplitSpec& spec,
                                    NoiseGrouping grouping = NoiseGrouping::by_video) {
    const auto groups = group_noise(labeling, manifest, grouping);
    std::vector<GroupSize> sizes;
    for (const auto& g : groups) {
        sizes.push_back({g.id, g.members.size()});
    }
    auto assignment = assign_clusters(sizes, spec);
    assign_frames(assignment, groups, manifest.records.size());
    return assignment;
}

/**
 * @brief Which partitions each video's frames ended up in.
 */
struct LeakageReport {
    std::size_t videos_total = 0;
    std::size_t videos_leaking = 0;
    double leakage_rate = 0;
    std::array<std::size_t, 3> per_partition_counts{0, 0, 0};
    std::map<std::string, std::set<Partition>> video_partitions;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json out;
        out["videos_total"] = videos_total;
        out["videos_leaking"] = videos_leaking;
        out["leakage_rate"] = leakage_rate;
        auto& counts = out["per_partition_counts"];
        for (auto p : all_partitions) {
            counts[partition_name(p)] = per_partition_counts[static_cast<int>(p)];
        }
        return out;
    }
};

/**
 * Counts videos whose frames span two or more partitions.
 */
inline LeakageReport leakage_report(const std::vector<Partition>& frame_to_partition, const CorpusManifest& manifest) {
    if (frame_to_partition.size() != manifest.records.size()) {
        throw std::invalid_argument("leakage_report: " + std::to_string(manifest.records.size() - std::min(manifest.records.size(), frame_to_partition.size()))
                                    + " frame(s) missing a partition");
    }
    LeakageReport report;
    for (std::size_t i = 0; i < frame_to_partition.size(); ++i) {
        const auto p = frame_to_partition[i];
        report.video_partitions[manifest.records[i].video_id].insert(p);
        ++report.per_partition_counts[static_cast<int>(p)];
    }
    report.videos_total = report.video_partitions.size();
    for (const auto& [_, parts] : report.video_partitions) {
        if (parts.size() >= 2) {
            ++report.videos_leaking;
        }
    }
    report.leakage_rate = report.videos_total == 0 ? 0.0 : static_cast<double>(report.videos_leaking) / static_cast<double>(report.videos_total);
    return report;
}

/**
 * Frame-id keyed variant; every manifest frame must be present.
 */
inline LeakageReport leakage_report(const std::map<std::string, Partition>& frame_to_partition, const CorpusManifest& manifest) {
    std::vector<Partition> aligned;
    aligned.reserve(manifest.records.size());
    for (const auto& r : manifest.records) {
        auto found = frame_to_partition.find(r.frame_id);
        if (found == frame_to_partition.end()) {
            throw std::invalid_argument("frame '" + r.frame_id + "' is missing a partition");
        }
        aligned.push_back(found->second);
    }
    return leakage_report(aligned, manifest);
}

/**
 * Writes `train.csv`, `val.csv` and `test.csv` (manifest format plus a
 * `partition` column) into `out_dir`, rows in manifest order.
 */
inline void emit_split(const std::vector<Partition>& frame_to_partition, const CorpusManifest& manifest, const std::filesystem::path& out_dir) {
    if (frame_to_partition.size() != manifest.records.size()) {
        throw std::invalid_argument("emit_split: partition vector does not match manifest");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
    }
    for (auto p : all_partitions) {
        std::vector<FrameRecord> rows;
        for (std::size_t i = 0; i < frame_to_partition.size(); ++i) {
            if (frame_to_partition[i] == p) {
                rows.push_back(manifest.records[i]);
            }
        }
        std::vector<std::string> column(rows.size(), partition_name(p));
        write_manifest(out_dir / (std::string(partition_name(p)) + ".csv"), rows, &column);
    }
}

}

#endif
