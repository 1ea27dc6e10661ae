#ifndef LEAKSPLIT_DESCRIPTORS_HPP
#define LEAKSPLIT_DESCRIPTORS_HPP

#include "corpus.hpp"
#include "matrix.hpp"
#include "matrix_io.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file descriptors.hpp
 *
 * @brief Per-frame feature vectors: native HOG, plus ingestion of externally
 * computed local descriptor sets and global embeddings.
 */

namespace leaksplit {

/**
 * @brief Histogram-of-oriented-gradients parameters (Dalal-Triggs defaults).
 */
struct HogParams {
    std::size_t cell_size = 8;
    std::size_t block_cells = 2;
    std::size_t bins = 9;
    double clip = 0.2;

    void validate() const {
        if (cell_size == 0 || block_cells == 0 || bins == 0) {
            throw std::invalid_argument("HOG cell_size, block_cells and bins must be positive");
        }
        if (!(clip > 0 && clip <= 1)) {
            throw std::invalid_argument("HOG clip must lie in (0, 1]");
        }
    }

    /// Descriptor length for a `width` x `height` image.
    std::size_t dimension(std::size_t width, std::size_t height) const {
        const std::size_t cells_x = width / cell_size;
        const std::size_t cells_y = height / cell_size;
        return (cells_x - block_cells + 1) * (cells_y - block_cells + 1) * block_cells * block_cells * bins;
    }
};

/// Default input side for HOG; the smaller of the two evaluated sizes.
inline constexpr std::size_t default_hog_side = 128;

/**
 * @brief One frame's global feature vector.
 */
struct GlobalDescriptor {
    std::string frame_id;
    std::vector<double> values;
};

/**
 * @brief One frame's local descriptors (M keypoints x p dimensions, M may be 0).
 */
struct LocalDescriptorSet {
    std::string frame_id;
    Matrix<float> descriptors;
};

/**
 * @brief Per-frame features aligned with the manifest order.
 */
struct FeatureMatrix {
    std::vector<std::string> frame_ids;
    Matrix<float> values;
};

namespace detail {

/// Norm used by L2-Hys; the floor keeps all-zero blocks at zero.
inline constexpr double hog_norm_floor = 1e-10;

inline void l2_hys(std::span<double> block, double clip) {
    double sum = 0;
    for (double v : block) {
        sum += v * v;
    }
    double norm = std::sqrt(sum + hog_norm_floor);
    sum = 0;
    for (double& v : block) {
        v = std::min(v / norm, clip);
        sum += v * v;
    }
    norm = std::sqrt(sum + hog_norm_floor);
    for (double& v : block) {
        v /= norm;
    }
}

}

/**
 * Computes a dense HOG descriptor.
 *
 * Gradients are centered differences with replicated borders. Each pixel
 * votes its gradient magnitude into the two unsigned-orientation bins whose
 * centers bracket its angle (linear interpolation, wrapping at 180 degrees).
 * Blocks of `block_cells` x `block_cells` cells slide with a one-cell stride
 * and are L2-Hys normalized; block vectors are concatenated in row-major block
 * order, cells row-major within a block.
 */
inline GlobalDescriptor compute_hog(const ImageBuffer& image, const HogParams& params = {}, std::string frame_id = {}) {
    params.validate();
    const std::size_t width = image.width;
    const std::size_t height = image.height;
    if (width == 0 || height == 0 || width % params.cell_size != 0 || height % params.cell_size != 0) {
        throw std::invalid_argument("image side " + std::to_string(width) + "x" + std::to_string(height)
                                    + " is not divisible by cell_size " + std::to_string(params.cell_size));
    }
    const std::size_t cells_x = width / params.cell_size;
    const std::size_t cells_y = height / params.cell_size;
    if (cells_x < params.block_cells || cells_y < params.block_cells) {
        throw std::invalid_argument("image smaller than one HOG block");
    }

    const std::size_t bins = params.bins;
    const double bin_width = 180.0 / static_cast<double>(bins);
    std::vector<double> histogram(cells_x * cells_y * bins, 0.0);

    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t up = y == 0 ? 0 : y - 1;
        const std::size_t down = std::min(y + 1, height - 1);
        const std::size_t cell_row = y / params.cell_size;
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t left = x == 0 ? 0 : x - 1;
            const std::size_t right = std::min(x + 1, width - 1);
            const double gx = image.at(right, y) - image.at(left, y);
            const double gy = image.at(x, down) - image.at(x, up);
            const double magnitude = std::sqrt(gx * gx + gy * gy);
            if (magnitude == 0) {
                continue;
            }

            double angle = std::atan2(gy, gx) * (180.0 / std::numbers::pi);
            if (angle < 0) {
                angle += 180.0;
            }
            if (angle >= 180.0) {
                angle -= 180.0;
            }

            const double position = angle / bin_width - 0.5;
            const double lower = std::floor(position);
            const double frac = position - lower;
            const auto lo_bin = static_cast<std::size_t>((static_cast<long long>(lower) + static_cast<long long>(bins)) % static_cast<long long>(bins));
            const std::size_t hi_bin = (lo_bin + 1) % bins;

            double* cell = histogram.data() + (cell_row * cells_x + x / params.cell_size) * bins;
            cell[lo_bin] += magnitude * (1 - frac);
            cell[hi_bin] += magnitude * frac;
        }
    }

    const std::size_t blocks_x = cells_x - params.block_cells + 1;
    const std::size_t blocks_y = cells_y - params.block_cells + 1;
    const std::size_t block_len = params.block_cells * params.block_cells * bins;
    GlobalDescriptor out;
    out.frame_id = std::move(frame_id);
    out.values.resize(blocks_x * blocks_y * block_len);

    for (std::size_t by = 0; by < blocks_y; ++by) {
        for (std::size_t bx = 0; bx < blocks_x; ++bx) {
            std::span<double> block(out.values.data() + (by * blocks_x + bx) * block_len, block_len);
            auto dest = block.begin();
            for (std::size_t cy = by; cy < by + params.block_cells; ++cy) {
                for (std::size_t cx = bx; cx < bx + params.block_cells; ++cx) {
                    const double* cell = histogram.data() + (cy * cells_x + cx) * bins;
                    dest = std::copy(cell, cell + bins, dest);
                }
            }
            detail::l2_hys(block, params.clip);
        }
    }
    return out;
}

inline constexpr std::array<char, 4> lds_magic{'L', 'D', 'S', '1'};

/**
 * Serializes local descriptor sets in `LDS1` format: magic, u32 frame count,
 * then per frame a u16-length-prefixed UTF-8 frame id, u32 M, u32 p and M*p f32.
 */
inline void write_local_descriptors(const std::filesystem::path& path, const std::vector<LocalDescriptorSet>& sets) {
    std::string out(lds_magic.begin(), lds_magic.end());
    binary::put_u32(out, static_cast<std::uint32_t>(sets.size()));
    for (const auto& set : sets) {
        if (set.frame_id.size() > UINT16_MAX) {
            throw std::invalid_argument("frame id too long for LDS1");
        }
        binary::put_u16(out, static_cast<std::uint16_t>(set.frame_id.size()));
        out += set.frame_id;
        binary::put_u32(out, static_cast<std::uint32_t>(set.descriptors.rows()));
        binary::put_u32(out, static_cast<std::uint32_t>(set.descriptors.cols()));
        for (float v : set.descriptors.values()) {
            binary::put_f32(out, v);
        }
    }
    binary::write_file(path, out);
}

/**
 * Reads an `LDS1` file and returns one descriptor set per manifest record, in
 * manifest order. Frames missing from the file get an empty (M = 0) set.
 */
inline std::vector<LocalDescriptorSet> ingest_local_descriptors(const std::filesystem::path& path, const CorpusManifest& manifest) {
    binary::Reader reader(binary::read_file(path), path.string());
    if (reader.take(4) != std::string(lds_magic.begin(), lds_magic.end())) {
        throw std::runtime_error(path.string() + ": magic mismatch (expected LDS1)");
    }

    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        position[manifest.records[i].frame_id] = i;
    }

    std::vector<LocalDescriptorSet> sets(manifest.records.size());
    std::vector<bool> seen(sets.size(), false);
    std::optional<std::uint32_t> dim;

    const std::uint32_t frames = reader.u32();
    for (std::uint32_t f = 0; f < frames; ++f) {
        const std::uint16_t id_len = reader.u16();
        std::string frame_id = reader.take(id_len);
        const std::uint32_t m = reader.u32();
        const std::uint32_t p = reader.u32();

        auto found = position.find(frame_id);
        if (found == position.end()) {
            throw std::runtime_error(path.string() + ": unknown frame_id '" + frame_id + "'");
        }
        if (seen[found->second]) {
            throw std::runtime_error(path.string() + ": frame '" + frame_id + "' appears twice");
        }
        if (m > 0) {
            if (p == 0) {
                throw std::runtime_error(path.string() + ": descriptor dimension 0 for frame '" + frame_id + "'");
            }
            if (dim && *dim != p) {
                throw std::runtime_error(path.string() + ": inconsistent descriptor dimension (" + std::to_string(p)
                                         + " vs " + std::to_string(*dim) + ")");
            }
            dim = p;
        }

        reader.need(static_cast<std::size_t>(m) * p * 4);
        std::vector<float> values(static_cast<std::size_t>(m) * p);
        for (auto& v : values) {
            v = reader.f32();
            if (!std::isfinite(v)) {
                throw std::runtime_error(path.string() + ": non-finite descriptor in frame '" + frame_id + "'");
            }
        }
        seen[found->second] = true;
        sets[found->second] = LocalDescriptorSet{std::move(frame_id), Matrix<float>(m, p, std::move(values))};
    }

    const std::size_t p = dim.value_or(0);
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (!seen[i] || sets[i].descriptors.rows() == 0) {
            sets[i] = LocalDescriptorSet{manifest.records[i].frame_id, Matrix<float>(0, p)};
        }
    }
    return sets;
}

/**
 * Reads an `EMB1` file and gathers rows in manifest order using each record's `row`.
 */
inline FeatureMatrix ingest_global_embeddings(const std::filesystem::path& path, const CorpusManifest& manifest) {
    const auto table = read_embeddings(path);
    FeatureMatrix out;
    out.values = Matrix<float>(manifest.records.size(), table.cols());
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& record = manifest.records[i];
        if (!record.row) {
            throw std::runtime_error("frame '" + record.frame_id + "' has no embedding row");
        }
        if (*record.row >= table.rows()) {
            throw std::runtime_error("frame '" + record.frame_id + "': row out of range (" + std::to_string(*record.row)
                                     + " >= " + std::to_string(table.rows()) + ")");
        }
        const auto src = table.row(*record.row);
        for (float v : src) {
            if (!std::isfinite(v)) {
                throw std::runtime_error("frame '" + record.frame_id + "': non-finite embedding value");
            }
        }
        std::copy(src.begin(), src.end(), out.values.row(i).begin());
        out.frame_ids.push_back(record.frame_id);
    }
    return out;
}

}

#endif
