#ifndef LEAKSPLIT_CORPUS_HPP
#define LEAKSPLIT_CORPUS_HPP

#include "csv.hpp"
#include "png_io.hpp"
#include "random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file corpus.hpp
 *
 * @brief Frame manifests, frame sampling, image loading and the synthetic video corpus.
 */

namespace leaksplit {

/**
 * @brief Identity of one frame extracted from a source video.
 *
 * At least one of `path` (an image file) or `row` (a row of an external
 * embedding file) is present.
 */
struct FrameRecord {
    std::string frame_id;
    std::string video_id;
    std::uint64_t frame_index = 0;
    std::optional<std::string> path;
    std::optional<std::uint64_t> row;

    bool operator==(const FrameRecord&) const = default;
};

/**
 * @brief Ordered frame records. The record order is the row order of every
 * matrix derived from the manifest.
 */
struct CorpusManifest {
    std::vector<FrameRecord> records;
    std::map<std::string, double> fps_table;

    /// Directory that relative image paths are resolved against.
    std::filesystem::path base_dir;

    std::size_t size() const { return records.size(); }

    std::filesystem::path resolve(const FrameRecord& record) const {
        if (!record.path) {
            throw std::runtime_error("frame " + record.frame_id + " has no image path");
        }
        std::filesystem::path p(*record.path);
        return p.is_absolute() ? p : base_dir / p;
    }

    /// Distinct video ids in order of first appearance.
    std::vector<std::string> video_ids() const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& r : records) {
            if (seen.insert(r.video_id).second) {
                out.push_back(r.video_id);
            }
        }
        return out;
    }
};

inline constexpr const char* manifest_header = "frame_id,video_id,frame_index,path,row";

namespace detail {

inline std::optional<std::uint64_t> parse_index(const std::string& field, const char* what, std::size_t line_no) {
    if (field.empty()) {
        return std::nullopt;
    }
    if (field.front() == '-') {
        throw std::runtime_error("line " + std::to_string(line_no) + ": negative " + what);
    }
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": malformed " + what + " '" + field + "'");
    }
    return value;
}

}

/**
 * Reads a manifest CSV with header `frame_id,video_id,frame_index,path,row`
 * (an extra trailing `partition` column, as written by the splitter, is accepted and ignored).
 */
inline CorpusManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open manifest " + path.string());
    }

    CorpusManifest manifest;
    manifest.base_dir = path.parent_path();

    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("manifest " + path.string() + " is missing its header");
    }
    auto header = csv::split_line(line);
    const bool has_partition = header.size() == 6 && header[5] == "partition";
    header.resize(std::min<std::size_t>(header.size(), 5));
    if (header != std::vector<std::string>{"frame_id", "video_id", "frame_index", "path", "row"}) {
        throw std::runtime_error("manifest " + path.string() + ": unexpected header '" + line + "'");
    }
    const std::size_t expected_columns = has_partition ? 6 : 5;

    std::set<std::string> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = csv::split_line(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (fields.size() != expected_columns) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected " + std::to_string(expected_columns)
                                     + " columns, found " + std::to_string(fields.size()));
        }

        FrameRecord record;
        record.frame_id = fields[0];
        record.video_id = fields[1];
        if (record.frame_id.empty()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": missing frame_id");
        }
        auto index = detail::parse_index(fields[2], "frame index", line_no);
        if (!index) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": missing frame_index");
        }
        record.frame_index = *index;
        if (!fields[3].empty()) {
            record.path = fields[3];
        }
        record.row = detail::parse_index(fields[4], "row", line_no);
        if (!record.path && !record.row) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": frame has neither path nor row");
        }
        if (!ids.insert(record.frame_id).second) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": duplicate frame id '" + record.frame_id + "'");
        }
        manifest.records.push_back(std::move(record));
    }
    return manifest;
}

/**
 * Writes records in manifest format. When `partitions` is given it must be
 * aligned with `records` and is emitted as an extra `partition` column.
 */
inline void write_manifest(const std::filesystem::path& path, const std::vector<FrameRecord>& records,
                           const std::vector<std::string>* partitions = nullptr) {
    if (partitions && partitions->size() != records.size()) {
        throw std::invalid_argument("partition column length does not match records");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write manifest " + path.string());
    }
    out << manifest_header << (partitions ? ",partition" : "") << '\n';
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        out << csv::escape(r.frame_id) << ',' << csv::escape(r.video_id) << ',' << r.frame_index << ','
            << (r.path ? csv::escape(*r.path) : std::string()) << ',' << (r.row ? std::to_string(*r.row) : std::string());
        if (partitions) {
            out << ',' << (*partitions)[i];
        }
        out << '\n';
    }
    if (!out) {
        throw std::runtime_error("I/O failure writing " + path.string());
    }
}

/// Reads a `video_id,fps` sidecar table.
inline std::map<std::string, double> load_fps_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open fps table " + path.string());
    }
    std::string line;
    std::getline(in, line);
    std::map<std::string, double> table;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        auto fields = csv::split_line(line);
        if (fields.size() != 2) {
            throw std::runtime_error("fps table: malformed line '" + line + "'");
        }
        const double fps = std::stod(fields[1]);
        if (!(fps > 0) || !std::isfinite(fps)) {
            throw std::runtime_error("fps table: non-positive fps for video " + fields[0]);
        }
        table[fields[0]] = fps;
    }
    return table;
}

inline void write_fps_table(const std::filesystem::path& path, const std::map<std::string, double>& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write fps table " + path.string());
    }
    out << "video_id,fps\n";
    for (const auto& [video, fps] : table) {
        std::ostringstream value;
        value.precision(17);
        value << fps;
        out << csv::escape(video) << ',' << value.str() << '\n';
    }
}

/**
 * Indices of the frames kept when sampling one frame per second from a video
 * of `n_frames` frames recorded at `fps`: `round(j * fps)` for j = 0, 1, ...,
 * kept while below `n_frames`. Ascending, duplicate-free, always starts at 0.
 */
inline std::vector<std::uint64_t> sample_one_fps(std::uint64_t n_frames, double fps) {
    if (!(fps > 0) || !std::isfinite(fps)) {
        throw std::invalid_argument("fps must be positive");
    }
    if (n_frames == 0) {
        throw std::invalid_argument("n_frames must be positive");
    }

    std::vector<std::uint64_t> indices;
    if (fps <= 1.0) {
        // Steps shorter than one frame: rounding visits every index.
        indices.resize(n_frames);
        for (std::uint64_t i = 0; i < n_frames; ++i) {
            indices[i] = i;
        }
        return indices;
    }
    for (std::uint64_t j = 0;; ++j) {
        const double position = std::round(static_cast<double>(j) * fps);
        if (position >= static_cast<double>(n_frames)) {
            break;
        }
        const auto index = static_cast<std::uint64_t>(position);
        if (indices.empty() || indices.back() != index) {
            indices.push_back(index);
        }
    }
    return indices;
}

/**
 * @brief Row-major luminance image with values in [0, 1].
 */
struct ImageBuffer {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;

    ImageBuffer() = default;
    ImageBuffer(std::size_t w, std::size_t h, double fill = 0) : width(w), height(h), pixels(w * h, fill) {}

    double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

    bool operator==(const ImageBuffer&) const = default;
};

/// ITU-R BT.601 luma weights.
inline ImageBuffer to_luminance(const RawImage& raw) {
    ImageBuffer out(raw.width, raw.height);
    const std::size_t n = out.pixels.size();
    if (raw.channels == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            out.pixels[i] = raw.bytes[i] / 255.0;
        }
    } else if (raw.channels == 3) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto* px = raw.bytes.data() + 3 * i;
            out.pixels[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
        }
    } else {
        throw std::invalid_argument("unsupported channel count " + std::to_string(raw.channels));
    }
    return out;
}

/**
 * Bilinear resampling with pixel-center alignment and edge clamping.
 * Resizing to the same dimensions returns the input unchanged.
 */
inline ImageBuffer resize_bilinear(const ImageBuffer& src, std::size_t width, std::size_t height) {
    if (src.width == 0 || src.height == 0) {
        throw std::invalid_argument("zero-dimension image");
    }
    if (width == 0 || height == 0) {
        throw std::invalid_argument("target size must be positive");
    }

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t src_len, std::size_t dst_len) {
        std::vector<Tap> out(dst_len);
        const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
        for (std::size_t d = 0; d < dst_len; ++d) {
            double pos = (static_cast<double>(d) + 0.5) * scale - 0.5;
            pos = std::clamp(pos, 0.0, static_cast<double>(src_len - 1));
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const auto hi = std::min(lo + 1, src_len - 1);
            out[d] = {lo, hi, pos - static_cast<double>(lo)};
        }
        return out;
    };

    const auto xs = taps(src.width, width);
    const auto ys = taps(src.height, height);
    ImageBuffer out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const auto& ty = ys[y];
        for (std::size_t x = 0; x < width; ++x) {
            const auto& tx = xs[x];
            const double top = src.at(tx.lo, ty.lo) * (1 - tx.frac) + src.at(tx.hi, ty.lo) * tx.frac;
            const double bottom = src.at(tx.lo, ty.hi) * (1 - tx.frac) + src.at(tx.hi, ty.hi) * tx.frac;
            out.at(x, y) = top * (1 - ty.frac) + bottom * ty.frac;
        }
    }
    return out;
}

/**
 * Decodes an image file, converts it to luminance and resizes it to a
 * `target_side` x `target_side` square (aspect ratio is not preserved).
 */
inline ImageBuffer load_image(const std::filesystem::path& path, std::size_t target_side) {
    if (target_side == 0) {
        throw std::invalid_argument("target side must be positive");
    }
    return resize_bilinear(to_luminance(read_png(path)), target_side, target_side);
}

/**
 * @brief Parameters of the synthetic video corpus.
 */
struct SyntheticCorpusParams {
    std::size_t n_videos = 20;
    std::size_t frames_per_video = 10;
    std::size_t image_side = 64;
    std::uint64_t seed = 0;
};

namespace detail {

struct Grating {
    double angle, frequency, phase, amplitude;
};

struct SyntheticVideo {
    double tint[3];
    double offset[3];
    Grating gratings[3];
    double noise_grid[8][8];
    bool square;
    double radius;
    double color[3];
    double x0, y0, vx, vy;
    double fps;
};

inline SyntheticVideo draw_video(Rng& rng) {
    SyntheticVideo v{};
    for (int c = 0; c < 3; ++c) {
        v.tint[c] = rng.uniform(0.55, 1.0);
        v.offset[c] = rng.uniform(0.0, 0.2);
    }
    for (auto& g : v.gratings) {
        g.angle = rng.uniform(0.0, std::numbers::pi);
        g.frequency = rng.uniform(2.0, 9.0);
        g.phase = rng.uniform(0.0, 2 * std::numbers::pi);
        g.amplitude = rng.uniform(0.05, 0.18);
    }
    for (auto& row : v.noise_grid) {
        for (auto& cell : row) {
            cell = rng.uniform(-0.15, 0.15);
        }
    }
    v.square = rng.uniform() < 0.5;
    v.radius = rng.uniform(0.1, 0.2);
    for (auto& c : v.color) {
        c = rng.uniform();
    }
    v.x0 = rng.uniform(0.3, 0.7);
    v.y0 = rng.uniform(0.3, 0.7);
    const double heading = rng.uniform(0.0, 2 * std::numbers::pi);
    const double speed = rng.uniform(0.004, 0.012);
    v.vx = speed * std::cos(heading);
    v.vy = speed * std::sin(heading);
    static constexpr double rates[] = {24.0, 25.0, 30.0, 29.97};
    v.fps = rates[rng.index(4)];
    return v;
}

inline double value_noise(const double (&grid)[8][8], double u, double v) {
    const double gx = std::clamp(u * 7.0, 0.0, 7.0);
    const double gy = std::clamp(v * 7.0, 0.0, 7.0);
    const int x0 = std::min(static_cast<int>(gx), 6);
    const int y0 = std::min(static_cast<int>(gy), 6);
    const double fx = gx - x0;
    const double fy = gy - y0;
    const double top = grid[y0][x0] * (1 - fx) + grid[y0][x0 + 1] * fx;
    const double bottom = grid[y0 + 1][x0] * (1 - fx) + grid[y0 + 1][x0 + 1] * fx;
    return top * (1 - fy) + bottom * fy;
}

inline RawImage render_frame(const SyntheticVideo& video, double seconds, std::size_t side, Rng& noise) {
    RawImage image;
    image.width = static_cast<std::uint32_t>(side);
    image.height = static_cast<std::uint32_t>(side);
    image.channels = 3;
    image.bytes.resize(side * side * 3);

    const double cx = video.x0 + video.vx * seconds;
    const double cy = video.y0 + video.vy * seconds;
    for (std::size_t y = 0; y < side; ++y) {
        const double v = (y + 0.5) / side;
        for (std::size_t x = 0; x < side; ++x) {
            const double u = (x + 0.5) / side;
            double gray = 0.5 + value_noise(video.noise_grid, u, v);
            for (const auto& g : video.gratings) {
                const double along = u * std::cos(g.angle) + v * std::sin(g.angle);
                gray += g.amplitude * std::sin(2 * std::numbers::pi * g.frequency * along + g.phase);
            }

            const double dx = u - cx;
            const double dy = v - cy;
            const bool inside = video.square ? (std::abs(dx) < video.radius && std::abs(dy) < video.radius)
                                             : (dx * dx + dy * dy < video.radius * video.radius);

            auto* px = image.bytes.data() + 3 * (y * side + x);
            for (int c = 0; c < 3; ++c) {
                double value = inside ? video.color[c] : video.tint[c] * gray + video.offset[c];
                value += noise.uniform(-0.02, 0.02);
                px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
            }
        }
    }
    return image;
}

inline std::string zero_pad(std::uint64_t value, int width) {
    std::string s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) {
        s.insert(0, width - s.size(), '0');
    }
    return s;
}

}

/**
 * Writes a synthetic corpus of `n_videos` "videos" into `out_dir`:
 * PNG frames under `frames/`, `manifest.csv` and `fps.csv`.
 *
 * Each video has its own textured background and a shape drifting slowly
 * across the frame; its frames are the one-frame-per-second samples of a
 * video recorded at a per-video frame rate. Output is byte-identical for a
 * given seed.
 */
inline CorpusManifest generate_synthetic_corpus(const std::filesystem::path& out_dir, const SyntheticCorpusParams& params) {
    if (params.n_videos == 0 || params.frames_per_video == 0 || params.image_side == 0) {
        throw std::invalid_argument("synthetic corpus counts must be positive");
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "frames", ec);
    if (ec) {
        throw std::runtime_error("unwritable output directory " + out_dir.string() + ": " + ec.message());
    }

    CorpusManifest manifest;
    manifest.base_dir = out_dir;
    for (std::size_t v = 0; v < params.n_videos; ++v) {
        Rng video_rng(derive_seed(params.seed, 2 * v));
        const auto video = detail::draw_video(video_rng);
        const std::string video_id = "v" + detail::zero_pad(v, 4);
        manifest.fps_table[video_id] = video.fps;

        const auto raw_frames = static_cast<std::uint64_t>(std::ceil(params.frames_per_video * video.fps)) + 1;
        auto sampled = sample_one_fps(raw_frames, video.fps);
        sampled.resize(params.frames_per_video);

        Rng noise(derive_seed(params.seed, 2 * v + 1));
        for (auto index : sampled) {
            const double seconds = static_cast<double>(index) / video.fps;
            const auto image = detail::render_frame(video, seconds, params.image_side, noise);

            FrameRecord record;
            record.frame_id = video_id + "_f" + detail::zero_pad(index, 6);
            record.video_id = video_id;
            record.frame_index = index;
            record.path = "frames/" + record.frame_id + ".png";
            write_png(out_dir / *record.path, image);
            manifest.records.push_back(std::move(record));
        }
    }

    write_manifest(out_dir / "manifest.csv", manifest.records);
    write_fps_table(out_dir / "fps.csv", manifest.fps_table);
    return manifest;
}

}

#endif
