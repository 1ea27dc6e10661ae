#ifndef LEAKSPLIT_PNG_IO_HPP
#define LEAKSPLIT_PNG_IO_HPP

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace leaksplit {

/**
 * @brief Decoded 8-bit image, either 1 (gray) or 3 (RGB) interleaved channels.
 */
struct RawImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    int channels = 0;
    std::vector<std::uint8_t> bytes;
};

namespace detail {

struct PngImageGuard {
    png_image image;
    PngImageGuard() {
        std::memset(&image, 0, sizeof(image));
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImageGuard() { png_image_free(&image); }
    PngImageGuard(const PngImageGuard&) = delete;
    PngImageGuard& operator=(const PngImageGuard&) = delete;
};

}

/**
 * Decodes a PNG file. Grayscale inputs stay single-channel; anything with
 * color (RGB, palette) is expanded to RGB. Alpha is dropped.
 */
inline RawImage read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("unreadable image file: " + path.string());
    }

    detail::PngImageGuard guard;
    if (!png_image_begin_read_from_file(&guard.image, path.c_str())) {
        throw std::runtime_error("undecodable image " + path.string() + ": " + guard.image.message);
    }
    if (guard.image.width == 0 || guard.image.height == 0) {
        throw std::runtime_error("zero-dimension image: " + path.string());
    }

    RawImage out;
    out.width = guard.image.width;
    out.height = guard.image.height;
    const bool has_color = (guard.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    guard.image.format = has_color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    out.channels = has_color ? 3 : 1;
    out.bytes.resize(PNG_IMAGE_SIZE(guard.image));
    if (!png_image_finish_read(&guard.image, nullptr, out.bytes.data(), 0, nullptr)) {
        throw std::runtime_error("undecodable image " + path.string() + ": " + guard.image.message);
    }
    return out;
}

/**
 * Encodes 8-bit gray or RGB pixels. Output bytes depend only on the pixels.
 */
inline void write_png(const std::filesystem::path& path, const RawImage& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw std::invalid_argument("write_png supports 1 or 3 channels");
    }
    if (image.bytes.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
        throw std::invalid_argument("write_png: pixel buffer size mismatch");
    }

    detail::PngImageGuard guard;
    guard.image.width = image.width;
    guard.image.height = image.height;
    guard.image.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&guard.image, path.c_str(), 0, image.bytes.data(), 0, nullptr)) {
        throw std::runtime_error("cannot write image " + path.string() + ": " + guard.image.message);
    }
}

}

#endif
