#ifndef LEAKSPLIT_MATRIX_IO_HPP
#define LEAKSPLIT_MATRIX_IO_HPP

#include "matrix.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file matrix_io.hpp
 *
 * @brief Little-endian binary encoding shared by the `EMB1` and `LDS1` formats.
 *
 * `EMB1`: magic, u32 row count N, u32 dimension d, then N*d f32 row-major.
 */

namespace leaksplit {

namespace binary {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) {
        out.push_back(static_cast<char>((v >> s) & 0xFF));
    }
}

inline void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

/**
 * @brief Bounds-checked cursor over an in-memory file.
 */
class Reader {
public:
    Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    const std::string& name() const { return name_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) {
            throw std::runtime_error(name_ + ": truncated file");
        }
    }

    std::string take(std::size_t n) {
        need(n);
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint16_t u16() {
        need(2);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8)
               | (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    float f32() { return std::bit_cast<float>(u32()); }

private:
    std::string bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("I/O failure writing " + path.string());
    }
}

}

inline constexpr std::array<char, 4> emb_magic{'E', 'M', 'B', '1'};

/**
 * Serializes a matrix in `EMB1` format. Values are narrowed to f32.
 */
template <typename T>
std::string encode_embeddings(const Matrix<T>& m) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) {
        throw std::invalid_argument("matrix too large for EMB1");
    }
    std::string out(emb_magic.begin(), emb_magic.end());
    out.reserve(12 + 4 * m.values().size());
    binary::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    binary::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (const auto& v : m.values()) {
        binary::put_f32(out, static_cast<float>(v));
    }
    return out;
}

template <typename T>
void write_embeddings(const std::filesystem::path& path, const Matrix<T>& m) {
    binary::write_file(path, encode_embeddings(m));
}

inline Matrix<float> decode_embeddings(binary::Reader& reader) {
    if (reader.take(4) != std::string(emb_magic.begin(), emb_magic.end())) {
        throw std::runtime_error(reader.name() + ": magic mismatch (expected EMB1)");
    }
    const std::uint32_t n = reader.u32();
    const std::uint32_t d = reader.u32();
    if (d == 0) {
        throw std::runtime_error(reader.name() + ": dimension 0");
    }
    const std::size_t count = static_cast<std::size_t>(n) * d;
    reader.need(count * 4);
    std::vector<float> values(count);
    for (auto& v : values) {
        v = reader.f32();
    }
    return Matrix<float>(n, d, std::move(values));
}

inline Matrix<float> read_embeddings(const std::filesystem::path& path) {
    binary::Reader reader(binary::read_file(path), path.string());
    return decode_embeddings(reader);
}

}

#endif
