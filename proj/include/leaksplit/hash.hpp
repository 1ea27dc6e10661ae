#ifndef LEAKSPLIT_HASH_HPP
#define LEAKSPLIT_HASH_HPP

#include "matrix_io.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

/**
 * @file hash.hpp
 *
 * @brief SHA-256 content hashes for run manifests.
 */

namespace leaksplit {

/**
 * Incremental SHA-256; `hex()` finalizes.
 */
class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("SHA-256 initialization failed");
        }
    }

    Sha256& update(const std::string& bytes) {
        if (EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()) != 1) {
            throw std::runtime_error("SHA-256 update failed");
        }
        return *this;
    }

    std::string hex() {
        unsigned char digest[EVP_MAX_MD_SIZE];
        unsigned int length = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), digest, &length) != 1) {
            throw std::runtime_error("SHA-256 finalization failed");
        }
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < length; ++i) {
            out += digits[digest[i] >> 4];
            out += digits[digest[i] & 15];
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(const std::string& bytes) {
    return Sha256().update(bytes).hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
    return sha256_hex(binary::read_file(path));
}

}

#endif
