#pragma once

#include <openssl/evp.h>

#include <array>
#include <span>
#include <string>

#include "fedvisor/common.hpp"

namespace fedvisor {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(std::span<const std::uint8_t> data) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size())
        throw Error("sha256 digest failed");
    return out;
}

inline std::string digest_hex(const Digest& d) { return to_hex(d.data(), d.size()); }

}  // namespace fedvisor
