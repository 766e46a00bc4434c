// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/digest.hpp"

#include <openssl/sha.h>

#include <array>

namespace splatopt {

namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> sha256_raw(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
    SHA256(reinterpret_cast<const unsigned char *>(data.data()), data.size(), out.data());
    return out;
}

} // namespace

std::string sha256_hex(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    const auto raw = sha256_raw(data);
    std::string hex;
    hex.reserve(raw.size() * 2);
    for (unsigned char b : raw) {
        hex.push_back(kHex[b >> 4]);
        hex.push_back(kHex[b & 0xf]);
    }
    return hex;
}

std::uint64_t stable_hash64(std::string_view data) {
    const auto raw = sha256_raw(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | raw[static_cast<std::size_t>(i)];
    return v;
}

} // namespace splatopt
