#pragma once

#include <cstdint>
#include <string_view>

namespace captionsmiths {

/// 64-bit FNV-1a. Stable across platforms, used for split assignment and
/// config fingerprints.
constexpr std::uint64_t fnv1a64(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace captionsmiths
