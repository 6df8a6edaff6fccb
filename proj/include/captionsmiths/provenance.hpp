#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>

#include "captionsmiths/hash.hpp"
#include "json.hpp"

#ifndef CAPTIONSMITHS_VERSION
#define CAPTIONSMITHS_VERSION "0.1.0"
#endif

namespace captionsmiths {

inline constexpr const char* kToolVersion = CAPTIONSMITHS_VERSION;
inline constexpr int kFormatVersion = 1;

/// Written into the header of every emitted file.
struct Provenance {
    std::string tool_version = kToolVersion;
    std::uint64_t seed = 0;
    std::string config_hash = "0000000000000000";

    static Provenance of(std::uint64_t seed, std::string_view canonical_config) {
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canonical_config);
        return Provenance{kToolVersion, seed, os.str()};
    }

    nlohmann::json to_json() const {
        return {{"tool_version", tool_version}, {"seed", seed}, {"config_hash", config_hash}};
    }

    /// `# tool=... seed=... config_hash=...` for comment-capable formats.
    std::string comment_line() const {
        return "# tool=captionsmiths " + tool_version + " seed=" + std::to_string(seed) +
               " config_hash=" + config_hash;
    }
};

}  // namespace captionsmiths
