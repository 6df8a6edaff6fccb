#pragma once

// Caption property assessment (length, descriptiveness, uniqueness),
// optional linear decorrelation of uniqueness and descriptiveness against
// length, and normalization of every property into [0, 1].

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "captionsmiths/corpus.hpp"
#include "captionsmiths/error.hpp"
#include "captionsmiths/ols.hpp"
#include "captionsmiths/provenance.hpp"
#include "json.hpp"

namespace captionsmiths {

/// Non-descriptive nouns left out of the descriptiveness count by default.
inline std::set<Token> default_excluded_nouns() {
    return {"image", "side", "background", "picture", "top", "bottom"};
}

/// Affine map of a property onto [0, 1]: (v - lo) / (hi - lo), clamped.
struct Bounds {
    double lo = 0.0;
    double hi = 1.0;

    double normalize(double v) const { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); }
};

struct PropertyVector {
    std::size_t raw_L = 0;
    double raw_D = 0.0;
    double raw_U = 0.0;
    std::optional<double> decorr_U;
    std::optional<double> decorr_D;
    double norm_L = 0.0;
    double norm_D = 0.0;
    double norm_U = 0.0;

    /// (norm_L, norm_D, norm_U), the conditioning triple.
    std::array<double, 3> norms() const { return {norm_L, norm_D, norm_U}; }

    bool operator==(const PropertyVector&) const = default;
};

/// Fitted corpus state. Frozen after fit_stats; conditioning only reads it.
struct CorpusStats {
    std::map<Token, std::uint64_t> freq;
    std::set<Token> excluded;
    bool decorrelate = false;
    std::array<double, 2> reg_U{0.0, 0.0};       // U ~ a0 + a1 L
    std::array<double, 3> reg_D{0.0, 0.0, 0.0};  // D ~ b0 + b1 L + b2 U_decorr
    Bounds length;
    Bounds descriptiveness;
    Bounds uniqueness;

    /// F(w); unseen words count as 1 (maximally rare).
    std::uint64_t frequency(const Token& w) const {
        const auto it = freq.find(w);
        return it == freq.end() ? 1 : it->second;
    }

    std::uint64_t max_count() const {
        std::uint64_t m = 1;
        for (const auto& [w, f] : freq) m = std::max(m, f);
        return m;
    }

    bool operator==(const CorpusStats& o) const {
        const auto same = [](const Bounds& a, const Bounds& b) { return a.lo == b.lo && a.hi == b.hi; };
        return freq == o.freq && excluded == o.excluded && decorrelate == o.decorrelate && reg_U == o.reg_U &&
               reg_D == o.reg_D && same(length, o.length) && same(descriptiveness, o.descriptiveness) &&
               same(uniqueness, o.uniqueness);
    }
};

inline std::size_t assess_length(std::span<const Token> tokens) {
    if (tokens.empty()) throw ArgumentError("assess_length: empty caption");
    return tokens.size();
}

inline std::size_t assess_length(const Caption& c) { return assess_length(c.tokens); }

/// Fraction of tokens tagged NOUN or ADJ that are not in `excluded`.
inline double assess_descriptiveness(std::span<const Token> tokens, const PosLexicon& lexicon,
                                     const std::set<Token>& excluded) {
    if (tokens.empty()) throw ArgumentError("assess_descriptiveness: empty caption");
    std::size_t hits = 0;
    for (const auto& w : tokens) {
        const Pos p = lexicon.lookup(w);
        if ((p == Pos::Noun || p == Pos::Adj) && !excluded.count(w)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(tokens.size());
}

inline double assess_descriptiveness(const Caption& c, const PosLexicon& lexicon, const std::set<Token>& excluded) {
    return assess_descriptiveness(c.tokens, lexicon, excluded);
}

/// Mean inverse corpus frequency of the caption's tokens.
inline double assess_uniqueness(std::span<const Token> tokens, const CorpusStats& stats) {
    if (tokens.empty()) throw ArgumentError("assess_uniqueness: empty caption");
    double sum = 0.0;
    for (const auto& w : tokens) sum += 1.0 / static_cast<double>(stats.frequency(w));
    return sum / static_cast<double>(tokens.size());
}

inline double assess_uniqueness(const Caption& c, const CorpusStats& stats) {
    return assess_uniqueness(c.tokens, stats);
}

namespace detail {

/// Raw and decorrelated values, before normalization.
inline PropertyVector assess(std::span<const Token> tokens, const CorpusStats& stats, const PosLexicon& lexicon) {
    PropertyVector pv;
    pv.raw_L = assess_length(tokens);
    pv.raw_D = assess_descriptiveness(tokens, lexicon, stats.excluded);
    pv.raw_U = assess_uniqueness(tokens, stats);
    if (stats.decorrelate) {
        const double l = static_cast<double>(pv.raw_L);
        const double du = pv.raw_U - (stats.reg_U[0] + stats.reg_U[1] * l);
        pv.decorr_U = du;
        pv.decorr_D = pv.raw_D - (stats.reg_D[0] + stats.reg_D[1] * l + stats.reg_D[2] * du);
    }
    return pv;
}

inline double d_value(const PropertyVector& pv) { return pv.decorr_D.value_or(pv.raw_D); }
inline double u_value(const PropertyVector& pv) { return pv.decorr_U.value_or(pv.raw_U); }

}  // namespace detail

/// Normalized property vector of one caption under frozen stats.
inline PropertyVector condition(std::span<const Token> tokens, const CorpusStats& stats, const PosLexicon& lexicon) {
    PropertyVector pv = detail::assess(tokens, stats, lexicon);
    pv.norm_L = stats.length.normalize(static_cast<double>(pv.raw_L));
    pv.norm_D = stats.descriptiveness.normalize(detail::d_value(pv));
    pv.norm_U = stats.uniqueness.normalize(detail::u_value(pv));
    return pv;
}

inline PropertyVector condition(const Caption& c, const CorpusStats& stats, const PosLexicon& lexicon) {
    return condition(c.tokens, stats, lexicon);
}

/// Conditioning triple that makes a generated caption resemble `reference`.
inline std::array<double, 3> condition_from_reference(std::string_view reference, const CorpusStats& stats,
                                                      const PosLexicon& lexicon) {
    const auto tokens = tokenize(reference);
    if (tokens.empty()) throw ArgumentError("reference sentence has no tokens");
    return condition(tokens, stats, lexicon).norms();
}

/// Fits word frequencies, optional decorrelation regressions, and
/// normalization bounds over `corpus`.
///
/// Without decorrelation every property is divided by its corpus maximum.
/// With decorrelation, uniqueness is regressed on length and
/// descriptiveness on (length, decorrelated uniqueness); the residuals are
/// min-max scaled, length is still divided by its maximum.
inline CorpusStats fit_stats(std::span<const Caption> corpus, const PosLexicon& lexicon,
                             std::set<Token> excluded, bool decorrelate) {
    if (corpus.empty()) throw ArgumentError("fit_stats: empty corpus");
    CorpusStats stats;
    stats.excluded = std::move(excluded);
    stats.decorrelate = decorrelate;
    for (const auto& c : corpus) {
        if (c.tokens.empty()) throw ArgumentError("fit_stats: caption " + c.id + " is empty");
        for (const auto& w : c.tokens) ++stats.freq[w];
    }

    const auto n = static_cast<Eigen::Index>(corpus.size());
    Eigen::VectorXd len(n), desc(n), uniq(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto pv = detail::assess(corpus[static_cast<std::size_t>(i)].tokens, stats, lexicon);
        len[i] = static_cast<double>(pv.raw_L);
        desc[i] = pv.raw_D;
        uniq[i] = pv.raw_U;
    }

    if (decorrelate) {
        const auto u_fit = ols_with_intercept(len, uniq, "uniqueness");
        stats.reg_U = {u_fit[0], u_fit[1]};
        Eigen::VectorXd du(n);
        for (Eigen::Index i = 0; i < n; ++i) du[i] = uniq[i] - (u_fit[0] + u_fit[1] * len[i]);
        const double ss_u = (uniq.array() - uniq.mean()).square().sum();
        const double ss_du = (du.array() - du.mean()).square().sum();
        if (ss_du <= 1e-24 * ss_u) {
            // Uniqueness is fully explained by length; regress on length alone.
            const auto d_fit = ols_with_intercept(len, desc, "descriptiveness");
            stats.reg_D = {d_fit[0], d_fit[1], 0.0};
        } else {
            Eigen::MatrixXd design(n, 2);
            design.col(0) = len;
            design.col(1) = du;
            const auto d_fit = ols_with_intercept(design, desc, "descriptiveness");
            stats.reg_D = {d_fit[0], d_fit[1], d_fit[2]};
        }
    }

    // Bounds come from the same code path condition() uses, so a fit-set
    // caption holding the extreme value maps to exactly 0 or 1.
    double max_l = 0.0;
    double min_d = 0.0, max_d = 0.0, min_u = 0.0, max_u = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto pv = detail::assess(corpus[i].tokens, stats, lexicon);
        const double d = detail::d_value(pv), u = detail::u_value(pv);
        if (i == 0) {
            min_d = max_d = d;
            min_u = max_u = u;
        }
        max_l = std::max(max_l, static_cast<double>(pv.raw_L));
        min_d = std::min(min_d, d);
        max_d = std::max(max_d, d);
        min_u = std::min(min_u, u);
        max_u = std::max(max_u, u);
    }
    stats.length = {0.0, max_l};
    if (decorrelate) {
        stats.descriptiveness = {min_d, max_d};
        stats.uniqueness = {min_u, max_u};
    } else {
        stats.descriptiveness = {0.0, max_d};
        stats.uniqueness = {0.0, max_u};
    }
    if (!(stats.descriptiveness.hi > stats.descriptiveness.lo)) {
        throw FitError("descriptiveness: degenerate normalization range");
    }
    if (!(stats.uniqueness.hi > stats.uniqueness.lo)) throw FitError("uniqueness: degenerate normalization range");
    return stats;
}

inline CorpusStats fit_stats(const CorpusManifest& corpus, const PosLexicon& lexicon, std::set<Token> excluded,
                             bool decorrelate) {
    return fit_stats(std::span<const Caption>(corpus.captions), lexicon, std::move(excluded), decorrelate);
}

// ---------------------------------------------------------------------------
// Stats file: one JSON document. Doubles are written with round-trip
// precision so a reloaded file conditions bit-identically.

inline nlohmann::json stats_to_json(const CorpusStats& s, const Provenance& prov) {
    const auto bounds = [](const Bounds& b) { return nlohmann::json{{"min", b.lo}, {"max", b.hi}}; };
    nlohmann::json freq = nlohmann::json::object();
    for (const auto& [w, f] : s.freq) freq[w] = f;
    return {
        {"format_version", kFormatVersion},
        {"provenance", prov.to_json()},
        {"decorrelation_enabled", s.decorrelate},
        {"excl_set", s.excluded},
        {"reg_U", s.reg_U},
        {"reg_D", s.reg_D},
        {"bounds",
         {{"length", bounds(s.length)},
          {"descriptiveness", bounds(s.descriptiveness)},
          {"uniqueness", bounds(s.uniqueness)}}},
        {"freq", freq},
    };
}

inline CorpusStats stats_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("format_version")) throw FormatError("stats: missing format_version");
    if (j["format_version"] != kFormatVersion) {
        throw FormatError("stats: unsupported format_version " + j["format_version"].dump());
    }
    try {
        CorpusStats s;
        s.decorrelate = j.at("decorrelation_enabled").get<bool>();
        s.excluded = j.at("excl_set").get<std::set<Token>>();
        s.reg_U = j.at("reg_U").get<std::array<double, 2>>();
        s.reg_D = j.at("reg_D").get<std::array<double, 3>>();
        const auto bounds = [&](const char* key) {
            const auto& b = j.at("bounds").at(key);
            return Bounds{b.at("min").get<double>(), b.at("max").get<double>()};
        };
        s.length = bounds("length");
        s.descriptiveness = bounds("descriptiveness");
        s.uniqueness = bounds("uniqueness");
        for (const auto& [w, f] : j.at("freq").items()) {
            const auto count = f.get<std::uint64_t>();
            if (count < 1) throw FormatError("stats: frequency of " + w + " is zero");
            s.freq.emplace(w, count);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("stats: ") + e.what());
    }
}

inline void save_stats(const CorpusStats& s, const std::filesystem::path& path, const Provenance& prov = {}) {
    auto out = detail::open_out(path);
    out << stats_to_json(s, prov).dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline CorpusStats load_stats(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("stats: ") + e.what());
    }
    return stats_from_json(j);
}

}  // namespace captionsmiths
