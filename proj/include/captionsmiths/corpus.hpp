#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "captionsmiths/error.hpp"
#include "captionsmiths/provenance.hpp"
#include "json.hpp"

namespace captionsmiths {

/// Lowercase, whitespace-free, non-empty word.
using Token = std::string;

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from every piece. Pieces that become empty are dropped.
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    const auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        std::size_t b = i, e = j;
        while (b < e && is_punct(text[b])) ++b;
        while (e > b && is_punct(text[e - 1])) --e;
        if (e > b) {
            Token t(text.substr(b, e - b));
            for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            out.push_back(std::move(t));
        }
        i = j;
    }
    return out;
}

inline std::string join_tokens(std::span<const Token> tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

enum class Pos { Noun, Adj, Verb, Det, Prep, Pron, Other };

inline std::string_view to_string(Pos p) {
    switch (p) {
        case Pos::Noun: return "NOUN";
        case Pos::Adj: return "ADJ";
        case Pos::Verb: return "VERB";
        case Pos::Det: return "DET";
        case Pos::Prep: return "PREP";
        case Pos::Pron: return "PRON";
        case Pos::Other: return "OTHER";
    }
    return "OTHER";
}

inline std::optional<Pos> parse_pos(std::string_view s) {
    for (Pos p : {Pos::Noun, Pos::Adj, Pos::Verb, Pos::Det, Pos::Prep, Pos::Pron, Pos::Other}) {
        if (to_string(p) == s) return p;
    }
    return std::nullopt;
}

/// Closed token -> tag map. Lookups of unknown tokens give Pos::Other.
class PosLexicon {
public:
    PosLexicon() = default;
    explicit PosLexicon(std::map<Token, Pos> entries) : entries_(std::move(entries)) {}

    Pos lookup(std::string_view token) const {
        const auto it = entries_.find(std::string(token));
        return it == entries_.end() ? Pos::Other : it->second;
    }

    bool contains(std::string_view token) const { return entries_.count(std::string(token)) != 0; }

    void set(Token token, Pos pos) { entries_[std::move(token)] = pos; }

    const std::map<Token, Pos>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::map<Token, Pos> entries_;
};

struct Entity {
    Token coarse_name;
    Token fine_name;
    std::vector<Token> attributes;
};

struct Scene {
    std::string id;
    std::vector<Entity> entities;
};

struct Caption {
    std::string id;
    std::string scene_id;
    std::string text;
    std::vector<Token> tokens;

    static Caption from_text(std::string id, std::string scene_id, std::string text) {
        auto toks = tokenize(text);
        return Caption{std::move(id), std::move(scene_id), std::move(text), std::move(toks)};
    }

    std::size_t size() const noexcept { return tokens.size(); }
};

struct CorpusManifest {
    std::vector<Caption> captions;
    std::map<std::string, Scene> scenes;
    std::optional<std::uint64_t> generator_seed;

    const Scene& scene_of(const Caption& c) const {
        const auto it = scenes.find(c.scene_id);
        if (it == scenes.end()) throw IntegrityError("caption " + c.id + ": unknown scene " + c.scene_id);
        return it->second;
    }
};

/// Checks the scene invariants: 1-4 entities, 0-3 attributes, coarse != fine.
inline void validate_scene(const Scene& s) {
    if (s.entities.empty() || s.entities.size() > 4) {
        throw IntegrityError("scene " + s.id + ": needs 1-4 entities");
    }
    for (const auto& e : s.entities) {
        if (e.coarse_name.empty() || e.fine_name.empty()) {
            throw IntegrityError("scene " + s.id + ": empty entity name");
        }
        if (e.coarse_name == e.fine_name) {
            throw IntegrityError("scene " + s.id + ": coarse and fine names are equal (" + e.coarse_name + ")");
        }
        if (e.attributes.size() > 3) {
            throw IntegrityError("scene " + s.id + ": entity " + e.fine_name + " has more than 3 attributes");
        }
    }
}

/// Establishes the manifest invariants: unique caption ids, resolvable scenes,
/// non-empty captions.
inline void validate_manifest(const CorpusManifest& m) {
    std::set<std::string> ids;
    for (const auto& c : m.captions) {
        if (!ids.insert(c.id).second) throw IntegrityError("duplicate caption id " + c.id);
        if (!m.scenes.count(c.scene_id)) {
            throw IntegrityError("caption " + c.id + " references unknown scene " + c.scene_id);
        }
        if (c.tokens.empty()) throw IntegrityError("caption " + c.id + " has no tokens");
    }
    for (const auto& [id, s] : m.scenes) validate_scene(s);
}

// ---------------------------------------------------------------------------
// File formats. Every file starts with a header record carrying
// "format_version": 1 and the provenance of the run that wrote it.

namespace detail {

inline nlohmann::json header_record(std::string_view kind, const Provenance& prov) {
    return {{"format_version", kFormatVersion}, {"kind", kind}, {"provenance", prov.to_json()}};
}

inline void check_version(const nlohmann::json& j, std::size_t line) {
    if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
        throw ParseError("missing format_version", line);
    }
    if (j["format_version"].get<int>() != kFormatVersion) {
        throw FormatError("unsupported format_version " + j["format_version"].dump());
    }
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return in;
}

inline std::string required_string(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw ParseError(std::string("missing string field \"") + key + "\"", line);
    }
    return j[key].get<std::string>();
}

/// Calls `fn(json, line)` on every non-empty line; the optional header
/// record (a line holding "format_version") is validated and skipped.
template <class Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        if (!j.is_object()) throw ParseError("record is not an object", lineno);
        if (j.contains("format_version")) {
            check_version(j, lineno);
            continue;
        }
        fn(j, lineno);
    }
}

}  // namespace detail

inline std::vector<Caption> read_captions(const std::filesystem::path& path) {
    std::vector<Caption> out;
    detail::for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
        auto id = detail::required_string(j, "id", line);
        auto scene = detail::required_string(j, "scene_id", line);
        auto text = detail::required_string(j, "caption", line);
        out.push_back(Caption::from_text(std::move(id), std::move(scene), std::move(text)));
    });
    return out;
}

inline std::map<std::string, Scene> read_scenes(const std::filesystem::path& path) {
    std::map<std::string, Scene> out;
    detail::for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
        Scene s;
        s.id = detail::required_string(j, "id", line);
        if (!j.contains("entities") || !j["entities"].is_array()) {
            throw ParseError("missing array field \"entities\"", line);
        }
        for (const auto& e : j["entities"]) {
            if (!e.is_object()) throw ParseError("entity is not an object", line);
            Entity ent;
            ent.coarse_name = detail::required_string(e, "coarse", line);
            ent.fine_name = detail::required_string(e, "fine", line);
            if (e.contains("attributes")) {
                if (!e["attributes"].is_array()) throw ParseError("attributes is not an array", line);
                for (const auto& a : e["attributes"]) {
                    if (!a.is_string()) throw ParseError("attribute is not a string", line);
                    ent.attributes.push_back(a.get<std::string>());
                }
            }
            s.entities.push_back(std::move(ent));
        }
        if (out.count(s.id)) throw IntegrityError("duplicate scene id " + s.id);
        out.emplace(s.id, std::move(s));
    });
    return out;
}

/// Loads a caption file and its companion scene file into a validated manifest.
inline CorpusManifest load_corpus(const std::filesystem::path& captions_path,
                                  const std::filesystem::path& scenes_path) {
    CorpusManifest m;
    m.captions = read_captions(captions_path);
    m.scenes = read_scenes(scenes_path);
    validate_manifest(m);
    return m;
}

inline void write_captions(const std::filesystem::path& path, std::span<const Caption> captions,
                           const Provenance& prov) {
    auto out = detail::open_out(path);
    out << detail::header_record("captions", prov).dump() << '\n';
    for (const auto& c : captions) {
        nlohmann::json j = {{"id", c.id}, {"scene_id", c.scene_id}, {"caption", c.text}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_scenes(const std::filesystem::path& path, const std::map<std::string, Scene>& scenes,
                         const Provenance& prov) {
    auto out = detail::open_out(path);
    out << detail::header_record("scenes", prov).dump() << '\n';
    for (const auto& [id, s] : scenes) {
        nlohmann::json ents = nlohmann::json::array();
        for (const auto& e : s.entities) {
            ents.push_back({{"coarse", e.coarse_name}, {"fine", e.fine_name}, {"attributes", e.attributes}});
        }
        out << nlohmann::json{{"id", id}, {"entities", ents}}.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void save_lexicon(const std::filesystem::path& path, const PosLexicon& lex, const Provenance& prov) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [tok, pos] : lex.entries()) entries[tok] = to_string(pos);
    nlohmann::json j = {{"format_version", kFormatVersion},
                        {"provenance", prov.to_json()},
                        {"lexicon", entries}};
    auto out = detail::open_out(path);
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline PosLexicon load_lexicon(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("lexicon: ") + e.what());
    }
    detail::check_version(j, 0);
    if (!j.contains("lexicon") || !j["lexicon"].is_object()) throw FormatError("lexicon: missing \"lexicon\" map");
    PosLexicon lex;
    for (const auto& [tok, tag] : j["lexicon"].items()) {
        const auto pos = tag.is_string() ? parse_pos(tag.get<std::string>()) : std::nullopt;
        if (!pos) throw FormatError("lexicon: bad tag for " + tok);
        lex.set(tok, *pos);
    }
    return lex;
}

/// Conventional file names inside a corpus directory.
struct CorpusPaths {
    std::filesystem::path captions, scenes, lexicon;

    static CorpusPaths in(const std::filesystem::path& dir) {
        return {dir / "captions.jsonl", dir / "scenes.jsonl", dir / "lexicon.json"};
    }
};

inline void save_corpus(const CorpusPaths& paths, const CorpusManifest& m, const PosLexicon& lex,
                        const Provenance& prov) {
    write_captions(paths.captions, m.captions, prov);
    write_scenes(paths.scenes, m.scenes, prov);
    save_lexicon(paths.lexicon, lex, prov);
}

}  // namespace captionsmiths
