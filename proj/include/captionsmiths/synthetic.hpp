#pragma once

// Deterministic scene/caption generator. Each caption is realized from a
// sampled scene and an independently sampled style:
//   - a target length drawn from one of three bands (3-7, 8-20, 21-48),
//   - a descriptive probability p in [0.1, 0.9] that picks content sentences
//     over filler sentences and inserts adjectives,
//   - a fine-name probability q in [0, 1] that names entities by their
//     specific term instead of the general one.
// Sentences are appended until the target length is reached; the last one is
// cut to land on the target exactly.

#include <array>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "captionsmiths/corpus.hpp"
#include "captionsmiths/error.hpp"
#include "captionsmiths/rng.hpp"

namespace captionsmiths::synthetic {

struct EntityKind {
    std::string_view coarse;
    std::string_view fine;
};

inline constexpr std::array<EntityKind, 40> kEntityKinds{{
    {"dog", "retriever"},    {"dog", "poodle"},      {"dog", "terrier"},   {"dog", "beagle"},
    {"cat", "tabby"},        {"cat", "siamese"},     {"cat", "persian"},   {"bird", "sparrow"},
    {"bird", "parrot"},      {"bird", "pigeon"},     {"bird", "robin"},    {"car", "sedan"},
    {"car", "convertible"},  {"car", "hatchback"},   {"horse", "stallion"}, {"horse", "pony"},
    {"horse", "mare"},       {"boat", "sailboat"},   {"boat", "kayak"},    {"boat", "canoe"},
    {"flower", "tulip"},     {"flower", "rose"},     {"flower", "daisy"},  {"tree", "oak"},
    {"tree", "pine"},        {"tree", "maple"},      {"person", "surfer"}, {"person", "chef"},
    {"person", "cyclist"},   {"person", "skier"},    {"truck", "pickup"},  {"truck", "firetruck"},
    {"fish", "salmon"},      {"fish", "trout"},      {"food", "pizza"},    {"food", "sandwich"},
    {"food", "burger"},      {"bike", "tandem"},     {"bike", "bmx"},      {"bear", "grizzly"},
}};

inline constexpr std::array<std::string_view, 38> kAttributes{
    "red",    "blue",    "green",  "yellow", "white",  "black",   "brown",   "gray",
    "orange", "pink",    "purple", "small",  "large",  "tiny",    "huge",    "tall",
    "old",    "young",   "fluffy", "shiny",  "wet",    "dry",     "striped", "spotted",
    "wooden", "metal",   "bright", "dark",   "happy",  "sleepy",  "fast",    "slow",
    "curly",  "muddy",   "clean",  "dirty",  "golden", "silver",
};

inline constexpr std::array<std::string_view, 10> kPlaceAdjectives{
    "sunny", "busy", "quiet", "grassy", "sandy", "snowy", "crowded", "empty", "rainy", "foggy",
};

inline constexpr std::array<std::string_view, 20> kPlaces{
    "park", "beach", "street", "kitchen", "field",  "garden", "lake", "road",  "forest",   "yard",
    "river", "market", "room", "hill",    "city",   "farm",   "table", "bench", "sidewalk", "shore",
};

inline constexpr std::array<std::string_view, 10> kObjects{
    "ball", "frisbee", "stick", "bag", "hat", "rope", "basket", "fence", "bowl", "umbrella",
};

inline constexpr std::array<std::string_view, 16> kIntransitiveVerbs{
    "runs", "sits", "stands", "walks", "plays", "rests", "jumps", "waits",
    "swims", "moves", "sleeps", "lies", "stays", "turns", "hides", "climbs",
};

inline constexpr std::array<std::string_view, 8> kTransitiveVerbs{
    "holds", "carries", "chases", "watches", "touches", "finds", "pulls", "follows",
};

inline constexpr std::array<std::string_view, 14> kPrepositions{
    "in", "on", "at", "near", "by", "under", "behind", "beside", "across", "along", "over", "inside",
    "with", "of",
};

inline constexpr std::array<std::string_view, 7> kExcludedNouns{
    "image", "side", "background", "picture", "top", "bottom", "photo",
};

/// Every word the generator can emit, with its tag.
inline PosLexicon lexicon() {
    PosLexicon lex;
    for (const auto& k : kEntityKinds) {
        lex.set(Token(k.coarse), Pos::Noun);
        lex.set(Token(k.fine), Pos::Noun);
    }
    for (auto w : kAttributes) lex.set(Token(w), Pos::Adj);
    for (auto w : kPlaceAdjectives) lex.set(Token(w), Pos::Adj);
    for (auto w : kPlaces) lex.set(Token(w), Pos::Noun);
    for (auto w : kObjects) lex.set(Token(w), Pos::Noun);
    for (auto w : kExcludedNouns) lex.set(Token(w), Pos::Noun);
    for (auto w : kIntransitiveVerbs) lex.set(Token(w), Pos::Verb);
    for (auto w : kTransitiveVerbs) lex.set(Token(w), Pos::Verb);
    for (auto w : {"is", "are", "can", "see", "looks", "seems", "be", "shows"}) lex.set(w, Pos::Verb);
    for (auto w : kPrepositions) lex.set(Token(w), Pos::Prep);
    for (auto w : {"to", "like"}) lex.set(w, Pos::Prep);
    for (auto w : {"a", "an", "the", "this", "one", "some"}) lex.set(w, Pos::Det);
    for (auto w : {"i", "we", "you", "it", "there", "what", "they"}) lex.set(w, Pos::Pron);
    return lex;
}

struct Style {
    std::size_t target_length;
    double descriptive_p;
    double fine_p;
};

namespace detail {

inline constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kLengthBands{{{3, 7}, {8, 20}, {21, 48}}};

inline Style sample_style(Rng& rng) {
    const auto& band = kLengthBands[rng.below(kLengthBands.size())];
    Style s;
    s.target_length = static_cast<std::size_t>(
        rng.between(static_cast<std::int64_t>(band.first), static_cast<std::int64_t>(band.second)));
    s.descriptive_p = rng.uniform(0.1, 0.9);
    s.fine_p = rng.uniform();
    return s;
}

inline Scene sample_scene(Rng& rng, std::string id) {
    Scene scene{std::move(id), {}};
    const auto n_entities = static_cast<std::size_t>(rng.between(1, 4));
    std::vector<std::size_t> kinds(kEntityKinds.size());
    for (std::size_t i = 0; i < kinds.size(); ++i) kinds[i] = i;
    rng.shuffle(std::span<std::size_t>(kinds));
    for (std::size_t e = 0; e < n_entities; ++e) {
        const auto& kind = kEntityKinds[kinds[e]];
        Entity ent{Token(kind.coarse), Token(kind.fine), {}};
        std::vector<std::size_t> attrs(kAttributes.size());
        for (std::size_t i = 0; i < attrs.size(); ++i) attrs[i] = i;
        rng.shuffle(std::span<std::size_t>(attrs));
        const auto n_attrs = static_cast<std::size_t>(rng.between(0, 3));
        for (std::size_t a = 0; a < n_attrs; ++a) ent.attributes.emplace_back(kAttributes[attrs[a]]);
        scene.entities.push_back(std::move(ent));
    }
    return scene;
}

class CaptionWriter {
public:
    CaptionWriter(Rng& rng, const Scene& scene, const Style& style)
        : rng_(rng), scene_(scene), style_(style) {}

    std::vector<std::vector<Token>> sentences() {
        std::vector<std::vector<Token>> out;
        std::size_t total = 0;
        while (total < style_.target_length) {
            auto s = rng_.bernoulli(style_.descriptive_p) ? content_sentence() : filler_sentence();
            const std::size_t room = style_.target_length - total;
            if (s.size() > room) s.resize(room);
            total += s.size();
            out.push_back(std::move(s));
        }
        return out;
    }

private:
    template <std::size_t N>
    Token pick(const std::array<std::string_view, N>& words) {
        return Token(words[rng_.below(N)]);
    }

    Token det() { return rng_.bernoulli(0.5) ? "a" : "the"; }

    void entity_phrase(std::vector<Token>& out) {
        const Entity& e = scene_.entities[next_entity_++ % scene_.entities.size()];
        std::vector<Token> attrs = e.attributes;
        for (int slot = 0; slot < 2 && !attrs.empty(); ++slot) {
            if (!rng_.bernoulli(style_.descriptive_p)) continue;
            const auto i = rng_.below(attrs.size());
            out.push_back(attrs[i]);
            attrs.erase(attrs.begin() + static_cast<std::ptrdiff_t>(i));
        }
        out.push_back(rng_.bernoulli(style_.fine_p) ? e.fine_name : e.coarse_name);
    }

    void place_phrase(std::vector<Token>& out) {
        if (rng_.bernoulli(style_.descriptive_p)) out.push_back(pick(kPlaceAdjectives));
        out.push_back(pick(kPlaces));
    }

    void object_phrase(std::vector<Token>& out) {
        if (rng_.bernoulli(style_.descriptive_p)) out.push_back(pick(kAttributes));
        out.push_back(pick(kObjects));
    }

    std::vector<Token> content_sentence() {
        std::vector<Token> s;
        switch (rng_.below(4)) {
            case 0:  // the dog runs on a sunny beach
                s.push_back(det());
                entity_phrase(s);
                s.push_back(pick(kIntransitiveVerbs));
                s.push_back(pick(kPrepositions));
                s.push_back(det());
                place_phrase(s);
                break;
            case 1:  // a dog chases the red ball
                s.push_back(det());
                entity_phrase(s);
                s.push_back(pick(kTransitiveVerbs));
                s.push_back(det());
                object_phrase(s);
                break;
            case 2:  // dog in a park
                entity_phrase(s);
                s.push_back(pick(kPrepositions));
                s.push_back(det());
                place_phrase(s);
                break;
            default:  // the dog sleeps
                s.push_back(det());
                entity_phrase(s);
                s.push_back(pick(kIntransitiveVerbs));
                break;
        }
        return s;
    }

    std::vector<Token> filler_sentence() {
        std::vector<Token> s;
        const auto words = [&](std::initializer_list<const char*> ws) {
            for (const char* w : ws) s.emplace_back(w);
        };
        switch (rng_.below(7)) {
            case 0:
                words({"i", "can", "see", det().c_str()});
                entity_phrase(s);
                break;
            case 1:
                words({"there", "is", det().c_str()});
                entity_phrase(s);
                break;
            case 2:
                words({"we", "can", "see", "it"});
                break;
            case 3:
                words({"this", "is", "what", "it", "looks", "like"});
                break;
            case 4:
                words({"in", "the", "background", "there", "is", det().c_str()});
                entity_phrase(s);
                break;
            case 5:
                words({"it", "is", "in", "the", "picture"});
                break;
            default:
                words({"you", "can", "see", "it", "at", "the", rng_.bernoulli(0.5) ? "top" : "bottom", "of",
                       "the", rng_.bernoulli(0.5) ? "image" : "photo"});
                break;
        }
        return s;
    }

    Rng& rng_;
    const Scene& scene_;
    const Style& style_;
    std::size_t next_entity_ = 0;
};

inline std::string render(const std::vector<std::vector<Token>>& sentences) {
    std::string text;
    for (const auto& s : sentences) {
        if (s.empty()) continue;
        if (!text.empty()) text += ' ';
        std::string sentence = join_tokens(s);
        sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
        text += sentence;
        text += '.';
    }
    return text;
}

inline std::string numbered(char prefix, std::size_t i, int width) {
    std::ostringstream os;
    os << prefix << std::setw(width) << std::setfill('0') << i;
    return os.str();
}

}  // namespace detail

/// Number of scenes backing a corpus of n captions; each scene carries about
/// four captions in different styles.
inline std::size_t scene_count(std::size_t n) { return std::max<std::size_t>(1, (n + 3) / 4); }

/// Pure function of (seed, n).
inline CorpusManifest generate_corpus(std::uint64_t seed, std::size_t n) {
    if (n < 1) throw ArgumentError("generate_corpus: n must be >= 1");
    CorpusManifest m;
    m.generator_seed = seed;

    Rng scene_rng(seed, 1);
    const std::size_t n_scenes = scene_count(n);
    std::vector<std::string> scene_ids;
    for (std::size_t i = 0; i < n_scenes; ++i) {
        auto id = detail::numbered('s', i, 5);
        m.scenes.emplace(id, detail::sample_scene(scene_rng, id));
        scene_ids.push_back(std::move(id));
    }

    Rng caption_rng(seed, 2);
    m.captions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& scene_id = scene_ids[i % n_scenes];
        const Style style = detail::sample_style(caption_rng);
        detail::CaptionWriter writer(caption_rng, m.scenes.at(scene_id), style);
        auto text = detail::render(writer.sentences());
        m.captions.push_back(Caption::from_text(detail::numbered('c', i, 6), scene_id, std::move(text)));
    }
    return m;
}

}  // namespace captionsmiths::synthetic
