#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <unistd.h>

#include "captionsmiths/captionsmiths.hpp"

namespace cs = captionsmiths;

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("captionsmiths-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// Lexicon of the worked examples: dog/park/cat nouns, in prep, a det.
inline cs::PosLexicon example_lexicon() {
    cs::PosLexicon lex;
    lex.set("dog", cs::Pos::Noun);
    lex.set("park", cs::Pos::Noun);
    lex.set("cat", cs::Pos::Noun);
    lex.set("in", cs::Pos::Prep);
    lex.set("a", cs::Pos::Det);
    lex.set("i", cs::Pos::Pron);
    lex.set("can", cs::Pos::Verb);
    lex.set("see", cs::Pos::Verb);
    return lex;
}

inline cs::Caption caption(const std::string& id, const std::string& text, const std::string& scene = "s0") {
    return cs::Caption::from_text(id, scene, text);
}

/// A small generated corpus and a model config sized for fast tests.
struct TinySetup {
    cs::CorpusManifest corpus;
    cs::PosLexicon lexicon;
    cs::CorpusStats stats;
    cs::ModelConfig config;
};

inline TinySetup tiny_setup(std::size_t n = 40, cs::ConditioningMode mode = cs::ConditioningMode::Continuous,
                            std::size_t d = 8) {
    TinySetup s;
    s.corpus = cs::synthetic::generate_corpus(11, n);
    s.lexicon = cs::synthetic::lexicon();
    s.stats = cs::fit_stats(s.corpus, s.lexicon, cs::default_excluded_nouns(), true);
    cs::ModelConfig base;
    base.d = d;
    base.n_layers = 2;
    base.n_heads = 2;
    base.ff_width = 2 * d;
    base.max_len = 50;
    base.mode = mode;
    base.k = 3;
    base.seed = 5;
    s.config = cs::config_for_corpus(s.corpus, base);
    return s;
}

}  // namespace testing_support
