#pragma once

// Command-line front end: gen-corpus, fit, train, generate, sweep, compare.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <array>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "captionsmiths/conditioner.hpp"
#include "captionsmiths/corpus.hpp"
#include "captionsmiths/error.hpp"
#include "captionsmiths/eval.hpp"
#include "captionsmiths/model.hpp"
#include "captionsmiths/numeric.hpp"
#include "captionsmiths/provenance.hpp"
#include "captionsmiths/synthetic.hpp"
#include "captionsmiths/train.hpp"

namespace captionsmiths::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
public:
    using Error::Error;
};

struct GlobalFlags {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct ModelFlags {
    std::size_t d = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t ff = 128;
    std::size_t max_len = 64;
    std::string mode = "continuous";
    std::size_t k = 5;

    ModelConfig base(std::uint64_t seed) const {
        ModelConfig c;
        c.d = d;
        c.n_layers = layers;
        c.n_heads = heads;
        c.ff_width = ff;
        c.max_len = max_len;
        c.mode = parse_conditioning_mode(mode);
        c.k = k;
        c.seed = seed;
        return c;
    }

    nlohmann::json to_json() const {
        return {{"d", d}, {"layers", layers}, {"heads", heads}, {"ff", ff},
                {"max_len", max_len}, {"mode", mode}, {"k", k}};
    }
};

struct TrainFlags {
    std::size_t epochs = 30;
    double lr = 3e-4;
    std::size_t batch = 32;

    TrainOptions options(const GlobalFlags& g) const {
        TrainOptions o;
        o.epochs = epochs;
        o.learning_rate = lr;
        o.batch_size = batch;
        o.jobs = g.jobs;
        o.seed = g.seed;
        return o;
    }

    nlohmann::json to_json() const { return {{"epochs", epochs}, {"lr", lr}, {"batch", batch}}; }
};

struct GenCorpusFlags {
    std::size_t n = 0;
    std::string out;
};

struct FitFlags {
    std::string corpus;
    std::string out;
    bool decorrelate = true;
    std::vector<std::string> exclude;
};

struct TrainCmdFlags {
    std::string corpus;
    std::string stats;
    std::string out;
    std::string loss_log;
    ModelFlags model;
    TrainFlags train;
};

struct GenerateFlags {
    std::string checkpoint;
    std::string stats;
    std::string corpus;
    std::string scene;
    std::optional<std::string> like;
    std::optional<double> length;
    std::optional<std::size_t> length_tokens;
    std::optional<double> descriptiveness;
    std::optional<double> uniqueness;
    double temperature = 0.0;
    std::size_t max_tokens = 0;
};

struct SweepFlags {
    std::string checkpoint;
    std::string stats;
    std::string corpus;
    std::string property = "all";
    std::vector<double> values;
    std::size_t scenes = 50;
    std::size_t points = 9;
    std::string out;
    bool strict = false;
    Thresholds thresholds;
};

struct CompareFlags {
    std::string corpus;
    std::string out;
    std::vector<std::size_t> k_list{5, 20, 100};
    std::size_t max_eval = 0;
    bool decorrelate = true;
    bool strict = false;
    ModelFlags model;
    TrainFlags train;
};

namespace detail {

inline void add_model_flags(CLI::App* app, ModelFlags& m) {
    app->add_option("--d", m.d, "Embedding width")->capture_default_str();
    app->add_option("--layers", m.layers, "Decoder blocks")->capture_default_str();
    app->add_option("--heads", m.heads, "Attention heads")->capture_default_str();
    app->add_option("--ff", m.ff, "Feed-forward width")->capture_default_str();
    app->add_option("--max-len", m.max_len, "Maximum caption tokens")->capture_default_str();
    app->add_option("--mode", m.mode, "Conditioning mode")
        ->check(CLI::IsMember({"continuous", "discrete", "none"}))
        ->capture_default_str();
    app->add_option("--k", m.k, "Bins per property in discrete mode")->check(CLI::Range(2, 100000))->capture_default_str();
}

inline void add_train_flags(CLI::App* app, TrainFlags& t) {
    app->add_option("--epochs", t.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lr", t.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--batch", t.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
}

struct CorpusBundle {
    CorpusManifest manifest;
    PosLexicon lexicon;
};

/// Input paths are checked here rather than by the parser, so a config file
/// may carry sections for commands that are not being run.
inline void require_dir(const std::string& flag, const std::string& path) {
    if (!std::filesystem::is_directory(path)) throw UsageError(flag + ": directory does not exist: " + path);
}

inline void require_file(const std::string& flag, const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) throw UsageError(flag + ": file does not exist: " + path);
}

inline CorpusBundle load_bundle(const std::string& dir) {
    require_dir("--corpus", dir);
    const auto paths = CorpusPaths::in(dir);
    return {load_corpus(paths.captions, paths.scenes), load_lexicon(paths.lexicon)};
}

/// Creates `dir` (and parents) if absent.
inline void ensure_dir(const std::filesystem::path& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::string canonical(std::string_view command, const nlohmann::json& body) {
    return std::string(command) + ' ' + body.dump();
}

inline void print_checks(std::ostream& out, const std::vector<Check>& checks) {
    for (const auto& c : checks) out << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
}

inline bool all_pass(const std::vector<Check>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

inline void print_matrix(std::ostream& out, const std::array<std::string, 3>& names,
                         const std::array<std::vector<double>, 3>& cols) {
    out << "        " << std::setw(10) << names[0] << std::setw(10) << names[1] << std::setw(10) << names[2] << '\n';
    for (std::size_t i = 0; i < 3; ++i) {
        out << "  " << std::setw(6) << names[i];
        for (std::size_t j = 0; j < 3; ++j) out << std::setw(10) << std::setprecision(3) << pearson(cols[i], cols[j]);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

inline int cmd_gen_corpus(const GlobalFlags& g, const GenCorpusFlags& f, std::ostream& out) {
    const auto manifest = synthetic::generate_corpus(g.seed, f.n);
    const auto lexicon = synthetic::lexicon();
    const auto prov = Provenance::of(g.seed, canonical("gen-corpus", {{"n", f.n}}));
    ensure_dir(f.out);
    save_corpus(CorpusPaths::in(f.out), manifest, lexicon, prov);

    std::set<Token> vocab;
    std::map<std::size_t, std::size_t> histogram;
    for (const auto& c : manifest.captions) {
        vocab.insert(c.tokens.begin(), c.tokens.end());
        ++histogram[c.size() / 5];
    }
    out << "captions " << manifest.captions.size() << ", scenes " << manifest.scenes.size() << ", vocabulary "
        << vocab.size() << '\n';
    out << "length histogram:\n";
    for (const auto& [bucket, count] : histogram) {
        out << "  " << std::setw(2) << bucket * 5 << "-" << std::setw(2) << bucket * 5 + 4 << "  " << std::setw(5)
            << count << '\n';
    }
    return kExitOk;
}

inline int cmd_fit(const GlobalFlags& g, const FitFlags& f, std::ostream& out) {
    const auto bundle = load_bundle(f.corpus);
    std::set<Token> excluded = f.exclude.empty() ? default_excluded_nouns()
                                                 : std::set<Token>(f.exclude.begin(), f.exclude.end());
    const auto stats = fit_stats(bundle.manifest, bundle.lexicon, excluded, f.decorrelate);
    const auto prov = Provenance::of(
        g.seed, canonical("fit", {{"decorrelate", f.decorrelate}, {"exclude", std::vector<Token>(excluded.begin(), excluded.end())}}));
    ensure_dir(std::filesystem::path(f.out).parent_path());
    save_stats(stats, f.out, prov);

    out << "captions " << bundle.manifest.captions.size() << ", decorrelation "
        << (f.decorrelate ? "on" : "off") << '\n';
    out << std::setprecision(6);
    out << "  L range [" << stats.length.lo << ", " << stats.length.hi << "]\n";
    out << "  D range [" << stats.descriptiveness.lo << ", " << stats.descriptiveness.hi << "]\n";
    out << "  U range [" << stats.uniqueness.lo << ", " << stats.uniqueness.hi << "]\n";
    if (f.decorrelate) {
        std::array<std::vector<double>, 3> raw, post;
        for (const auto& c : bundle.manifest.captions) {
            const auto pv = condition(c, stats, bundle.lexicon);
            raw[0].push_back(static_cast<double>(pv.raw_L));
            raw[1].push_back(pv.raw_D);
            raw[2].push_back(pv.raw_U);
            post[0].push_back(static_cast<double>(pv.raw_L));
            post[1].push_back(captionsmiths::detail::d_value(pv));
            post[2].push_back(captionsmiths::detail::u_value(pv));
        }
        out << "correlation before decorrelation:\n";
        print_matrix(out, {"L", "D", "U"}, raw);
        out << "correlation after decorrelation:\n";
        print_matrix(out, {"L", "D'", "U'"}, post);
    }
    return kExitOk;
}

inline void write_loss_log(const std::filesystem::path& path, const std::vector<double>& losses,
                           const Provenance& prov) {
    auto os = captionsmiths::detail::open_out(path);
    os << prov.comment_line() << '\n' << "epoch,mean_loss\n";
    os << std::setprecision(10);
    for (std::size_t e = 0; e < losses.size(); ++e) os << e << ',' << losses[e] << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

inline int cmd_train(const GlobalFlags& g, const TrainCmdFlags& f, std::ostream& out) {
    require_file("--stats", f.stats);
    const auto bundle = load_bundle(f.corpus);
    const auto stats = load_stats(f.stats);
    const ModelConfig cfg = config_for_corpus(bundle.manifest, f.model.base(g.seed));
    Model<float> model(cfg);
    const auto examples = prepare_examples(model, std::span<const Caption>(bundle.manifest.captions),
                                           bundle.manifest, stats, bundle.lexicon);
    TrainOptions opts = f.train.options(g);
    opts.on_epoch = [&out](std::size_t epoch, double loss) {
        out << "epoch " << epoch << " loss " << std::setprecision(6) << loss << '\n' << std::flush;
    };
    const auto prov = Provenance::of(g.seed, canonical("train", {{"model", f.model.to_json()}, {"train", f.train.to_json()}}));
    auto result = train(std::move(model), std::span<const Model<float>::Example>(examples), opts);
    ensure_dir(std::filesystem::path(f.out).parent_path());
    save_model(result.model, f.out, prov);
    write_loss_log(f.loss_log.empty() ? f.out + ".loss.csv" : f.loss_log, result.epoch_loss, prov);
    out << "parameters " << result.model.parameter_count() << ", checkpoint " << f.out << '\n';
    return kExitOk;
}

inline int cmd_generate(const GlobalFlags& g, const GenerateFlags& f, std::ostream& out) {
    const bool explicit_form = f.length || f.length_tokens || f.descriptiveness || f.uniqueness;
    if (f.like && explicit_form) throw UsageError("give either --like or explicit conditions, not both");
    if (!f.like && !explicit_form) throw UsageError("give --like or at least one of --length, --length-tokens, --descriptiveness, --uniqueness");
    if (f.length && f.length_tokens) throw UsageError("--length and --length-tokens are mutually exclusive");

    require_file("--checkpoint", f.checkpoint);
    require_file("--stats", f.stats);
    const auto bundle = load_bundle(f.corpus);
    const auto stats = load_stats(f.stats);
    const auto model = load_model<float>(f.checkpoint);
    const auto scene = bundle.manifest.scenes.find(f.scene);
    if (scene == bundle.manifest.scenes.end()) throw UsageError("unknown scene id: " + f.scene);

    std::array<double, 3> cond{0.5, 0.5, 0.5};
    if (f.like) {
        if (tokenize(*f.like).empty()) throw UsageError("--like text has no tokens");
        cond = condition_from_reference(*f.like, stats, bundle.lexicon);
    } else {
        if (f.length) cond[0] = *f.length;
        if (f.length_tokens) cond[0] = stats.length.normalize(static_cast<double>(*f.length_tokens));
        if (f.descriptiveness) cond[1] = *f.descriptiveness;
        if (f.uniqueness) cond[2] = *f.uniqueness;
    }
    GenerationRequest req;
    req.scene = scene->second;
    req.cond = cond;
    req.decode = f.temperature > 0.0 ? Decode::sample(f.temperature, g.seed) : Decode::greedy();
    req.max_tokens = f.max_tokens;
    const Caption caption = model.generate(req);
    out << caption.text << '\n';
    out << std::setprecision(6) << "condition L=" << cond[0] << " D=" << cond[1] << " U=" << cond[2] << '\n';
    return kExitOk;
}

inline std::vector<Property> parse_properties(const std::string& s) {
    if (s == "all") return {kProperties.begin(), kProperties.end()};
    if (s == "L") return {Property::Length};
    if (s == "D") return {Property::Descriptiveness};
    if (s == "U") return {Property::Uniqueness};
    throw UsageError("--property must be L, D, U or all");
}

inline int cmd_sweep(const GlobalFlags& g, const SweepFlags& f, std::ostream& out) {
    const auto properties = parse_properties(f.property);
    if (!f.values.empty() && properties.size() != 1) throw UsageError("--values needs a single --property");
    require_file("--checkpoint", f.checkpoint);
    require_file("--stats", f.stats);
    const auto bundle = load_bundle(f.corpus);
    const auto stats = load_stats(f.stats);
    const auto model = load_model<float>(f.checkpoint);
    const auto norms = corpus_norms(bundle.manifest.captions, stats, bundle.lexicon);
    const auto spread = corpus_spread(bundle.manifest.captions, stats);
    const auto scenes = first_scenes(bundle.manifest, f.scenes);
    ensure_dir(f.out);

    std::vector<Check> checks;
    for (const Property p : properties) {
        SweepSpec spec = corpus_sweep(p, norms, scenes, f.points);
        if (p == Property::Length) spec.values = linspace(0.1, 0.9, f.points);
        if (!f.values.empty()) spec.values = f.values;
        try {
            spec.validate();
        } catch (const ArgumentError& e) {
            throw UsageError(e.what());
        }
        const nlohmann::json body{{"property", to_string(p)}, {"values", spec.values}, {"fixed", spec.fixed},
                                  {"scenes", f.scenes}};
        const auto prov = Provenance::of(g.seed, canonical("sweep", body));
        const auto result = run_sweep(spec, model, stats, bundle.lexicon, g.jobs);
        const auto path = std::filesystem::path(f.out) / ("sweep_" + std::string(to_string(p)) + ".csv");
        write_sweep_csv(path, result, prov);

        out << "sweep " << to_string(p) << " -> " << path.string() << '\n';
        out << "  value     length   D         U          uwr      fine\n";
        for (const auto& r : result.rows) {
            out << "  " << std::fixed << std::setprecision(3) << r.value << "  " << std::setw(7) << r.mean_length
                << "  " << r.mean_descriptiveness << "  " << std::setprecision(6) << r.mean_uniqueness << "  "
                << std::setprecision(3) << r.unique_word_ratio << "  " << r.fine_grained_recall << '\n'
                << std::defaultfloat;
        }
        auto c = check_sweep(result, spread, f.thresholds);
        if (p == Property::Length) {
            const std::vector<std::size_t> lengths{5, 10, 15, 20, 25, 30};
            const double mm = requested_length_mismatch(model, std::span<const Scene>(scenes), stats,
                                                        std::span<const std::size_t>(lengths), spec.fixed, g.jobs);
            c.push_back(captionsmiths::detail::make_check("requested length mismatch", mm <= f.thresholds.max_requested_mismatch,
                                                          mm, "<=", f.thresholds.max_requested_mismatch));
        }
        print_checks(out, c);
        checks.insert(checks.end(), c.begin(), c.end());
    }
    return f.strict && !all_pass(checks) ? kExitRuntime : kExitOk;
}

inline int cmd_compare(const GlobalFlags& g, const CompareFlags& f, std::ostream& out) {
    const auto bundle = load_bundle(f.corpus);
    CompareOptions opts;
    opts.k_list = f.k_list;
    opts.train = f.train.options(g);
    opts.decorrelate = f.decorrelate;
    opts.max_eval = f.max_eval;
    opts.on_arm = [&out](const std::string& arm) { out << "training " << arm << '\n' << std::flush; };
    const auto rows = compare_encoders(bundle.manifest, bundle.lexicon, f.model.base(g.seed), opts);

    const nlohmann::json body{{"model", f.model.to_json()}, {"train", f.train.to_json()}, {"k_list", f.k_list},
                              {"max_eval", f.max_eval}, {"decorrelate", f.decorrelate}};
    ensure_dir(f.out);
    const auto path = std::filesystem::path(f.out) / "comparison.csv";
    write_comparison_csv(path, rows, Provenance::of(g.seed, canonical("compare", body)));

    out << "arm            params/prop  mismatch  token-F1 (proxy)\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(15) << r.arm << std::right << std::setw(11) << r.condition_params_per_property
            << std::fixed << std::setprecision(3) << std::setw(10) << r.length_mismatch << std::setw(10) << r.token_f1
            << std::defaultfloat << '\n';
    }
    out << "-> " << path.string() << '\n';
    const auto checks = check_comparison(rows);
    print_checks(out, checks);
    return f.strict && !all_pass(checks) ? kExitRuntime : kExitOk;
}

}  // namespace detail

/// Parses argv and runs one subcommand. Output goes to `out`, diagnostics to
/// `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Controllable caption generation with continuous property conditioning.", "captionsmiths"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.set_config("--config", "", "Config file (TOML or INI); command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--seed", g.seed, "Root seed recorded in every output header")->capture_default_str();
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    GenCorpusFlags gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic scene-caption corpus");
    gen_cmd->add_option("--n", gen.n, "Number of captions")->required()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    FitFlags fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit corpus statistics for conditioning");
    fit_cmd->add_option("--corpus", fit.corpus, "Corpus directory")->required();
    fit_cmd->add_option("--out", fit.out, "Stats file")->required();
    fit_cmd->add_flag("--decorrelate,!--no-decorrelate", fit.decorrelate, "Regress L out of U, then L and U out of D")
        ->capture_default_str();
    fit_cmd->add_option("--exclude", fit.exclude, "Nouns excluded from descriptiveness");

    TrainCmdFlags tr;
    auto* train_cmd = app.add_subcommand("train", "Train a conditioned caption model");
    train_cmd->add_option("--corpus", tr.corpus, "Corpus directory")->required();
    train_cmd->add_option("--stats", tr.stats, "Stats file")->required();
    train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
    train_cmd->add_option("--loss-log", tr.loss_log, "Per-epoch loss CSV (default <out>.loss.csv)");
    detail::add_model_flags(train_cmd, tr.model);
    detail::add_train_flags(train_cmd, tr.train);

    GenerateFlags ge;
    auto* gen_caption = app.add_subcommand("generate", "Generate one caption for a scene");
    gen_caption->add_option("--checkpoint", ge.checkpoint, "Checkpoint path")->required();
    gen_caption->add_option("--stats", ge.stats, "Stats file")->required();
    gen_caption->add_option("--corpus", ge.corpus, "Corpus directory")->required();
    gen_caption->add_option("--scene", ge.scene, "Scene id")->required();
    gen_caption->add_option("--like", ge.like, "Reference sentence whose properties to copy");
    gen_caption->add_option("--length", ge.length, "Normalized length")->check(CLI::Range(0.0, 1.0));
    gen_caption->add_option("--length-tokens", ge.length_tokens, "Length in tokens");
    gen_caption->add_option("--descriptiveness", ge.descriptiveness, "Normalized descriptiveness")
        ->check(CLI::Range(0.0, 1.0));
    gen_caption->add_option("--uniqueness", ge.uniqueness, "Normalized uniqueness")->check(CLI::Range(0.0, 1.0));
    gen_caption->add_option("--temperature", ge.temperature, "Sampling temperature; 0 decodes greedily")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    gen_caption->add_option("--max-tokens", ge.max_tokens, "Token cap (0 uses the model's max_len)");

    SweepFlags sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Vary one condition with the others fixed");
    sweep_cmd->add_option("--checkpoint", sw.checkpoint, "Checkpoint path")->required();
    sweep_cmd->add_option("--stats", sw.stats, "Stats file")->required();
    sweep_cmd->add_option("--corpus", sw.corpus, "Corpus directory")->required();
    sweep_cmd->add_option("--property", sw.property, "L, D, U or all")
        ->check(CLI::IsMember({"L", "D", "U", "all"}))
        ->capture_default_str();
    sweep_cmd->add_option("--values", sw.values, "Explicit ascending values in [0, 1]");
    sweep_cmd->add_option("--scenes", sw.scenes, "Evaluation scenes")->check(CLI::PositiveNumber)->capture_default_str();
    sweep_cmd->add_option("--points", sw.points, "Values per sweep")->check(CLI::Range(2, 1000))->capture_default_str();
    sweep_cmd->add_option("--out", sw.out, "Output directory")->required();
    sweep_cmd->add_flag("--strict", sw.strict, "Exit 1 when a threshold fails");
    sweep_cmd->add_option("--min-length-spearman", sw.thresholds.length_spearman)->capture_default_str();
    sweep_cmd->add_option("--min-descriptiveness-spearman", sw.thresholds.descriptiveness_spearman)
        ->capture_default_str();
    sweep_cmd->add_option("--min-fine-recall-spearman", sw.thresholds.fine_recall_spearman)->capture_default_str();
    sweep_cmd->add_option("--max-drift", sw.thresholds.max_drift, "Largest off-axis drift in corpus stds")
        ->capture_default_str();
    sweep_cmd->add_option("--max-length-mismatch", sw.thresholds.max_requested_mismatch)->capture_default_str();

    CompareFlags cmp;
    auto* compare_cmd = app.add_subcommand("compare", "Continuous vs discrete conditioning on a held-out split");
    compare_cmd->add_option("--corpus", cmp.corpus, "Corpus directory")->required();
    compare_cmd->add_option("--out", cmp.out, "Output directory")->required();
    compare_cmd->add_option("--k-list", cmp.k_list, "Discrete bin counts")->check(CLI::Range(2, 100000));
    compare_cmd->add_option("--max-eval", cmp.max_eval, "Cap on held-out captions (0 = all)");
    compare_cmd->add_flag("--decorrelate,!--no-decorrelate", cmp.decorrelate)->capture_default_str();
    compare_cmd->add_flag("--strict", cmp.strict, "Exit 1 when the ordering check fails");
    detail::add_model_flags(compare_cmd, cmp.model);
    detail::add_train_flags(compare_cmd, cmp.train);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*gen_cmd) return detail::cmd_gen_corpus(g, gen, out);
        if (*fit_cmd) return detail::cmd_fit(g, fit, out);
        if (*train_cmd) return detail::cmd_train(g, tr, out);
        if (*gen_caption) return detail::cmd_generate(g, ge, out);
        if (*sweep_cmd) return detail::cmd_sweep(g, sw, out);
        if (*compare_cmd) return detail::cmd_compare(g, cmp, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const TrainingError& e) {
        err << "error: training failed, " << e.what() << '\n';
        return kExitRuntime;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace captionsmiths::cli
