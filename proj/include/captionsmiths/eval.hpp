#pragma once

// Control experiments on a trained model: property sweeps, length mismatch,
// unique-word ratio, fine-grained-name recall, and the continuous vs discrete
// encoder comparison.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "captionsmiths/conditioner.hpp"
#include "captionsmiths/corpus.hpp"
#include "captionsmiths/hash.hpp"
#include "captionsmiths/model.hpp"
#include "captionsmiths/numeric.hpp"
#include "captionsmiths/provenance.hpp"
#include "captionsmiths/train.hpp"

namespace captionsmiths {

/// Mean |generated - target| token count over (generated, target) pairs.
inline double length_mismatch(std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    if (pairs.empty()) throw ArgumentError("length_mismatch: no pairs");
    double total = 0.0;
    for (const auto& [gen, target] : pairs) {
        total += std::abs(static_cast<double>(gen) - static_cast<double>(target));
    }
    return total / static_cast<double>(pairs.size());
}

inline double length_mismatch(std::span<const Caption> generated, std::span<const std::size_t> targets) {
    if (generated.size() != targets.size()) throw ArgumentError("length_mismatch: size mismatch");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < generated.size(); ++i) pairs.emplace_back(generated[i].size(), targets[i]);
    return length_mismatch(pairs);
}

/// |distinct tokens| / |tokens| over the concatenation of all captions.
inline double unique_word_ratio(std::span<const Caption> captions) {
    std::set<Token> distinct;
    std::size_t total = 0;
    for (const auto& c : captions) {
        distinct.insert(c.tokens.begin(), c.tokens.end());
        total += c.tokens.size();
    }
    if (total == 0) throw ArgumentError("unique_word_ratio: no tokens");
    return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

/// True when the caption contains one of the scene's fine names.
inline bool names_fine_entity(const Caption& caption, const Scene& scene) {
    for (const auto& e : scene.entities) {
        if (std::find(caption.tokens.begin(), caption.tokens.end(), e.fine_name) != caption.tokens.end()) return true;
    }
    return false;
}

/// Fraction of scenes whose caption names at least one fine-grained entity.
inline double fine_grained_recall(const std::map<std::string, Caption>& generated,
                                  const std::map<std::string, Scene>& scenes) {
    if (generated.empty()) throw ArgumentError("fine_grained_recall: no captions");
    std::size_t hits = 0;
    for (const auto& [scene_id, caption] : generated) {
        const auto it = scenes.find(scene_id);
        if (it == scenes.end()) throw ArgumentError("fine_grained_recall: unknown scene " + scene_id);
        if (names_fine_entity(caption, it->second)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(generated.size());
}

/// Harmonic mean of bag-of-tokens precision and recall against a reference.
/// A lexical-overlap proxy, not a standard captioning metric.
inline double token_f1(std::span<const Token> generated, std::span<const Token> reference) {
    if (generated.empty() || reference.empty()) return 0.0;
    std::map<Token, int> ref_counts;
    for (const auto& w : reference) ++ref_counts[w];
    std::size_t overlap = 0;
    for (const auto& w : generated) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(generated.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

/// Stable 90/10 split: a caption is held out when the FNV-1a hash of its id
/// ends in decimal digit 0.
inline bool is_held_out(std::string_view caption_id) { return fnv1a64(caption_id) % 10 == 0; }

struct SweepSpec {
    Property swept = Property::Length;
    std::vector<double> values;          // strictly ascending, in [0, 1]
    std::array<double, 3> fixed{0.5, 0.5, 0.5};  // the swept slot is ignored
    std::vector<Scene> scenes;
    std::size_t repeats = 1;
    Decode decode;  // greedy unless sampling is requested

    void validate() const {
        if (values.empty()) throw ArgumentError("sweep: no values");
        for (std::size_t i = 0; i < values.size(); ++i) {
            check_unit_interval(values[i]);
            if (i && !(values[i] > values[i - 1])) throw ArgumentError("sweep: values must be strictly ascending");
        }
        for (const double f : fixed) check_unit_interval(f);
        if (scenes.empty()) throw ArgumentError("sweep: no scenes");
        if (repeats == 0) throw ArgumentError("sweep: repeats must be positive");
    }
};

struct SweepRow {
    double value = 0.0;
    std::size_t samples = 0;
    std::size_t empty = 0;                // generations that stopped immediately
    double mean_length = 0.0;
    double std_length = 0.0;
    double mean_descriptiveness = 0.0;    // raw noun+adjective ratio, non-empty captions
    double mean_uniqueness = 0.0;         // raw mean inverse frequency, non-empty captions
    double unique_word_ratio = 0.0;
    double fine_grained_recall = 0.0;
};

struct SweepResult {
    Property swept = Property::Length;
    std::vector<SweepRow> rows;

    std::vector<double> column(double SweepRow::*field) const {
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r.*field);
        return out;
    }

    std::vector<double> values() const { return column(&SweepRow::value); }
};

/// Generates one caption per (value, scene, repeat) with the swept scalar
/// replaced and measures the realized properties with the same stats the
/// model was trained on.
template <class S>
SweepResult run_sweep(const SweepSpec& spec, const Model<S>& model, const CorpusStats& stats,
                      const PosLexicon& lexicon, std::size_t jobs = 1) {
    spec.validate();
    const std::size_t per_value = spec.scenes.size() * spec.repeats;
    const std::size_t total = spec.values.size() * per_value;
    std::vector<Caption> generated(total);
    parallel_for(total, jobs, [&](std::size_t i) {
        const std::size_t vi = i / per_value;
        const std::size_t si = (i % per_value) / spec.repeats;
        const std::size_t rep = i % spec.repeats;
        GenerationRequest req;
        req.scene = spec.scenes[si];
        req.cond = spec.fixed;
        req.cond[static_cast<std::size_t>(spec.swept)] = spec.values[vi];
        req.decode = spec.decode;
        req.decode.seed = spec.decode.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)) ^ rep;
        generated[i] = model.generate(req);
    });

    SweepResult result{spec.swept, {}};
    for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
        SweepRow row;
        row.value = spec.values[vi];
        row.samples = per_value;
        const std::span<const Caption> batch(generated.data() + vi * per_value, per_value);
        std::vector<double> lengths, desc, uniq;
        std::size_t hits = 0;
        for (std::size_t j = 0; j < batch.size(); ++j) {
            const Caption& c = batch[j];
            lengths.push_back(static_cast<double>(c.size()));
            if (c.tokens.empty()) {
                ++row.empty;
            } else {
                desc.push_back(assess_descriptiveness(c, lexicon, stats.excluded));
                uniq.push_back(assess_uniqueness(c, stats));
            }
            if (names_fine_entity(c, spec.scenes[j / spec.repeats])) ++hits;
        }
        row.mean_length = mean(lengths);
        row.std_length = stddev(lengths);
        row.mean_descriptiveness = desc.empty() ? 0.0 : mean(desc);
        row.mean_uniqueness = uniq.empty() ? 0.0 : mean(uniq);
        row.unique_word_ratio = row.empty == batch.size() ? 0.0 : unique_word_ratio(batch);
        row.fine_grained_recall = static_cast<double>(hits) / static_cast<double>(per_value);
        result.rows.push_back(row);
    }
    return result;
}

/// values[i] = lo + i * (hi - lo) / (n - 1).
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {lo};
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

/// First `n` scenes in id order.
inline std::vector<Scene> first_scenes(const CorpusManifest& corpus, std::size_t n) {
    std::vector<Scene> out;
    for (const auto& [id, s] : corpus.scenes) {
        if (out.size() == n) break;
        out.push_back(s);
    }
    return out;
}

/// Empirical quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) throw ArgumentError("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile: q outside [0, 1]");
    std::sort(x.begin(), x.end());
    const double pos = q * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Per-property normalized condition values of a corpus, in L, D, U order.
inline std::array<std::vector<double>, 3> corpus_norms(std::span<const Caption> captions, const CorpusStats& stats,
                                                       const PosLexicon& lexicon) {
    std::array<std::vector<double>, 3> out;
    for (const auto& c : captions) {
        const auto n = condition(c, stats, lexicon).norms();
        for (std::size_t p = 0; p < 3; ++p) out[p].push_back(n[p]);
    }
    return out;
}

/// Sweep over the central [q, 1 - q] range of the corpus's own condition
/// values for `swept`, holding the other two at their corpus medians.
/// Min-max normalization stretches the decorrelated properties by their
/// outliers, so fixed grids such as [0.1, 0.9] fall mostly outside the
/// training support for D and U.
inline SweepSpec corpus_sweep(Property swept, const std::array<std::vector<double>, 3>& norms,
                              std::vector<Scene> scenes, std::size_t n_values = 9, double q = 0.05) {
    SweepSpec spec;
    spec.swept = swept;
    const auto p = static_cast<std::size_t>(swept);
    spec.values = linspace(quantile(norms[p], q), quantile(norms[p], 1.0 - q), n_values);
    for (std::size_t i = 0; i < 3; ++i) spec.fixed[i] = quantile(norms[i], 0.5);
    spec.scenes = std::move(scenes);
    return spec;
}

/// Population std of raw length and raw uniqueness over a corpus; the scale
/// against which disentanglement drift is judged.
struct CorpusSpread {
    double length_std = 0.0;
    double uniqueness_std = 0.0;
};

inline CorpusSpread corpus_spread(std::span<const Caption> captions, const CorpusStats& stats) {
    std::vector<double> l, u;
    for (const auto& c : captions) {
        l.push_back(static_cast<double>(c.size()));
        u.push_back(assess_uniqueness(c, stats));
    }
    return {stddev(l), stddev(u)};
}

/// max - min of a column.
inline double spread_of(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return *hi - *lo;
}

/// Mean |generated - requested| when asking for explicit token counts,
/// converted to norm_L through the stats, with D and U held at `fixed`.
template <class S>
double requested_length_mismatch(const Model<S>& model, std::span<const Scene> scenes, const CorpusStats& stats,
                                 std::span<const std::size_t> lengths, std::array<double, 3> fixed,
                                 std::size_t jobs = 1) {
    if (scenes.empty() || lengths.empty()) throw ArgumentError("requested_length_mismatch: nothing to generate");
    std::vector<std::pair<std::size_t, std::size_t>> pairs(scenes.size() * lengths.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t i) {
        const std::size_t target = lengths[i / scenes.size()];
        GenerationRequest req;
        req.scene = scenes[i % scenes.size()];
        req.cond = fixed;
        req.cond[0] = stats.length.normalize(static_cast<double>(target));
        pairs[i] = {model.generate(req).size(), target};
    });
    return length_mismatch(pairs);
}

struct Thresholds {
    double length_spearman = 0.9;
    double descriptiveness_spearman = 0.7;
    double fine_recall_spearman = 0.7;
    double max_drift = 0.25;  // in corpus standard deviations
    double max_requested_mismatch = 3.0;
};

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline Check make_check(std::string name, bool pass, double value, std::string_view op, double bound) {
    std::ostringstream os;
    os << std::setprecision(6) << value << ' ' << op << ' ' << bound;
    return {std::move(name), pass, os.str()};
}

}  // namespace detail

/// Pass/fail of a sweep against the thresholds that apply to its property.
inline std::vector<Check> check_sweep(const SweepResult& r, const CorpusSpread& spread, const Thresholds& t) {
    const auto v = r.values();
    std::vector<Check> out;
    if (v.size() < 2) return out;
    switch (r.swept) {
        case Property::Length: {
            const double rho = spearman(v, r.column(&SweepRow::mean_length));
            out.push_back(detail::make_check("length spearman", rho >= t.length_spearman, rho, ">=",
                                             t.length_spearman));
            break;
        }
        case Property::Descriptiveness: {
            const double rho = spearman(v, r.column(&SweepRow::mean_descriptiveness));
            out.push_back(detail::make_check("descriptiveness spearman", rho >= t.descriptiveness_spearman, rho, ">=",
                                             t.descriptiveness_spearman));
            const double drift = spread_of(r.column(&SweepRow::mean_uniqueness)) / spread.uniqueness_std;
            out.push_back(detail::make_check("uniqueness drift / std", drift < t.max_drift, drift, "<", t.max_drift));
            break;
        }
        case Property::Uniqueness: {
            const double rho = spearman(v, r.column(&SweepRow::fine_grained_recall));
            out.push_back(detail::make_check("fine recall spearman", rho >= t.fine_recall_spearman, rho, ">=",
                                             t.fine_recall_spearman));
            const double top = r.rows.back().unique_word_ratio, bottom = r.rows.front().unique_word_ratio;
            out.push_back(detail::make_check("unique-word ratio top vs bottom", top > bottom, top, ">", bottom));
            const double drift = spread_of(r.column(&SweepRow::mean_length)) / spread.length_std;
            out.push_back(detail::make_check("length drift / std", drift < t.max_drift, drift, "<", t.max_drift));
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Continuous vs discrete comparison.

struct CompareOptions {
    std::vector<std::size_t> k_list{5, 20, 100};
    TrainOptions train;
    bool decorrelate = true;
    std::set<Token> excluded = default_excluded_nouns();
    std::size_t max_eval = 0;  // 0 evaluates every held-out caption
    std::function<void(const std::string& arm)> on_arm;
};

struct ComparisonRow {
    std::string arm;
    ConditioningMode mode = ConditioningMode::Continuous;
    std::size_t k = 0;
    std::size_t condition_params_per_property = 0;
    std::size_t total_params = 0;
    double final_train_loss = 0.0;
    double length_mismatch = 0.0;
    double token_f1 = 0.0;
    std::size_t evaluated = 0;
};

struct SplitCorpus {
    CorpusManifest train;
    std::vector<Caption> held_out;
};

inline SplitCorpus split_corpus(const CorpusManifest& corpus) {
    SplitCorpus s;
    s.train.scenes = corpus.scenes;
    s.train.generator_seed = corpus.generator_seed;
    for (const auto& c : corpus.captions) {
        if (is_held_out(c.id)) s.held_out.push_back(c);
        else s.train.captions.push_back(c);
    }
    if (s.train.captions.empty() || s.held_out.empty()) throw ArgumentError("split leaves an empty side");
    return s;
}

/// Length mismatch and token F1 of `model` on held-out captions, each
/// generated from its own scene under its own ground-truth condition.
template <class S>
std::pair<double, double> evaluate_target_aware(const Model<S>& model, std::span<const Caption> held_out,
                                                const CorpusManifest& corpus, const CorpusStats& stats,
                                                const PosLexicon& lexicon, std::size_t jobs) {
    std::vector<Caption> generated(held_out.size());
    parallel_for(held_out.size(), jobs, [&](std::size_t i) {
        GenerationRequest req;
        req.scene = corpus.scene_of(held_out[i]);
        req.cond = condition(held_out[i], stats, lexicon).norms();
        generated[i] = model.generate(req);
    });
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double f1 = 0.0;
    for (std::size_t i = 0; i < held_out.size(); ++i) {
        pairs.emplace_back(generated[i].size(), held_out[i].size());
        f1 += token_f1(generated[i].tokens, held_out[i].tokens);
    }
    return {length_mismatch(pairs), f1 / static_cast<double>(held_out.size())};
}

/// Trains one continuous arm and one discrete arm per k on the 90% split,
/// all sharing seed, data and architecture, and scores each on the held-out
/// split.
inline std::vector<ComparisonRow> compare_encoders(const CorpusManifest& corpus, const PosLexicon& lexicon,
                                                   const ModelConfig& base, const CompareOptions& opts) {
    const SplitCorpus split = split_corpus(corpus);
    const CorpusStats stats = fit_stats(split.train, lexicon, opts.excluded, opts.decorrelate);
    std::span<const Caption> eval_set(split.held_out);
    if (opts.max_eval && eval_set.size() > opts.max_eval) eval_set = eval_set.first(opts.max_eval);
    const ModelConfig shared = config_for_corpus(corpus, base);

    std::vector<std::pair<ConditioningMode, std::size_t>> arms{{ConditioningMode::Continuous, 0}};
    for (const auto k : opts.k_list) arms.emplace_back(ConditioningMode::Discrete, k);

    std::vector<ComparisonRow> rows;
    for (const auto& [mode, k] : arms) {
        ModelConfig cfg = shared;
        cfg.mode = mode;
        if (mode == ConditioningMode::Discrete) cfg.k = k;
        ComparisonRow row;
        row.arm = mode == ConditioningMode::Continuous ? "continuous" : "discrete-" + std::to_string(k);
        row.mode = mode;
        row.k = k;
        if (opts.on_arm) opts.on_arm(row.arm);
        Model<float> model(cfg);
        const auto examples = prepare_examples(model, std::span<const Caption>(split.train.captions), split.train,
                                               stats, lexicon);
        auto trained = train(std::move(model), std::span<const Model<float>::Example>(examples), opts.train);
        row.condition_params_per_property = trained.model.condition_parameter_count();
        row.total_params = trained.model.parameter_count();
        row.final_train_loss = trained.epoch_loss.empty() ? 0.0 : trained.epoch_loss.back();
        const auto [mismatch, f1] =
            evaluate_target_aware(trained.model, eval_set, corpus, stats, lexicon, opts.train.jobs);
        row.length_mismatch = mismatch;
        row.token_f1 = f1;
        row.evaluated = eval_set.size();
        rows.push_back(row);
    }
    return rows;
}

/// Continuous beats discrete k = min(k_list), and discrete mismatch does not
/// grow with k.
inline std::vector<Check> check_comparison(std::span<const ComparisonRow> rows) {
    std::vector<Check> out;
    const ComparisonRow* cont = nullptr;
    std::vector<const ComparisonRow*> discrete;
    for (const auto& r : rows) {
        if (r.mode == ConditioningMode::Continuous) cont = &r;
        else if (r.mode == ConditioningMode::Discrete) discrete.push_back(&r);
    }
    std::sort(discrete.begin(), discrete.end(), [](auto* a, auto* b) { return a->k < b->k; });
    if (cont && !discrete.empty()) {
        out.push_back(detail::make_check("continuous < " + discrete.front()->arm,
                                         cont->length_mismatch < discrete.front()->length_mismatch,
                                         cont->length_mismatch, "<", discrete.front()->length_mismatch));
    }
    for (std::size_t i = 1; i < discrete.size(); ++i) {
        out.push_back(detail::make_check(discrete[i]->arm + " <= " + discrete[i - 1]->arm,
                                         discrete[i]->length_mismatch <= discrete[i - 1]->length_mismatch,
                                         discrete[i]->length_mismatch, "<=", discrete[i - 1]->length_mismatch));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV reports. Line 1 is the provenance comment, line 2 documents the column
// order, line 3 is the header row.

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace detail

inline void write_sweep_csv(const std::filesystem::path& path, const SweepResult& r, const Provenance& prov) {
    auto out = detail::open_out(path);
    out << prov.comment_line() << " swept=" << to_string(r.swept) << '\n';
    out << "# columns: value,samples,empty,mean_length,std_length,mean_descriptiveness,mean_uniqueness,"
           "unique_word_ratio,fine_grained_recall\n";
    out << "value,samples,empty,mean_length,std_length,mean_descriptiveness,mean_uniqueness,unique_word_ratio,"
           "fine_grained_recall\n";
    for (const auto& row : r.rows) {
        out << detail::fmt(row.value) << ',' << row.samples << ',' << row.empty << ',' << detail::fmt(row.mean_length)
            << ',' << detail::fmt(row.std_length) << ',' << detail::fmt(row.mean_descriptiveness) << ','
            << detail::fmt(row.mean_uniqueness) << ',' << detail::fmt(row.unique_word_ratio) << ','
            << detail::fmt(row.fine_grained_recall) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_comparison_csv(const std::filesystem::path& path, std::span<const ComparisonRow> rows,
                                 const Provenance& prov) {
    auto out = detail::open_out(path);
    out << prov.comment_line() << '\n';
    out << "# columns: arm,k,condition_params_per_property,total_params,final_train_loss,length_mismatch,"
           "token_f1_proxy,evaluated\n";
    out << "arm,k,condition_params_per_property,total_params,final_train_loss,length_mismatch,token_f1_proxy,"
           "evaluated\n";
    for (const auto& r : rows) {
        out << r.arm << ',' << r.k << ',' << r.condition_params_per_property << ',' << r.total_params << ','
            << detail::fmt(r.final_train_loss) << ',' << detail::fmt(r.length_mismatch) << ','
            << detail::fmt(r.token_f1) << ',' << r.evaluated << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace captionsmiths
