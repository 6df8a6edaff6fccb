// Runs every acceptance criterion and prints one PASS/FAIL line per
// criterion. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "captionsmiths/cli.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace cs;
using testing_support::caption;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::size_t worker_count() { return std::max(1u, std::min(4u, std::thread::hardware_concurrency())); }

// 1. Property formulas on hand-worked examples.
Verdict formulas() {
    const auto lex = testing_support::example_lexicon();
    const std::set<Token> none;
    const double d1 = assess_descriptiveness(caption("a", "dog in a park"), lex, none);
    const double d2 = assess_descriptiveness(caption("b", "i can see a dog"), lex, none);
    const std::vector<Caption> toy{caption("c0", "a dog"), caption("c1", "a dog"), caption("c2", "a cat")};
    const auto stats = fit_stats(toy, lex, none, false);
    const double u1 = assess_uniqueness(caption("x", "a cat"), stats);
    const double u2 = assess_uniqueness(caption("y", "a dog"), stats);
    const double err = std::max({std::abs(d1 - 0.5), std::abs(d2 - 0.2), std::abs(u1 - 2.0 / 3.0),
                                 std::abs(u2 - 5.0 / 12.0)});
    return {err <= 1e-12, "D=" + fmt(d1) + "," + fmt(d2) + " U=" + fmt(u1) + "," + fmt(u2) + " max err " + fmt(err)};
}

// 2. Decorrelated properties are orthogonal on the fit set.
Verdict decorrelation(const CorpusManifest& corpus, const PosLexicon& lex, const CorpusStats& stats) {
    std::vector<double> l, d, u;
    for (const auto& c : corpus.captions) {
        const auto pv = condition(c, stats, lex);
        l.push_back(static_cast<double>(pv.raw_L));
        d.push_back(pv.decorr_D.value());
        u.push_back(pv.decorr_U.value());
    }
    const double a = std::abs(pearson(u, l)), b = std::abs(pearson(d, l)), c = std::abs(pearson(d, u));
    const double worst = std::max({a, b, c});
    return {worst < 1e-10, "|r(U',L)|=" + fmt(a) + " |r(D',L)|=" + fmt(b) + " |r(D',U')|=" + fmt(c)};
}

// 3. Encoder identities.
Verdict encoding() {
    const std::size_t d = 64;
    Rng rng(3, 0);
    const auto pair = make_endpoint_pair<double>(Property::Length, d, 0.02, rng);
    const bool ends = (encode_continuous(0.0, pair).array() == pair.e0.array()).all() &&
                      (encode_continuous(1.0, pair).array() == pair.e1.array()).all();
    const auto aff = as_affine(pair);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double s = unit(gen);
        worst = std::max(worst, (aff(s) - encode_continuous(s, pair)).cwiseAbs().maxCoeff());
    }
    bool counts = parameter_count(pair) == 2 * d;
    for (std::size_t k : {5u, 20u, 100u}) {
        counts = counts && parameter_count(make_codebook<double>(Property::Length, k, d, 0.02, rng)) == k * d;
    }
    return {ends && worst <= 1e-12 && counts, std::string("endpoints ") + (ends ? "exact" : "inexact") +
                                                  ", affine max err " + fmt(worst) + ", counts 2d/kd " +
                                                  (counts ? "ok" : "wrong")};
}

// 4. Analytic vs central-difference gradients for every tensor group.
Verdict gradients() {
    double worst = 0.0;
    std::string worst_name;
    for (const auto mode : {ConditioningMode::Continuous, ConditioningMode::Discrete}) {
        auto s = testing_support::tiny_setup(40, mode, 8);
        Model<double> m(s.config);
        Rng rng(21, 0);
        for (auto& t : m.tensors()) {
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.3 * rng.normal();
        }
        std::vector<Model<double>::Example> batch;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto& c = s.corpus.captions[i];
            batch.push_back(m.make_example(c, s.corpus.scene_of(c), {0.15 + 0.5 * i, 0.7 - 0.4 * i, 0.45}));
        }
        auto analytic = m.zero_grads();
        m.batch_loss_and_grad(batch, analytic);
        const auto numeric = testing_support::numeric_grads(m, batch, 1e-5);
        for (std::size_t t = 0; t < analytic.size(); ++t) {
            const double rel = testing_support::relative_error(analytic[t], numeric[t]);
            if (rel >= worst) {
                worst = rel;
                worst_name = std::string(to_string(mode)) + ":" + m.tensor_names()[t];
            }
        }
    }
    return {worst < 1e-4, "max relative error " + fmt(worst) + " (" + worst_name + ")"};
}

struct SweepBundle {
    SweepResult length, desc, uniq;
    double requested_mismatch = 0.0;
    CorpusSpread spread;
};

SweepBundle run_sweeps(const CorpusManifest& corpus, const PosLexicon& lex, const CorpusStats& stats,
                       std::size_t epochs) {
    ModelConfig base;
    base.seed = 7;
    Model<float> model(config_for_corpus(corpus, base));
    const auto data = prepare_examples(model, std::span<const Caption>(corpus.captions), corpus, stats, lex);
    TrainOptions opts;
    opts.epochs = epochs;
    opts.seed = 7;
    opts.jobs = worker_count();
    const auto trained = train(std::move(model), std::span<const Model<float>::Example>(data), opts);
    std::cerr << "sweep model: " << epochs << " epochs, loss " << trained.epoch_loss.front() << " -> "
              << trained.epoch_loss.back() << '\n';

    const auto norms = corpus_norms(std::span<const Caption>(corpus.captions), stats, lex);
    const auto scenes = first_scenes(corpus, 50);
    SweepBundle b;
    b.spread = corpus_spread(std::span<const Caption>(corpus.captions), stats);
    auto spec = corpus_sweep(Property::Length, norms, scenes);
    spec.values = linspace(0.1, 0.9, 9);
    b.length = run_sweep(spec, trained.model, stats, lex, opts.jobs);
    const std::vector<std::size_t> lengths{5, 10, 15, 20, 25, 30};
    b.requested_mismatch = requested_length_mismatch(trained.model, std::span<const Scene>(scenes), stats,
                                                     std::span<const std::size_t>(lengths), spec.fixed, opts.jobs);
    b.desc = run_sweep(corpus_sweep(Property::Descriptiveness, norms, scenes), trained.model, stats, lex, opts.jobs);
    b.uniq = run_sweep(corpus_sweep(Property::Uniqueness, norms, scenes), trained.model, stats, lex, opts.jobs);
    return b;
}

// 5. Length control.
Verdict length_control(const SweepBundle& b) {
    const double rho = spearman(b.length.values(), b.length.column(&SweepRow::mean_length));
    const auto means = b.length.column(&SweepRow::mean_length);
    return {rho >= 0.9 && b.requested_mismatch <= 3.0,
            "spearman " + fmt(rho) + " (means " + fmt(means.front()) + ".." + fmt(means.back()) +
                "), requested-length mismatch " + fmt(b.requested_mismatch) + " tokens"};
}

// 6. Continuous vs discrete on the held-out split.
Verdict comparison(const CorpusManifest& corpus, const PosLexicon& lex) {
    ModelConfig base;
    base.seed = 7;
    CompareOptions opts;
    opts.train.seed = 7;
    opts.train.jobs = worker_count();
    const auto rows = compare_encoders(corpus, lex, base, opts);
    const auto checks = check_comparison(rows);
    std::string detail;
    for (const auto& r : rows) detail += r.arm + "=" + fmt(r.length_mismatch) + " ";
    const bool pass = !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    return {pass, detail + "(mismatch, tokens)"};
}

// 7. Descriptiveness monotonicity.
Verdict descriptiveness(const SweepBundle& b) {
    const double rho = spearman(b.desc.values(), b.desc.column(&SweepRow::mean_descriptiveness));
    const auto d = b.desc.column(&SweepRow::mean_descriptiveness);
    return {rho >= 0.7, "spearman " + fmt(rho) + " (realized D " + fmt(d.front()) + ".." + fmt(d.back()) + ")"};
}

// 8. Uniqueness control.
Verdict uniqueness(const SweepBundle& b) {
    const double rho = spearman(b.uniq.values(), b.uniq.column(&SweepRow::fine_grained_recall));
    const double lo = b.uniq.rows.front().unique_word_ratio, hi = b.uniq.rows.back().unique_word_ratio;
    return {rho >= 0.7 && hi > lo,
            "fine recall spearman " + fmt(rho) + ", unique-word ratio " + fmt(lo) + " -> " + fmt(hi)};
}

// 9. Off-axis drift.
Verdict disentanglement(const SweepBundle& b) {
    const double len_drift = spread_of(b.uniq.column(&SweepRow::mean_length)) / b.spread.length_std;
    const double uniq_drift = spread_of(b.desc.column(&SweepRow::mean_uniqueness)) / b.spread.uniqueness_std;
    return {len_drift < 0.25 && uniq_drift < 0.25,
            "length drift under U sweep " + fmt(len_drift) + " std, uniqueness drift under D sweep " +
                fmt(uniq_drift) + " std"};
}

// 10. Serial reruns of the pipeline are byte-identical.
Verdict determinism() {
    testing_support::TempDir dir;
    const auto pipeline = [&](const std::string& sub) {
        const auto d = (dir / sub).string();
        const std::vector<std::vector<std::string>> steps{
            {"--seed", "7", "--jobs", "1", "gen-corpus", "--n", "200", "--out", d + "/data"},
            {"--seed", "7", "--jobs", "1", "fit", "--corpus", d + "/data", "--out", d + "/stats.json"},
            {"--seed", "7", "--jobs", "1", "train", "--corpus", d + "/data", "--stats", d + "/stats.json", "--out",
             d + "/model.ckpt", "--epochs", "2", "--d", "32", "--ff", "64"},
        };
        for (auto args : steps) {
            args.insert(args.begin(), "captionsmiths");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            if (cli::run(static_cast<int>(argv.size()), argv.data(), out, err) != 0) {
                throw std::runtime_error("pipeline step failed: " + err.str());
            }
        }
    };
    pipeline("a");
    pipeline("b");
    std::string differing;
    for (const char* f : {"data/captions.jsonl", "data/scenes.jsonl", "data/lexicon.json", "stats.json", "model.ckpt",
                          "model.ckpt.loss.csv"}) {
        if (testing_support::slurp(dir / "a" / f) != testing_support::slurp(dir / "b" / f)) differing += f + std::string(" ");
    }
    return {differing.empty(), differing.empty() ? "corpus, stats, checkpoint and loss log identical"
                                                 : "differs: " + differing};
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t sweep_epochs = 60;
    if (argc > 1) sweep_epochs = static_cast<std::size_t>(std::stoul(argv[1]));

    bool all = true;
    const auto report = [&](int id, const char* name, const std::function<Verdict()>& fn) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && v.pass;
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), secs);
        std::fflush(stdout);
    };

    const auto corpus = synthetic::generate_corpus(7, 2000);
    const auto lex = synthetic::lexicon();
    const auto stats = fit_stats(corpus, lex, default_excluded_nouns(), true);

    report(1, "property formulas", formulas);
    report(2, "decorrelation", [&] { return decorrelation(corpus, lex, stats); });
    report(3, "encoding identities", encoding);
    report(4, "gradient check", gradients);

    std::optional<SweepBundle> sweeps;
    std::string sweep_error;
    try {
        sweeps = run_sweeps(corpus, lex, stats, sweep_epochs);
    } catch (const std::exception& e) {
        sweep_error = e.what();
    }
    const auto with_sweeps = [&](Verdict (*fn)(const SweepBundle&)) {
        return [&, fn]() -> Verdict {
            if (!sweeps) return {false, "sweep model failed: " + sweep_error};
            return fn(*sweeps);
        };
    };
    report(5, "length control", with_sweeps(length_control));
    report(6, "continuous beats discrete", [&] { return comparison(corpus, lex); });
    report(7, "descriptiveness control", with_sweeps(descriptiveness));
    report(8, "uniqueness control", with_sweeps(uniqueness));
    report(9, "disentanglement", with_sweeps(disentanglement));
    report(10, "determinism", determinism);

    std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
    return all ? 0 : 1;
}
