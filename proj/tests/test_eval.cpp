#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace cs;
using testing_support::caption;
using testing_support::TempDir;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

SweepResult make_result(Property p, std::size_t n, const std::function<void(SweepRow&, std::size_t)>& fill) {
    SweepResult r{p, {}};
    for (std::size_t i = 0; i < n; ++i) {
        SweepRow row;
        row.value = 0.1 * static_cast<double>(i + 1);
        fill(row, i);
        r.rows.push_back(row);
    }
    return r;
}

}  // namespace

TEST(LengthMismatch, WorkedExamples) {
    const std::vector<std::pair<std::size_t, std::size_t>> equal{{5, 5}, {5, 5}};
    EXPECT_EQ(length_mismatch(equal), 0.0);
    const std::vector<std::pair<std::size_t, std::size_t>> over{{7, 5}};
    EXPECT_EQ(length_mismatch(over), 2.0);
    const std::vector<std::pair<std::size_t, std::size_t>> mixed{{3, 5}, {9, 5}, {5, 5}};
    EXPECT_DOUBLE_EQ(length_mismatch(mixed), 2.0);
    EXPECT_THROW(length_mismatch(std::vector<std::pair<std::size_t, std::size_t>>{}), ArgumentError);
}

TEST(LengthMismatch, FromCaptions) {
    const std::vector<Caption> gen{caption("a", "a dog"), caption("b", "a dog in a park")};
    const std::vector<std::size_t> targets{4, 4};
    EXPECT_DOUBLE_EQ(length_mismatch(gen, targets), 1.5);
    EXPECT_THROW(length_mismatch(gen, std::vector<std::size_t>{4}), ArgumentError);
}

TEST(UniqueWordRatio, WorkedExample) {
    const std::vector<Caption> c{caption("a", "a dog"), caption("b", "a cat")};
    EXPECT_DOUBLE_EQ(unique_word_ratio(c), 0.75);
}

TEST(UniqueWordRatio, DistinctIsOneAndRepeatsLowerIt) {
    std::vector<Caption> c{caption("a", "one two three"), caption("b", "four five")};
    EXPECT_EQ(unique_word_ratio(c), 1.0);
    double prev = 1.0;
    for (int i = 0; i < 4; ++i) {
        c.push_back(caption("r" + std::to_string(i), "one two"));
        const double now = unique_word_ratio(c);
        EXPECT_LT(now, prev);
        prev = now;
    }
    EXPECT_THROW(unique_word_ratio(std::vector<Caption>{caption("e", "")}), ArgumentError);
}

TEST(FineRecall, CountsScenesNamingAFineEntity) {
    const std::map<std::string, Scene> scenes{
        {"s1", Scene{"s1", {Entity{"dog", "retriever", {"brown"}}}}},
        {"s2", Scene{"s2", {Entity{"bird", "sparrow", {}}, Entity{"cat", "tabby", {}}}}},
    };
    std::map<std::string, Caption> gen{{"s1", caption("1", "a retriever in a park", "s1")},
                                       {"s2", caption("2", "a bird and a cat", "s2")}};
    EXPECT_DOUBLE_EQ(fine_grained_recall(gen, scenes), 0.5);
    gen["s2"] = caption("2", "a tabby cat", "s2");
    EXPECT_DOUBLE_EQ(fine_grained_recall(gen, scenes), 1.0);
    gen["s1"] = caption("1", "a dog", "s1");
    gen["s2"] = caption("2", "a cat", "s2");
    EXPECT_EQ(fine_grained_recall(gen, scenes), 0.0);
    gen["s9"] = caption("9", "a dog", "s9");
    EXPECT_THROW(fine_grained_recall(gen, scenes), ArgumentError);
    EXPECT_THROW(fine_grained_recall({}, scenes), ArgumentError);
}

TEST(TokenF1, BagOverlap) {
    const auto a = caption("a", "a dog in a park").tokens;
    EXPECT_DOUBLE_EQ(token_f1(a, a), 1.0);
    const auto b = caption("b", "a dog").tokens;
    // precision 2/2, recall 2/5.
    EXPECT_DOUBLE_EQ(token_f1(b, a), 2.0 * 1.0 * 0.4 / 1.4);
    EXPECT_DOUBLE_EQ(token_f1(a, b), token_f1(b, a));
    EXPECT_EQ(token_f1(caption("c", "cat").tokens, a), 0.0);
    EXPECT_EQ(token_f1({}, a), 0.0);
}

TEST(Spearman, Oracles) {
    const std::vector<double> x{1, 2, 3, 4, 5}, up{2, 4, 8, 16, 32}, down{5, 3, 2, 1, 0};
    EXPECT_DOUBLE_EQ(spearman(x, up), 1.0);
    EXPECT_DOUBLE_EQ(spearman(x, down), -1.0);
    // d = (0, 0, 1, -1, 0): 1 - 6 * 2 / (5 * 24).
    EXPECT_NEAR(spearman(x, std::vector<double>{1, 2, 4, 3, 5}), 0.9, 1e-15);
    EXPECT_NEAR(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}), 0.9486832980505138, 1e-15);
    EXPECT_EQ(spearman(x, std::vector<double>{1, 1, 1, 1, 1}), 0.0);
}

TEST(Quantile, LinearInterpolation) {
    const std::vector<double> x{4, 1, 3, 2};
    EXPECT_EQ(quantile(x, 0.0), 1.0);
    EXPECT_EQ(quantile(x, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile(x, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile(x, 0.25), 1.75);
    EXPECT_THROW(quantile({}, 0.5), ArgumentError);
    EXPECT_THROW(quantile(x, 1.5), ArgumentError);
}

TEST(Linspace, Endpoints) {
    const auto v = linspace(0.1, 0.9, 9);
    ASSERT_EQ(v.size(), 9u);
    EXPECT_EQ(v.front(), 0.1);
    EXPECT_DOUBLE_EQ(v.back(), 0.9);
    EXPECT_DOUBLE_EQ(v[4], 0.5);
    EXPECT_EQ(linspace(0.3, 0.7, 1), std::vector<double>{0.3});
}

TEST(Split, StableNinetyTen) {
    const auto corpus = synthetic::generate_corpus(7, 2000);
    const auto split = split_corpus(corpus);
    EXPECT_EQ(split.train.captions.size() + split.held_out.size(), corpus.captions.size());
    const double frac = static_cast<double>(split.held_out.size()) / static_cast<double>(corpus.captions.size());
    EXPECT_NEAR(frac, 0.1, 0.03);
    for (const auto& c : split.held_out) EXPECT_EQ(fnv1a64(c.id) % 10, 0u);
    EXPECT_EQ(split_corpus(corpus).held_out.size(), split.held_out.size());
}

TEST(SweepSpec, Validation) {
    auto s = testing_support::tiny_setup();
    SweepSpec spec;
    spec.scenes = first_scenes(s.corpus, 2);
    spec.values = {0.2, 0.4};
    EXPECT_NO_THROW(spec.validate());
    spec.values = {0.4, 0.2};
    EXPECT_THROW(spec.validate(), ArgumentError);
    spec.values = {0.2, 1.2};
    EXPECT_THROW(spec.validate(), ArgumentError);
    spec.values = {};
    EXPECT_THROW(spec.validate(), ArgumentError);
    spec.values = {0.5};
    spec.fixed[1] = -0.1;
    EXPECT_THROW(spec.validate(), ArgumentError);
    spec.fixed[1] = 0.5;
    spec.repeats = 0;
    EXPECT_THROW(spec.validate(), ArgumentError);
    spec.repeats = 1;
    spec.scenes.clear();
    EXPECT_THROW(spec.validate(), ArgumentError);
}

TEST(Sweep, RowsMatchIndependentGeneration) {
    auto s = testing_support::tiny_setup(40, ConditioningMode::Continuous, 16);
    Model<float> m(s.config);
    SweepSpec spec;
    spec.swept = Property::Descriptiveness;
    spec.values = {0.1, 0.6};
    spec.fixed = {0.3, 0.0, 0.7};
    spec.scenes = first_scenes(s.corpus, 3);
    const auto r1 = run_sweep(spec, m, s.stats, s.lexicon, 1);
    const auto r2 = run_sweep(spec, m, s.stats, s.lexicon, 3);
    ASSERT_EQ(r1.rows.size(), 2u);
    for (std::size_t v = 0; v < 2; ++v) {
        std::vector<double> lengths;
        for (const auto& scene : spec.scenes) {
            GenerationRequest req{scene, {0.3, spec.values[v], 0.7}};
            lengths.push_back(static_cast<double>(m.generate(req).size()));
        }
        EXPECT_EQ(r1.rows[v].samples, 3u);
        EXPECT_DOUBLE_EQ(r1.rows[v].mean_length, mean(lengths));
        EXPECT_DOUBLE_EQ(r1.rows[v].std_length, stddev(lengths));
        EXPECT_EQ(r1.rows[v].mean_length, r2.rows[v].mean_length);
        EXPECT_EQ(r1.rows[v].fine_grained_recall, r2.rows[v].fine_grained_recall);
    }
}

TEST(Sweep, SingleSceneStdIsZero) {
    auto s = testing_support::tiny_setup(40, ConditioningMode::Continuous, 16);
    Model<float> m(s.config);
    SweepSpec spec;
    spec.values = {0.5};
    spec.scenes = first_scenes(s.corpus, 1);
    const auto r = run_sweep(spec, m, s.stats, s.lexicon);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].std_length, 0.0);
    EXPECT_TRUE(check_sweep(r, {1.0, 1.0}, {}).empty());
}

TEST(CorpusSweep, CentralQuantilesWithMediansFixed) {
    auto s = testing_support::tiny_setup(200);
    const auto norms = corpus_norms(std::span<const Caption>(s.corpus.captions), s.stats, s.lexicon);
    const auto spec = corpus_sweep(Property::Uniqueness, norms, first_scenes(s.corpus, 4), 5, 0.05);
    ASSERT_EQ(spec.values.size(), 5u);
    EXPECT_DOUBLE_EQ(spec.values.front(), quantile(norms[2], 0.05));
    EXPECT_DOUBLE_EQ(spec.values.back(), quantile(norms[2], 0.95));
    for (std::size_t p = 0; p < 3; ++p) EXPECT_DOUBLE_EQ(spec.fixed[p], quantile(norms[p], 0.5));
    EXPECT_NO_THROW(spec.validate());
}

TEST(CheckSweep, LengthThreshold) {
    auto good = make_result(Property::Length, 5, [](SweepRow& r, std::size_t i) { r.mean_length = 5.0 * (i + 1); });
    auto checks = check_sweep(good, {1, 1}, {});
    ASSERT_EQ(checks.size(), 1u);
    EXPECT_TRUE(checks[0].pass);
    auto bad = make_result(Property::Length, 5, [](SweepRow& r, std::size_t i) { r.mean_length = i % 2 ? 1.0 : 9.0; });
    EXPECT_FALSE(check_sweep(bad, {1, 1}, {})[0].pass);
}

TEST(CheckSweep, DescriptivenessDrift) {
    auto r = make_result(Property::Descriptiveness, 4, [](SweepRow& row, std::size_t i) {
        row.mean_descriptiveness = 0.1 * i;
        row.mean_uniqueness = 0.05 * i;
    });
    // Drift 0.15 against std 1.0 passes, against std 0.5 it is 0.3 and fails.
    auto checks = check_sweep(r, {1.0, 1.0}, {});
    ASSERT_EQ(checks.size(), 2u);
    EXPECT_TRUE(checks[0].pass && checks[1].pass);
    EXPECT_FALSE(check_sweep(r, {1.0, 0.5}, {})[1].pass);
}

TEST(CheckSweep, UniquenessChecks) {
    auto r = make_result(Property::Uniqueness, 4, [](SweepRow& row, std::size_t i) {
        row.fine_grained_recall = 0.2 * i;
        row.unique_word_ratio = 0.1 + 0.01 * i;
        row.mean_length = 10.0 + 0.1 * i;
    });
    const auto checks = check_sweep(r, {2.0, 1.0}, {});
    ASSERT_EQ(checks.size(), 3u);
    for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.name << " " << c.detail;
    r.rows.back().unique_word_ratio = 0.05;
    EXPECT_FALSE(check_sweep(r, {2.0, 1.0}, {})[1].pass);
}

TEST(CheckComparison, OrderingRules) {
    auto row = [](ConditioningMode m, std::size_t k, double mm) {
        ComparisonRow r;
        r.mode = m;
        r.k = k;
        r.arm = m == ConditioningMode::Continuous ? "continuous" : "discrete-" + std::to_string(k);
        r.length_mismatch = mm;
        return r;
    };
    std::vector<ComparisonRow> rows{row(ConditioningMode::Continuous, 0, 0.5), row(ConditioningMode::Discrete, 20, 1.0),
                                    row(ConditioningMode::Discrete, 5, 3.0), row(ConditioningMode::Discrete, 100, 0.4)};
    auto checks = check_comparison(rows);
    ASSERT_EQ(checks.size(), 3u);
    for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.name;
    EXPECT_EQ(checks[0].name, "continuous < discrete-5");
    rows[1].length_mismatch = 3.5;
    checks = check_comparison(rows);
    EXPECT_FALSE(checks[1].pass);
    rows[0].length_mismatch = 3.0;
    EXPECT_FALSE(check_comparison(rows)[0].pass);
}

TEST(Reports, CsvHeaderLines) {
    TempDir dir;
    const auto prov = Provenance::of(7, "cfg");
    auto r = make_result(Property::Length, 2, [](SweepRow& row, std::size_t i) { row.mean_length = 3.0 + i; });
    write_sweep_csv(dir / "sweep.csv", r, prov);
    auto lines = lines_of(testing_support::slurp(dir / "sweep.csv"));
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0].rfind(prov.comment_line(), 0), 0u);
    EXPECT_NE(lines[0].find("seed=7"), std::string::npos);
    EXPECT_EQ(lines[1].rfind("# columns: value,", 0), 0u);
    EXPECT_EQ(lines[2].rfind("value,samples,empty,mean_length", 0), 0u);
    EXPECT_EQ(lines[3].rfind("0.1,0,0,3,", 0), 0u);

    ComparisonRow row;
    row.arm = "continuous";
    row.length_mismatch = 0.5;
    write_comparison_csv(dir / "cmp.csv", std::vector<ComparisonRow>{row}, prov);
    lines = lines_of(testing_support::slurp(dir / "cmp.csv"));
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], prov.comment_line());
    EXPECT_EQ(lines[2].rfind("arm,k,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("continuous,0,", 0), 0u);
}
