#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "dltml/eval.hpp"
#include "test_support.hpp"

using namespace dltml;

namespace {

// Predictions with a known, record-dependent error pattern.
std::vector<double> perturbed(std::span<const DatasetRecord> recs, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> p;
    for (const auto& r : recs) p.push_back(r.t_star * rng.uniform(0.8, 1.25));
    return p;
}

std::vector<double> targets_of(std::span<const DatasetRecord> recs) {
    std::vector<double> t;
    for (const auto& r : recs) t.push_back(r.t_star);
    return t;
}

}  // namespace

TEST(Metrics, PerfectPredictions) {
    const std::vector<double> t{10, 20, 30};
    const auto m = compute_metrics(t, t);
    EXPECT_EQ(*m.r2, 1.0);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_EQ(m.rmse, 0.0);
    EXPECT_EQ(m.mape, 0.0);
}

TEST(Metrics, PredictingTheMeanGivesZeroR2) {
    const std::vector<double> t{10, 20, 30, 60};
    const std::vector<double> p(4, 30.0);
    EXPECT_NEAR(*compute_metrics(p, t).r2, 0.0, 1e-15);
}

TEST(Metrics, HandExample) {
    const auto m = compute_metrics(std::vector<double>{110, 180}, std::vector<double>{100, 200});
    EXPECT_DOUBLE_EQ(m.mae, 15.0);
    EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(250.0));
    EXPECT_NEAR(m.rmse, 15.811, 1e-3);
    EXPECT_DOUBLE_EQ(m.mape, 10.0);
    EXPECT_EQ(m.count, 2u);
}

TEST(Metrics, Identities) {
    const auto recs = generate_dataset(500, 1);
    const auto p = perturbed(recs, 2);
    const auto m = compute_metrics(p, targets_of(recs));
    EXPECT_NEAR(m.rmse * m.rmse, m.mse, 1e-9 * m.mse);
    EXPECT_LE(m.mae, m.rmse);
    EXPECT_LT(*m.r2, 1.0);
}

TEST(Metrics, Errors) {
    EXPECT_THROW(compute_metrics(std::vector<double>{1, 2}, std::vector<double>{5, 5}), InvalidInput);
    EXPECT_THROW(compute_metrics(std::vector<double>{1}, std::vector<double>{1, 2}), InvalidInput);
    EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), InvalidInput);
}

TEST(Stratify, ByNHasOneBucketPerSize) {
    const auto recs = generate_dataset(3600, 3);
    const auto p = perturbed(recs, 4);
    const auto rep = stratify(recs, p, StrataScheme::ByN);
    ASSERT_EQ(rep.buckets.size(), 18u);
    EXPECT_EQ(rep.buckets.front().label, "3");
    EXPECT_EQ(rep.buckets.back().label, "20");
    for (const auto& b : rep.buckets) EXPECT_NEAR(static_cast<double>(b.count), 200.0, 60.0) << b.label;
}

TEST(Stratify, PartitionsAndRecombines) {
    const auto recs = generate_dataset(2000, 5);
    const auto p = perturbed(recs, 6);
    const auto global = compute_metrics(p, targets_of(recs));
    for (auto scheme : {StrataScheme::ByN, StrataScheme::ByLoad, StrataScheme::ByHeterogeneity, StrataScheme::All}) {
        const auto rep = stratify(recs, p, scheme);
        std::size_t total = 0;
        double weighted_mae = 0.0;
        for (const auto& b : rep.buckets) {
            total += b.count;
            if (b.metrics) weighted_mae += b.metrics->mae * static_cast<double>(b.count);
        }
        EXPECT_EQ(total, recs.size()) << to_string(scheme);
        EXPECT_NEAR(weighted_mae / total, global.mae, 1e-9 * global.mae) << to_string(scheme);
    }
    const auto all = stratify(recs, p, StrataScheme::All);
    ASSERT_EQ(all.buckets.size(), 1u);
    EXPECT_DOUBLE_EQ(all.buckets[0].metrics->mape, global.mape);
    EXPECT_DOUBLE_EQ(*all.buckets[0].metrics->r2, *global.r2);
}

TEST(Stratify, LoadBinEdges) {
    std::vector<DatasetRecord> recs;
    for (double load : {1.0, 4.999, 5.0, 10.0, 19.9, 20.0, 40.0, 100.0}) {
        auto c = testing_support::random_config(1, 0);
        c.load_gb = load;
        recs.push_back(make_record(c, kDefaultComputeIntensity));
    }
    const auto rep = stratify(recs, targets_of(recs), StrataScheme::ByLoad);
    ASSERT_EQ(rep.buckets.size(), 5u);
    EXPECT_EQ(rep.buckets[0].label, "[1,5)");
    EXPECT_EQ(rep.buckets[4].label, "[40,100]");
    const std::vector<std::size_t> counts{2, 1, 2, 1, 2};
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(rep.buckets[k].count, counts[k]);
}

TEST(Stratify, EmptyBucketHasNoMetrics) {
    SamplerRanges r;
    r.load_min = 50.0;
    const auto recs = generate_dataset(100, 7, r);
    const auto rep = stratify(recs, targets_of(recs), StrataScheme::ByLoad);
    EXPECT_EQ(rep.buckets[0].count, 0u);
    EXPECT_FALSE(rep.buckets[0].metrics.has_value());
    EXPECT_TRUE(rep.buckets[4].metrics.has_value());
}

TEST(Residuals, Perfect) {
    const std::vector<double> t{100, 300, 5000};
    const auto rep = residual_analysis(t, t);
    EXPECT_EQ(rep.mean_error, 0.0);
    EXPECT_EQ(rep.share_within_50s, 1.0);
    EXPECT_EQ(rep.share_within_100s, 1.0);
    EXPECT_EQ(rep.share_pct_within_10, 1.0);
}

TEST(Residuals, Windows) {
    const auto rep = residual_analysis(std::vector<double>{940, 1060}, std::vector<double>{1000, 1000});
    EXPECT_EQ(rep.share_within_50s, 0.0);
    EXPECT_EQ(rep.share_within_100s, 1.0);
    EXPECT_EQ(rep.mean_error, 0.0);
    EXPECT_EQ(rep.max_over_prediction, 60.0);
    EXPECT_EQ(rep.pairs[0].second, -60.0);  // error = prediction - truth
}

TEST(Residuals, WindowMonotone) {
    const auto recs = generate_dataset(1000, 8);
    const auto rep = residual_analysis(perturbed(recs, 9), targets_of(recs));
    EXPECT_LE(rep.share_within_50s, rep.share_within_100s);
    EXPECT_EQ(rep.dispersion.size(), 10u);
    std::size_t total = 0;
    for (const auto& d : rep.dispersion) total += d.count;
    EXPECT_EQ(total, recs.size());
}

TEST(Importance, ZeroModel) {
    const auto p = MlpParams::zeros(kDefaultTopology);
    const auto rows = std::vector<double>(16 * 5, 0.3);
    for (const auto& f : feature_importance(p, rows)) EXPECT_EQ(f.importance, 0.0);
}

TEST(Importance, MatchesFiniteDifferences) {
    const std::vector<std::size_t> topo{16, 8, 4, 1};
    const auto p = init_params(3, topo);
    Rng rng(4);
    std::vector<double> rows(16 * 20);
    for (double& v : rows) v = rng.uniform(-1.5, 1.5);
    const auto imp = feature_importance(p, rows);
    for (const auto& f : imp) {
        double fd = 0.0;
        for (std::size_t s = 0; s < 20; ++s) {
            std::vector<double> a(rows.begin() + s * 16, rows.begin() + (s + 1) * 16), b = a;
            a[f.index] += 1e-6;
            b[f.index] -= 1e-6;
            fd += std::abs((forward(p, a) - forward(p, b)) / 2e-6);
        }
        EXPECT_NEAR(f.importance, fd / 20.0, 1e-3) << f.feature;
    }
    for (std::size_t k = 1; k < imp.size(); ++k) EXPECT_GE(imp[k - 1].importance, imp[k].importance);
}

TEST(Importance, DuplicatedInputsAreSymmetric) {
    // Columns 0 and 1 carry the same value and identical outgoing weights.
    const std::vector<std::size_t> topo{16, 8, 4, 1};
    auto p = init_params(5, topo);
    for (std::size_t o = 0; o < 8; ++o) p.layers[0].w(o, 1) = p.layers[0].w(o, 0);
    Rng rng(6);
    std::vector<double> rows(16 * 10);
    for (double& v : rows) v = rng.uniform(-1.0, 1.0);
    for (std::size_t s = 0; s < 10; ++s) rows[s * 16 + 1] = rows[s * 16];
    double i0 = -1, i1 = -2;
    for (const auto& f : feature_importance(p, rows)) {
        if (f.index == 0) i0 = f.importance;
        if (f.index == 1) i1 = f.importance;
    }
    EXPECT_EQ(i0, i1);
}

TEST(Histogram, CountsSumToSamples) {
    Rng rng(7);
    std::vector<double> v(1234);
    for (double& x : v) x = rng.uniform(-5.0, 9.0);
    const auto h = histogram(v, 40);
    ASSERT_EQ(h.size(), 40u);
    std::size_t total = 0;
    for (const auto& b : h) total += b.count;
    EXPECT_EQ(total, v.size());
    EXPECT_EQ(histogram(std::vector<double>(5, 2.0), 10).size(), 1u);
    EXPECT_TRUE(histogram(std::vector<double>{}, 10).empty());
}

TEST(PlotData, DeterministicTables) {
    const auto data = generate_dataset(2000, 10);
    const auto split = split_dataset(data, 10);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.seed = 1;
    const auto tm = train_model(split, cfg);
    const auto result = evaluate(tm.model, split.test);

    const auto base = std::filesystem::temp_directory_path() / "dltml_test_plots";
    std::filesystem::remove_all(base);
    const auto files = emit_plot_data(result, base / "a");
    emit_plot_data(result, base / "b");
    EXPECT_EQ(files.size(), 8u);
    for (const auto& f : files)
        EXPECT_EQ(detail::read_file((base / "a" / f).string()), detail::read_file((base / "b" / f).string())) << f;

    const auto loss = detail::read_file((base / "a" / "fig2_loss_curve.csv").string());
    EXPECT_EQ(static_cast<std::size_t>(std::count(loss.begin(), loss.end(), '\n')), tm.report.epochs_run + 1);

    const auto hist = detail::read_file((base / "a" / "fig4_error_hist.csv").string());
    std::size_t total = 0;
    std::istringstream in(hist);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) total += std::stoul(line.substr(line.rfind(',') + 1));
    EXPECT_EQ(total, split.test.size());
    std::filesystem::remove_all(base);

    const auto j = to_json(result);
    EXPECT_EQ(j["metrics"]["count"], split.test.size());
    EXPECT_EQ(j["feature_importance"].size(), 16u);
}

TEST(Evaluate, TrainSplitFitsAtLeastAsWell) {
    // Small enough that the network fits its training split more closely
    // than unseen data.
    const auto data = generate_dataset(1000, 11);
    const auto split = split_dataset(data, 11);
    TrainConfig cfg;
    cfg.seed = 11;
    const auto tm = train_model(split, cfg);
    const auto on_train = evaluate(tm.model, split.train);
    const auto on_test = evaluate(tm.model, split.test);
    EXPECT_LE(on_train.metrics.mse, on_test.metrics.mse);
}
