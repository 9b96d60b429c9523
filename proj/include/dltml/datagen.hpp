#pragma once

// Synthetic training data: random single-level tree configurations labelled
// with their exact optimal time, summarised by a fixed 16-value feature
// vector so that systems of any size share one input layout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlt_core.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace dltml {

inline constexpr std::size_t kNumFeatures = 16;

using FeatureArray = std::array<double, kNumFeatures>;

/// Canonical feature order. Model files depend on it; never reorder.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "n",       "load_gb", "mean_w", "std_w",           "min_w", "max_w", "mean_z",    "std_z",
    "min_z",   "max_z",   "w0",     "comp_comm_ratio", "cv_w",  "cv_z",  "heterog_w", "heterog_z",
};

struct SamplerRanges {
    int n_min = 3;
    int n_max = 20;
    double load_min = 1.0;
    double load_max = 100.0;
    double speed_min = 1.0;
    double speed_max = 15.0;
    double bandwidth_min = 10.0;
    double bandwidth_max = 150.0;

    void validate() const {
        auto ok = [](double lo, double hi) { return lo > 0.0 && lo <= hi && std::isfinite(hi); };
        if (!(n_min >= 1 && n_min <= n_max) || !ok(load_min, load_max) || !ok(speed_min, speed_max) ||
            !ok(bandwidth_min, bandwidth_max))
            throw InvalidInput("sampler ranges need positive minimums and min <= max");
    }

    friend bool operator==(const SamplerRanges&, const SamplerRanges&) = default;
};

/// Speed features (`*_w`, `w0`) are in GFLOPS/s and bandwidth features
/// (`*_z`) in MB/s, i.e. the raw physical quantities rather than the s/GB
/// rates the solver uses.
struct FeatureVector {
    double n = 0, load_gb = 0;
    double mean_w = 0, std_w = 0, min_w = 0, max_w = 0;
    double mean_z = 0, std_z = 0, min_z = 0, max_z = 0;
    double w0 = 0;
    double comp_comm_ratio = 0;
    double cv_w = 0, cv_z = 0;
    double heterog_w = 0, heterog_z = 0;

    FeatureArray to_array() const {
        return {n,      load_gb, mean_w, std_w,           min_w, max_w, mean_z,    std_z,
                min_z,  max_z,   w0,     comp_comm_ratio, cv_w,  cv_z,  heterog_w, heterog_z};
    }

    static FeatureVector from_array(const FeatureArray& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[11], a[12], a[13], a[14], a[15]};
    }

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct DatasetRecord {
    SltnConfig config;
    FeatureVector features;
    double t_star = 0.0;  // seconds
};

struct NormalizationStats {
    FeatureArray feature_means{};
    FeatureArray feature_stds{};
    double target_mean = 0.0;
    double target_std = 1.0;

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

namespace detail {

struct Summary {
    double mean, std, min, max;
};

/// Population statistics (divisor n).
inline Summary summarize(std::span<const double> xs) {
    const double count = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    return {mean, std::sqrt(ss / count), *lo, *hi};
}

}  // namespace detail

/// Draws n, load, root speed, the child speeds and then the bandwidths, in
/// that order, from the given stream.
inline SltnConfig sample_config(Rng& rng, const SamplerRanges& ranges) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(ranges.n_min, ranges.n_max));
    SltnConfig c;
    c.load_gb = rng.uniform(ranges.load_min, ranges.load_max);
    c.root_speed = rng.uniform(ranges.speed_min, ranges.speed_max);
    c.child_speeds.resize(n);
    c.link_bandwidths.resize(n);
    for (auto& s : c.child_speeds) s = rng.uniform(ranges.speed_min, ranges.speed_max);
    for (auto& b : c.link_bandwidths) b = rng.uniform(ranges.bandwidth_min, ranges.bandwidth_max);
    return c;
}

inline FeatureVector extract_features(const SltnConfig& config) {
    validate(config);
    const auto w = detail::summarize(config.child_speeds);
    const auto z = detail::summarize(config.link_bandwidths);
    FeatureVector f;
    f.n = static_cast<double>(config.n());
    f.load_gb = config.load_gb;
    f.mean_w = w.mean;
    f.std_w = w.std;
    f.min_w = w.min;
    f.max_w = w.max;
    f.mean_z = z.mean;
    f.std_z = z.std;
    f.min_z = z.min;
    f.max_z = z.max;
    f.w0 = config.root_speed;
    f.comp_comm_ratio = w.mean / z.mean;
    f.cv_w = w.std / w.mean;
    f.cv_z = z.std / z.mean;
    f.heterog_w = w.max / w.min;
    f.heterog_z = z.max / z.min;
    return f;
}

/// Labels used for training: children are served fastest link first, so the
/// label is the optimum over all distribution sequences.
inline constexpr DistributionOrder kDefaultLabelOrder = DistributionOrder::DecreasingBandwidth;

inline DatasetRecord make_record(SltnConfig config, double compute_intensity,
                                 DistributionOrder order = kDefaultLabelOrder) {
    DatasetRecord r;
    r.t_star = solve_config(config, compute_intensity, order).t_star;
    r.features = extract_features(config);
    r.config = std::move(config);
    return r;
}

/// Record i is drawn from its own stream derived from (seed, i), so any
/// subset of records can be regenerated independently.
inline std::vector<DatasetRecord> generate_dataset(std::size_t count, std::uint64_t seed,
                                                   const SamplerRanges& ranges = {},
                                                   double compute_intensity = kDefaultComputeIntensity,
                                                   DistributionOrder order = kDefaultLabelOrder) {
    if (count == 0) throw InvalidInput("dataset count must be at least 1");
    ranges.validate();
    std::vector<DatasetRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        out.push_back(make_record(sample_config(rng, ranges), compute_intensity, order));
    }
    return out;
}

struct DatasetSplit {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> val;
    std::vector<DatasetRecord> test;
};

/// Index-level 80/10/10 partition stratified by n.
///
/// Global validation and test sizes are round(N/10); they are apportioned to
/// the n-strata by largest remainder, so every stratum with at least ten
/// records contributes to all three splits.
struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

inline SplitIndices split_indices(std::span<const DatasetRecord> records, std::uint64_t seed) {
    if (records.empty()) throw InvalidInput("cannot split an empty dataset");
    std::map<std::size_t, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < records.size(); ++i) strata[records[i].config.n()].push_back(i);
    for (const auto& [n, idx] : strata)
        if (idx.size() < 10)
            throw InvalidInput("stratification infeasible: only " + std::to_string(idx.size()) +
                               " records with n=" + std::to_string(n) +
                               " (need at least 10 per system size); increase the dataset count");

    const std::size_t total = records.size();
    const std::size_t holdout = (total + 5) / 10;  // round(total / 10)

    // Largest-remainder apportionment of `holdout` across strata.
    std::vector<std::size_t> quota;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    std::size_t k = 0;
    for (const auto& [n, idx] : strata) {
        const double exact = static_cast<double>(holdout) * static_cast<double>(idx.size()) / static_cast<double>(total);
        const auto base = static_cast<std::size_t>(std::floor(exact));
        quota.push_back(base);
        remainders.emplace_back(exact - static_cast<double>(base), k++);
        assigned += base;
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < holdout; ++i, ++assigned) ++quota[remainders[i].second];

    SplitIndices out;
    k = 0;
    for (auto& [n, idx] : strata) {
        Rng rng(derive_seed(seed, 0x5b1170000ULL + n));
        rng.shuffle(std::span<std::size_t>(idx));
        const std::size_t q = quota[k++];
        out.val.insert(out.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q));
        out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(q),
                        idx.begin() + static_cast<std::ptrdiff_t>(2 * q));
        out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(2 * q), idx.end());
    }
    for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());
    return out;
}

inline DatasetSplit split_dataset(std::span<const DatasetRecord> records, std::uint64_t seed) {
    const auto idx = split_indices(records, seed);
    DatasetSplit out;
    auto gather = [&](const std::vector<std::size_t>& from, std::vector<DatasetRecord>& to) {
        to.reserve(from.size());
        for (auto i : from) to.push_back(records[i]);
    };
    gather(idx.train, out.train);
    gather(idx.val, out.val);
    gather(idx.test, out.test);
    return out;
}

/// Z-score statistics over the training split only (population std).
inline NormalizationStats fit_normalization(std::span<const DatasetRecord> train) {
    if (train.empty()) throw InvalidInput("cannot fit normalization on an empty set");
    NormalizationStats s;
    std::vector<double> column(train.size());
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
        for (std::size_t i = 0; i < train.size(); ++i) column[i] = train[i].features.to_array()[j];
        const auto sum = detail::summarize(column);
        if (!(sum.std > 0.0))
            throw InvalidInput("constant feature '" + std::string(kFeatureNames[j]) + "' in training set");
        s.feature_means[j] = sum.mean;
        s.feature_stds[j] = sum.std;
    }
    for (std::size_t i = 0; i < train.size(); ++i) column[i] = train[i].t_star;
    const auto t = detail::summarize(column);
    if (!(t.std > 0.0)) throw InvalidInput("constant target in training set");
    s.target_mean = t.mean;
    s.target_std = t.std;
    return s;
}

inline FeatureArray normalize_features(const NormalizationStats& s, const FeatureArray& x) {
    FeatureArray out;
    for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] = (x[j] - s.feature_means[j]) / s.feature_stds[j];
    return out;
}

inline FeatureArray normalize_features(const NormalizationStats& s, const FeatureVector& f) {
    return normalize_features(s, f.to_array());
}

inline FeatureArray denormalize_features(const NormalizationStats& s, const FeatureArray& x) {
    FeatureArray out;
    for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] = x[j] * s.feature_stds[j] + s.feature_means[j];
    return out;
}

inline double normalize_target(const NormalizationStats& s, double t) { return (t - s.target_mean) / s.target_std; }
inline double denormalize_target(const NormalizationStats& s, double y) { return y * s.target_std + s.target_mean; }

/// Model-ready matrix view of a record set: row-major inputs and targets.
struct NormalizedSet {
    std::vector<double> x;  // size() * kNumFeatures
    std::vector<double> y;

    std::size_t size() const noexcept { return y.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(x).subspan(i * kNumFeatures, kNumFeatures);
    }
};

inline NormalizedSet apply_normalization(const NormalizationStats& s, std::span<const DatasetRecord> records) {
    NormalizedSet out;
    out.x.reserve(records.size() * kNumFeatures);
    out.y.reserve(records.size());
    for (const auto& r : records) {
        const auto row = normalize_features(s, r.features);
        out.x.insert(out.x.end(), row.begin(), row.end());
        out.y.push_back(normalize_target(s, r.t_star));
    }
    return out;
}

}  // namespace dltml
