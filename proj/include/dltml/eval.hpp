#pragma once

// Accuracy metrics and error breakdowns for held-out predictions. All
// quantities are in seconds (or percent) after the target has been mapped
// back from normalized space. Error sign: prediction - truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "model.hpp"
#include "nn.hpp"

namespace dltml {

struct MetricReport {
    std::optional<double> r2;  // empty when the targets have no spread
    double mae = 0.0;
    double rmse = 0.0;
    double mse = 0.0;
    double mape = 0.0;  // percent
    std::size_t count = 0;
};

namespace detail {

inline void check_pairs(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw InvalidInput("predictions and targets differ in length");
    if (predictions.empty()) throw InvalidInput("no predictions to evaluate");
    for (double t : targets)
        if (!(t > 0.0)) throw InvalidInput("targets must be positive");
}

inline MetricReport metrics_unchecked(std::span<const double> predictions, std::span<const double> targets) {
    MetricReport m;
    m.count = targets.size();
    const double count = static_cast<double>(m.count);
    double mean_t = 0.0;
    for (double t : targets) mean_t += t;
    mean_t /= count;
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double e = predictions[i] - targets[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        pct_sum += std::abs(e) / targets[i];
        ss_tot += (targets[i] - mean_t) * (targets[i] - mean_t);
    }
    m.mae = abs_sum / count;
    m.mse = sq_sum / count;
    m.rmse = std::sqrt(m.mse);
    m.mape = 100.0 * pct_sum / count;
    if (m.count >= 2 && ss_tot > 0.0) m.r2 = 1.0 - sq_sum / ss_tot;
    return m;
}

/// Linear-interpolated quantile of an ascending sequence.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// R^2 = 1 - SS_res/SS_tot (test-set mean), MAE, RMSE, MAPE = mean(|e|/y)*100.
inline MetricReport compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
    detail::check_pairs(predictions, targets);
    auto m = detail::metrics_unchecked(predictions, targets);
    if (!m.r2) throw InvalidInput("R^2 is undefined: targets have zero variance or fewer than two samples");
    return m;
}

inline double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return detail::quantile_sorted(xs, 0.5);
}

/// Absolute percentage errors |pred - y| / y * 100.
inline std::vector<double> percentage_errors(std::span<const double> predictions, std::span<const double> targets) {
    detail::check_pairs(predictions, targets);
    std::vector<double> out(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) out[i] = 100.0 * std::abs(predictions[i] - targets[i]) / targets[i];
    return out;
}

enum class StrataScheme { ByN, ByLoad, ByHeterogeneity, All };

inline const char* to_string(StrataScheme s) {
    switch (s) {
        case StrataScheme::ByN: return "n";
        case StrataScheme::ByLoad: return "load_gb";
        case StrataScheme::ByHeterogeneity: return "heterog_w";
        case StrataScheme::All: return "all";
    }
    return "?";
}

inline constexpr std::array<double, 6> kLoadBinEdges = {1.0, 5.0, 10.0, 20.0, 40.0, 100.0};
inline constexpr std::array<double, 5> kHeterogeneityBinEdges = {1.0, 2.0, 5.0, 10.0, 15.0};

struct StratumBucket {
    std::string label;
    double lower = 0.0;  // bin edges; lower == upper == n for the by-n scheme
    double upper = 0.0;
    std::size_t count = 0;
    std::optional<MetricReport> metrics;  // omitted for empty buckets
    double median_pct_error = 0.0;
    double p90_pct_error = 0.0;
    double max_pct_error = 0.0;
    double median_abs_error = 0.0;
};

struct StratifiedReport {
    StrataScheme scheme = StrataScheme::All;
    std::vector<StratumBucket> buckets;
};

namespace detail {

/// Bin index for half-open bins [e_k, e_{k+1}); the last bin is closed and
/// out-of-range values are clamped into the end bins.
template <std::size_t N>
std::size_t bin_of(double v, const std::array<double, N>& edges) {
    for (std::size_t k = 1; k + 1 < N; ++k)
        if (v < edges[k]) return k - 1;
    return N - 2;
}

template <std::size_t N>
std::string bin_label(const std::array<double, N>& edges, std::size_t k) {
    char buf[64];
    const bool last = k + 2 == N;
    std::snprintf(buf, sizeof buf, "[%g,%g%c", edges[k], edges[k + 1], last ? ']' : ')');
    return buf;
}

}  // namespace detail

/// Partitions (record, prediction) pairs and summarises each bucket.
inline StratifiedReport stratify(std::span<const DatasetRecord> records, std::span<const double> predictions,
                                 StrataScheme scheme) {
    if (records.size() != predictions.size()) throw InvalidInput("records and predictions differ in length");
    StratifiedReport rep;
    rep.scheme = scheme;
    std::vector<std::vector<std::size_t>> members;

    switch (scheme) {
        case StrataScheme::All:
            rep.buckets.push_back({"all", 0.0, 0.0});
            members.emplace_back();
            for (std::size_t i = 0; i < records.size(); ++i) members[0].push_back(i);
            break;
        case StrataScheme::ByN: {
            std::map<std::size_t, std::vector<std::size_t>> by_n;
            for (std::size_t i = 0; i < records.size(); ++i) by_n[records[i].config.n()].push_back(i);
            for (auto& [n, idx] : by_n) {
                const auto v = static_cast<double>(n);
                rep.buckets.push_back({std::to_string(n), v, v});
                members.push_back(std::move(idx));
            }
            break;
        }
        case StrataScheme::ByLoad:
        case StrataScheme::ByHeterogeneity: {
            const bool load = scheme == StrataScheme::ByLoad;
            const std::size_t nbins = load ? kLoadBinEdges.size() - 1 : kHeterogeneityBinEdges.size() - 1;
            members.resize(nbins);
            for (std::size_t k = 0; k < nbins; ++k) {
                if (load)
                    rep.buckets.push_back({detail::bin_label(kLoadBinEdges, k), kLoadBinEdges[k], kLoadBinEdges[k + 1]});
                else
                    rep.buckets.push_back({detail::bin_label(kHeterogeneityBinEdges, k), kHeterogeneityBinEdges[k],
                                           kHeterogeneityBinEdges[k + 1]});
            }
            for (std::size_t i = 0; i < records.size(); ++i) {
                const std::size_t k = load ? detail::bin_of(records[i].config.load_gb, kLoadBinEdges)
                                           : detail::bin_of(records[i].features.heterog_w, kHeterogeneityBinEdges);
                members[k].push_back(i);
            }
            break;
        }
    }

    for (std::size_t b = 0; b < rep.buckets.size(); ++b) {
        auto& bucket = rep.buckets[b];
        bucket.count = members[b].size();
        if (bucket.count == 0) continue;
        std::vector<double> p, t;
        for (auto i : members[b]) {
            p.push_back(predictions[i]);
            t.push_back(records[i].t_star);
        }
        detail::check_pairs(p, t);
        bucket.metrics = detail::metrics_unchecked(p, t);
        auto pct = percentage_errors(p, t);
        std::sort(pct.begin(), pct.end());
        bucket.median_pct_error = detail::quantile_sorted(pct, 0.5);
        bucket.p90_pct_error = detail::quantile_sorted(pct, 0.9);
        bucket.max_pct_error = pct.back();
        std::vector<double> abs_err(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) abs_err[i] = std::abs(p[i] - t[i]);
        bucket.median_abs_error = median(std::move(abs_err));
    }
    return rep;
}

struct DispersionBin {
    double pred_lower = 0.0;
    double pred_upper = 0.0;
    std::size_t count = 0;
    double residual_std = 0.0;
};

struct ResidualReport {
    double mean_error = 0.0;
    double share_within_50s = 0.0;
    double share_within_100s = 0.0;
    double share_pct_within_10 = 0.0;
    double max_over_prediction = 0.0;
    std::vector<std::pair<double, double>> pairs;  // (prediction, residual)
    std::vector<DispersionBin> dispersion;         // prediction deciles

    /// Fraction of |residual| <= width seconds.
    double share_within(double width) const {
        if (pairs.empty()) return 0.0;
        std::size_t c = 0;
        for (const auto& [p, r] : pairs) c += std::abs(r) <= width ? 1 : 0;
        return static_cast<double>(c) / static_cast<double>(pairs.size());
    }
};

inline ResidualReport residual_analysis(std::span<const double> predictions, std::span<const double> targets) {
    detail::check_pairs(predictions, targets);
    ResidualReport rep;
    const std::size_t count = targets.size();
    rep.pairs.reserve(count);
    double sum = 0.0;
    std::size_t pct_ok = 0;
    rep.max_over_prediction = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < count; ++i) {
        const double r = predictions[i] - targets[i];
        rep.pairs.emplace_back(predictions[i], r);
        sum += r;
        pct_ok += std::abs(r) / targets[i] <= 0.10 ? 1 : 0;
        rep.max_over_prediction = std::max(rep.max_over_prediction, r);
    }
    rep.mean_error = sum / static_cast<double>(count);
    rep.share_within_50s = rep.share_within(50.0);
    rep.share_within_100s = rep.share_within(100.0);
    rep.share_pct_within_10 = static_cast<double>(pct_ok) / static_cast<double>(count);

    auto sorted = rep.pairs;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t d = 0; d < 10; ++d) {
        const std::size_t lo = d * count / 10;
        const std::size_t hi = (d + 1) * count / 10;
        if (hi <= lo) continue;
        DispersionBin bin;
        bin.pred_lower = sorted[lo].first;
        bin.pred_upper = sorted[hi - 1].first;
        bin.count = hi - lo;
        double mean = 0.0;
        for (std::size_t i = lo; i < hi; ++i) mean += sorted[i].second;
        mean /= static_cast<double>(bin.count);
        double ss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) ss += (sorted[i].second - mean) * (sorted[i].second - mean);
        bin.residual_std = std::sqrt(ss / static_cast<double>(bin.count));
        rep.dispersion.push_back(bin);
    }
    return rep;
}

struct FeatureImportance {
    std::string feature;
    std::size_t index = 0;
    double importance = 0.0;  // mean |d prediction / d x_j|, normalized units
};

/// Mean absolute input gradient per feature over normalized rows,
/// ranked descending (ties keep feature order).
inline std::vector<FeatureImportance> feature_importance(const MlpParams& params, std::span<const double> rows,
                                                         std::span<const std::string> names = {}) {
    const std::size_t d = params.input_dim();
    if (rows.empty() || rows.size() % d != 0) throw InvalidInput("sample set must be a nonempty multiple of the input width");
    const std::size_t count = rows.size() / d;
    std::vector<double> acc(d, 0.0);
    for (std::size_t s = 0; s < count; ++s) {
        const auto g = input_gradient(params, rows.subspan(s * d, d));
        for (std::size_t j = 0; j < d; ++j) acc[j] += std::abs(g[j]);
    }
    std::vector<FeatureImportance> out(d);
    for (std::size_t j = 0; j < d; ++j) {
        out[j].index = j;
        out[j].importance = acc[j] / static_cast<double>(count);
        if (j < names.size())
            out[j].feature = names[j];
        else if (d == kNumFeatures)
            out[j].feature = std::string(kFeatureNames[j]);
        else
            out[j].feature = "x" + std::to_string(j);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.importance > b.importance; });
    return out;
}

inline std::vector<FeatureImportance> feature_importance(const MlpModel& model, std::span<const DatasetRecord> records) {
    const auto set = apply_normalization(model.norm, records);
    return feature_importance(model.params, set.x);
}

struct HistogramBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
};

/// Equal-width bins over [min, max]; the last bin is closed.
inline std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins) {
    std::vector<HistogramBin> out;
    if (values.empty() || bins == 0) return out;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
        out.push_back({lo, hi, values.size()});
        return out;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    out.resize(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        out[k].lower = lo + width * static_cast<double>(k);
        out[k].upper = k + 1 == bins ? hi : lo + width * static_cast<double>(k + 1);
    }
    for (double v : values) {
        auto k = static_cast<std::size_t>((v - lo) / width);
        out[std::min(k, bins - 1)].count++;
    }
    return out;
}

/// Everything an evaluation run produces.
struct EvaluationResult {
    MetricReport metrics;
    StratifiedReport by_n;
    StratifiedReport by_load;
    StratifiedReport by_heterogeneity;
    ResidualReport residuals;
    std::vector<double> predictions;
    std::vector<double> targets;
    std::vector<double> train_loss;  // loss curve of the model, may be empty
    std::vector<double> val_loss;
    std::vector<FeatureImportance> importance;
};

inline EvaluationResult evaluate(const MlpModel& model, std::span<const DatasetRecord> records) {
    EvaluationResult r;
    r.predictions = predict_all(model, records);
    r.targets.reserve(records.size());
    for (const auto& rec : records) r.targets.push_back(rec.t_star);
    r.metrics = compute_metrics(r.predictions, r.targets);
    r.by_n = stratify(records, r.predictions, StrataScheme::ByN);
    r.by_load = stratify(records, r.predictions, StrataScheme::ByLoad);
    r.by_heterogeneity = stratify(records, r.predictions, StrataScheme::ByHeterogeneity);
    r.residuals = residual_analysis(r.predictions, r.targets);
    r.train_loss = model.meta.train_loss;
    r.val_loss = model.meta.val_loss;
    r.importance = feature_importance(model, records);
    return r;
}

inline nlohmann::json to_json(const MetricReport& m) {
    nlohmann::json j = {{"count", m.count}, {"mae", m.mae}, {"rmse", m.rmse}, {"mse", m.mse}, {"mape", m.mape}};
    j["r2"] = m.r2 ? nlohmann::json(*m.r2) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const StratifiedReport& rep) {
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : rep.buckets) {
        nlohmann::json jb = {{"label", b.label}, {"lower", b.lower}, {"upper", b.upper}, {"count", b.count}};
        if (b.metrics) {
            jb["metrics"] = to_json(*b.metrics);
            jb["median_pct_error"] = b.median_pct_error;
            jb["p90_pct_error"] = b.p90_pct_error;
            jb["max_pct_error"] = b.max_pct_error;
            jb["median_abs_error"] = b.median_abs_error;
        }
        buckets.push_back(jb);
    }
    return {{"scheme", to_string(rep.scheme)}, {"buckets", buckets}};
}

inline nlohmann::json to_json(const EvaluationResult& r) {
    nlohmann::json importance = nlohmann::json::array();
    for (const auto& f : r.importance) importance.push_back({{"feature", f.feature}, {"importance", f.importance}});
    nlohmann::json dispersion = nlohmann::json::array();
    for (const auto& d : r.residuals.dispersion)
        dispersion.push_back({{"pred_lower", d.pred_lower}, {"pred_upper", d.pred_upper}, {"count", d.count},
                              {"residual_std", d.residual_std}});
    return {{"metrics", to_json(r.metrics)},
            {"stratified", {to_json(r.by_n), to_json(r.by_load), to_json(r.by_heterogeneity)}},
            {"residuals",
             {{"mean_error", r.residuals.mean_error},
              {"share_within_50s", r.residuals.share_within_50s},
              {"share_within_100s", r.residuals.share_within_100s},
              {"share_pct_within_10", r.residuals.share_pct_within_10},
              {"max_over_prediction", r.residuals.max_over_prediction},
              {"dispersion_by_prediction_decile", dispersion}}},
            {"feature_importance", importance}};
}

inline constexpr std::size_t kHistogramBins = 40;

/// Writes one CSV table per figure into `dir` (created if needed) and
/// returns the file names written.
inline std::vector<std::string> emit_plot_data(const EvaluationResult& r, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::vector<std::string> written;
    using detail::fmt_double;

    auto table = [&](const std::string& name, const std::string& header, auto&& body) {
        std::string text = header + "\n";
        body(text);
        detail::write_file((dir / name).string(), text);
        written.push_back(name);
    };
    auto row = [](std::string& text, std::initializer_list<std::string> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) text += ',';
            text += c;
            first = false;
        }
        text += '\n';
    };

    table("fig2_loss_curve.csv", "epoch,train_loss,val_loss", [&](std::string& t) {
        for (std::size_t e = 0; e < r.val_loss.size(); ++e)
            row(t, {std::to_string(e + 1), fmt_double(r.train_loss[e]), fmt_double(r.val_loss[e])});
    });
    table("fig3_pred_vs_actual.csv", "actual_s,predicted_s", [&](std::string& t) {
        for (std::size_t i = 0; i < r.targets.size(); ++i) row(t, {fmt_double(r.targets[i]), fmt_double(r.predictions[i])});
    });

    std::vector<double> errors, pct;
    for (std::size_t i = 0; i < r.targets.size(); ++i) {
        const double e = r.predictions[i] - r.targets[i];
        errors.push_back(e);
        pct.push_back(100.0 * e / r.targets[i]);
    }
    auto hist_table = [&](const std::string& name, std::span<const double> values) {
        table(name, "bin_lower,bin_upper,count", [&](std::string& t) {
            for (const auto& b : histogram(values, kHistogramBins))
                row(t, {fmt_double(b.lower), fmt_double(b.upper), std::to_string(b.count)});
        });
    };
    hist_table("fig4_error_hist.csv", errors);
    hist_table("fig5_pct_error_hist.csv", pct);

    table("fig6_residual_vs_pred.csv", "predicted_s,residual_s", [&](std::string& t) {
        for (const auto& [p, res] : r.residuals.pairs) row(t, {fmt_double(p), fmt_double(res)});
    });

    auto strata_table = [&](const std::string& name, const StratifiedReport& rep) {
        table(name, "stratum,lower,upper,count,median_pct_error,p90_pct_error,max_pct_error,median_abs_error_s,mae_s,rmse_s,mape",
              [&](std::string& t) {
                  for (const auto& b : rep.buckets) {
                      if (!b.metrics) {
                          row(t, {b.label, fmt_double(b.lower), fmt_double(b.upper), "0", "", "", "", "", "", "", ""});
                          continue;
                      }
                      row(t, {b.label, fmt_double(b.lower), fmt_double(b.upper), std::to_string(b.count),
                              fmt_double(b.median_pct_error), fmt_double(b.p90_pct_error), fmt_double(b.max_pct_error),
                              fmt_double(b.median_abs_error), fmt_double(b.metrics->mae), fmt_double(b.metrics->rmse),
                              fmt_double(b.metrics->mape)});
                  }
              });
    };
    strata_table("fig6_error_by_n.csv", r.by_n);
    strata_table("fig7_error_by_load.csv", r.by_load);
    strata_table("fig8_error_by_heterogeneity.csv", r.by_heterogeneity);
    return written;
}

}  // namespace dltml
