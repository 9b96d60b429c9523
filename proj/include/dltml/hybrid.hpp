#pragma once

// Surrogate-first prediction with exact fallback: large ML estimates are
// replaced by the analytical optimum.

#include <optional>
#include <string>

#include "dlt_core.hpp"
#include "model.hpp"

namespace dltml {

inline constexpr double kDefaultHybridThreshold = 5000.0;  // seconds

/// Optional extra trigger on speed heterogeneity (max/min child speed).
inline constexpr double kDefaultHeterogeneityTrigger = 10.0;

enum class PredictionSource { Ml, DltVerified };

inline const char* to_string(PredictionSource s) { return s == PredictionSource::Ml ? "ml" : "dlt-verified"; }

struct HybridDecision {
    double t_star = 0.0;  // reported optimal time, s
    PredictionSource source = PredictionSource::Ml;
    double ml_estimate = 0.0;
    double threshold = kDefaultHybridThreshold;
};

struct HybridOptions {
    double threshold = kDefaultHybridThreshold;
    /// When set, configurations whose heterog_w exceeds this are also verified.
    std::optional<double> heterogeneity_trigger;
};

/// Runs the surrogate; when its estimate exceeds the threshold the exact
/// solver is run with the compute intensity and distribution order the model
/// was trained on, and its answer returned.
inline HybridDecision hybrid_predict(const MlpModel& model, const SltnConfig& config, const HybridOptions& opts = {}) {
    const auto features = extract_features(config);
    HybridDecision d;
    d.threshold = opts.threshold;
    d.ml_estimate = predict(model, features);
    d.t_star = d.ml_estimate;
    const bool heterogeneous = opts.heterogeneity_trigger && features.heterog_w > *opts.heterogeneity_trigger;
    if (d.ml_estimate > opts.threshold || heterogeneous) {
        d.t_star = solve_config(config, model.meta.compute_intensity, model.meta.order).t_star;
        d.source = PredictionSource::DltVerified;
    }
    return d;
}

inline HybridDecision hybrid_predict(const MlpModel& model, const SltnConfig& config, double threshold) {
    return hybrid_predict(model, config, HybridOptions{threshold, std::nullopt});
}

}  // namespace dltml
