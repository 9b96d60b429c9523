#pragma once

// Self-contained model bundle: network weights plus the normalization
// statistics and metadata needed to turn a raw configuration into a
// prediction in seconds.

#include <cstdint>
#include <string>
#include <vector>

#include "dataset_io.hpp"
#include "datagen.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "nn.hpp"

namespace dltml {

inline constexpr int kModelFormatVersion = 1;

struct ModelMetadata {
    int version = kModelFormatVersion;
    std::uint64_t training_seed = 0;
    std::uint64_t split_seed = 0;
    std::string dataset_hash;
    double compute_intensity = kDefaultComputeIntensity;
    DistributionOrder order = kDefaultLabelOrder;
    // Loss history of the run that produced the weights; wall-clock time is
    // left out so that bundles from identical runs are byte-identical.
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;
    bool stopped_early = false;

    friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

struct MlpModel {
    MlpParams params;
    NormalizationStats norm;
    ModelMetadata meta;
};

/// Features, normalization, inference-mode forward pass, inverse transform.
inline double predict(const MlpModel& model, const SltnConfig& config) {
    const auto x = normalize_features(model.norm, extract_features(config));
    return denormalize_target(model.norm, forward(model.params, x));
}

/// Same as predict() for an already extracted feature vector.
inline double predict(const MlpModel& model, const FeatureVector& features) {
    const auto x = normalize_features(model.norm, features);
    return denormalize_target(model.norm, forward(model.params, x));
}

inline std::vector<double> predict_all(const MlpModel& model, std::span<const DatasetRecord> records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(predict(model, r.features));
    return out;
}

struct TrainedModel {
    MlpModel model;
    TrainReport report;
};

/// Fits normalization on the training split, trains, and bundles the result.
inline TrainedModel train_model(const DatasetSplit& split, const TrainConfig& cfg, const ModelMetadata& base = {}) {
    TrainedModel out;
    out.model.norm = fit_normalization(split.train);
    const auto train_set = apply_normalization(out.model.norm, split.train);
    const auto val_set = apply_normalization(out.model.norm, split.val);
    auto result = train(train_set, val_set, cfg);
    out.model.params = std::move(result.params);
    out.report = std::move(result.report);
    out.model.meta = base;
    out.model.meta.version = kModelFormatVersion;
    out.model.meta.training_seed = cfg.seed;
    out.model.meta.train_loss = out.report.train_loss;
    out.model.meta.val_loss = out.report.val_loss;
    out.model.meta.best_epoch = out.report.best_epoch;
    out.model.meta.stopped_early = out.report.stopped_early;
    return out;
}

inline std::string serialize_model(const MlpModel& m) {
    using nlohmann::json;
    json layers = json::array();
    for (const auto& l : m.params.layers)
        layers.push_back({{"in", l.in}, {"out", l.out}, {"weight", l.weight}, {"bias", l.bias}});
    json j = {{"format", "dltml-model"},
              {"version", m.meta.version},
              {"topology", m.params.topology()},
              {"parameter_count", m.params.parameter_count()},
              {"layers", layers},
              {"normalization", stats_to_json(m.norm)},
              {"metadata",
               {{"training_seed", m.meta.training_seed},
                {"split_seed", m.meta.split_seed},
                {"dataset_hash", m.meta.dataset_hash},
                {"compute_intensity", m.meta.compute_intensity},
                {"distribution_order", to_string(m.meta.order)},
                {"train_loss", m.meta.train_loss},
                {"val_loss", m.meta.val_loss},
                {"best_epoch", m.meta.best_epoch},
                {"stopped_early", m.meta.stopped_early}}}};
    return j.dump(1) + "\n";
}

/// Parses a bundle and checks it against `expected_topology`.
inline MlpModel parse_model(std::string_view text,
                            std::span<const std::size_t> expected_topology = kDefaultTopology) {
    using nlohmann::json;
    const json j = detail::parse_or_throw("model file", [&] { return json::parse(text); });
    return detail::parse_or_throw("model file", [&] {
        if (j.at("format").get<std::string>() != "dltml-model") throw DataError("not a dltml model file");
        MlpModel m;
        m.meta.version = j.at("version").get<int>();
        if (m.meta.version != kModelFormatVersion)
            throw DataError("unsupported model version " + std::to_string(m.meta.version) + " (expected " +
                            std::to_string(kModelFormatVersion) + ")");

        for (const auto& jl : j.at("layers")) {
            DenseLayer l(jl.at("in").get<std::size_t>(), jl.at("out").get<std::size_t>());
            l.weight = jl.at("weight").get<std::vector<double>>();
            l.bias = jl.at("bias").get<std::vector<double>>();
            if (l.weight.size() != l.in * l.out || l.bias.size() != l.out)
                throw DataError("layer arrays do not match their declared shape");
            m.params.layers.push_back(std::move(l));
        }
        if (m.params.layers.empty()) throw DataError("model has no layers");
        for (std::size_t k = 1; k < m.params.layers.size(); ++k)
            if (m.params.layers[k].in != m.params.layers[k - 1].out) throw DataError("layer widths do not chain");

        const auto expected = MlpParams::zeros(expected_topology).parameter_count();
        const auto declared = j.at("parameter_count").get<std::size_t>();
        const auto actual = m.params.parameter_count();
        if (declared != actual || actual != expected)
            throw DataError("parameter count mismatch: file declares " + std::to_string(declared) + ", holds " +
                            std::to_string(actual) + ", expected " + std::to_string(expected));
        const std::vector<std::size_t> want(expected_topology.begin(), expected_topology.end());
        if (m.params.topology() != want || j.at("topology").get<std::vector<std::size_t>>() != want)
            throw DataError("model topology differs from the expected architecture");
        if (!m.params.all_finite()) throw DataError("model contains non-finite weights");

        m.norm = stats_from_json(j.at("normalization"));
        const auto& md = j.at("metadata");
        m.meta.training_seed = md.at("training_seed").get<std::uint64_t>();
        m.meta.split_seed = md.at("split_seed").get<std::uint64_t>();
        m.meta.dataset_hash = md.at("dataset_hash").get<std::string>();
        m.meta.compute_intensity = md.at("compute_intensity").get<double>();
        try {
            m.meta.order = parse_distribution_order(md.at("distribution_order").get<std::string>());
        } catch (const InvalidInput& e) {
            throw DataError(e.what());
        }
        m.meta.train_loss = md.at("train_loss").get<std::vector<double>>();
        m.meta.val_loss = md.at("val_loss").get<std::vector<double>>();
        m.meta.best_epoch = md.at("best_epoch").get<std::size_t>();
        m.meta.stopped_early = md.at("stopped_early").get<bool>();
        return m;
    });
}

inline void save_model(const MlpModel& m, const std::string& path) { detail::write_file(path, serialize_model(m)); }

inline MlpModel load_model(const std::string& path, std::span<const std::size_t> expected_topology = kDefaultTopology) {
    return parse_model(detail::read_file(path), expected_topology);
}

}  // namespace dltml
