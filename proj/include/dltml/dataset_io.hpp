#pragma once

// Line-delimited JSON dataset files.
//
// Line 1 is a header object; every following line is one record carrying the
// raw configuration, the 16 features in canonical order and the label.
// Doubles are written in shortest round-trip form, so reading a file back
// reproduces every value bit for bit.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "datagen.hpp"
#include "errors.hpp"
#include "json.hpp"

namespace dltml {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kStatsFormatVersion = 1;

struct DatasetHeader {
    int version = kDatasetFormatVersion;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    SamplerRanges ranges;
    double compute_intensity = kDefaultComputeIntensity;
    std::string std_convention = "population";
    DistributionOrder order = kDefaultLabelOrder;
};

struct Dataset {
    DatasetHeader header;
    std::vector<DatasetRecord> records;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

using nlohmann::json;

inline json ranges_to_json(const SamplerRanges& r) {
    return {{"n", {r.n_min, r.n_max}},
            {"load_gb", {r.load_min, r.load_max}},
            {"speed_gflops", {r.speed_min, r.speed_max}},
            {"bandwidth_mbps", {r.bandwidth_min, r.bandwidth_max}}};
}

inline SamplerRanges ranges_from_json(const json& j) {
    SamplerRanges r;
    r.n_min = j.at("n").at(0).get<int>();
    r.n_max = j.at("n").at(1).get<int>();
    r.load_min = j.at("load_gb").at(0).get<double>();
    r.load_max = j.at("load_gb").at(1).get<double>();
    r.speed_min = j.at("speed_gflops").at(0).get<double>();
    r.speed_max = j.at("speed_gflops").at(1).get<double>();
    r.bandwidth_min = j.at("bandwidth_mbps").at(0).get<double>();
    r.bandwidth_max = j.at("bandwidth_mbps").at(1).get<double>();
    return r;
}

inline json feature_names_json() {
    json names = json::array();
    for (auto name : kFeatureNames) names.push_back(std::string(name));
    return names;
}

template <typename F>
auto parse_or_throw(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw DataError("malformed " + what + ": " + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + path);
}

}  // namespace detail

inline std::string serialize_dataset(const Dataset& ds) {
    using nlohmann::json;
    std::string out;
    json header = {{"format", "dltml-dataset"},
                   {"version", ds.header.version},
                   {"seed", ds.header.seed},
                   {"count", ds.records.size()},
                   {"compute_intensity", ds.header.compute_intensity},
                   {"std_convention", ds.header.std_convention},
                   {"distribution_order", to_string(ds.header.order)},
                   {"ranges", detail::ranges_to_json(ds.header.ranges)},
                   {"feature_order", detail::feature_names_json()}};
    out += header.dump();
    out += '\n';
    for (const auto& r : ds.records) {
        const auto f = r.features.to_array();
        json rec = {{"n", r.config.n()},
                    {"load_gb", r.config.load_gb},
                    {"root_speed", r.config.root_speed},
                    {"child_speeds", r.config.child_speeds},
                    {"link_bandwidths", r.config.link_bandwidths},
                    {"features", std::vector<double>(f.begin(), f.end())},
                    {"t_star", r.t_star}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

inline Dataset parse_dataset(std::string_view text) {
    using nlohmann::json;
    Dataset ds;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "dataset line " + std::to_string(line_no);
        const json j = detail::parse_or_throw(where, [&] { return json::parse(line); });
        if (!have_header) {
            detail::parse_or_throw(where, [&] {
                if (j.at("format").get<std::string>() != "dltml-dataset") throw DataError("not a dltml dataset file");
                ds.header.version = j.at("version").get<int>();
                if (ds.header.version != kDatasetFormatVersion)
                    throw DataError("unsupported dataset version " + std::to_string(ds.header.version));
                ds.header.seed = j.at("seed").get<std::uint64_t>();
                ds.header.count = j.at("count").get<std::size_t>();
                ds.header.compute_intensity = j.at("compute_intensity").get<double>();
                ds.header.std_convention = j.at("std_convention").get<std::string>();
                if (ds.header.std_convention != "population")
                    throw DataError("unsupported std convention '" + ds.header.std_convention + "'");
                try {
                    ds.header.order = parse_distribution_order(j.at("distribution_order").get<std::string>());
                } catch (const InvalidInput& e) {
                    throw DataError(e.what());
                }
                ds.header.ranges = detail::ranges_from_json(j.at("ranges"));
                if (j.at("feature_order") != detail::feature_names_json())
                    throw DataError("dataset feature order differs from this build");
                return 0;
            });
            have_header = true;
            continue;
        }
        DatasetRecord r = detail::parse_or_throw(where, [&] {
            DatasetRecord rec;
            rec.config.load_gb = j.at("load_gb").get<double>();
            rec.config.root_speed = j.at("root_speed").get<double>();
            rec.config.child_speeds = j.at("child_speeds").get<std::vector<double>>();
            rec.config.link_bandwidths = j.at("link_bandwidths").get<std::vector<double>>();
            const auto f = j.at("features").get<std::vector<double>>();
            if (f.size() != kNumFeatures) throw DataError(where + ": expected 16 features");
            FeatureArray arr;
            std::copy(f.begin(), f.end(), arr.begin());
            rec.features = FeatureVector::from_array(arr);
            rec.t_star = j.at("t_star").get<double>();
            if (j.at("n").get<std::size_t>() != rec.config.n()) throw DataError(where + ": n disagrees with child list");
            return rec;
        });
        try {
            validate(r.config);
        } catch (const InvalidInput& e) {
            throw DataError(where + ": " + e.what());
        }
        if (!(r.t_star > 0.0)) throw DataError(where + ": label must be positive");
        ds.records.push_back(std::move(r));
    }
    if (!have_header) throw DataError("dataset file is empty");
    if (ds.records.size() != ds.header.count)
        throw DataError("dataset header announces " + std::to_string(ds.header.count) + " records, found " +
                        std::to_string(ds.records.size()));
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    detail::write_file(path, serialize_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) { return parse_dataset(detail::read_file(path)); }

inline Dataset make_dataset(std::size_t count, std::uint64_t seed, const SamplerRanges& ranges = {},
                            double compute_intensity = kDefaultComputeIntensity,
                            DistributionOrder order = kDefaultLabelOrder) {
    Dataset ds;
    ds.header.seed = seed;
    ds.header.count = count;
    ds.header.ranges = ranges;
    ds.header.compute_intensity = compute_intensity;
    ds.header.order = order;
    ds.records = generate_dataset(count, seed, ranges, compute_intensity, order);
    return ds;
}

/// Hash identifying a dataset in model metadata.
inline std::string dataset_hash(const Dataset& ds) { return fnv1a_hex(serialize_dataset(ds)); }

inline nlohmann::json stats_to_json(const NormalizationStats& s) {
    return {{"feature_order", detail::feature_names_json()},
            {"feature_means", s.feature_means},
            {"feature_stds", s.feature_stds},
            {"target_mean", s.target_mean},
            {"target_std", s.target_std}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
    return detail::parse_or_throw("normalization stats", [&] {
        if (j.at("feature_order") != detail::feature_names_json())
            throw DataError("normalization stats use a different feature order");
        NormalizationStats s;
        const auto means = j.at("feature_means").get<std::vector<double>>();
        const auto stds = j.at("feature_stds").get<std::vector<double>>();
        if (means.size() != kNumFeatures || stds.size() != kNumFeatures)
            throw DataError("normalization stats need 16 means and 16 stds");
        std::copy(means.begin(), means.end(), s.feature_means.begin());
        std::copy(stds.begin(), stds.end(), s.feature_stds.begin());
        s.target_mean = j.at("target_mean").get<double>();
        s.target_std = j.at("target_std").get<double>();
        for (double v : stds) if (!(v > 0.0)) throw DataError("normalization std must be positive");
        if (!(s.target_std > 0.0)) throw DataError("normalization std must be positive");
        return s;
    });
}

inline void save_stats(const NormalizationStats& s, const std::string& path) {
    nlohmann::json j = {{"format", "dltml-normalization"}, {"version", kStatsFormatVersion}, {"stats", stats_to_json(s)}};
    detail::write_file(path, j.dump(2) + "\n");
}

inline NormalizationStats load_stats(const std::string& path) {
    using nlohmann::json;
    const json j = detail::parse_or_throw("normalization file", [&] { return json::parse(detail::read_file(path)); });
    detail::parse_or_throw("normalization file", [&] {
        if (j.at("format").get<std::string>() != "dltml-normalization") throw DataError("not a normalization file");
        if (j.at("version").get<int>() != kStatsFormatVersion) throw DataError("unsupported normalization version");
        return 0;
    });
    return stats_from_json(j.at("stats"));
}

}  // namespace dltml
