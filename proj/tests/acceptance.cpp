// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dltml/dltml.hpp"

using namespace dltml;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 42;
constexpr std::size_t kDeskSamples = 20000;
constexpr std::size_t kOracleConfigs = 1000;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
    std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void run(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [ok, detail] = body();
        report(id, ok, what, detail);
    } catch (const std::exception& e) {
        report(id, false, what, std::string("exception: ") + e.what());
    }
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<SltnConfig> oracle_configs() {
    std::vector<SltnConfig> out;
    for (std::size_t i = 0; i < kOracleConfigs; ++i) {
        Rng rng(derive_seed(2024, i));
        out.push_back(sample_config(rng, SamplerRanges{}));
    }
    return out;
}

struct DeskRun {
    DatasetSplit split;
    TrainedModel trained;
    EvaluationResult eval;
    double seconds = 0.0;
};

DeskRun desk_run(std::uint64_t train_seed) {
    const auto t0 = Clock::now();
    DeskRun r;
    const auto ds = make_dataset(kDeskSamples, kSeed);
    r.split = split_dataset(ds.records, kSeed);
    TrainConfig cfg;
    cfg.seed = train_seed;
    ModelMetadata meta;
    meta.split_seed = kSeed;
    meta.dataset_hash = dataset_hash(ds);
    r.trained = train_model(r.split, cfg, meta);
    r.eval = evaluate(r.trained.model, r.split.test);
    r.seconds = seconds_since(t0);
    std::fprintf(stderr, "desk run seed %llu: %zu epochs (best %zu), %.1f s\n",
                 static_cast<unsigned long long>(train_seed), r.trained.report.epochs_run,
                 r.trained.report.best_epoch, r.seconds);
    return r;
}

}  // namespace

int main() {
    const auto configs = oracle_configs();

    run(1, "closed form matches linear-system oracle on 1000 configs", [&] {
        const auto t0 = Clock::now();
        double worst = 0.0;
        for (const auto& c : configs) {
            const auto rates = to_time_rates(c);
            const auto a = solve_optimal(rates, c.load_gb);
            const auto b = oracle_solve(rates, c.load_gb);
            worst = std::max(worst, rel(a.t_star, b.t_star));
            for (std::size_t i = 0; i < a.alpha.size(); ++i) worst = std::max(worst, rel(a.alpha[i], b.alpha[i]));
        }
        const double secs = seconds_since(t0);
        return std::pair{worst <= 1e-9 && secs < 5.0, fmt("max rel diff %.3g, %.3f s", worst, secs)};
    });

    run(2, "optimal allocation finishes simultaneously", [&] {
        double worst = 0.0;
        for (const auto& c : configs) {
            const auto rates = to_time_rates(c);
            const auto a = solve_optimal(rates, c.load_gb);
            for (double t : simulate_timeline(rates, a, c.load_gb).compute_finish) worst = std::max(worst, rel(t, a.t_star));
        }
        return std::pair{worst <= 1e-9, fmt("max |T_i - T*|/T* = %.3g", worst)};
    });

    run(3, "load fractions sum to one and are positive", [&] {
        double worst = 0.0, smallest = 1.0;
        for (const auto& c : configs) {
            const auto a = solve_config(c);
            worst = std::max(worst, std::abs(std::accumulate(a.alpha.begin(), a.alpha.end(), 0.0) - 1.0));
            smallest = std::min(smallest, *std::min_element(a.alpha.begin(), a.alpha.end()));
        }
        return std::pair{worst <= 1e-12 && smallest > 0.0, fmt("max |sum-1| %.3g, min alpha %.3g", worst, smallest)};
    });

    run(4, "homogeneous closed form for n = 1..10", [] {
        double worst = 0.0;
        for (std::size_t n = 1; n <= 10; ++n) {
            const TimeRates r{1.0, std::vector<double>(n, 1.0), std::vector<double>(n, 1.0)};
            const double rho = 2.0;
            const double expected = std::pow(rho, n) * (rho - 1.0) / (std::pow(rho, n + 1) - 1.0);
            worst = std::max(worst, std::abs(solve_optimal(r, 1.0).t_star_norm - expected));
        }
        const double n2 = solve_optimal({1.0, {1.0, 1.0}, {1.0, 1.0}}, 1.0).t_star_norm;
        return std::pair{worst <= 1e-12, fmt("max abs diff %.3g, n=2 gives %.15f", worst, n2)};
    });

    run(5, "network has exactly 12545 parameters", [] {
        const auto count = init_params(0).parameter_count();
        return std::pair{count == 12545, fmt("%zu parameters", count)};
    });

    run(6, "backprop matches central finite differences", [] {
        const auto t0 = Clock::now();
        const std::vector<std::size_t> topo{16, 4, 3, 2, 1};
        auto p = init_params(6, topo);
        for (auto& l : p.layers)
            for (double& b : l.bias) b = 0.05;
        Rng rng(7);
        const std::size_t rows = 8;
        std::vector<double> x(rows * 16), y(rows);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        for (double& v : y) v = rng.uniform(-1.0, 1.0);
        auto loss = [&](const MlpParams& q) {
            ForwardCache c;
            forward(q, x, rows, c);
            return loss_mse(c.predictions(), y);
        };
        ForwardCache cache;
        forward(p, x, rows, cache);
        std::vector<double> res(rows);
        for (std::size_t i = 0; i < rows; ++i) res[i] = cache.predictions()[i] - y[i];
        MlpParams g;
        backward(p, cache, res, g);
        double worst = 0.0;
        const double eps = 1e-5;
        for (std::size_t i = 0; i < p.parameter_count(); ++i) {
            auto a = p, b = p;
            a[i] += eps;
            b[i] -= eps;
            const double fd = (loss(a) - loss(b)) / (2 * eps);
            worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-7}));
        }
        const double secs = seconds_since(t0);
        return std::pair{worst <= 1e-4 && secs < 10.0,
                         fmt("%zu params, max rel diff %.3g, %.3f s", p.parameter_count(), worst, secs)};
    });

    // Criteria 7 and 9-11 share the seed-42 desk-scale model.
    DeskRun desk;
    bool desk_ok = false;
    run(7, "desk-scale learning: R2 >= 0.95, MAPE <= 10%, early stopping", [&] {
        desk = desk_run(kSeed);
        desk_ok = true;
        const auto& m = desk.eval.metrics;
        std::vector<std::string> stops;
        bool any_early = desk.trained.report.stopped_early;
        stops.push_back(fmt("seed %llu stop@%zu", static_cast<unsigned long long>(kSeed), desk.trained.report.epochs_run));
        for (std::uint64_t s : {kSeed + 1, kSeed + 2}) {
            const auto other = desk_run(s);
            any_early = any_early || other.trained.report.stopped_early;
            stops.push_back(fmt("seed %llu stop@%zu R2 %.4f MAPE %.2f%%", static_cast<unsigned long long>(s),
                                other.trained.report.epochs_run, *other.eval.metrics.r2, other.eval.metrics.mape));
        }
        const bool ok = *m.r2 >= 0.95 && m.mape <= 10.0 && any_early && desk.seconds <= 600.0;
        return std::pair{ok, fmt("%zu/%zu/%zu split, R2 %.4f, MAPE %.2f%%, best val %.4g at epoch %zu, %.1f s; ",
                                 desk.split.train.size(), desk.split.val.size(), desk.split.test.size(), *m.r2, m.mape,
                                 desk.trained.report.best_val_loss, desk.trained.report.best_epoch, desk.seconds) +
                                 stops[0] + "; " + stops[1] + "; " + stops[2]};
    });

    run(8, "median single-prediction latency < 1 ms", [&] {
        const MlpModel model = desk_ok ? desk.trained.model : MlpModel{init_params(1), fit_normalization(generate_dataset(500, 1)), {}};
        std::vector<double> times;
        times.reserve(10000);
        double sink = 0.0;
        for (std::size_t i = 0; i < 10000; ++i) {
            const auto& c = configs[i % configs.size()];
            const auto t0 = Clock::now();
            sink += predict(model, c);
            times.push_back(seconds_since(t0));
        }
        std::nth_element(times.begin(), times.begin() + 5000, times.end());
        const double med = times[5000];
        return std::pair{med < 1e-3 && std::isfinite(sink), fmt("median %.2f us over 10000 calls", med * 1e6)};
    });

    auto need_desk = [&] {
        if (!desk_ok) throw std::runtime_error("desk-scale model unavailable");
    };

    run(9, "median error per n-bucket varies by <= 10 points", [&] {
        need_desk();
        double lo = 1e300, hi = -1e300;
        std::string lo_n, hi_n;
        for (const auto& b : desk.eval.by_n.buckets) {
            if (b.median_pct_error < lo) lo = b.median_pct_error, lo_n = b.label;
            if (b.median_pct_error > hi) hi = b.median_pct_error, hi_n = b.label;
        }
        return std::pair{desk.eval.by_n.buckets.size() == 18 && hi - lo <= 10.0,
                         fmt("%zu buckets, min %.2f%% (n=%s), max %.2f%% (n=%s), spread %.2f points",
                             desk.eval.by_n.buckets.size(), lo, lo_n.c_str(), hi, hi_n.c_str(), hi - lo)};
    });

    run(10, "median error at >= 40 GB below that at < 5 GB", [&] {
        need_desk();
        const auto& b = desk.eval.by_load.buckets;
        std::string all;
        for (const auto& x : b) all += fmt(" %s:%.2f%%", x.label.c_str(), x.median_pct_error);
        const bool ok = b.front().count > 0 && b.back().count > 0 && b.back().median_pct_error < b.front().median_pct_error;
        return std::pair{ok, "medians" + all};
    });

    run(11, "hybrid error never exceeds ML error at 5000 s threshold", [&] {
        need_desk();
        std::size_t verified = 0, violations = 0;
        double max_estimate = 0.0;
        for (const auto& r : desk.split.test) {
            const auto d = hybrid_predict(desk.trained.model, r.config, kDefaultHybridThreshold);
            max_estimate = std::max(max_estimate, d.ml_estimate);
            const double eh = std::abs(d.t_star - r.t_star), em = std::abs(d.ml_estimate - r.t_star);
            if (d.source == PredictionSource::DltVerified) {
                ++verified;
                violations += eh > em;
            } else {
                violations += eh != em;
            }
        }
        return std::pair{violations == 0, fmt("%zu test samples, %zu verified by solver, %zu violations, largest ML estimate %.0f s",
                                              desk.split.test.size(), verified, violations, max_estimate)};
    });

    run(12, "fixed-seed pipeline is byte-for-byte reproducible", [] {
        namespace fs = std::filesystem;
        const auto dir = fs::temp_directory_path() / "dltml_acceptance_determinism";
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto pipeline = [&](const std::string& tag) {
            const auto ds = make_dataset(3000, 7);
            const auto data_path = (dir / (tag + ".jsonl")).string();
            save_dataset(ds, data_path);
            const auto loaded = load_dataset(data_path);
            const auto split = split_dataset(loaded.records, 7);
            TrainConfig cfg;
            cfg.seed = 7;
            cfg.max_epochs = 15;
            ModelMetadata meta;
            meta.split_seed = 7;
            meta.dataset_hash = dataset_hash(loaded);
            auto tm = train_model(split, cfg, meta);
            const auto model_path = (dir / (tag + ".model.json")).string();
            save_model(tm.model, model_path);
            const auto ev = evaluate(tm.model, split.test);
            return std::tuple{detail::read_file(data_path), tm.model.params, detail::read_file(model_path),
                              to_json(ev).dump()};
        };
        const auto [d1, w1, m1, e1] = pipeline("run1");
        const auto [d2, w2, m2, e2] = pipeline("run2");
        fs::remove_all(dir);
        const bool ok = d1 == d2 && w1 == w2 && m1 == m2 && e1 == e2;
        return std::pair{ok, fmt("dataset %s (%zu bytes), weights %s, model file %s, evaluation %s",
                                 d1 == d2 ? "identical" : "DIFFERENT", d1.size(), w1 == w2 ? "identical" : "DIFFERENT",
                                 m1 == m2 ? "identical" : "DIFFERENT", e1 == e2 ? "identical" : "DIFFERENT")};
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
