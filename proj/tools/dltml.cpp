// dltml: exact DLT solver, dataset generator, and neural surrogate in one tool.
//
// Exit codes: 0 success, 2 usage / invalid input, 3 data errors,
// 4 numeric or training failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dltml/dltml.hpp"

using namespace dltml;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

enum class Format { Human, Machine };

struct ConfigSource {
    std::string path;
    double root_speed = 0.0;
    double load_gb = 0.0;
    std::vector<std::string> children;  // "speed:bandwidth"
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw InvalidInput(where + ": '" + text + "' is not a number");
    }
    if (trim(text.substr(used)) != "") throw InvalidInput(where + ": '" + text + "' is not a number");
    return v;
}

// Key-value format, one entry per line:
//   root_speed = 10        (GFLOPS/s)
//   load_gb = 25
//   child = 5 100          (speed GFLOPS/s, bandwidth MB/s; repeat per child)
//   n = 2                  (optional cross-check)
SltnConfig parse_config_text(const std::string& text, const std::string& name) {
    SltnConfig c;
    bool have_root = false, have_load = false;
    std::optional<std::size_t> declared_n;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidInput(where + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key == "root_speed") {
            c.root_speed = parse_number(value, where);
            have_root = true;
        } else if (key == "load_gb") {
            c.load_gb = parse_number(value, where);
            have_load = true;
        } else if (key == "child") {
            std::istringstream parts(value);
            std::string speed, bw, extra;
            if (!(parts >> speed >> bw) || (parts >> extra))
                throw InvalidInput(where + ": child needs exactly 'speed bandwidth'");
            c.child_speeds.push_back(parse_number(speed, where));
            c.link_bandwidths.push_back(parse_number(bw, where));
        } else if (key == "n") {
            const double n = parse_number(value, where);
            if (n < 1 || n != static_cast<double>(static_cast<std::size_t>(n)))
                throw InvalidInput(where + ": n must be a positive integer");
            declared_n = static_cast<std::size_t>(n);
        } else {
            throw InvalidInput(where + ": unknown key '" + key + "'");
        }
    }
    if (!have_root) throw InvalidInput(name + ": missing root_speed");
    if (!have_load) throw InvalidInput(name + ": missing load_gb");
    if (declared_n && *declared_n != c.n())
        throw InvalidInput(name + ": n = " + std::to_string(*declared_n) + " but " + std::to_string(c.n()) +
                           " child entries");
    validate(c);
    return c;
}

SltnConfig load_config(const ConfigSource& src) {
    if (!src.path.empty()) {
        std::ifstream in(src.path);
        if (!in) throw InvalidInput("cannot open config file " + src.path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_config_text(ss.str(), src.path);
    }
    if (src.children.empty()) throw InvalidInput("give --config FILE or --root-speed, --load and at least one --child");
    SltnConfig c;
    c.root_speed = src.root_speed;
    c.load_gb = src.load_gb;
    for (const auto& ch : src.children) {
        const auto colon = ch.find(':');
        if (colon == std::string::npos) throw InvalidInput("--child expects SPEED:BANDWIDTH, got '" + ch + "'");
        c.child_speeds.push_back(parse_number(ch.substr(0, colon), "--child"));
        c.link_bandwidths.push_back(parse_number(ch.substr(colon + 1), "--child"));
    }
    validate(c);
    return c;
}

void add_config_options(CLI::App* cmd, ConfigSource& src) {
    auto* file = cmd->add_option("--config,-c", src.path, "Configuration file (key = value lines)");
    auto* root = cmd->add_option("--root-speed", src.root_speed, "Root speed, GFLOPS/s");
    auto* load = cmd->add_option("--load", src.load_gb, "Load, GB");
    auto* child = cmd->add_option("--child", src.children, "Child as SPEED:BANDWIDTH (GFLOPS/s:MB/s), repeatable");
    file->excludes(root)->excludes(load)->excludes(child);
    root->needs(load)->needs(child);
    load->needs(root);
    child->needs(root);
}

std::string fixed9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

void print_line(const json& j) { std::cout << j.dump() << "\n"; }

// ---- solve ----------------------------------------------------------------

int cmd_solve(const ConfigSource& src, double intensity, const std::string& order_name, Format fmt) {
    const auto order = parse_distribution_order(order_name);
    const auto config = sequence_children(load_config(src), order);
    const auto rates = to_time_rates(config, intensity);
    const auto alloc = solve_optimal(rates, config.load_gb);
    const auto profile = simulate_timeline(rates, alloc, config.load_gb);

    if (fmt == Format::Machine) {
        print_line({{"alpha", alloc.alpha},
                    {"t_star", alloc.t_star},
                    {"t_star_norm", alloc.t_star_norm},
                    {"comm_finish", profile.comm_finish},
                    {"compute_finish", profile.compute_finish},
                    {"order", to_string(order)},
                    {"n", config.n()}});
        return 0;
    }
    std::cout << "n = " << config.n() << ", load = " << config.load_gb << " GB, compute intensity = " << intensity
              << " GFLOP/GB, order = " << to_string(order) << "\n";
    std::cout << "T* = " << fixed9(alloc.t_star) << " s (" << fixed9(alloc.t_star_norm) << " s/GB)\n";
    std::cout << "alpha:";
    for (double a : alloc.alpha) std::cout << ' ' << fixed9(a);
    std::cout << "\n\nprocessor  speed     bandwidth  alpha        comm_done_s      finish_s\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "root       %-9g %-10s %.9f  %-16s %.9f\n", config.root_speed, "-", alloc.alpha[0],
                  "-", profile.compute_finish[0]);
    std::cout << buf;
    for (std::size_t i = 0; i < config.n(); ++i) {
        std::snprintf(buf, sizeof buf, "child %-4zu %-9g %-10g %.9f  %-16.9f %.9f\n", i + 1, config.child_speeds[i],
                      config.link_bandwidths[i], alloc.alpha[i + 1], profile.comm_finish[i],
                      profile.compute_finish[i + 1]);
        std::cout << buf;
    }
    return 0;
}

// ---- generate -------------------------------------------------------------

int cmd_generate(std::size_t count, std::uint64_t seed, const std::string& out, double intensity,
                 const std::string& order_name, const SamplerRanges& ranges, Format fmt) {
    const auto order = parse_distribution_order(order_name);
    std::cerr << "generating " << count << " records (seed " << seed << ")\n";
    const auto ds = make_dataset(count, seed, ranges, intensity, order);
    save_dataset(ds, out);
    const auto hash = dataset_hash(ds);
    if (fmt == Format::Machine)
        print_line({{"path", out}, {"count", count}, {"seed", seed}, {"dataset_hash", hash}});
    else
        std::cout << "wrote " << count << " records to " << out << " (hash " << hash << ")\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

DatasetSplit split_or_data_error(const Dataset& ds, std::uint64_t seed) {
    try {
        return split_dataset(ds.records, seed);
    } catch (const InvalidInput& e) {
        throw DataError(e.what());
    }
}

struct TrainOptions {
    std::string data, out, stats_out;
    std::uint64_t seed = 42;
    std::optional<std::uint64_t> split_seed;
    TrainConfig cfg;
};

int cmd_train(TrainOptions opt, Format fmt) {
    const auto ds = load_dataset(opt.data);
    const std::uint64_t split_seed = opt.split_seed.value_or(ds.header.seed);
    const auto split = split_or_data_error(ds, split_seed);
    std::cerr << "split " << split.train.size() << "/" << split.val.size() << "/" << split.test.size()
              << " (seed " << split_seed << ")\n";

    opt.cfg.seed = opt.seed;
    opt.cfg.on_epoch = [](std::size_t epoch, double tl, double vl) {
        std::fprintf(stderr, "epoch %3zu  train %.6f  val %.6f\n", epoch, tl, vl);
    };
    ModelMetadata meta;
    meta.split_seed = split_seed;
    meta.dataset_hash = dataset_hash(ds);
    meta.compute_intensity = ds.header.compute_intensity;
    meta.order = ds.header.order;
    const auto tm = train_model(split, opt.cfg, meta);
    save_model(tm.model, opt.out);
    if (!opt.stats_out.empty()) save_stats(tm.model.norm, opt.stats_out);

    const auto& r = tm.report;
    const auto val = evaluate(tm.model, split.val).metrics;
    if (fmt == Format::Machine) {
        print_line({{"model", opt.out},
                    {"epochs_run", r.epochs_run},
                    {"best_epoch", r.best_epoch},
                    {"best_val_loss", r.best_val_loss},
                    {"stopped_early", r.stopped_early},
                    {"seconds", r.seconds},
                    {"val_metrics", to_json(val)}});
    } else {
        std::printf("trained %zu epochs (%s), best epoch %zu, val loss %.6g, %.1f s\n", r.epochs_run,
                    r.stopped_early ? "early stop" : "epoch cap", r.best_epoch, r.best_val_loss, r.seconds);
        std::printf("validation: R2 %.4f  MAE %.2f s  RMSE %.2f s  MAPE %.2f%%\n", val.r2.value_or(NAN), val.mae,
                    val.rmse, val.mape);
        std::printf("model written to %s\n", opt.out.c_str());
    }
    return 0;
}

// ---- evaluate -------------------------------------------------------------

void check_compatible(const MlpModel& model, const Dataset& ds) {
    if (ds.header.compute_intensity != model.meta.compute_intensity)
        throw DataError("dataset compute intensity " + std::to_string(ds.header.compute_intensity) +
                        " differs from the model's " + std::to_string(model.meta.compute_intensity));
    if (ds.header.order != model.meta.order)
        throw DataError(std::string("dataset labels use order '") + to_string(ds.header.order) + "', model expects '" +
                        to_string(model.meta.order) + "'");
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path, const std::string& split_name,
                 const std::string& out_dir, Format fmt) {
    const auto model = load_model(model_path);
    const auto ds = load_dataset(data_path);
    check_compatible(model, ds);
    if (dataset_hash(ds) != model.meta.dataset_hash && split_name != "all")
        std::cerr << "warning: dataset differs from the one the model was trained on\n";

    std::vector<DatasetRecord> records;
    if (split_name == "all") {
        records = ds.records;
    } else {
        auto split = split_or_data_error(ds, model.meta.split_seed);
        records = split_name == "train" ? std::move(split.train)
                  : split_name == "val" ? std::move(split.val)
                                        : std::move(split.test);
    }
    std::cerr << "evaluating " << records.size() << " records (" << split_name << ")\n";
    const auto result = evaluate(model, records);

    json report = to_json(result);
    report["split"] = split_name;
    report["model"] = model_path;
    report["dataset_hash"] = dataset_hash(ds);
    if (!out_dir.empty()) {
        const auto files = emit_plot_data(result, out_dir);
        detail::write_file((std::filesystem::path(out_dir) / "report.json").string(), report.dump(2) + "\n");
        std::cerr << "wrote report.json and " << files.size() << " tables to " << out_dir << "\n";
    }

    const auto& m = result.metrics;
    if (fmt == Format::Machine) {
        print_line(report);
        return 0;
    }
    std::printf("%s split, %zu samples\n", split_name.c_str(), m.count);
    std::printf("R2 %.4f  MAE %.2f s  RMSE %.2f s  MAPE %.2f%%\n", m.r2.value_or(NAN), m.mae, m.rmse, m.mape);
    std::printf("within +-50 s: %.1f%%  within +-100 s: %.1f%%  within 10%%: %.1f%%  max over-prediction %.1f s\n",
                100 * result.residuals.share_within_50s, 100 * result.residuals.share_within_100s,
                100 * result.residuals.share_pct_within_10, result.residuals.max_over_prediction);
    for (const auto* rep : {&result.by_n, &result.by_load, &result.by_heterogeneity}) {
        std::printf("\n%-10s %7s %12s %12s\n", to_string(rep->scheme), "count", "median_%err", "p90_%err");
        for (const auto& b : rep->buckets) {
            if (b.count == 0)
                std::printf("%-10s %7zu %12s %12s\n", b.label.c_str(), b.count, "-", "-");
            else
                std::printf("%-10s %7zu %12.2f %12.2f\n", b.label.c_str(), b.count, b.median_pct_error,
                            b.p90_pct_error);
        }
    }
    std::printf("\nfeature importance (mean |d prediction / d input|):\n");
    for (const auto& f : result.importance) std::printf("  %-16s %.4f\n", f.feature.c_str(), f.importance);
    return 0;
}

// ---- predict / hybrid -----------------------------------------------------

int cmd_predict(const std::string& model_path, const ConfigSource& src, Format fmt) {
    const auto model = load_model(model_path);
    const auto config = load_config(src);
    const double t = predict(model, config);
    if (fmt == Format::Machine)
        print_line({{"t_star", t}, {"source", "ml"}});
    else
        std::cout << "predicted T* = " << fixed9(t) << " s\n";
    return 0;
}

int cmd_hybrid(const std::string& model_path, const ConfigSource& src, const HybridOptions& opts, Format fmt) {
    const auto model = load_model(model_path);
    const auto config = load_config(src);
    const auto d = hybrid_predict(model, config, opts);
    if (fmt == Format::Machine) {
        print_line({{"t_star", d.t_star}, {"source", to_string(d.source)}, {"ml_estimate", d.ml_estimate},
                    {"threshold", d.threshold}});
    } else {
        std::cout << "T* = " << fixed9(d.t_star) << " s [" << to_string(d.source) << "]\n";
        std::cout << "ML estimate " << fixed9(d.ml_estimate) << " s, threshold " << d.threshold << " s\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Divisible-load scheduling: exact solver and neural surrogate"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string format_name = "human";
    app.add_option("--format", format_name, "Output format")->check(CLI::IsMember({"human", "machine"}));

    double intensity = kDefaultComputeIntensity;
    ConfigSource src;

    auto* solve = app.add_subcommand("solve", "Optimal load split for one configuration");
    add_config_options(solve, src);
    std::string solve_order = "given";
    solve->add_option("--compute-intensity", intensity, "GFLOP per GB of load")->capture_default_str();
    solve->add_option("--order", solve_order, "Child sequence: given | decreasing-bandwidth")->capture_default_str();
    solve->callback([&] {
        if (src.path.empty() && src.children.empty()) throw CLI::RequiredError("--config");
    });

    auto* gen = app.add_subcommand("generate", "Generate a labelled dataset");
    std::size_t count = 0;
    std::uint64_t seed = 42;
    std::string out;
    std::string gen_order = to_string(kDefaultLabelOrder);
    SamplerRanges ranges;
    gen->add_option("--count", count, "Number of records")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "Random seed")->capture_default_str();
    gen->add_option("--out,-o", out, "Output dataset file")->required();
    gen->add_option("--compute-intensity", intensity, "GFLOP per GB of load")->capture_default_str();
    gen->add_option("--order", gen_order, "Child sequence used for labels")->capture_default_str();
    gen->add_option("--n-min", ranges.n_min)->capture_default_str();
    gen->add_option("--n-max", ranges.n_max)->capture_default_str();
    gen->add_option("--load-min", ranges.load_min)->capture_default_str();
    gen->add_option("--load-max", ranges.load_max)->capture_default_str();

    auto* tr = app.add_subcommand("train", "Train the surrogate on a dataset");
    TrainOptions topt;
    std::uint64_t split_seed = 0;
    tr->add_option("--data,-d", topt.data, "Dataset file")->required();
    tr->add_option("--out,-o", topt.out, "Model file to write")->required();
    tr->add_option("--seed", topt.seed, "Training seed")->capture_default_str();
    auto* split_opt = tr->add_option("--split-seed", split_seed, "Split seed (default: the dataset seed)");
    tr->add_option("--stats-out", topt.stats_out, "Also write normalization statistics here");
    tr->add_option("--max-epochs", topt.cfg.max_epochs)->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--patience", topt.cfg.patience)->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--learning-rate", topt.cfg.learning_rate)->capture_default_str();
    tr->add_option("--batch-size", topt.cfg.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--dropout", topt.cfg.dropout_p)->capture_default_str();
    tr->add_option("--dropout-layers", topt.cfg.dropout_layers, "Hidden layers (from the input) that get dropout")
        ->capture_default_str();
    tr->add_option("--lr-decay-patience", topt.cfg.lr_decay_patience, "Halve the rate after this many flat epochs; 0 = off")
        ->capture_default_str();

    auto* ev = app.add_subcommand("evaluate", "Evaluate a model and write report tables");
    std::string model_path, data_path, eval_split = "test", eval_out;
    ev->add_option("--model,-m", model_path, "Model file")->required();
    ev->add_option("--data,-d", data_path, "Dataset file")->required();
    ev->add_option("--split", eval_split, "Which part of the dataset to score")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    ev->add_option("--out,-o", eval_out, "Directory for report.json and plot tables");

    auto* pr = app.add_subcommand("predict", "Surrogate estimate of T* for one configuration");
    pr->add_option("--model,-m", model_path, "Model file")->required();
    add_config_options(pr, src);

    auto* hy = app.add_subcommand("hybrid", "Surrogate estimate, verified exactly above a threshold");
    HybridOptions hopt;
    double trigger = 0.0;
    hy->add_option("--model,-m", model_path, "Model file")->required();
    add_config_options(hy, src);
    hy->add_option("--threshold", hopt.threshold, "Verify estimates above this many seconds")->capture_default_str();
    auto* trig = hy->add_option("--heterogeneity-trigger", trigger, "Also verify when max/min child speed exceeds this");

    for (auto* cmd : {pr, hy})
        cmd->callback([&] {
            if (src.path.empty() && src.children.empty()) throw CLI::RequiredError("--config");
        });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0) std::cerr << "\n" << app.help();
        return code == 0 ? 0 : kExitUsage;
    }

    const Format fmt = format_name == "machine" ? Format::Machine : Format::Human;
    try {
        if (*solve) return cmd_solve(src, intensity, solve_order, fmt);
        if (*gen) return cmd_generate(count, seed, out, intensity, gen_order, ranges, fmt);
        if (*tr) {
            if (*split_opt) topt.split_seed = split_seed;
            return cmd_train(topt, fmt);
        }
        if (*ev) return cmd_evaluate(model_path, data_path, eval_split, eval_out, fmt);
        if (*pr) return cmd_predict(model_path, src, fmt);
        if (*hy) {
            if (*trig) hopt.heterogeneity_trigger = trigger;
            return cmd_hybrid(model_path, src, hopt, fmt);
        }
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: training diverged at epoch " << e.epoch() << ": " << e.what() << "\n";
        return kExitNumeric;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
