#pragma once

// Fully connected ReLU regressor trained with Adam on mean squared error.
//
// Hidden layers are ReLU, optionally followed by inverted dropout during
// training; the output layer is linear. Weights are stored row-major as (out x in).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace dltml {

/// 16 -> 128 -> 64 -> 32 -> 1.
inline const std::vector<std::size_t> kDefaultTopology = {kNumFeatures, 128, 64, 32, 1};
inline constexpr std::size_t kDefaultParameterCount = 16 * 128 + 128 + 128 * 64 + 64 + 64 * 32 + 32 + 32 + 1;
static_assert(kDefaultParameterCount == 12545);

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;  // out * in, row-major
    std::vector<double> bias;    // out

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim)
        : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

    double& w(std::size_t o, std::size_t i) { return weight[o * in + i]; }
    double w(std::size_t o, std::size_t i) const { return weight[o * in + i]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Weights and biases of every layer. Also used for gradients and Adam
/// moments, which share the shape.
struct MlpParams {
    std::vector<DenseLayer> layers;

    static MlpParams zeros(std::span<const std::size_t> topology) {
        if (topology.size() < 2) throw InvalidInput("topology needs an input and an output width");
        MlpParams p;
        for (std::size_t k = 0; k + 1 < topology.size(); ++k) {
            if (topology[k] == 0 || topology[k + 1] == 0) throw InvalidInput("layer widths must be positive");
            p.layers.emplace_back(topology[k], topology[k + 1]);
        }
        return p;
    }

    static MlpParams zeros_like(const MlpParams& other) { return zeros(other.topology()); }

    std::vector<std::size_t> topology() const {
        std::vector<std::size_t> t;
        if (layers.empty()) return t;
        t.push_back(layers.front().in);
        for (const auto& l : layers) t.push_back(l.out);
        return t;
    }

    std::size_t input_dim() const { return layers.front().in; }

    std::size_t parameter_count() const {
        std::size_t c = 0;
        for (const auto& l : layers) c += l.weight.size() + l.bias.size();
        return c;
    }

    /// Flat access in (W1, b1, W2, b2, ...) order.
    double& operator[](std::size_t idx) {
        for (auto& l : layers) {
            if (idx < l.weight.size()) return l.weight[idx];
            idx -= l.weight.size();
            if (idx < l.bias.size()) return l.bias[idx];
            idx -= l.bias.size();
        }
        throw InvalidInput("parameter index out of range");
    }
    double operator[](std::size_t idx) const { return const_cast<MlpParams&>(*this)[idx]; }

    template <typename F>
    void for_each_tensor(F&& f) {
        for (auto& l : layers) {
            f(std::span<double>(l.weight));
            f(std::span<double>(l.bias));
        }
    }

    bool all_finite() const {
        for (const auto& l : layers) {
            for (double v : l.weight) if (!std::isfinite(v)) return false;
            for (double v : l.bias) if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// He-uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in)), variance 2/fan_in. Zero biases.
inline MlpParams init_params(std::uint64_t seed, std::span<const std::size_t> topology = kDefaultTopology) {
    auto p = MlpParams::zeros(topology);
    Rng rng(seed);
    for (auto& l : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in));
        for (double& v : l.weight) v = rng.uniform(-limit, limit);
    }
    return p;
}

struct Dropout {
    double p = 0.0;
    Rng* rng = nullptr;
    // Only the first `layers` hidden layers are dropped.
    std::size_t layers = std::numeric_limits<std::size_t>::max();
};

/// Activations kept by a batched forward pass for the matching backward pass.
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> act;   // act[0] = inputs; act[k] = output of layer k
    std::vector<std::vector<double>> pre;   // pre[k] = pre-activation of layer k+1
    std::vector<std::vector<double>> mask;  // per hidden layer: 0 or 1/(1-p); empty when dropout is off
    std::vector<std::vector<double>> weight_t;

    std::span<const double> predictions() const { return act.back(); }
};

/// Batched forward pass over row-major inputs (batch x in). With `dropout`
/// set, each hidden unit is zeroed with probability p and survivors are
/// scaled by 1/(1-p); without it the pass is deterministic.
inline void forward(const MlpParams& params, std::span<const double> x, std::size_t batch, ForwardCache& cache,
                    const Dropout* dropout = nullptr) {
    const std::size_t num_layers = params.layers.size();
    if (x.size() != batch * params.input_dim()) throw InvalidInput("input batch has the wrong size");
    cache.batch = batch;
    cache.act.resize(num_layers + 1);
    cache.pre.resize(num_layers);
    cache.weight_t.resize(num_layers);
    const bool use_dropout = dropout != nullptr && dropout->p > 0.0;
    cache.mask.resize(use_dropout ? num_layers - 1 : 0);
    cache.act[0].assign(x.begin(), x.end());

    for (std::size_t k = 0; k < num_layers; ++k) {
        const auto& layer = params.layers[k];
        auto& wt = cache.weight_t[k];
        wt.resize(layer.in * layer.out);
        for (std::size_t o = 0; o < layer.out; ++o)
            for (std::size_t i = 0; i < layer.in; ++i) wt[i * layer.out + o] = layer.w(o, i);

        const auto& input = cache.act[k];
        auto& pre = cache.pre[k];
        pre.resize(batch * layer.out);
        for (std::size_t b = 0; b < batch; ++b) {
            double* out_row = pre.data() + b * layer.out;
            std::copy(layer.bias.begin(), layer.bias.end(), out_row);
            const double* in_row = input.data() + b * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) {
                const double a = in_row[i];
                const double* wrow = wt.data() + i * layer.out;
                for (std::size_t o = 0; o < layer.out; ++o) out_row[o] += wrow[o] * a;
            }
        }

        auto& act = cache.act[k + 1];
        if (k + 1 == num_layers) {
            act = pre;
            break;
        }
        act.resize(pre.size());
        for (std::size_t j = 0; j < pre.size(); ++j) act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
        if (use_dropout) {
            auto& mask = cache.mask[k];
            if (k >= dropout->layers) {
                mask.assign(pre.size(), 1.0);
                continue;
            }
            mask.resize(pre.size());
            const double keep_scale = 1.0 / (1.0 - dropout->p);
            for (std::size_t j = 0; j < mask.size(); ++j) {
                mask[j] = dropout->rng->uniform01() < dropout->p ? 0.0 : keep_scale;
                act[j] *= mask[j];
            }
        }
    }
}

/// Single-sample inference.
inline double forward(const MlpParams& params, std::span<const double> x) {
    if (x.size() != params.input_dim()) throw InvalidInput("input has the wrong size");
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const auto& layer = params.layers[k];
        next.assign(layer.bias.begin(), layer.bias.end());
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* wrow = layer.weight.data() + o * layer.in;
            double acc = 0.0;
            for (std::size_t i = 0; i < layer.in; ++i) acc += wrow[i] * cur[i];
            next[o] += acc;
        }
        if (k + 1 < params.layers.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        cur.swap(next);
    }
    return cur[0];
}

/// Mean of squared residuals.
inline double loss_mse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw InvalidInput("predictions and targets differ in length");
    if (predictions.empty()) throw InvalidInput("loss of an empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = predictions[i] - targets[i];
        acc += r * r;
    }
    return acc / static_cast<double>(predictions.size());
}

/// Gradient of the batch MSE, mean((pred - target)^2), given the residuals
/// pred - target. Dropout masks recorded in `cache` are honoured. `grads`
/// is overwritten. Returns d loss / d input (batch x in) when `input_grad`
/// is non-null.
inline void backward(const MlpParams& params, const ForwardCache& cache, std::span<const double> residuals,
                     MlpParams& grads, std::vector<double>* input_grad = nullptr) {
    const std::size_t batch = cache.batch;
    if (residuals.size() != batch) throw InvalidInput("residual count does not match the batch");
    if (grads.topology() != params.topology()) grads = MlpParams::zeros_like(params);

    const std::size_t num_layers = params.layers.size();
    std::vector<double> delta(batch);
    const double scale = 2.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) delta[b] = scale * residuals[b];

    std::vector<double> delta_prev;
    for (std::size_t k = num_layers; k-- > 0;) {
        const auto& layer = params.layers[k];
        auto& g = grads.layers[k];
        std::fill(g.weight.begin(), g.weight.end(), 0.0);
        std::fill(g.bias.begin(), g.bias.end(), 0.0);
        const auto& input = cache.act[k];

        for (std::size_t b = 0; b < batch; ++b) {
            const double* in_row = input.data() + b * layer.in;
            const double* d_row = delta.data() + b * layer.out;
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double d = d_row[o];
                g.bias[o] += d;
                if (d == 0.0) continue;
                double* grow = g.weight.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * in_row[i];
            }
        }

        if (k == 0 && input_grad == nullptr) break;

        delta_prev.assign(batch * layer.in, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* d_row = delta.data() + b * layer.out;
            double* p_row = delta_prev.data() + b * layer.in;
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double d = d_row[o];
                if (d == 0.0) continue;
                const double* wrow = layer.weight.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) p_row[i] += d * wrow[i];
            }
        }
        if (k == 0) {
            *input_grad = std::move(delta_prev);
            break;
        }
        // Through dropout and the ReLU of hidden layer k.
        const auto& pre = cache.pre[k - 1];
        const bool masked = !cache.mask.empty();
        for (std::size_t j = 0; j < delta_prev.size(); ++j) {
            double d = pre[j] > 0.0 ? delta_prev[j] : 0.0;
            if (masked) d *= cache.mask[k - 1][j];
            delta_prev[j] = d;
        }
        delta.swap(delta_prev);
    }
}

/// d prediction / d input for one sample, inference mode.
inline std::vector<double> input_gradient(const MlpParams& params, std::span<const double> x) {
    ForwardCache cache;
    forward(params, x, 1, cache);
    MlpParams grads;
    std::vector<double> gx;
    // backward() differentiates mean((pred - t)^2); residual 1/2 turns that
    // into d pred.
    const double half = 0.5;
    backward(params, cache, std::span<const double>(&half, 1), grads, &gx);
    return gx;
}

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    MlpParams m;
    MlpParams v;
    std::uint64_t t = 0;

    static AdamState for_params(const MlpParams& p) { return {MlpParams::zeros_like(p), MlpParams::zeros_like(p), 0}; }
};

/// One bias-corrected Adam update.
inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, const AdamConfig& cfg = {}) {
    if (grads.topology() != params.topology()) throw InvalidInput("gradient shape does not match parameters");
    if (state.m.topology() != params.topology()) state = AdamState::for_params(params);
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    };
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto& p = params.layers[k];
        const auto& g = grads.layers[k];
        update(p.weight, g.weight, state.m.layers[k].weight, state.v.layers[k].weight);
        update(p.bias, g.bias, state.m.layers[k].bias, state.v.layers[k].bias);
    }
}

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 256;
    double dropout_p = 0.2;
    /// Number of leading hidden layers that get dropout. Dropping units right
    /// before the linear output adds noise the regressor cannot average out,
    /// so by default only the first hidden layer is regularized.
    std::size_t dropout_layers = 1;
    std::size_t patience = 10;
    std::size_t max_epochs = 200;
    std::uint64_t seed = 0;
    std::vector<std::size_t> topology = kDefaultTopology;
    /// Reduce-on-plateau: multiply the learning rate by `lr_decay_factor`
    /// after `lr_decay_patience` epochs without a new best validation loss.
    /// A patience of 0 keeps the rate constant.
    double lr_decay_factor = 0.5;
    std::size_t lr_decay_patience = 0;
    double min_learning_rate = 1e-6;
    /// Called after every epoch with (epoch, train loss, val loss); optional.
    std::function<void(std::size_t, double, double)> on_epoch;

    void validate() const {
        if (!(learning_rate > 0.0) || batch_size < 1 || !(dropout_p >= 0.0 && dropout_p < 1.0) || patience < 1 ||
            max_epochs < 1 || !(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0) || !(min_learning_rate > 0.0))
            throw InvalidInput("invalid training configuration");
    }
};

struct TrainReport {
    std::size_t epochs_run = 0;
    std::vector<double> train_loss;  // normalized-space MSE, one per epoch
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;      // 1-based
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
    double seconds = 0.0;
};

struct TrainOutcome {
    MlpParams params;
    TrainReport report;
};

/// Infer-mode MSE over a whole set, in batches.
inline double evaluate_mse(const MlpParams& params, const NormalizedSet& set, std::size_t batch_size = 1024) {
    ForwardCache cache;
    double acc = 0.0;
    const std::size_t d = params.input_dim();
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        const std::size_t b = std::min(batch_size, set.size() - start);
        forward(params, std::span<const double>(set.x).subspan(start * d, b * d), b, cache);
        const auto pred = cache.predictions();
        for (std::size_t i = 0; i < b; ++i) {
            const double r = pred[i] - set.y[start + i];
            acc += r * r;
        }
    }
    return acc / static_cast<double>(set.size());
}

/// Mini-batch Adam with per-epoch reshuffling and early stopping on the
/// validation loss. Returns the parameters of the best validation epoch.
inline TrainOutcome train(const NormalizedSet& train_set, const NormalizedSet& val_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0) throw InvalidInput("training and validation sets must be nonempty");
    const auto start_time = std::chrono::steady_clock::now();

    TrainOutcome out;
    MlpParams params = init_params(derive_seed(cfg.seed, 0), cfg.topology);
    if (params.input_dim() * train_set.size() != train_set.x.size() ||
        params.input_dim() * val_set.size() != val_set.x.size())
        throw InvalidInput("data width does not match the network input");
    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    Rng dropout_rng(derive_seed(cfg.seed, 2));
    const Dropout dropout{cfg.dropout_p, &dropout_rng, cfg.dropout_layers};
    AdamState adam = AdamState::for_params(params);
    AdamConfig adam_cfg{cfg.learning_rate};
    std::size_t last_decay_epoch = 0;

    const std::size_t d = params.input_dim();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> batch_x;
    std::vector<double> residuals;
    ForwardCache cache;
    MlpParams grads = MlpParams::zeros_like(params);
    out.params = params;

    auto& report = out.report;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, order.size() - start);
            batch_x.resize(b * d);
            residuals.resize(b);
            for (std::size_t r = 0; r < b; ++r) {
                const auto row = train_set.row(order[start + r]);
                std::copy(row.begin(), row.end(), batch_x.begin() + static_cast<std::ptrdiff_t>(r * d));
            }
            forward(params, batch_x, b, cache, &dropout);
            const auto pred = cache.predictions();
            for (std::size_t r = 0; r < b; ++r) {
                residuals[r] = pred[r] - train_set.y[order[start + r]];
                epoch_loss += residuals[r] * residuals[r];
            }
            backward(params, cache, residuals, grads);
            adam_step(params, grads, adam, adam_cfg);
        }
        epoch_loss /= static_cast<double>(order.size());
        const double val_loss = evaluate_mse(params, val_set);
        report.epochs_run = epoch;
        report.train_loss.push_back(epoch_loss);
        report.val_loss.push_back(val_loss);
        if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss) || !params.all_finite())
            throw TrainingDiverged(epoch, "loss is not finite");
        if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss, val_loss);

        if (val_loss < report.best_val_loss) {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            out.params = params;
        } else if (epoch - report.best_epoch >= cfg.patience) {
            report.stopped_early = true;
            break;
        } else if (cfg.lr_decay_patience > 0 &&
                   epoch - std::max(report.best_epoch, last_decay_epoch) >= cfg.lr_decay_patience) {
            adam_cfg.learning_rate = std::max(cfg.min_learning_rate, adam_cfg.learning_rate * cfg.lr_decay_factor);
            last_decay_epoch = epoch;
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return out;
}

}  // namespace dltml
