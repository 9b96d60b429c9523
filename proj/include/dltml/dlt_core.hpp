#pragma once

// Exact divisible-load scheduling on a single-level tree: a root P0 that
// computes its own share while sending load fractions to children P1..Pn one
// at a time over dedicated links. Every processor has a front-end, so the
// root computes during all transmissions and children start computing as
// soon as their fraction has arrived.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace dltml {

/// Default compute work per gigabyte of load, GFLOP/GB.
inline constexpr double kDefaultComputeIntensity = 100.0;

/// Megabytes per gigabyte used when turning MB/s into s/GB.
inline constexpr double kMegabytesPerGigabyte = 1000.0;

/// Raw system description in physical units.
struct SltnConfig {
    double root_speed = 0.0;               // GFLOPS/s
    std::vector<double> child_speeds;      // GFLOPS/s, one per child
    std::vector<double> link_bandwidths;   // MB/s, one per child
    double load_gb = 0.0;

    std::size_t n() const noexcept { return child_speeds.size(); }

    friend bool operator==(const SltnConfig&, const SltnConfig&) = default;
};

/// Per-GB time costs. `w0` is the root; `w[i]`, `z[i]` belong to child i+1.
struct TimeRates {
    double w0 = 0.0;
    std::vector<double> w;  // s/GB compute
    std::vector<double> z;  // s/GB transmission

    std::size_t n() const noexcept { return w.size(); }
};

struct LoadAllocation {
    std::vector<double> alpha;  // n+1 fractions, alpha[0] is the root
    double t_star_norm = 0.0;   // s/GB
    double t_star = 0.0;        // s
};

struct TimingProfile {
    std::vector<double> comm_finish;     // C_1..C_n, s
    std::vector<double> compute_finish;  // T_0..T_n, s

    double makespan() const { return *std::max_element(compute_finish.begin(), compute_finish.end()); }
};

namespace detail {

inline bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidInput(msg);
}

}  // namespace detail

inline void validate(const SltnConfig& config) {
    using detail::positive_finite;
    using detail::require;
    require(config.n() >= 1, "configuration needs at least one child processor");
    require(config.link_bandwidths.size() == config.n(),
            "child_speeds and link_bandwidths must have the same length");
    require(positive_finite(config.root_speed), "root speed must be positive");
    require(positive_finite(config.load_gb), "load must be positive");
    for (double s : config.child_speeds) require(positive_finite(s), "child speeds must be positive");
    for (double b : config.link_bandwidths) require(positive_finite(b), "link bandwidths must be positive");
}

inline void validate(const TimeRates& rates) {
    using detail::positive_finite;
    using detail::require;
    require(rates.n() >= 1, "time rates need at least one child");
    require(rates.z.size() == rates.n(), "w and z must have the same length");
    require(positive_finite(rates.w0), "w0 must be positive and finite");
    for (double v : rates.w) require(positive_finite(v), "w entries must be positive and finite");
    // A free link (z = 0) is allowed; beta stays positive because w > 0.
    for (double v : rates.z) require(std::isfinite(v) && v >= 0.0, "z entries must be non-negative and finite");
}

/// w = intensity / speed (s/GB), z = 1000 / bandwidth (s/GB).
inline TimeRates to_time_rates(const SltnConfig& config,
                               double compute_intensity = kDefaultComputeIntensity) {
    validate(config);
    detail::require(detail::positive_finite(compute_intensity), "compute intensity must be positive");
    TimeRates rates;
    rates.w0 = compute_intensity / config.root_speed;
    rates.w.reserve(config.n());
    rates.z.reserve(config.n());
    for (std::size_t i = 0; i < config.n(); ++i) {
        rates.w.push_back(compute_intensity / config.child_speeds[i]);
        rates.z.push_back(kMegabytesPerGigabyte / config.link_bandwidths[i]);
    }
    return rates;
}

/// beta_i = (z_i + w_i) / w_{i-1} for i = 1..n; returned 0-based.
inline std::vector<double> beta_coefficients(const TimeRates& rates) {
    validate(rates);
    std::vector<double> betas(rates.n());
    double prev_w = rates.w0;
    for (std::size_t i = 0; i < rates.n(); ++i) {
        betas[i] = (rates.z[i] + rates.w[i]) / prev_w;
        prev_w = rates.w[i];
    }
    return betas;
}

/// Suffix products S_0..S_n with S_n = 1 and S_i = beta_{i+1} * S_{i+1}.
/// `betas[k]` holds beta_{k+1}.
inline std::vector<double> cumulative_products(std::span<const double> betas) {
    detail::require(!betas.empty(), "betas must be nonempty");
    for (double b : betas) detail::require(detail::positive_finite(b), "betas must be positive");
    const std::size_t n = betas.size();
    std::vector<double> s(n + 1);
    s[n] = 1.0;
    for (std::size_t i = n; i-- > 0;) s[i] = s[i + 1] * betas[i];
    return s;
}

/// Same suffix products as natural logarithms.
inline std::vector<double> log_cumulative_products(std::span<const double> betas) {
    detail::require(!betas.empty(), "betas must be nonempty");
    const std::size_t n = betas.size();
    std::vector<double> log_s(n + 1);
    log_s[n] = 0.0;
    for (std::size_t i = n; i-- > 0;) log_s[i] = log_s[i + 1] + std::log(betas[i]);
    return log_s;
}

namespace detail {

inline void check_allocation(const LoadAllocation& alloc) {
    if (!std::isfinite(alloc.t_star_norm) || !(alloc.t_star_norm > 0.0))
        throw NumericError("optimal time is not a positive finite number");
    for (double a : alloc.alpha) {
        if (!std::isfinite(a)) throw NumericError("load fraction overflowed");
        if (!(a > 0.0)) throw NumericError("load fraction underflowed to zero");
    }
}

}  // namespace detail

/// Closed-form optimum: alpha_i = S_i / sum S_j, T* = w0 * S_0 / sum S_j.
///
/// Products are formed in log space once they can get large (n > 12 or any
/// beta > 10). The common shift cancels in the ratio.
inline LoadAllocation solve_optimal(const TimeRates& rates, double load_gb) {
    detail::require(detail::positive_finite(load_gb), "load must be positive");
    const auto betas = beta_coefficients(rates);
    const bool use_logs =
        rates.n() > 12 || std::any_of(betas.begin(), betas.end(), [](double b) { return b > 10.0; });

    LoadAllocation out;
    out.alpha.resize(rates.n() + 1);
    if (use_logs) {
        const auto log_s = log_cumulative_products(betas);
        const double shift = *std::max_element(log_s.begin(), log_s.end());
        double total = 0.0;
        for (std::size_t i = 0; i < log_s.size(); ++i) {
            out.alpha[i] = std::exp(log_s[i] - shift);
            total += out.alpha[i];
        }
        for (double& a : out.alpha) a /= total;
    } else {
        const auto s = cumulative_products(betas);
        const double total = std::accumulate(s.begin(), s.end(), 0.0);
        if (!std::isfinite(total)) throw NumericError("suffix products overflowed");
        for (std::size_t i = 0; i < s.size(); ++i) out.alpha[i] = s[i] / total;
    }
    out.t_star_norm = rates.w0 * out.alpha[0];
    out.t_star = out.t_star_norm * load_gb;
    detail::check_allocation(out);
    return out;
}

/// Finish instants for any allocation, optimal or not.
inline TimingProfile simulate_timeline(const TimeRates& rates, std::span<const double> alpha,
                                       double load_gb) {
    validate(rates);
    if (alpha.size() != rates.n() + 1)
        throw InvalidInput("allocation has " + std::to_string(alpha.size()) + " fractions, expected " +
                           std::to_string(rates.n() + 1));
    TimingProfile p;
    p.comm_finish.resize(rates.n());
    p.compute_finish.resize(rates.n() + 1);
    p.compute_finish[0] = load_gb * alpha[0] * rates.w0;
    double sent = 0.0;
    for (std::size_t i = 0; i < rates.n(); ++i) {
        sent += alpha[i + 1] * rates.z[i];
        p.comm_finish[i] = load_gb * sent;
        p.compute_finish[i + 1] = p.comm_finish[i] + load_gb * alpha[i + 1] * rates.w[i];
    }
    return p;
}

inline TimingProfile simulate_timeline(const TimeRates& rates, const LoadAllocation& alloc, double load_gb) {
    return simulate_timeline(rates, std::span<const double>(alloc.alpha), load_gb);
}

/// Independent check on solve_optimal: solves the n equal-finish equations
///   alpha_{i-1} w_{i-1} - alpha_i (z_i + w_i) = 0,  i = 1..n
/// together with sum alpha = 1 by Gaussian elimination with partial pivoting.
inline LoadAllocation oracle_solve(const TimeRates& rates, double load_gb) {
    validate(rates);
    detail::require(detail::positive_finite(load_gb), "load must be positive");
    const std::size_t m = rates.n() + 1;
    std::vector<double> a(m * m, 0.0);
    std::vector<double> rhs(m, 0.0);
    auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * m + c]; };

    for (std::size_t i = 1; i <= rates.n(); ++i) {
        at(i - 1, i - 1) = i == 1 ? rates.w0 : rates.w[i - 2];
        at(i - 1, i) = -(rates.z[i - 1] + rates.w[i - 1]);
    }
    for (std::size_t c = 0; c < m; ++c) at(m - 1, c) = 1.0;
    rhs[m - 1] = 1.0;

    for (std::size_t col = 0; col < m; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < m; ++r)
            if (std::abs(at(r, col)) > std::abs(at(pivot, col))) pivot = r;
        if (at(pivot, col) == 0.0) throw NumericError("singular load-balance system");
        if (pivot != col) {
            for (std::size_t c = 0; c < m; ++c) std::swap(at(col, c), at(pivot, c));
            std::swap(rhs[col], rhs[pivot]);
        }
        for (std::size_t r = col + 1; r < m; ++r) {
            const double f = at(r, col) / at(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < m; ++c) at(r, c) -= f * at(col, c);
            rhs[r] -= f * rhs[col];
        }
    }

    LoadAllocation out;
    out.alpha.assign(m, 0.0);
    for (std::size_t r = m; r-- > 0;) {
        double acc = rhs[r];
        for (std::size_t c = r + 1; c < m; ++c) acc -= at(r, c) * out.alpha[c];
        out.alpha[r] = acc / at(r, r);
    }
    out.t_star_norm = rates.w0 * out.alpha[0];
    out.t_star = out.t_star_norm * load_gb;
    detail::check_allocation(out);
    return out;
}

/// Order in which the root serves its children.
///
/// `AsGiven` uses the configuration's order. `DecreasingBandwidth` serves the
/// fastest link first, which minimises T* over all sequences for this
/// front-end model, so the resulting time no longer depends on how the
/// children happen to be listed.
enum class DistributionOrder { AsGiven, DecreasingBandwidth };

inline const char* to_string(DistributionOrder o) {
    return o == DistributionOrder::AsGiven ? "given" : "decreasing-bandwidth";
}

inline DistributionOrder parse_distribution_order(const std::string& s) {
    if (s == "given") return DistributionOrder::AsGiven;
    if (s == "decreasing-bandwidth" || s == "bandwidth") return DistributionOrder::DecreasingBandwidth;
    throw InvalidInput("unknown distribution order '" + s + "' (expected given or decreasing-bandwidth)");
}

/// Children rearranged into the sequence the root will serve them in.
/// Ties keep their listed order.
inline SltnConfig sequence_children(const SltnConfig& config, DistributionOrder order) {
    if (order == DistributionOrder::AsGiven) return config;
    std::vector<std::size_t> idx(config.n());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return config.link_bandwidths[a] > config.link_bandwidths[b];
    });
    SltnConfig out = config;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        out.child_speeds[j] = config.child_speeds[idx[j]];
        out.link_bandwidths[j] = config.link_bandwidths[idx[j]];
    }
    return out;
}

/// Convenience: physical config straight to the optimum.
inline LoadAllocation solve_config(const SltnConfig& config,
                                   double compute_intensity = kDefaultComputeIntensity,
                                   DistributionOrder order = DistributionOrder::AsGiven) {
    const auto sequenced = sequence_children(config, order);
    return solve_optimal(to_time_rates(sequenced, compute_intensity), sequenced.load_gb);
}

}  // namespace dltml
