#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "speclab/matrix.hpp"
#include "speclab/parallel.hpp"
#include "speclab/rng.hpp"
#include "speclab/spectral.hpp"

namespace speclab {

struct AttentionConfig {
    std::size_t n = 64;      // sequence length
    std::size_t d = 32;      // key/query dimension
    double sigma_q = 1.0;    // std of query entries
    double sigma_k = 1.0;    // std of key entries
    double tau = 1.0;        // temperature in (0, 1]
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 1 || d < 1) throw std::invalid_argument("attention config: n and d must be >= 1");
        if (sigma_q <= 0.0 || sigma_k <= 0.0)
            throw std::invalid_argument("attention config: sigma_q and sigma_k must be positive");
        if (tau <= 0.0 || tau > 1.0)
            throw std::invalid_argument("attention config: tau must be in (0, 1]");
    }
};

struct AttentionMatrix {
    Matrix data;
    AttentionConfig config;
};

// Row softmax with temperature. The raw logits are divided by tau first and
// the per-row maximum is subtracted before exponentiation.
inline void softmax_rows(Matrix& logits, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("softmax_rows: tau must be positive");
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double* row = logits.row_ptr(i);
        const std::size_t n = logits.cols();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            row[j] /= tau;
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
}

inline Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.gaussian(stddev);
    return m;
}

// Raw logits P = Q K^T / sqrt(d) under the Gaussian sampling model.
inline Matrix sample_logits(const AttentionConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const Matrix q = gaussian_matrix(rng, config.n, config.d, config.sigma_q);
    const Matrix k = gaussian_matrix(rng, config.n, config.d, config.sigma_k);
    Matrix p = matmul_bt(q, k);
    const double inv = 1.0 / std::sqrt(static_cast<double>(config.d));
    for (auto& v : p.data()) v *= inv;
    return p;
}

inline AttentionMatrix sample_attention(const AttentionConfig& config) {
    Matrix p = sample_logits(config);
    softmax_rows(p, config.tau);
    return {std::move(p), config};
}

inline void require_row_stochastic(const Matrix& a, double tol = 1e-8) {
    if (a.rows() != a.cols()) throw std::invalid_argument("expected a square attention matrix");
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
        if (std::abs(s - 1.0) > tol)
            throw std::invalid_argument("expected a row-stochastic matrix");
    }
}

// Largest singular value of HC[A], the per-application high-frequency gain.
inline double sigma_a(const Matrix& a) {
    require_row_stochastic(a);
    return spectral_norm(hc_project(a));
}

inline double sigma_a(const AttentionMatrix& a) { return sigma_a(a.data); }

struct BoundReport {
    double lhs;
    double rhs;
    bool holds;
    double slack;      // rhs - lhs
    double tolerance;  // effective additive tolerance used for holds
};

// lhs = ||HC[A X W_V]||_F, rhs = sigma_a(A) ||W_V||_2 ||HC[X]||_F.
// holds <=> lhs <= rhs + tol * max(1, rhs).
inline BoundReport theorem2_check(const Matrix& x, const Matrix& a, const Matrix& w_v,
                                  double tolerance = 1e-9) {
    if (a.cols() != x.rows() || x.cols() != w_v.rows())
        throw std::invalid_argument("theorem2_check: shape mismatch");
    require_row_stochastic(a);
    const double lhs = frobenius_norm(hc_project(matmul(matmul(a, x), w_v)));
    const double rhs = sigma_a(a) * spectral_norm(w_v) * frobenius_norm(hc_project(x));
    const double eff_tol = tolerance * std::max(1.0, rhs);
    return {lhs, rhs, lhs <= rhs + eff_tol, rhs - lhs, eff_tol};
}

// Closed-form filter-rate level: sqrt(n / (2 sqrt(1 + e^{-2 sigma_s^2}) (n-1)^{3/2} + 1)).
inline double theorem3_bound(std::size_t n, double sigma_s) {
    if (n < 1) throw std::invalid_argument("theorem3_bound: n must be >= 1");
    if (sigma_s <= 0.0) throw std::invalid_argument("theorem3_bound: sigma_s must be positive");
    if (n == 1) return 1.0;
    const double nm1 = static_cast<double>(n - 1);
    const double denom =
        2.0 * std::sqrt(1.0 + std::exp(-2.0 * sigma_s * sigma_s)) * nm1 * std::sqrt(nm1) + 1.0;
    return std::sqrt(static_cast<double>(n) / denom);
}

struct ScoreStats {
    double sigma_s;  // sample std of raw logits
    double c_cross;  // sigma_s^2 - sigma_q^2 sigma_k^2
    double tau_s;    // 1 / sigma_s
};

// Pools raw (pre-temperature) logits over `trials` sampled score matrices.
inline ScoreStats estimate_score_stats(const AttentionConfig& config, std::size_t trials) {
    if (trials < 1) throw std::invalid_argument("estimate_score_stats: trials must be >= 1");
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        AttentionConfig c = config;
        c.seed = derive_stream_seed(config.seed, t + 1);
        const Matrix p = sample_logits(c);
        for (double v : p.data()) {
            sum += v;
            sum_sq += v * v;
        }
        count += p.data().size();
    }
    const double mean = sum / static_cast<double>(count);
    const double var =
        (sum_sq - static_cast<double>(count) * mean * mean) / static_cast<double>(count - 1);
    ScoreStats s;
    s.sigma_s = std::sqrt(std::max(var, 0.0));
    s.c_cross = var - config.sigma_q * config.sigma_q * config.sigma_k * config.sigma_k;
    s.tau_s = 1.0 / s.sigma_s;
    return s;
}

// Fenton-Wilkinson parameters of log sum_{i=1..n} e^{X_i}, X_i iid N(0, sigma^2):
// sigma_sum^2 = ln((e^{sigma^2} - 1)/n + 1), mu_sum = ln n + (sigma^2 - sigma_sum^2)/2.
struct FentonParams {
    double mu_sum;
    double sigma_sum_sq;
};

inline FentonParams fenton_params(std::size_t n, double sigma) {
    if (n < 1) throw std::invalid_argument("fenton_params: n must be >= 1");
    if (sigma <= 0.0) throw std::invalid_argument("fenton_params: sigma must be positive");
    const double s2 = sigma * sigma;
    const double sigma_sum_sq = std::log((std::expm1(s2)) / static_cast<double>(n) + 1.0);
    const double mu_sum = std::log(static_cast<double>(n)) + (s2 - sigma_sum_sq) / 2.0;
    return {mu_sum, sigma_sum_sq};
}

struct McStats {
    double mean;
    double variance;
};

// Monte Carlo mean/variance of log sum e^{X_i} for comparison against
// fenton_params.
inline McStats mc_log_sum_stats(std::size_t n, double sigma, std::size_t samples,
                                std::uint64_t seed) {
    if (n < 1 || samples < 2) throw std::invalid_argument("mc_log_sum_stats: bad arguments");
    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        // log-sum-exp with running max for stability
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> xs(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = rng.gaussian(sigma);
            mx = std::max(mx, xs[i]);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += std::exp(xs[i] - mx);
        const double v = mx + std::log(acc);
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / static_cast<double>(samples);
    const double var =
        (sum_sq - static_cast<double>(samples) * mean * mean) / static_cast<double>(samples - 1);
    return {mean, var};
}

struct SweepRow {
    std::size_t n;
    double tau;
    double sigma_s_hat;
    double sigma_a_mean;
    double sigma_a_std;
    double bound;  // theorem3_bound(n, sigma_s_hat)
    std::size_t trials;
    std::uint64_t seed;
};

// Mean/std of sigma_a over seeded trials per (n, tau). Trial seeds depend only
// on the master seed and the global trial index, so rows are reproducible
// regardless of execution order or thread count.
inline std::vector<SweepRow> sigma_a_sweep(const std::vector<std::size_t>& n_values,
                                           const std::vector<double>& taus,
                                           const AttentionConfig& config_template,
                                           std::size_t trials, unsigned threads = 1) {
    if (trials < 1) throw std::invalid_argument("sigma_a_sweep: trials must be >= 1");
    for (std::size_t n : n_values)
        if (n < 2) throw std::invalid_argument("sigma_a_sweep: every n must be >= 2");
    std::vector<SweepRow> rows;
    std::size_t block = 0;
    for (std::size_t n : n_values) {
        for (double tau : taus) {
            AttentionConfig base = config_template;
            base.n = n;
            base.tau = tau;

            std::vector<double> sig(trials);
            double logit_sum = 0.0, logit_sum_sq = 0.0;
            std::size_t logit_count = 0;
            std::vector<double> part_sum(trials), part_sum_sq(trials);
            std::vector<std::size_t> part_count(trials);
            parallel_for(trials, threads, [&](std::size_t t) {
                AttentionConfig c = base;
                c.seed = derive_stream_seed(config_template.seed, block * trials + t + 1);
                Matrix p = sample_logits(c);
                double s = 0.0, s2 = 0.0;
                for (double v : p.data()) {
                    s += v;
                    s2 += v * v;
                }
                part_sum[t] = s;
                part_sum_sq[t] = s2;
                part_count[t] = p.data().size();
                softmax_rows(p, c.tau);
                sig[t] = sigma_a(p);
            });
            for (std::size_t t = 0; t < trials; ++t) {
                logit_sum += part_sum[t];
                logit_sum_sq += part_sum_sq[t];
                logit_count += part_count[t];
            }

            double mean = 0.0;
            for (double v : sig) mean += v;
            mean /= static_cast<double>(trials);
            double var = 0.0;
            for (double v : sig) var += (v - mean) * (v - mean);
            var /= static_cast<double>(trials);

            const double lmean = logit_sum / static_cast<double>(logit_count);
            const double lvar = logit_count > 1
                                    ? (logit_sum_sq - static_cast<double>(logit_count) * lmean * lmean) /
                                          static_cast<double>(logit_count - 1)
                                    : 0.0;
            // Std of the scores the softmax actually sees: raw logits over tau.
            const double sigma_s_hat = std::sqrt(std::max(lvar, 0.0)) / tau;

            rows.push_back({n, tau, sigma_s_hat, mean, std::sqrt(var), theorem3_bound(n, sigma_s_hat),
                            trials, config_template.seed});
            ++block;
        }
    }
    return rows;
}

}  // namespace speclab
