#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "speclab/attention.hpp"
#include "speclab/csv.hpp"
#include "speclab/matrix.hpp"
#include "speclab/parallel.hpp"
#include "speclab/rng.hpp"
#include "speclab/spectral.hpp"

namespace speclab {

struct CheckResult {
    std::string name;
    bool pass;
    double measured;
    double threshold;
    std::string note;
};

inline bool all_pass(const std::vector<CheckResult>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

// ---- low-pass convergence over seeded attention matrices ----

struct Lemma1Row {
    std::size_t trial;
    std::uint64_t seed;
    double r1;        // HC/DC ratio after one application
    double max_rest;  // max ratio over t in [2, t_max]
    double r_final;   // ratio at t_max
    bool pass;
};

struct Lemma1Result {
    std::vector<CheckResult> checks;
    std::vector<Lemma1Row> rows;
};

// Probes are unit-mean Gaussian perturbations; a zero-mean probe has no DC
// component to compare against and is rejected by low_pass_iterate.
inline Lemma1Result lemma1_suite(std::size_t matrices, std::size_t n, std::size_t d,
                                 std::uint64_t seed, std::size_t t_max = 100,
                                 bool zero_mean_probe = false) {
    Lemma1Result result;
    double worst_gap = -std::numeric_limits<double>::infinity();
    double worst_final = 0.0;
    bool all = true;
    for (std::size_t trial = 0; trial < matrices; ++trial) {
        AttentionConfig cfg;
        cfg.n = n;
        cfg.d = d;
        cfg.seed = derive_stream_seed(seed, trial + 1);
        const AttentionMatrix a = sample_attention(cfg);
        Rng probe_rng(derive_stream_seed(cfg.seed, 1));
        std::vector<double> z(n);
        for (auto& v : z) v = (zero_mean_probe ? 0.0 : 1.0) + probe_rng.gaussian();
        if (zero_mean_probe) {
            double mean = 0.0;
            for (double v : z) mean += v;
            mean /= static_cast<double>(n);
            for (auto& v : z) v -= mean;
        }
        const FilterRatioTrajectory traj = low_pass_iterate(a.data, z, t_max);
        const double r1 = traj.ratios[1].value;
        double max_rest = 0.0;
        for (std::size_t t = 2; t <= t_max; ++t) {
            if (!traj.ratios[t].is_finite()) {
                max_rest = std::numeric_limits<double>::infinity();
                break;
            }
            max_rest = std::max(max_rest, traj.ratios[t].value);
        }
        const double r_final = traj.ratios[t_max].value;
        const bool ok = traj.ratios[1].is_finite() && max_rest < r1 && r_final < 1e-6;
        all = all && ok;
        worst_gap = std::max(worst_gap, max_rest - r1);
        worst_final = std::max(worst_final, r_final);
        result.rows.push_back({trial, cfg.seed, r1, max_rest, r_final, ok});
    }
    result.checks.push_back({"ratio below t=1 value for all t>=2", all && worst_gap < 0.0,
                             worst_gap, 0.0, "max over trials of max_{t>=2} ratio - t=1 ratio"});
    result.checks.push_back({"ratio below 1e-6 at final step", worst_final < 1e-6, worst_final,
                             1e-6, "worst final ratio over trials"});
    return result;
}

// ---- per-application bound on the high-frequency norm ----

struct Theorem2Row {
    std::size_t trial;
    std::size_t n;
    double lhs;
    double rhs;
    double slack;
    bool pass;
};

struct Theorem2Result {
    std::vector<CheckResult> checks;
    std::vector<Theorem2Row> rows;
};

inline Theorem2Result theorem2_suite(std::size_t trials, std::size_t n_lo, std::size_t n_hi,
                                     std::uint64_t seed, unsigned threads = 1,
                                     double tolerance = 1e-9) {
    if (n_lo < 2 || n_hi < n_lo) throw std::invalid_argument("theorem2_suite: bad n range");
    Theorem2Result result;
    result.rows.resize(trials);
    parallel_for(trials, threads, [&](std::size_t trial) {
        Rng rng(derive_stream_seed(seed, trial + 1));
        const std::size_t n = n_lo + static_cast<std::size_t>(rng.below(n_hi - n_lo + 1));
        AttentionConfig cfg;
        cfg.n = n;
        cfg.d = 32;
        cfg.seed = derive_stream_seed(seed, trials + trial + 1);
        const AttentionMatrix a = sample_attention(cfg);
        const Matrix x = gaussian_matrix(rng, n, 16, 1.0);
        const Matrix w_v = gaussian_matrix(rng, 16, 16, 1.0);
        const BoundReport rep = theorem2_check(x, a.data, w_v, tolerance);
        result.rows[trial] = {trial, n, rep.lhs, rep.rhs, rep.slack, rep.holds};
    });
    std::size_t violations = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    for (const auto& r : result.rows) {
        if (!r.pass) ++violations;
        min_slack = std::min(min_slack, r.slack);
    }
    result.checks.push_back({"zero bound violations", violations == 0,
                             static_cast<double>(violations), 0.0,
                             "min slack " + csv_double(min_slack)});
    return result;
}

// ---- length direction of the empirical high-frequency gain ----

struct Theorem3Result {
    std::vector<CheckResult> checks;
    std::vector<SweepRow> rows;
};

// The consistency clause compares a sampled mean against a closed-form level
// derived under idealized score statistics; the measured means sit above that
// level at this model's scale, so the second check records an honest failure
// rather than a loosened threshold.
inline Theorem3Result theorem3_suite(const std::vector<std::size_t>& n_values, std::size_t trials,
                                     std::uint64_t seed, unsigned threads = 1,
                                     double consistency_factor = 1.05) {
    AttentionConfig tmpl;
    tmpl.d = 32;
    tmpl.sigma_q = 1.0;
    tmpl.sigma_k = 1.0;
    tmpl.seed = seed;
    Theorem3Result result;
    result.rows = sigma_a_sweep(n_values, {1.0}, tmpl, trials, threads);

    bool decreasing = true;
    double worst_step = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        const double step = result.rows[i].sigma_a_mean - result.rows[i - 1].sigma_a_mean;
        worst_step = std::max(worst_step, step);
        decreasing = decreasing && step < 0.0;
    }
    result.checks.push_back({"mean sigma_a strictly decreasing in n", decreasing, worst_step, 0.0,
                             "max adjacent increase"});

    bool consistent = true;
    double worst_ratio = 0.0;
    for (const auto& r : result.rows) {
        const double ratio = r.sigma_a_mean / r.bound;
        worst_ratio = std::max(worst_ratio, ratio);
        consistent = consistent && ratio <= consistency_factor;
    }
    result.checks.push_back({"mean sigma_a within 1.05x of closed-form level", consistent,
                             worst_ratio, consistency_factor, "max mean/bound ratio over n"});
    return result;
}

// ---- log-normal sum approximation vs Monte Carlo ----

struct FentonRow {
    std::size_t n;
    double sigma;
    double mu_pred;
    double var_pred;
    double mc_mean;
    double mc_var;
    double mean_rel_err;
    double var_rel_err;
    bool pass;
};

struct FentonResult {
    std::vector<CheckResult> checks;
    std::vector<FentonRow> rows;
};

// mean_abs_floor widens only the mean check and only materially when the
// predicted mean is near zero (the n = 1 identity case); the acceptance run
// passes 0 so the grid is judged at pure relative tolerance.
inline FentonResult fenton_suite(const std::vector<std::size_t>& ns,
                                 const std::vector<double>& sigmas, std::size_t samples,
                                 std::uint64_t seed, double rel_tol = 0.10,
                                 double mean_abs_floor = 0.0) {
    FentonResult result;
    std::size_t idx = 0;
    for (std::size_t n : ns) {
        for (double sigma : sigmas) {
            const FentonParams pred = fenton_params(n, sigma);
            const McStats mc =
                mc_log_sum_stats(n, sigma, samples, derive_stream_seed(seed, ++idx));
            const double mean_err = std::abs(mc.mean - pred.mu_sum);
            const double mean_tol = rel_tol * std::abs(pred.mu_sum) + mean_abs_floor;
            const double var_err = std::abs(mc.variance - pred.sigma_sum_sq);
            const double var_tol = rel_tol * pred.sigma_sum_sq;
            const bool ok = mean_err <= mean_tol && var_err <= var_tol;
            const double mean_rel =
                pred.mu_sum != 0.0 ? mean_err / std::abs(pred.mu_sum) : mean_err;
            const double var_rel = var_err / pred.sigma_sum_sq;
            result.rows.push_back(
                {n, sigma, pred.mu_sum, pred.sigma_sum_sq, mc.mean, mc.variance, mean_rel,
                 var_rel, ok});
            result.checks.push_back({"fenton n=" + std::to_string(n) +
                                         " sigma=" + csv_double(sigma),
                                     ok, std::max(mean_rel, var_rel), rel_tol,
                                     "max of mean/variance relative error"});
        }
    }
    return result;
}

// ---- mixed-norm product inequality ----

struct NormLemmaRow {
    std::size_t pair;
    std::size_t m, k, p;
    double lhs;       // ||AB||_F
    double bound_a;   // ||A||_2 ||B||_F
    double bound_b;   // ||A||_F ||B||_2
    bool pass;
};

struct NormLemmaResult {
    std::vector<CheckResult> checks;
    std::vector<NormLemmaRow> rows;
};

inline NormLemmaResult norm_lemma_suite(std::size_t pairs, std::uint64_t seed,
                                        double tolerance = 1e-9) {
    NormLemmaResult result;
    bool all = true;
    double min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pairs; ++i) {
        Rng rng(derive_stream_seed(seed, i + 1));
        const std::size_t m = 2 + static_cast<std::size_t>(rng.below(63));
        const std::size_t k = 2 + static_cast<std::size_t>(rng.below(63));
        const std::size_t p = 2 + static_cast<std::size_t>(rng.below(63));
        const Matrix a = gaussian_matrix(rng, m, k, 1.0);
        const Matrix b = gaussian_matrix(rng, k, p, 1.0);
        const double lhs = frobenius_norm(matmul(a, b));
        const double bound_a = spectral_norm(a) * frobenius_norm(b);
        const double bound_b = frobenius_norm(a) * spectral_norm(b);
        const bool ok = lhs <= bound_a + tolerance * std::max(1.0, bound_a) &&
                        lhs <= bound_b + tolerance * std::max(1.0, bound_b);
        all = all && ok;
        min_slack = std::min(min_slack, std::min(bound_a - lhs, bound_b - lhs));
        result.rows.push_back({i, m, k, p, lhs, bound_a, bound_b, ok});
    }
    result.checks.push_back({"product inequality holds for both variants", all, min_slack, 0.0,
                             "min slack over pairs and variants"});
    return result;
}

}  // namespace speclab
