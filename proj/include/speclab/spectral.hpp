#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "speclab/matrix.hpp"
#include "speclab/rng.hpp"

namespace speclab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Unitary DFT of a real signal: coefficient k = (1/sqrt(n)) sum_m z_m e^{+2pi i k m / n}.
// Coefficient 0 is the DC coefficient; the rest carry the high-frequency energy.
struct ComplexSpectrum {
    std::vector<std::complex<double>> coefficients;

    std::complex<double> dc_coefficient() const { return coefficients.at(0); }
    std::size_t size() const { return coefficients.size(); }
};

inline ComplexSpectrum dft(const std::vector<double>& signal) {
    const std::size_t n = signal.size();
    if (n == 0) throw std::invalid_argument("dft: empty signal");
    for (double v : signal)
        if (!std::isfinite(v)) throw std::invalid_argument("dft: non-finite input");
    ComplexSpectrum out;
    out.coefficients.resize(n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            const double angle = kTwoPi * static_cast<double>(k) * static_cast<double>(m) /
                                 static_cast<double>(n);
            acc += signal[m] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        out.coefficients[k] = acc * scale;
    }
    return out;
}

// Inverse of dft; unitary, so this is the conjugate transform.
inline std::vector<std::complex<double>> idft(const ComplexSpectrum& spectrum) {
    const std::size_t n = spectrum.size();
    std::vector<std::complex<double>> out(n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t m = 0; m < n; ++m) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double angle = kTwoPi * static_cast<double>(k) * static_cast<double>(m) /
                                 static_cast<double>(n);
            acc += spectrum.coefficients[k] *
                   std::complex<double>(std::cos(angle), -std::sin(angle));
        }
        out[m] = acc * scale;
    }
    return out;
}

// DC[x] = (1/n) 11^T x: every column replaced by its mean.
inline Matrix dc_project(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
        mean *= inv_n;
        for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) = mean;
    }
    return out;
}

// HC[x] = (I - (1/n) 11^T) x.
inline Matrix hc_project(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
        mean *= inv_n;
        for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) = x(i, j) - mean;
    }
    return out;
}

struct SpectralSplit {
    Matrix dc;
    Matrix hc;
    double dc_norm;  // Frobenius
    double hc_norm;  // Frobenius
};

inline SpectralSplit split_spectral(const Matrix& x) {
    SpectralSplit s;
    s.dc = dc_project(x);
    s.hc = hc_project(x);
    s.dc_norm = frobenius_norm(s.dc);
    s.hc_norm = frobenius_norm(s.hc);
    return s;
}

// Outcome of an HC/DC energy ratio. The DC norm can be zero (ratio infinite)
// or both norms can vanish (degenerate); neither is collapsed to a number.
struct RatioValue {
    enum class Kind { finite, infinite, degenerate };
    Kind kind;
    double value;  // meaningful only when finite

    bool is_finite() const { return kind == Kind::finite; }
};

inline RatioValue make_ratio(double hc_norm, double dc_norm) {
    if (dc_norm == 0.0 && hc_norm == 0.0) return {RatioValue::Kind::degenerate, 0.0};
    if (dc_norm == 0.0) return {RatioValue::Kind::infinite, 0.0};
    return {RatioValue::Kind::finite, hc_norm / dc_norm};
}

// 2-norm ratio for signals. n = 1 has no HC subspace, so the ratio is 0 for
// any nonzero signal.
inline RatioValue hc_dc_ratio(const std::vector<double>& z) {
    const std::size_t n = z.size();
    if (n == 0) throw std::invalid_argument("hc_dc_ratio: empty signal");
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(n);
    double hc_sq = 0.0;
    for (double v : z) hc_sq += (v - mean) * (v - mean);
    const double dc_norm = std::abs(mean) * std::sqrt(static_cast<double>(n));
    return make_ratio(std::sqrt(hc_sq), dc_norm);
}

// Frobenius ratio for matrices.
inline RatioValue hc_dc_ratio(const Matrix& x) {
    const SpectralSplit s = split_spectral(x);
    return make_ratio(s.hc_norm, s.dc_norm);
}

struct SpectralNormResult {
    double value;
    bool converged;
    int iterations;
};

// Largest singular value by power iteration on M^T M. Start vector is the
// normalized all-ones vector; if the Rayleigh quotient stalls for 50
// iterations before acceptance (the all-ones vector can sit in a minor
// eigenspace), the vector is perturbed once with seeded unit Gaussians and
// iteration continues. After the perturbation a single stalled step accepts.
inline SpectralNormResult spectral_norm_full(const Matrix& m,
                                             std::uint64_t perturb_seed = 0x5eed5eedULL) {
    constexpr double kRelTol = 1e-12;
    constexpr int kStallWindow = 50;
    constexpr int kMaxIter = 10000;

    const std::size_t dim = m.cols();
    if (dim == 0 || m.rows() == 0) return {0.0, true, 0};

    bool any = false;
    for (double v : m.data())
        if (v != 0.0) { any = true; break; }
    if (!any) return {0.0, true, 0};

    std::vector<double> v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    bool perturbed = false;
    double lambda_prev = -1.0;
    int stall = 0;

    auto perturb = [&](std::vector<double>& vec) {
        Rng rng(perturb_seed);
        for (auto& x : vec) x += rng.gaussian();
        const double nn = norm2(vec);
        if (nn > 0.0)
            for (auto& x : vec) x /= nn;
        else
            vec.assign(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    };

    for (int iter = 1; iter <= kMaxIter; ++iter) {
        std::vector<double> mv = matvec(m, v);
        std::vector<double> w = matvec_t(m, mv);
        const double lambda = dot(w, v);  // Rayleigh quotient of M^T M at unit v
        const double wn = norm2(w);
        if (wn == 0.0) {
            if (!perturbed) {
                perturbed = true;
                perturb(v);
                lambda_prev = -1.0;
                stall = 0;
                continue;
            }
            return {0.0, true, iter};
        }
        for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / wn;

        if (lambda_prev >= 0.0 && std::abs(lambda - lambda_prev) <= kRelTol * lambda) {
            ++stall;
            if (perturbed || stall >= kStallWindow) {
                if (!perturbed && stall >= kStallWindow) {
                    perturbed = true;
                    perturb(v);
                    lambda_prev = -1.0;
                    stall = 0;
                    continue;
                }
                return {std::sqrt(std::max(lambda, 0.0)), true, iter};
            }
        } else {
            stall = 0;
        }
        lambda_prev = lambda;
    }
    return {std::sqrt(std::max(lambda_prev, 0.0)), false, kMaxIter};
}

inline double spectral_norm(const Matrix& m) { return spectral_norm_full(m).value; }

// HC/DC ratio trajectory of A^t z for t = 0..t_max. Requires a row-stochastic
// a and a probe with nonzero mean (otherwise the DC stays 0 and every ratio is
// degenerate).
struct FilterRatioTrajectory {
    std::vector<RatioValue> ratios;  // index t
};

inline FilterRatioTrajectory low_pass_iterate(const Matrix& a, const std::vector<double>& z,
                                              std::size_t t_max) {
    if (a.rows() != a.cols()) throw std::invalid_argument("low_pass_iterate: matrix not square");
    if (a.rows() != z.size()) throw std::invalid_argument("low_pass_iterate: size mismatch");
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) row_sum += a(i, j);
        if (std::abs(row_sum - 1.0) > 1e-8)
            throw std::invalid_argument("low_pass_iterate: matrix is not row-stochastic");
    }
    double mean = 0.0, rms = 0.0;
    for (double v : z) {
        mean += v;
        rms += v * v;
    }
    mean /= static_cast<double>(z.size());
    rms = std::sqrt(rms / static_cast<double>(z.size()));
    // A mean at roundoff level below the signal scale has no usable DC part.
    if (std::abs(mean) <= 1e-12 * rms)
        throw std::invalid_argument("low_pass_iterate: degenerate probe signal with zero mean");

    FilterRatioTrajectory traj;
    traj.ratios.reserve(t_max + 1);
    std::vector<double> cur = z;
    traj.ratios.push_back(hc_dc_ratio(cur));
    for (std::size_t t = 1; t <= t_max; ++t) {
        cur = matvec(a, cur);
        traj.ratios.push_back(hc_dc_ratio(cur));
    }
    return traj;
}

}  // namespace speclab
