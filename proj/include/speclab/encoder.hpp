#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "speclab/attention.hpp"
#include "speclab/matrix.hpp"
#include "speclab/parallel.hpp"
#include "speclab/rng.hpp"
#include "speclab/spectral.hpp"

namespace speclab {

enum class Pooling { mean, first_token };

inline std::string to_string(Pooling p) {
    return p == Pooling::mean ? "mean" : "first-token";
}

inline Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "first-token") return Pooling::first_token;
    throw std::invalid_argument("pooling must be 'mean' or 'first-token'");
}

struct EncoderConfig {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t d = 64;  // model width, split evenly across heads
    std::size_t ff_dim = 256;
    double tau = 1.0;
    bool use_residual = true;
    bool use_ffn = true;
    bool use_layernorm = false;
    bool use_positional = false;
    Pooling pooling = Pooling::mean;
    std::size_t vocab_size = 1000;
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return d / heads; }

    void validate() const {
        if (layers < 1) throw std::invalid_argument("encoder config: layers must be >= 1");
        if (heads < 1 || d < 1 || d % heads != 0)
            throw std::invalid_argument("encoder config: d must be a positive multiple of heads");
        if (use_ffn && ff_dim < 1)
            throw std::invalid_argument("encoder config: ff_dim must be >= 1");
        if (tau <= 0.0 || tau > 1.0)
            throw std::invalid_argument("encoder config: tau must be in (0, 1]");
        if (vocab_size < 1)
            throw std::invalid_argument("encoder config: vocab_size must be >= 1");
    }
};

struct LayerParams {
    std::vector<Matrix> wq, wk, wv;  // per head, d x head_dim
    Matrix wo;                       // d x d
    Matrix ff1;                      // d x ff_dim
    std::vector<double> b1;
    Matrix ff2;  // ff_dim x d
    std::vector<double> b2;
};

struct EncoderParams {
    EncoderConfig config;
    Matrix embedding;  // vocab_size x d
    std::vector<LayerParams> layers;
};

// Weight matrices are sampled entrywise from N(0, 1/fan_in), reading fan_in as
// the input dimension of the map; embedding-table lookups have fan_in 1, so
// entries are unit normal and layer-0 attention logits land at unit scale.
// Biases start at zero and there is no training to move them.
inline EncoderParams init_encoder(const EncoderConfig& config) {
    config.validate();
    Rng rng(config.seed);
    EncoderParams params;
    params.config = config;
    params.embedding = gaussian_matrix(rng, config.vocab_size, config.d, 1.0);
    const double attn_std = 1.0 / std::sqrt(static_cast<double>(config.d));
    const double ff1_std = attn_std;
    const double ff2_std = 1.0 / std::sqrt(static_cast<double>(config.ff_dim));
    params.layers.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
        LayerParams lp;
        for (std::size_t h = 0; h < config.heads; ++h) {
            lp.wq.push_back(gaussian_matrix(rng, config.d, config.head_dim(), attn_std));
            lp.wk.push_back(gaussian_matrix(rng, config.d, config.head_dim(), attn_std));
            lp.wv.push_back(gaussian_matrix(rng, config.d, config.head_dim(), attn_std));
        }
        lp.wo = gaussian_matrix(rng, config.d, config.d, attn_std);
        lp.ff1 = gaussian_matrix(rng, config.d, config.ff_dim, ff1_std);
        lp.b1.assign(config.ff_dim, 0.0);
        lp.ff2 = gaussian_matrix(rng, config.ff_dim, config.d, ff2_std);
        lp.b2.assign(config.d, 0.0);
        params.layers.push_back(std::move(lp));
    }
    return params;
}

struct TokenSequence {
    std::vector<std::size_t> token_ids;
};

struct LayerTraceEntry {
    double log_hc_ratio;  // log(||HC[X_out]||_F / ||HC[X_in]||_F)
    double log_bound;     // log(H * max_h sigma_a(A_h) * sigma_1)
    bool degenerate;      // an HC norm was exactly zero; log_hc_ratio is NaN
    // raw values behind the logs, for audits and tolerance anchoring
    double hc_in;
    double hc_out;
    double sigma_a_max;
    double sigma1;
    double x_out_norm;  // Frobenius norm of the layer output
};

struct LayerTrace {
    std::vector<LayerTraceEntry> entries;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::size_t source_length;
};

struct ForwardResult {
    EmbeddingVector embedding;
    LayerTrace trace;
    Matrix features;  // pre-pooling n x d features of the last layer
};

namespace detail {

inline void add_sinusoidal_positions(Matrix& x) {
    const std::size_t d = x.cols();
    for (std::size_t pos = 0; pos < x.rows(); ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
            x(pos, i) += (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
}

inline void layernorm_rows(Matrix& x, double eps = 1e-5) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double* row = x.row_ptr(i);
        const std::size_t d = x.cols();
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mu) * inv;
    }
}

// Spectral norm of W_V^h W_O^(h), where W_O^(h) is the row block of W_O fed by
// head h. The composed per-head value map is what bounds the layer's
// high-frequency gain; taking W_V alone would drop the output projection's
// amplification and the resulting "bound" can be crossed.
inline double head_value_gain(const LayerParams& lp, std::size_t head, std::size_t head_dim) {
    const Matrix& wo = lp.wo;
    Matrix wo_block(head_dim, wo.cols());
    for (std::size_t r = 0; r < head_dim; ++r)
        for (std::size_t c = 0; c < wo.cols(); ++c)
            wo_block(r, c) = wo(head * head_dim + r, c);
    return spectral_norm(matmul(lp.wv[head], wo_block));
}

}  // namespace detail

// One full pass. Per layer: per-head softmax((XW_Q)(XW_K)^T / (tau sqrt(head_dim)))
// applied to XW_V, heads concatenated and projected by W_O, then the optional
// residual add, FFN (ReLU between two affine maps, residual again if enabled)
// and a closing row layernorm. Traces are costly (spectral norms per head) and
// are only filled when want_trace is set.
inline ForwardResult encoder_forward(const EncoderParams& params, const TokenSequence& tokens,
                                     double tau, bool want_trace = false) {
    const EncoderConfig& cfg = params.config;
    cfg.validate();
    if (tau <= 0.0 || tau > 1.0)
        throw std::invalid_argument("encoder_forward: tau must be in (0, 1]");
    const std::size_t n = tokens.token_ids.size();
    if (n == 0) throw std::invalid_argument("encoder_forward: empty token sequence");
    for (std::size_t id : tokens.token_ids)
        if (id >= cfg.vocab_size)
            throw std::invalid_argument("encoder_forward: token id out of range");

    const std::size_t hd = cfg.head_dim();
    Matrix x(n, cfg.d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cfg.d; ++j) x(i, j) = params.embedding(tokens.token_ids[i], j);
    if (cfg.use_positional) detail::add_sinusoidal_positions(x);

    ForwardResult result;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const LayerParams& lp = params.layers[l];
        const double hc_before = want_trace ? frobenius_norm(hc_project(x)) : 0.0;

        Matrix concat(n, cfg.d);
        double sigma_a_max = 0.0;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const Matrix q = matmul(x, lp.wq[h]);
            const Matrix k = matmul(x, lp.wk[h]);
            Matrix logits = matmul_bt(q, k);
            for (auto& v : logits.data()) v *= inv_sqrt_hd;
            softmax_rows(logits, tau);
            if (want_trace) sigma_a_max = std::max(sigma_a_max, sigma_a(logits));
            const Matrix head_out = matmul(logits, matmul(x, lp.wv[h]));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < hd; ++j) concat(i, h * hd + j) = head_out(i, j);
        }
        Matrix attn = matmul(concat, lp.wo);
        if (cfg.use_residual)
            for (std::size_t i = 0; i < attn.data().size(); ++i) attn.data()[i] += x.data()[i];

        if (cfg.use_ffn) {
            Matrix hidden = matmul(attn, lp.ff1);
            for (std::size_t i = 0; i < hidden.rows(); ++i)
                for (std::size_t j = 0; j < hidden.cols(); ++j)
                    hidden(i, j) = std::max(0.0, hidden(i, j) + lp.b1[j]);
            Matrix ff_out = matmul(hidden, lp.ff2);
            for (std::size_t i = 0; i < ff_out.rows(); ++i)
                for (std::size_t j = 0; j < ff_out.cols(); ++j) ff_out(i, j) += lp.b2[j];
            if (cfg.use_residual)
                for (std::size_t i = 0; i < ff_out.data().size(); ++i)
                    ff_out.data()[i] += attn.data()[i];
            x = std::move(ff_out);
        } else {
            x = std::move(attn);
        }
        if (cfg.use_layernorm) detail::layernorm_rows(x);

        if (want_trace) {
            double sigma1 = 0.0;
            for (std::size_t h = 0; h < cfg.heads; ++h)
                sigma1 = std::max(sigma1, detail::head_value_gain(lp, h, hd));
            const double hc_after = frobenius_norm(hc_project(x));
            LayerTraceEntry entry;
            entry.log_bound =
                std::log(static_cast<double>(cfg.heads) * sigma_a_max * sigma1);
            entry.degenerate = (hc_before == 0.0 || hc_after == 0.0);
            entry.log_hc_ratio = entry.degenerate
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : std::log(hc_after / hc_before);
            entry.hc_in = hc_before;
            entry.hc_out = hc_after;
            entry.sigma_a_max = sigma_a_max;
            entry.sigma1 = sigma1;
            entry.x_out_norm = frobenius_norm(x);
            result.trace.entries.push_back(entry);
        }
    }

    EmbeddingVector emb;
    emb.source_length = n;
    emb.values.assign(cfg.d, 0.0);
    if (cfg.pooling == Pooling::mean) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < cfg.d; ++j) emb.values[j] += x(i, j);
        for (auto& v : emb.values) v /= static_cast<double>(n);
    } else {
        for (std::size_t j = 0; j < cfg.d; ++j) emb.values[j] = x(0, j);
    }
    result.embedding = std::move(emb);
    result.features = std::move(x);
    return result;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
    return dot(a, b) / (na * nb);
}

struct CollapseRow {
    std::size_t length;
    double tau;
    double mean_cos;
    double std_cos;
    std::size_t pairs;  // unordered pairs averaged
    std::uint64_t seed;
};

namespace detail {

struct PairStats {
    double mean;
    double stddev;  // population std over the pairs
    std::size_t pairs;
};

inline PairStats pairwise_cosine_stats(const std::vector<std::vector<double>>& embs) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < embs.size(); ++i) {
        for (std::size_t j = i + 1; j < embs.size(); ++j) {
            const double c = cosine_similarity(embs[i], embs[j]);
            sum += c;
            sum_sq += c * c;
            ++count;
        }
    }
    if (count == 0) return {0.0, 0.0, 0};
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
    return {mean, std::sqrt(var), count};
}

}  // namespace detail

// Sequence draws depend only on the sweep seed and the (length, sample) slot,
// never on tau, so sweeps at different temperatures see the same token ids.
inline TokenSequence sweep_sequence(std::uint64_t sweep_seed, std::size_t length_index,
                                    std::size_t samples_per_length, std::size_t sample_index,
                                    std::size_t length, std::size_t vocab_size) {
    Rng rng(derive_stream_seed(sweep_seed,
                               1 + length_index * samples_per_length + sample_index));
    TokenSequence seq;
    seq.token_ids.reserve(length);
    for (std::size_t i = 0; i < length; ++i)
        seq.token_ids.push_back(static_cast<std::size_t>(rng.below(vocab_size)));
    return seq;
}

// Samples samples_per_length random sequences per length, embeds them at the
// given temperature and reports mean/std cosine over all unordered pairs.
inline std::vector<CollapseRow> collapse_sweep(const EncoderParams& params,
                                               const std::vector<std::size_t>& lengths,
                                               std::size_t samples_per_length, double tau,
                                               std::uint64_t sweep_seed, unsigned threads = 1) {
    if (samples_per_length < 2)
        throw std::invalid_argument("collapse_sweep: need at least two sequences per length");
    for (std::size_t len : lengths)
        if (len < 1) throw std::invalid_argument("collapse_sweep: lengths must be >= 1");
    std::vector<CollapseRow> rows;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        const std::size_t len = lengths[li];
        std::vector<std::vector<double>> embs(samples_per_length);
        parallel_for(samples_per_length, threads, [&](std::size_t si) {
            const TokenSequence seq = sweep_sequence(sweep_seed, li, samples_per_length, si, len,
                                                     params.config.vocab_size);
            embs[si] = encoder_forward(params, seq, tau).embedding.values;
        });
        const detail::PairStats st = detail::pairwise_cosine_stats(embs);
        rows.push_back({len, tau, st.mean, st.stddev, st.pairs, sweep_seed});
    }
    return rows;
}

struct RepeatedTokenRow {
    std::size_t length;
    double cosine;
};

// Embeds [a,a,...,a] and [b,b,...,b] at each length and reports their cosine.
inline std::vector<RepeatedTokenRow> repeated_token_experiment(
    const EncoderParams& params, std::size_t token_a, std::size_t token_b,
    const std::vector<std::size_t>& lengths, double tau) {
    if (token_a == token_b)
        throw std::invalid_argument("repeated_token_experiment: tokens must differ");
    if (token_a >= params.config.vocab_size || token_b >= params.config.vocab_size)
        throw std::invalid_argument("repeated_token_experiment: token id out of range");
    std::vector<RepeatedTokenRow> rows;
    for (std::size_t len : lengths) {
        if (len < 1) throw std::invalid_argument("repeated_token_experiment: lengths must be >= 1");
        TokenSequence sa, sb;
        sa.token_ids.assign(len, token_a);
        sb.token_ids.assign(len, token_b);
        const auto ea = encoder_forward(params, sa, tau).embedding.values;
        const auto eb = encoder_forward(params, sb, tau).embedding.values;
        rows.push_back({len, cosine_similarity(ea, eb)});
    }
    return rows;
}

struct WordMeanRow {
    std::size_t length;
    double mean_cos;
    double std_cos;
    std::size_t samples;
    std::uint64_t seed;
};

// Encoder-free control: averages raw embedding-table rows per sampled sequence
// and reports bucketed pairwise cosine of those averages.
inline std::vector<WordMeanRow> mean_word_embedding_similarity(
    const EncoderParams& params, const std::vector<std::size_t>& lengths,
    std::size_t samples_per_length, std::uint64_t sweep_seed) {
    if (samples_per_length < 2)
        throw std::invalid_argument("mean_word_embedding_similarity: need at least two samples");
    std::vector<WordMeanRow> rows;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        const std::size_t len = lengths[li];
        if (len < 1)
            throw std::invalid_argument("mean_word_embedding_similarity: lengths must be >= 1");
        std::vector<std::vector<double>> means(samples_per_length);
        for (std::size_t si = 0; si < samples_per_length; ++si) {
            const TokenSequence seq = sweep_sequence(sweep_seed, li, samples_per_length, si, len,
                                                     params.config.vocab_size);
            std::vector<double> avg(params.config.d, 0.0);
            for (std::size_t id : seq.token_ids)
                for (std::size_t j = 0; j < params.config.d; ++j)
                    avg[j] += params.embedding(id, j);
            for (auto& v : avg) v /= static_cast<double>(len);
            means[si] = std::move(avg);
        }
        const detail::PairStats st = detail::pairwise_cosine_stats(means);
        rows.push_back({len, st.mean, st.stddev, samples_per_length, sweep_seed});
    }
    return rows;
}

}  // namespace speclab
