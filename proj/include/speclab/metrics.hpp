#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "speclab/matrix.hpp"

namespace speclab {

struct EmbeddingRecord {
    std::string id;
    std::size_t length = 0;
    std::vector<double> vector;
};

// Half-open length intervals [edges[i], edges[i+1]). Lengths outside the edge
// range fall into an explicit out-of-range bucket so no record is dropped
// silently.
struct BucketSpec {
    std::vector<std::size_t> edges;

    void validate() const {
        if (edges.size() < 2) throw std::invalid_argument("bucket spec: need at least two edges");
        for (std::size_t i = 1; i < edges.size(); ++i)
            if (edges[i] <= edges[i - 1])
                throw std::invalid_argument("bucket spec: edges must be strictly increasing");
    }

    std::size_t bucket_count() const { return edges.size() - 1; }

    static constexpr std::size_t out_of_range = static_cast<std::size_t>(-1);

    std::size_t bucket_index(std::size_t length) const {
        if (length < edges.front() || length >= edges.back()) return out_of_range;
        const auto it = std::upper_bound(edges.begin(), edges.end(), length);
        return static_cast<std::size_t>(it - edges.begin()) - 1;
    }

    std::string label(std::size_t index) const {
        if (index == out_of_range) return "out-of-range";
        return "[" + std::to_string(edges[index]) + "," + std::to_string(edges[index + 1]) + ")";
    }
};

namespace detail {

inline void require_consistent(const std::vector<EmbeddingRecord>& records) {
    if (records.empty()) throw std::invalid_argument("empty embedding dataset");
    const std::size_t d = records.front().vector.size();
    for (const auto& r : records) {
        if (r.length < 1)
            throw std::invalid_argument("record '" + r.id + "': length must be >= 1");
        if (r.vector.size() != d)
            throw std::invalid_argument("record '" + r.id + "': dimension mismatch");
        for (double v : r.vector)
            if (!std::isfinite(v))
                throw std::invalid_argument("record '" + r.id + "': non-finite value");
    }
}

inline std::vector<std::vector<std::size_t>> group_by_bucket(
    const std::vector<EmbeddingRecord>& records, const BucketSpec& buckets,
    std::vector<std::size_t>& out_of_range) {
    std::vector<std::vector<std::size_t>> groups(buckets.bucket_count());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t b = buckets.bucket_index(records[i].length);
        if (b == BucketSpec::out_of_range)
            out_of_range.push_back(i);
        else
            groups[b].push_back(i);
    }
    return groups;
}

}  // namespace detail

struct BucketCosineRow {
    std::string bucket;
    std::size_t count;
    std::size_t pairs;
    double mean_cos;  // NaN when the bucket has fewer than two records
    double std_cos;
};

inline std::vector<BucketCosineRow> pairwise_cosine_by_bucket(
    const std::vector<EmbeddingRecord>& records, const BucketSpec& buckets) {
    buckets.validate();
    detail::require_consistent(records);
    for (const auto& r : records)
        if (norm2(r.vector) == 0.0)
            throw std::invalid_argument("record '" + r.id + "': zero-norm vector");
    std::vector<std::size_t> oor;
    const auto groups = detail::group_by_bucket(records, buckets, oor);

    std::vector<BucketCosineRow> rows;
    auto emit = [&](const std::string& label, const std::vector<std::size_t>& idx) {
        BucketCosineRow row;
        row.bucket = label;
        row.count = idx.size();
        row.pairs = 0;
        row.mean_cos = std::numeric_limits<double>::quiet_NaN();
        row.std_cos = std::numeric_limits<double>::quiet_NaN();
        if (idx.size() >= 2) {
            double sum = 0.0, sum_sq = 0.0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto& u = records[idx[i]].vector;
                const double nu = norm2(u);
                for (std::size_t j = i + 1; j < idx.size(); ++j) {
                    const auto& v = records[idx[j]].vector;
                    const double c = dot(u, v) / (nu * norm2(v));
                    sum += c;
                    sum_sq += c * c;
                    ++row.pairs;
                }
            }
            row.mean_cos = sum / static_cast<double>(row.pairs);
            row.std_cos = std::sqrt(std::max(
                0.0, sum_sq / static_cast<double>(row.pairs) - row.mean_cos * row.mean_cos));
        }
        rows.push_back(std::move(row));
    };
    for (std::size_t b = 0; b < buckets.bucket_count(); ++b) emit(buckets.label(b), groups[b]);
    emit("out-of-range", oor);
    return rows;
}

struct BucketDistanceRow {
    std::string bucket;
    std::size_t count;
    double mean_distance;  // NaN when the bucket is empty
};

// Distance is taken to the centroid of the whole dataset, not a t-SNE origin;
// the directional comparison between buckets is what this metric is for.
inline std::vector<BucketDistanceRow> centroid_distance_by_bucket(
    const std::vector<EmbeddingRecord>& records, const BucketSpec& buckets) {
    buckets.validate();
    detail::require_consistent(records);
    const std::size_t d = records.front().vector.size();
    std::vector<double> centroid(d, 0.0);
    for (const auto& r : records)
        for (std::size_t j = 0; j < d; ++j) centroid[j] += r.vector[j];
    for (auto& v : centroid) v /= static_cast<double>(records.size());

    std::vector<std::size_t> oor;
    const auto groups = detail::group_by_bucket(records, buckets, oor);
    std::vector<BucketDistanceRow> rows;
    auto emit = [&](const std::string& label, const std::vector<std::size_t>& idx) {
        BucketDistanceRow row{label, idx.size(), std::numeric_limits<double>::quiet_NaN()};
        if (!idx.empty()) {
            double sum = 0.0;
            for (std::size_t i : idx) {
                double sq = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = records[i].vector[j] - centroid[j];
                    sq += diff * diff;
                }
                sum += std::sqrt(sq);
            }
            row.mean_distance = sum / static_cast<double>(idx.size());
        }
        rows.push_back(std::move(row));
    };
    for (std::size_t b = 0; b < buckets.bucket_count(); ++b) emit(buckets.label(b), groups[b]);
    emit("out-of-range", oor);
    return rows;
}

struct RankedDoc {
    std::string doc_id;
    std::size_t rank = 0;
    double score = 0.0;
};

struct RankingRun {
    std::map<std::string, std::vector<RankedDoc>> runs;          // qid -> ranked list
    std::map<std::string, std::set<std::string>> qrels;          // qid -> relevant doc ids
    std::map<std::string, std::size_t> doc_lengths;              // doc id -> token count

    void validate() const {
        for (const auto& [qid, docs] : runs) {
            std::size_t prev_rank = 0;
            double prev_score = std::numeric_limits<double>::infinity();
            for (const auto& d : docs) {
                if (d.rank <= prev_rank)
                    throw std::invalid_argument("query '" + qid +
                                                "': ranks must be 1-based and strictly increasing");
                if (d.score > prev_score + 1e-9)
                    throw std::invalid_argument("query '" + qid + "': scores must be non-increasing");
                prev_rank = d.rank;
                prev_score = d.score;
            }
        }
    }
};

struct HistogramBin {
    double bin_lo;
    double bin_hi;
    std::size_t count;
};

struct CohortHistogram {
    std::vector<HistogramBin> bins;
    std::size_t unranked = 0;
    std::size_t cohort_size = 0;
};

struct PositionHistograms {
    CohortHistogram shortest;
    CohortHistogram longest;
};

namespace detail {

struct RelevantInstance {
    std::string qid;
    std::string doc_id;
    std::size_t length;
};

// All (query, relevant doc) instances ordered by (length, doc_id, qid); the
// doc_id tiebreak keeps percentile cohorts deterministic.
inline std::vector<RelevantInstance> relevant_instances(const RankingRun& run) {
    std::vector<RelevantInstance> out;
    for (const auto& [qid, rel] : run.qrels) {
        for (const auto& doc : rel) {
            const auto it = run.doc_lengths.find(doc);
            if (it == run.doc_lengths.end())
                throw std::invalid_argument("relevant doc '" + doc + "' has no known length");
            out.push_back({qid, doc, it->second});
        }
    }
    std::sort(out.begin(), out.end(), [](const RelevantInstance& a, const RelevantInstance& b) {
        if (a.length != b.length) return a.length < b.length;
        if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
        return a.qid < b.qid;
    });
    return out;
}

// Normalized rank r in (0, 1] lands in bin ceil(r * bins) - 1, clamped to the
// last bin so r == 1 stays in range.
inline std::size_t bin_of(double r, std::size_t bins) {
    const auto idx = static_cast<std::size_t>(std::ceil(r * static_cast<double>(bins))) - 1;
    return std::min(idx, bins - 1);
}

inline CohortHistogram histogram_for(const RankingRun& run,
                                     const std::vector<RelevantInstance>& cohort,
                                     std::size_t bins) {
    CohortHistogram h;
    h.cohort_size = cohort.size();
    h.bins.reserve(bins);
    for (std::size_t i = 0; i < bins; ++i)
        h.bins.push_back({static_cast<double>(i) / static_cast<double>(bins),
                          static_cast<double>(i + 1) / static_cast<double>(bins), 0});
    for (const auto& inst : cohort) {
        const auto rit = run.runs.find(inst.qid);
        bool found = false;
        if (rit != run.runs.end()) {
            const auto& docs = rit->second;
            for (const auto& d : docs) {
                if (d.doc_id == inst.doc_id) {
                    const double r =
                        static_cast<double>(d.rank) / static_cast<double>(docs.size());
                    ++h.bins[bin_of(r, bins)].count;
                    found = true;
                    break;
                }
            }
        }
        if (!found) ++h.unranked;
    }
    return h;
}

inline std::size_t cohort_size(std::size_t total, double percentile) {
    if (percentile <= 0.0 || percentile > 0.5)
        throw std::invalid_argument("percentile must be in (0, 0.5]");
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(percentile * static_cast<double>(total))));
}

}  // namespace detail

inline PositionHistograms ranking_position_histogram(const RankingRun& run, double percentile,
                                                     std::size_t bins = 10) {
    if (bins < 1) throw std::invalid_argument("bins must be >= 1");
    run.validate();
    const auto instances = detail::relevant_instances(run);
    if (instances.empty()) throw std::invalid_argument("no relevant documents in qrels");
    const std::size_t k = detail::cohort_size(instances.size(), percentile);
    const std::vector<detail::RelevantInstance> shortest(instances.begin(),
                                                         instances.begin() + k);
    const std::vector<detail::RelevantInstance> longest(instances.end() - k, instances.end());
    PositionHistograms out;
    out.shortest = detail::histogram_for(run, shortest, bins);
    out.longest = detail::histogram_for(run, longest, bins);
    return out;
}

// Mean raw rank of the longest-percentile relevant docs; instances missing
// from their query's ranked list are excluded from the mean.
inline double mean_rank_of_longest(const RankingRun& run, double percentile) {
    run.validate();
    const auto instances = detail::relevant_instances(run);
    if (instances.empty()) throw std::invalid_argument("no relevant documents in qrels");
    const std::size_t k = detail::cohort_size(instances.size(), percentile);
    double sum = 0.0;
    std::size_t ranked = 0;
    for (auto it = instances.end() - k; it != instances.end(); ++it) {
        const auto rit = run.runs.find(it->qid);
        if (rit == run.runs.end()) continue;
        for (const auto& d : rit->second) {
            if (d.doc_id == it->doc_id) {
                sum += static_cast<double>(d.rank);
                ++ranked;
                break;
            }
        }
    }
    if (ranked == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / static_cast<double>(ranked);
}

// alpha^2 / (sqrt(alpha^2 + alpha1^2) * sqrt(alpha^2 + alpha2^2))
inline double cosine_lower_bound(double alpha, double alpha1, double alpha2) {
    if (alpha <= 0.0) throw std::invalid_argument("cosine_lower_bound: alpha must be positive");
    if (alpha1 < 0.0 || alpha2 < 0.0)
        throw std::invalid_argument("cosine_lower_bound: alpha1 and alpha2 must be nonnegative");
    const double a2 = alpha * alpha;
    return a2 / (std::sqrt(a2 + alpha1 * alpha1) * std::sqrt(a2 + alpha2 * alpha2));
}

}  // namespace speclab
