// Acceptance gate: one line of output per criterion, nonzero exit when any
// selected criterion fails. Criteria are selectable by number on the command
// line; with no arguments all eleven run in order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "speclab/attention.hpp"
#include "speclab/encoder.hpp"
#include "speclab/io.hpp"
#include "speclab/matrix.hpp"
#include "speclab/metrics.hpp"
#include "speclab/rng.hpp"
#include "speclab/spectral.hpp"
#include "speclab/verify.hpp"

#ifndef SPECLAB_CLI_PATH
#define SPECLAB_CLI_PATH "speclab"
#endif

namespace {

namespace fs = std::filesystem;
using speclab::Matrix;

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---- criterion 1: spectral identities ----

Outcome criterion_spectral_identities() {
    speclab::Rng rng(2024);
    double worst_recon = 0.0, worst_ortho = 0.0, worst_idem = 0.0, worst_parseval = 0.0,
           worst_equiv = 0.0;
    const std::size_t cases = 200;
    for (std::size_t trial = 0; trial < cases; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.below(128));
        const std::size_t cols = 1 + static_cast<std::size_t>(rng.below(8));
        Matrix x(n, cols);
        for (auto& v : x.data()) v = rng.gaussian();
        const double scale = std::max(1.0, speclab::frobenius_norm(x));
        const speclab::SpectralSplit s = speclab::split_spectral(x);

        double ortho = 0.0;
        for (std::size_t i = 0; i < x.data().size(); ++i) {
            worst_recon = std::max(
                worst_recon,
                std::abs(s.dc.data()[i] + s.hc.data()[i] - x.data()[i]) / scale);
            ortho += s.dc.data()[i] * s.hc.data()[i];
        }
        worst_ortho = std::max(worst_ortho, std::abs(ortho) / (scale * scale));

        const Matrix dc2 = speclab::dc_project(s.dc);
        const Matrix hc2 = speclab::hc_project(s.hc);
        for (std::size_t i = 0; i < x.data().size(); ++i) {
            worst_idem = std::max(worst_idem,
                                  std::abs(dc2.data()[i] - s.dc.data()[i]) / scale);
            worst_idem = std::max(worst_idem,
                                  std::abs(hc2.data()[i] - s.hc.data()[i]) / scale);
        }

        for (std::size_t j = 0; j < cols; ++j) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = x(i, j);
            auto spec = speclab::dft(col);
            double sig_sq = 0.0, spec_sq = 0.0;
            for (double v : col) sig_sq += v * v;
            for (const auto& c : spec.coefficients) spec_sq += std::norm(c);
            worst_parseval = std::max(
                worst_parseval, std::abs(std::sqrt(sig_sq) - std::sqrt(spec_sq)) / scale);

            spec.coefficients[0] = {0.0, 0.0};
            const auto filtered = speclab::idft(spec);
            for (std::size_t i = 0; i < n; ++i)
                worst_equiv = std::max(
                    worst_equiv, std::abs(filtered[i].real() - s.hc(i, j)) / scale);
        }
    }
    const bool pass = worst_recon < 1e-10 && worst_ortho < 1e-10 && worst_idem < 1e-12 &&
                      worst_parseval < 1e-10 && worst_equiv < 1e-10;
    return {pass, std::to_string(cases) + " cases/family, worst recon " + fmt(worst_recon) +
                      ", ortho " + fmt(worst_ortho) + ", idem " + fmt(worst_idem) +
                      ", parseval " + fmt(worst_parseval) + ", dft-equiv " + fmt(worst_equiv)};
}

// ---- criterion 2: iterated-filter convergence ----

Outcome criterion_lemma1() {
    const auto res = speclab::lemma1_suite(100, 64, 32, 42, 100);
    std::string detail;
    for (const auto& c : res.checks) {
        if (!detail.empty()) detail += "; ";
        detail += c.name + " " + (c.pass ? "ok" : "VIOLATED") + " (" + fmt(c.measured) + ")";
    }
    return {speclab::all_pass(res.checks), detail};
}

// ---- criterion 3: per-application bound ----

Outcome criterion_theorem2() {
    const auto res = speclab::theorem2_suite(1000, 4, 128, 42, 4);
    const auto& c = res.checks.front();
    return {c.pass, "1000 trials, violations " + fmt(c.measured) + ", " + c.note};
}

// ---- criterion 4: length direction and closed-form consistency ----

Outcome criterion_theorem3() {
    const auto res = speclab::theorem3_suite({8, 16, 32, 64, 128, 256}, 100, 42, 4);
    std::string detail;
    for (const auto& c : res.checks) {
        if (!detail.empty()) detail += "; ";
        detail += c.name + " " + (c.pass ? "ok" : "VIOLATED") + " (" + fmt(c.measured) + ")";
    }
    return {speclab::all_pass(res.checks), detail};
}

// ---- criterion 5: log-normal sum approximation ----

Outcome criterion_fenton() {
    const auto res = speclab::fenton_suite({10, 100}, {0.25, 0.5, 1.0}, 100000, 42, 0.10, 0.0);
    double worst = 0.0;
    bool pass = true;
    for (const auto& r : res.rows) {
        worst = std::max(worst, std::max(r.mean_rel_err, r.var_rel_err));
        pass = pass && r.pass;
    }
    return {pass, "6 cells x 100000 samples, worst relative error " + fmt(worst)};
}

// ---- criterion 6: mixed-norm product inequality ----

Outcome criterion_norm_lemma() {
    const auto res = speclab::norm_lemma_suite(500, 42);
    const auto& c = res.checks.front();
    return {c.pass, "500 pairs, both variants, min slack " + fmt(c.measured)};
}

// ---- criterion 7: length collapse of the toy encoder ----

Outcome criterion_collapse() {
    speclab::EncoderConfig cfg;
    cfg.seed = 42;
    const speclab::EncoderParams params = speclab::init_encoder(cfg);
    const auto rows = speclab::collapse_sweep(params, {16, 32, 64, 128, 256}, 200, 1.0, 42, 4);
    bool nondecreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i)
        nondecreasing = nondecreasing && rows[i].mean_cos >= rows[i - 1].mean_cos;
    const double gap = rows.back().mean_cos - rows.front().mean_cos;
    std::string means;
    for (const auto& r : rows) {
        if (!means.empty()) means += " ";
        means += fmt(r.mean_cos);
    }
    return {nondecreasing && gap >= 0.02,
            "means [" + means + "], non-decreasing " + (nondecreasing ? "yes" : "NO") +
                ", gap " + fmt(gap)};
}

// ---- criterion 8: temperature scaling weakens the collapse ----

Outcome criterion_tempscale() {
    speclab::EncoderConfig cfg;
    cfg.seed = 42;
    const speclab::EncoderParams params = speclab::init_encoder(cfg);
    const std::vector<std::size_t> lengths{16, 32, 64, 128, 256};
    const std::vector<double> taus{1.0, 0.8, 0.5};
    std::vector<double> cos_at_max;
    for (double tau : taus) {
        const auto rows = speclab::collapse_sweep(params, lengths, 200, tau, 42, 4);
        cos_at_max.push_back(rows.back().mean_cos);
    }
    const bool cos_decreasing = cos_at_max[0] > cos_at_max[1] && cos_at_max[1] > cos_at_max[2];

    speclab::AttentionConfig tmpl;
    tmpl.d = 32;
    tmpl.seed = 42;
    const auto sweep = speclab::sigma_a_sweep({128}, taus, tmpl, 100, 4);
    const bool gain_increasing = sweep[0].sigma_a_mean < sweep[1].sigma_a_mean &&
                                 sweep[1].sigma_a_mean < sweep[2].sigma_a_mean;
    return {cos_decreasing && gain_increasing,
            "cos@256 [" + fmt(cos_at_max[0]) + " " + fmt(cos_at_max[1]) + " " +
                fmt(cos_at_max[2]) + "] decreasing " + (cos_decreasing ? "yes" : "NO") +
                "; sigma_a@128 [" + fmt(sweep[0].sigma_a_mean) + " " +
                fmt(sweep[1].sigma_a_mean) + " " + fmt(sweep[2].sigma_a_mean) +
                "] increasing " + (gain_increasing ? "yes" : "NO")};
}

// ---- criterion 9: repeated-token length direction ----

Outcome criterion_repeated_token() {
    const speclab::EncoderConfig base;
    std::size_t hits = 0;
    const std::size_t triples = 20;
    for (std::size_t t = 0; t < triples; ++t) {
        speclab::Rng rng(speclab::derive_stream_seed(42, t + 1));
        const std::size_t a = static_cast<std::size_t>(rng.below(base.vocab_size));
        std::size_t b = a;
        while (b == a) b = static_cast<std::size_t>(rng.below(base.vocab_size));
        speclab::EncoderConfig cfg = base;
        cfg.seed = rng.next_u64();
        const speclab::EncoderParams params = speclab::init_encoder(cfg);
        const auto rows = speclab::repeated_token_experiment(params, a, b, {4, 256}, 1.0);
        if (rows[1].cosine > rows[0].cosine) ++hits;
    }
    return {hits >= 18, "cosine(256) > cosine(4) in " + std::to_string(hits) + " of 20 triples" +
                            (hits < 18 ? "; identical rows are a layer fixed point here" : "")};
}

// ---- criterion 10: diagnostics vs brute-force oracles ----

Outcome criterion_diagnostics() {
    // planted embedding corpus
    std::mt19937_64 gen(4242);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> len(1, 620);
    std::vector<speclab::EmbeddingRecord> records;
    for (std::size_t i = 0; i < 600; ++i) {
        speclab::EmbeddingRecord r;
        r.id = "e" + std::to_string(i);
        r.length = len(gen);
        r.vector.resize(16);
        for (auto& v : r.vector) v = normal(gen);
        records.push_back(std::move(r));
    }
    const speclab::BucketSpec spec{{0, 100, 200, 300, 400, 500}};
    const auto cos_rows = speclab::pairwise_cosine_by_bucket(records, spec);
    const auto dist_rows = speclab::centroid_distance_by_bucket(records, spec);

    double worst = 0.0;
    bool counts_ok = true;
    const std::size_t d = records.front().vector.size();
    std::vector<double> centroid(d, 0.0);
    for (const auto& r : records)
        for (std::size_t j = 0; j < d; ++j) centroid[j] += r.vector[j];
    for (auto& v : centroid) v /= static_cast<double>(records.size());

    for (std::size_t b = 0; b <= spec.bucket_count(); ++b) {
        std::vector<const speclab::EmbeddingRecord*> members;
        for (const auto& r : records) {
            const auto idx = spec.bucket_index(r.length);
            const bool mine = (b < spec.bucket_count())
                                  ? idx == b
                                  : idx == speclab::BucketSpec::out_of_range;
            if (mine) members.push_back(&r);
        }
        counts_ok = counts_ok && cos_rows[b].count == members.size() &&
                    dist_rows[b].count == members.size();

        double sum = 0.0, sum_sq = 0.0, dist_sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = members[i]->vector[j] - centroid[j];
                sq += diff * diff;
            }
            dist_sum += std::sqrt(sq);
            for (std::size_t j2 = i + 1; j2 < members.size(); ++j2) {
                double uu = 0.0, vv = 0.0, uv = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    uu += members[i]->vector[j] * members[i]->vector[j];
                    vv += members[j2]->vector[j] * members[j2]->vector[j];
                    uv += members[i]->vector[j] * members[j2]->vector[j];
                }
                const double c = uv / (std::sqrt(uu) * std::sqrt(vv));
                sum += c;
                sum_sq += c * c;
                ++pairs;
            }
        }
        if (pairs > 0) {
            const double mean = sum / static_cast<double>(pairs);
            const double var =
                std::max(0.0, sum_sq / static_cast<double>(pairs) - mean * mean);
            worst = std::max(worst, std::abs(cos_rows[b].mean_cos - mean));
            worst = std::max(worst, std::abs(cos_rows[b].std_cos - std::sqrt(var)));
        }
        if (!members.empty())
            worst = std::max(worst, std::abs(dist_rows[b].mean_distance -
                                             dist_sum / static_cast<double>(members.size())));
    }

    // planted retrieval run
    speclab::RankingRun run;
    std::uniform_int_distribution<std::size_t> dlen(1, 900);
    std::uniform_int_distribution<std::size_t> pick(1, 15);
    for (std::size_t q = 0; q < 100; ++q) {
        const std::string qid = "q" + std::to_string(q);
        for (std::size_t r = 1; r <= 15; ++r) {
            const std::string docid = qid + "_d" + std::to_string(r);
            run.runs[qid].push_back({docid, r, 2.0 - 0.05 * static_cast<double>(r)});
            run.doc_lengths[docid] = dlen(gen);
        }
        run.qrels[qid].insert(qid + "_d" + std::to_string(pick(gen)));
        if (q % 3 == 0) {
            const std::string ghost = qid + "_ghost";
            run.qrels[qid].insert(ghost);
            run.doc_lengths[ghost] = dlen(gen);
        }
    }
    const double percentile = 0.2;
    const std::size_t bins = 10;
    const auto hist = speclab::ranking_position_histogram(run, percentile, bins);
    const double mean_rank = speclab::mean_rank_of_longest(run, percentile);

    struct Inst {
        std::string qid, doc;
        std::size_t length;
    };
    std::vector<Inst> insts;
    for (const auto& [qid, rel] : run.qrels)
        for (const auto& doc : rel) insts.push_back({qid, doc, run.doc_lengths.at(doc)});
    std::sort(insts.begin(), insts.end(), [](const Inst& a, const Inst& b) {
        if (a.length != b.length) return a.length < b.length;
        if (a.doc != b.doc) return a.doc < b.doc;
        return a.qid < b.qid;
    });
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(percentile * static_cast<double>(insts.size()))));

    auto recount = [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> counts(bins, 0);
        std::size_t unranked = 0;
        double rank_sum = 0.0;
        std::size_t ranked = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& docs = run.runs.at(insts[i].qid);
            std::size_t rank = 0;
            for (const auto& doc : docs)
                if (doc.doc_id == insts[i].doc) {
                    rank = doc.rank;
                    break;
                }
            if (rank == 0) {
                ++unranked;
                continue;
            }
            const double r = static_cast<double>(rank) / static_cast<double>(docs.size());
            ++counts[std::min(
                static_cast<std::size_t>(std::ceil(r * static_cast<double>(bins))) - 1,
                bins - 1)];
            rank_sum += static_cast<double>(rank);
            ++ranked;
        }
        const double mean =
            ranked ? rank_sum / static_cast<double>(ranked)
                   : std::numeric_limits<double>::quiet_NaN();
        return std::tuple(counts, unranked, mean);
    };
    const auto [short_counts, short_unranked, short_mean] = recount(0, k);
    (void)short_mean;
    const auto [long_counts, long_unranked, long_mean] = recount(insts.size() - k, insts.size());

    bool hist_exact = hist.shortest.cohort_size == k && hist.longest.cohort_size == k &&
                      hist.shortest.unranked == short_unranked &&
                      hist.longest.unranked == long_unranked;
    for (std::size_t b = 0; b < bins; ++b)
        hist_exact = hist_exact && hist.shortest.bins[b].count == short_counts[b] &&
                     hist.longest.bins[b].count == long_counts[b];
    const double rank_err = std::abs(mean_rank - long_mean);

    const bool pass = counts_ok && worst < 1e-12 && hist_exact && rank_err < 1e-12;
    return {pass, "600 records + 100 queries; bucket stats worst |err| " + fmt(worst) +
                      ", histograms " + (hist_exact ? "exact" : "MISMATCH") +
                      ", mean-rank |err| " + fmt(rank_err)};
}

// ---- criterion 11: CLI determinism ----

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SPECLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
}

Outcome criterion_determinism() {
    const fs::path root =
        fs::temp_directory_path() / ("speclab_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);

    // planted diagnostic inputs shared by both runs of each subcommand
    const fs::path emb_path = root / "embeddings.jsonl";
    {
        std::ofstream out(emb_path);
        std::mt19937_64 gen(11);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> len(1, 550);
        for (std::size_t i = 0; i < 80; ++i) {
            out << "{\"id\": \"v" << i << "\", \"length\": " << len(gen) << ", \"vector\": [";
            for (std::size_t j = 0; j < 6; ++j) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", normal(gen));
                out << (j ? ", " : "") << buf;
            }
            out << "]}\n";
        }
    }
    const fs::path run_path = root / "run.txt";
    const fs::path qrels_path = root / "qrels.txt";
    const fs::path dlen_path = root / "lengths.txt";
    {
        std::ofstream run_out(run_path), qrels_out(qrels_path), len_out(dlen_path);
        std::mt19937_64 gen(12);
        std::uniform_int_distribution<std::size_t> len(1, 700);
        for (std::size_t q = 0; q < 25; ++q) {
            for (std::size_t r = 1; r <= 12; ++r) {
                run_out << "q" << q << " Q0 q" << q << "_d" << r << " " << r << " "
                        << (1.0 - 0.01 * static_cast<double>(r)) << " base\n";
                len_out << "q" << q << "_d" << r << " " << len(gen) << "\n";
            }
            qrels_out << "q" << q << " 0 q" << q << "_d" << (1 + q % 12) << " 1\n";
        }
    }

    const std::vector<std::pair<std::string, std::string>> jobs = {
        {"verify_theorem2", "verify theorem2 --trials 60 --seed 42 --threads 4"},
        {"verify_fenton", "verify fenton --n 5 --sigma 0.5 --samples 20000 --seed 7"},
        {"simulate_collapse",
         "simulate collapse --lengths 8,16 --tau 1.0,0.5 --pairs 12 --layers 2 --heads 2 "
         "--dim 32 --ff 64 --vocab 100 --seed 9 --threads 4 --traces"},
        {"simulate_sigma_a",
         "simulate sigma-a-sweep --n-values 8,16 --tau 1.0,0.5 --trials 15 --seed 5 --threads 3"},
        {"simulate_repeated", "simulate repeated-token --triples 5 --lengths 4,32 --layers 2 "
                              "--heads 2 --dim 32 --ff 64 --vocab 60 --seed 3"},
        {"simulate_word_mean", "simulate word-mean --lengths 10,50 --samples 30 --seed 21"},
        {"diagnose_embeddings",
         "diagnose embeddings --input " + emb_path.string() + " --edges 0,100,200,300,400,500"},
        {"diagnose_ranking", "diagnose ranking --run " + run_path.string() + " --qrels " +
                                 qrels_path.string() + " --doc-lengths " + dlen_path.string() +
                                 " --percentile 0.2 --bins 10"},
    };

    std::size_t compared = 0;
    for (const auto& [name, args] : jobs) {
        const fs::path dir1 = root / (name + "_1");
        const fs::path dir2 = root / (name + "_2");
        for (const auto& dir : {dir1, dir2}) {
            const int rc = run_cli(args + " --out " + dir.string());
            if (rc != 0)
                return {false, name + ": exit code " + std::to_string(rc) + " (expected 0)"};
        }
        std::set<std::string> names1, names2;
        for (const auto& e : fs::directory_iterator(dir1))
            if (e.path().extension() == ".csv") names1.insert(e.path().filename().string());
        for (const auto& e : fs::directory_iterator(dir2))
            if (e.path().extension() == ".csv") names2.insert(e.path().filename().string());
        if (names1.empty() || names1 != names2)
            return {false, name + ": data CSV sets differ between runs"};
        for (const auto& file : names1) {
            if (!same_bytes(dir1 / file, dir2 / file))
                return {false, name + ": " + file + " differs between identical runs"};
            ++compared;
        }
    }
    fs::remove_all(root);
    return {true, std::to_string(jobs.size()) + " subcommands, " + std::to_string(compared) +
                      " data CSVs byte-identical across repeated runs"};
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;  // 0 = no limit stated
    std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all = {
        {1, "spectral identities", 10.0, criterion_spectral_identities},
        {2, "iterated attention is a low-pass filter", 30.0, criterion_lemma1},
        {3, "per-application high-frequency bound", 60.0, criterion_theorem2},
        {4, "mean gain falls with length and tracks the closed form", 300.0, criterion_theorem3},
        {5, "log-normal sum moments match Monte Carlo", 120.0, criterion_fenton},
        {6, "mixed-norm product inequality", 10.0, criterion_norm_lemma},
        {7, "encoder length collapse", 600.0, criterion_collapse},
        {8, "temperature scaling counteracts collapse", 900.0, criterion_tempscale},
        {9, "repeated-token cosine rises with length", 300.0, criterion_repeated_token},
        {10, "diagnostics match brute-force oracles", 10.0, criterion_diagnostics},
        {11, "CLI runs are byte-deterministic", 0.0, criterion_determinism},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int num = std::atoi(argv[i]);
        if (num < 1 || num > 11) {
            std::fprintf(stderr, "usage: %s [criterion 1..11]...\n", argv[0]);
            return 2;
        }
        selected.push_back(num);
    }
    if (selected.empty())
        for (const auto& c : criteria()) selected.push_back(c.number);

    int failures = 0;
    for (int num : selected) {
        const auto& c = criteria()[static_cast<std::size_t>(num - 1)];
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::string timing = fmt(elapsed) + "s";
        if (c.limit_seconds > 0.0) {
            if (elapsed > c.limit_seconds) {
                out.pass = false;
                timing += " OVER LIMIT " + fmt(c.limit_seconds) + "s";
            } else {
                timing += " < " + fmt(c.limit_seconds) + "s";
            }
        }
        std::printf("[%s] criterion %d: %s (%s; %s)\n", out.pass ? "PASS" : "FAIL", c.number,
                    c.name, out.detail.c_str(), timing.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
