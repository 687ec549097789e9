#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "speclab/attention.hpp"
#include "speclab/csv.hpp"
#include "speclab/encoder.hpp"
#include "speclab/io.hpp"
#include "speclab/metrics.hpp"
#include "speclab/spectral.hpp"
#include "speclab/verify.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// 0 = success, 1 = a declared check failed, 64 = usage, 65 = bad input.
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 64;
constexpr int kExitInput = 65;

struct CommonOpts {
    std::uint64_t seed = 42;
    std::string out = ".";
    unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "Master seed")->capture_default_str();
    cmd->add_option("--out", opts.out, "Output directory")->capture_default_str();
    cmd->add_option("--threads", opts.threads, "Worker threads (1 = sequential)")
        ->check(CLI::Range(1u, 256u))
        ->capture_default_str();
}

struct EncoderOpts {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t ff = 256;
    std::size_t vocab = 1000;
    std::string pooling = "mean";
    bool layernorm = false;
    bool positional = false;
    bool no_residual = false;
    bool no_ffn = false;
};

void add_encoder(CLI::App* cmd, EncoderOpts& e) {
    cmd->add_option("--layers", e.layers, "Encoder layers")->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--heads", e.heads, "Attention heads")->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--dim", e.dim, "Model width")->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--ff", e.ff, "Feed-forward width")->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--vocab", e.vocab, "Vocabulary size")->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--pooling", e.pooling, "Pooling: mean or first-token")
        ->check(CLI::IsMember({"mean", "first-token"}))
        ->capture_default_str();
    cmd->add_flag("--layernorm", e.layernorm, "Enable closing layernorm");
    cmd->add_flag("--positional", e.positional, "Add sinusoidal positions");
    cmd->add_flag("--no-residual", e.no_residual, "Disable residual connections");
    cmd->add_flag("--no-ffn", e.no_ffn, "Disable the feed-forward block");
}

speclab::EncoderConfig make_encoder_config(const EncoderOpts& e, std::uint64_t seed) {
    speclab::EncoderConfig cfg;
    cfg.layers = e.layers;
    cfg.heads = e.heads;
    cfg.d = e.dim;
    cfg.ff_dim = e.ff;
    cfg.vocab_size = e.vocab;
    cfg.pooling = speclab::parse_pooling(e.pooling);
    cfg.use_layernorm = e.layernorm;
    cfg.use_positional = e.positional;
    cfg.use_residual = !e.no_residual;
    cfg.use_ffn = !e.no_ffn;
    cfg.seed = seed;
    if (cfg.d % cfg.heads != 0)
        throw CLI::ValidationError("--dim must be a multiple of --heads");
    return cfg;
}

json encoder_json(const speclab::EncoderConfig& c) {
    return json{{"layers", c.layers},
                {"heads", c.heads},
                {"dim", c.d},
                {"ff_dim", c.ff_dim},
                {"vocab_size", c.vocab_size},
                {"pooling", speclab::to_string(c.pooling)},
                {"use_residual", c.use_residual},
                {"use_ffn", c.use_ffn},
                {"use_layernorm", c.use_layernorm},
                {"use_positional", c.use_positional}};
}

json common_json(const CommonOpts& o) {
    return json{{"seed", o.seed}, {"out", o.out}, {"threads", o.threads}};
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json checks_json(const std::vector<speclab::CheckResult>& checks) {
    json arr = json::array();
    for (const auto& c : checks)
        arr.push_back(json{{"name", c.name},
                           {"pass", c.pass},
                           {"measured", c.measured},
                           {"threshold", c.threshold},
                           {"note", c.note}});
    return arr;
}

void print_checks(const std::vector<speclab::CheckResult>& checks) {
    for (const auto& c : checks)
        std::cout << (c.pass ? "   ok  " : " FAIL  ") << c.name
                  << "  (measured " << speclab::csv_double(c.measured) << ", threshold "
                  << speclab::csv_double(c.threshold) << ")\n";
}

// The timestamp and duration live only here; data CSVs carry no time-varying
// fields, so identical invocations rewrite them byte for byte.
void write_report(const fs::path& out_dir, const std::string& subcommand, const json& config,
                  const std::vector<speclab::CheckResult>& checks,
                  const std::vector<std::string>& artifacts, double duration_ms) {
    json report{{"subcommand", subcommand},
                {"config", config},
                {"checks", checks_json(checks)},
                {"all_checks_pass", speclab::all_pass(checks)},
                {"artifacts", artifacts},
                {"duration_ms", duration_ms},
                {"timestamp", utc_timestamp()}};
    std::ofstream out(out_dir / "report.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report.json");
    out << report.dump(2) << '\n';
}

struct ActionContext {
    std::string subcommand;
    json config;
    std::vector<speclab::CheckResult> checks;
    std::vector<std::string> artifacts;
};

int g_exit = 0;

// Runs one subcommand body, then writes its report and prints its checks.
template <typename Fn>
void run_action(const CommonOpts& common, const std::string& name, Fn&& body) {
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(common.out);
    ActionContext ctx;
    ctx.subcommand = name;
    body(ctx);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    print_checks(ctx.checks);
    write_report(common.out, name, ctx.config, ctx.checks, ctx.artifacts, ms);
    if (!speclab::all_pass(ctx.checks)) g_exit = kExitCheckFailure;
    std::cout << name << ": " << (speclab::all_pass(ctx.checks) ? "all checks pass" : "CHECK FAILURE")
              << " (" << ctx.artifacts.size() << " artifact(s) in " << common.out << ")\n";
}

std::string trace_name(double tau, std::size_t len) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "traces_tau%g_len%zu.csv", tau, len);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral laboratory for attention low-pass behavior"};
    app.set_config("--config", "", "Optional config file (command-line flags win)");
    app.require_subcommand(1);

    // ---- verify ----
    CLI::App* verify = app.add_subcommand("verify", "Run a verification suite");
    verify->require_subcommand(1);

    struct {
        CommonOpts common;
        std::size_t trials = 100, n = 64, d = 32, t_max = 100;
        bool zero_mean_probe = false;
    } lemma1_opts;
    {
        CLI::App* cmd = verify->add_subcommand("lemma1", "Low-pass convergence of A^t");
        add_common(cmd, lemma1_opts.common);
        cmd->add_option("--trials", lemma1_opts.trials, "Sampled attention matrices")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--n", lemma1_opts.n, "Sequence length")->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--d", lemma1_opts.d, "Key/query dimension")->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--t-max", lemma1_opts.t_max, "Iteration horizon")
            ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))->capture_default_str();
        cmd->add_flag("--zero-mean-probe", lemma1_opts.zero_mean_probe,
                      "Use a degenerate zero-mean probe (rejected by the suite)");
        cmd->callback([&] {
            const auto& o = lemma1_opts;
            run_action(o.common, "verify lemma1", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["trials"] = o.trials;
                ctx.config["n"] = o.n;
                ctx.config["d"] = o.d;
                ctx.config["t_max"] = o.t_max;
                const auto res = speclab::lemma1_suite(o.trials, o.n, o.d, o.common.seed, o.t_max,
                                                       o.zero_mean_probe);
                ctx.checks = res.checks;
                auto out = speclab::open_csv((fs::path(o.common.out) / "lemma1.csv").string());
                speclab::CsvWriter w(out);
                w.header({"trial", "seed", "r1", "max_ratio_t_ge2", "r_final", "pass"});
                for (const auto& r : res.rows) {
                    w.field(r.trial).field(r.seed).field(r.r1).field(r.max_rest).field(r.r_final);
                    w.field(std::string(r.pass ? "1" : "0"));
                    w.end_row();
                }
                ctx.artifacts = {"lemma1.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        std::size_t trials = 1000, n_min = 4, n_max = 128;
    } th2_opts;
    {
        CLI::App* cmd = verify->add_subcommand("theorem2", "Per-application HC norm bound");
        add_common(cmd, th2_opts.common);
        cmd->add_option("--trials", th2_opts.trials, "Randomized trials")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--n-min", th2_opts.n_min, "Smallest sequence length")
            ->check(CLI::Range(std::size_t{2}, std::size_t{4096}))->capture_default_str();
        cmd->add_option("--n-max", th2_opts.n_max, "Largest sequence length")
            ->check(CLI::Range(std::size_t{2}, std::size_t{4096}))->capture_default_str();
        cmd->callback([&] {
            const auto& o = th2_opts;
            if (o.n_max < o.n_min) throw CLI::ValidationError("--n-max must be >= --n-min");
            run_action(o.common, "verify theorem2", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["trials"] = o.trials;
                ctx.config["n_min"] = o.n_min;
                ctx.config["n_max"] = o.n_max;
                const auto res = speclab::theorem2_suite(o.trials, o.n_min, o.n_max, o.common.seed,
                                                         o.common.threads);
                ctx.checks = res.checks;
                auto out = speclab::open_csv((fs::path(o.common.out) / "theorem2.csv").string());
                speclab::CsvWriter w(out);
                w.header({"trial", "n", "lhs", "rhs", "slack", "pass"});
                for (const auto& r : res.rows) {
                    w.field(r.trial).field(r.n).field(r.lhs).field(r.rhs).field(r.slack);
                    w.field(std::string(r.pass ? "1" : "0"));
                    w.end_row();
                }
                ctx.artifacts = {"theorem2.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        std::size_t trials = 100;
        std::vector<std::size_t> n_values = {8, 16, 32, 64, 128, 256};
    } th3_opts;
    {
        CLI::App* cmd = verify->add_subcommand(
            "theorem3", "Length direction of the mean high-frequency gain");
        add_common(cmd, th3_opts.common);
        cmd->add_option("--trials", th3_opts.trials, "Trials per length")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--n-values", th3_opts.n_values, "Sequence lengths")
            ->delimiter(',')->check(CLI::Range(std::size_t{2}, std::size_t{4096}));
        cmd->callback([&] {
            const auto& o = th3_opts;
            run_action(o.common, "verify theorem3", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["trials"] = o.trials;
                ctx.config["n_values"] = o.n_values;
                const auto res = speclab::theorem3_suite(o.n_values, o.trials, o.common.seed,
                                                         o.common.threads);
                ctx.checks = res.checks;
                auto out = speclab::open_csv((fs::path(o.common.out) / "theorem3.csv").string());
                speclab::CsvWriter w(out);
                w.header({"n", "tau", "sigma_s_hat", "sigma_a_mean", "sigma_a_std",
                          "theorem3_bound", "trials", "seed"});
                for (const auto& r : res.rows) {
                    w.field(r.n).field(r.tau).field(r.sigma_s_hat).field(r.sigma_a_mean);
                    w.field(r.sigma_a_std).field(r.bound).field(r.trials).field(r.seed);
                    w.end_row();
                }
                ctx.artifacts = {"theorem3.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        std::vector<std::size_t> ns = {10, 100};
        std::vector<double> sigmas = {0.25, 0.5, 1.0};
        std::size_t samples = 100000;
    } fenton_opts;
    {
        CLI::App* cmd = verify->add_subcommand("fenton", "Log-normal sum moment approximation");
        add_common(cmd, fenton_opts.common);
        cmd->add_option("--n", fenton_opts.ns, "Summand counts")->delimiter(',')
            ->check(CLI::PositiveNumber);
        cmd->add_option("--sigma", fenton_opts.sigmas, "Per-summand log std values")
            ->delimiter(',')->check(CLI::PositiveNumber);
        cmd->add_option("--samples", fenton_opts.samples, "Monte Carlo samples per cell")
            ->check(CLI::Range(std::size_t{2}, std::size_t{100000000}))->capture_default_str();
        cmd->callback([&] {
            const auto& o = fenton_opts;
            run_action(o.common, "verify fenton", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["n"] = o.ns;
                ctx.config["sigma"] = o.sigmas;
                ctx.config["samples"] = o.samples;
                const auto res = speclab::fenton_suite(o.ns, o.sigmas, o.samples, o.common.seed,
                                                       0.10, 0.01);
                ctx.checks = res.checks;
                auto out = speclab::open_csv((fs::path(o.common.out) / "fenton.csv").string());
                speclab::CsvWriter w(out);
                w.header({"n", "sigma", "mu_pred", "var_pred", "mc_mean", "mc_var",
                          "mean_rel_err", "var_rel_err", "pass"});
                for (const auto& r : res.rows) {
                    w.field(r.n).field(r.sigma).field(r.mu_pred).field(r.var_pred);
                    w.field(r.mc_mean).field(r.mc_var).field(r.mean_rel_err).field(r.var_rel_err);
                    w.field(std::string(r.pass ? "1" : "0"));
                    w.end_row();
                }
                ctx.artifacts = {"fenton.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        std::size_t trials = 500;
    } norm_opts;
    {
        CLI::App* cmd = verify->add_subcommand("norm-lemma", "Mixed-norm product inequality");
        add_common(cmd, norm_opts.common);
        cmd->add_option("--trials", norm_opts.trials, "Random matrix pairs")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->callback([&] {
            const auto& o = norm_opts;
            run_action(o.common, "verify norm-lemma", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["trials"] = o.trials;
                const auto res = speclab::norm_lemma_suite(o.trials, o.common.seed);
                ctx.checks = res.checks;
                auto out = speclab::open_csv((fs::path(o.common.out) / "norm_lemma.csv").string());
                speclab::CsvWriter w(out);
                w.header({"pair", "m", "k", "p", "lhs", "bound_spec_frob", "bound_frob_spec",
                          "pass"});
                for (const auto& r : res.rows) {
                    w.field(r.pair).field(r.m).field(r.k).field(r.p).field(r.lhs);
                    w.field(r.bound_a).field(r.bound_b);
                    w.field(std::string(r.pass ? "1" : "0"));
                    w.end_row();
                }
                ctx.artifacts = {"norm_lemma.csv"};
            });
        });
    }

    // ---- simulate ----
    CLI::App* simulate = app.add_subcommand("simulate", "Run a seeded experiment sweep");
    simulate->require_subcommand(1);

    struct {
        CommonOpts common;
        EncoderOpts enc;
        std::vector<std::size_t> lengths = {16, 32, 64, 128, 256};
        std::vector<double> taus = {1.0};
        std::size_t pairs = 200;
        bool traces = false;
    } collapse_opts;
    {
        CLI::App* cmd = simulate->add_subcommand("collapse", "Pairwise-cosine length sweep");
        add_common(cmd, collapse_opts.common);
        add_encoder(cmd, collapse_opts.enc);
        cmd->add_option("--lengths", collapse_opts.lengths, "Sequence lengths")
            ->delimiter(',')->check(CLI::PositiveNumber);
        cmd->add_option("--tau", collapse_opts.taus, "Temperatures")
            ->delimiter(',')->check(CLI::Range(1e-9, 1.0));
        cmd->add_option("--pairs", collapse_opts.pairs, "Sequences sampled per length")
            ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))->capture_default_str();
        cmd->add_flag("--traces", collapse_opts.traces,
                      "Also write per-layer traces for the first sequence of each cell");
        cmd->callback([&] {
            const auto& o = collapse_opts;
            run_action(o.common, "simulate collapse", [&](ActionContext& ctx) {
                const auto cfg = make_encoder_config(o.enc, o.common.seed);
                ctx.config = common_json(o.common);
                ctx.config["encoder"] = encoder_json(cfg);
                ctx.config["lengths"] = o.lengths;
                ctx.config["tau"] = o.taus;
                ctx.config["pairs"] = o.pairs;
                const auto params = speclab::init_encoder(cfg);
                auto out = speclab::open_csv((fs::path(o.common.out) / "collapse.csv").string());
                speclab::CsvWriter w(out);
                w.header({"length", "tau", "mean_cos", "std_cos", "pairs", "seed"});
                for (double tau : o.taus) {
                    const auto rows = speclab::collapse_sweep(params, o.lengths, o.pairs, tau,
                                                              o.common.seed, o.common.threads);
                    for (const auto& r : rows) {
                        w.field(r.length).field(r.tau).field(r.mean_cos).field(r.std_cos);
                        w.field(r.pairs).field(r.seed);
                        w.end_row();
                    }
                }
                ctx.artifacts = {"collapse.csv"};
                if (o.traces) {
                    for (double tau : o.taus) {
                        for (std::size_t li = 0; li < o.lengths.size(); ++li) {
                            const auto seq = speclab::sweep_sequence(
                                o.common.seed, li, o.pairs, 0, o.lengths[li], cfg.vocab_size);
                            const auto fw = speclab::encoder_forward(params, seq, tau, true);
                            const std::string name = trace_name(tau, o.lengths[li]);
                            auto tout =
                                speclab::open_csv((fs::path(o.common.out) / name).string());
                            speclab::CsvWriter tw(tout);
                            tw.header({"layer", "log_hc_ratio", "log_bound"});
                            for (std::size_t l = 0; l < fw.trace.entries.size(); ++l) {
                                tw.field(l).field(fw.trace.entries[l].log_hc_ratio);
                                tw.field(fw.trace.entries[l].log_bound);
                                tw.end_row();
                            }
                            ctx.artifacts.push_back(name);
                        }
                    }
                }
            });
        });
    }

    struct {
        CommonOpts common;
        EncoderOpts enc;
        std::vector<std::size_t> lengths = {4, 16, 64, 256};
        double tau = 1.0;
        std::size_t token_a = 0, token_b = 1, triples = 0;
    } rep_opts;
    {
        CLI::App* cmd = simulate->add_subcommand("repeated-token",
                                                 "Cosine of repeated-token embeddings");
        add_common(cmd, rep_opts.common);
        add_encoder(cmd, rep_opts.enc);
        cmd->add_option("--lengths", rep_opts.lengths, "Repetition counts")
            ->delimiter(',')->check(CLI::PositiveNumber);
        cmd->add_option("--tau", rep_opts.tau, "Temperature")
            ->check(CLI::Range(1e-9, 1.0))->capture_default_str();
        cmd->add_option("--token-a", rep_opts.token_a, "First token id")->capture_default_str();
        cmd->add_option("--token-b", rep_opts.token_b, "Second token id")->capture_default_str();
        cmd->add_option("--triples", rep_opts.triples,
                        "Sample this many random (pair, model) triples instead")
            ->capture_default_str();
        cmd->callback([&] {
            const auto& o = rep_opts;
            if (o.triples == 0 &&
                (o.token_a >= o.enc.vocab || o.token_b >= o.enc.vocab))
                throw CLI::ValidationError("--token-a/--token-b must be below --vocab");
            if (o.triples == 0 && o.token_a == o.token_b)
                throw CLI::ValidationError("--token-a and --token-b must differ");
            run_action(o.common, "simulate repeated-token", [&](ActionContext& ctx) {
                const auto cfg = make_encoder_config(o.enc, o.common.seed);
                ctx.config = common_json(o.common);
                ctx.config["encoder"] = encoder_json(cfg);
                ctx.config["lengths"] = o.lengths;
                ctx.config["tau"] = o.tau;
                ctx.config["triples"] = o.triples;
                auto out =
                    speclab::open_csv((fs::path(o.common.out) / "repeated_token.csv").string());
                speclab::CsvWriter w(out);
                if (o.triples == 0) {
                    ctx.config["token_a"] = o.token_a;
                    ctx.config["token_b"] = o.token_b;
                    const auto params = speclab::init_encoder(cfg);
                    const auto rows = speclab::repeated_token_experiment(
                        params, o.token_a, o.token_b, o.lengths, o.tau);
                    w.header({"length", "cosine"});
                    for (const auto& r : rows) {
                        w.field(r.length).field(r.cosine);
                        w.end_row();
                    }
                } else {
                    w.header({"triple", "token_a", "token_b", "length", "cosine"});
                    for (std::size_t t = 0; t < o.triples; ++t) {
                        speclab::Rng rng(speclab::derive_stream_seed(o.common.seed, t + 1));
                        const auto a = static_cast<std::size_t>(rng.below(cfg.vocab_size));
                        std::size_t b = a;
                        while (b == a) b = static_cast<std::size_t>(rng.below(cfg.vocab_size));
                        speclab::EncoderConfig c = cfg;
                        c.seed = rng.next_u64();
                        const auto params = speclab::init_encoder(c);
                        const auto rows =
                            speclab::repeated_token_experiment(params, a, b, o.lengths, o.tau);
                        for (const auto& r : rows) {
                            w.field(t).field(a).field(b).field(r.length).field(r.cosine);
                            w.end_row();
                        }
                    }
                }
                ctx.artifacts = {"repeated_token.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        std::vector<std::size_t> n_values = {8, 16, 32, 64, 128, 256};
        std::vector<double> taus = {1.0};
        std::size_t d = 32, trials = 100;
        double sigma_q = 1.0, sigma_k = 1.0;
    } sweep_opts;
    {
        CLI::App* cmd = simulate->add_subcommand("sigma-a-sweep",
                                                 "Mean high-frequency gain across lengths");
        add_common(cmd, sweep_opts.common);
        cmd->add_option("--n-values", sweep_opts.n_values, "Sequence lengths")
            ->delimiter(',')->check(CLI::Range(std::size_t{2}, std::size_t{4096}));
        cmd->add_option("--tau", sweep_opts.taus, "Temperatures")
            ->delimiter(',')->check(CLI::Range(1e-9, 1.0));
        cmd->add_option("--d", sweep_opts.d, "Key/query dimension")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--trials", sweep_opts.trials, "Trials per cell")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--sigma-q", sweep_opts.sigma_q, "Query entry std")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--sigma-k", sweep_opts.sigma_k, "Key entry std")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->callback([&] {
            const auto& o = sweep_opts;
            run_action(o.common, "simulate sigma-a-sweep", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["n_values"] = o.n_values;
                ctx.config["tau"] = o.taus;
                ctx.config["d"] = o.d;
                ctx.config["trials"] = o.trials;
                ctx.config["sigma_q"] = o.sigma_q;
                ctx.config["sigma_k"] = o.sigma_k;
                speclab::AttentionConfig tmpl;
                tmpl.d = o.d;
                tmpl.sigma_q = o.sigma_q;
                tmpl.sigma_k = o.sigma_k;
                tmpl.seed = o.common.seed;
                const auto rows = speclab::sigma_a_sweep(o.n_values, o.taus, tmpl, o.trials,
                                                         o.common.threads);
                auto out =
                    speclab::open_csv((fs::path(o.common.out) / "sigma_a_sweep.csv").string());
                speclab::CsvWriter w(out);
                w.header({"n", "tau", "sigma_s_hat", "sigma_a_mean", "sigma_a_std",
                          "theorem3_bound", "trials", "seed"});
                for (const auto& r : rows) {
                    w.field(r.n).field(r.tau).field(r.sigma_s_hat).field(r.sigma_a_mean);
                    w.field(r.sigma_a_std).field(r.bound).field(r.trials).field(r.seed);
                    w.end_row();
                }
                ctx.artifacts = {"sigma_a_sweep.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        EncoderOpts enc;
        std::vector<std::size_t> lengths = {10, 50, 100, 200, 400};
        std::size_t samples = 200;
    } wm_opts;
    {
        CLI::App* cmd = simulate->add_subcommand(
            "word-mean", "Pairwise cosine of averaged raw token embeddings");
        add_common(cmd, wm_opts.common);
        add_encoder(cmd, wm_opts.enc);
        cmd->add_option("--lengths", wm_opts.lengths, "Sequence lengths")
            ->delimiter(',')->check(CLI::PositiveNumber);
        cmd->add_option("--samples", wm_opts.samples, "Sequences per length")
            ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))->capture_default_str();
        cmd->callback([&] {
            const auto& o = wm_opts;
            run_action(o.common, "simulate word-mean", [&](ActionContext& ctx) {
                const auto cfg = make_encoder_config(o.enc, o.common.seed);
                ctx.config = common_json(o.common);
                ctx.config["encoder"] = encoder_json(cfg);
                ctx.config["lengths"] = o.lengths;
                ctx.config["samples"] = o.samples;
                const auto params = speclab::init_encoder(cfg);
                const auto rows = speclab::mean_word_embedding_similarity(params, o.lengths,
                                                                          o.samples, o.common.seed);
                auto out = speclab::open_csv((fs::path(o.common.out) / "word_mean.csv").string());
                speclab::CsvWriter w(out);
                w.header({"length", "mean_cos", "std_cos", "samples", "seed"});
                for (const auto& r : rows) {
                    w.field(r.length).field(r.mean_cos).field(r.std_cos).field(r.samples);
                    w.field(r.seed);
                    w.end_row();
                }
                ctx.artifacts = {"word_mean.csv"};
            });
        });
    }

    // ---- diagnose ----
    CLI::App* diagnose = app.add_subcommand("diagnose", "Analyze external embedding/ranking files");
    diagnose->require_subcommand(1);

    struct {
        CommonOpts common;
        std::string input;
        std::vector<std::size_t> edges = {0, 100, 200, 300, 400, 500};
    } emb_opts;
    {
        CLI::App* cmd = diagnose->add_subcommand("embeddings",
                                                 "Bucketed cosine and centroid-distance tables");
        add_common(cmd, emb_opts.common);
        cmd->add_option("--input", emb_opts.input, "JSONL embedding records")->required();
        cmd->add_option("--edges", emb_opts.edges, "Length bucket edges")
            ->delimiter(',');
        cmd->callback([&] {
            const auto& o = emb_opts;
            run_action(o.common, "diagnose embeddings", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["input"] = o.input;
                ctx.config["edges"] = o.edges;
                const auto records = speclab::read_embeddings_file(o.input);
                speclab::BucketSpec buckets{o.edges};
                const auto cosine = speclab::pairwise_cosine_by_bucket(records, buckets);
                const auto dist = speclab::centroid_distance_by_bucket(records, buckets);
                {
                    auto out = speclab::open_csv(
                        (fs::path(o.common.out) / "cosine_by_bucket.csv").string());
                    speclab::CsvWriter w(out);
                    w.header({"bucket", "count", "pairs", "mean_cos", "std_cos"});
                    for (const auto& r : cosine) {
                        w.field(r.bucket).field(r.count).field(r.pairs).field(r.mean_cos);
                        w.field(r.std_cos);
                        w.end_row();
                    }
                }
                {
                    auto out = speclab::open_csv(
                        (fs::path(o.common.out) / "centroid_distance.csv").string());
                    speclab::CsvWriter w(out);
                    w.header({"bucket", "count", "mean_distance"});
                    for (const auto& r : dist) {
                        w.field(r.bucket).field(r.count).field(r.mean_distance);
                        w.end_row();
                    }
                }
                ctx.artifacts = {"cosine_by_bucket.csv", "centroid_distance.csv"};
            });
        });
    }

    struct {
        CommonOpts common;
        std::string run_path, qrels_path, lengths_path;
        double percentile = 0.2;
        std::size_t bins = 10;
    } rank_opts;
    {
        CLI::App* cmd = diagnose->add_subcommand("ranking",
                                                 "Rank-position histograms by document length");
        add_common(cmd, rank_opts.common);
        cmd->add_option("--run", rank_opts.run_path, "Run file (qid Q0 docid rank score tag)")
            ->required();
        cmd->add_option("--qrels", rank_opts.qrels_path, "Qrels file (qid 0 docid rel)")
            ->required();
        cmd->add_option("--doc-lengths", rank_opts.lengths_path, "Doc length file (docid length)")
            ->required();
        cmd->add_option("--percentile", rank_opts.percentile, "Length percentile in (0, 0.5]")
            ->check(CLI::Range(1e-9, 0.5))->capture_default_str();
        cmd->add_option("--bins", rank_opts.bins, "Histogram bins")
            ->check(CLI::PositiveNumber)->capture_default_str();
        cmd->callback([&] {
            const auto& o = rank_opts;
            run_action(o.common, "diagnose ranking", [&](ActionContext& ctx) {
                ctx.config = common_json(o.common);
                ctx.config["run"] = o.run_path;
                ctx.config["qrels"] = o.qrels_path;
                ctx.config["doc_lengths"] = o.lengths_path;
                ctx.config["percentile"] = o.percentile;
                ctx.config["bins"] = o.bins;
                const auto run =
                    speclab::read_ranking_inputs(o.run_path, o.qrels_path, o.lengths_path);
                const auto hist =
                    speclab::ranking_position_histogram(run, o.percentile, o.bins);
                const double mean_rank = speclab::mean_rank_of_longest(run, o.percentile);
                auto write_hist = [&](const speclab::CohortHistogram& h, const std::string& name) {
                    auto out = speclab::open_csv((fs::path(o.common.out) / name).string());
                    speclab::CsvWriter w(out);
                    w.header({"bin_lo", "bin_hi", "count"});
                    for (const auto& b : h.bins) {
                        w.field(b.bin_lo).field(b.bin_hi).field(b.count);
                        w.end_row();
                    }
                };
                write_hist(hist.shortest, "histogram_shortest.csv");
                write_hist(hist.longest, "histogram_longest.csv");
                {
                    auto out = speclab::open_csv(
                        (fs::path(o.common.out) / "ranking_summary.csv").string());
                    speclab::CsvWriter w(out);
                    w.header({"percentile", "bins", "cohort_size", "shortest_unranked",
                              "longest_unranked", "mean_rank_longest"});
                    w.field(o.percentile).field(o.bins).field(hist.longest.cohort_size);
                    w.field(hist.shortest.unranked).field(hist.longest.unranked);
                    w.field(mean_rank);
                    w.end_row();
                }
                ctx.artifacts = {"histogram_shortest.csv", "histogram_longest.csv",
                                 "ranking_summary.csv"};
            });
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    }
    return g_exit;
}
