// ace: calibrate, score, mask, and evaluate toy transformer checkpoints.
//
// Exit codes: 0 success, 2 configuration error (bad flags, unknown metric
// or pattern, conflicting options), 3 data error (unreadable files,
// malformed containers, corpus too small), 4 verification battery failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ace/container.hpp"
#include "ace/metrics.hpp"
#include "ace/model.hpp"
#include "ace/pipeline.hpp"
#include "ace/sparsify.hpp"
#include "ace/stats.hpp"
#include "ace/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerify = 4;

// --seed defaults to ACE_SEED when the environment sets it; an explicit
// flag always wins. A garbage ACE_SEED is a configuration error.
std::uint64_t default_seed() {
    const char* env = std::getenv("ACE_SEED");
    if (!env || !*env) return 0;
    try {
        std::size_t used = 0;
        const std::string s(env);
        const std::uint64_t v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("ACE_SEED is not an unsigned integer: '" +
                                    std::string(env) + "'");
    }
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open output file " + out_path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + out_path);
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> items;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) items.push_back(item);
    if (items.empty()) throw std::invalid_argument("empty list: '" + csv + "'");
    return items;
}

struct CommonSampling {
    std::size_t nsamples = 128;
    std::size_t seqlen = 16;
    std::uint64_t seed = 0;
    std::string corpus;

    ace::CalibConfig to_config() const {
        ace::CalibConfig cfg;
        cfg.nsamples = nsamples;
        cfg.seqlen = seqlen;
        cfg.seed = seed;
        cfg.corpus = corpus;
        return cfg;
    }
};

void add_sampling_flags(CLI::App& cmd, CommonSampling& s, bool corpus_required) {
    cmd.add_option("--nsamples", s.nsamples, "calibration windows to draw")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd.add_option("--seqlen", s.seqlen, "tokens per calibration window")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd.add_option("--seed", s.seed, "sampling seed (default from ACE_SEED)")
        ->capture_default_str();
    auto* c = cmd.add_option("--corpus", s.corpus, "byte corpus file");
    if (corpus_required) c->required();
}

// Resolves metric string + varp weighting flag into a MetricKind.
ace::MetricKind resolve_metric(const std::string& name, bool varp_weight_sq) {
    ace::MetricKind kind = ace::MetricKind::parse(name);
    if (varp_weight_sq) {
        if (kind.metric != ace::Metric::varp)
            throw std::invalid_argument("--varp-weight-sq only applies to varp metrics");
        kind.varp_weight_sq = true;
    }
    return kind;
}

// Resolves pattern string + --group into a SparsityPattern.
ace::SparsityPattern resolve_pattern(const std::string& text, const std::string& group) {
    ace::SparsityPattern p = ace::SparsityPattern::parse(text);
    if (group.empty()) return p;
    if (p.kind != ace::SparsityPattern::Kind::unstructured)
        throw std::invalid_argument("--group only applies to unstructured patterns");
    if (group == "row")
        p.group = ace::SparsityPattern::Group::per_row;
    else if (group == "layer")
        p.group = ace::SparsityPattern::Group::per_layer;
    else
        throw std::invalid_argument("--group must be 'row' or 'layer', got '" + group + "'");
    return p;
}

ace::DampingPolicy resolve_damping(double damp_factor, double lambda0) {
    if (lambda0 > 0.0) return ace::DampingPolicy::fixed(lambda0);
    ace::DampingPolicy p = ace::DampingPolicy::proportional();
    p.damp_factor = damp_factor;
    return p;
}

int run_init_toy(const std::string& out_dir, std::uint64_t seed, std::size_t corpus_bytes) {
    ace::ModelManifest manifest = ace::default_toy_manifest(seed);
    ace::ToyTransformer model = ace::init_model(manifest);
    ace::save_model(out_dir, model);

    const auto corpus_path = std::filesystem::path(out_dir) / "corpus.txt";
    {
        std::ofstream out(corpus_path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + corpus_path.string());
        out << ace::generate_corpus_text(seed, corpus_bytes);
        if (!out) throw std::runtime_error("write failed for " + corpus_path.string());
    }

    std::cout << "wrote model (" << manifest.layer_names.size() << " prunable layers, d_model "
              << manifest.d_model << ", seed " << seed << ") to " << out_dir << "\n";
    std::cout << "wrote " << corpus_bytes << "-byte corpus to " << corpus_path.string() << "\n";
    return kExitOk;
}

int run_stats(const std::string& model_dir, const CommonSampling& sampling,
              double damp_factor, double lambda0, const std::string& out_path) {
    const ace::ToyTransformer model = ace::load_model(model_dir);
    const ace::CalibrationResult result =
        ace::run_calibration(model, sampling.to_config(), resolve_damping(damp_factor, lambda0));
    ace::write_stats_file(out_path, result.stats);
    std::cout << "calibrated " << result.stats.size() << " layers over " << result.token_count
              << " tokens in " << result.wall_seconds << " s\n";
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int run_prune(const std::string& model_dir, const std::string& stats_path,
              const std::string& metric_name, bool varp_weight_sq,
              const std::string& pattern_text, const std::string& group, std::size_t jobs,
              const std::string& out_dir, const std::string& masks_path) {
    const ace::MetricKind kind = resolve_metric(metric_name, varp_weight_sq);
    const ace::SparsityPattern pattern = resolve_pattern(pattern_text, group);

    ace::ToyTransformer model = ace::load_model(model_dir);
    const auto stats = ace::read_stats_file(stats_path);
    const ace::PruneResult result = ace::prune_model(model, stats, kind, pattern, jobs);
    ace::save_model(out_dir, model);
    if (!masks_path.empty()) ace::write_masks(masks_path, result.masks);

    for (const auto& t : result.timings)
        std::cout << "  " << t.layer << ": " << t.seconds << " s\n";
    std::cout << "pruned " << result.masks.size() << " layers (" << kind.to_string() << ", "
              << pattern.to_string() << ") in " << result.total_seconds << " s\n";
    std::cout << "wrote " << out_dir << "\n";
    if (!masks_path.empty()) std::cout << "wrote " << masks_path << "\n";
    return kExitOk;
}

int run_eval(const std::string& target_dir, const std::string& dense_dir,
             const CommonSampling& sampling, std::size_t eval_tokens,
             const std::string& format, const std::string& out_path) {
    const ace::ReportFormat fmt = ace::parse_report_format(format);
    const ace::ToyTransformer target = ace::load_model(target_dir);
    std::optional<ace::ToyTransformer> dense;
    if (!dense_dir.empty()) dense = ace::load_model(dense_dir);

    const ace::EvalReport report =
        ace::evaluate_model(dense, target, sampling.to_config(), eval_tokens);
    emit(out_path, ace::eval_report_to_string(report, fmt));
    for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
    return kExitOk;
}

int run_compare(const std::string& model_dir, const CommonSampling& sampling,
                const std::string& metrics_csv, const std::string& patterns_csv,
                const std::string& seqlens_csv, std::size_t eval_tokens, std::size_t jobs,
                const std::string& format, const std::string& out_path) {
    const ace::ReportFormat fmt = ace::parse_report_format(format);

    // Parse the whole grid up front so a typo is a config error, not a
    // half-finished sweep.
    const std::vector<std::string> metric_names = split_list(metrics_csv);
    const std::vector<std::string> pattern_names = split_list(patterns_csv);
    std::vector<ace::MetricKind> metrics;
    for (const auto& m : metric_names) metrics.push_back(ace::MetricKind::parse(m));
    std::vector<ace::SparsityPattern> patterns;
    for (const auto& p : pattern_names) patterns.push_back(ace::SparsityPattern::parse(p));
    std::vector<std::size_t> seqlens;
    for (const auto& s : split_list(seqlens_csv)) {
        try {
            const long long v = std::stoll(s);
            if (v <= 0) throw std::invalid_argument("");
            seqlens.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw std::invalid_argument("bad seqlen '" + s + "'");
        }
    }

    const ace::ToyTransformer dense = ace::load_model(model_dir);
    std::vector<ace::CompareRow> rows;

    for (std::size_t seqlen : seqlens) {
        CommonSampling local = sampling;
        local.seqlen = seqlen;
        const ace::CalibConfig cfg = local.to_config();
        const ace::CalibrationResult calib = ace::run_calibration(dense, cfg);

        for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
            for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
                ace::CompareRow row;
                row.metric = metric_names[mi];
                row.pattern = pattern_names[pi];
                row.seqlen = seqlen;
                row.calib_seconds = calib.wall_seconds;
                try {
                    ace::ToyTransformer pruned = dense;
                    const ace::PruneResult pr =
                        ace::prune_model(pruned, calib.stats, metrics[mi], patterns[pi], jobs);
                    row.prune_seconds = pr.total_seconds;
                    const ace::EvalReport report =
                        ace::evaluate_model(std::optional<ace::ToyTransformer>(dense), pruned,
                                            cfg, eval_tokens);
                    row.ppl = report.ppl;
                    row.mean_frob_rel = report.mean_frob_rel;
                    row.status = "ok";
                } catch (const std::exception& e) {
                    row.status = e.what();
                }
                rows.push_back(row);
            }
        }
    }

    emit(out_path, ace::compare_rows_to_string(rows, fmt));
    return kExitOk;
}

int run_verify(std::uint64_t seed, const std::string& format, const std::string& out_path) {
    const std::vector<ace::CheckResult> checks = ace::run_verification(seed);
    std::string text;
    if (format == "json")
        text = ace::verification_report_json(checks);
    else if (format == "table")
        text = ace::verification_report_table(checks);
    else
        throw std::invalid_argument("verify format must be 'table' or 'json', got '" + format +
                                    "'");
    emit(out_path, text);
    for (const auto& c : checks)
        if (!c.pass) return kExitVerify;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"activation-aware pruning toolkit for toy transformer checkpoints"};
    app.require_subcommand(1);

    std::uint64_t env_seed = 0;
    try {
        env_seed = default_seed();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    // init-toy
    auto* cmd_init = app.add_subcommand("init-toy", "create a fresh toy checkpoint and corpus");
    std::string init_out;
    std::uint64_t init_seed = env_seed;
    std::size_t init_corpus_bytes = 65536;
    cmd_init->add_option("--out", init_out, "output model directory")->required();
    cmd_init->add_option("--seed", init_seed, "weight init seed (default from ACE_SEED)")
        ->capture_default_str();
    cmd_init->add_option("--corpus-bytes", init_corpus_bytes, "generated corpus size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    // stats
    auto* cmd_stats = app.add_subcommand("stats", "collect streaming activation statistics");
    std::string stats_model, stats_out;
    CommonSampling stats_sampling;
    stats_sampling.seed = env_seed;
    double stats_damp = 0.01, stats_lambda0 = 0.0;
    cmd_stats->add_option("--model", stats_model, "model directory")->required();
    add_sampling_flags(*cmd_stats, stats_sampling, true);
    cmd_stats->add_option("--damp-factor", stats_damp, "proportional damping factor")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd_stats->add_option("--lambda0", stats_lambda0,
                          "fixed damping constant (overrides --damp-factor)");
    cmd_stats->add_option("--out", stats_out, "output stats file")->required();

    // prune
    auto* cmd_prune = app.add_subcommand("prune", "score weights and apply sparsity masks");
    std::string prune_model_dir, prune_stats, prune_metric, prune_pattern, prune_group;
    std::string prune_out, prune_masks;
    bool prune_varp_sq = false;
    std::size_t prune_jobs = 1;
    cmd_prune->add_option("--model", prune_model_dir, "model directory")->required();
    cmd_prune->add_option("--stats", prune_stats, "calibration stats file")->required();
    cmd_prune
        ->add_option("--metric", prune_metric,
                     "magnitude | wanda | ria[:exp] | sgptdiag | cosp | varp[:rational|:moment] "
                     "| cosp+varp")
        ->required();
    cmd_prune->add_flag("--varp-weight-sq", prune_varp_sq,
                        "weight varp scores by w^2 instead of |w|");
    cmd_prune->add_option("--pattern", prune_pattern, "dense | u:<ratio> | <n>:<m>")->required();
    cmd_prune->add_option("--group", prune_group,
                          "unstructured budget scope: row (default) or layer");
    cmd_prune->add_option("--jobs", prune_jobs, "worker threads across layers")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd_prune->add_option("--out", prune_out, "output model directory")->required();
    cmd_prune->add_option("--masks", prune_masks, "also write keep masks to this file");

    // eval
    auto* cmd_eval = app.add_subcommand("eval", "perplexity and reconstruction report");
    std::string eval_target, eval_dense, eval_format = "csv", eval_out;
    CommonSampling eval_sampling;
    eval_sampling.seed = env_seed;
    std::size_t eval_tokens = 16384;
    cmd_eval->add_option("target", eval_target, "model directory to evaluate")->required();
    cmd_eval->add_option("--model", eval_dense, "dense reference for reconstruction errors");
    add_sampling_flags(*cmd_eval, eval_sampling, true);
    cmd_eval->add_option("--eval-tokens", eval_tokens, "perplexity token cap (0 = whole corpus)")
        ->capture_default_str();
    cmd_eval->add_option("--format", eval_format, "csv | markdown | json")
        ->capture_default_str();
    cmd_eval->add_option("--out", eval_out, "write report here instead of stdout");

    // compare
    auto* cmd_cmp = app.add_subcommand("compare", "sweep metrics x patterns x seqlens");
    std::string cmp_model, cmp_out, cmp_format = "csv";
    std::string cmp_metrics = "magnitude,wanda,ria,sgptdiag,cosp,varp,cosp+varp";
    std::string cmp_patterns = "2:4,4:8,u:0.5";
    std::string cmp_seqlens = "16";
    CommonSampling cmp_sampling;
    cmp_sampling.seed = env_seed;
    std::size_t cmp_eval_tokens = 16384, cmp_jobs = 1;
    cmd_cmp->add_option("--model", cmp_model, "dense model directory")->required();
    add_sampling_flags(*cmd_cmp, cmp_sampling, true);
    cmd_cmp->add_option("--metrics", cmp_metrics, "comma list of metrics")
        ->capture_default_str();
    cmd_cmp->add_option("--patterns", cmp_patterns, "comma list of patterns")
        ->capture_default_str();
    cmd_cmp->add_option("--seqlens", cmp_seqlens, "comma list of calibration seqlens")
        ->capture_default_str();
    cmd_cmp->add_option("--eval-tokens", cmp_eval_tokens, "perplexity token cap (0 = all)")
        ->capture_default_str();
    cmd_cmp->add_option("--jobs", cmp_jobs, "worker threads for pruning")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd_cmp->add_option("--format", cmp_format, "csv | markdown | json")->capture_default_str();
    cmd_cmp->add_option("--out", cmp_out, "write table here instead of stdout");

    // verify
    auto* cmd_verify = app.add_subcommand("verify", "run the numeric verification battery");
    std::uint64_t verify_seed = env_seed;
    std::string verify_format = "table", verify_out;
    cmd_verify->add_option("--seed", verify_seed, "battery seed (default from ACE_SEED)")
        ->capture_default_str();
    cmd_verify->add_option("--format", verify_format, "table | json")->capture_default_str();
    cmd_verify->add_option("--out", verify_out, "write report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*cmd_init) return run_init_toy(init_out, init_seed, init_corpus_bytes);
        if (*cmd_stats)
            return run_stats(stats_model, stats_sampling, stats_damp, stats_lambda0, stats_out);
        if (*cmd_prune)
            return run_prune(prune_model_dir, prune_stats, prune_metric, prune_varp_sq,
                             prune_pattern, prune_group, prune_jobs, prune_out, prune_masks);
        if (*cmd_eval)
            return run_eval(eval_target, eval_dense, eval_sampling, eval_tokens, eval_format,
                            eval_out);
        if (*cmd_cmp)
            return run_compare(cmp_model, cmp_sampling, cmp_metrics, cmp_patterns, cmp_seqlens,
                               cmp_eval_tokens, cmp_jobs, cmp_format, cmp_out);
        if (*cmd_verify) return run_verify(verify_seed, verify_format, verify_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
