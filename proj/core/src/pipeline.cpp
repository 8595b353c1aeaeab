#include "ace/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace ace {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

CalibrationResult run_calibration(const ToyTransformer& model, const CalibConfig& cfg,
                                  const DampingPolicy& policy, CaptureBuffer* raw_out) {
    const auto start = std::chrono::steady_clock::now();

    const auto samples = sample_calibration(cfg);

    CaptureBuffer capture;
    capture.retain_raw = true;
    for (const auto& sample : samples) forward(model, sample, &capture);

    CalibrationResult result;
    result.token_count = cfg.nsamples * cfg.seqlen;
    for (const std::string& layer : model.manifest.layer_names) {
        const Matrix preview = capture.raw_matrix(layer);
        FeatureStats stats = new_stats(preview.cols, policy, preview);
        try {
            accumulate(stats, preview);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("calibration at layer '" + layer + "': " + e.what());
        }
        result.stats.emplace(layer, std::move(stats));
    }
    if (raw_out) *raw_out = std::move(capture);
    result.wall_seconds = seconds_since(start);
    return result;
}

void write_stats_file(const std::filesystem::path& path,
                      const std::map<std::string, FeatureStats>& per_layer) {
    write_tensors(path, stats_to_tensors(per_layer), Dtype::f64);
}

std::map<std::string, FeatureStats> read_stats_file(const std::filesystem::path& path) {
    return stats_from_tensors(read_tensors(path));
}

PruneResult prune_model(ToyTransformer& model,
                        const std::map<std::string, FeatureStats>& stats,
                        const MetricKind& metric, const SparsityPattern& pattern,
                        std::size_t jobs) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::string>& layers = model.manifest.layer_names;

    for (const std::string& layer : layers)
        if (stats.find(layer) == stats.end())
            throw std::runtime_error("prune: no calibration stats for layer '" + layer + "'");

    PruneResult result;
    result.timings.resize(layers.size());
    std::vector<PruneMask> masks(layers.size());
    std::vector<Matrix> pruned(layers.size());
    std::vector<std::string> errors(layers.size());

    auto work = [&](std::size_t idx) {
        const auto layer_start = std::chrono::steady_clock::now();
        const std::string& name = layers[idx];
        try {
            const Matrix& w = model.tensor(name);
            const FinalizedStats fin = finalize(stats.at(name));
            const ScoreMatrix scores = score(w, fin, metric);
            masks[idx] = build_mask(scores, pattern);
            pruned[idx] = apply_mask(w, masks[idx]);
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
        result.timings[idx] = {name, seconds_since(layer_start)};
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < layers.size(); ++i) work(i);
    } else {
        // Static round-robin split; each layer writes only its own slot, so
        // the partition never shows up in the output.
        std::vector<std::thread> pool;
        const std::size_t n_threads = std::min(jobs, layers.size());
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < layers.size(); i += n_threads) work(i);
            });
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < layers.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error("prune at layer '" + layers[i] + "': " + errors[i]);

    for (std::size_t i = 0; i < layers.size(); ++i) {
        model.tensor(layers[i]) = std::move(pruned[i]);
        result.masks.emplace(layers[i], std::move(masks[i]));
    }
    result.total_seconds = seconds_since(start);
    return result;
}

EvalReport evaluate_model(const std::optional<ToyTransformer>& dense,
                          const ToyTransformer& target, const CalibConfig& cfg,
                          std::size_t eval_token_cap) {
    EvalReport report;

    std::ifstream in(cfg.corpus, std::ios::binary);
    if (!in) throw std::runtime_error("corpus " + cfg.corpus.string() + ": cannot open");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (eval_token_cap > 0 && text.size() > eval_token_cap) text.resize(eval_token_cap);
    if (text.size() < 2)
        throw std::runtime_error("corpus " + cfg.corpus.string() + ": too small for perplexity");

    const std::vector<int> tokens = encode_bytes(text);
    report.ppl = perplexity(target, tokens);
    report.eval_tokens = tokens.size();

    if (!dense) {
        report.warnings.push_back("no dense reference; perplexity-only report");
        return report;
    }

    CaptureBuffer capture;
    run_calibration(*dense, cfg, DampingPolicy::proportional(), &capture);

    double frob_sum = 0.0, cos_sum = 0.0;
    for (const std::string& layer : dense->manifest.layer_names) {
        const Matrix acts = capture.raw_matrix(layer);
        const ReconstructionError err =
            layer_reconstruction_error(dense->tensor(layer), target.tensor(layer), acts);
        report.layers.push_back({layer, err.frob_rel, err.mean_cos});
        frob_sum += err.frob_rel;
        cos_sum += err.mean_cos;
    }
    const double n = static_cast<double>(report.layers.size());
    report.mean_frob_rel = frob_sum / n;
    report.mean_mean_cos = cos_sum / n;
    return report;
}

ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    if (s == "json") return ReportFormat::json;
    throw std::invalid_argument("format: unknown report format '" + s + "'");
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

std::string eval_report_to_string(const EvalReport& report, ReportFormat fmt) {
    switch (fmt) {
        case ReportFormat::json: {
            nlohmann::json j;
            j["ppl"] = report.ppl;
            j["eval_tokens"] = report.eval_tokens;
            j["warnings"] = report.warnings;
            j["layers"] = nlohmann::json::array();
            for (const auto& l : report.layers)
                j["layers"].push_back(
                    {{"frob_rel", l.frob_rel}, {"mean_cos", l.mean_cos}, {"name", l.layer}});
            if (!report.layers.empty()) {
                j["mean_frob_rel"] = report.mean_frob_rel;
                j["mean_mean_cos"] = report.mean_mean_cos;
            }
            return j.dump(2) + "\n";
        }
        case ReportFormat::csv: {
            std::ostringstream os;
            os << "name,ppl,frob_rel,mean_cos\n";
            os << "model," << fmt_double(report.ppl);
            if (report.layers.empty()) os << ",,";
            else os << "," << fmt_double(report.mean_frob_rel) << ","
                   << fmt_double(report.mean_mean_cos);
            os << "\n";
            for (const auto& l : report.layers)
                os << l.layer << ",," << fmt_double(l.frob_rel) << "," << fmt_double(l.mean_cos)
                   << "\n";
            return os.str();
        }
        case ReportFormat::markdown: {
            std::ostringstream os;
            os << "| name | ppl | frob_rel | mean_cos |\n|---|---|---|---|\n";
            os << "| model | " << fmt_double(report.ppl) << " | ";
            if (report.layers.empty()) os << " | |\n";
            else os << fmt_double(report.mean_frob_rel) << " | "
                   << fmt_double(report.mean_mean_cos) << " |\n";
            for (const auto& l : report.layers)
                os << "| " << l.layer << " | | " << fmt_double(l.frob_rel) << " | "
                   << fmt_double(l.mean_cos) << " |\n";
            return os.str();
        }
    }
    throw std::invalid_argument("eval_report_to_string: unknown format");
}

std::string compare_rows_to_string(const std::vector<CompareRow>& rows, ReportFormat fmt) {
    switch (fmt) {
        case ReportFormat::json: {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows)
                j.push_back({{"calib_seconds", r.calib_seconds},
                             {"mean_frob_rel", r.mean_frob_rel},
                             {"metric", r.metric},
                             {"pattern", r.pattern},
                             {"ppl", r.ppl},
                             {"prune_seconds", r.prune_seconds},
                             {"seqlen", r.seqlen},
                             {"status", r.status}});
            return j.dump(2) + "\n";
        }
        case ReportFormat::csv: {
            std::ostringstream os;
            os << "metric,pattern,seqlen,ppl,mean_frob_rel,calib_seconds,prune_seconds,status\n";
            for (const auto& r : rows)
                os << r.metric << "," << r.pattern << "," << r.seqlen << ","
                   << fmt_double(r.ppl) << "," << fmt_double(r.mean_frob_rel) << ","
                   << fmt_double(r.calib_seconds) << "," << fmt_double(r.prune_seconds) << ","
                   << r.status << "\n";
            return os.str();
        }
        case ReportFormat::markdown: {
            std::ostringstream os;
            os << "| metric | pattern | seqlen | ppl | mean_frob_rel | calib_s | prune_s | status "
                  "|\n|---|---|---|---|---|---|---|---|\n";
            for (const auto& r : rows)
                os << "| " << r.metric << " | " << r.pattern << " | " << r.seqlen << " | "
                   << fmt_double(r.ppl) << " | " << fmt_double(r.mean_frob_rel) << " | "
                   << fmt_double(r.calib_seconds) << " | " << fmt_double(r.prune_seconds) << " | "
                   << r.status << " |\n";
            return os.str();
        }
    }
    throw std::invalid_argument("compare_rows_to_string: unknown format");
}

}  // namespace ace
