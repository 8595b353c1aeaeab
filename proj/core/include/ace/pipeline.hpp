#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ace/model.hpp"
#include "ace/sparsify.hpp"

namespace ace {

// Calibration capture over sampled corpus windows. One pass retains raw
// rows per layer, then lambda resolves from each layer's own full preview
// and the retained rows accumulate in sample order. Rerunning with the
// same config is byte-identical.
struct CalibrationResult {
    std::map<std::string, FeatureStats> stats;
    std::size_t token_count = 0;
    double wall_seconds = 0.0;
};

CalibrationResult run_calibration(const ToyTransformer& model, const CalibConfig& cfg,
                                  const DampingPolicy& policy = DampingPolicy::proportional(),
                                  CaptureBuffer* raw_out = nullptr);

void write_stats_file(const std::filesystem::path& path,
                      const std::map<std::string, FeatureStats>& per_layer);
std::map<std::string, FeatureStats> read_stats_file(const std::filesystem::path& path);

struct LayerTiming {
    std::string layer;
    double seconds = 0.0;
};

struct PruneResult {
    std::map<std::string, PruneMask> masks;
    std::vector<LayerTiming> timings;  // manifest layer order
    double total_seconds = 0.0;
};

// Scores and masks every manifest layer, rewriting the model's weights in
// place. Layers are distributed over up to `jobs` threads; per-layer
// results are independent, so any jobs value gives bit-identical output.
PruneResult prune_model(ToyTransformer& model,
                        const std::map<std::string, FeatureStats>& stats,
                        const MetricKind& metric, const SparsityPattern& pattern,
                        std::size_t jobs = 1);

struct LayerEval {
    std::string layer;
    double frob_rel = 0.0;
    double mean_cos = 0.0;
};

struct EvalReport {
    double ppl = 0.0;
    std::size_t eval_tokens = 0;
    std::vector<LayerEval> layers;  // empty without a dense reference
    double mean_frob_rel = 0.0;
    double mean_mean_cos = 0.0;
    std::vector<std::string> warnings;
};

// Perplexity of `target` over the corpus (first eval_token_cap tokens;
// 0 = everything), plus per-layer reconstruction errors against the dense
// reference when one is supplied. Reconstruction activations come from a
// fresh capture pass on the dense model with cfg's sampling parameters.
EvalReport evaluate_model(const std::optional<ToyTransformer>& dense,
                          const ToyTransformer& target, const CalibConfig& cfg,
                          std::size_t eval_token_cap);

enum class ReportFormat { csv, markdown, json };
ReportFormat parse_report_format(const std::string& s);

std::string eval_report_to_string(const EvalReport& report, ReportFormat fmt);

struct CompareRow {
    std::string metric;
    std::string pattern;
    std::size_t seqlen = 0;
    double ppl = 0.0;
    double mean_frob_rel = 0.0;
    double calib_seconds = 0.0;
    double prune_seconds = 0.0;
    std::string status;  // "ok" or the failure message
};

std::string compare_rows_to_string(const std::vector<CompareRow>& rows, ReportFormat fmt);

}  // namespace ace
