#include <doctest.h>

#include <cstdint>
#include <stdexcept>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "ace/model.hpp"
#include "ace/pipeline.hpp"
#include "ace/verify.hpp"

using ace::CalibConfig;
using ace::Matrix;
using ace::ToyTransformer;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag) {
        path = fs::temp_directory_path() /
               (std::string("ace-pipeline-test-") + tag + "-" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

CalibConfig small_config(const fs::path& dir, std::uint64_t seed) {
    const fs::path corpus = dir / "corpus.txt";
    if (!fs::exists(corpus)) {
        std::ofstream out(corpus, std::ios::binary);
        out << ace::generate_corpus_text(seed, 8192);
    }
    CalibConfig cfg;
    cfg.nsamples = 4;
    cfg.seqlen = 24;
    cfg.seed = seed;
    cfg.corpus = corpus;
    return cfg;
}

}  // namespace

TEST_CASE("calibration is deterministic and covers every prunable layer") {
    TempDir tmp("calib");
    const ToyTransformer model = ace::init_model(ace::default_toy_manifest(31));
    const CalibConfig cfg = small_config(tmp.path, 31);

    const ace::CalibrationResult r1 = ace::run_calibration(model, cfg);
    const ace::CalibrationResult r2 = ace::run_calibration(model, cfg);
    CHECK(r1.token_count == 4 * 24);
    REQUIRE(r1.stats.size() == 12);
    for (const auto& [layer, s] : r1.stats) {
        const auto& t = r2.stats.at(layer);
        CHECK(s.lambda == t.lambda);
        CHECK(s.token_count == t.token_count);
        CHECK(s.sum_sq == t.sum_sq);
        CHECK(s.sum_ratio == t.sum_ratio);
        CHECK(s.token_count == r1.token_count);
    }
}

TEST_CASE("stats files round-trip bitwise") {
    TempDir tmp("statsfile");
    const ToyTransformer model = ace::init_model(ace::default_toy_manifest(32));
    const ace::CalibrationResult r = ace::run_calibration(model, small_config(tmp.path, 32));

    const fs::path path = tmp.path / "stats.acet";
    ace::write_stats_file(path, r.stats);
    const auto back = ace::read_stats_file(path);
    REQUIRE(back.size() == r.stats.size());
    for (const auto& [layer, s] : r.stats) {
        const auto& t = back.at(layer);
        CHECK(t.lambda == s.lambda);
        CHECK(t.token_count == s.token_count);
        CHECK(t.sum_sq == s.sum_sq);
        CHECK(t.sum_quad == s.sum_quad);
        CHECK(t.sum_ratio == s.sum_ratio);
        CHECK(t.sum_ratio1 == s.sum_ratio1);
        CHECK(t.sum_ratio2 == s.sum_ratio2);
        CHECK(t.sum_token_norm_sq == s.sum_token_norm_sq);
    }
}

TEST_CASE("pruning respects the mask pattern on every layer") {
    TempDir tmp("prune");
    ToyTransformer model = ace::init_model(ace::default_toy_manifest(33));
    const ace::CalibrationResult calib = ace::run_calibration(model, small_config(tmp.path, 33));

    const ToyTransformer dense = model;
    const ace::PruneResult result =
        ace::prune_model(model, calib.stats, ace::MetricKind::parse("cosp+varp"),
                         ace::SparsityPattern::semi_structured(2, 4));
    REQUIRE(result.masks.size() == 12);
    CHECK(result.timings.size() == 12);
    for (const auto& [layer, mask] : result.masks) {
        CHECK(ace::verify_mask(mask).pass);
        CHECK(mask.kept_count() * 2 == mask.rows * mask.cols);
        // Pruned weights are the dense weights under the mask.
        const Matrix& w = model.tensor(layer);
        const Matrix& dw = dense.tensor(layer);
        for (std::size_t i = 0; i < w.size(); ++i)
            CHECK(w.data[i] == (mask.keep[i] ? dw.data[i] : 0.0));
    }
}

TEST_CASE("pruning fails loudly when stats are missing a layer") {
    TempDir tmp("prunemissing");
    ToyTransformer model = ace::init_model(ace::default_toy_manifest(34));
    auto stats = ace::run_calibration(model, small_config(tmp.path, 34)).stats;
    stats.erase("blocks.1.mlp.down");
    CHECK_THROWS_AS(ace::prune_model(model, stats, ace::MetricKind::parse("wanda"),
                                     ace::SparsityPattern::unstructured(0.5)),
                    std::runtime_error);
}

TEST_CASE("evaluating the dense model against itself is lossless") {
    TempDir tmp("evalself");
    const ToyTransformer model = ace::init_model(ace::default_toy_manifest(35));
    const CalibConfig cfg = small_config(tmp.path, 35);

    const ace::EvalReport report =
        ace::evaluate_model(std::optional<ToyTransformer>(model), model, cfg, 2048);
    CHECK(report.ppl > 0.0);
    CHECK(report.eval_tokens > 0);
    REQUIRE(report.layers.size() == 12);
    CHECK(report.mean_frob_rel == 0.0);
    CHECK(report.mean_mean_cos == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.warnings.empty());
}

TEST_CASE("ratio-0 pruning leaves perplexity bit-identical to dense") {
    TempDir tmp("evalnoop");
    ToyTransformer model = ace::init_model(ace::default_toy_manifest(36));
    const CalibConfig cfg = small_config(tmp.path, 36);
    const ToyTransformer dense = model;

    const auto stats = ace::run_calibration(model, cfg).stats;
    ace::prune_model(model, stats, ace::MetricKind::parse("magnitude"),
                     ace::SparsityPattern::unstructured(0.0));

    const auto dense_report =
        ace::evaluate_model(std::optional<ToyTransformer>(dense), dense, cfg, 2048);
    const auto noop_report =
        ace::evaluate_model(std::optional<ToyTransformer>(dense), model, cfg, 2048);
    CHECK(noop_report.ppl == dense_report.ppl);
    CHECK(noop_report.mean_frob_rel == 0.0);
}

TEST_CASE("evaluation without a dense reference warns and reports perplexity only") {
    TempDir tmp("evalnodense");
    const ToyTransformer model = ace::init_model(ace::default_toy_manifest(37));
    const ace::EvalReport report =
        ace::evaluate_model(std::nullopt, model, small_config(tmp.path, 37), 2048);
    CHECK(report.layers.empty());
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("perplexity-only") != std::string::npos);
}

TEST_CASE("report serializers emit the documented shapes") {
    ace::EvalReport report;
    report.ppl = 123.456;
    report.eval_tokens = 512;
    report.layers = {{"layer.a", 0.25, 0.75}, {"layer.b", 0.5, 0.5}};
    report.mean_frob_rel = 0.375;
    report.mean_mean_cos = 0.625;

    const std::string csv = ace::eval_report_to_string(report, ace::ReportFormat::csv);
    CHECK(csv.find("name,ppl,frob_rel,mean_cos\n") == 0);
    CHECK(csv.find("\nmodel,") != std::string::npos);
    CHECK(csv.find("layer.a,") != std::string::npos);

    const std::string md = ace::eval_report_to_string(report, ace::ReportFormat::markdown);
    CHECK(md.find("|") != std::string::npos);
    CHECK(md.find("layer.b") != std::string::npos);

    const auto parsed = nlohmann::json::parse(
        ace::eval_report_to_string(report, ace::ReportFormat::json));
    CHECK(parsed["ppl"] == 123.456);
    CHECK(parsed["layers"].size() == 2);
    CHECK(parsed["layers"][0]["name"] == "layer.a");

    std::vector<ace::CompareRow> rows(1);
    rows[0].metric = "wanda";
    rows[0].pattern = "2:4";
    rows[0].seqlen = 16;
    rows[0].status = "ok";
    const std::string table = ace::compare_rows_to_string(rows, ace::ReportFormat::csv);
    CHECK(table.find("metric,pattern,seqlen,ppl,mean_frob_rel,calib_seconds,prune_seconds,"
                     "status\n") == 0);
    CHECK(table.find("wanda,2:4,16,") != std::string::npos);
}

TEST_CASE("report format strings parse") {
    CHECK(ace::parse_report_format("csv") == ace::ReportFormat::csv);
    CHECK(ace::parse_report_format("markdown") == ace::ReportFormat::markdown);
    CHECK(ace::parse_report_format("md") == ace::ReportFormat::markdown);
    CHECK(ace::parse_report_format("json") == ace::ReportFormat::json);
    CHECK_THROWS_AS(ace::parse_report_format("yaml"), std::invalid_argument);
}

TEST_CASE("max_rel_diff flags an injected corruption") {
    Matrix a(1, 2);
    a.data = {1.0, 2.0};
    Matrix b = a;
    CHECK(ace::max_rel_diff(a, b) == 0.0);
    b.data[1] = 2.5;  // |2 - 2.5| / max(1, 2.5)
    CHECK(ace::max_rel_diff(a, b) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(ace::max_rel_diff(a, Matrix(2, 1)), std::invalid_argument);
}

TEST_CASE("spot checks from the verification battery hold") {
    CHECK(ace::check_sherman_morrison(1).pass);
    CHECK(ace::check_diff_example(1).pass);
    CHECK(ace::check_holder(1).pass);
    CHECK(ace::check_variance_identity(1).pass);
    CHECK(ace::check_power_series_bracket(1).pass);
}
