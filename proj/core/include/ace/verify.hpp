#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ace/matrix.hpp"

namespace ace {

// One verification battery entry. max_error is the check's headline number
// (largest residual, violation count, or worst ratio distance depending on
// the check); threshold is what it must stay within.
struct CheckResult {
    std::string name;
    std::size_t samples = 0;
    double max_error = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

CheckResult check_sherman_morrison(std::uint64_t seed);
CheckResult check_diff_example(std::uint64_t seed);
CheckResult check_efficiency(std::uint64_t seed);
CheckResult check_lemma_convergence(std::uint64_t seed);
CheckResult check_holder(std::uint64_t seed);
CheckResult check_relative_score_bound(std::uint64_t seed);
CheckResult check_variance_identity(std::uint64_t seed);
CheckResult check_power_series_bracket(std::uint64_t seed);
CheckResult check_metric_oracle(std::uint64_t seed);
CheckResult check_argsort_invariance(std::uint64_t seed);
CheckResult check_mask_contracts(std::uint64_t seed);
CheckResult check_jobs_determinism(std::uint64_t seed);
CheckResult check_constraint_relaxation(std::uint64_t seed);
CheckResult check_directional_sanity(std::uint64_t seed);

// The full battery in fixed order.
std::vector<CheckResult> run_verification(std::uint64_t seed);

// Largest |a - b| / max(1, |b|) over all entries); shapes must match.
// Used by the battery and by fault-detection tests.
double max_rel_diff(const Matrix& a, const Matrix& b);

std::string verification_report_json(const std::vector<CheckResult>& checks);
std::string verification_report_table(const std::vector<CheckResult>& checks);

}  // namespace ace
