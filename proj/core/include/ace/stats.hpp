#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "ace/matrix.hpp"

namespace ace {

// Damping keeps every per-token ratio x_j^2 / (lambda + |x|^2) strictly
// below 1, which makes the rational accumulator finite. Proportional mode
// scales lambda with the observed token energy so scaling the activations
// by c rescales lambda by c^2 and leaves the ratios invariant.
struct DampingPolicy {
    enum class Mode { proportional, fixed };
    Mode mode = Mode::proportional;
    double damp_factor = 0.01;  // proportional: lambda = damp_factor * mean |x|^2
    double lambda0 = 0.0;       // fixed: lambda = lambda0

    static DampingPolicy proportional(double damp = 0.01) {
        return {Mode::proportional, damp, 0.0};
    }
    static DampingPolicy fixed(double l0) { return {Mode::fixed, 0.01, l0}; }
};

// Streaming per-feature accumulators over calibration tokens. One token is
// one row; r_{t,j} = x_{t,j}^2 / (lambda + |x_t|^2) in [0, 1).
struct FeatureStats {
    std::size_t d_in = 0;
    std::size_t token_count = 0;
    double lambda = 0.0;
    double sum_token_norm_sq = 0.0;
    Vector sum_sq;      // sum_t x^2
    Vector sum_quad;    // sum_t x^4
    Vector sum_ratio;   // sum_t 1/(1-r)
    Vector sum_ratio1;  // sum_t r
    Vector sum_ratio2;  // sum_t r^2
};

// Derived quantities the metrics consume.
struct FinalizedStats {
    std::size_t d_in = 0;
    std::size_t token_count = 0;
    double lambda = 0.0;
    Vector col_l2;     // sqrt(sum_sq), whole-set column norms
    Vector mean_sq;    // E[x^2]
    Vector mean_quad;  // E[x^4]
    Vector var_sq;     // E[x^4] - E[x^2]^2, clamped at 0
    Vector rational;   // E[1/(1-r)]  >= moment
    Vector moment;     // 1 + E[r] + E[r^2]
};

// Resolves lambda from the preview batch (rows = tokens). Throws
// std::invalid_argument for d_in = 0, a nonpositive resolved lambda, a
// preview of wrong width, or an all-zero preview in proportional mode.
FeatureStats new_stats(std::size_t d_in, const DampingPolicy& policy, const Matrix& preview);

// Adds one token row / a batch of token rows. Rejects non-finite
// activations with the offending token and feature index in the message.
void accumulate_row(FeatureStats& s, std::span<const double> token);
void accumulate(FeatureStats& s, const Matrix& token_batch);

// Componentwise sum; requires identical d_in and bitwise-identical lambda.
FeatureStats merge(const FeatureStats& a, const FeatureStats& b);

// Requires at least one accumulated token.
FinalizedStats finalize(const FeatureStats& s);

// Tensor-file layout for stats: one row-vector tensor per accumulator under
// "<layer>.count", "<layer>.sum_sq", "<layer>.sum_quad", "<layer>.sum_ratio",
// "<layer>.sum_ratio1", "<layer>.sum_ratio2", "<layer>.sum_token_norm_sq",
// "<layer>.lambda".
std::map<std::string, Matrix> stats_to_tensors(const std::map<std::string, FeatureStats>& per_layer);
std::map<std::string, FeatureStats> stats_from_tensors(const std::map<std::string, Matrix>& tensors);

}  // namespace ace
