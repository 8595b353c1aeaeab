#pragma once

#include <cstddef>
#include <vector>

#include "ace/matrix.hpp"

namespace ace {

// Single-coordinate perturbation probe for the cosine-loss expansion.
struct LemmaProbe {
    Vector a;
    std::size_t k = 0;   // perturbed coordinate
    double delta = 0.0;  // |delta| < |a_k| unless a_k is 0
};

struct LemmaResult {
    double exact = 0.0;   // 1 - cos(a, a + delta*e_k)
    double approx = 0.0;  // -a_k * delta / |a|^2, the first-order model
    double err = 0.0;     // |exact - approx|
};

// The true expansion of the exact loss has no linear term (cosine is
// stationary under perturbations of an identical vector), so `exact`
// itself shrinks quadratically when delta halves while `err` keeps the
// first-order model's own O(delta) piece whenever a_k != 0. Convergence
// checks therefore ratio `exact`; `approx`/`err` report the linear model.
LemmaResult lemma_check(const LemmaProbe& probe);

// 1 - cos(Wx, W'x) where W' zeroes entry (i, j). Throws when either output
// is the zero vector (cosine undefined).
double exact_cosine_loss(const Matrix& w, const Vector& x, std::size_t i, std::size_t j);

// sum_i |a_i b_i| <= (sum_i |a_i|) * max_i |b_i|, allowing 1e-12 slack.
bool holder_check(const Vector& a, const Vector& b);

// Relative cosine-damage score of weight (t, j):
//   sqrt(m) * |w_tj| * |row_t . x| / sqrt(sum_i w_ij^2 (row_i . x)^2)
double relative_cos_score_exact(const Matrix& w, const Vector& x, std::size_t t,
                                std::size_t j = 0);

// Its closed-form lower bound:
//   (|w_tj| / sqrt(sum_i w_ij^2 / m)) * |row_t . x| / max_i |row_i . x|
double relative_cos_score_lower_bound(const Matrix& w, const Vector& x, std::size_t t,
                                      std::size_t j = 0);

// Single-token damped Gram diagonal probe.
struct DiffProbe {
    Vector x;
    double lambda = 0.0;
    std::size_t j = 0;
};

// Closed form for 1 / [(x x^T + lambda I)^{-1}]_jj:
//   lambda * (lambda + |x|^2) / (lambda + |x|^2 - x_j^2)
double sherman_morrison_diag(const DiffProbe& probe);

// The cheap surrogate x_j^2 + lambda.
double wanda_approx_diag(const DiffProbe& probe);

// |closed form - surrogate|; exactly 0 when the token has a single
// nonzero feature.
double diff_exact(const DiffProbe& probe);

struct EfficiencyPoint {
    std::size_t n = 0;           // tokens used
    double lambda = 0.0;         // n * mean token energy over those tokens
    double mean_diff = 0.0;      // mean over tokens and features of diff_exact
    double mean_feature_sq = 0.0;  // pooled E[x_j^2] baseline
};

// For each requested length N (ascending, N >= 1, stream must provide
// max(N) token rows): lambda = N * mean |x_t|^2 over the first N tokens,
// then mean_diff averages diff_exact across those tokens and all features.
// mean_diff * (N + 1) approaches mean_feature_sq as N grows.
std::vector<EfficiencyPoint> efficiency_curve(const Matrix& tokens,
                                              const std::vector<std::size_t>& lengths);

}  // namespace ace
