#pragma once

#include <string>

#include "ace/matrix.hpp"
#include "ace/stats.hpp"

namespace ace {

// Importance scores share the weight matrix's shape; larger means keep.
using ScoreMatrix = Matrix;

enum class Metric { magnitude, wanda, ria, sgpt_diag, cosp, varp, cosp_varp };

enum class VarpForm { rational, moment };

struct MetricKind {
    Metric metric = Metric::magnitude;
    double ria_exponent = 0.5;            // ria:<a>
    VarpForm varp_form = VarpForm::rational;  // varp:rational | varp:moment
    bool varp_weight_sq = false;          // squared-weight variant, off by default

    // Accepts: magnitude, wanda, ria[:a], sgptdiag, cosp, varp[:rational|moment],
    // cosp+varp. Throws std::invalid_argument on anything else.
    static MetricKind parse(const std::string& s);
    std::string to_string() const;
};

// All scorers require w.cols == stats.d_in (activation features are weight
// columns), reject non-finite weights, and return scores that are 0
// wherever w is 0. Each is a product of per-element |w| terms with
// precomputed per-row / per-column factors, so any partition of the rows
// yields bit-identical results.

// |w|
ScoreMatrix score_magnitude(const Matrix& w);

// |w| * col_l2_j
ScoreMatrix score_wanda(const Matrix& w, const FinalizedStats& stats);

// (|w|/rowsum_i + |w|/colsum_j) * col_l2_j^a; zero-sum rows or columns
// contribute 0 instead of dividing by zero.
ScoreMatrix score_ria(const Matrix& w, const FinalizedStats& stats, double a = 0.5);

// w^2 * lambda * E_t[1/(1-r_{t,j})]: the damped-inverse-Hessian diagonal
// rule with the closed-form single-token diagonal folded in.
ScoreMatrix score_sgpt_diag(const Matrix& w, const FinalizedStats& stats);

// |w| * col_l2_j * (|w| / col_rms_j) * row_norm_i, where col_rms_j is the
// column RMS over d_out rows and row_norm_i the row l2 norm. Columns with
// zero RMS are all-zero and score 0.
ScoreMatrix score_cosp(const Matrix& w, const FinalizedStats& stats);

// |w| (or w^2 when weight_sq) times the rational or moment feature factor.
ScoreMatrix score_varp(const Matrix& w, const FinalizedStats& stats,
                       VarpForm form = VarpForm::rational, bool weight_sq = false);

// |w| * rational_j * (|w| / col_rms_j) * row_norm_i.
ScoreMatrix score_cosp_varp(const Matrix& w, const FinalizedStats& stats);

ScoreMatrix score(const Matrix& w, const FinalizedStats& stats, const MetricKind& kind);

}  // namespace ace
