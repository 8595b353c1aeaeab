#include "ace/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace ace {

namespace {

void check_inputs(const Matrix& w, const FinalizedStats& stats) {
    if (w.rows == 0 || w.cols == 0) throw std::invalid_argument("score: empty weight matrix");
    if (w.cols != stats.d_in)
        throw std::invalid_argument("score: weight cols " + std::to_string(w.cols) +
                                    " do not match stats d_in " + std::to_string(stats.d_in));
    if (!all_finite(w)) throw std::invalid_argument("score: non-finite weight");
}

// row_norm_i = l2 of row i; col_rms_j = sqrt(mean_i w_ij^2).
void weight_geometry(const Matrix& w, Vector& row_norm, Vector& col_rms) {
    row_norm.assign(w.rows, 0.0);
    col_rms.assign(w.cols, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) {
            const double sq = w.at(i, j) * w.at(i, j);
            s += sq;
            col_rms[j] += sq;
        }
        row_norm[i] = std::sqrt(s);
    }
    for (std::size_t j = 0; j < w.cols; ++j)
        col_rms[j] = std::sqrt(col_rms[j] / static_cast<double>(w.rows));
}

}  // namespace

ScoreMatrix score_magnitude(const Matrix& w) {
    if (w.rows == 0 || w.cols == 0) throw std::invalid_argument("score: empty weight matrix");
    if (!all_finite(w)) throw std::invalid_argument("score: non-finite weight");
    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.size(); ++i) out.data[i] = std::abs(w.data[i]);
    return out;
}

ScoreMatrix score_wanda(const Matrix& w, const FinalizedStats& stats) {
    check_inputs(w, stats);
    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j)
            out.at(i, j) = std::abs(w.at(i, j)) * stats.col_l2[j];
    return out;
}

ScoreMatrix score_ria(const Matrix& w, const FinalizedStats& stats, double a) {
    check_inputs(w, stats);
    if (!std::isfinite(a)) throw std::invalid_argument("score_ria: non-finite exponent");

    Vector row_abs(w.rows, 0.0), col_abs(w.cols, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j) {
            const double v = std::abs(w.at(i, j));
            row_abs[i] += v;
            col_abs[j] += v;
        }
    Vector col_factor(w.cols);
    for (std::size_t j = 0; j < w.cols; ++j) col_factor[j] = std::pow(stats.col_l2[j], a);

    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j) {
            const double v = std::abs(w.at(i, j));
            // An all-zero row or column would divide 0 by 0; those entries are
            // themselves zero weights and score 0.
            const double rel_row = row_abs[i] > 0.0 ? v / row_abs[i] : 0.0;
            const double rel_col = col_abs[j] > 0.0 ? v / col_abs[j] : 0.0;
            out.at(i, j) = (rel_row + rel_col) * col_factor[j];
        }
    return out;
}

ScoreMatrix score_sgpt_diag(const Matrix& w, const FinalizedStats& stats) {
    check_inputs(w, stats);
    Vector col_factor(stats.d_in);
    for (std::size_t j = 0; j < stats.d_in; ++j)
        col_factor[j] = stats.lambda * stats.rational[j];
    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j)
            out.at(i, j) = w.at(i, j) * w.at(i, j) * col_factor[j];
    return out;
}

ScoreMatrix score_cosp(const Matrix& w, const FinalizedStats& stats) {
    check_inputs(w, stats);
    Vector row_norm, col_rms;
    weight_geometry(w, row_norm, col_rms);
    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j) {
            if (col_rms[j] == 0.0) {
                out.at(i, j) = 0.0;  // all-zero column
                continue;
            }
            const double av = std::abs(w.at(i, j));
            out.at(i, j) = av * stats.col_l2[j] * (av / col_rms[j]) * row_norm[i];
        }
    return out;
}

ScoreMatrix score_varp(const Matrix& w, const FinalizedStats& stats, VarpForm form,
                       bool weight_sq) {
    check_inputs(w, stats);
    const Vector& factor = form == VarpForm::rational ? stats.rational : stats.moment;
    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j) {
            const double av = std::abs(w.at(i, j));
            out.at(i, j) = (weight_sq ? av * av : av) * factor[j];
        }
    return out;
}

ScoreMatrix score_cosp_varp(const Matrix& w, const FinalizedStats& stats) {
    check_inputs(w, stats);
    Vector row_norm, col_rms;
    weight_geometry(w, row_norm, col_rms);
    ScoreMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j) {
            if (col_rms[j] == 0.0) {
                out.at(i, j) = 0.0;
                continue;
            }
            const double av = std::abs(w.at(i, j));
            out.at(i, j) = av * stats.rational[j] * (av / col_rms[j]) * row_norm[i];
        }
    return out;
}

ScoreMatrix score(const Matrix& w, const FinalizedStats& stats, const MetricKind& kind) {
    switch (kind.metric) {
        case Metric::magnitude: return score_magnitude(w);
        case Metric::wanda: return score_wanda(w, stats);
        case Metric::ria: return score_ria(w, stats, kind.ria_exponent);
        case Metric::sgpt_diag: return score_sgpt_diag(w, stats);
        case Metric::cosp: return score_cosp(w, stats);
        case Metric::varp: return score_varp(w, stats, kind.varp_form, kind.varp_weight_sq);
        case Metric::cosp_varp: return score_cosp_varp(w, stats);
    }
    throw std::invalid_argument("score: unknown metric");
}

MetricKind MetricKind::parse(const std::string& s) {
    MetricKind k;
    if (s == "magnitude") {
        k.metric = Metric::magnitude;
    } else if (s == "wanda") {
        k.metric = Metric::wanda;
    } else if (s == "sgptdiag") {
        k.metric = Metric::sgpt_diag;
    } else if (s == "cosp") {
        k.metric = Metric::cosp;
    } else if (s == "cosp+varp") {
        k.metric = Metric::cosp_varp;
    } else if (s == "ria" || s.rfind("ria:", 0) == 0) {
        k.metric = Metric::ria;
        if (s != "ria") {
            if (s.size() == 4)
                throw std::invalid_argument("metric: empty ria exponent in '" + s + "'");
            try {
                std::size_t used = 0;
                k.ria_exponent = std::stod(s.substr(4), &used);
                if (used != s.size() - 4) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw std::invalid_argument("metric: bad ria exponent in '" + s + "'");
            }
        }
    } else if (s == "varp" || s.rfind("varp:", 0) == 0) {
        k.metric = Metric::varp;
        if (s != "varp") {
            const std::string form = s.substr(5);
            if (form == "rational") k.varp_form = VarpForm::rational;
            else if (form == "moment") k.varp_form = VarpForm::moment;
            else throw std::invalid_argument("metric: unknown varp form in '" + s + "'");
        }
    } else {
        throw std::invalid_argument("metric: unknown metric '" + s + "'");
    }
    return k;
}

std::string MetricKind::to_string() const {
    switch (metric) {
        case Metric::magnitude: return "magnitude";
        case Metric::wanda: return "wanda";
        case Metric::ria:
            return ria_exponent == 0.5 ? "ria" : "ria:" + std::to_string(ria_exponent);
        case Metric::sgpt_diag: return "sgptdiag";
        case Metric::cosp: return "cosp";
        case Metric::varp:
            return varp_form == VarpForm::rational ? "varp:rational" : "varp:moment";
        case Metric::cosp_varp: return "cosp+varp";
    }
    return "?";
}

}  // namespace ace
