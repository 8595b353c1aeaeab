#include "ace/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ace {

LemmaResult lemma_check(const LemmaProbe& probe) {
    if (probe.a.empty()) throw std::invalid_argument("lemma_check: empty vector");
    if (probe.k >= probe.a.size()) throw std::invalid_argument("lemma_check: k out of range");
    if (!all_finite(probe.a) || !std::isfinite(probe.delta))
        throw std::invalid_argument("lemma_check: non-finite probe");
    const double norm_sq = dot(probe.a, probe.a);
    if (norm_sq == 0.0) throw std::invalid_argument("lemma_check: zero vector");
    const double ak = probe.a[probe.k];
    if (ak != 0.0 && std::abs(probe.delta) >= std::abs(ak))
        throw std::invalid_argument("lemma_check: |delta| must stay below |a_k|");

    LemmaResult res;
    if (probe.delta == 0.0) return res;  // exact, approx, err all 0

    Vector perturbed = probe.a;
    perturbed[probe.k] += probe.delta;
    res.exact = 1.0 - cosine_similarity(probe.a, perturbed);
    res.approx = -ak * probe.delta / norm_sq;
    res.err = std::abs(res.exact - res.approx);
    return res;
}

double exact_cosine_loss(const Matrix& w, const Vector& x, std::size_t i, std::size_t j) {
    if (i >= w.rows || j >= w.cols)
        throw std::invalid_argument("exact_cosine_loss: index out of range");
    if (x.size() != w.cols)
        throw std::invalid_argument("exact_cosine_loss: activation width mismatch");

    Vector dense(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r)
        for (std::size_t c = 0; c < w.cols; ++c) dense[r] += w.at(r, c) * x[c];

    Vector pruned = dense;
    pruned[i] -= w.at(i, j) * x[j];  // only output i changes

    const double nd = l2_norm(dense);
    const double np = l2_norm(pruned);
    if (nd == 0.0 || np == 0.0)
        throw std::invalid_argument("exact_cosine_loss: zero output vector, cosine undefined");
    return 1.0 - cosine_similarity(dense, pruned);
}

bool holder_check(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("holder_check: length mismatch");
    double lhs = 0.0, l1 = 0.0, linf = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        lhs += std::abs(a[i] * b[i]);
        l1 += std::abs(a[i]);
        linf = std::max(linf, std::abs(b[i]));
    }
    return lhs <= l1 * linf + 1e-12;
}

namespace {

Vector row_dots(const Matrix& w, const Vector& x) {
    if (x.size() != w.cols)
        throw std::invalid_argument("relative_cos_score: activation width mismatch");
    Vector out(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t c = 0; c < w.cols; ++c) out[i] += w.at(i, c) * x[c];
    return out;
}

}  // namespace

double relative_cos_score_exact(const Matrix& w, const Vector& x, std::size_t t,
                                std::size_t j) {
    if (t >= w.rows || j >= w.cols)
        throw std::invalid_argument("relative_cos_score: index out of range");
    const Vector outs = row_dots(w, x);
    double denom = 0.0;
    for (std::size_t i = 0; i < w.rows; ++i)
        denom += w.at(i, j) * w.at(i, j) * outs[i] * outs[i];
    if (denom == 0.0)
        throw std::invalid_argument("relative_cos_score: zero denominator (degenerate column)");
    const double m = static_cast<double>(w.rows);
    return std::sqrt(m) * std::abs(w.at(t, j)) * std::abs(outs[t]) / std::sqrt(denom);
}

double relative_cos_score_lower_bound(const Matrix& w, const Vector& x, std::size_t t,
                                      std::size_t j) {
    if (t >= w.rows || j >= w.cols)
        throw std::invalid_argument("relative_cos_score: index out of range");
    const Vector outs = row_dots(w, x);
    double col_sq = 0.0, max_out = 0.0;
    for (std::size_t i = 0; i < w.rows; ++i) {
        col_sq += w.at(i, j) * w.at(i, j);
        max_out = std::max(max_out, std::abs(outs[i]));
    }
    if (col_sq == 0.0 || max_out == 0.0)
        throw std::invalid_argument("relative_cos_score: degenerate bound inputs");
    const double m = static_cast<double>(w.rows);
    const double rms_term = std::abs(w.at(t, j)) / std::sqrt(col_sq / m);
    return rms_term * std::abs(outs[t]) / max_out;
}

namespace {

void check_probe(const DiffProbe& probe) {
    if (probe.x.empty()) throw std::invalid_argument("diff probe: empty token");
    if (probe.j >= probe.x.size()) throw std::invalid_argument("diff probe: j out of range");
    if (!(probe.lambda > 0.0)) throw std::invalid_argument("diff probe: lambda must be positive");
    if (!all_finite(probe.x)) throw std::invalid_argument("diff probe: non-finite token");
}

}  // namespace

double sherman_morrison_diag(const DiffProbe& probe) {
    check_probe(probe);
    const double k = dot(probe.x, probe.x);
    const double xj2 = probe.x[probe.j] * probe.x[probe.j];
    return probe.lambda * (probe.lambda + k) / (probe.lambda + k - xj2);
}

double wanda_approx_diag(const DiffProbe& probe) {
    check_probe(probe);
    return probe.x[probe.j] * probe.x[probe.j] + probe.lambda;
}

double diff_exact(const DiffProbe& probe) {
    check_probe(probe);
    std::size_t nonzero = 0;
    for (double v : probe.x) nonzero += v != 0.0;
    // With one nonzero feature the closed form collapses onto the surrogate
    // at every j; report the zero exactly instead of round-tripping it
    // through the subtraction.
    if (nonzero <= 1) return 0.0;
    return std::abs(sherman_morrison_diag(probe) - wanda_approx_diag(probe));
}

std::vector<EfficiencyPoint> efficiency_curve(const Matrix& tokens,
                                              const std::vector<std::size_t>& lengths) {
    if (lengths.empty()) throw std::invalid_argument("efficiency_curve: no lengths");
    for (std::size_t n : lengths)
        if (n == 0) throw std::invalid_argument("efficiency_curve: length must be positive");
    for (std::size_t i = 1; i < lengths.size(); ++i)
        if (lengths[i] <= lengths[i - 1])
            throw std::invalid_argument("efficiency_curve: lengths must be strictly ascending");
    const std::size_t max_n = *std::max_element(lengths.begin(), lengths.end());
    if (tokens.rows < max_n)
        throw std::invalid_argument("efficiency_curve: stream provides " +
                                    std::to_string(tokens.rows) + " tokens, need " +
                                    std::to_string(max_n));
    if (!all_finite(tokens)) throw std::invalid_argument("efficiency_curve: non-finite token");

    std::vector<EfficiencyPoint> out;
    out.reserve(lengths.size());
    for (std::size_t n : lengths) {
        double energy = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const auto row = tokens.row(t);
            for (double v : row) energy += v * v;
        }
        const double nd = static_cast<double>(n);
        const double mean_energy = energy / nd;
        if (mean_energy == 0.0)
            throw std::invalid_argument("efficiency_curve: all-zero token prefix");

        EfficiencyPoint pt;
        pt.n = n;
        pt.lambda = nd * mean_energy;
        pt.mean_feature_sq = energy / (nd * static_cast<double>(tokens.cols));

        double diff_sum = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            DiffProbe probe;
            probe.x.assign(tokens.row(t).begin(), tokens.row(t).end());
            probe.lambda = pt.lambda;
            for (std::size_t j = 0; j < tokens.cols; ++j) {
                probe.j = j;
                diff_sum += diff_exact(probe);
            }
        }
        pt.mean_diff = diff_sum / (nd * static_cast<double>(tokens.cols));
        out.push_back(pt);
    }
    return out;
}

}  // namespace ace
