#include "ace/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ace {

namespace {

double token_norm_sq(std::span<const double> token) {
    double s = 0.0;
    for (double x : token) s += x * x;
    return s;
}

}  // namespace

FeatureStats new_stats(std::size_t d_in, const DampingPolicy& policy, const Matrix& preview) {
    if (d_in == 0) throw std::invalid_argument("new_stats: d_in must be positive");

    double lambda = 0.0;
    if (policy.mode == DampingPolicy::Mode::fixed) {
        lambda = policy.lambda0;
    } else {
        if (preview.rows == 0 || preview.cols != d_in)
            throw std::invalid_argument("new_stats: preview batch must be tokens x d_in");
        if (!all_finite(preview))
            throw std::invalid_argument("new_stats: non-finite value in preview batch");
        double total = 0.0;
        for (std::size_t t = 0; t < preview.rows; ++t) total += token_norm_sq(preview.row(t));
        if (total == 0.0)
            throw std::invalid_argument(
                "new_stats: all-zero preview cannot resolve proportional damping");
        lambda = policy.damp_factor * (total / static_cast<double>(preview.rows));
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("new_stats: resolved lambda must be positive and finite");

    FeatureStats s;
    s.d_in = d_in;
    s.lambda = lambda;
    s.sum_sq.assign(d_in, 0.0);
    s.sum_quad.assign(d_in, 0.0);
    s.sum_ratio.assign(d_in, 0.0);
    s.sum_ratio1.assign(d_in, 0.0);
    s.sum_ratio2.assign(d_in, 0.0);
    return s;
}

void accumulate_row(FeatureStats& s, std::span<const double> token) {
    if (token.size() != s.d_in)
        throw std::invalid_argument("accumulate: token width " + std::to_string(token.size()) +
                                    " does not match d_in " + std::to_string(s.d_in));
    for (std::size_t j = 0; j < token.size(); ++j)
        if (!std::isfinite(token[j]))
            throw std::invalid_argument("accumulate: non-finite activation at token " +
                                        std::to_string(s.token_count) + ", feature " +
                                        std::to_string(j));

    const double norm_sq = token_norm_sq(token);
    const double denom = s.lambda + norm_sq;
    for (std::size_t j = 0; j < token.size(); ++j) {
        const double sq = token[j] * token[j];
        const double r = sq / denom;  // x_j^2 <= |x|^2 < denom, so r in [0, 1)
        s.sum_sq[j] += sq;
        s.sum_quad[j] += sq * sq;
        s.sum_ratio[j] += 1.0 / (1.0 - r);
        s.sum_ratio1[j] += r;
        s.sum_ratio2[j] += r * r;
    }
    s.sum_token_norm_sq += norm_sq;
    s.token_count += 1;
}

void accumulate(FeatureStats& s, const Matrix& token_batch) {
    if (token_batch.cols != s.d_in)
        throw std::invalid_argument("accumulate: batch width does not match d_in");
    for (std::size_t t = 0; t < token_batch.rows; ++t) accumulate_row(s, token_batch.row(t));
}

FeatureStats merge(const FeatureStats& a, const FeatureStats& b) {
    if (a.d_in != b.d_in) throw std::invalid_argument("merge: d_in mismatch");
    if (a.lambda != b.lambda) throw std::invalid_argument("merge: lambda mismatch");
    FeatureStats out = a;
    out.token_count += b.token_count;
    out.sum_token_norm_sq += b.sum_token_norm_sq;
    for (std::size_t j = 0; j < a.d_in; ++j) {
        out.sum_sq[j] += b.sum_sq[j];
        out.sum_quad[j] += b.sum_quad[j];
        out.sum_ratio[j] += b.sum_ratio[j];
        out.sum_ratio1[j] += b.sum_ratio1[j];
        out.sum_ratio2[j] += b.sum_ratio2[j];
    }
    return out;
}

FinalizedStats finalize(const FeatureStats& s) {
    if (s.token_count == 0) throw std::invalid_argument("finalize: no tokens accumulated");
    const double n = static_cast<double>(s.token_count);
    FinalizedStats f;
    f.d_in = s.d_in;
    f.token_count = s.token_count;
    f.lambda = s.lambda;
    f.col_l2.resize(s.d_in);
    f.mean_sq.resize(s.d_in);
    f.mean_quad.resize(s.d_in);
    f.var_sq.resize(s.d_in);
    f.rational.resize(s.d_in);
    f.moment.resize(s.d_in);
    for (std::size_t j = 0; j < s.d_in; ++j) {
        f.col_l2[j] = std::sqrt(s.sum_sq[j]);
        f.mean_sq[j] = s.sum_sq[j] / n;
        f.mean_quad[j] = s.sum_quad[j] / n;
        // The E[x^4] - E[x^2]^2 subtraction leaves O(n*eps) rounding residue even
        // when the stream is exactly constant; anything below that floor is noise,
        // so snap it to 0. Constant streams then report variance exactly 0.
        const double diff = f.mean_quad[j] - f.mean_sq[j] * f.mean_sq[j];
        const double noise = 4.0 * std::numeric_limits<double>::epsilon() *
                             static_cast<double>(s.token_count + 1) * f.mean_quad[j];
        f.var_sq[j] = diff > noise ? diff : 0.0;
        f.rational[j] = s.sum_ratio[j] / n;
        f.moment[j] = 1.0 + s.sum_ratio1[j] / n + s.sum_ratio2[j] / n;
    }
    return f;
}

std::map<std::string, Matrix> stats_to_tensors(
    const std::map<std::string, FeatureStats>& per_layer) {
    std::map<std::string, Matrix> out;
    for (const auto& [layer, s] : per_layer) {
        auto vec = [&](const Vector& v) {
            Matrix m(1, v.size());
            m.data = v;
            return m;
        };
        auto scalar = [&](double x) { return Matrix(1, 1, x); };
        out.emplace(layer + ".count", scalar(static_cast<double>(s.token_count)));
        out.emplace(layer + ".lambda", scalar(s.lambda));
        out.emplace(layer + ".sum_token_norm_sq", scalar(s.sum_token_norm_sq));
        out.emplace(layer + ".sum_sq", vec(s.sum_sq));
        out.emplace(layer + ".sum_quad", vec(s.sum_quad));
        out.emplace(layer + ".sum_ratio", vec(s.sum_ratio));
        out.emplace(layer + ".sum_ratio1", vec(s.sum_ratio1));
        out.emplace(layer + ".sum_ratio2", vec(s.sum_ratio2));
    }
    return out;
}

std::map<std::string, FeatureStats> stats_from_tensors(
    const std::map<std::string, Matrix>& tensors) {
    std::map<std::string, FeatureStats> out;
    for (const auto& [name, t] : tensors) {
        const auto pos = name.rfind(".count");
        if (pos == std::string::npos || pos + 6 != name.size()) continue;
        const std::string layer = name.substr(0, pos);

        auto get = [&](const std::string& suffix) -> const Matrix& {
            auto it = tensors.find(layer + suffix);
            if (it == tensors.end())
                throw std::runtime_error("stats tensors: missing '" + layer + suffix + "'");
            return it->second;
        };

        FeatureStats s;
        s.token_count = static_cast<std::size_t>(get(".count").data[0]);
        s.lambda = get(".lambda").data[0];
        s.sum_token_norm_sq = get(".sum_token_norm_sq").data[0];
        s.sum_sq = get(".sum_sq").data;
        s.sum_quad = get(".sum_quad").data;
        s.sum_ratio = get(".sum_ratio").data;
        s.sum_ratio1 = get(".sum_ratio1").data;
        s.sum_ratio2 = get(".sum_ratio2").data;
        s.d_in = s.sum_sq.size();
        if (s.sum_quad.size() != s.d_in || s.sum_ratio.size() != s.d_in ||
            s.sum_ratio1.size() != s.d_in || s.sum_ratio2.size() != s.d_in)
            throw std::runtime_error("stats tensors: accumulator widths differ for '" + layer +
                                     "'");
        if (!(s.lambda > 0.0))
            throw std::runtime_error("stats tensors: nonpositive lambda for '" + layer + "'");
        out.emplace(layer, std::move(s));
    }
    if (out.empty()) throw std::runtime_error("stats tensors: no layers found");
    return out;
}

}  // namespace ace
