#include "ace/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ace/metrics.hpp"
#include "ace/model.hpp"
#include "ace/oracle.hpp"
#include "ace/pipeline.hpp"
#include "ace/sparsify.hpp"
#include "ace/stats.hpp"

namespace ace {

namespace {

using Rng = std::mt19937_64;

Matrix random_matrix(Rng& gen, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.data) v = dist(gen);
    return m;
}

// Token batch with per-feature scale spread so activation norms genuinely
// differ across columns.
Matrix random_activations(Rng& gen, std::size_t tokens, std::size_t d) {
    std::uniform_real_distribution<double> scale_dist(-1.5, 1.5);
    Vector scales(d);
    for (double& s : scales) s = std::pow(10.0, scale_dist(gen));
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(tokens, d);
    for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t j = 0; j < d; ++j) m.at(t, j) = scales[j] * dist(gen);
    return m;
}

FeatureStats stats_of(const Matrix& activations, const DampingPolicy& policy) {
    FeatureStats s = new_stats(activations.cols, policy, activations);
    accumulate(s, activations);
    return s;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

double max_rel_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_rel_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max(1.0, std::abs(b.data[i]));
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
    }
    return worst;
}

CheckResult check_sherman_morrison(std::uint64_t seed) {
    CheckResult res{"sherman_morrison_diag", 200, 0.0, 1e-8, false, ""};
    Rng gen(seed ^ 0x536du);
    std::uniform_int_distribution<std::size_t> dim_dist(2, 64);
    std::uniform_real_distribution<double> log_lambda(-3.0, 1.0);

    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        const std::size_t d = dim_dist(gen);
        const double lambda = std::pow(10.0, log_lambda(gen));
        Matrix x = random_matrix(gen, 1, d);

        // Single-token damped Gram: x x^T + lambda I.
        Matrix gram(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                gram.at(i, j) = x.data[i] * x.data[j] + (i == j ? lambda : 0.0);
        const Matrix inv = invert_spd(gram);

        DiffProbe probe;
        probe.x = x.data;
        probe.lambda = lambda;
        for (std::size_t j = 0; j < d; ++j) {
            probe.j = j;
            const double closed = sherman_morrison_diag(probe);
            const double exact = 1.0 / inv.at(j, j);
            res.max_error = std::max(res.max_error, std::abs(closed - exact) / std::abs(exact));
        }
    }
    res.pass = res.max_error <= res.threshold;
    return res;
}

CheckResult check_diff_example(std::uint64_t seed) {
    CheckResult res{"diff_closed_form", 0, 0.0, 1e-12, false, ""};
    // Two-feature token (1,1) with lambda 2: closed form 8/3, surrogate 3.
    DiffProbe probe{{1.0, 1.0}, 2.0, 0};
    const double diff = diff_exact(probe);
    res.max_error = std::abs(diff - 1.0 / 3.0);
    res.samples = 1;

    // Single-nonzero tokens collapse the closed form onto the surrogate at
    // every feature; the diff must be exactly zero.
    Rng gen(seed ^ 0xd1ffu);
    std::uniform_int_distribution<std::size_t> dim_dist(1, 32);
    std::uniform_real_distribution<double> val_dist(-100.0, 100.0);
    std::uniform_real_distribution<double> lam_dist(0.001, 10.0);
    bool all_zero = true;
    for (std::size_t trial = 0; trial < 50; ++trial) {
        const std::size_t d = dim_dist(gen);
        DiffProbe p;
        p.x.assign(d, 0.0);
        const std::size_t pos = gen() % d;
        double v = val_dist(gen);
        if (v == 0.0) v = 1.0;
        p.x[pos] = v;
        p.lambda = lam_dist(gen);
        for (std::size_t j = 0; j < d; ++j) {
            p.j = j;
            if (diff_exact(p) != 0.0) all_zero = false;
        }
        ++res.samples;
    }
    res.pass = res.max_error <= res.threshold && all_zero;
    if (!all_zero) res.detail = "single-nonzero token produced nonzero diff";
    return res;
}

CheckResult check_efficiency(std::uint64_t seed) {
    CheckResult res{"efficiency_curve", 16, 0.0, 0.10, false, ""};
    const std::vector<std::size_t> lengths = {4, 16, 64, 256};
    constexpr std::size_t kDim = 64;
    constexpr std::size_t kReps = 16;

    Rng gen(seed ^ 0xeffu);
    std::vector<std::vector<double>> diffs(lengths.size());
    std::vector<std::vector<double>> ratios(lengths.size());

    for (std::size_t rep = 0; rep < kReps; ++rep) {
        const Matrix tokens = random_matrix(gen, 256, kDim);
        const auto curve = efficiency_curve(tokens, lengths);
        for (std::size_t i = 0; i < curve.size(); ++i) {
            diffs[i].push_back(curve[i].mean_diff);
            ratios[i].push_back(curve[i].mean_diff * (static_cast<double>(curve[i].n) + 1.0) /
                                curve[i].mean_feature_sq);
        }
    }

    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto se_of = [&](const std::vector<double>& v) {
        const double m = mean_of(v);
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size() - 1) /
                         static_cast<double>(v.size()));
    };

    // Clause 1: for N >= 64 the rescaled mean diff recovers E[x_j^2]
    // within 10% (averaged over the Monte-Carlo repetitions).
    std::ostringstream detail;
    bool law_ok = true;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        const double ratio = mean_of(ratios[i]);
        if (lengths[i] >= 64) {
            const double err = std::abs(ratio - 1.0);
            res.max_error = std::max(res.max_error, err);
            law_ok = law_ok && err <= res.threshold;
        }
        detail << "N=" << lengths[i] << " ratio=" << fmt(ratio)
               << " mean_diff=" << fmt(mean_of(diffs[i])) << "; ";
    }

    // Clause 2: mean_diff non-increasing in N within twice the MC error.
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < lengths.size(); ++i) {
        const double a = mean_of(diffs[i]);
        const double b = mean_of(diffs[i + 1]);
        const double slack = 2.0 * std::sqrt(se_of(diffs[i]) * se_of(diffs[i]) +
                                             se_of(diffs[i + 1]) * se_of(diffs[i + 1]));
        if (b > a + slack) monotone = false;
    }
    if (!monotone) detail << "monotonicity violated; ";

    res.detail = detail.str();
    res.pass = law_ok && monotone;
    return res;
}

CheckResult check_lemma_convergence(std::uint64_t seed) {
    CheckResult res{"lemma_quadratic_convergence", 64, 0.0, 0.0, false, ""};
    Rng gen(seed ^ 0x1e44au);
    std::uniform_int_distribution<std::size_t> dim_dist(2, 16);
    constexpr double kDelta = 1e-3;

    std::vector<double> ratios;
    while (ratios.size() < res.samples) {
        const std::size_t d = dim_dist(gen);
        Matrix a = random_matrix(gen, 1, d);
        const double norm = l2_norm(a.row(0));
        if (norm == 0.0) continue;
        for (double& v : a.data) v /= norm;
        const std::size_t k = gen() % d;
        const double ak = a.data[k];
        // Need a perturbable coordinate and a non-parallel probe: some mass
        // must sit off coordinate k.
        if (std::abs(ak) < 4.0 * kDelta) continue;
        if (1.0 - ak * ak < 1e-6) continue;

        LemmaProbe probe{a.data, k, kDelta};
        const double e1 = lemma_check(probe).exact;
        probe.delta = kDelta / 2.0;
        const double e2 = lemma_check(probe).exact;
        if (e1 <= 0.0) continue;
        ratios.push_back(e2 / e1);
    }
    std::sort(ratios.begin(), ratios.end());
    const double median = (ratios[31] + ratios[32]) / 2.0;
    res.max_error = median;
    res.detail = "median exact(d/2)/exact(d) over 64 non-parallel probes; must lie in [0.22, 0.28]";
    res.pass = median >= 0.22 && median <= 0.28;
    return res;
}

CheckResult check_holder(std::uint64_t seed) {
    CheckResult res{"holder_inequality", 1000, 0.0, 0.0, false, ""};
    Rng gen(seed ^ 0x401de4u);
    std::uniform_int_distribution<std::size_t> len_dist(1, 64);
    std::uniform_real_distribution<double> scale_dist(-3.0, 3.0);

    std::size_t violations = 0;
    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        const std::size_t n = len_dist(gen);
        const double sa = std::pow(10.0, scale_dist(gen));
        const double sb = std::pow(10.0, scale_dist(gen));
        Vector a(n), b(n);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = sa * dist(gen);
            b[i] = sb * dist(gen);
        }
        if (!holder_check(a, b)) ++violations;
    }
    res.max_error = static_cast<double>(violations);
    res.detail = "violations of sum|a_i b_i| <= (sum|a_i|) max|b_i|";
    res.pass = violations == 0;
    return res;
}

CheckResult check_relative_score_bound(std::uint64_t seed) {
    CheckResult res{"relative_score_lower_bound", 1000, 0.0, 0.0, false, ""};
    Rng gen(seed ^ 0x2327u);
    std::uniform_int_distribution<std::size_t> rows_dist(2, 16), cols_dist(2, 16);

    std::size_t violations = 0;
    std::size_t done = 0;
    while (done < res.samples) {
        const std::size_t m = rows_dist(gen), d = cols_dist(gen);
        const Matrix w = random_matrix(gen, m, d);
        const Matrix x = random_matrix(gen, 1, d);
        const std::size_t t = gen() % m, j = gen() % d;
        double exact, bound;
        try {
            exact = relative_cos_score_exact(w, x.data, t, j);
            bound = relative_cos_score_lower_bound(w, x.data, t, j);
        } catch (const std::invalid_argument&) {
            continue;  // degenerate draw
        }
        if (exact < bound - 1e-12) ++violations;
        ++done;
    }
    res.max_error = static_cast<double>(violations);
    res.detail = "violations of exact relative score >= closed-form lower bound";
    res.pass = violations == 0;
    return res;
}

CheckResult check_variance_identity(std::uint64_t seed) {
    CheckResult res{"streaming_variance_identity", 100, 0.0, 1e-10, false, ""};
    Rng gen(seed ^ 0x7a61ceu);
    std::uniform_int_distribution<std::size_t> len_dist(1, 200);
    std::uniform_real_distribution<double> scale_dist(-2.0, 2.0);
    std::normal_distribution<double> dist(0.0, 1.0);

    bool constants_zero = true;
    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        const std::size_t n = len_dist(gen);
        const double scale = std::pow(10.0, scale_dist(gen));
        const bool constant = trial % 5 == 0;
        const double cval = scale * (1.0 + std::abs(dist(gen)));

        Matrix tokens(n, 1);
        for (std::size_t t = 0; t < n; ++t)
            tokens.at(t, 0) = constant ? cval : scale * dist(gen);

        const FinalizedStats fin = finalize(stats_of(tokens, DampingPolicy::fixed(1.0)));

        // Two-pass population variance of the squared stream.
        double mean = 0.0;
        for (std::size_t t = 0; t < n; ++t) mean += tokens.at(t, 0) * tokens.at(t, 0);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double d2 = tokens.at(t, 0) * tokens.at(t, 0) - mean;
            var += d2 * d2;
        }
        var /= static_cast<double>(n);

        const double err = std::abs(fin.var_sq[0] - var) / std::max(1.0, fin.mean_quad[0]);
        res.max_error = std::max(res.max_error, err);
        if (constant && fin.var_sq[0] != 0.0) constants_zero = false;
    }
    res.pass = res.max_error <= res.threshold && constants_zero;
    res.detail = constants_zero ? "constant streams clamp to exactly 0"
                                : "constant stream gave nonzero variance";
    return res;
}

CheckResult check_power_series_bracket(std::uint64_t seed) {
    CheckResult res{"varp_rational_moment_bracket", 100, 0.0, 1e-10, false, ""};
    Rng gen(seed ^ 0xb4acceu);
    std::uniform_int_distribution<std::size_t> d_dist(1, 16), n_dist(1, 64);

    bool ordered = true;
    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        const std::size_t d = d_dist(gen), n = n_dist(gen);
        const Matrix tokens = random_activations(gen, n, d);
        const DampingPolicy policy = trial % 2 == 0
                                         ? DampingPolicy::proportional()
                                         : DampingPolicy::fixed(0.5);
        FeatureStats s;
        try {
            s = stats_of(tokens, policy);
        } catch (const std::invalid_argument&) {
            continue;  // all-zero preview draw
        }
        const FinalizedStats fin = finalize(s);

        // Tail of the geometric series: mean_t r^3/(1-r), recomputed from
        // the raw tokens.
        Vector tail(d, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            double norm_sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) norm_sq += tokens.at(t, j) * tokens.at(t, j);
            for (std::size_t j = 0; j < d; ++j) {
                const double r = tokens.at(t, j) * tokens.at(t, j) / (s.lambda + norm_sq);
                tail[j] += r * r * r / (1.0 - r);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            tail[j] /= static_cast<double>(n);
            const double rational = fin.rational[j];
            const double moment = fin.moment[j];
            if (moment < 1.0) ordered = false;
            if (rational < moment - 1e-12 * std::max(1.0, moment)) ordered = false;
            const double gap = rational - moment;
            const double excess = gap - tail[j];
            res.max_error =
                std::max(res.max_error, excess / std::max(1.0, std::abs(tail[j])));
        }
    }
    res.pass = ordered && res.max_error <= res.threshold;
    res.detail = "rational >= moment >= 1 with gap within the series tail";
    return res;
}

namespace {

// Naive elementwise recomputation of every metric straight from the weight
// matrix, the raw token batch, and lambda. No shared code with score_*:
// inner sums are recomputed per element.
double oracle_col_l2(const Matrix& x, std::size_t j) {
    double s = 0.0;
    for (std::size_t t = 0; t < x.rows; ++t) s += x.at(t, j) * x.at(t, j);
    return std::sqrt(s);
}

double oracle_rational(const Matrix& x, double lambda, std::size_t j) {
    double s = 0.0;
    for (std::size_t t = 0; t < x.rows; ++t) {
        double norm_sq = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) norm_sq += x.at(t, c) * x.at(t, c);
        s += 1.0 / (1.0 - x.at(t, j) * x.at(t, j) / (lambda + norm_sq));
    }
    return s / static_cast<double>(x.rows);
}

double oracle_moment(const Matrix& x, double lambda, std::size_t j) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t t = 0; t < x.rows; ++t) {
        double norm_sq = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) norm_sq += x.at(t, c) * x.at(t, c);
        const double r = x.at(t, j) * x.at(t, j) / (lambda + norm_sq);
        s1 += r;
        s2 += r * r;
    }
    const double n = static_cast<double>(x.rows);
    return 1.0 + s1 / n + s2 / n;
}

Matrix oracle_score(const std::string& metric, const Matrix& w, const Matrix& x,
                    double lambda) {
    Matrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i) {
        for (std::size_t j = 0; j < w.cols; ++j) {
            const double wv = w.at(i, j);
            const double av = std::abs(wv);
            double v = 0.0;
            if (metric == "magnitude") {
                v = av;
            } else if (metric == "wanda") {
                v = av * oracle_col_l2(x, j);
            } else if (metric == "ria") {
                double row_sum = 0.0, col_sum = 0.0;
                for (std::size_t c = 0; c < w.cols; ++c) row_sum += std::abs(w.at(i, c));
                for (std::size_t r = 0; r < w.rows; ++r) col_sum += std::abs(w.at(r, j));
                const double rel_row = row_sum > 0.0 ? av / row_sum : 0.0;
                const double rel_col = col_sum > 0.0 ? av / col_sum : 0.0;
                v = (rel_row + rel_col) * std::sqrt(oracle_col_l2(x, j));
            } else if (metric == "sgptdiag") {
                v = wv * wv * lambda * oracle_rational(x, lambda, j);
            } else if (metric == "cosp" || metric == "cosp+varp") {
                double col_sq = 0.0, row_sq = 0.0;
                for (std::size_t r = 0; r < w.rows; ++r) col_sq += w.at(r, j) * w.at(r, j);
                for (std::size_t c = 0; c < w.cols; ++c) row_sq += w.at(i, c) * w.at(i, c);
                if (col_sq == 0.0) {
                    v = 0.0;
                } else {
                    const double col_rms = std::sqrt(col_sq / static_cast<double>(w.rows));
                    const double base = metric == "cosp" ? oracle_col_l2(x, j)
                                                         : oracle_rational(x, lambda, j);
                    v = av * base * (av / col_rms) * std::sqrt(row_sq);
                }
            } else if (metric == "varp:rational") {
                v = av * oracle_rational(x, lambda, j);
            } else if (metric == "varp:moment") {
                v = av * oracle_moment(x, lambda, j);
            }
            out.at(i, j) = v;
        }
    }
    return out;
}

}  // namespace

CheckResult check_metric_oracle(std::uint64_t seed) {
    CheckResult res{"metrics_vs_naive_oracle", 50, 0.0, 1e-12, false, ""};
    Rng gen(seed ^ 0x0aac1eu);
    std::uniform_int_distribution<std::size_t> rows_dist(2, 24), cols_dist(2, 32),
        tok_dist(3, 48);
    const std::vector<std::string> metrics = {"magnitude", "wanda",         "ria",
                                              "sgptdiag",  "cosp",          "varp:rational",
                                              "varp:moment", "cosp+varp"};

    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        const std::size_t rows = rows_dist(gen), cols = cols_dist(gen), toks = tok_dist(gen);
        const Matrix w = random_matrix(gen, rows, cols);
        const Matrix x = random_activations(gen, toks, cols);
        const FeatureStats s = stats_of(x, DampingPolicy::proportional());
        const FinalizedStats fin = finalize(s);

        for (const std::string& name : metrics) {
            const ScoreMatrix impl = score(w, fin, MetricKind::parse(name));
            const Matrix want = oracle_score(name, w, x, s.lambda);
            res.max_error = std::max(res.max_error, max_rel_diff(impl, want));
        }
    }
    res.pass = res.max_error <= res.threshold;
    res.detail = "all metrics vs elementwise recomputation";
    return res;
}

CheckResult check_argsort_invariance(std::uint64_t seed) {
    CheckResult res{"argsort_scale_invariance", 0, 0.0, 0.0, false, ""};
    Rng gen(seed ^ 0xa465u);
    const std::vector<double> constants = {0.1, 3.0, 100.0};
    const std::vector<SparsityPattern> patterns = {SparsityPattern::semi_structured(2, 4),
                                                   SparsityPattern::unstructured(0.5)};

    std::size_t mismatches = 0;
    for (std::size_t trial = 0; trial < 6; ++trial) {
        const Matrix w = random_matrix(gen, 16, 32);
        const Matrix x = random_activations(gen, 40, 32);
        const FinalizedStats fin = finalize(stats_of(x, DampingPolicy::proportional()));

        // Weight rescaling: CosP and CosP+VarP rank by w^2 times scale-free
        // weight geometry, so masks cannot move.
        for (const char* name : {"cosp", "cosp+varp"}) {
            const MetricKind kind = MetricKind::parse(name);
            for (const SparsityPattern& p : patterns) {
                const PruneMask base = build_mask(score(w, fin, kind), p);
                for (double c : constants) {
                    Matrix ws = w;
                    for (double& v : ws.data) v *= c;
                    const PruneMask scaled = build_mask(score(ws, fin, kind), p);
                    mismatches += scaled.keep != base.keep;
                    ++res.samples;
                }
            }
        }

        // Activation rescaling with proportional damping: lambda scales with
        // c^2, the ratios are unchanged, and column norms scale uniformly.
        for (const char* name : {"wanda", "ria", "varp:rational"}) {
            const MetricKind kind = MetricKind::parse(name);
            for (const SparsityPattern& p : patterns) {
                const PruneMask base = build_mask(score(w, fin, kind), p);
                for (double c : constants) {
                    Matrix xs = x;
                    for (double& v : xs.data) v *= c;
                    const FinalizedStats fin_s =
                        finalize(stats_of(xs, DampingPolicy::proportional()));
                    const PruneMask scaled = build_mask(score(w, fin_s, kind), p);
                    mismatches += scaled.keep != base.keep;
                    ++res.samples;
                }
            }
        }
    }
    res.max_error = static_cast<double>(mismatches);
    res.detail = "mask mismatches under W->cW (cosp, cosp+varp) and X->cX (wanda, ria, varp)";
    res.pass = mismatches == 0;
    return res;
}

CheckResult check_mask_contracts(std::uint64_t seed) {
    CheckResult res{"mask_group_contracts", 500, 0.0, 0.0, false, ""};
    Rng gen(seed ^ 0x3a5cu);
    std::uniform_int_distribution<std::size_t> rows_dist(1, 16);
    std::uniform_real_distribution<double> ratio_dist(0.0, 1.0);

    std::size_t failures = 0;
    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        SparsityPattern pattern;
        std::size_t cols;
        switch (trial % 4) {
            case 0:
                pattern = SparsityPattern::semi_structured(2, 4);
                cols = 4 * (1 + gen() % 8);
                break;
            case 1:
                pattern = SparsityPattern::semi_structured(4, 8);
                cols = 8 * (1 + gen() % 4);
                break;
            case 2:
                pattern = SparsityPattern::unstructured(0.5);
                cols = 1 + gen() % 33;
                break;
            default:
                pattern = SparsityPattern::unstructured(ratio_dist(gen),
                                                        SparsityPattern::Group::per_layer);
                cols = 1 + gen() % 33;
                break;
        }
        const Matrix scores = random_matrix(gen, rows_dist(gen), cols);
        const PruneMask mask = build_mask(scores, pattern);
        if (!verify_mask(mask).pass) ++failures;

        // apply_mask keeps exactly the masked entries.
        Matrix w = random_matrix(gen, scores.rows, scores.cols);
        for (double& v : w.data) v += v >= 0.0 ? 1.0 : -1.0;  // bound away from zero
        const Matrix pruned = apply_mask(w, mask);
        std::size_t nnz = 0;
        for (double v : pruned.data) nnz += v != 0.0;
        if (nnz != mask.kept_count()) ++failures;
    }
    res.max_error = static_cast<double>(failures);
    res.detail = "verify_mask group counts and apply_mask support";
    res.pass = failures == 0;
    return res;
}

CheckResult check_jobs_determinism(std::uint64_t seed) {
    CheckResult res{"prune_jobs_determinism", 0, 0.0, 0.0, false, ""};
    const ModelManifest manifest = default_toy_manifest(seed ^ 0x10b5u);
    const ToyTransformer model = init_model(manifest);

    // Synthetic per-layer stats from random activations; what matters here
    // is that scoring has real inputs, not where they came from.
    Rng gen(seed ^ 0x10b5u);
    std::map<std::string, FeatureStats> stats;
    for (const std::string& layer : manifest.layer_names) {
        const std::size_t d = model.tensor(layer).cols;
        stats.emplace(layer, stats_of(random_activations(gen, 32, d),
                                      DampingPolicy::proportional()));
    }

    std::size_t mismatches = 0;
    const MetricKind kind = MetricKind::parse("cosp+varp");
    const SparsityPattern pattern = SparsityPattern::semi_structured(2, 4);
    ToyTransformer m1 = model;
    ToyTransformer m4 = model;
    const PruneResult r1 = prune_model(m1, stats, kind, pattern, 1);
    const PruneResult r4 = prune_model(m4, stats, kind, pattern, 4);
    for (const std::string& layer : manifest.layer_names) {
        mismatches += r1.masks.at(layer).keep != r4.masks.at(layer).keep;
        mismatches += m1.tensor(layer).data != m4.tensor(layer).data;
        ++res.samples;
    }
    res.max_error = static_cast<double>(mismatches);
    res.detail = "masks and pruned weights identical for jobs in {1, 4}";
    res.pass = mismatches == 0;
    return res;
}

CheckResult check_constraint_relaxation(std::uint64_t seed) {
    CheckResult res{"constraint_relaxation_ordering", 32, 0.0, 0.0, false, ""};
    Rng gen(seed ^ 0xc0457u);

    double err_24 = 0.0, err_48 = 0.0, err_u50 = 0.0;
    for (std::size_t trial = 0; trial < res.samples; ++trial) {
        const Matrix w = random_matrix(gen, 24, 64);
        const Matrix x = random_activations(gen, 96, 64);
        const FinalizedStats fin = finalize(stats_of(x, DampingPolicy::proportional()));
        const ScoreMatrix scores = score_wanda(w, fin);

        auto frob = [&](const SparsityPattern& p) {
            const Matrix pruned = apply_mask(w, build_mask(scores, p));
            return layer_reconstruction_error(w, pruned, x).frob_rel;
        };
        err_24 += frob(SparsityPattern::semi_structured(2, 4));
        err_48 += frob(SparsityPattern::semi_structured(4, 8));
        err_u50 += frob(SparsityPattern::unstructured(0.5));
    }
    err_24 /= 32.0;
    err_48 /= 32.0;
    err_u50 /= 32.0;
    res.detail = "mean frob_rel 2:4=" + fmt(err_24) + " 4:8=" + fmt(err_48) +
                 " u:0.5=" + fmt(err_u50);
    res.pass = err_24 >= err_48 && err_48 >= err_u50;
    res.max_error = res.pass ? 0.0 : 1.0;
    return res;
}

CheckResult check_directional_sanity(std::uint64_t seed) {
    CheckResult res{"wanda_vs_magnitude_reconstruction", 8, 0.0, 0.0, false, ""};
    const SparsityPattern pattern = SparsityPattern::unstructured(0.5);

    std::size_t wins = 0;
    std::ostringstream detail;
    for (std::size_t s = 0; s < res.samples; ++s) {
        const std::uint64_t model_seed = seed + 101 * (s + 1);
        const ToyTransformer model = init_model(default_toy_manifest(model_seed));

        const auto tmp = std::filesystem::temp_directory_path() /
                         ("ace-dirsanity-" + std::to_string(model_seed) + ".txt");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << generate_corpus_text(model_seed, 8192);
        }
        CalibConfig cfg;
        cfg.nsamples = 16;
        cfg.seqlen = 64;
        cfg.seed = model_seed;
        cfg.corpus = tmp;

        CaptureBuffer capture;
        const CalibrationResult calib =
            run_calibration(model, cfg, DampingPolicy::proportional(), &capture);
        std::filesystem::remove(tmp);

        double frob_wanda = 0.0, frob_mag = 0.0;
        for (const std::string& layer : model.manifest.layer_names) {
            const Matrix& w = model.tensor(layer);
            const Matrix acts = capture.raw_matrix(layer);
            const FinalizedStats fin = finalize(calib.stats.at(layer));
            const Matrix pr_w = apply_mask(w, build_mask(score_wanda(w, fin), pattern));
            const Matrix pr_m = apply_mask(w, build_mask(score_magnitude(w), pattern));
            frob_wanda += layer_reconstruction_error(w, pr_w, acts).frob_rel;
            frob_mag += layer_reconstruction_error(w, pr_m, acts).frob_rel;
        }
        const double n = static_cast<double>(model.manifest.layer_names.size());
        frob_wanda /= n;
        frob_mag /= n;
        const bool win = frob_wanda <= frob_mag;
        wins += win;
        detail << "seed" << s << ": wanda=" << fmt(frob_wanda) << " mag=" << fmt(frob_mag)
               << (win ? " ok; " : " WORSE; ");
    }
    res.detail = detail.str();
    res.max_error = static_cast<double>(res.samples - wins);
    res.threshold = 2.0;  // soft gate: at most 2 of 8 seeds may flip
    res.pass = wins >= 6;
    return res;
}

std::vector<CheckResult> run_verification(std::uint64_t seed) {
    return {
        check_sherman_morrison(seed),    check_diff_example(seed),
        check_efficiency(seed),          check_lemma_convergence(seed),
        check_holder(seed),              check_relative_score_bound(seed),
        check_variance_identity(seed),   check_power_series_bracket(seed),
        check_metric_oracle(seed),       check_argsort_invariance(seed),
        check_mask_contracts(seed),      check_jobs_determinism(seed),
        check_constraint_relaxation(seed), check_directional_sanity(seed),
    };
}

std::string verification_report_json(const std::vector<CheckResult>& checks) {
    nlohmann::json j;
    bool all = true;
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks) {
        all = all && c.pass;
        j["checks"].push_back({{"detail", c.detail},
                               {"max_error", c.max_error},
                               {"name", c.name},
                               {"pass", c.pass},
                               {"samples", c.samples},
                               {"threshold", c.threshold}});
    }
    j["pass"] = all;
    return j.dump(2) + "\n";
}

std::string verification_report_table(const std::vector<CheckResult>& checks) {
    std::ostringstream os;
    std::size_t width = 4;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    for (const auto& c : checks) {
        os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name;
        os << std::string(width - c.name.size() + 2, ' ');
        os << "samples=" << c.samples << "  max_error=" << fmt(c.max_error)
           << "  threshold=" << fmt(c.threshold);
        if (!c.detail.empty()) os << "\n       " << c.detail;
        os << "\n";
    }
    return os.str();
}

}  // namespace ace
