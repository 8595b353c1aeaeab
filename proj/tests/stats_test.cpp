#include <doctest.h>

#include <cstdint>
#include <stdexcept>

#include <cmath>
#include <limits>
#include <string>

#include "ace/stats.hpp"

using ace::DampingPolicy;
using ace::FeatureStats;
using ace::FinalizedStats;
using ace::Matrix;

namespace {

Matrix column(std::initializer_list<double> vals) {
    Matrix m(vals.size(), 1);
    std::size_t i = 0;
    for (double v : vals) m.data[i++] = v;
    return m;
}

}  // namespace

TEST_CASE("proportional damping resolves lambda from the preview energy") {
    Matrix preview(2, 2);
    preview.data = {1.0, 0.0, 0.0, 2.0};  // token energies 1 and 4
    const FeatureStats s = ace::new_stats(2, DampingPolicy::proportional(), preview);
    CHECK(s.lambda == 0.01 * 2.5);
}

TEST_CASE("proportional damping rejects an all-zero preview") {
    CHECK_THROWS_AS(ace::new_stats(2, DampingPolicy::proportional(), Matrix(3, 2, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("fixed damping uses lambda0 directly") {
    const FeatureStats s = ace::new_stats(1, DampingPolicy::fixed(7.5), column({1.0}));
    CHECK(s.lambda == 7.5);
    CHECK_THROWS_AS(ace::new_stats(1, DampingPolicy::fixed(0.0), column({1.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(ace::new_stats(1, DampingPolicy::fixed(-1.0), column({1.0})),
                    std::invalid_argument);
}

TEST_CASE("variance of the squared stream: x in {1,2,3}") {
    const Matrix tokens = column({1.0, 2.0, 3.0});
    FeatureStats s = ace::new_stats(1, DampingPolicy::fixed(1.0), tokens);
    ace::accumulate(s, tokens);
    const FinalizedStats fin = ace::finalize(s);

    // E[x^2] = 14/3, E[x^4] = 98/3, var = 98/3 - (14/3)^2 = 98/9.
    CHECK(fin.mean_sq[0] == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
    CHECK(fin.mean_quad[0] == doctest::Approx(98.0 / 3.0).epsilon(1e-15));
    CHECK(fin.var_sq[0] == doctest::Approx(98.0 / 9.0).epsilon(1e-13));
    CHECK(fin.col_l2[0] == doctest::Approx(std::sqrt(14.0)).epsilon(1e-15));
}

TEST_CASE("constant stream clamps variance to exactly zero") {
    const Matrix tokens = column({2.0, 2.0, 2.0, 2.0});
    FeatureStats s = ace::new_stats(1, DampingPolicy::fixed(1.0), tokens);
    ace::accumulate(s, tokens);
    CHECK(ace::finalize(s).var_sq[0] == 0.0);
}

TEST_CASE("single token, r = 1/4: rational 4/3 and moment 1.3125") {
    // x = 2, lambda = 12: r = 4 / (12 + 4) = 0.25.
    const Matrix tokens = column({2.0});
    FeatureStats s = ace::new_stats(1, DampingPolicy::fixed(12.0), tokens);
    ace::accumulate(s, tokens);
    const FinalizedStats fin = ace::finalize(s);
    CHECK(fin.rational[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(fin.moment[0] == 1.3125);
    CHECK(fin.rational[0] >= fin.moment[0]);
    CHECK(fin.moment[0] >= 1.0);
}

TEST_CASE("per-token ratios use each token's own norm") {
    // Tokens (1,0) and (0,2), lambda = 1: r_{1,1} = 1/2, r_{2,2} = 4/5,
    // other ratios 0.
    Matrix tokens(2, 2);
    tokens.data = {1.0, 0.0, 0.0, 2.0};
    FeatureStats s = ace::new_stats(2, DampingPolicy::fixed(1.0), tokens);
    ace::accumulate(s, tokens);
    const FinalizedStats fin = ace::finalize(s);
    CHECK(fin.rational[0] == doctest::Approx((2.0 + 1.0) / 2.0).epsilon(1e-15));
    CHECK(fin.rational[1] == doctest::Approx((1.0 + 5.0) / 2.0).epsilon(1e-15));
    CHECK(fin.moment[0] == doctest::Approx(1.0 + 0.25 + 0.125).epsilon(1e-15));
    CHECK(fin.moment[1] == doctest::Approx(1.0 + 0.4 + 0.32).epsilon(1e-15));
}

TEST_CASE("accumulate validates width and finiteness") {
    FeatureStats s = ace::new_stats(2, DampingPolicy::fixed(1.0), Matrix(1, 2, 1.0));
    const ace::Vector wrong = {1.0};
    CHECK_THROWS_AS(ace::accumulate_row(s, wrong), std::invalid_argument);

    Matrix bad(2, 2, 1.0);
    bad.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
    try {
        ace::accumulate(s, bad);
        FAIL_CHECK("expected rejection of non-finite activation");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("token 1") != std::string::npos);
        CHECK(msg.find("feature 1") != std::string::npos);
    }
}

TEST_CASE("merge equals one-shot accumulation") {
    Matrix all(6, 3);
    std::uint64_t x = 99;
    for (double& v : all.data) {
        x = x * 6364136223846793005ULL + 1442695040888963407ULL;
        v = static_cast<double>(static_cast<std::int64_t>(x >> 12)) / 1e15;
    }
    FeatureStats whole = ace::new_stats(3, DampingPolicy::proportional(), all);
    ace::accumulate(whole, all);

    FeatureStats left = ace::new_stats(3, DampingPolicy::fixed(whole.lambda), all);
    FeatureStats right = ace::new_stats(3, DampingPolicy::fixed(whole.lambda), all);
    for (std::size_t t = 0; t < 3; ++t) ace::accumulate_row(left, all.row(t));
    for (std::size_t t = 3; t < 6; ++t) ace::accumulate_row(right, all.row(t));
    const FeatureStats merged = ace::merge(left, right);

    CHECK(merged.token_count == whole.token_count);
    CHECK(merged.lambda == whole.lambda);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(merged.sum_sq[j] == doctest::Approx(whole.sum_sq[j]).epsilon(1e-12));
        CHECK(merged.sum_ratio[j] == doctest::Approx(whole.sum_ratio[j]).epsilon(1e-12));
    }
}

TEST_CASE("merge requires identical lambda") {
    const Matrix t = column({1.0});
    FeatureStats a = ace::new_stats(1, DampingPolicy::fixed(1.0), t);
    FeatureStats b = ace::new_stats(1, DampingPolicy::fixed(2.0), t);
    ace::accumulate(a, t);
    ace::accumulate(b, t);
    CHECK_THROWS_AS(ace::merge(a, b), std::invalid_argument);
}

TEST_CASE("finalize requires at least one token") {
    const FeatureStats s = ace::new_stats(1, DampingPolicy::fixed(1.0), column({1.0}));
    CHECK_THROWS_AS(ace::finalize(s), std::invalid_argument);
}

TEST_CASE("stats serialize to tensors and back bitwise") {
    Matrix tokens(4, 2);
    tokens.data = {0.5, -1.25, 2.0, 0.75, -0.125, 3.5, 1.0, -2.0};
    FeatureStats s = ace::new_stats(2, DampingPolicy::proportional(), tokens);
    ace::accumulate(s, tokens);

    const auto tensors = ace::stats_to_tensors({{"layer0", s}});
    CHECK(tensors.size() == 8);
    const auto back = ace::stats_from_tensors(tensors);
    REQUIRE(back.count("layer0") == 1);
    const FeatureStats& got = back.at("layer0");
    CHECK(got.d_in == s.d_in);
    CHECK(got.token_count == s.token_count);
    CHECK(got.lambda == s.lambda);
    CHECK(got.sum_token_norm_sq == s.sum_token_norm_sq);
    CHECK(got.sum_sq == s.sum_sq);
    CHECK(got.sum_quad == s.sum_quad);
    CHECK(got.sum_ratio == s.sum_ratio);
    CHECK(got.sum_ratio1 == s.sum_ratio1);
    CHECK(got.sum_ratio2 == s.sum_ratio2);
}
