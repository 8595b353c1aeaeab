#include <doctest.h>

#include <cstdint>
#include <stdexcept>

#include <unistd.h>

#include <filesystem>
#include <limits>
#include <string>

#include "ace/sparsify.hpp"

using ace::Matrix;
using ace::PruneMask;
using ace::SparsityPattern;

namespace {

Matrix scores(std::size_t r, std::size_t c, std::initializer_list<double> vals) {
    Matrix m(r, c);
    std::size_t i = 0;
    for (double v : vals) m.data[i++] = v;
    REQUIRE(i == m.size());
    return m;
}

std::vector<std::uint8_t> keeps(const PruneMask& m) { return m.keep; }

}  // namespace

TEST_CASE("2:4 keeps the two best of each block") {
    const Matrix s = scores(1, 4, {4.0, 1.0, 2.0, 8.0});
    const PruneMask m = ace::build_mask(s, SparsityPattern::semi_structured(2, 4));
    CHECK(keeps(m) == std::vector<std::uint8_t>{1, 0, 0, 1});
    CHECK(m.kept_count() == 2);
}

TEST_CASE("2:4 handles multiple blocks and rows independently") {
    const Matrix s = scores(2, 8,
                            {4, 1, 2, 8, /* block 2 */ 1, 2, 3, 4,
                             9, 9, 0, 0, /* block 2 */ 5, 6, 7, 8});
    const PruneMask m = ace::build_mask(s, SparsityPattern::semi_structured(2, 4));
    CHECK(keeps(m) == std::vector<std::uint8_t>{1, 0, 0, 1, 0, 0, 1, 1,
                                                1, 1, 0, 0, 0, 0, 1, 1});
}

TEST_CASE("ties drop the smaller column first") {
    const Matrix s = scores(1, 4, {2.0, 2.0, 2.0, 2.0});
    const PruneMask semi = ace::build_mask(s, SparsityPattern::semi_structured(2, 4));
    CHECK(keeps(semi) == std::vector<std::uint8_t>{0, 0, 1, 1});
    const PruneMask uns = ace::build_mask(s, SparsityPattern::unstructured(0.5));
    CHECK(keeps(uns) == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("per-layer ties drop the smaller row at equal column") {
    const Matrix s = scores(2, 2, {1.0, 1.0, 1.0, 1.0});
    const PruneMask m = ace::build_mask(
        s, SparsityPattern::unstructured(0.5, SparsityPattern::Group::per_layer));
    // Drop order at equal score: (col, row) ascending, so (0,0) then (0,1)?
    // No: column is the primary tie key, so (r0,c0) and (r1,c0) go first.
    CHECK(keeps(m) == std::vector<std::uint8_t>{0, 1, 0, 1});
}

TEST_CASE("unstructured drops floor(ratio * group size) per row") {
    const Matrix s = scores(1, 4, {5.0, 1.0, 7.0, 3.0});
    const PruneMask m = ace::build_mask(s, SparsityPattern::unstructured(0.3));
    // floor(0.3 * 4) = 1: only the score-1 column goes.
    CHECK(keeps(m) == std::vector<std::uint8_t>{1, 0, 1, 1});
}

TEST_CASE("ratio 0 keeps everything, ratio 1 keeps nothing") {
    const Matrix s = scores(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(ace::build_mask(s, SparsityPattern::unstructured(0.0)).kept_count() == 6);
    CHECK(ace::build_mask(s, SparsityPattern::unstructured(1.0)).kept_count() == 0);
}

TEST_CASE("per-layer budget concentrates drops on the weak row") {
    const Matrix s = scores(2, 2, {1.0, 2.0, 30.0, 40.0});
    const PruneMask m = ace::build_mask(
        s, SparsityPattern::unstructured(0.5, SparsityPattern::Group::per_layer));
    CHECK(keeps(m) == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("mask construction rejects bad input") {
    CHECK_THROWS_AS(ace::build_mask(scores(1, 6, {1, 2, 3, 4, 5, 6}),
                                    SparsityPattern::semi_structured(2, 4)),
                    std::invalid_argument);  // cols not divisible by m
    Matrix bad(1, 4, 1.0);
    bad.data[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ace::build_mask(bad, SparsityPattern::semi_structured(2, 4)),
                    std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::semi_structured(5, 4), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::semi_structured(0, 0), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::unstructured(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::unstructured(1.5), std::invalid_argument);
}

TEST_CASE("apply_mask copies kept weights bitwise and zeroes the rest") {
    const Matrix w = scores(1, 4, {0.1, -0.2, 0.3, -0.4});
    const Matrix s = scores(1, 4, {4.0, 1.0, 2.0, 8.0});
    const PruneMask m = ace::build_mask(s, SparsityPattern::semi_structured(2, 4));
    const Matrix pruned = ace::apply_mask(w, m);
    CHECK(pruned.data == std::vector<double>{0.1, 0.0, 0.0, -0.4});
    CHECK_THROWS_AS(ace::apply_mask(Matrix(2, 2, 1.0), m), std::invalid_argument);
}

TEST_CASE("verify_mask counts every group and flags tampering") {
    const Matrix s = scores(2, 8, {4, 1, 2, 8, 1, 2, 3, 4, 9, 9, 0, 0, 5, 6, 7, 8});
    PruneMask m = ace::build_mask(s, SparsityPattern::semi_structured(2, 4));
    ace::MaskReport report = ace::verify_mask(m);
    CHECK(report.pass);
    CHECK(report.groups.size() == 4);
    CHECK(report.failures().empty());

    m.keep[0] = 0;  // block now keeps 1 of 4
    report = ace::verify_mask(m);
    CHECK_FALSE(report.pass);
    REQUIRE(report.failures().size() == 1);
    CHECK(report.failures()[0].row == 0);
    CHECK(report.failures()[0].col_begin == 0);
    CHECK(report.failures()[0].expected_keep == 2);
    CHECK(report.failures()[0].actual_keep == 1);
}

TEST_CASE("pattern strings parse and round-trip") {
    CHECK(SparsityPattern::parse("dense").ratio == 0.0);
    CHECK(SparsityPattern::parse("dense").kind == SparsityPattern::Kind::unstructured);

    const SparsityPattern u = SparsityPattern::parse("u:0.25");
    CHECK(u.kind == SparsityPattern::Kind::unstructured);
    CHECK(u.ratio == 0.25);
    CHECK(u.group == SparsityPattern::Group::per_row);

    const SparsityPattern ul = SparsityPattern::parse("u:0.25:layer");
    CHECK(ul.group == SparsityPattern::Group::per_layer);
    CHECK(SparsityPattern::parse(ul.to_string()).group == SparsityPattern::Group::per_layer);

    const SparsityPattern nm = SparsityPattern::parse("2:4");
    CHECK(nm.kind == SparsityPattern::Kind::semi_structured);
    CHECK(nm.n == 2);
    CHECK(nm.m == 4);
    CHECK(SparsityPattern::parse(nm.to_string()).m == 4);

    CHECK_THROWS_AS(SparsityPattern::parse(""), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::parse("u:"), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::parse("u:2.0"), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::parse("4:2"), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::parse("a:b"), std::invalid_argument);
    CHECK_THROWS_AS(SparsityPattern::parse("sparse"), std::invalid_argument);
}

TEST_CASE("masks round-trip through the container format") {
    const Matrix s1 = scores(1, 4, {4.0, 1.0, 2.0, 8.0});
    const Matrix s2 = scores(2, 4, {1, 2, 3, 4, 8, 7, 6, 5});
    const SparsityPattern p = SparsityPattern::semi_structured(2, 4);
    std::map<std::string, PruneMask> masks;
    masks.emplace("a", ace::build_mask(s1, p));
    masks.emplace("b", ace::build_mask(s2, p));

    const auto path = std::filesystem::temp_directory_path() /
                      ("ace-mask-test-" + std::to_string(::getpid()) + ".acet");
    ace::write_masks(path, masks);
    const auto got = ace::read_masks(path);
    std::filesystem::remove(path);

    REQUIRE(got.size() == 2);
    CHECK(got.at("a").keep == masks.at("a").keep);
    CHECK(got.at("b").keep == masks.at("b").keep);
    CHECK(got.at("a").pattern.to_string() == p.to_string());
    CHECK(got.at("b").rows == 2);
}
