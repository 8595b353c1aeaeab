#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ace/metrics.hpp"

namespace ace {

// Comparison-group layout for mask construction. Unstructured patterns rank
// within each row (default) or across the whole layer; semi-structured n:m
// keeps exactly n entries in every aligned m-wide block of a row.
struct SparsityPattern {
    enum class Kind { unstructured, semi_structured };
    enum class Group { per_row, per_layer };

    Kind kind = Kind::unstructured;
    double ratio = 0.0;  // unstructured drop fraction in [0, 1]
    std::size_t n = 0;   // semi-structured keep count
    std::size_t m = 0;   // semi-structured block width
    Group group = Group::per_row;

    static SparsityPattern unstructured(double ratio, Group group = Group::per_row);
    static SparsityPattern semi_structured(std::size_t n, std::size_t m);
    // "dense" | "u:<ratio>" | "<n>:<m>"
    static SparsityPattern parse(const std::string& s);
    std::string to_string() const;
};

// keep[i*cols+j] == 1 keeps the weight, 0 prunes it.
struct PruneMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep;
    SparsityPattern pattern;

    bool at(std::size_t i, std::size_t j) const { return keep[i * cols + j] != 0; }
    std::size_t kept_count() const;
};

// Drops the lowest-scoring entries of each comparison group. Exact counts:
// unstructured drops floor(ratio * group_size) per group; n:m keeps exactly
// n per block. Ties drop the smaller column index first, then the smaller
// row index, so rebuilding from equal inputs is bit-identical. Requires
// finite scores; n:m requires cols divisible by m.
PruneMask build_mask(const ScoreMatrix& scores, const SparsityPattern& pattern);

// Kept entries are copied bit-identically; dropped entries become 0.0.
Matrix apply_mask(const Matrix& w, const PruneMask& mask);

struct MaskGroupCount {
    std::size_t row = 0;        // row of the group (unused for per_layer)
    std::size_t col_begin = 0;  // block start (0 for whole-row/layer groups)
    std::size_t size = 0;
    std::size_t expected_keep = 0;
    std::size_t actual_keep = 0;
    bool ok = false;
};

struct MaskReport {
    bool pass = false;
    std::vector<MaskGroupCount> groups;
    std::vector<MaskGroupCount> failures() const;
};

// Recounts every comparison group against the mask's declared pattern.
MaskReport verify_mask(const PruneMask& mask);

// Mask file helpers: one u8 tensor per layer plus a "pattern" metadata key.
void write_masks(const std::filesystem::path& path,
                 const std::map<std::string, PruneMask>& masks);
std::map<std::string, PruneMask> read_masks(const std::filesystem::path& path);

}  // namespace ace
