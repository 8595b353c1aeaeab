#include "ace/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ace/container.hpp"

namespace ace {

SparsityPattern SparsityPattern::unstructured(double ratio, Group group) {
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw std::invalid_argument("pattern: unstructured ratio must lie in [0, 1]");
    SparsityPattern p;
    p.kind = Kind::unstructured;
    p.ratio = ratio;
    p.group = group;
    return p;
}

SparsityPattern SparsityPattern::semi_structured(std::size_t n, std::size_t m) {
    if (m == 0 || n > m)
        throw std::invalid_argument("pattern: semi-structured requires 0 <= n <= m, m > 0");
    SparsityPattern p;
    p.kind = Kind::semi_structured;
    p.n = n;
    p.m = m;
    return p;
}

SparsityPattern SparsityPattern::parse(const std::string& s) {
    if (s == "dense") return unstructured(0.0);
    if (s.rfind("u:", 0) == 0) {
        std::string body = s.substr(2);
        Group group = Group::per_row;
        if (const auto suffix = body.rfind(":layer");
            suffix != std::string::npos && suffix + 6 == body.size()) {
            group = Group::per_layer;
            body = body.substr(0, suffix);
        }
        try {
            std::size_t used = 0;
            const double r = std::stod(body, &used);
            if (used != body.size()) throw std::invalid_argument("trailing junk");
            return unstructured(r, group);
        } catch (const std::exception&) {
            throw std::invalid_argument("pattern: bad unstructured ratio in '" + s + "'");
        }
    }
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        try {
            std::size_t un = 0, um = 0;
            const unsigned long n = std::stoul(s.substr(0, colon), &un);
            const unsigned long m = std::stoul(s.substr(colon + 1), &um);
            if (un != colon || um != s.size() - colon - 1) throw std::invalid_argument("junk");
            return semi_structured(n, m);
        } catch (const std::exception&) {
            throw std::invalid_argument("pattern: malformed n:m in '" + s + "'");
        }
    }
    throw std::invalid_argument("pattern: unknown pattern '" + s + "'");
}

std::string SparsityPattern::to_string() const {
    if (kind == Kind::semi_structured)
        return std::to_string(n) + ":" + std::to_string(m);
    if (ratio == 0.0) return "dense";
    std::string r = "u:" + std::to_string(ratio);
    if (group == Group::per_layer) r += ":layer";
    return r;
}

std::size_t PruneMask::kept_count() const {
    return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

namespace {

// Sorts group-local entry ids so the drop set is the prefix. Lower score
// drops first; among ties the smaller column, then the smaller row.
struct DropOrder {
    const ScoreMatrix& scores;
    std::size_t cols;
    bool operator()(std::size_t a, std::size_t b) const {
        const double sa = scores.data[a];
        const double sb = scores.data[b];
        if (sa != sb) return sa < sb;
        const std::size_t ca = a % cols, cb = b % cols;
        if (ca != cb) return ca < cb;
        return a / cols < b / cols;
    }
};

}  // namespace

PruneMask build_mask(const ScoreMatrix& scores, const SparsityPattern& pattern) {
    if (scores.rows == 0 || scores.cols == 0)
        throw std::invalid_argument("build_mask: empty score matrix");
    if (!all_finite(scores)) throw std::invalid_argument("build_mask: non-finite score");

    PruneMask mask;
    mask.rows = scores.rows;
    mask.cols = scores.cols;
    mask.pattern = pattern;
    mask.keep.assign(scores.size(), 1);

    const DropOrder order{scores, scores.cols};

    auto drop_lowest = [&](std::vector<std::size_t>& ids, std::size_t drop) {
        if (drop == 0) return;
        if (drop >= ids.size()) {
            for (std::size_t id : ids) mask.keep[id] = 0;
            return;
        }
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(drop),
                          ids.end(), order);
        for (std::size_t i = 0; i < drop; ++i) mask.keep[ids[i]] = 0;
    };

    if (pattern.kind == SparsityPattern::Kind::semi_structured) {
        if (scores.cols % pattern.m != 0)
            throw std::invalid_argument("build_mask: cols " + std::to_string(scores.cols) +
                                        " not divisible by m " + std::to_string(pattern.m));
        std::vector<std::size_t> ids(pattern.m);
        for (std::size_t i = 0; i < scores.rows; ++i)
            for (std::size_t b = 0; b < scores.cols; b += pattern.m) {
                std::iota(ids.begin(), ids.end(), i * scores.cols + b);
                drop_lowest(ids, pattern.m - pattern.n);
            }
        return mask;
    }

    if (pattern.group == SparsityPattern::Group::per_row) {
        const std::size_t drop =
            static_cast<std::size_t>(std::floor(pattern.ratio * static_cast<double>(scores.cols)));
        std::vector<std::size_t> ids(scores.cols);
        for (std::size_t i = 0; i < scores.rows; ++i) {
            std::iota(ids.begin(), ids.end(), i * scores.cols);
            drop_lowest(ids, drop);
        }
    } else {
        const std::size_t drop =
            static_cast<std::size_t>(std::floor(pattern.ratio * static_cast<double>(scores.size())));
        std::vector<std::size_t> ids(scores.size());
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        drop_lowest(ids, drop);
    }
    return mask;
}

Matrix apply_mask(const Matrix& w, const PruneMask& mask) {
    if (w.rows != mask.rows || w.cols != mask.cols)
        throw std::invalid_argument("apply_mask: shape mismatch");
    Matrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.size(); ++i) out.data[i] = mask.keep[i] ? w.data[i] : 0.0;
    return out;
}

std::vector<MaskGroupCount> MaskReport::failures() const {
    std::vector<MaskGroupCount> out;
    for (const auto& g : groups)
        if (!g.ok) out.push_back(g);
    return out;
}

MaskReport verify_mask(const PruneMask& mask) {
    if (mask.keep.size() != mask.rows * mask.cols)
        throw std::invalid_argument("verify_mask: mask storage size mismatch");

    MaskReport report;
    report.pass = true;
    const SparsityPattern& p = mask.pattern;

    auto count_keep = [&](std::size_t row, std::size_t col_begin, std::size_t size) {
        std::size_t kept = 0;
        for (std::size_t j = 0; j < size; ++j)
            kept += mask.keep[row * mask.cols + col_begin + j] != 0;
        return kept;
    };

    if (p.kind == SparsityPattern::Kind::semi_structured) {
        if (mask.cols % p.m != 0)
            throw std::invalid_argument("verify_mask: cols not divisible by m");
        for (std::size_t i = 0; i < mask.rows; ++i)
            for (std::size_t b = 0; b < mask.cols; b += p.m) {
                MaskGroupCount g;
                g.row = i;
                g.col_begin = b;
                g.size = p.m;
                g.expected_keep = p.n;
                g.actual_keep = count_keep(i, b, p.m);
                g.ok = g.actual_keep == g.expected_keep;
                report.pass = report.pass && g.ok;
                report.groups.push_back(g);
            }
        return report;
    }

    if (p.group == SparsityPattern::Group::per_row) {
        const std::size_t drop =
            static_cast<std::size_t>(std::floor(p.ratio * static_cast<double>(mask.cols)));
        for (std::size_t i = 0; i < mask.rows; ++i) {
            MaskGroupCount g;
            g.row = i;
            g.size = mask.cols;
            g.expected_keep = mask.cols - drop;
            g.actual_keep = count_keep(i, 0, mask.cols);
            g.ok = g.actual_keep == g.expected_keep;
            report.pass = report.pass && g.ok;
            report.groups.push_back(g);
        }
    } else {
        const std::size_t total = mask.rows * mask.cols;
        const std::size_t drop =
            static_cast<std::size_t>(std::floor(p.ratio * static_cast<double>(total)));
        MaskGroupCount g;
        g.size = total;
        g.expected_keep = total - drop;
        g.actual_keep = mask.kept_count();
        g.ok = g.actual_keep == g.expected_keep;
        report.pass = g.ok;
        report.groups.push_back(g);
    }
    return report;
}

void write_masks(const std::filesystem::path& path,
                 const std::map<std::string, PruneMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("write_masks: empty mask map");
    std::map<std::string, Matrix> tensors;
    const std::string pattern = masks.begin()->second.pattern.to_string();
    for (const auto& [name, mask] : masks) {
        if (mask.pattern.to_string() != pattern)
            throw std::invalid_argument("write_masks: masks mix sparsity patterns");
        Matrix t(mask.rows, mask.cols);
        for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = mask.keep[i] ? 1.0 : 0.0;
        tensors.emplace(name, std::move(t));
    }
    write_tensors(path, tensors, Dtype::u8, {{"pattern", pattern}});
}

std::map<std::string, PruneMask> read_masks(const std::filesystem::path& path) {
    TensorFileContent content = read_tensor_file(path);
    auto it = content.metadata.find("pattern");
    if (it == content.metadata.end())
        throw std::runtime_error("mask file " + path.string() + ": missing pattern metadata");
    SparsityPattern pattern = SparsityPattern::parse(it->second);
    std::map<std::string, PruneMask> out;
    for (const auto& [name, t] : content.tensors) {
        PruneMask m;
        m.rows = t.rows;
        m.cols = t.cols;
        m.pattern = pattern;
        m.keep.resize(t.size());
        for (std::size_t i = 0; i < t.size(); ++i)
            m.keep[i] = t.data[i] != 0.0 ? 1 : 0;
        out.emplace(name, std::move(m));
    }
    return out;
}

}  // namespace ace
