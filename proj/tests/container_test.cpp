#include <doctest.h>

#include <cstdint>
#include <stdexcept>

#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ace/container.hpp"

using ace::Dtype;
using ace::Matrix;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ace-container-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// what() substring check with the full message on failure.
template <typename Fn>
void expect_error(Fn fn, const std::string& needle) {
    try {
        fn();
        FAIL_CHECK("expected an exception mentioning '" << needle << "'");
    } catch (const std::runtime_error& e) {
        INFO("message: " << e.what());
        CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
}

std::map<std::string, Matrix> sample_tensors() {
    Matrix a(2, 3);
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = 0.5 * static_cast<double>(i) - 1.0;
    Matrix b(1, 4, 0.25);
    return {{"alpha", a}, {"beta", b}};
}

}  // namespace

TEST_CASE("f64 tensors and metadata round-trip bitwise") {
    TempDir tmp;
    const auto path = tmp.path / "t.acet";
    const auto tensors = sample_tensors();
    ace::write_tensors(path, tensors, Dtype::f64, {{"pattern", "2:4"}, {"note", "x"}});

    const ace::TensorFileContent got = ace::read_tensor_file(path);
    REQUIRE(got.tensors.size() == 2);
    CHECK(got.tensors.at("alpha").rows == 2);
    CHECK(got.tensors.at("alpha").cols == 3);
    CHECK(got.tensors.at("alpha").data == tensors.at("alpha").data);
    CHECK(got.tensors.at("beta").data == tensors.at("beta").data);
    CHECK(got.metadata.at("pattern") == "2:4");
    CHECK(got.metadata.at("note") == "x");
}

TEST_CASE("f32 narrowing uses round-to-nearest float") {
    TempDir tmp;
    const auto path = tmp.path / "t.acet";
    Matrix m(1, 2);
    m.data = {0.1, 1e-42};  // second value is subnormal in float
    ace::write_tensors(path, {{"w", m}}, Dtype::f32);
    const auto got = ace::read_tensors(path);
    CHECK(got.at("w").data[0] == static_cast<double>(static_cast<float>(0.1)));
    CHECK(got.at("w").data[1] == static_cast<double>(static_cast<float>(1e-42)));
}

TEST_CASE("u8 masks round-trip and reject non-binary values") {
    TempDir tmp;
    const auto path = tmp.path / "m.acet";
    Matrix mask(2, 2);
    mask.data = {1.0, 0.0, 0.0, 1.0};
    ace::write_tensors(path, {{"mask", mask}}, Dtype::u8);
    CHECK(ace::read_tensors(path).at("mask").data == mask.data);

    mask.data[0] = 2.0;
    CHECK_THROWS_AS(ace::write_tensors(tmp.path / "bad.acet", {{"mask", mask}}, Dtype::u8),
                    std::invalid_argument);
}

TEST_CASE("writer validates its inputs") {
    TempDir tmp;
    const auto path = tmp.path / "t.acet";
    CHECK_THROWS_AS(ace::write_tensors(path, {}, Dtype::f64), std::invalid_argument);
    Matrix bad(1, 1);
    bad.data[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ace::write_tensors(path, {{"w", bad}}, Dtype::f64), std::invalid_argument);
    CHECK_THROWS_AS(ace::write_tensors(path, {{"", Matrix(1, 1)}}, Dtype::f64),
                    std::invalid_argument);
    // A tensor name colliding with a metadata key is ambiguous on read.
    CHECK_THROWS_AS(
        ace::write_tensors(path, {{"pattern", Matrix(1, 1)}}, Dtype::f64, {{"pattern", "x"}}),
        std::invalid_argument);
}

TEST_CASE("file layout: magic, LE header length, canonical JSON header") {
    TempDir tmp;
    const auto path = tmp.path / "t.acet";
    ace::write_tensors(path, sample_tensors(), Dtype::f64, {{"pattern", "u:0.5"}});
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() > 12);
    CHECK(std::string(bytes.data(), 4) == "ACE1");

    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 4, 8);
    REQUIRE(12 + header_len <= bytes.size());

    const std::string header(bytes.data() + 12, header_len);
    const auto parsed = nlohmann::json::parse(header);
    // Canonical form: nlohmann's dump() of the parsed object reproduces the
    // stored bytes exactly (sorted keys, no whitespace).
    CHECK(parsed.dump() == header);
    CHECK(parsed.contains("alpha"));
    CHECK(parsed["pattern"] == "u:0.5");

    // Payload is contiguous ascending by name: "alpha" before "beta".
    CHECK(parsed["alpha"]["offset"] == 0);
    CHECK(parsed["alpha"]["nbytes"] == 2 * 3 * 8);
    CHECK(parsed["beta"]["offset"] == 2 * 3 * 8);
}

TEST_CASE("reader distinguishes corruption modes") {
    TempDir tmp;
    const auto path = tmp.path / "t.acet";
    ace::write_tensors(path, sample_tensors(), Dtype::f64);
    const auto good = slurp(path);
    const auto patched = tmp.path / "bad.acet";

    SUBCASE("bad magic") {
        auto b = good;
        b[0] = 'X';
        spit(patched, b);
        expect_error([&] { ace::read_tensor_file(patched); }, "bad magic");
    }
    SUBCASE("truncated header") {
        std::vector<char> b(good.begin(), good.begin() + 8);
        spit(patched, b);
        expect_error([&] { ace::read_tensor_file(patched); }, "truncated header");
    }
    SUBCASE("header length exceeding the file") {
        auto b = good;
        b[4] = char(0xFF);
        b[5] = char(0xFF);
        spit(patched, b);
        expect_error([&] { ace::read_tensor_file(patched); }, "header length exceeds file size");
    }
    SUBCASE("malformed header JSON") {
        auto b = good;
        b[12] = '!';
        spit(patched, b);
        expect_error([&] { ace::read_tensor_file(patched); }, "malformed header JSON");
    }
    SUBCASE("truncated payload") {
        std::vector<char> b(good.begin(), good.end() - 1);
        spit(patched, b);
        expect_error([&] { ace::read_tensor_file(patched); }, "truncated payload");
    }
    SUBCASE("unknown dtype") {
        std::string text(good.begin(), good.end());
        const auto pos = text.find("\"f64\"");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 5, "\"f99\"");
        spit(patched, std::vector<char>(text.begin(), text.end()));
        expect_error([&] { ace::read_tensor_file(patched); }, "unknown dtype");
    }
}

TEST_CASE("rank-1 shapes read back as one row") {
    // Hand-build a file whose tensor shape is [4] rather than [1, 4].
    nlohmann::json header;
    header["v"] = {{"dtype", "f64"}, {"shape", {4}}, {"offset", 0}, {"nbytes", 32}};
    const std::string htext = header.dump();

    TempDir tmp;
    const auto path = tmp.path / "r1.acet";
    std::ofstream out(path, std::ios::binary);
    out.write("ACE1", 4);
    const std::uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    const double vals[4] = {1.0, 2.0, 3.0, 4.0};
    out.write(reinterpret_cast<const char*>(vals), 32);
    out.close();

    const auto got = ace::read_tensors(path);
    CHECK(got.at("v").rows == 1);
    CHECK(got.at("v").cols == 4);
    CHECK(got.at("v").data == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("manifest round-trips") {
    TempDir tmp;
    ace::ModelManifest m;
    m.vocab_size = 259;
    m.d_model = 64;
    m.n_layers = 2;
    m.n_heads = 4;
    m.d_ff = 256;
    m.context_len = 128;
    m.layer_names = {"blocks.0.attn.q", "blocks.0.mlp.up"};
    m.seed = 1234567890123456789ULL;

    const auto path = tmp.path / "manifest.json";
    ace::write_manifest(path, m);
    const ace::ModelManifest got = ace::read_manifest(path);
    CHECK(got.vocab_size == m.vocab_size);
    CHECK(got.d_model == m.d_model);
    CHECK(got.n_layers == m.n_layers);
    CHECK(got.n_heads == m.n_heads);
    CHECK(got.d_ff == m.d_ff);
    CHECK(got.context_len == m.context_len);
    CHECK(got.layer_names == m.layer_names);
    CHECK(got.seed == m.seed);
}
