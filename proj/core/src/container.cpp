#include "ace/container.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ace {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', 'C', 'E', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw std::runtime_error("tensor file " + path.string() + ": " + what);
}

}  // namespace

const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f32: return "f32";
        case Dtype::f64: return "f64";
        case Dtype::u8: return "u8";
    }
    throw std::invalid_argument("dtype_name: unknown dtype");
}

std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::f64: return 8;
        case Dtype::u8: return 1;
    }
    throw std::invalid_argument("dtype_size: unknown dtype");
}

void write_tensors(const std::filesystem::path& path,
                   const std::map<std::string, Matrix>& tensors, Dtype dtype,
                   const std::map<std::string, std::string>& metadata) {
    if (tensors.empty()) throw std::invalid_argument("write_tensors: empty tensor map");

    for (const auto& [name, t] : tensors) {
        if (name.empty()) throw std::invalid_argument("write_tensors: empty tensor name");
        if (t.rows == 0 || t.cols == 0)
            throw std::invalid_argument("write_tensors: tensor '" + name + "' has empty shape");
        if (dtype != Dtype::u8 && !all_finite(t))
            throw std::invalid_argument("write_tensors: tensor '" + name + "' has non-finite values");
        if (dtype == Dtype::u8) {
            for (double x : t.data)
                if (x != 0.0 && x != 1.0)
                    throw std::invalid_argument("write_tensors: tensor '" + name +
                                                "' not 0/1 valued for u8 dtype");
        }
    }

    // std::map iteration gives ascending name order; offsets are assigned in
    // that order so the payload layout is canonical too.
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const std::uint64_t nbytes = t.size() * dtype_size(dtype);
        header[name] = {{"dtype", dtype_name(dtype)},
                        {"nbytes", nbytes},
                        {"offset", offset},
                        {"shape", {t.rows, t.cols}}};
        offset += nbytes;
    }
    for (const auto& [key, value] : metadata) {
        if (header.contains(key))
            throw std::invalid_argument("write_tensors: metadata key '" + key +
                                        "' collides with a tensor name");
        header[key] = value;
    }

    const std::string header_str = header.dump();
    std::string blob;
    blob.reserve(12 + header_str.size() + offset);
    blob.append(kMagic, 4);
    put_u64_le(blob, header_str.size());
    blob.append(header_str);

    for (const auto& [name, t] : tensors) {
        switch (dtype) {
            case Dtype::f64: {
                const char* p = reinterpret_cast<const char*>(t.data.data());
                blob.append(p, t.size() * 8);
                break;
            }
            case Dtype::f32: {
                std::vector<float> f(t.size());
                for (std::size_t i = 0; i < t.size(); ++i) f[i] = static_cast<float>(t.data[i]);
                blob.append(reinterpret_cast<const char*>(f.data()), f.size() * 4);
                break;
            }
            case Dtype::u8: {
                std::vector<unsigned char> b(t.size());
                for (std::size_t i = 0; i < t.size(); ++i)
                    b[i] = static_cast<unsigned char>(t.data[i] != 0.0);
                blob.append(reinterpret_cast<const char*>(b.data()), b.size());
                break;
            }
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(path, "write failed");
}

TensorFileContent read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(path, "cannot open");
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);

    unsigned char head[12];
    if (file_size < 12 || !in.read(reinterpret_cast<char*>(head), 12))
        fail(path, "truncated header");
    if (std::memcmp(head, kMagic, 4) != 0) fail(path, "bad magic");
    const std::uint64_t header_len = get_u64_le(head + 4);
    if (header_len > file_size - 12) fail(path, "header length exceeds file size");

    std::string header_str(header_len, '\0');
    if (!in.read(header_str.data(), static_cast<std::streamsize>(header_len)))
        fail(path, "truncated header");

    json header = json::parse(header_str, nullptr, false);
    if (header.is_discarded() || !header.is_object()) fail(path, "malformed header JSON");

    const std::uint64_t payload_size = file_size - 12 - header_len;

    struct Entry {
        std::string name;
        Dtype dtype;
        std::size_t rows, cols;
        std::uint64_t offset, nbytes;
    };
    std::vector<Entry> entries;
    TensorFileContent content;

    for (const auto& [name, value] : header.items()) {
        if (value.is_string()) {
            content.metadata[name] = value.get<std::string>();
            continue;
        }
        if (!value.is_object() || !value.contains("dtype")) continue;  // forward compat
        if (!value.contains("shape") || !value.contains("offset") || !value.contains("nbytes"))
            fail(path, "tensor '" + name + "' missing shape/offset/nbytes");

        Entry e;
        e.name = name;
        const std::string dt = value["dtype"].get<std::string>();
        if (dt == "f32") e.dtype = Dtype::f32;
        else if (dt == "f64") e.dtype = Dtype::f64;
        else if (dt == "u8") e.dtype = Dtype::u8;
        else fail(path, "unknown dtype '" + dt + "' for tensor '" + name + "'");

        const auto& shape = value["shape"];
        if (!shape.is_array() || shape.empty() || shape.size() > 2)
            fail(path, "unsupported shape rank for tensor '" + name + "'");
        if (shape.size() == 1) {
            e.rows = 1;
            e.cols = shape[0].get<std::uint64_t>();
        } else {
            e.rows = shape[0].get<std::uint64_t>();
            e.cols = shape[1].get<std::uint64_t>();
        }
        if (e.rows == 0 || e.cols == 0) fail(path, "empty shape for tensor '" + name + "'");

        e.offset = value["offset"].get<std::uint64_t>();
        e.nbytes = value["nbytes"].get<std::uint64_t>();
        if (e.nbytes != static_cast<std::uint64_t>(e.rows) * e.cols * dtype_size(e.dtype))
            fail(path, "nbytes inconsistent with shape for tensor '" + name + "'");
        if (e.offset > payload_size || e.nbytes > payload_size - e.offset)
            fail(path, "truncated payload for tensor '" + name + "'");
        entries.push_back(std::move(e));
    }

    if (entries.empty()) fail(path, "no tensors in header");

    // Header iteration is name-sorted; byte ranges must ascend without
    // overlap and cover the payload exactly.
    std::uint64_t covered = 0;
    std::uint64_t prev_end = 0;
    for (const Entry& e : entries) {
        if (e.offset < prev_end) fail(path, "overlapping tensor ranges");
        prev_end = e.offset + e.nbytes;
        covered += e.nbytes;
    }
    if (covered != payload_size) fail(path, "payload size mismatch");

    const std::uint64_t payload_pos = 12 + header_len;
    for (const Entry& e : entries) {
        Matrix t(e.rows, e.cols);
        in.seekg(static_cast<std::streamoff>(payload_pos + e.offset));
        switch (e.dtype) {
            case Dtype::f64: {
                if (!in.read(reinterpret_cast<char*>(t.data.data()),
                             static_cast<std::streamsize>(e.nbytes)))
                    fail(path, "truncated payload for tensor '" + e.name + "'");
                break;
            }
            case Dtype::f32: {
                std::vector<float> f(t.size());
                if (!in.read(reinterpret_cast<char*>(f.data()),
                             static_cast<std::streamsize>(e.nbytes)))
                    fail(path, "truncated payload for tensor '" + e.name + "'");
                for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<double>(f[i]);
                break;
            }
            case Dtype::u8: {
                std::vector<unsigned char> b(t.size());
                if (!in.read(reinterpret_cast<char*>(b.data()),
                             static_cast<std::streamsize>(e.nbytes)))
                    fail(path, "truncated payload for tensor '" + e.name + "'");
                for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = b[i] ? 1.0 : 0.0;
                break;
            }
        }
        content.tensors.emplace(e.name, std::move(t));
    }
    return content;
}

std::map<std::string, Matrix> read_tensors(const std::filesystem::path& path) {
    return read_tensor_file(path).tensors;
}

void write_manifest(const std::filesystem::path& path, const ModelManifest& m) {
    if (m.vocab_size == 0 || m.d_model == 0 || m.context_len == 0)
        throw std::invalid_argument("write_manifest: zero model dimension");
    json j = {{"context_len", m.context_len}, {"d_ff", m.d_ff},
              {"d_model", m.d_model},        {"layer_names", m.layer_names},
              {"n_heads", m.n_heads},        {"n_layers", m.n_layers},
              {"seed", m.seed},              {"vocab_size", m.vocab_size}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("manifest " + path.string() + ": cannot open for writing");
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("manifest " + path.string() + ": write failed");
}

ModelManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("manifest " + path.string() + ": cannot open");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw std::runtime_error("manifest " + path.string() + ": malformed JSON");
    try {
        ModelManifest m;
        m.vocab_size = j.at("vocab_size").get<std::size_t>();
        m.d_model = j.at("d_model").get<std::size_t>();
        m.n_layers = j.at("n_layers").get<std::size_t>();
        m.n_heads = j.at("n_heads").get<std::size_t>();
        m.d_ff = j.at("d_ff").get<std::size_t>();
        m.context_len = j.at("context_len").get<std::size_t>();
        m.layer_names = j.at("layer_names").get<std::vector<std::string>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace ace
