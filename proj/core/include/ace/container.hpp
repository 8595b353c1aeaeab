#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ace/matrix.hpp"

namespace ace {

// On-disk tensor container (.acet):
//   bytes 0..3   magic "ACE1"
//   bytes 4..11  header length, u64 little-endian
//   header       canonical JSON (sorted keys, no whitespace), UTF-8
//   payload      raw little-endian tensor bytes, contiguous ascending ranges
//
// Header entries whose value is an object with dtype/shape/offset/nbytes
// describe tensors; entries with string values are file metadata (for
// example the mask "pattern" key). Unknown keys inside a tensor object are
// ignored so future writers can extend the format.

enum class Dtype { f32, f64, u8 };

const char* dtype_name(Dtype d);
std::size_t dtype_size(Dtype d);

struct TensorFileContent {
    std::map<std::string, Matrix> tensors;
    std::map<std::string, std::string> metadata;
};

// Writes tensors sorted by name; all tensors share the call's dtype.
// f32 narrowing uses the default IEEE round-to-nearest-even. Values are
// validated finite for float dtypes; u8 requires every value to be 0 or 1.
void write_tensors(const std::filesystem::path& path,
                   const std::map<std::string, Matrix>& tensors, Dtype dtype,
                   const std::map<std::string, std::string>& metadata = {});

// Validates magic, header bounds, JSON shape, dtype, byte ranges
// (non-overlapping, ascending, exactly covering the payload) before
// allocating anything payload-sized. Throws std::runtime_error with a
// distinct message per failure mode.
TensorFileContent read_tensor_file(const std::filesystem::path& path);

std::map<std::string, Matrix> read_tensors(const std::filesystem::path& path);

// Companion model description, stored as canonical JSON in manifest.json.
// layer_names lists the prunable 2-D tensors in forward order.
struct ModelManifest {
    std::size_t vocab_size = 0;
    std::size_t d_model = 0;
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_ff = 0;
    std::size_t context_len = 0;
    std::vector<std::string> layer_names;
    std::uint64_t seed = 0;
};

void write_manifest(const std::filesystem::path& path, const ModelManifest& m);
ModelManifest read_manifest(const std::filesystem::path& path);

}  // namespace ace
