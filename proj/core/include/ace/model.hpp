#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ace/container.hpp"
#include "ace/matrix.hpp"
#include "ace/stats.hpp"

namespace ace {

// Byte-level tokenizer: token id == byte value; ids 256..258 are reserved
// specials, giving the default vocab of 259.
constexpr std::size_t kByteVocab = 256;
constexpr std::size_t kNumSpecials = 3;

std::vector<int> encode_bytes(std::string_view text);

// Decoder-only toy model: token embedding, n_layers blocks of
// {RMS-norm, causal multi-head attention, residual} and
// {RMS-norm, up/ReLU/down MLP, residual}, gained final RMS-norm, and a
// head tied to the embedding unless an untied "head" tensor is present.
// Only the per-block attn.q/k/v/o and mlp.up/down matrices are prunable;
// the embedding, norm gain, and head stay dense.
struct ToyTransformer {
    ModelManifest manifest;
    std::map<std::string, Matrix> weights;

    const Matrix& tensor(const std::string& name) const;
    Matrix& tensor(const std::string& name);
    bool has_tensor(const std::string& name) const { return weights.count(name) != 0; }
};

ModelManifest default_toy_manifest(std::uint64_t seed);

// Deterministic Xavier-uniform init: each 2-D tensor is drawn from
// uniform(-b, b) with b = sqrt(6/(fan_in+fan_out)) using an mt19937_64
// seeded from manifest.seed mixed with the tensor name, so layer order
// doesn't matter. The 1-D final norm gain initializes to 1.
ToyTransformer init_model(const ModelManifest& manifest);

void save_model(const std::filesystem::path& dir, const ToyTransformer& model);
ToyTransformer load_model(const std::filesystem::path& dir);

// Streams prunable-layer input rows during forward. When stats for a layer
// exist they accumulate in place; when retain_raw is set the raw rows are
// kept (one Matrix per layer, token-major) for damping previews and
// oracle-side recomputation. Observation never alters the forward values.
struct CaptureBuffer {
    bool retain_raw = false;
    std::map<std::string, FeatureStats> stats;
    std::map<std::string, std::vector<Vector>> raw;

    void observe(const std::string& layer, std::span<const double> row);
    Matrix raw_matrix(const std::string& layer) const;
};

// Runs tokens (at most context_len of them) through the model and returns
// one logits row per position. Throws on empty input, out-of-range ids, or
// length above context_len.
Matrix forward(const ToyTransformer& model, std::span<const int> tokens,
               CaptureBuffer* capture = nullptr);

// exp(mean next-token NLL), natural log, computed over windows of
// context_len starting every `stride` tokens. The default stride equals
// context_len: non-overlapping windows, every token scored once.
double perplexity(const ToyTransformer& model, std::span<const int> tokens,
                  std::size_t stride = 0);

// Shared NLL core: logits row p is scored against targets[p].
double perplexity_from_logits(const Matrix& logits, std::span<const int> targets);

struct CalibConfig {
    std::size_t nsamples = 128;
    std::size_t seqlen = 16;
    std::uint64_t seed = 0;
    std::filesystem::path corpus;
};

// Draws nsamples windows of exactly seqlen tokens at distinct random byte
// offsets (seeded, without replacement). Requires the corpus to hold at
// least nsamples*seqlen bytes and enough distinct offsets.
std::vector<std::vector<int>> sample_calibration(const CalibConfig& cfg);

struct ReconstructionError {
    double frob_rel = 0.0;  // |(W - What) X^T|_F / |W X^T|_F
    double mean_cos = 0.0;  // mean cosine between dense and pruned outputs
    std::size_t tokens_used = 0;
};

// activations holds one token per row. Tokens whose dense or pruned output
// is exactly zero are skipped for mean_cos; an all-zero dense output is a
// degenerate layer and throws.
ReconstructionError layer_reconstruction_error(const Matrix& dense_w, const Matrix& pruned_w,
                                               const Matrix& activations);

// Deterministic pseudo-text corpus for the toy pipeline (word soup with
// punctuation and newlines, seeded).
std::string generate_corpus_text(std::uint64_t seed, std::size_t nbytes);

}  // namespace ace
