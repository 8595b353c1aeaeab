#include "ace/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace ace {

namespace {

constexpr double kRmsEps = 1e-8;

// Model rows are (tokens x features); weights are (d_out x d_in) so a
// linear layer is out[t] = W x[t].
Matrix linear(const Matrix& x, const Matrix& w) {
    if (x.cols != w.cols) throw std::invalid_argument("linear: feature width mismatch");
    Matrix out(x.rows, w.rows, 0.0);
    for (std::size_t t = 0; t < x.rows; ++t) {
        const double* xi = x.data.data() + t * x.cols;
        double* oi = out.data.data() + t * out.cols;
        for (std::size_t o = 0; o < w.rows; ++o) {
            const double* wo = w.data.data() + o * w.cols;
            double s = 0.0;
            for (std::size_t j = 0; j < w.cols; ++j) s += xi[j] * wo[j];
            oi[o] = s;
        }
    }
    return out;
}

Matrix rms_norm(const Matrix& x, const Matrix* gain = nullptr) {
    Matrix out(x.rows, x.cols);
    for (std::size_t t = 0; t < x.rows; ++t) {
        double ms = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) ms += x.at(t, j) * x.at(t, j);
        ms /= static_cast<double>(x.cols);
        const double inv = 1.0 / std::sqrt(ms + kRmsEps);
        for (std::size_t j = 0; j < x.cols; ++j) {
            double v = x.at(t, j) * inv;
            if (gain) v *= gain->data[j];
            out.at(t, j) = v;
        }
    }
    return out;
}

// Splitmix-style name hash so each tensor gets an independent stream
// regardless of init order.
std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out, std::uint64_t seed) {
    const double b = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-b, b);
    Matrix t(rows, cols);
    for (double& v : t.data) v = dist(gen);
    return t;
}

}  // namespace

std::vector<int> encode_bytes(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<int>(c));
    return out;
}

const Matrix& ToyTransformer::tensor(const std::string& name) const {
    auto it = weights.find(name);
    if (it == weights.end()) throw std::invalid_argument("model: missing tensor '" + name + "'");
    return it->second;
}

Matrix& ToyTransformer::tensor(const std::string& name) {
    auto it = weights.find(name);
    if (it == weights.end()) throw std::invalid_argument("model: missing tensor '" + name + "'");
    return it->second;
}

ModelManifest default_toy_manifest(std::uint64_t seed) {
    ModelManifest m;
    m.vocab_size = kByteVocab + kNumSpecials;
    m.d_model = 64;
    m.n_layers = 2;
    m.n_heads = 4;
    m.d_ff = 256;
    m.context_len = 128;
    m.seed = seed;
    for (std::size_t b = 0; b < m.n_layers; ++b) {
        const std::string prefix = "blocks." + std::to_string(b) + ".";
        for (const char* leaf : {"attn.q", "attn.k", "attn.v", "attn.o", "mlp.up", "mlp.down"})
            m.layer_names.push_back(prefix + leaf);
    }
    return m;
}

ToyTransformer init_model(const ModelManifest& manifest) {
    if (manifest.d_model == 0 || manifest.vocab_size == 0 || manifest.n_heads == 0 ||
        manifest.d_model % manifest.n_heads != 0)
        throw std::invalid_argument("init_model: bad manifest dimensions");

    ToyTransformer model;
    model.manifest = manifest;
    const std::size_t d = manifest.d_model;
    const std::size_t ff = manifest.d_ff;

    auto init = [&](const std::string& name, std::size_t rows, std::size_t cols,
                    std::size_t fan_in, std::size_t fan_out) {
        model.weights.emplace(name,
                              xavier_uniform(rows, cols, fan_in, fan_out,
                                             mix_seed(manifest.seed, name)));
    };

    init("embed", manifest.vocab_size, d, manifest.vocab_size, d);
    for (std::size_t b = 0; b < manifest.n_layers; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        init(p + "attn.q", d, d, d, d);
        init(p + "attn.k", d, d, d, d);
        init(p + "attn.v", d, d, d, d);
        init(p + "attn.o", d, d, d, d);
        init(p + "mlp.up", ff, d, d, ff);
        init(p + "mlp.down", d, ff, ff, d);
    }
    model.weights.emplace("final_norm.gain", Matrix(1, d, 1.0));
    return model;
}

void save_model(const std::filesystem::path& dir, const ToyTransformer& model) {
    std::filesystem::create_directories(dir);
    write_manifest(dir / "manifest.json", model.manifest);
    write_tensors(dir / "model.acet", model.weights, Dtype::f32);
}

ToyTransformer load_model(const std::filesystem::path& dir) {
    ToyTransformer model;
    model.manifest = read_manifest(dir / "manifest.json");
    model.weights = read_tensors(dir / "model.acet");
    for (const std::string& name : model.manifest.layer_names) {
        auto it = model.weights.find(name);
        if (it == model.weights.end())
            throw std::runtime_error("model " + dir.string() + ": manifest layer '" + name +
                                     "' missing from tensor file");
        if (it->second.rows < 2 || it->second.cols < 2)
            throw std::runtime_error("model " + dir.string() + ": layer '" + name +
                                     "' is not a 2-D weight matrix");
    }
    return model;
}

void CaptureBuffer::observe(const std::string& layer, std::span<const double> row) {
    if (auto it = stats.find(layer); it != stats.end()) {
        try {
            accumulate_row(it->second, row);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("capture at layer '" + layer + "': " + e.what());
        }
    }
    if (retain_raw) raw[layer].emplace_back(row.begin(), row.end());
}

Matrix CaptureBuffer::raw_matrix(const std::string& layer) const {
    auto it = raw.find(layer);
    if (it == raw.end() || it->second.empty())
        throw std::invalid_argument("capture: no raw rows retained for layer '" + layer + "'");
    const auto& rows = it->second;
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t t = 0; t < rows.size(); ++t)
        std::copy(rows[t].begin(), rows[t].end(), m.data.begin() + t * m.cols);
    return m;
}

namespace {

void capture_rows(CaptureBuffer* capture, const std::string& layer, const Matrix& x) {
    if (!capture) return;
    for (std::size_t t = 0; t < x.rows; ++t) capture->observe(layer, x.row(t));
}

Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::size_t n_heads) {
    const std::size_t len = q.rows;
    const std::size_t d = q.cols;
    const std::size_t hd = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Matrix out(len, d, 0.0);
    std::vector<double> scores;
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t t = 0; t < len; ++t) {
            scores.assign(t + 1, 0.0);
            double max_s = -1e300;
            for (std::size_t u = 0; u <= t; ++u) {
                double s = 0.0;
                for (std::size_t j = 0; j < hd; ++j) s += q.at(t, off + j) * k.at(u, off + j);
                s *= scale;
                scores[u] = s;
                if (s > max_s) max_s = s;
            }
            double denom = 0.0;
            for (std::size_t u = 0; u <= t; ++u) {
                scores[u] = std::exp(scores[u] - max_s);
                denom += scores[u];
            }
            for (std::size_t u = 0; u <= t; ++u) {
                const double a = scores[u] / denom;
                for (std::size_t j = 0; j < hd; ++j) out.at(t, off + j) += a * v.at(u, off + j);
            }
        }
    }
    return out;
}

}  // namespace

Matrix forward(const ToyTransformer& model, std::span<const int> tokens,
               CaptureBuffer* capture) {
    const ModelManifest& mf = model.manifest;
    if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
    if (tokens.size() > mf.context_len)
        throw std::invalid_argument("forward: sequence length " + std::to_string(tokens.size()) +
                                    " exceeds context_len " + std::to_string(mf.context_len));
    const Matrix& embed = model.tensor("embed");
    for (int id : tokens)
        if (id < 0 || static_cast<std::size_t>(id) >= mf.vocab_size)
            throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                        " outside vocab");

    const std::size_t len = tokens.size();
    Matrix x(len, mf.d_model);
    for (std::size_t t = 0; t < len; ++t) {
        const auto row = embed.row(static_cast<std::size_t>(tokens[t]));
        std::copy(row.begin(), row.end(), x.row(t).begin());
    }

    for (std::size_t b = 0; b < mf.n_layers; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";

        Matrix xn = rms_norm(x);
        capture_rows(capture, p + "attn.q", xn);
        capture_rows(capture, p + "attn.k", xn);
        capture_rows(capture, p + "attn.v", xn);
        Matrix q = linear(xn, model.tensor(p + "attn.q"));
        Matrix k = linear(xn, model.tensor(p + "attn.k"));
        Matrix v = linear(xn, model.tensor(p + "attn.v"));
        Matrix mixed = causal_attention(q, k, v, mf.n_heads);
        capture_rows(capture, p + "attn.o", mixed);
        Matrix attn_out = linear(mixed, model.tensor(p + "attn.o"));
        for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += attn_out.data[i];

        Matrix xn2 = rms_norm(x);
        capture_rows(capture, p + "mlp.up", xn2);
        Matrix h = linear(xn2, model.tensor(p + "mlp.up"));
        for (double& hv : h.data) hv = hv > 0.0 ? hv : 0.0;  // ReLU
        capture_rows(capture, p + "mlp.down", h);
        Matrix mlp_out = linear(h, model.tensor(p + "mlp.down"));
        for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += mlp_out.data[i];
    }

    const Matrix& gain = model.tensor("final_norm.gain");
    Matrix xf = rms_norm(x, &gain);
    const Matrix& head = model.has_tensor("head") ? model.tensor("head") : embed;
    return linear(xf, head);
}

double perplexity_from_logits(const Matrix& logits, std::span<const int> targets) {
    if (logits.rows != targets.size())
        throw std::invalid_argument("perplexity: logits/target count mismatch");
    if (targets.empty()) throw std::invalid_argument("perplexity: no scored positions");
    double total_nll = 0.0;
    for (std::size_t p = 0; p < targets.size(); ++p) {
        const int target = targets[p];
        if (target < 0 || static_cast<std::size_t>(target) >= logits.cols)
            throw std::invalid_argument("perplexity: target id outside vocab");
        double max_l = -1e300;
        for (std::size_t v = 0; v < logits.cols; ++v) max_l = std::max(max_l, logits.at(p, v));
        double denom = 0.0;
        for (std::size_t v = 0; v < logits.cols; ++v) denom += std::exp(logits.at(p, v) - max_l);
        const double log_prob = logits.at(p, static_cast<std::size_t>(target)) - max_l -
                                std::log(denom);
        total_nll -= log_prob;
    }
    return std::exp(total_nll / static_cast<double>(targets.size()));
}

double perplexity(const ToyTransformer& model, std::span<const int> tokens, std::size_t stride) {
    const std::size_t ctx = model.manifest.context_len;
    if (stride == 0) stride = ctx;
    if (tokens.size() < 2) throw std::invalid_argument("perplexity: need at least two tokens");

    double total_nll = 0.0;
    std::size_t scored = 0;
    for (std::size_t begin = 0; begin + 1 < tokens.size(); begin += stride) {
        const std::size_t len = std::min(ctx, tokens.size() - begin);
        if (len < 2) break;
        const auto window = tokens.subspan(begin, len);
        Matrix logits = forward(model, window);
        for (std::size_t p = 0; p + 1 < len; ++p) {
            const int target = window[p + 1];
            double max_l = -1e300;
            for (std::size_t v = 0; v < logits.cols; ++v) max_l = std::max(max_l, logits.at(p, v));
            double denom = 0.0;
            for (std::size_t v = 0; v < logits.cols; ++v)
                denom += std::exp(logits.at(p, v) - max_l);
            total_nll -= logits.at(p, static_cast<std::size_t>(target)) - max_l - std::log(denom);
            ++scored;
        }
    }
    if (scored == 0) throw std::invalid_argument("perplexity: no scored positions");
    return std::exp(total_nll / static_cast<double>(scored));
}

std::vector<std::vector<int>> sample_calibration(const CalibConfig& cfg) {
    if (cfg.nsamples == 0 || cfg.seqlen == 0)
        throw std::invalid_argument("sample_calibration: nsamples and seqlen must be positive");

    std::ifstream in(cfg.corpus, std::ios::binary);
    if (!in) throw std::runtime_error("corpus " + cfg.corpus.string() + ": cannot open");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (text.size() < cfg.nsamples * cfg.seqlen)
        throw std::runtime_error("corpus " + cfg.corpus.string() + ": too small (" +
                                 std::to_string(text.size()) + " bytes, need " +
                                 std::to_string(cfg.nsamples * cfg.seqlen) + ")");
    const std::size_t max_offset = text.size() - cfg.seqlen;  // inclusive
    if (max_offset + 1 < cfg.nsamples)
        throw std::runtime_error("corpus " + cfg.corpus.string() +
                                 ": not enough distinct window offsets");

    // Distinct offsets via seeded rejection; the draw order is part of the
    // deterministic contract.
    std::mt19937_64 gen(cfg.seed);
    std::uniform_int_distribution<std::size_t> dist(0, max_offset);
    std::vector<std::size_t> offsets;
    std::vector<bool> used(max_offset + 1, false);
    while (offsets.size() < cfg.nsamples) {
        const std::size_t off = dist(gen);
        if (used[off]) continue;
        used[off] = true;
        offsets.push_back(off);
    }

    std::vector<std::vector<int>> samples;
    samples.reserve(cfg.nsamples);
    for (std::size_t off : offsets)
        samples.push_back(encode_bytes(std::string_view(text).substr(off, cfg.seqlen)));
    return samples;
}

ReconstructionError layer_reconstruction_error(const Matrix& dense_w, const Matrix& pruned_w,
                                               const Matrix& activations) {
    if (!dense_w.same_shape(pruned_w))
        throw std::invalid_argument("reconstruction: weight shapes differ");
    if (activations.cols != dense_w.cols)
        throw std::invalid_argument("reconstruction: activation width does not match weights");
    if (activations.rows == 0) throw std::invalid_argument("reconstruction: no activations");

    Matrix dense_out = linear(activations, dense_w);
    Matrix pruned_out = linear(activations, pruned_w);

    double num = 0.0, denom = 0.0;
    for (std::size_t i = 0; i < dense_out.size(); ++i) {
        const double d = dense_out.data[i] - pruned_out.data[i];
        num += d * d;
        denom += dense_out.data[i] * dense_out.data[i];
    }
    if (denom == 0.0)
        throw std::invalid_argument("reconstruction: dense outputs are all zero (degenerate layer)");

    ReconstructionError err;
    err.frob_rel = std::sqrt(num / denom);

    double cos_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < activations.rows; ++t) {
        const double nd = l2_norm(dense_out.row(t));
        const double np = l2_norm(pruned_out.row(t));
        if (nd == 0.0 || np == 0.0) continue;  // cosine undefined, skip
        cos_sum += cosine_similarity(dense_out.row(t), pruned_out.row(t));
        ++used;
    }
    err.tokens_used = used;
    err.mean_cos = used > 0 ? cos_sum / static_cast<double>(used) : 0.0;
    return err;
}

std::string generate_corpus_text(std::uint64_t seed, std::size_t nbytes) {
    static const char* kWords[] = {
        "the",   "model",  "weights", "prune",  "sparse", "dense",  "layer",  "token",
        "score", "metric", "mask",    "block",  "head",   "norm",   "value",  "input",
        "output","signal", "feature", "column", "row",    "error",  "scale",  "keep",
        "drop",  "ratio",  "stream",  "sample", "window", "energy", "factor", "bound"};
    constexpr std::size_t kNumWords = sizeof(kWords) / sizeof(kWords[0]);

    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<std::size_t> word(0, kNumWords - 1);
    std::uniform_int_distribution<int> punct(0, 19);

    std::string text;
    text.reserve(nbytes + 16);
    std::size_t sentence_len = 0;
    while (text.size() < nbytes) {
        text += kWords[word(gen)];
        ++sentence_len;
        const int p = punct(gen);
        if (sentence_len > 6 && p < 4) {
            text += p == 0 ? ".\n" : ". ";
            sentence_len = 0;
        } else if (p == 5) {
            text += ", ";
        } else {
            text += ' ';
        }
    }
    text.resize(nbytes);
    return text;
}

}  // namespace ace
