#pragma once

#include "scale/tensor.hpp"
#include "scale/vocab.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace scale {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq_len = 128;
    std::uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    // Throws ConfigError.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
    Matrix ln1_g, ln1_b;
    Matrix w_qkv, b_qkv;   // [d, 3d], [1, 3d]
    Matrix w_o, b_o;       // [d, d], [1, d]
    Matrix ln2_g, ln2_b;
    Matrix w_fc, b_fc;     // [d, 4d], [1, 4d]
    Matrix w_proj, b_proj; // [4d, d], [1, d]
};

// Pre-norm decoder: token + learned position embeddings, n_layers blocks of
// causal multi-head attention and a GELU MLP, final layer norm, untied head.
// Also used as the gradient container (same shapes).
struct ModelParams {
    ModelConfig config;
    Matrix wte;     // [V, d]
    Matrix wpe;     // [max_seq_len, d]
    std::vector<LayerParams> layers;
    Matrix lnf_g, lnf_b;
    Matrix w_head;  // [d, V]

    static ModelParams zeros(const ModelConfig& config);
    // N(0, 0.02) weights, zero biases, unit layer-norm gains; seeded by config.seed.
    static ModelParams initialize(const ModelConfig& config);

    // Stable order; names look like "layers.1.w_qkv".
    std::vector<std::pair<std::string, Matrix*>> named_tensors();
    std::vector<std::pair<std::string, const Matrix*>> named_tensors() const;

    std::size_t parameter_count() const;
    void set_zero();
    // this += scale * other
    void add_scaled(const ModelParams& other, double scale);
    double squared_norm() const;
};

// Activations kept from forward for the backward pass.
struct ForwardCache {
    struct Layer {
        Matrix x_in, xhat1, a_in, qkv, att, x_mid, xhat2, m_in, hpre, hact;
        std::vector<double> rstd1, rstd2;
        std::vector<Matrix> probs;  // one [n, n] attention matrix per head
    };
    std::vector<TokenId> tokens;
    std::vector<Layer> layers;
    Matrix x_final, xhat_f, f;
    std::vector<double> rstd_f;
    Matrix logits;
};

// Logits [len, V]; row i depends on tokens[0..i] only. Throws
// ContractViolation when the sequence exceeds max_seq_len or holds an
// out-of-range id.
Matrix forward(const ModelParams& params, std::span<const TokenId> tokens);
ForwardCache forward_cached(const ModelParams& params, std::span<const TokenId> tokens);

// Accumulates d(sum(logits .* upstream)) / d(params) into `grads`.
void backward(const ModelParams& params, const ForwardCache& cache, const Matrix& upstream, ModelParams& grads);
ModelParams backward(const ModelParams& params, std::span<const TokenId> tokens, const Matrix& upstream);

// Incremental decoding with a key/value cache. Produces the same logits as
// forward() row by row, up to floating-point reassociation.
class Decoder {
public:
    explicit Decoder(const ModelParams& params);

    // Feeds one token at the next position and returns its logits row.
    RowVector feed(TokenId token);
    int length() const noexcept { return len_; }
    int capacity() const noexcept { return params_->config.max_seq_len; }

private:
    const ModelParams* params_;
    std::vector<Matrix> keys_, values_;  // per layer [max_seq_len, d]
    int len_ = 0;
};

struct SamplerConfig {
    double temperature = 0.0;  // 0 means greedy argmax
    double top_p = 1.0;
    int max_new_tokens = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Completion {
    std::vector<TokenId> prompt_ids;
    std::vector<TokenId> token_ids;  // generated tokens, including a final EOS when emitted
    std::string text;                // decoded generation, EOS excluded
    bool finished = false;           // true when EOS was emitted
};

// Draws one token from a logits row. Greedy picks the lowest index among ties.
TokenId sample_token(const RowVector& logits, const SamplerConfig& sampler, std::mt19937_64& rng);

// Generates after <bos> + prompt_ids until EOS, max_new_tokens, or a full context.
Completion sample(const ModelParams& params, std::span<const TokenId> prompt_ids, const SamplerConfig& sampler,
                  const Vocabulary& vocab);

// G completions of one prompt sharing a single prefill; completion g uses seeds[g].
std::vector<Completion> sample_group(const ModelParams& params, std::span<const TokenId> prompt_ids,
                                     const SamplerConfig& sampler, std::span<const std::uint64_t> seeds,
                                     const Vocabulary& vocab);

} // namespace scale
