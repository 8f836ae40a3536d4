#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vit4lpa/adam.hpp"
#include "vit4lpa/rng.hpp"
#include "vit4lpa/tape.hpp"
#include "vit4lpa/tensor.hpp"

namespace vit4lpa::model {

struct ModelConfig {
    int encoder_layers = 3;
    int encoder_heads = 4;
    int encoder_dim = 128;  // D
    int decoder_layers = 2;
    int decoder_heads = 2;
    int decoder_dim = 32;
    int mlp_ratio = 4;
    double dropout = 0.1;
    int patch_dim = 48;      // N_P * N_P * 3
    int num_positions = 36;  // patch lattice cells

    void validate() const;  // ConfigError if dims and heads disagree
};

struct BlockParams {
    num::Tensor wq, bq, wk, bk, wv, bv;  // per-block QKV projections
    num::Tensor wo, bo;                  // output projection
    num::Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    num::Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

/// Task heads ride along in the model state so checkpoints are
/// self-contained; the downstream code decides how they are used.
struct TaskHeads {
    num::Tensor pv_w, pv_b;      // encoder_dim -> 1
    num::Tensor ev_w, ev_b;      // encoder_dim -> 1
    num::Tensor hvac_w, hvac_b;  // encoder_dim -> N_P*N_P (one pixel per patch cell)
};

/// All learnable parameters. Tensors are handles; the named registry below
/// aliases the same storage, so optimizer updates through the registry are
/// visible to forward passes immediately.
class ModelState {
 public:
    ModelState(ModelConfig config, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t creation_seed() const { return creation_seed_; }

    num::Tensor patch_w, patch_b;  // [48,D], [D]
    num::Tensor enc_pos;           // [36,D]
    std::vector<BlockParams> enc_blocks;
    num::Tensor enc_final_gain, enc_final_bias;
    num::Tensor bridge_w;        // [D, decoder_dim]
    num::Tensor mask_embedding;  // [decoder_dim]
    num::Tensor dec_pos;         // [36, decoder_dim]
    std::vector<BlockParams> dec_blocks;
    num::Tensor dec_final_gain, dec_final_bias;
    num::Tensor recon_w, recon_b;  // [decoder_dim, 48]
    TaskHeads heads;

    /// Every parameter in fixed checkpoint order.
    const std::vector<num::NamedTensor>& parameters() const { return registry_; }
    std::vector<num::NamedTensor> parameters_with_prefix(const std::string& prefix) const;
    num::NamedTensor parameter(const std::string& name) const;

    long parameter_count() const;
    void set_requires_grad(bool v);
    void zero_grads();

 private:
    ModelConfig cfg_;
    std::uint64_t creation_seed_ = 0;
    std::vector<num::NamedTensor> registry_;
};

/// Captured softmax matrices for one image: [layer][head] row-stochastic
/// S x S values, detached from the graph.
struct AttentionRecord {
    std::vector<std::vector<num::Tensor>> layers;
};

struct ForwardOptions {
    bool training = false;
    bool capture_attention = false;
    Rng* rng = nullptr;  // needed only when training with dropout > 0
};

/// Patch vectors [n x 48] -> tokens [n x D]: linear projection plus bias
/// plus the position embedding of each patch's lattice index. Dropout in
/// training mode only.
num::Tensor embed_patches(num::Tape* tape, const ModelState& state, const num::Tensor& patches,
                          const std::vector<int>& positions, const ForwardOptions& opt);

/// Pre-norm encoder over a row-stacked batch: tokens hold `batch` images of
/// `tokens_per_image` rows each; attention is confined to each image's rows.
/// A final layer norm follows the last block. Attention capture requires
/// batch == 1 and stores softmax matrices without altering the outputs.
num::Tensor encoder_forward(num::Tape* tape, const ModelState& state, const num::Tensor& tokens,
                            int batch, int tokens_per_image, const ForwardOptions& opt,
                            AttentionRecord* attention = nullptr);

/// Decoder over the reassembled full-length sequence [batch*36 x dec_dim]:
/// adds decoder position embeddings, runs the decoder blocks and final norm,
/// and applies the per-token reconstruction head -> [batch*36 x 48].
num::Tensor decoder_forward(num::Tape* tape, const ModelState& state, const num::Tensor& sequence,
                            int batch, const ForwardOptions& opt);

struct ParameterCountReport {
    std::vector<std::pair<std::string, long>> components;
    long encoder_total = 0;  // patch projection + positions + blocks + final norm
    long decoder_total = 0;  // bridge + mask + positions + blocks + final norm + head
    long heads_total = 0;
    long total = 0;

    std::string to_string() const;
};

/// Exact per-component counts from shape arithmetic alone.
ParameterCountReport count_parameters(const ModelConfig& config);

}  // namespace vit4lpa::model
