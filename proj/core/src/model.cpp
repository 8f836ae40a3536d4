#include "vit4lpa/model.hpp"

#include <cmath>
#include <sstream>

#include "vit4lpa/error.hpp"
#include "vit4lpa/ops.hpp"

namespace vit4lpa::model {

void ModelConfig::validate() const {
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("layer counts must be >= 1");
    if (encoder_heads < 1 || encoder_dim % encoder_heads != 0) {
        throw ConfigError("encoder dim " + std::to_string(encoder_dim) + " not divisible by " +
                          std::to_string(encoder_heads) + " heads");
    }
    if (decoder_heads < 1 || decoder_dim % decoder_heads != 0) {
        throw ConfigError("decoder dim " + std::to_string(decoder_dim) + " not divisible by " +
                          std::to_string(decoder_heads) + " heads");
    }
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    if (patch_dim < 1 || num_positions < 1) throw ConfigError("bad patch geometry");
}

namespace {

num::Tensor gaussian(std::vector<int> shape, Rng& rng, double stddev) {
    num::Tensor t(std::move(shape));
    for (auto& v : t.values_mut()) v = rng.normal(0.0, stddev);
    return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

ModelState::ModelState(ModelConfig config, std::uint64_t init_seed)
    : cfg_(config), creation_seed_(init_seed) {
    cfg_.validate();
    Rng rng(derive_seed(init_seed, "model-init"));
    const int d = cfg_.encoder_dim;
    const int dd = cfg_.decoder_dim;

    auto reg = [this](const std::string& name, num::Tensor t) {
        registry_.push_back({name, t});
        return t;
    };
    auto make_block = [&](BlockParams& b, const std::string& prefix, int dim) {
        const int hidden = dim * cfg_.mlp_ratio;
        b.wq = reg(prefix + ".attn.wq", gaussian({dim, dim}, rng, kInitStd));
        b.bq = reg(prefix + ".attn.bq", num::Tensor::zeros({dim}));
        b.wk = reg(prefix + ".attn.wk", gaussian({dim, dim}, rng, kInitStd));
        b.bk = reg(prefix + ".attn.bk", num::Tensor::zeros({dim}));
        b.wv = reg(prefix + ".attn.wv", gaussian({dim, dim}, rng, kInitStd));
        b.bv = reg(prefix + ".attn.bv", num::Tensor::zeros({dim}));
        b.wo = reg(prefix + ".attn.wo", gaussian({dim, dim}, rng, kInitStd));
        b.bo = reg(prefix + ".attn.bo", num::Tensor::zeros({dim}));
        b.mlp_w1 = reg(prefix + ".mlp.w1", gaussian({dim, hidden}, rng, kInitStd));
        b.mlp_b1 = reg(prefix + ".mlp.b1", num::Tensor::zeros({hidden}));
        b.mlp_w2 = reg(prefix + ".mlp.w2", gaussian({hidden, dim}, rng, kInitStd));
        b.mlp_b2 = reg(prefix + ".mlp.b2", num::Tensor::zeros({dim}));
        b.ln1_gain = reg(prefix + ".ln1.gain", num::Tensor::full({dim}, 1.0));
        b.ln1_bias = reg(prefix + ".ln1.bias", num::Tensor::zeros({dim}));
        b.ln2_gain = reg(prefix + ".ln2.gain", num::Tensor::full({dim}, 1.0));
        b.ln2_bias = reg(prefix + ".ln2.bias", num::Tensor::zeros({dim}));
    };

    patch_w = reg("encoder.patch_projection.weight", gaussian({cfg_.patch_dim, d}, rng, kInitStd));
    patch_b = reg("encoder.patch_projection.bias", num::Tensor::zeros({d}));
    enc_pos = reg("encoder.position_embeddings", gaussian({cfg_.num_positions, d}, rng, kInitStd));
    enc_blocks.resize(static_cast<std::size_t>(cfg_.encoder_layers));
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
        make_block(enc_blocks[static_cast<std::size_t>(l)], "encoder.block" + std::to_string(l), d);
    }
    enc_final_gain = reg("encoder.final_norm.gain", num::Tensor::full({d}, 1.0));
    enc_final_bias = reg("encoder.final_norm.bias", num::Tensor::zeros({d}));

    bridge_w = reg("decoder.bridge.weight", gaussian({d, dd}, rng, kInitStd));
    mask_embedding = reg("decoder.mask_embedding", gaussian({dd}, rng, kInitStd));
    dec_pos = reg("decoder.position_embeddings", gaussian({cfg_.num_positions, dd}, rng, kInitStd));
    dec_blocks.resize(static_cast<std::size_t>(cfg_.decoder_layers));
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
        make_block(dec_blocks[static_cast<std::size_t>(l)], "decoder.block" + std::to_string(l), dd);
    }
    dec_final_gain = reg("decoder.final_norm.gain", num::Tensor::full({dd}, 1.0));
    dec_final_bias = reg("decoder.final_norm.bias", num::Tensor::zeros({dd}));
    recon_w = reg("decoder.reconstruction.weight", gaussian({dd, cfg_.patch_dim}, rng, kInitStd));
    recon_b = reg("decoder.reconstruction.bias", num::Tensor::zeros({cfg_.patch_dim}));

    const int head_pixels = cfg_.patch_dim / 3;  // one output pixel per patch cell
    heads.pv_w = reg("heads.pv.weight", gaussian({d, 1}, rng, kInitStd));
    heads.pv_b = reg("heads.pv.bias", num::Tensor::zeros({1}));
    heads.ev_w = reg("heads.ev.weight", gaussian({d, 1}, rng, kInitStd));
    heads.ev_b = reg("heads.ev.bias", num::Tensor::zeros({1}));
    heads.hvac_w = reg("heads.hvac.weight", gaussian({d, head_pixels}, rng, kInitStd));
    heads.hvac_b = reg("heads.hvac.bias", num::Tensor::zeros({head_pixels}));
}

std::vector<num::NamedTensor> ModelState::parameters_with_prefix(const std::string& prefix) const {
    std::vector<num::NamedTensor> out;
    for (const auto& p : registry_) {
        if (p.name.rfind(prefix, 0) == 0) out.push_back(p);
    }
    return out;
}

num::NamedTensor ModelState::parameter(const std::string& name) const {
    for (const auto& p : registry_) {
        if (p.name == name) return p;
    }
    throw ContractError("no parameter named '" + name + "'");
}

long ModelState::parameter_count() const {
    long n = 0;
    for (const auto& p : registry_) n += static_cast<long>(p.tensor.size());
    return n;
}

void ModelState::set_requires_grad(bool v) {
    for (auto& p : registry_) p.tensor.set_requires_grad(v);
}

void ModelState::zero_grads() {
    for (auto& p : registry_) {
        p.tensor.ensure_grad();
        p.tensor.zero_grad();
    }
}

num::Tensor embed_patches(num::Tape* tape, const ModelState& state, const num::Tensor& patches,
                          const std::vector<int>& positions, const ForwardOptions& opt) {
    using namespace num;
    if (patches.rank() != 2 || patches.dim(1) != state.config().patch_dim) {
        throw ShapeError("embed_patches: want [n," + std::to_string(state.config().patch_dim) +
                         "], got " + shape_str(patches.shape()));
    }
    if (static_cast<int>(positions.size()) != patches.dim(0)) {
        throw ContractError("embed_patches: " + std::to_string(patches.dim(0)) + " patches but " +
                            std::to_string(positions.size()) + " positions");
    }
    Tensor tokens = add_row_vector(tape, matmul(tape, patches, state.patch_w), state.patch_b);
    tokens = add(tape, tokens, gather_rows(tape, state.enc_pos, positions));
    if (opt.training && state.config().dropout > 0.0) {
        if (!opt.rng) throw ContractError("embed_patches: training with dropout needs an rng");
        tokens = dropout(tape, tokens, state.config().dropout, true, *opt.rng);
    }
    return tokens;
}

namespace {

// One pre-norm transformer block over a row-stacked batch; attention stays
// within each image's rows.
num::Tensor block_forward(num::Tape* tape, const BlockParams& blk, const num::Tensor& x, int batch,
                          int tokens_per_image, int heads, double drop_p,
                          const ForwardOptions& opt, std::vector<num::Tensor>* captured_heads) {
    using namespace num;
    const int dim = x.dim(1);
    const int head_dim = dim / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor h = layer_norm(tape, x, blk.ln1_gain, blk.ln1_bias);
    Tensor q = add_row_vector(tape, matmul(tape, h, blk.wq), blk.bq);
    Tensor k = add_row_vector(tape, matmul(tape, h, blk.wk), blk.bk);
    Tensor v = add_row_vector(tape, matmul(tape, h, blk.wv), blk.bv);

    std::vector<Tensor> image_outputs;
    image_outputs.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        const int r0 = b * tokens_per_image;
        const int r1 = r0 + tokens_per_image;
        Tensor qb = slice_rows(tape, q, r0, r1);
        Tensor kb = slice_rows(tape, k, r0, r1);
        Tensor vb = slice_rows(tape, v, r0, r1);
        std::vector<Tensor> head_outputs;
        head_outputs.reserve(static_cast<std::size_t>(heads));
        for (int hh = 0; hh < heads; ++hh) {
            const int c0 = hh * head_dim;
            const int c1 = c0 + head_dim;
            Tensor qs = slice_cols(tape, qb, c0, c1);
            Tensor ks = slice_cols(tape, kb, c0, c1);
            Tensor vs = slice_cols(tape, vb, c0, c1);
            Tensor scores = scale(tape, matmul(tape, qs, transpose(tape, ks)), att_scale);
            Tensor attn = softmax(tape, scores);
            if (captured_heads) {
                captured_heads->push_back(
                    num::Tensor(attn.shape(), {attn.values().begin(), attn.values().end()}));
            }
            head_outputs.push_back(matmul(tape, attn, vs));
        }
        image_outputs.push_back(heads == 1 ? head_outputs[0] : concat_cols(tape, head_outputs));
    }
    Tensor attn_out = batch == 1 ? image_outputs[0] : concat_rows(tape, image_outputs);
    Tensor proj = add_row_vector(tape, matmul(tape, attn_out, blk.wo), blk.bo);
    if (opt.training && drop_p > 0.0) proj = dropout(tape, proj, drop_p, true, *opt.rng);
    Tensor x1 = add(tape, x, proj);

    Tensor h2 = layer_norm(tape, x1, blk.ln2_gain, blk.ln2_bias);
    Tensor mid = gelu(tape, add_row_vector(tape, matmul(tape, h2, blk.mlp_w1), blk.mlp_b1));
    Tensor mlp_out = add_row_vector(tape, matmul(tape, mid, blk.mlp_w2), blk.mlp_b2);
    if (opt.training && drop_p > 0.0) mlp_out = dropout(tape, mlp_out, drop_p, true, *opt.rng);
    return add(tape, x1, mlp_out);
}

}  // namespace

num::Tensor encoder_forward(num::Tape* tape, const ModelState& state, const num::Tensor& tokens,
                            int batch, int tokens_per_image, const ForwardOptions& opt,
                            AttentionRecord* attention) {
    using namespace num;
    const ModelConfig& cfg = state.config();
    if (tokens.rank() != 2 || tokens.dim(1) != cfg.encoder_dim) {
        throw ShapeError("encoder_forward: want [n," + std::to_string(cfg.encoder_dim) + "], got " +
                         shape_str(tokens.shape()));
    }
    if (batch < 1 || tokens_per_image < 1 || tokens.dim(0) != batch * tokens_per_image) {
        throw ContractError("encoder_forward: " + std::to_string(tokens.dim(0)) +
                            " rows do not split into " + std::to_string(batch) + " images of " +
                            std::to_string(tokens_per_image));
    }
    if (opt.capture_attention && batch != 1) {
        throw ContractError("encoder_forward: attention capture expects batch == 1");
    }
    if (opt.training && cfg.dropout > 0.0 && !opt.rng) {
        throw ContractError("encoder_forward: training with dropout needs an rng");
    }
    if (attention) attention->layers.clear();

    Tensor x = tokens;
    for (int l = 0; l < cfg.encoder_layers; ++l) {
        std::vector<Tensor> captured;
        x = block_forward(tape, state.enc_blocks[static_cast<std::size_t>(l)], x, batch,
                          tokens_per_image, cfg.encoder_heads, cfg.dropout, opt,
                          (opt.capture_attention && attention) ? &captured : nullptr);
        if (opt.capture_attention && attention) attention->layers.push_back(std::move(captured));
    }
    return layer_norm(tape, x, state.enc_final_gain, state.enc_final_bias);
}

num::Tensor decoder_forward(num::Tape* tape, const ModelState& state, const num::Tensor& sequence,
                            int batch, const ForwardOptions& opt) {
    using namespace num;
    const ModelConfig& cfg = state.config();
    if (sequence.rank() != 2 || sequence.dim(1) != cfg.decoder_dim ||
        sequence.dim(0) != batch * cfg.num_positions) {
        throw ShapeError("decoder_forward: want [" + std::to_string(batch * cfg.num_positions) + "," +
                         std::to_string(cfg.decoder_dim) + "], got " + shape_str(sequence.shape()));
    }
    if (opt.training && cfg.dropout > 0.0 && !opt.rng) {
        throw ContractError("decoder_forward: training with dropout needs an rng");
    }
    std::vector<int> positions(static_cast<std::size_t>(batch) * cfg.num_positions);
    for (int b = 0; b < batch; ++b) {
        for (int p = 0; p < cfg.num_positions; ++p) {
            positions[static_cast<std::size_t>(b) * cfg.num_positions + p] = p;
        }
    }
    Tensor x = add(tape, sequence, gather_rows(tape, state.dec_pos, positions));
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        x = block_forward(tape, state.dec_blocks[static_cast<std::size_t>(l)], x, batch,
                          cfg.num_positions, cfg.decoder_heads, cfg.dropout, opt, nullptr);
    }
    x = layer_norm(tape, x, state.dec_final_gain, state.dec_final_bias);
    return add_row_vector(tape, matmul(tape, x, state.recon_w), state.recon_b);
}

ParameterCountReport count_parameters(const ModelConfig& config) {
    config.validate();
    ParameterCountReport rep;
    auto component = [&rep](const std::string& name, long n) {
        rep.components.emplace_back(name, n);
        return n;
    };
    auto block_count = [&](int dim) {
        const long d = dim;
        const long hidden = d * config.mlp_ratio;
        const long attn = 4 * (d * d + d);           // q,k,v,o with biases
        const long mlp = d * hidden + hidden + hidden * d + d;
        const long norms = 4 * d;                    // two gain/bias pairs
        return attn + mlp + norms;
    };

    const long d = config.encoder_dim;
    const long dd = config.decoder_dim;
    rep.encoder_total += component("encoder.patch_projection",
                                   static_cast<long>(config.patch_dim) * d + d);
    rep.encoder_total += component("encoder.position_embeddings",
                                   static_cast<long>(config.num_positions) * d);
    for (int l = 0; l < config.encoder_layers; ++l) {
        rep.encoder_total += component("encoder.block" + std::to_string(l), block_count(config.encoder_dim));
    }
    rep.encoder_total += component("encoder.final_norm", 2 * d);

    rep.decoder_total += component("decoder.bridge", d * dd);
    rep.decoder_total += component("decoder.mask_embedding", dd);
    rep.decoder_total += component("decoder.position_embeddings",
                                   static_cast<long>(config.num_positions) * dd);
    for (int l = 0; l < config.decoder_layers; ++l) {
        rep.decoder_total += component("decoder.block" + std::to_string(l), block_count(config.decoder_dim));
    }
    rep.decoder_total += component("decoder.final_norm", 2 * dd);
    rep.decoder_total += component("decoder.reconstruction", dd * config.patch_dim + config.patch_dim);

    const long head_pixels = config.patch_dim / 3;
    rep.heads_total += component("heads.pv", d + 1);
    rep.heads_total += component("heads.ev", d + 1);
    rep.heads_total += component("heads.hvac", d * head_pixels + head_pixels);

    rep.total = rep.encoder_total + rep.decoder_total + rep.heads_total;
    return rep;
}

std::string ParameterCountReport::to_string() const {
    std::ostringstream os;
    for (const auto& [name, n] : components) os << name << " = " << n << '\n';
    os << "encoder_total = " << encoder_total << '\n';
    os << "decoder_total = " << decoder_total << '\n';
    os << "heads_total = " << heads_total << '\n';
    os << "total = " << total << '\n';
    return os.str();
}

}  // namespace vit4lpa::model
