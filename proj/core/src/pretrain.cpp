#include "vit4lpa/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "vit4lpa/error.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::train {

namespace {

void require_image_shape(std::size_t n, const char* who) {
    if (n != static_cast<std::size_t>(24) * 24 * 3) {
        throw ShapeError(std::string(who) + ": expected 24x24x3 pixel buffer, got " +
                         std::to_string(n) + " values");
    }
}

}  // namespace

double mae_loss(const std::vector<double>& reconstructed_pixels,
                const std::vector<double>& original_pixels, const patch::MaskPattern& pattern,
                LossScope scope) {
    require_image_shape(reconstructed_pixels.size(), "mae_loss");
    if (original_pixels.size() != reconstructed_pixels.size()) {
        throw ShapeError("mae_loss: reconstruction and original sizes disagree: " +
                         std::to_string(reconstructed_pixels.size()) + " vs " +
                         std::to_string(original_pixels.size()));
    }
    const int np = 24 / pattern.rows;
    double sum = 0.0;
    long count = 0;
    for (int r = 0; r < 24; ++r) {
        for (int t = 0; t < 24; ++t) {
            const int cell = (r / np) * pattern.cols + (t / np);
            if (scope == LossScope::masked_only && !pattern.is_masked(cell)) continue;
            for (int c = 0; c < 3; ++c) {
                const std::size_t i = (static_cast<std::size_t>(r) * 24 + t) * 3 + c;
                const double d = reconstructed_pixels[i] - original_pixels[i];
                sum += d * d;
                ++count;
            }
        }
    }
    if (count == 0) throw ContractError("mae_loss: empty mask");
    return sum / static_cast<double>(count);
}

double reconstruction_nmae(const std::vector<double>& reconstructed_pixels,
                           const std::vector<double>& original_pixels,
                           const patch::MaskPattern& pattern) {
    require_image_shape(reconstructed_pixels.size(), "reconstruction_nmae");
    if (original_pixels.size() != reconstructed_pixels.size()) {
        throw ShapeError("reconstruction_nmae: sizes disagree");
    }
    if (pattern.masked_count() == 0) throw ContractError("reconstruction_nmae: empty mask");
    const int np = 24 / pattern.rows;
    double sum = 0.0;
    long count = 0;
    for (int r = 0; r < 24; ++r) {
        for (int t = 0; t < 24; ++t) {
            const int cell = (r / np) * pattern.cols + (t / np);
            if (!pattern.is_masked(cell)) continue;
            const std::size_t i = (static_cast<std::size_t>(r) * 24 + t) * 3 + data::kChannelLoad;
            sum += std::abs(reconstructed_pixels[i] - original_pixels[i]);
            ++count;
        }
    }
    return 100.0 * sum / static_cast<double>(count);
}

namespace {

struct Batch {
    num::Tensor visible;              // [n_images*n_visible x 48]
    std::vector<int> visible_positions;   // within-image lattice indices, concatenated
    std::vector<int> batched_positions;   // shifted by image*36 for reassembly
    num::Tensor targets;              // [n_images*36 x 48]
    num::Tensor weights;              // same shape, 1 on scored values
    double scored_values = 0.0;
    int images = 0;
    int visible_per_image = 0;
};

Batch build_batch(const std::vector<data::LoadImage>& dataset, const std::vector<int>& indices,
                  const patch::MaskPattern& pattern, const patch::PatchGrid& grid,
                  LossScope scope) {
    Batch b;
    b.images = static_cast<int>(indices.size());
    const int total = grid.total();
    const int dim = grid.patch_dim();

    std::vector<int> vis_idx;
    for (int k = 0; k < total; ++k) {
        if (!pattern.is_masked(k)) vis_idx.push_back(k);
    }
    b.visible_per_image = static_cast<int>(vis_idx.size());

    b.visible = num::Tensor({b.images * b.visible_per_image, dim});
    b.targets = num::Tensor({b.images * total, dim});
    b.weights = num::Tensor({b.images * total, dim});
    auto vis = b.visible.values_mut();
    auto tgt = b.targets.values_mut();
    auto wgt = b.weights.values_mut();

    for (int bi = 0; bi < b.images; ++bi) {
        const auto seq = patch::patchify(dataset[static_cast<std::size_t>(indices[bi])], grid);
        for (int k = 0; k < total; ++k) {
            const auto& pvec = seq.patches[static_cast<std::size_t>(k)];
            const std::size_t row = static_cast<std::size_t>(bi) * total + k;
            std::copy(pvec.begin(), pvec.end(), tgt.begin() + row * dim);
            const bool scored = scope == LossScope::all_pixels || pattern.is_masked(k);
            if (scored) {
                std::fill(wgt.begin() + row * dim, wgt.begin() + (row + 1) * dim, 1.0);
                b.scored_values += dim;
            }
        }
        for (int v = 0; v < b.visible_per_image; ++v) {
            const auto& pvec = seq.patches[static_cast<std::size_t>(vis_idx[v])];
            const std::size_t row = static_cast<std::size_t>(bi) * b.visible_per_image + v;
            std::copy(pvec.begin(), pvec.end(), vis.begin() + row * dim);
            b.visible_positions.push_back(vis_idx[static_cast<std::size_t>(v)]);
            b.batched_positions.push_back(bi * total + vis_idx[static_cast<std::size_t>(v)]);
        }
    }
    return b;
}

// Differentiable weighted-MSE reconstruction loss over one batch.
num::Tensor batch_loss(num::Tape* tape, const model::ModelState& state, const Batch& batch,
                       const model::ForwardOptions& opt) {
    using namespace num;
    Tensor tokens = model::embed_patches(tape, state, batch.visible, batch.visible_positions, opt);
    Tensor encoded = model::encoder_forward(tape, state, tokens, batch.images,
                                            batch.visible_per_image, opt);
    Tensor bridged = matmul(tape, encoded, state.bridge_w);
    Tensor full = patch::reassemble(tape, bridged, batch.batched_positions, state.mask_embedding,
                                    batch.images * state.config().num_positions);
    Tensor recon = model::decoder_forward(tape, state, full, batch.images, opt);
    Tensor diff = sub(tape, recon, batch.targets);
    Tensor weighted = mul(tape, mul(tape, diff, diff), batch.weights);
    return scale(tape, sum_all(tape, weighted), 1.0 / batch.scored_values);
}

}  // namespace

std::vector<double> reconstruct_image(const model::ModelState& state, const data::LoadImage& image,
                                      const patch::MaskPattern& pattern, int patch_size) {
    const auto grid = patch::PatchGrid::for_image(image.days, image.slots_per_day, patch_size);
    const auto seq = patch::patchify(image, grid);
    const auto sel = patch::apply_mask(seq, pattern);
    const int n_vis = static_cast<int>(sel.visible.size());
    if (n_vis == 0) throw ContractError("reconstruct_image: no visible patches");
    num::Tensor vis({n_vis, grid.patch_dim()});
    auto vv = vis.values_mut();
    for (int i = 0; i < n_vis; ++i) {
        std::copy(sel.visible[static_cast<std::size_t>(i)].begin(),
                  sel.visible[static_cast<std::size_t>(i)].end(),
                  vv.begin() + static_cast<std::size_t>(i) * grid.patch_dim());
    }
    num::Tensor tokens = model::embed_patches(nullptr, state, vis, sel.visible_indices, {});
    num::Tensor encoded = model::encoder_forward(nullptr, state, tokens, 1, n_vis, {});
    num::Tensor bridged = num::matmul(nullptr, encoded, state.bridge_w);
    num::Tensor full = patch::reassemble(nullptr, bridged, sel.visible_indices,
                                         state.mask_embedding, grid.total());
    num::Tensor recon = model::decoder_forward(nullptr, state, full, 1, {});

    patch::PatchSequence out_seq;
    out_seq.grid = grid;
    out_seq.patches.resize(static_cast<std::size_t>(grid.total()));
    for (int k = 0; k < grid.total(); ++k) {
        auto& p = out_seq.patches[static_cast<std::size_t>(k)];
        p.assign(recon.values().begin() + static_cast<std::size_t>(k) * grid.patch_dim(),
                 recon.values().begin() + static_cast<std::size_t>(k + 1) * grid.patch_dim());
    }
    return patch::unpatchify(out_seq);
}

void TrainLog::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << "epoch,step,loss,val_nmae_percent,wall_seconds,mask_parity\n";
    for (const auto& e : entries) {
        out << e.epoch << ',' << e.step << ',' << format_full(e.loss) << ','
            << format_full(e.val_nmae_percent) << ',' << format_g12(e.wall_seconds) << ','
            << e.mask_parity << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

PretrainResult pretrain(const std::vector<data::LoadImage>& dataset, const PretrainConfig& config,
                        const model::ModelConfig& model_config) {
    if (dataset.empty()) throw ContractError("pretrain: empty dataset");
    if (config.batch_size < 1 || config.epochs < 1) {
        throw ContractError("pretrain: batch_size and epochs must be >= 1");
    }
    for (const auto& img : dataset) {
        if (img.days != 24 || img.slots_per_day != 24) {
            throw ContractError("pretrain: images must be 24x24 (got " + std::to_string(img.days) +
                                "x" + std::to_string(img.slots_per_day) + ")");
        }
    }
    const auto grid = patch::PatchGrid::for_image(24, 24, config.patch_size);

    model::ModelConfig mc = model_config;
    mc.dropout = config.dropout;
    mc.patch_dim = grid.patch_dim();
    mc.num_positions = grid.total();
    model::ModelState state(mc, derive_seed(config.seed, "init"));
    state.set_requires_grad(true);

    // heads stay untouched during pre-training
    std::vector<num::NamedTensor> params = state.parameters_with_prefix("encoder.");
    for (auto& p : state.parameters_with_prefix("decoder.")) params.push_back(p);
    // learning rate 0 is the null-update case: gradients flow, nothing moves
    std::optional<num::AdamState> adam;
    if (config.optimizer.learning_rate > 0.0) adam.emplace(config.optimizer);

    // train / validation split by seeded shuffle, validation never trained on
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(config.seed, "val-split"));
    split_rng.shuffle(order);
    const int n_val = static_cast<int>(config.validation_fraction * static_cast<double>(dataset.size()));
    std::vector<int> val_indices(order.begin(), order.begin() + n_val);
    std::vector<int> train_indices(order.begin() + n_val, order.end());
    if (train_indices.empty()) throw ContractError("pretrain: validation fraction leaves no training data");
    if (val_indices.empty()) val_indices = train_indices;  // tiny datasets: log on train images
    if (static_cast<int>(val_indices.size()) > config.validation_log_images) {
        val_indices.resize(static_cast<std::size_t>(config.validation_log_images));
    }
    const patch::MaskPattern val_pattern =
        config.mask_mode == MaskMode::grid
            ? patch::grid_mask(grid.rows, grid.cols, 0)
            : patch::random_mask(grid.rows, grid.cols, config.random_mask_ratio,
                                 derive_seed(config.seed, "val-mask"));

    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    Rng dropout_rng(derive_seed(config.seed, "dropout"));

    PretrainResult result{std::move(state), {}, 0.0, 0.0, {}};
    model::ModelState& st = result.state;

    auto validation_nmae = [&]() {
        double acc = 0.0;
        for (int idx : val_indices) {
            const auto& img = dataset[static_cast<std::size_t>(idx)];
            const auto recon = reconstruct_image(st, img, val_pattern, config.patch_size);
            acc += reconstruction_nmae(recon, img.pixels, val_pattern);
        }
        return acc / static_cast<double>(val_indices.size());
    };

    const bool emit_files = !config.out_dir.empty();
    if (emit_files) {
        std::error_code ec;
        std::filesystem::create_directories(config.out_dir, ec);
        if (ec) throw IoError("cannot create directory: " + config.out_dir);
    }
    model::CheckpointMeta meta;
    meta.config = mc;
    meta.creation_seed = derive_seed(config.seed, "init");
    meta.dataset_digest = config.dataset_digest;
    auto save_as = [&](const std::string& name, int epoch, double loss) {
        meta.extra = {{"epoch", std::to_string(epoch)}, {"loss", format_full(loss)}};
        const std::string path = config.out_dir + "/" + name;
        model::save_checkpoint(path, st, meta);
        return path;
    };

    const auto t0 = std::chrono::steady_clock::now();
    long global_step = 0;
    double last_good_loss = 0.0;
    bool have_initial = false;
    bool stop = false;

    for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
        std::vector<int> epoch_order = train_indices;
        shuffle_rng.shuffle(epoch_order);
        for (std::size_t off = 0; off < epoch_order.size() && !stop; off += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(epoch_order.size(), off + static_cast<std::size_t>(config.batch_size));
            const std::vector<int> batch_indices(epoch_order.begin() + static_cast<std::ptrdiff_t>(off),
                                                 epoch_order.begin() + static_cast<std::ptrdiff_t>(end));

            const int parity = config.mask_mode == MaskMode::grid ? static_cast<int>(global_step % 2) : -1;
            const patch::MaskPattern pattern =
                config.mask_mode == MaskMode::grid
                    ? patch::grid_mask(grid.rows, grid.cols, parity)
                    : patch::random_mask(grid.rows, grid.cols, config.random_mask_ratio,
                                         derive_seed(config.seed, "mask:" + std::to_string(global_step)));

            Batch batch = build_batch(dataset, batch_indices, pattern, grid, config.loss_scope);
            num::Tape tape;
            model::ForwardOptions opt;
            opt.training = true;
            opt.rng = &dropout_rng;
            num::Tensor loss = batch_loss(&tape, st, batch, opt);
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                std::string ckpt;
                if (emit_files) ckpt = save_as("model_abort.v4lp", epoch, last_good_loss);
                throw Error("pretrain: non-finite loss at step " + std::to_string(global_step) +
                            (ckpt.empty() ? "" : "; last good checkpoint: " + ckpt));
            }
            if (!have_initial) {
                result.initial_loss = loss_value;
                have_initial = true;
            }
            last_good_loss = loss_value;

            tape.backward(loss);
            if (adam) num::adam_step(params, *adam);
            st.zero_grads();
            ++global_step;

            TrainLogEntry entry;
            entry.epoch = epoch;
            entry.step = global_step;
            entry.loss = loss_value;
            entry.val_nmae_percent = validation_nmae();
            entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            entry.mask_parity = parity;
            result.log.entries.push_back(entry);

            if (config.max_steps > 0 && global_step >= config.max_steps) stop = true;
        }
        if (emit_files && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
            save_as("checkpoint_epoch_" + std::to_string(epoch + 1) + ".v4lp", epoch + 1, last_good_loss);
        }
    }

    result.final_loss = last_good_loss;
    if (emit_files) {
        result.final_checkpoint_path = save_as("model_final.v4lp", config.epochs, last_good_loss);
        result.log.write_csv(config.out_dir + "/train_log.csv");
    }
    return result;
}

}  // namespace vit4lpa::train
