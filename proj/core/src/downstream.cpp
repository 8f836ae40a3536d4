#include "vit4lpa/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>

#include "vit4lpa/checkpoint.hpp"
#include "vit4lpa/error.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/patcher.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::task {

const char* task_name(TaskKind task) {
    switch (task) {
        case TaskKind::pv_identification: return "pv";
        case TaskKind::ev_identification: return "ev";
        default: return "hvac";
    }
}

TaskDataset build_task_dataset(const std::vector<data::LoadProfileRecord>& records,
                               const data::DatasetManifest& manifest, TaskKind task,
                               int window_days, int train_stride, int test_stride) {
    std::set<std::string> train_ids(manifest.train_households.begin(),
                                    manifest.train_households.end());
    std::set<std::string> test_ids(manifest.test_households.begin(),
                                   manifest.test_households.end());
    for (const auto& id : train_ids) {
        if (test_ids.count(id)) {
            throw ContractError("build_task_dataset: household '" + id +
                                "' appears in both train and test splits");
        }
    }

    std::vector<data::LoadProfileRecord> train_records, test_records;
    for (const auto& rec : records) {
        if (train_ids.count(rec.household_id)) {
            train_records.push_back(rec);
        } else if (test_ids.count(rec.household_id)) {
            test_records.push_back(rec);
        }
    }

    auto labelize = [&](const std::vector<data::LoadProfileRecord>& recs, int stride) {
        std::vector<LabeledImage> out;
        for (const auto& rec : recs) {
            for (int off = 0; off + window_days <= rec.days(); off += stride) {
                LabeledImage li;
                li.image = data::profile_to_image(rec, manifest.bounds, off, window_days);
                if (task == TaskKind::pv_identification) {
                    li.label = rec.has_pv ? 1.0 : 0.0;
                } else if (task == TaskKind::ev_identification) {
                    li.label = rec.has_ev ? 1.0 : 0.0;
                } else {
                    li.hvac_pixels.resize(static_cast<std::size_t>(window_days) * 24);
                    for (int r = 0; r < window_days; ++r) {
                        for (int t = 0; t < 24; ++t) {
                            const std::size_t hour = static_cast<std::size_t>(off + r) * 24 + t;
                            li.hvac_pixels[static_cast<std::size_t>(r) * 24 + t] =
                                manifest.bounds.normalize(data::kChannelLoad, rec.hvac[hour]);
                        }
                    }
                }
                out.push_back(std::move(li));
            }
        }
        return out;
    };

    TaskDataset ds;
    ds.train = labelize(train_records, train_stride);
    ds.test = labelize(test_records, test_stride);
    return ds;
}

num::Tensor pool_embeddings(num::Tape* tape, const num::Tensor& embeddings) {
    if (embeddings.rank() != 2 || embeddings.dim(0) < 1) {
        throw ContractError("pool_embeddings: want a non-empty [n,D] matrix, got " +
                            num::shape_str(embeddings.shape()));
    }
    const int n = embeddings.dim(0);
    num::Tensor pooler = num::Tensor::full({1, n}, 1.0 / static_cast<double>(n));
    return num::matmul(tape, pooler, embeddings);
}

namespace {

num::Tensor encode_batch(num::Tape* tape, const model::ModelState& state,
                         const std::vector<const data::LoadImage*>& images, int patch_size,
                         const model::ForwardOptions& opt) {
    const auto grid = patch::PatchGrid::for_image(images[0]->days, images[0]->slots_per_day,
                                                  patch_size);
    const int total = grid.total();
    const int dim = grid.patch_dim();
    const int n = static_cast<int>(images.size());
    num::Tensor patches({n * total, dim});
    auto pv = patches.values_mut();
    std::vector<int> positions;
    positions.reserve(static_cast<std::size_t>(n) * total);
    for (int b = 0; b < n; ++b) {
        const auto seq = patch::patchify(*images[static_cast<std::size_t>(b)], grid);
        for (int k = 0; k < total; ++k) {
            std::copy(seq.patches[static_cast<std::size_t>(k)].begin(),
                      seq.patches[static_cast<std::size_t>(k)].end(),
                      pv.begin() + (static_cast<std::size_t>(b) * total + k) * dim);
            positions.push_back(k);
        }
    }
    num::Tensor tokens = model::embed_patches(tape, state, patches, positions, opt);
    return model::encoder_forward(tape, state, tokens, n, total, opt);
}

struct HeadRef {
    num::Tensor w;
    num::Tensor b;
};

HeadRef head_for(const model::ModelState& state, TaskKind task) {
    switch (task) {
        case TaskKind::pv_identification: return {state.heads.pv_w, state.heads.pv_b};
        case TaskKind::ev_identification: return {state.heads.ev_w, state.heads.ev_b};
        default: return {state.heads.hvac_w, state.heads.hvac_b};
    }
}

// pooled logits for a batch of images: [n x 1]
num::Tensor identification_logits(num::Tape* tape, const model::ModelState& state,
                                  const std::vector<const data::LoadImage*>& images,
                                  TaskKind task, int patch_size, const model::ForwardOptions& opt) {
    num::Tensor encoded = encode_batch(tape, state, images, patch_size, opt);
    const int total = state.config().num_positions;
    std::vector<num::Tensor> pooled;
    pooled.reserve(images.size());
    for (std::size_t b = 0; b < images.size(); ++b) {
        num::Tensor rows = num::slice_rows(tape, encoded, static_cast<int>(b) * total,
                                           static_cast<int>(b + 1) * total);
        pooled.push_back(pool_embeddings(tape, rows));
    }
    num::Tensor stacked = pooled.size() == 1 ? pooled[0] : num::concat_rows(tape, pooled);
    const HeadRef head = head_for(state, task);
    return num::add_row_vector(tape, num::matmul(tape, stacked, head.w), head.b);
}

// per-token hvac head output for a batch: [n*36 x 16]
num::Tensor disaggregation_outputs(num::Tape* tape, const model::ModelState& state,
                                   const std::vector<const data::LoadImage*>& images,
                                   int patch_size, const model::ForwardOptions& opt) {
    num::Tensor encoded = encode_batch(tape, state, images, patch_size, opt);
    const HeadRef head = head_for(state, TaskKind::hvac_disaggregation);
    return num::add_row_vector(tape, num::matmul(tape, encoded, head.w), head.b);
}

}  // namespace

double classify(const model::ModelState& state, const data::LoadImage& image, TaskKind target,
                int patch_size) {
    if (target == TaskKind::hvac_disaggregation) {
        throw ContractError("classify: target must be pv or ev");
    }
    num::Tensor logits = identification_logits(nullptr, state, {&image}, target, patch_size, {});
    num::Tensor prob = num::sigmoid(nullptr, logits);
    return prob[0];
}

std::vector<double> disaggregate(const model::ModelState& state, const data::LoadImage& image,
                                 int patch_size) {
    num::Tensor out = disaggregation_outputs(nullptr, state, {&image}, patch_size, {});
    const auto grid = patch::PatchGrid::for_image(image.days, image.slots_per_day, patch_size, 1);
    patch::PatchSequence seq;
    seq.grid = grid;
    seq.patches.resize(static_cast<std::size_t>(grid.total()));
    for (int k = 0; k < grid.total(); ++k) {
        seq.patches[static_cast<std::size_t>(k)].assign(
            out.values().begin() + static_cast<std::size_t>(k) * grid.patch_dim(),
            out.values().begin() + static_cast<std::size_t>(k + 1) * grid.patch_dim());
    }
    std::vector<double> pixels = patch::unpatchify(seq);
    for (auto& p : pixels) {
        p = std::max(0.0, image.bounds.denormalize(data::kChannelLoad, p));
    }
    return pixels;
}

MetricsReport compute_identification_metrics(const std::vector<double>& probabilities,
                                             const std::vector<double>& labels) {
    if (probabilities.size() != labels.size() || probabilities.empty()) {
        throw ContractError("compute_identification_metrics: size mismatch or empty input");
    }
    MetricsReport rep;
    rep.total = static_cast<long>(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const bool predicted = probabilities[i] >= 0.5;
        const bool truth = labels[i] >= 0.5;
        rep.correct += predicted == truth;
    }
    rep.accuracy = static_cast<double>(rep.correct) / static_cast<double>(rep.total);
    return rep;
}

MetricsReport compute_metrics(const std::vector<CustomerWindowSeries>& windows,
                              double hist_bin_width) {
    if (windows.empty()) throw ContractError("compute_metrics: no windows");
    struct Acc {
        double nmae_sum = 0.0;
        int nmae_windows = 0;
        double ee_sum = 0.0;
        int windows = 0;
    };
    std::vector<std::string> order;  // first-seen customer order
    std::vector<Acc> accs;
    auto acc_for = [&](const std::string& id) -> Acc& {
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (order[i] == id) return accs[i];
        }
        order.push_back(id);
        accs.emplace_back();
        return accs.back();
    };

    MetricsReport rep;
    for (const auto& w : windows) {
        if (w.predicted.size() != w.truth.size() || w.predicted.empty()) {
            throw ContractError("compute_metrics: misaligned series for '" + w.household_id + "'");
        }
        double abs_err = 0.0, sum_truth = 0.0, sum_pred = 0.0;
        for (std::size_t i = 0; i < w.truth.size(); ++i) {
            abs_err += std::abs(w.predicted[i] - w.truth[i]);
            sum_truth += w.truth[i];
            sum_pred += w.predicted[i];
        }
        Acc& acc = acc_for(w.household_id);
        acc.windows += 1;
        acc.ee_sum += std::abs(sum_pred - sum_truth);  // kWh at 1-hour resolution
        if (sum_truth > 0.0) {
            acc.nmae_sum += 100.0 * abs_err / sum_truth;
            acc.nmae_windows += 1;
        } else {
            rep.excluded_windows += 1;
        }
    }

    std::vector<double> customer_nmae;
    double nmae_total = 0.0, ee_total = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        MetricsReport::CustomerRow row;
        row.household_id = order[i];
        row.windows = accs[i].windows;
        row.nmae_windows = accs[i].nmae_windows;
        row.mean_ee_kwh = accs[i].ee_sum / accs[i].windows;
        ee_total += row.mean_ee_kwh;
        if (accs[i].nmae_windows > 0) {
            row.mean_nmae_percent = accs[i].nmae_sum / accs[i].nmae_windows;
            customer_nmae.push_back(row.mean_nmae_percent);
            nmae_total += row.mean_nmae_percent;
        }
        rep.per_customer.push_back(std::move(row));
    }
    if (customer_nmae.empty()) throw ContractError("compute_metrics: every window had zero truth");
    rep.nmae_percent = nmae_total / static_cast<double>(customer_nmae.size());
    rep.ee_kwh = ee_total / static_cast<double>(order.size());
    double var = 0.0;
    for (double v : customer_nmae) var += (v - rep.nmae_percent) * (v - rep.nmae_percent);
    rep.std_nmae = std::sqrt(var / static_cast<double>(customer_nmae.size()));
    rep.nmae_histogram = analysis::error_histogram(customer_nmae, hist_bin_width);
    return rep;
}

void MetricsReport::write_per_customer_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << "household_id,mean_nmae_percent,mean_ee_kwh,windows,nmae_windows\n";
    for (const auto& row : per_customer) {
        out << row.household_id << ',' << format_g12(row.mean_nmae_percent) << ','
            << format_g12(row.mean_ee_kwh) << ',' << row.windows << ',' << row.nmae_windows << '\n';
    }
}

void MetricsReport::write_summary(const std::string& path) const {
    KeyValueFile kv;
    if (total > 0) {
        kv.set("accuracy", format_g12(accuracy));
        kv.set("correct", std::to_string(correct));
        kv.set("total", std::to_string(total));
    }
    if (!per_customer.empty()) {
        kv.set("nmae_percent", format_g12(nmae_percent));
        kv.set("ee_kwh", format_g12(ee_kwh));
        kv.set("std_nmae", format_g12(std_nmae));
        kv.set("excluded_windows", std::to_string(excluded_windows));
        kv.set("customers", std::to_string(per_customer.size()));
    }
    kv.write(path);
}

void MetricsReport::write_histogram_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << "bin_left,count\n";
    for (std::size_t b = 0; b < nmae_histogram.counts.size(); ++b) {
        out << format_g12(static_cast<double>(b) * nmae_histogram.bin_width) << ','
            << nmae_histogram.counts[b] << '\n';
    }
}

FineTuneResult finetune(const TaskDataset& dataset, TaskKind task, const FineTuneConfig& config,
                        const model::ModelConfig& model_config) {
    if (dataset.train.empty() || dataset.test.empty()) {
        throw ContractError("finetune: train and test splits must both be nonempty");
    }
    if (task != TaskKind::hvac_disaggregation) {
        for (const auto& li : dataset.train) {
            if (li.label != 0.0 && li.label != 1.0) {
                throw ContractError("finetune: identification labels must be 0/1");
            }
        }
    } else {
        for (const auto& li : dataset.train) {
            if (li.hvac_pixels.size() != static_cast<std::size_t>(li.image.days) * 24) {
                throw ContractError("finetune: hvac target missing or misshapen");
            }
        }
    }

    // model: loaded checkpoint or fresh weights; heads always re-seeded so
    // both init arms start from the same head
    std::optional<model::ModelState> state_holder;
    if (config.init == FineTuneConfig::Init::pretrained) {
        if (config.checkpoint_path.empty()) {
            throw ContractError("finetune: pretrained init needs a checkpoint path");
        }
        state_holder.emplace(model::load_checkpoint(config.checkpoint_path));
    } else {
        model::ModelConfig mc = model_config;
        mc.dropout = config.dropout;
        state_holder.emplace(mc, derive_seed(config.seed, "scratch-init"));
    }
    model::ModelState& state = *state_holder;
    {
        Rng head_rng(derive_seed(config.seed, "head-init"));
        for (num::Tensor* t : {&state.heads.pv_w, &state.heads.ev_w, &state.heads.hvac_w}) {
            for (auto& v : t->values_mut()) v = head_rng.normal(0.0, 0.02);
        }
        for (num::Tensor* t : {&state.heads.pv_b, &state.heads.ev_b, &state.heads.hvac_b}) {
            for (auto& v : t->values_mut()) v = 0.0;
        }
    }

    const int patch_size = 4;
    state.set_requires_grad(false);
    const std::string head_prefix = std::string("heads.") + task_name(task);
    std::vector<num::NamedTensor> head_params = state.parameters_with_prefix(head_prefix);
    std::vector<num::NamedTensor> encoder_params = state.parameters_with_prefix("encoder.");
    for (auto& p : head_params) p.tensor.set_requires_grad(true);
    if (config.encoder_trainable) {
        for (auto& p : encoder_params) p.tensor.set_requires_grad(true);
    }

    std::optional<num::AdamState> head_adam, encoder_adam;
    if (config.optimizer.learning_rate > 0.0) {
        head_adam.emplace(config.optimizer);
        if (config.encoder_trainable) {
            num::AdamConfig enc_cfg = config.optimizer;
            enc_cfg.learning_rate *= config.encoder_lr_factor;
            encoder_adam.emplace(enc_cfg);
        }
    }

    // labeled budget: seeded subsample of the training images
    std::vector<int> train_order(dataset.train.size());
    std::iota(train_order.begin(), train_order.end(), 0);
    Rng subsample_rng(derive_seed(config.seed, "label-budget"));
    subsample_rng.shuffle(train_order);
    if (config.labeled_example_count > 0 &&
        config.labeled_example_count < static_cast<int>(train_order.size())) {
        train_order.resize(static_cast<std::size_t>(config.labeled_example_count));
    }

    const auto grid = patch::PatchGrid::for_image(24, 24, patch_size, 1);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    Rng dropout_rng(derive_seed(config.seed, "dropout"));

    FineTuneResult result{std::move(*state_holder), {}, 0.0, 0.0};
    model::ModelState& st = result.state;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int> order = train_order;
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        long batches = 0;
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), off + static_cast<std::size_t>(config.batch_size));
            std::vector<const data::LoadImage*> images;
            images.reserve(end - off);
            for (std::size_t i = off; i < end; ++i) {
                images.push_back(&dataset.train[static_cast<std::size_t>(order[i])].image);
            }
            num::Tape tape;
            model::ForwardOptions opt;
            opt.training = true;
            opt.rng = &dropout_rng;
            num::Tensor loss;
            if (task == TaskKind::hvac_disaggregation) {
                num::Tensor out = disaggregation_outputs(&tape, st, images, patch_size, opt);
                num::Tensor target({static_cast<int>(images.size()) * grid.total(), grid.patch_dim()});
                auto tv = target.values_mut();
                for (std::size_t b = off; b < end; ++b) {
                    const auto& li = dataset.train[static_cast<std::size_t>(order[b])];
                    const auto seq = patch::patchify_pixels(li.hvac_pixels, 24, 24, grid);
                    for (int k = 0; k < grid.total(); ++k) {
                        std::copy(seq.patches[static_cast<std::size_t>(k)].begin(),
                                  seq.patches[static_cast<std::size_t>(k)].end(),
                                  tv.begin() + ((b - off) * static_cast<std::size_t>(grid.total()) + k) *
                                                   grid.patch_dim());
                    }
                }
                num::Tensor diff = num::sub(&tape, out, target);
                loss = num::mean_all(&tape, num::mul(&tape, diff, diff));
            } else {
                num::Tensor logits = identification_logits(&tape, st, images, task, patch_size, opt);
                num::Tensor labels({static_cast<int>(images.size()), 1});
                for (std::size_t i = off; i < end; ++i) {
                    labels[i - off] = dataset.train[static_cast<std::size_t>(order[i])].label;
                }
                loss = num::bce_with_logits(&tape, logits, labels);
            }
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                throw Error("finetune: non-finite loss in epoch " + std::to_string(epoch));
            }
            epoch_loss += loss_value;
            ++batches;
            tape.backward(loss);
            if (head_adam) num::adam_step(head_params, *head_adam);
            if (encoder_adam) num::adam_step(encoder_params, *encoder_adam);
            for (auto& p : head_params) p.tensor.zero_grad();
            for (auto& p : encoder_params) p.tensor.zero_grad();
        }
        epoch_loss /= static_cast<double>(batches);
        if (epoch == 0) result.first_epoch_loss = epoch_loss;
        result.final_epoch_loss = epoch_loss;
    }

    // held-out evaluation on the disjoint customer split
    if (task == TaskKind::hvac_disaggregation) {
        std::vector<CustomerWindowSeries> windows;
        windows.reserve(dataset.test.size());
        for (const auto& li : dataset.test) {
            CustomerWindowSeries w;
            w.household_id = li.image.household_id;
            w.predicted = disaggregate(st, li.image, patch_size);
            w.truth.resize(li.hvac_pixels.size());
            for (std::size_t i = 0; i < li.hvac_pixels.size(); ++i) {
                w.truth[i] = li.image.bounds.denormalize(data::kChannelLoad, li.hvac_pixels[i]);
            }
            windows.push_back(std::move(w));
        }
        result.metrics = compute_metrics(windows);
    } else {
        std::vector<double> probs, labels;
        probs.reserve(dataset.test.size());
        for (const auto& li : dataset.test) {
            probs.push_back(classify(st, li.image, task, patch_size));
            labels.push_back(li.label);
        }
        result.metrics = compute_identification_metrics(probs, labels);
    }
    return result;
}

}  // namespace vit4lpa::task
