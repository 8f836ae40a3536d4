#include "vit4lpa/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>

#include "vit4lpa/analysis.hpp"
#include "vit4lpa/checkpoint.hpp"
#include "vit4lpa/downstream.hpp"
#include "vit4lpa/error.hpp"
#include "vit4lpa/grad_check.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/pretrain.hpp"
#include "vit4lpa/rng.hpp"
#include "vit4lpa/synthgen.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::cli {

namespace {

struct OptionSpec {
    const char* key;
    const char* default_value;
    const char* help;
};

// Per-command option tables; flag --foo-bar maps to key foo_bar. Every run
// writes the fully resolved configuration next to its outputs so it can be
// replayed with --config.
const std::vector<OptionSpec>& options_for(const std::string& command) {
    static const std::map<std::string, std::vector<OptionSpec>> tables = {
        {"gen-data",
         {
             {"seed", "0", "master seed"},
             {"households", "150", "number of households"},
             {"days", "365", "days per household"},
             {"pv_fraction", "0.4", "fraction of households with PV"},
             {"ev_fraction", "0.4", "fraction of households with EV"},
             {"train_fraction", "0.666667", "fraction of households in the train split"},
             {"augment_copies", "0", "augmented copies of each train household"},
         }},
        {"pretrain",
         {
             {"seed", "0", "master seed"},
             {"data", "", "dataset directory (data.csv + manifest.txt)"},
             {"epochs", "50", "training epochs"},
             {"batch_size", "64", "images per optimizer step"},
             {"dropout", "0.1", "dropout probability"},
             {"learning_rate", "0.001", "Adam learning rate"},
             {"mask_mode", "grid", "grid | random"},
             {"mask_ratio", "0.5", "masked fraction (random mode)"},
             {"loss_scope", "masked", "masked | all"},
             {"window_days", "24", "days per load image"},
             {"stride_days", "6", "window stride over each record"},
             {"checkpoint_every", "0", "epochs between checkpoints (0 = final only)"},
             {"max_steps", "0", "stop after N optimizer steps (0 = all epochs)"},
             {"val_fraction", "0.05", "held-out fraction for the loss log"},
             {"encoder_layers", "3", "encoder depth"},
             {"encoder_heads", "4", "encoder heads"},
             {"encoder_dim", "128", "encoder width"},
             {"decoder_layers", "2", "decoder depth"},
             {"decoder_heads", "2", "decoder heads"},
             {"decoder_dim", "32", "decoder width"},
             {"mlp_ratio", "4", "MLP hidden width multiple"},
         }},
        {"finetune",
         {
             {"seed", "0", "master seed"},
             {"data", "", "dataset directory"},
             {"task", "", "pv | ev | hvac"},
             {"init", "pretrained", "pretrained | random"},
             {"checkpoint", "", "encoder checkpoint (pretrained init)"},
             {"encoder_mode", "trainable", "trainable | frozen"},
             {"encoder_lr_factor", "0.1", "encoder learning-rate multiplier"},
             {"labeled_examples", "0", "labeled training images (0 = all)"},
             {"epochs", "4", "fine-tuning epochs"},
             {"batch_size", "32", "images per optimizer step"},
             {"learning_rate", "0.001", "head Adam learning rate"},
             {"dropout", "0", "dropout probability"},
             {"train_stride", "6", "window stride for training images"},
             {"test_stride", "24", "window stride for evaluation images"},
             {"encoder_layers", "3", "encoder depth (random init)"},
             {"encoder_heads", "4", "encoder heads (random init)"},
             {"encoder_dim", "128", "encoder width (random init)"},
             {"decoder_layers", "2", "decoder depth (random init)"},
             {"decoder_heads", "2", "decoder heads (random init)"},
             {"decoder_dim", "32", "decoder width (random init)"},
             {"mlp_ratio", "4", "MLP hidden width multiple"},
         }},
        {"evaluate",
         {
             {"seed", "0", "master seed"},
             {"data", "", "dataset directory"},
             {"task", "", "pv | ev | hvac"},
             {"model", "", "model checkpoint to evaluate"},
             {"test_stride", "24", "window stride for evaluation images"},
         }},
        {"analyze",
         {
             {"seed", "0", "sample-selection seed"},
             {"data", "", "dataset directory"},
             {"checkpoint", "", "model checkpoint"},
             {"sample_images", "64", "images in the attention/error sample"},
             {"hist_bin_width", "0.5", "reconstruction nMAE histogram bin width (percent)"},
             {"test_stride", "24", "window stride for sample images"},
         }},
        {"grad-check",
         {
             {"seed", "0", "master seed"},
             {"coords_per_group", "3", "sampled coordinates per parameter group"},
             {"eps", "1e-5", "central-difference step"},
             {"encoder_layers", "3", "encoder depth"},
             {"encoder_heads", "4", "encoder heads"},
             {"encoder_dim", "128", "encoder width"},
             {"decoder_layers", "2", "decoder depth"},
             {"decoder_heads", "2", "decoder heads"},
             {"decoder_dim", "32", "decoder width"},
             {"mlp_ratio", "4", "MLP hidden width multiple"},
         }},
    };
    auto it = tables.find(command);
    if (it == tables.end()) throw ConfigError("unknown command: " + command);
    return it->second;
}

void print_usage(std::ostream& os) {
    os << "usage: vit4lpa <command> [--config PATH] [--out DIR] [--key value ...]\n"
          "commands:\n"
          "  gen-data    synthesize a labeled smart-meter dataset (CSV + manifest)\n"
          "  pretrain    masked-image-modeling pre-training of the encoder\n"
          "  finetune    fine-tune for pv | ev identification or hvac disaggregation\n"
          "  evaluate    score an existing checkpoint on the held-out split\n"
          "  analyze     export position-similarity, attention and error artifacts\n"
          "  grad-check  verify analytic gradients against finite differences\n"
          "common flags: --config PATH  load a [command] section of key = value lines\n"
          "              --out DIR      run directory for all outputs (required)\n"
          "              --seed N       master seed\n";
}

class Resolved {
 public:
    Resolved(std::string command, const std::vector<OptionSpec>& specs) : command_(std::move(command)) {
        for (const auto& s : specs) values_[s.key] = s.default_value;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            throw ConfigError("unknown key '" + key + "' for command " + command_);
        }
        it->second = value;
    }

    const std::string& str(const std::string& key) const { return values_.at(key); }
    long integer(const std::string& key) const { return parse_long(values_.at(key)); }
    double number(const std::string& key) const { return parse_double(values_.at(key)); }
    std::uint64_t seed() const { return std::stoull(values_.at("seed")); }

    KeyValueFile to_kv() const {
        KeyValueFile kv;
        for (const auto& [k, v] : values_) kv.set(command_ + "." + k, v);
        return kv;
    }
    const std::string& command() const { return command_; }

 private:
    std::string command_;
    std::map<std::string, std::string> values_;  // ordered, stable serialization
};

struct RunContext {
    Resolved config;
    std::string out_dir;
    KeyValueFile log;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void note_digest(const std::string& label, const std::string& path) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64_file(path)));
        log.set(label, buf);
    }

    void finish(const std::string& status) {
        log.set("wall_seconds",
                format_g12(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
        log.set("status", status);
        log.write(out_dir + "/run.log");
        config.to_kv().write(out_dir + "/resolved.cfg");
    }
};

std::string flag_to_key(const std::string& flag) {
    std::string key = flag.substr(2);
    for (auto& c : key) {
        if (c == '-') c = '_';
    }
    return key;
}

RunContext parse_command_line(const std::vector<std::string>& args) {
    const std::string& command = args[0];
    Resolved config(command, options_for(command));
    std::string out_dir;
    std::optional<std::string> config_path;

    // first pass: find --config so command-line flags override it
    for (std::size_t i = 1; i < args.size(); i += 2) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config needs a path");
            config_path = args[i + 1];
        }
    }
    if (config_path) {
        if (!std::filesystem::exists(*config_path)) {
            throw ConfigError("config file not found: " + *config_path);
        }
        const KeyValueFile kv = KeyValueFile::read(*config_path);
        const std::string prefix = command + ".";
        for (const auto& [k, v] : kv.entries()) {
            if (k.rfind(prefix, 0) == 0) {
                config.set(k.substr(prefix.size()), v);
            } else if (k.find('.') == std::string::npos) {
                config.set(k, v);  // sectionless files apply directly
            }
            // keys for other commands are ignored so one file can drive a pipeline
        }
    }

    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0) throw ConfigError("expected a --flag, got '" + a + "'");
        if (i + 1 >= args.size()) throw ConfigError("flag " + a + " needs a value");
        const std::string value = args[++i];
        if (a == "--config") continue;  // handled above
        if (a == "--out") {
            out_dir = value;
            continue;
        }
        config.set(flag_to_key(a), value);
    }

    if (out_dir.empty()) throw ConfigError("--out DIR is required");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create run directory: " + out_dir);

    RunContext ctx{std::move(config), std::move(out_dir), {}, {}};
    ctx.log.set("version", kVersion);
    ctx.log.set("command", command);
    ctx.log.set("seed", std::to_string(ctx.config.seed()));
    return ctx;
}

void require_input(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " is required");
    if (!std::filesystem::exists(path)) throw ConfigError(what + " not found: " + path);
}

struct LoadedDataset {
    std::vector<data::LoadProfileRecord> records;
    data::DatasetManifest manifest;
};

LoadedDataset load_dataset(RunContext& ctx) {
    const std::string dir = ctx.config.str("data");
    require_input(dir, "--data");
    const std::string csv = dir + "/data.csv";
    const std::string manifest = dir + "/manifest.txt";
    require_input(csv, "dataset CSV");
    require_input(manifest, "dataset manifest");
    ctx.note_digest("data_csv_digest", csv);
    ctx.note_digest("manifest_digest", manifest);
    return {data::read_records_csv(csv), data::DatasetManifest::read(manifest)};
}

model::ModelConfig model_config_from(const Resolved& cfg, double dropout) {
    model::ModelConfig mc;
    mc.encoder_layers = static_cast<int>(cfg.integer("encoder_layers"));
    mc.encoder_heads = static_cast<int>(cfg.integer("encoder_heads"));
    mc.encoder_dim = static_cast<int>(cfg.integer("encoder_dim"));
    mc.decoder_layers = static_cast<int>(cfg.integer("decoder_layers"));
    mc.decoder_heads = static_cast<int>(cfg.integer("decoder_heads"));
    mc.decoder_dim = static_cast<int>(cfg.integer("decoder_dim"));
    mc.mlp_ratio = static_cast<int>(cfg.integer("mlp_ratio"));
    mc.dropout = dropout;
    mc.validate();
    return mc;
}

int cmd_gen_data(RunContext& ctx) {
    synth::DatasetParams params;
    params.seed = ctx.config.seed();
    params.num_households = static_cast<int>(ctx.config.integer("households"));
    params.days = static_cast<int>(ctx.config.integer("days"));
    params.pv_fraction = ctx.config.number("pv_fraction");
    params.ev_fraction = ctx.config.number("ev_fraction");
    params.train_fraction = ctx.config.number("train_fraction");
    synth::GeneratedDataset ds = synth::gen_dataset(params);

    const int copies = static_cast<int>(ctx.config.integer("augment_copies"));
    if (copies > 0) {
        std::vector<data::LoadProfileRecord> augmented;
        for (const auto& rec : ds.records) {
            const bool in_train =
                std::find(ds.manifest.train_households.begin(), ds.manifest.train_households.end(),
                          rec.household_id) != ds.manifest.train_households.end();
            if (!in_train) continue;
            Rng rng(derive_seed(params.seed, "augment:" + rec.household_id));
            for (int c = 0; c < copies; ++c) {
                auto aug = synth::augment(rec, rng);
                aug.household_id = rec.household_id + ".aug" + std::to_string(c + 1);
                ds.manifest.train_households.push_back(aug.household_id);
                augmented.push_back(std::move(aug));
            }
        }
        for (auto& rec : augmented) ds.records.push_back(std::move(rec));
    }

    synth::write_dataset(ds, ctx.out_dir);
    ctx.note_digest("data_csv_digest", ctx.out_dir + "/data.csv");
    ctx.note_digest("manifest_digest", ctx.out_dir + "/manifest.txt");
    ctx.log.set("households", std::to_string(params.num_households));
    ctx.log.set("records", std::to_string(ds.records.size()));
    std::cout << "gen-data: " << ds.records.size() << " records -> " << ctx.out_dir << "\n";
    return 0;
}

int cmd_pretrain(RunContext& ctx) {
    const LoadedDataset ds = load_dataset(ctx);
    long clamped = 0;
    const auto images = data::window_dataset(ds.records, static_cast<int>(ctx.config.integer("window_days")),
                                             static_cast<int>(ctx.config.integer("stride_days")),
                                             ds.manifest.bounds, &clamped);
    if (images.empty()) throw ConfigError("pretrain: dataset yields no images");
    ctx.log.set("images", std::to_string(images.size()));
    ctx.log.set("clamped_pixels", std::to_string(clamped));

    train::PretrainConfig cfg;
    cfg.seed = ctx.config.seed();
    cfg.epochs = static_cast<int>(ctx.config.integer("epochs"));
    cfg.batch_size = static_cast<int>(ctx.config.integer("batch_size"));
    cfg.dropout = ctx.config.number("dropout");
    cfg.optimizer.learning_rate = ctx.config.number("learning_rate");
    const std::string mode = ctx.config.str("mask_mode");
    if (mode == "grid") {
        cfg.mask_mode = train::MaskMode::grid;
    } else if (mode == "random") {
        cfg.mask_mode = train::MaskMode::random;
    } else {
        throw ConfigError("mask_mode must be grid or random, got '" + mode + "'");
    }
    cfg.random_mask_ratio = ctx.config.number("mask_ratio");
    const std::string scope = ctx.config.str("loss_scope");
    if (scope == "masked") {
        cfg.loss_scope = train::LossScope::masked_only;
    } else if (scope == "all") {
        cfg.loss_scope = train::LossScope::all_pixels;
    } else {
        throw ConfigError("loss_scope must be masked or all, got '" + scope + "'");
    }
    cfg.checkpoint_every = static_cast<int>(ctx.config.integer("checkpoint_every"));
    cfg.max_steps = static_cast<int>(ctx.config.integer("max_steps"));
    cfg.validation_fraction = ctx.config.number("val_fraction");
    cfg.out_dir = ctx.out_dir;
    cfg.dataset_digest = ctx.log.require("manifest_digest");

    const auto mc = model_config_from(ctx.config, cfg.dropout);
    const auto report = model::count_parameters(mc);
    write_text_file(ctx.out_dir + "/parameter_counts.txt", report.to_string());
    ctx.log.set("encoder_parameters", std::to_string(report.encoder_total));

    const auto result = train::pretrain(images, cfg, mc);
    ctx.log.set("initial_loss", format_full(result.initial_loss));
    ctx.log.set("final_loss", format_full(result.final_loss));
    ctx.log.set("checkpoint", result.final_checkpoint_path);
    std::cout << "pretrain: loss " << format_g12(result.initial_loss) << " -> "
              << format_g12(result.final_loss) << ", checkpoint " << result.final_checkpoint_path
              << "\n";
    return 0;
}

task::TaskKind parse_task(const std::string& name) {
    if (name == "pv") return task::TaskKind::pv_identification;
    if (name == "ev") return task::TaskKind::ev_identification;
    if (name == "hvac") return task::TaskKind::hvac_disaggregation;
    throw ConfigError("task must be pv, ev or hvac, got '" + name + "'");
}

void write_metrics(const task::MetricsReport& metrics, task::TaskKind kind,
                   const std::string& out_dir, KeyValueFile& log) {
    metrics.write_summary(out_dir + "/metrics_summary.txt");
    if (kind == task::TaskKind::hvac_disaggregation) {
        metrics.write_per_customer_csv(out_dir + "/metrics_per_customer.csv");
        metrics.write_histogram_csv(out_dir + "/metrics_hist.csv");
        log.set("nmae_percent", format_g12(metrics.nmae_percent));
        log.set("ee_kwh", format_g12(metrics.ee_kwh));
        log.set("std_nmae", format_g12(metrics.std_nmae));
    } else {
        log.set("accuracy", format_g12(metrics.accuracy));
    }
}

int cmd_finetune(RunContext& ctx) {
    const LoadedDataset ds = load_dataset(ctx);
    const task::TaskKind kind = parse_task(ctx.config.str("task"));
    const auto dataset = task::build_task_dataset(ds.records, ds.manifest, kind, 24,
                                                  static_cast<int>(ctx.config.integer("train_stride")),
                                                  static_cast<int>(ctx.config.integer("test_stride")));

    task::FineTuneConfig cfg;
    cfg.seed = ctx.config.seed();
    const std::string init = ctx.config.str("init");
    if (init == "pretrained") {
        cfg.init = task::FineTuneConfig::Init::pretrained;
        cfg.checkpoint_path = ctx.config.str("checkpoint");
        require_input(cfg.checkpoint_path, "--checkpoint");
        ctx.note_digest("checkpoint_digest", cfg.checkpoint_path);
    } else if (init == "random") {
        cfg.init = task::FineTuneConfig::Init::random;
    } else {
        throw ConfigError("init must be pretrained or random, got '" + init + "'");
    }
    const std::string enc_mode = ctx.config.str("encoder_mode");
    if (enc_mode == "trainable") {
        cfg.encoder_trainable = true;
    } else if (enc_mode == "frozen") {
        cfg.encoder_trainable = false;
    } else {
        throw ConfigError("encoder_mode must be trainable or frozen, got '" + enc_mode + "'");
    }
    cfg.encoder_lr_factor = ctx.config.number("encoder_lr_factor");
    cfg.labeled_example_count = static_cast<int>(ctx.config.integer("labeled_examples"));
    cfg.epochs = static_cast<int>(ctx.config.integer("epochs"));
    cfg.batch_size = static_cast<int>(ctx.config.integer("batch_size"));
    cfg.optimizer.learning_rate = ctx.config.number("learning_rate");
    cfg.dropout = ctx.config.number("dropout");

    const auto mc = model_config_from(ctx.config, cfg.dropout);
    const auto result = task::finetune(dataset, kind, cfg, mc);

    model::CheckpointMeta meta;
    meta.config = result.state.config();
    meta.creation_seed = cfg.seed;
    meta.dataset_digest = ctx.log.require("manifest_digest");
    meta.extra = {{"task", task_name(kind)}, {"init", init}};
    model::save_checkpoint(ctx.out_dir + "/model_final.v4lp", result.state, meta);
    write_metrics(result.metrics, kind, ctx.out_dir, ctx.log);
    ctx.log.set("train_images", std::to_string(dataset.train.size()));
    ctx.log.set("test_images", std::to_string(dataset.test.size()));
    std::cout << "finetune " << task_name(kind) << ": ";
    if (kind == task::TaskKind::hvac_disaggregation) {
        std::cout << "nMAE " << format_g12(result.metrics.nmae_percent) << "%, EE "
                  << format_g12(result.metrics.ee_kwh) << " kWh";
    } else {
        std::cout << "accuracy " << format_g12(result.metrics.accuracy);
    }
    std::cout << " on " << dataset.test.size() << " held-out images\n";
    return 0;
}

int cmd_evaluate(RunContext& ctx) {
    const LoadedDataset ds = load_dataset(ctx);
    const task::TaskKind kind = parse_task(ctx.config.str("task"));
    const std::string model_path = ctx.config.str("model");
    require_input(model_path, "--model");
    ctx.note_digest("checkpoint_digest", model_path);
    const model::ModelState state = model::load_checkpoint(model_path);
    const auto dataset = task::build_task_dataset(ds.records, ds.manifest, kind, 24, 24,
                                                  static_cast<int>(ctx.config.integer("test_stride")));

    task::MetricsReport metrics;
    if (kind == task::TaskKind::hvac_disaggregation) {
        std::vector<task::CustomerWindowSeries> windows;
        for (const auto& li : dataset.test) {
            task::CustomerWindowSeries w;
            w.household_id = li.image.household_id;
            w.predicted = task::disaggregate(state, li.image);
            w.truth.resize(li.hvac_pixels.size());
            for (std::size_t i = 0; i < li.hvac_pixels.size(); ++i) {
                w.truth[i] = li.image.bounds.denormalize(data::kChannelLoad, li.hvac_pixels[i]);
            }
            windows.push_back(std::move(w));
        }
        metrics = task::compute_metrics(windows);
    } else {
        std::vector<double> probs, labels;
        for (const auto& li : dataset.test) {
            probs.push_back(task::classify(state, li.image, kind));
            labels.push_back(li.label);
        }
        metrics = task::compute_identification_metrics(probs, labels);
    }
    write_metrics(metrics, kind, ctx.out_dir, ctx.log);
    std::cout << "evaluate " << task_name(kind) << ": done (" << dataset.test.size()
              << " held-out images)\n";
    return 0;
}

int cmd_analyze(RunContext& ctx) {
    const LoadedDataset ds = load_dataset(ctx);
    const std::string ckpt = ctx.config.str("checkpoint");
    require_input(ckpt, "--checkpoint");
    ctx.note_digest("checkpoint_digest", ckpt);
    const model::ModelState state = model::load_checkpoint(ckpt);

    auto images = data::window_dataset(ds.records, 24, static_cast<int>(ctx.config.integer("test_stride")),
                                       ds.manifest.bounds);
    if (images.empty()) throw ConfigError("analyze: dataset yields no images");
    std::vector<int> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(ctx.config.seed(), "analysis-sample"));
    rng.shuffle(order);
    const auto n_sample = std::min<std::size_t>(images.size(),
                                                static_cast<std::size_t>(ctx.config.integer("sample_images")));
    std::vector<data::LoadImage> sample;
    sample.reserve(n_sample);
    for (std::size_t i = 0; i < n_sample; ++i) {
        sample.push_back(images[static_cast<std::size_t>(order[i])]);
    }
    ctx.log.set("sample_images", std::to_string(sample.size()));

    // masked-reconstruction error distribution over the sample
    const auto pattern = patch::grid_mask(6, 6, 0);
    std::vector<double> errors;
    errors.reserve(sample.size());
    for (const auto& img : sample) {
        const auto recon = train::reconstruct_image(state, img, pattern);
        errors.push_back(train::reconstruction_nmae(recon, img.pixels, pattern));
    }
    analysis::export_analysis(state, sample, errors, ctx.config.number("hist_bin_width"), ctx.out_dir);
    const auto diag = analysis::run_diagnostics(state, sample);
    ctx.log.set("column_dominance", diag.column_dominance ? "pass" : "fail");
    ctx.log.set("entropy_nondecreasing", diag.entropy_nondecreasing ? "pass" : "fail");
    std::cout << "analyze: artifacts in " << ctx.out_dir << "\n" << diag.to_string();
    return 0;
}

int cmd_grad_check(RunContext& ctx) {
    const auto mc = model_config_from(ctx.config, 0.0);
    model::ModelState state(mc, derive_seed(ctx.config.seed(), "grad-check-init"));
    state.set_requires_grad(true);

    // two synthetic images, complementary grid parities
    synth::DatasetParams params;
    params.num_households = 2;
    params.days = 24;
    params.pv_fraction = 0.5;
    params.ev_fraction = 0.5;
    params.seed = ctx.config.seed();
    const auto ds = synth::gen_dataset(params);
    const auto images = data::window_dataset(ds.records, 24, 24, ds.manifest.bounds);

    std::vector<num::Tensor> vis_batch;
    std::vector<std::vector<int>> idx_batch;
    for (int b = 0; b < 2; ++b) {
        const auto grid = patch::PatchGrid::for_image(24, 24, 4);
        const auto seq = patch::patchify(images[static_cast<std::size_t>(b)], grid);
        const auto sel = patch::apply_mask(seq, patch::grid_mask(6, 6, b % 2));
        num::Tensor vis({static_cast<int>(sel.visible.size()), grid.patch_dim()});
        for (std::size_t i = 0; i < sel.visible.size(); ++i) {
            std::copy(sel.visible[i].begin(), sel.visible[i].end(),
                      vis.values_mut().begin() + static_cast<std::ptrdiff_t>(i) * grid.patch_dim());
        }
        vis_batch.push_back(vis);
        idx_batch.push_back(sel.visible_indices);
    }

    auto loss_fn = [&](num::Tape* tape) {
        num::Tensor acc = num::Tensor::scalar(0.0);
        for (int b = 0; b < 2; ++b) {
            num::Tensor tokens = model::embed_patches(tape, state, vis_batch[static_cast<std::size_t>(b)],
                                                      idx_batch[static_cast<std::size_t>(b)], {});
            num::Tensor encoded =
                model::encoder_forward(tape, state, tokens, 1, tokens.dim(0), {});
            num::Tensor bridged = num::matmul(tape, encoded, state.bridge_w);
            num::Tensor full = patch::reassemble(tape, bridged, idx_batch[static_cast<std::size_t>(b)],
                                                 state.mask_embedding, mc.num_positions);
            num::Tensor recon = model::decoder_forward(tape, state, full, 1, {});
            acc = num::add(tape, acc, num::mean_all(tape, num::mul(tape, recon, recon)));
        }
        return acc;
    };

    std::vector<num::NamedTensor> params_to_check = state.parameters_with_prefix("encoder.");
    for (auto& p : state.parameters_with_prefix("decoder.")) params_to_check.push_back(p);
    Rng pick(derive_seed(ctx.config.seed(), "grad-check-pick"));
    const auto results = num::grad_check_sampled(loss_fn, params_to_check, ctx.config.number("eps"),
                                                 static_cast<int>(ctx.config.integer("coords_per_group")),
                                                 pick);
    double worst = 0.0;
    std::string worst_name = "-";
    std::string report = "group,max_rel_error,coords\n";
    for (const auto& r : results) {
        report += r.name + "," + format_g12(r.max_rel_error) + "," + std::to_string(r.coords_checked) + "\n";
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = r.name;
        }
    }
    write_text_file(ctx.out_dir + "/grad_check.csv", report);
    ctx.log.set("max_rel_error", format_full(worst));
    ctx.log.set("worst_group", worst_name);
    std::cout << "grad-check: max relative gradient error " << format_g12(worst) << " (group "
              << worst_name << ")\n";
    constexpr double kGate = 1e-4;
    return worst < kGate ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    if (args.empty() || args[0] == "--help" || args[0] == "help") {
        print_usage(args.empty() ? std::cerr : std::cout);
        return args.empty() ? 1 : 0;
    }
    std::optional<RunContext> ctx;
    try {
        ctx.emplace(parse_command_line(args));
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        print_usage(std::cerr);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    try {
        int rc;
        const std::string& command = ctx->config.command();
        if (command == "gen-data") {
            rc = cmd_gen_data(*ctx);
        } else if (command == "pretrain") {
            rc = cmd_pretrain(*ctx);
        } else if (command == "finetune") {
            rc = cmd_finetune(*ctx);
        } else if (command == "evaluate") {
            rc = cmd_evaluate(*ctx);
        } else if (command == "analyze") {
            rc = cmd_analyze(*ctx);
        } else {
            rc = cmd_grad_check(*ctx);
        }
        ctx->finish(rc == 0 ? "ok" : "failed");
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        ctx->finish("validation-error");
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        ctx->finish("validation-error");
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        ctx->finish("runtime-error");
        return 2;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace vit4lpa::cli
