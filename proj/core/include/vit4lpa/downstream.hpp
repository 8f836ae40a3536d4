#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vit4lpa/adam.hpp"
#include "vit4lpa/analysis.hpp"
#include "vit4lpa/codec.hpp"
#include "vit4lpa/model.hpp"

namespace vit4lpa::task {

enum class TaskKind { pv_identification, ev_identification, hvac_disaggregation };

const char* task_name(TaskKind task);

/// One training/evaluation example: a load image plus its target. The
/// identification label comes from the source household; the disaggregation
/// target is the HVAC series over the same window, normalized with the
/// load-channel bounds, at the image's own resolution.
struct LabeledImage {
    data::LoadImage image;
    double label = 0.0;               // 0/1, identification tasks
    std::vector<double> hvac_pixels;  // 24*24 normalized, disaggregation only
};

/// Images windowed from the records and split by the manifest's disjoint
/// household lists (asserted: no household appears on both sides).
struct TaskDataset {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> test;
};

TaskDataset build_task_dataset(const std::vector<data::LoadProfileRecord>& records,
                               const data::DatasetManifest& manifest, TaskKind task,
                               int window_days = 24, int train_stride = 6, int test_stride = 24);

/// Arithmetic mean over token rows: [n x D] -> [1 x D]. Differentiable.
num::Tensor pool_embeddings(num::Tape* tape, const num::Tensor& embeddings);

/// Identification probability for one image through all 36 patches:
/// sigmoid(linear(pool(encoder(...)))). Eval mode.
double classify(const model::ModelState& state, const data::LoadImage& image, TaskKind target,
                int patch_size = 4);

/// HVAC estimate for one image: per-token head, unpatchify, denormalize
/// with the load-channel bounds, clamp at 0 kW. Returns 24x24 hourly kW,
/// day-major. Eval mode.
std::vector<double> disaggregate(const model::ModelState& state, const data::LoadImage& image,
                                 int patch_size = 4);

struct FineTuneConfig {
    enum class Init { pretrained, random };
    Init init = Init::pretrained;
    std::string checkpoint_path;  // required for pretrained init
    bool encoder_trainable = true;
    double encoder_lr_factor = 0.1;  // encoder trains 10x slower than the head
    int labeled_example_count = 0;   // 0 = use every training image
    int epochs = 4;
    int batch_size = 32;
    num::AdamConfig optimizer;  // head learning rate
    double dropout = 0.0;
    std::uint64_t seed = 0;
};

struct CustomerWindowSeries {
    std::string household_id;
    std::vector<double> predicted;  // hourly kW
    std::vector<double> truth;      // hourly kW
};

struct MetricsReport {
    // identification
    double accuracy = 0.0;
    long correct = 0;
    long total = 0;
    // disaggregation
    double nmae_percent = 0.0;
    double ee_kwh = 0.0;
    double std_nmae = 0.0;
    long excluded_windows = 0;  // zero-energy ground truth, skipped for nMAE
    struct CustomerRow {
        std::string household_id;
        double mean_nmae_percent = 0.0;
        double mean_ee_kwh = 0.0;
        int windows = 0;
        int nmae_windows = 0;
    };
    std::vector<CustomerRow> per_customer;
    analysis::Histogram nmae_histogram;

    void write_per_customer_csv(const std::string& path) const;
    void write_summary(const std::string& path) const;
    void write_histogram_csv(const std::string& path) const;
};

/// Point-to-point and cumulative disaggregation error, grouped per customer:
/// per window nMAE = 100 * sum|y_hat - y| / sum y and EE = |sum y_hat -
/// sum y| * 1h; windows average per customer, customers average to the
/// headline numbers; std_nmae is the population std over per-customer means.
/// Windows with zero ground-truth energy are excluded from nMAE and counted.
MetricsReport compute_metrics(const std::vector<CustomerWindowSeries>& windows,
                              double hist_bin_width = 1.0);

MetricsReport compute_identification_metrics(const std::vector<double>& probabilities,
                                             const std::vector<double>& labels);

struct FineTuneResult {
    model::ModelState state;
    MetricsReport metrics;  // held-out customers
    double first_epoch_loss = 0.0;
    double final_epoch_loss = 0.0;
};

/// Trains the task head (and optionally the encoder at a reduced learning
/// rate) with Adam. Deterministic per seed; the head is re-initialized from
/// the seed so pretrained and random arms start from identical heads.
FineTuneResult finetune(const TaskDataset& dataset, TaskKind task, const FineTuneConfig& config,
                        const model::ModelConfig& model_config = {});

}  // namespace vit4lpa::task
