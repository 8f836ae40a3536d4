#include <benchmark/benchmark.h>

#include "vit4lpa/model.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/patcher.hpp"
#include "vit4lpa/pretrain.hpp"
#include "vit4lpa/rng.hpp"
#include "vit4lpa/synthgen.hpp"

using namespace vit4lpa;

namespace {

num::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    Rng rng(seed);
    num::Tensor t(std::move(shape));
    for (auto& v : t.values_mut()) v = rng.normal();
    return t;
}

data::LoadImage random_image(std::uint64_t seed) {
    Rng rng(seed);
    data::LoadImage img;
    img.pixels.resize(24 * 24 * 3);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    num::Tensor a = random_tensor({n, 128}, 1);
    num::Tensor b = random_tensor({128, 128}, 2);
    for (auto _ : state) {
        num::Tensor c = num::matmul(nullptr, a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2L * n * 128 * 128);
}
BENCHMARK(BM_Matmul)->Arg(144)->Arg(576)->Arg(1152);

void BM_Patchify(benchmark::State& state) {
    const auto img = random_image(3);
    const auto grid = patch::PatchGrid::for_image(24, 24, 4);
    for (auto _ : state) {
        auto seq = patch::patchify(img, grid);
        benchmark::DoNotOptimize(seq.patches.data());
    }
}
BENCHMARK(BM_Patchify);

void BM_EncoderForwardEval(benchmark::State& state) {
    model::ModelConfig mc;
    mc.dropout = 0.0;
    model::ModelState model_state(mc, 5);
    num::Tensor tokens = random_tensor({36, mc.encoder_dim}, 7);
    for (auto _ : state) {
        num::Tensor out = model::encoder_forward(nullptr, model_state, tokens, 1, 36, {});
        benchmark::DoNotOptimize(out.values().data());
    }
}
BENCHMARK(BM_EncoderForwardEval);

void BM_MaskedReconstruction(benchmark::State& state) {
    model::ModelConfig mc;
    mc.dropout = 0.0;
    model::ModelState model_state(mc, 5);
    const auto img = random_image(11);
    const auto pattern = patch::grid_mask(6, 6, 0);
    for (auto _ : state) {
        auto pixels = train::reconstruct_image(model_state, img, pattern);
        benchmark::DoNotOptimize(pixels.data());
    }
}
BENCHMARK(BM_MaskedReconstruction);

void BM_PretrainStep(benchmark::State& state) {
    synth::DatasetParams p;
    p.num_households = 4;
    p.days = 96;
    p.seed = 9;
    const auto ds = synth::gen_dataset(p);
    const auto images = data::window_dataset(ds.records, 24, 24, ds.manifest.bounds);
    train::PretrainConfig cfg;
    cfg.batch_size = static_cast<int>(state.range(0));
    cfg.epochs = 1;
    cfg.max_steps = 1;
    cfg.validation_fraction = 0.0;
    cfg.validation_log_images = 1;
    for (auto _ : state) {
        auto result = train::pretrain(images, cfg);
        benchmark::DoNotOptimize(result.final_loss);
    }
}
BENCHMARK(BM_PretrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
