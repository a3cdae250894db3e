#include <benchmark/benchmark.h>

#include <random>

#include "sonarp/pipelines.hpp"

using namespace sonarp;

namespace {

Tensor<float> noise(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

void BM_ConvForward(benchmark::State& state) {
    const auto filters = static_cast<std::size_t>(state.range(0));
    const Shape in{filters, 48, 48};
    Conv2D<float> layer(LayerSpec::conv_same(filters, 3), in, "conv");
    Layer<float>& conv = layer;
    const auto x = noise({8, filters, 48, 48}, 1);
    Rng rng(0);
    for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, Mode::Infer, rng));
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ConvTrainStep(benchmark::State& state) {
    Conv2D<float> layer(LayerSpec::conv_same(16, 3), {16, 48, 48}, "conv");
    Layer<float>& conv = layer;
    const auto x = noise({8, 16, 48, 48}, 2);
    const auto g = noise({8, 16, 48, 48}, 3);
    Rng rng(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv.forward(x, Mode::Train, rng));
        benchmark::DoNotOptimize(conv.backward(g));
    }
}
BENCHMARK(BM_ConvTrainStep)->Unit(benchmark::kMillisecond);

void BM_Nms(benchmark::State& state) {
    const auto frame = generate_frame(SceneConfig{}, 0);
    auto windows = sliding_windows(frame.fov.height, frame.fov.width, frame.fov, 96, static_cast<int>(state.range(0)));
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& w : windows) w.score = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(nms(windows, 0.7));
    state.counters["windows"] = static_cast<double>(windows.size());
}
BENCHMARK(BM_Nms)->Arg(16)->Arg(8)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_TemplateMap(benchmark::State& state) {
    const SceneConfig c;
    const auto frames = generate_frames(c, 4);
    const auto templates = sample_templates(frames, 1, c.classes, 96);
    const auto& frame = frames[0].image;
    for (auto _ : state) benchmark::DoNotOptimize(tm_objectness_map(frame, templates.patches, 8));
    state.counters["templates"] = static_cast<double>(templates.patches.size());
}
BENCHMARK(BM_TemplateMap)->Unit(benchmark::kMillisecond);

void BM_FcnFrame(benchmark::State& state) {
    auto patch = build_objectness_net(ObjectnessKind::Tiny);
    Rng rng(5);
    initialize(patch, InitSpec{}, rng);
    auto fcn = to_fcn(patch);
    const auto frame = generate_frame(SceneConfig{}, 0);
    for (auto _ : state) benchmark::DoNotOptimize(fcn_objectness_map(fcn, frame.image));
}
BENCHMARK(BM_FcnFrame)->Unit(benchmark::kMillisecond);

void BM_PatchScoring(benchmark::State& state) {
    auto patch = build_objectness_net(ObjectnessKind::Tiny);
    Rng rng(6);
    initialize(patch, InitSpec{}, rng);
    const auto frame = generate_frame(SceneConfig{}, 0);
    for (auto _ : state)
        benchmark::DoNotOptimize(score_frame(ScorerKind::Cnn, &patch, nullptr, frame, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_PatchScoring)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
