#include <benchmark/benchmark.h>

#include "fuzz.hpp"
#include "stageverify/angle.hpp"
#include "stageverify/kernels.hpp"

using namespace sv;

namespace {

const GrayGrid& arm() {
  static const GrayGrid g = fixtures::arm_image(128);
  return g;
}

void BM_RotateBilinearSerial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(kernels::rotate_bilinear_serial(arm(), 37.5));
}
void BM_RotateBilinearParallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(kernels::rotate_bilinear_parallel(arm(), 37.5));
}

void BM_IouScanSerial(benchmark::State& st) {
  const auto ref = binarize(arm(), 0.5);
  const auto obs = binarize(rotate_grid(arm(), 123), 0.5);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::iou_scan_serial(ref, obs));
}
void BM_IouScanParallel(benchmark::State& st) {
  const auto ref = binarize(arm(), 0.5);
  const auto obs = binarize(rotate_grid(arm(), 123), 0.5);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::iou_scan_parallel(ref, obs));
}

void BM_FuzzSerial(benchmark::State& st) {
  const auto plan = builtin_hdd_plan();
  for (auto _ : st)
    benchmark::DoNotOptimize(fuzz::run_serial(plan, {}, static_cast<int>(st.range(0)), 1, {}));
}
void BM_FuzzParallel(benchmark::State& st) {
  const auto plan = builtin_hdd_plan();
  for (auto _ : st)
    benchmark::DoNotOptimize(fuzz::run_parallel(plan, {}, static_cast<int>(st.range(0)), 1, {}));
}

}  // namespace

BENCHMARK(BM_RotateBilinearSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RotateBilinearParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_IouScanSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IouScanParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FuzzSerial)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FuzzParallel)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
