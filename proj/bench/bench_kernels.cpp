// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <vector>

#include "ossimm/encode.hpp"
#include "ossimm/manifold.hpp"
#include "ossimm/physics.hpp"
#include "ossimm/quantify.hpp"
#include "ossimm/rng.hpp"

using namespace ossimm;

namespace {

std::vector<double> offsets(int n) {
    std::vector<double> f(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = -200.0 + 400.0 * i / (n - 1);
    return f;
}

DictionaryGrid small_grid() {
    DictionaryGrid g;
    g.t2_values_s = {0.0926};
    g.r2star_values_hz = uniform_grid(12.0, 38.0, 2.0, true);
    g.f0_values_hz = uniform_grid(-6.0, 6.0, 1.0, false);
    return g;
}

const Dictionary& desk_dictionary() {
    static const Dictionary d = [] {
        DictionaryGrid g;
        g.t2_values_s = {0.0926};
        g.r2star_values_hz = uniform_grid(12.0, 38.0, 0.2, true);
        g.f0_values_hz = uniform_grid(-6.0, 6.0, 0.22, false);
        return build_dictionary(SequenceParams{}, g, 400);
    }();
    return d;
}

CMatrix voxels(const Dictionary& d, Eigen::Index n) {
    Rng r(5);
    CMatrix x(n, d.n_c());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = r.complex_normal(1.0);
    return x;
}

struct Encoding {
    EncodingOperator op;
    CMatrix x;
    std::vector<CMatrix> y;
};

const Encoding& encoding() {
    static const Encoding e = [] {
        const SamplingPattern p = set_pattern(40, 40, 10, 12.0, 5, 0);
        EncodingOperator op(gaussian_sensitivities(40, 40, 8), p);
        CMatrix x = CMatrix::Ones(op.n_voxels(), op.n_frames());
        auto y = op.forward(x);
        return Encoding{std::move(op), std::move(x), std::move(y)};
    }();
    return e;
}

void BM_IsochromatBank(benchmark::State& s) {
    const auto f = offsets(4000);
    for (auto _ : s) benchmark::DoNotOptimize(isochromat_bank(SequenceParams{}, 1.4, 0.0926, f));
}
void BM_IsochromatBankSerial(benchmark::State& s) {
    const auto f = offsets(4000);
    for (auto _ : s) benchmark::DoNotOptimize(isochromat_bank_serial(SequenceParams{}, 1.4, 0.0926, f));
}

void BM_BuildDictionary(benchmark::State& s) {
    for (auto _ : s) benchmark::DoNotOptimize(build_dictionary(SequenceParams{}, small_grid(), 1000));
}
void BM_BuildDictionarySerial(benchmark::State& s) {
    for (auto _ : s) benchmark::DoNotOptimize(build_dictionary_serial(SequenceParams{}, small_grid(), 1000));
}

void BM_QuantifyImage(benchmark::State& s) {
    const Dictionary& d = desk_dictionary();
    const CMatrix x = voxels(d, 256);
    for (auto _ : s) benchmark::DoNotOptimize(quantify_image(x, d));
}
void BM_QuantifyImageSerial(benchmark::State& s) {
    const Dictionary& d = desk_dictionary();
    const CMatrix x = voxels(d, 256);
    for (auto _ : s) benchmark::DoNotOptimize(quantify_image_serial(x, d));
}

void BM_Forward(benchmark::State& s) {
    const Encoding& e = encoding();
    for (auto _ : s) benchmark::DoNotOptimize(e.op.forward(e.x));
}
void BM_ForwardSerial(benchmark::State& s) {
    const Encoding& e = encoding();
    for (auto _ : s) benchmark::DoNotOptimize(e.op.forward_serial(e.x));
}
void BM_Adjoint(benchmark::State& s) {
    const Encoding& e = encoding();
    for (auto _ : s) benchmark::DoNotOptimize(e.op.adjoint(e.y));
}
void BM_AdjointSerial(benchmark::State& s) {
    const Encoding& e = encoding();
    for (auto _ : s) benchmark::DoNotOptimize(e.op.adjoint_serial(e.y));
}

}  // namespace

BENCHMARK(BM_IsochromatBank)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IsochromatBankSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildDictionary)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildDictionarySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QuantifyImage)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QuantifyImageSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Adjoint)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdjointSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
