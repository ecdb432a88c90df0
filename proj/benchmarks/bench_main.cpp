#include <benchmark/benchmark.h>

#include "mrpllm/geo.hpp"
#include "mrpllm/neighbors.hpp"
#include "mrpllm/privacy.hpp"
#include "mrpllm/prompting.hpp"
#include "mrpllm/util.hpp"

#include <vector>

using namespace mrpllm;

namespace {

std::vector<PoiEntry> bench_catalog(std::size_t n) {
    Rng rng(42);
    std::uniform_real_distribution<double> ulat(1.2, 1.5), ulon(103.6, 104.0);
    std::vector<PoiEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
        PoiEntry p;
        p.poi_id = "p" + std::to_string(i);
        p.category_id = i % 12;
        p.pos = {ulat(rng), ulon(rng)};
        out.push_back(std::move(p));
    }
    return out;
}

void BM_Haversine(benchmark::State& state) {
    GeoPoint a{1.3521, 103.8198}, b{1.29, 103.85};
    for (auto _ : state) benchmark::DoNotOptimize(haversine_km(a, b));
}
BENCHMARK(BM_Haversine);

void BM_RadiusQuery(benchmark::State& state) {
    SpatialIndex index(bench_catalog(static_cast<std::size_t>(state.range(0))));
    GeoPoint center{1.35, 103.8};
    for (auto _ : state)
        benchmark::DoNotOptimize(index.pois_in_circle(center, 5.0));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RadiusQuery)->Range(1000, 32000)->Complexity();

void BM_MinRadius(benchmark::State& state) {
    SpatialIndex index(bench_catalog(5000));
    GeoPoint center{1.35, 103.8};
    for (auto _ : state)
        benchmark::DoNotOptimize(index.min_radius_containing(center, 20));
}
BENCHMARK(BM_MinRadius);

void BM_OuePerturb(benchmark::State& state) {
    Rng rng(1);
    const auto vocab = static_cast<std::size_t>(state.range(0));
    OneHotRecord rec(vocab, vocab / 2);
    for (auto _ : state) benchmark::DoNotOptimize(oue_perturb(rec, 0.1, rng));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OuePerturb)->Arg(64)->Arg(512)->Arg(4096);

void BM_Fuzzify(benchmark::State& state) {
    auto catalog = bench_catalog(5000);
    SpatialIndex index(catalog);
    PrivacyConfig cfg;
    cfg.epsilon = 1.0;
    cfg.validate_and_fill();
    Rng rng(2);
    std::size_t i = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(fuzzify_poi(catalog[i++ % catalog.size()], index, cfg, rng));
}
BENCHMARK(BM_Fuzzify);

void BM_KlDivergence(benchmark::State& state) {
    Rng rng(3);
    const auto vocab = static_cast<std::size_t>(state.range(0));
    std::vector<std::size_t> a, b;
    std::uniform_int_distribution<std::size_t> tok(0, vocab - 1);
    for (int i = 0; i < 500; ++i) {
        a.push_back(tok(rng));
        b.push_back(tok(rng));
    }
    auto p = build_distribution(a, vocab);
    auto q = build_distribution(b, vocab);
    for (auto _ : state) benchmark::DoNotOptimize(kl_divergence(p, q));
}
BENCHMARK(BM_KlDivergence)->Arg(64)->Arg(1024);

void BM_ParsePairList(benchmark::State& state) {
    std::string text = "{";
    for (int i = 0; i < 20; ++i)
        text += "Category " + std::to_string(i) + "-Category " + std::to_string(i + 1) + ", ";
    text += "Last-First}";
    for (auto _ : state) benchmark::DoNotOptimize(parse_pair_list(text));
}
BENCHMARK(BM_ParsePairList);

void BM_ParseRecommendations(benchmark::State& state) {
    std::vector<std::string> candidates;
    std::string text = "{";
    for (int i = 0; i < 100; ++i) candidates.push_back("Venue " + std::to_string(i));
    for (int i = 0; i < 10; ++i)
        text += "Venue " + std::to_string(i * 7) + ": matches the predicted aspects; ";
    text += "[category, region, distance]}";
    for (auto _ : state)
        benchmark::DoNotOptimize(parse_recommendations(text, candidates));
}
BENCHMARK(BM_ParseRecommendations);

} // namespace

BENCHMARK_MAIN();
