#include <benchmark/benchmark.h>

#include <numeric>

#include "ukd/data/synthetic.hpp"
#include "ukd/downstream/abmil.hpp"
#include "ukd/downstream/retrieval.hpp"
#include "ukd/downstream/survival.hpp"
#include "ukd/stats/bootstrap.hpp"
#include "ukd/stats/metrics.hpp"
#include "ukd/stats/wilcoxon.hpp"

namespace {

using ukd::num::Rng;

void BM_AbmilForward(benchmark::State& state) {
  Rng rng(1);
  const auto model = ukd::eval::Abmil::create(512, 2, ukd::eval::AbmilConfig::paper(), rng);
  ukd::eval::Features bag;
  bag.dim = 512;
  bag.values.resize(static_cast<std::size_t>(state.range(0)) * 512);
  for (double& v : bag.values) v = rng.normal();
  const auto x = bag.tensor();
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x).logits);
}
BENCHMARK(BM_AbmilForward)->Arg(16)->Arg(256);

void BM_RetrievalQuery(benchmark::State& state) {
  ukd::data::ClusterParams p;
  p.per_cluster = static_cast<std::size_t>(state.range(0));
  const auto pts = ukd::data::generate_clusters(p, 2);
  ukd::eval::Features db;
  db.dim = p.dim;
  db.values = pts.x.values;
  const auto index = ukd::eval::build_index(db, pts.y);
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ukd::eval::retrieve(index, db.row(q), 5));
    q = (q + 1) % db.rows();
  }
}
BENCHMARK(BM_RetrievalQuery)->Arg(100)->Arg(1000);

void BM_CIndex(benchmark::State& state) {
  Rng rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> risk(n);
  std::vector<ukd::eval::SurvivalRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    risk[i] = rng.normal();
    recs[i] = {rng.uniform(0.0, 100.0), rng.uniform() < 0.6, 0};
  }
  for (auto _ : state) benchmark::DoNotOptimize(ukd::eval::c_index(risk, recs));
}
BENCHMARK(BM_CIndex)->Arg(200)->Arg(2000);

void BM_BootstrapAuc(benchmark::State& state) {
  Rng rng(4);
  const std::size_t n = 500;
  std::vector<int> y(n);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    s[i] = rng.normal() + y[i];
  }
  const auto auc = [&](std::span<const std::size_t> idx) {
    std::vector<int> yb;
    std::vector<double> sb;
    for (auto i : idx) {
      yb.push_back(y[i]);
      sb.push_back(s[i]);
    }
    return ukd::stats::binary_auc(yb, sb);
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(ukd::stats::bootstrap("auc", n, auc, static_cast<std::size_t>(state.range(0)), 7));
  }
}
BENCHMARK(BM_BootstrapAuc)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_WilcoxonExact(benchmark::State& state) {
  Rng rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ukd::stats::wilcoxon_signed_rank(a, b, ukd::stats::Alternative::kTwoSided));
  }
}
BENCHMARK(BM_WilcoxonExact)->Arg(12)->Arg(40);

}  // namespace
