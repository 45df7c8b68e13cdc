// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>

#include "erde/autodiff/ops.hpp"
#include "erde/data/dataset.hpp"
#include "erde/exits/engine.hpp"
#include "erde/losses/losses.hpp"
#include "erde/model/network.hpp"
#include "erde/rng.hpp"

namespace {

using erde::ad::Tape;
using erde::ad::Tensor;

Tensor random_tensor(erde::ad::Shape shape, std::uint64_t seed) {
  erde::Rng rng(seed);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({16, c, 16, 16}, 1);
  const Tensor w = random_tensor({c, c, 3, 3}, 2);
  const Tensor b = Tensor::zeros({c});
  for (auto _ : state) benchmark::DoNotOptimize(erde::ad::conv2d(x, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv2dForward)->Arg(4)->Arg(8)->Arg(16);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({16, c, 16, 16}, 1);
  Tensor w = random_tensor({c, c, 3, 3}, 2);
  w.set_requires_grad(true);
  const Tensor b = Tensor::zeros({c});
  for (auto _ : state) {
    w.clear_grad();
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(erde::ad::sum(erde::ad::conv2d(x, w, b, {1, 1})));
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(4)->Arg(8);

erde::model::ArchConfig desk_teacher() {
  auto a = erde::model::preset("tiny8", 8, 1, 16, 16, 4);
  a.seed = 3;
  return a;
}

void BM_TrainStep(benchmark::State& state) {
  erde::model::MultiExitNetwork net(erde::model::preset("tiny6", 4, 1, 16, 16, 4));
  const Tensor x = random_tensor({64, 1, 16, 16}, 4);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  for (auto _ : state) {
    for (auto& p : net.parameters()) p.tensor.clear_grad();
    Tape tape;
    Tape::Scope scope(tape);
    const auto logits = net.forward_all_exits(x, erde::model::Mode::train, 7);
    tape.backward(erde::losses::ce_joint(logits, labels));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

erde::data::Dataset bench_data(std::size_t n) {
  erde::data::SynthSpec spec;
  spec.count = n;
  spec.noise_sigma = 1.6;
  return erde::data::synth_generate(spec);
}

void BM_TraceDataset(benchmark::State& state) {
  const erde::model::MultiExitNetwork net(desk_teacher());
  const auto ds = bench_data(256);
  for (auto _ : state) benchmark::DoNotOptimize(erde::exits::trace_dataset(net, ds, {1, 64}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ds.size()));
}
BENCHMARK(BM_TraceDataset)->Unit(benchmark::kMillisecond);

void BM_EarlyExitInfer(benchmark::State& state) {
  const erde::model::MultiExitNetwork net(desk_teacher());
  const auto ds = bench_data(4);
  const std::vector<std::size_t> idx{0};
  const Tensor x = ds.batch(idx);
  const auto macs = erde::exits::mac_count(net.arch());
  const double theta = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(erde::exits::early_exit_infer(net, x, theta, macs));
}
BENCHMARK(BM_EarlyExitInfer)->Arg(0)->Arg(70)->Arg(139);

void BM_Sweep(benchmark::State& state) {
  const erde::model::MultiExitNetwork net(desk_teacher());
  const auto traces = erde::exits::trace_dataset(net, bench_data(400));
  const auto grid = erde::exits::theta_grid(0.0, std::log(4.0), 100);
  const auto threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(erde::exits::sweep(traces, grid, threads));
}
BENCHMARK(BM_Sweep)->Arg(1)->Arg(4);

void BM_ErdeLoss(benchmark::State& state) {
  std::vector<Tensor> s{random_tensor({64, 10}, 5), random_tensor({64, 10}, 6)};
  std::vector<Tensor> t{random_tensor({64, 10}, 7), random_tensor({64, 10}, 8)};
  for (auto& x : s) x.set_requires_grad(true);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) {
    for (auto& x : s) x.clear_grad();
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(erde::losses::erde_total(s, t, labels, {}).total);
  }
}
BENCHMARK(BM_ErdeLoss);

}  // namespace

BENCHMARK_MAIN();
