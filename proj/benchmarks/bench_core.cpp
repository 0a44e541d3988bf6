#include <benchmark/benchmark.h>

#include <random>

#include "mcrc/config.hpp"
#include "mcrc/model.hpp"
#include "mcrc/ops.hpp"
#include "mcrc/trainer.hpp"

using namespace mcrc;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t({r, c});
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  Tensor a = random_tensor(n, n, rng), b = random_tensor(n, n, rng);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(matmul(t.constant(a), t.constant(b)).value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_BiGruEncode(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 32, in = 64, hidden = 32;
  std::mt19937_64 rng(2);
  ParameterSet ps;
  BiGruEncoder enc = BiGruEncoder::create(ps, "e", in, hidden, rng);
  Tensor x = random_tensor(steps * batch, in, rng);
  Tensor mask({batch, steps}, 1.0);
  for (auto _ : state) {
    Tape t;
    Encoding e = enc.encode(t.constant(x), mask);
    Var loss = sum(e.states);
    ps.zero_grad();
    t.backward(loss);
    benchmark::DoNotOptimize(ps.all().front()->grad.data());
  }
}
BENCHMARK(BM_BiGruEncode)->Arg(10)->Arg(40);

struct ToyModel {
  TrainConfig config;
  Experiment exp;
  std::unique_ptr<ReaderModel> model;
  std::vector<Batch> batches;

  ToyModel() {
    config.hidden = 32;
    config.embed_dim = 32;
    config.char_dim = 8;
    config.char_hidden = 8;
    CorpusSplits splits;
    for (const RaceDocument& d : generate_toy_corpus(40, 7)) {
      for (Instance& i : to_instances(d, "toy")) splits.train.push_back(std::move(i));
    }
    exp = prepare_experiment(std::move(splits), config);
    model = std::make_unique<ReaderModel>(config.model(), exp.vocab, exp.chars, nullptr, 1);
    batches = make_batches(exp.train.indexed, 32);
  }
};

void BM_StageOneStep(benchmark::State& state) {
  static ToyModel toy;
  const Batch& batch = toy.batches.front();
  std::vector<std::optional<EvidenceSpan>> oracle;
  for (std::size_t i : batch.indices) oracle.push_back(toy.exp.train.oracle[i]);
  for (auto _ : state) {
    Tape t;
    Var loss = toy.model->stage_one_loss(t, batch, oracle, ForwardMode::eval());
    toy.model->parameters().zero_grad();
    t.backward(loss);
    benchmark::DoNotOptimize(loss.value().data());
  }
}
BENCHMARK(BM_StageOneStep)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  static ToyModel toy;
  for (auto _ : state) benchmark::DoNotOptimize(toy.model->predict(toy.batches.front()).choices.data());
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
