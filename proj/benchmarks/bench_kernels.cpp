#include <benchmark/benchmark.h>

#include "arc/arc_encoder.hpp"
#include "arc/pqstore.hpp"
#include "arc/rng.hpp"
#include "arc/samples.hpp"
#include "arc/tensor.hpp"
#include "arc/training.hpp"

namespace {

using namespace arc;

void BM_Matmul(benchmark::State& state) {
    const int n = int(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::uniform({n, 96}, -1.0f, 1.0f, rng);
    Tensor b = Tensor::uniform({96, 96}, -1.0f, 1.0f, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
    state.SetItemsProcessed(state.iterations() * int64_t(n) * 96 * 96);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

void BM_AttentionForward(benchmark::State& state) {
    const int n = int(state.range(0));
    Rng rng(2);
    BlockConfig cfg{96, 4, 0, true, 10000.0f};
    LayerParams lp;
    lp.attn_norm = Tensor::from_values({96}, std::vector<float>(96, 1.0f));
    lp.wq = Tensor::uniform({96, 96}, -0.1f, 0.1f, rng);
    lp.wk = Tensor::uniform({96, 96}, -0.1f, 0.1f, rng);
    lp.wv = Tensor::uniform({96, 96}, -0.1f, 0.1f, rng);
    lp.wo = Tensor::uniform({96, 96}, -0.1f, 0.1f, rng);
    Tensor x = Tensor::uniform({n, 96}, -1.0f, 1.0f, rng);
    for (auto _ : state) benchmark::DoNotOptimize(attention(x, lp, cfg, {}).data().data());
}
BENCHMARK(BM_AttentionForward)->Arg(64)->Arg(256)->Arg(512);

struct CompressSetup {
    ArcBundle bundle;
    std::vector<int> tokens;

    CompressSetup() {
        Rng rng(3);
        ArcEncoderConfig cfg;
        bundle.arc = make_arc_encoder(cfg, rng);
        bundle.d_bottleneck = 48;
        BlockConfig dec{96, 4, 0, true, 10000.0f};
        bundle.registry.add_decoder(ModelParams::init("A", dec, kVocabSize, 4, true, rng), 64, 48,
                                    rng);
        auto docs = gen_corpus(7, 4, 3);
        for (const auto& d : docs) {
            auto t = tokenize(d.text);
            tokens.insert(tokens.end(), t.begin(), t.end());
        }
        tokens.resize(128);
    }
};

void BM_Compress(benchmark::State& state) {
    static CompressSetup setup;
    const int x = int(state.range(0));
    for (auto _ : state) {
        auto ctx = compress(setup.bundle.arc, setup.bundle.registry.at("A"), setup.tokens, x,
                            TaskToken::Cont);
        benchmark::DoNotOptimize(ctx.vectors.data().data());
    }
}
BENCHMARK(BM_Compress)->Arg(1)->Arg(4)->Arg(8);

void BM_TrainStepReconstruction(benchmark::State& state) {
    static CompressSetup setup;
    auto docs = gen_corpus(9, 64, 3);
    TrainConfig cfg;
    cfg.phase = Phase::Pretrain;
    cfg.steps = 1 << 20;
    cfg.batch_size = 4;
    cfg.reconstruction_ratio = 1.0;
    cfg.warmup_steps = 8;
    Trainer trainer(setup.bundle, docs, cfg);
    int step = 0;
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step(step++).loss);
}
BENCHMARK(BM_TrainStepReconstruction);

void BM_PqEncode(benchmark::State& state) {
    Rng rng(4);
    std::vector<float> train;
    for (int i = 0; i < 48 * 512; ++i) train.push_back(rng.uniform(-1.0f, 1.0f));
    pq::PQCodebook cb = pq::train_pq(train, 48, 12, 16, 10, 5);
    std::vector<float> v;
    for (int i = 0; i < 48; ++i) v.push_back(rng.uniform(-1.0f, 1.0f));
    for (auto _ : state) benchmark::DoNotOptimize(pq::encode(v, cb));
}
BENCHMARK(BM_PqEncode);

}  // namespace

BENCHMARK_MAIN();
