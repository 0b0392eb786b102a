#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "arc/evalsuite.hpp"
#include "arc/rng.hpp"

using namespace arc;

namespace {
struct EvalFixture {
    ArcBundle bundle;
    std::vector<QaItem> items, shots;

    EvalFixture() {
        Rng rng(3);
        ArcEncoderConfig cfg;
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.backbone_layers = 2;
        cfg.max_compress_len = 128;
        cfg.pooling_factor = 4;
        bundle.arc = make_arc_encoder(cfg, rng);
        bundle.d_bottleneck = 8;
        BlockConfig a{20, 2, 0, true, 10000.0f};
        bundle.registry.add_decoder(ModelParams::init("A", a, kVocabSize, 2, true, rng), 16, 8,
                                    rng);
        auto docs = gen_corpus(91, 12, 3);
        Rng qa_rng(7);
        for (int i = 0; i < 4; ++i) items.push_back(qa_from_doc(docs[std::size_t(i)], qa_rng));
        for (int i = 4; i < 8; ++i) shots.push_back(qa_from_doc(docs[std::size_t(i)], qa_rng));
    }

    EvalBundle eval() const { return {&bundle.arc, &bundle.registry, "A"}; }
};
}  // namespace

TEST_CASE("normalization rules and the golden table") {
    CHECK(exact_match("The Cat", {"cat"}) == 1);
    CHECK(exact_match("cats", {"cat"}) == 0);

    std::ifstream is(std::string(ARC_TEST_DATA_DIR) + "/em_golden.tsv");
    REQUIRE(is.good());
    std::string line;
    int n_rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        REQUIRE(t1 != std::string::npos);
        REQUIRE(t2 != std::string::npos);
        const std::string pred = line.substr(0, t1);
        std::vector<std::string> golds;
        std::stringstream gs(line.substr(t1 + 1, t2 - t1 - 1));
        std::string g;
        while (std::getline(gs, g, '|')) golds.push_back(g);
        const int expect = std::stoi(line.substr(t2 + 1));
        CAPTURE(pred);
        CHECK(exact_match(pred, golds) == expect);
        ++n_rows;
    }
    CHECK(n_rows == 20);
}

TEST_CASE("normalization is idempotent") {
    const char* cases[] = {"The  Quick, Brown Fox!", "a  b c", "AN ANSWER.", "", "  x  "};
    for (const char* c : cases) {
        const std::string once = normalize_answer(c);
        CHECK(normalize_answer(once) == once);
    }
}

TEST_CASE("eval_qa rejects an empty dataset and short shot lists") {
    EvalFixture f;
    std::vector<QaItem> empty;
    CHECK_THROWS_AS(eval_qa(f.eval(), empty, f.shots, 2, 4, DocMode::Compressed), Error);
    CHECK_THROWS_AS(eval_qa(f.eval(), f.items, f.shots, 9, 4, DocMode::Compressed), Error);
}

TEST_CASE("eval_qa runs all modes deterministically and tracks compression stats") {
    EvalFixture f;
    QaEvalResult a = eval_qa(f.eval(), f.items, f.shots, 2, 4, DocMode::Compressed, 6);
    QaEvalResult b = eval_qa(f.eval(), f.items, f.shots, 2, 4, DocMode::Compressed, 6);
    CHECK(a.em == b.em);
    CHECK(a.realized_pf == b.realized_pf);
    CHECK(a.n_items == 4);
    // shots' documents count toward compression stats: 3 docs per item
    CHECK(a.realized_pf > 0.0);
    CHECK(a.realized_pf <= 4.0 + 1e-9);

    QaEvalResult open = eval_qa(f.eval(), f.items, f.shots, 2, 4, DocMode::OpenBook, 6);
    CHECK(open.realized_pf == 0.0);
    QaEvalResult closed = eval_qa(f.eval(), f.items, f.shots, 2, 4, DocMode::ClosedBook, 6);
    CHECK(closed.realized_pf == 0.0);
}

TEST_CASE("realized pooling factor: exact when divisible, never above x") {
    EvalFixture f;
    const DecoderEntry& entry = f.bundle.registry.at("A");
    std::vector<int> t16(16, 65);
    CHECK(compress(f.bundle.arc, entry, t16, 4, TaskToken::Cont).realized_factor() ==
          doctest::Approx(4.0));
    std::vector<int> t14(14, 65);
    const double pf = compress(f.bundle.arc, entry, t14, 4, TaskToken::Cont).realized_factor();
    CHECK(pf <= 4.0);
    CHECK(pf == doctest::Approx(14.0 / 4.0));
}

TEST_CASE("uniform logits give perplexity equal to the vocabulary size") {
    EvalFixture f;
    // zero the output head: every position emits uniform logits
    DecoderEntry& entry = f.bundle.registry.at("A");
    for (auto& v : entry.decoder.output_head.data()) v = 0.0f;
    std::vector<std::vector<int>> seqs = {std::vector<int>(24, 66), std::vector<int>(18, 70)};
    const double ppl = eval_ppl(f.eval(), seqs, 4, 0.5);
    CHECK(ppl == doctest::Approx(double(kVocabSize)).epsilon(1e-4));
}

TEST_CASE("untrained reconstruction accuracy sits near chance") {
    EvalFixture f;
    std::vector<std::vector<int>> seqs;
    Rng rng(9);
    for (int i = 0; i < 6; ++i) {
        std::vector<int> s(16);
        for (auto& t : s) t = rng.next_int(97, 122);
        seqs.push_back(std::move(s));
    }
    ReconResult r = eval_reconstruction(f.eval(), seqs, 2);
    // chance level is 1/259; allow a couple of points of slack
    CHECK(r.token_accuracy <= 1.0 / 259.0 + 0.02);
    CHECK(r.sequence_em == 0.0);
}

TEST_CASE("results CSV layout") {
    std::ostringstream os;
    write_results_header(os);
    write_results_row(os, {"synthqa", 4, 3, "em", 41.5, 200, 7});
    CHECK(os.str() == "benchmark,x,k_shot,metric,value,n_items,seed\nsynthqa,4,3,em,41.5,200,7\n");
}
