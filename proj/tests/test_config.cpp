#include <doctest.h>

#include "arc/config.hpp"

using namespace arc;

TEST_CASE("key=value parsing, comments, overrides, snapshot") {
    KeyValueConfig cfg = KeyValueConfig::from_string(
        "# a comment\n"
        "seed = 7\n"
        "pooling.factor=4   # trailing comment\n"
        "\n"
        "train.steps = 100\n");
    CHECK(cfg.get_int("seed", 0) == 7);
    CHECK(cfg.get_int("pooling.factor", 1) == 4);
    cfg.apply_override("pooling.factor=8");
    CHECK(cfg.get_int("pooling.factor", 1) == 8);
    CHECK(cfg.snapshot() == "pooling.factor=8\nseed=7\ntrain.steps=100\n");
    CHECK_THROWS_AS(KeyValueConfig::from_string("not an assignment\n"), Error);
    CHECK_THROWS_AS(cfg.apply_override("nonsense"), Error);
}

TEST_CASE("typed getters validate their values") {
    KeyValueConfig cfg = KeyValueConfig::from_string("a=12\nb=2.5\nc=true\nd=oops\n");
    CHECK(cfg.get_int("a", 0) == 12);
    CHECK(cfg.get_double("b", 0) == doctest::Approx(2.5));
    CHECK(cfg.get_bool("c", false));
    CHECK(cfg.get_bool("missing", true));
    CHECK_THROWS_AS(cfg.get_int("d", 0), Error);
    CHECK_THROWS_AS(cfg.get_bool("d", false), Error);
}

TEST_CASE("unknown keys are rejected with nearest-key suggestions") {
    KeyValueConfig cfg = KeyValueConfig::from_string("pooling.facto=4\n");
    try {
        validate_keys(cfg);
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("pooling.factor") != std::string::npos);
    }
    // per-decoder keys are recognized dynamically
    KeyValueConfig ok = KeyValueConfig::from_string(
        "decoders.list=A,B\ndecoders.A.d_model=96\ndecoders.B.ckpt=runs/b.ckpt\n");
    validate_keys(ok);
}

TEST_CASE("ArcConfig assembles defaults and decoder specs") {
    KeyValueConfig kv = KeyValueConfig::from_string(
        "seed=3\n"
        "decoders.list=A,B\n"
        "decoders.A.d_model=96\n"
        "decoders.B.d_model=80\n"
        "train.phase=finetune\n"
        "train.x=8\n"
        "pooling.variant=last_query\n");
    ArcConfig cfg = ArcConfig::from_kv(kv);
    CHECK(cfg.seed == 3);
    REQUIRE(cfg.decoders.size() == 2);
    CHECK(cfg.decoders[0].id == "A");
    CHECK(cfg.decoders[1].d_model == 80);
    CHECK(cfg.train.phase == Phase::Finetune);
    CHECK(cfg.train.x_train == 8);
    CHECK(cfg.train.decoders == std::vector<std::string>({"A", "B"}));
    CHECK(cfg.enc.variant == PoolingVariant::LastQuery);
    CHECK(cfg.enc.d_model == 64);  // desk-scale default
    CHECK(cfg.d_bottleneck == 48);
}

TEST_CASE("unknown config keys fail ArcConfig parsing") {
    KeyValueConfig kv = KeyValueConfig::from_string("train.step=10\n");
    CHECK_THROWS_AS(ArcConfig::from_kv(kv), Error);
}

TEST_CASE("seed fanout: named streams are independent and deterministic") {
    const std::uint64_t root = 99;
    CHECK(sub_seed(root, "data") == sub_seed(root, "data"));
    CHECK(sub_seed(root, "data") != sub_seed(root, "init"));
    CHECK(sub_seed(root, "data") != sub_seed(root + 1, "data"));
}

TEST_CASE("run directory snapshot round trip") {
    const std::string dir = "/tmp/arc_test_run";
    ensure_run_dir(dir);
    KeyValueConfig cfg = KeyValueConfig::from_string("seed=1\ntrain.steps=2\n");
    write_snapshot(dir, cfg);
    KeyValueConfig back = KeyValueConfig::from_file(run_file(dir, "config.snapshot"));
    CHECK(back.snapshot() == cfg.snapshot());
}
