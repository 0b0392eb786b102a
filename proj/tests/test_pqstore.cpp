#include <doctest.h>

#include <cmath>

#include "arc/pqstore.hpp"
#include "arc/rng.hpp"

using namespace arc;
using namespace arc::pq;

namespace {
std::vector<float> gaussian_blobs(const std::vector<float>& centers, int per_cluster, float noise,
                                  Rng& rng, std::vector<double>* true_means = nullptr) {
    // 1-D blobs around each center; returns interleaved draws
    std::vector<float> out;
    std::vector<double> sums(centers.size(), 0.0);
    for (int i = 0; i < per_cluster; ++i) {
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const float v = centers[c] + rng.uniform(-noise, noise);
            out.push_back(v);
            sums[c] += double(v);
        }
    }
    if (true_means) {
        true_means->clear();
        for (double s : sums) true_means->push_back(s / per_cluster);
    }
    return out;
}
}  // namespace

TEST_CASE("k=1 learns the subspace mean") {
    Rng rng(1);
    std::vector<float> data;
    double sum0 = 0.0, sum1 = 0.0;
    for (int i = 0; i < 40; ++i) {
        const float a = rng.uniform(-1.0f, 1.0f), b = rng.uniform(2.0f, 3.0f);
        data.push_back(a);
        data.push_back(b);
        sum0 += a;
        sum1 += b;
    }
    PQCodebook cb = train_pq(data, /*dim=*/2, /*m=*/2, /*k=*/1, /*iters=*/5, /*seed=*/7);
    CHECK(double(cb.centroid(0, 0)[0]) == doctest::Approx(sum0 / 40).epsilon(1e-5));
    CHECK(double(cb.centroid(1, 0)[0]) == doctest::Approx(sum1 / 40).epsilon(1e-5));
}

TEST_CASE("well-separated blobs are recovered to their empirical means") {
    Rng rng(2);
    std::vector<double> means;
    std::vector<float> data = gaussian_blobs({0.0f, 10.0f, 20.0f, 30.0f}, 50, 0.1f, rng, &means);
    PQCodebook cb = train_pq(data, 1, 1, 4, 25, 11);
    std::vector<double> found;
    for (int c = 0; c < 4; ++c) found.push_back(double(cb.centroid(0, c)[0]));
    std::sort(found.begin(), found.end());
    std::sort(means.begin(), means.end());
    for (int c = 0; c < 4; ++c) CHECK(std::abs(found[std::size_t(c)] - means[std::size_t(c)]) < 1e-6);
}

TEST_CASE("Lloyd's objective never increases") {
    Rng rng(3);
    std::vector<float> data;
    for (int i = 0; i < 256; ++i) data.push_back(rng.uniform(-2.0f, 2.0f));
    std::vector<double> trace;
    train_pq(data, /*dim=*/4, /*m=*/2, /*k=*/5, /*iters=*/25, /*seed=*/13, &trace);
    REQUIRE(trace.size() == 25);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
}

TEST_CASE("decode of encode is a fixed point on centroid concatenations") {
    Rng rng(4);
    std::vector<float> data;
    for (int i = 0; i < 480; ++i) data.push_back(rng.uniform(-1.0f, 1.0f));
    PQCodebook cb = train_pq(data, 6, 3, 4, 25, 17);
    // build a vector straight from centroids 2, 0, 3
    std::vector<float> v;
    for (int sub = 0; sub < 3; ++sub) {
        const int pick[] = {2, 0, 3};
        const float* c = cb.centroid(sub, pick[sub]);
        v.insert(v.end(), c, c + cb.sub_dim);
    }
    auto codes = encode(v, cb);
    CHECK(codes == std::vector<std::uint32_t>({2, 0, 3}));
    auto back = decode(codes, cb);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == v[i]);
    // idempotence: encode(decode(encode(v))) == encode(v) for arbitrary vectors
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> w;
        for (int i = 0; i < 6; ++i) w.push_back(rng.uniform(-1.5f, 1.5f));
        auto c1 = encode(w, cb);
        auto c2 = encode(decode(c1, cb), cb);
        CHECK(c1 == c2);
    }
}

TEST_CASE("ties resolve to the lowest centroid index") {
    PQCodebook cb;
    cb.m = 1;
    cb.k = 2;
    cb.sub_dim = 1;
    cb.centroids = {1.0f, 3.0f};  // 2.0 is equidistant
    std::vector<float> v = {2.0f};
    CHECK(encode(v, cb)[0] == 0u);
}

TEST_CASE("training is invariant to vector order under the same seed") {
    Rng rng(5);
    std::vector<float> data;
    for (int i = 0; i < 64 * 4; ++i) data.push_back(rng.uniform(-1.0f, 1.0f));
    PQCodebook a = train_pq(data, 4, 2, 6, 25, 19);
    // rotate the vector order
    std::vector<float> rotated(data.begin() + 4 * 17, data.end());
    rotated.insert(rotated.end(), data.begin(), data.begin() + 4 * 17);
    PQCodebook b = train_pq(rotated, 4, 2, 6, 25, 19);
    REQUIRE(a.centroids.size() == b.centroids.size());
    for (std::size_t i = 0; i < a.centroids.size(); ++i) CHECK(a.centroids[i] == b.centroids[i]);
}

TEST_CASE("decode error shrinks as k grows") {
    Rng rng(6);
    std::vector<float> train, held;
    for (int i = 0; i < 512 * 8; ++i) train.push_back(rng.uniform(-1.0f, 1.0f));
    for (int i = 0; i < 64 * 8; ++i) held.push_back(rng.uniform(-1.0f, 1.0f));
    double last = 1e300;
    for (int k : {4, 16, 64}) {
        PQCodebook cb = train_pq(train, 8, 4, k, 25, 23);
        double mse = 0.0;
        for (int i = 0; i < 64; ++i) {
            std::span<const float> v(held.data() + i * 8, 8);
            auto back = decode(encode(v, cb), cb);
            for (int j = 0; j < 8; ++j) {
                const double d = double(v[std::size_t(j)]) - double(back[std::size_t(j)]);
                mse += d * d;
            }
        }
        CHECK(mse < last);
        last = mse;
    }
}

TEST_CASE("degenerate training data duplicates centroids with a warning flag") {
    std::vector<float> data(32, 1.5f);  // a single distinct point
    bool degenerate = false;
    PQCodebook cb = train_pq(data, 1, 1, 4, 5, 29, nullptr, &degenerate);
    CHECK(degenerate);
    for (int c = 0; c < 4; ++c) CHECK(cb.centroid(0, c)[0] == 1.5f);
}

TEST_CASE("memory accounting is exact") {
    CHECK(memory_report_bytes(1000000, 4, 1024, 4.0) == 128000000);
    // 32-bit floats at x=1: plain row storage, 4 bytes per dimension per token
    CHECK(memory_report_bytes(10, 1, 48, 32.0) == 10 * 48 * 4);
    CHECK(memory_report_bytes(0, 4, 16, 8.0) == 0);
    // bits per vector follow m * ceil(log2 k)
    PQCodebook cb;
    cb.m = 24;
    cb.k = 16;
    cb.sub_dim = 2;
    CHECK(cb.bits_per_code() == 4);
    CHECK(cb.bits_per_vector() == 96);
    CHECK(cb.bits_per_dim() == doctest::Approx(2.0));
    CHECK_THROWS_AS(memory_report_bytes(10, 1, 10, 0.25), arc::Error);
}

TEST_CASE("code packing round trip") {
    Rng rng(7);
    for (int bits : {1, 2, 4, 6, 8, 12}) {
        std::vector<std::uint32_t> codes;
        for (int i = 0; i < 37; ++i) codes.push_back(std::uint32_t(rng.next_int(0, (1 << bits) - 1)));
        auto bytes = pack_codes(codes, bits);
        CHECK(bytes.size() == std::size_t(37 * bits + 7) / 8);
        CHECK(unpack_codes(bytes, 37, bits) == codes);
    }
}

TEST_CASE("codebook file round trip") {
    Rng rng(8);
    std::vector<float> data;
    for (int i = 0; i < 256; ++i) data.push_back(rng.uniform(-1.0f, 1.0f));
    PQCodebook cb = train_pq(data, 4, 2, 4, 10, 31);
    write_codebook("/tmp/arc_test_cb.pq", cb);
    PQCodebook back = read_codebook("/tmp/arc_test_cb.pq");
    CHECK(back.m == cb.m);
    CHECK(back.k == cb.k);
    CHECK(back.sub_dim == cb.sub_dim);
    CHECK(back.seed == cb.seed);
    for (std::size_t i = 0; i < cb.centroids.size(); ++i)
        CHECK(back.centroids[i] == cb.centroids[i]);
}

TEST_CASE("train_pq input validation") {
    std::vector<float> data(12, 0.0f);
    CHECK_THROWS_AS(train_pq(data, 5, 1, 2, 5, 1), arc::Error);   // not a multiple of dim
    CHECK_THROWS_AS(train_pq(data, 4, 3, 2, 5, 1), arc::Error);   // dim % m != 0
    CHECK_THROWS_AS(train_pq(data, 4, 1, 9, 5, 1), arc::Error);   // fewer than k vectors
}
