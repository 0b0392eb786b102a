#include "arc/pqstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "arc/rng.hpp"

namespace arc {
namespace pq {

int PQCodebook::bits_per_code() const {
    int bits = 0;
    while ((1 << bits) < k) ++bits;
    return std::max(bits, 1);
}

namespace {

double sq_dist(const float* a, const float* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = double(a[i]) - double(b[i]);
        s += diff * diff;
    }
    return s;
}

int nearest_centroid(const float* v, const PQCodebook& cb, int sub) {
    int best = 0;
    double best_d = sq_dist(v, cb.centroid(sub, 0), cb.sub_dim);
    for (int c = 1; c < cb.k; ++c) {
        const double d = sq_dist(v, cb.centroid(sub, c), cb.sub_dim);
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

PQCodebook train_pq(const std::vector<float>& vectors, int dim, int m, int k, int iters,
                    std::uint64_t seed, std::vector<double>* objective_trace, bool* degenerate) {
    if (dim < 1 || vectors.size() % std::size_t(dim) != 0)
        fail_dim("train_pq: vector buffer is not a multiple of dim");
    if (m < 1 || dim % m != 0) fail_config("train_pq: dim must be divisible by m");
    if (k < 1) fail_config("train_pq: k must be >= 1");
    const int n = int(vectors.size() / std::size_t(dim));
    if (n < k) fail_config("train_pq: need at least k training vectors");

    PQCodebook cb;
    cb.m = m;
    cb.k = k;
    cb.sub_dim = dim / m;
    cb.seed = seed;
    cb.trained_on = n;
    cb.centroids.assign(std::size_t(m) * k * cb.sub_dim, 0.0f);
    if (degenerate) *degenerate = false;
    if (objective_trace) objective_trace->assign(std::size_t(iters), 0.0);

    const int sd = cb.sub_dim;
    for (int sub = 0; sub < m; ++sub) {
        // canonicalize: training must not depend on input vector order
        std::vector<std::vector<float>> pts(static_cast<std::size_t>(n),
                                            std::vector<float>(static_cast<std::size_t>(sd)));
        for (int i = 0; i < n; ++i)
            std::memcpy(pts[std::size_t(i)].data(), vectors.data() + std::size_t(i) * dim + sub * sd,
                        std::size_t(sd) * sizeof(float));
        std::sort(pts.begin(), pts.end());

        std::vector<int> uniq;  // first index of each distinct point
        for (int i = 0; i < n; ++i)
            if (i == 0 || pts[std::size_t(i)] != pts[std::size_t(i - 1)]) uniq.push_back(i);

        Rng rng(sub_seed(seed, "pq.init." + std::to_string(sub)));
        std::vector<int> pool = uniq;
        rng.shuffle(pool);
        float* cent = cb.centroids.data() + std::size_t(sub) * k * sd;
        if (int(pool.size()) < k && degenerate) *degenerate = true;
        for (int c = 0; c < k; ++c) {
            const int src = pool[std::size_t(c) % pool.size()];  // duplicates when degenerate
            std::memcpy(cent + std::size_t(c) * sd, pts[std::size_t(src)].data(),
                        std::size_t(sd) * sizeof(float));
        }

        std::vector<int> assign(std::size_t(n), 0);
        std::vector<double> dist(std::size_t(n), 0.0);
        for (int it = 0; it < iters; ++it) {
            // assignment
            double objective = 0.0;
            for (int i = 0; i < n; ++i) {
                int best = 0;
                double bd = sq_dist(pts[std::size_t(i)].data(), cent, sd);
                for (int c = 1; c < k; ++c) {
                    const double d = sq_dist(pts[std::size_t(i)].data(), cent + std::size_t(c) * sd, sd);
                    if (d < bd) {
                        bd = d;
                        best = c;
                    }
                }
                assign[std::size_t(i)] = best;
                dist[std::size_t(i)] = bd;
                objective += bd;
            }
            if (objective_trace) (*objective_trace)[std::size_t(it)] += objective;
            // update
            std::vector<double> sums(std::size_t(k) * sd, 0.0);
            std::vector<int> counts(std::size_t(k), 0);
            for (int i = 0; i < n; ++i) {
                counts[std::size_t(assign[std::size_t(i)])] += 1;
                double* dst = sums.data() + std::size_t(assign[std::size_t(i)]) * sd;
                for (int j = 0; j < sd; ++j) dst[j] += double(pts[std::size_t(i)][std::size_t(j)]);
            }
            for (int c = 0; c < k; ++c) {
                if (counts[std::size_t(c)] == 0) {
                    // empty cluster: re-seed to the point farthest from its centroid
                    int far = 0;
                    for (int i = 1; i < n; ++i)
                        if (dist[std::size_t(i)] > dist[std::size_t(far)]) far = i;
                    std::memcpy(cent + std::size_t(c) * sd, pts[std::size_t(far)].data(),
                                std::size_t(sd) * sizeof(float));
                    dist[std::size_t(far)] = 0.0;
                    continue;
                }
                for (int j = 0; j < sd; ++j)
                    cent[std::size_t(c) * sd + std::size_t(j)] =
                        float(sums[std::size_t(c) * sd + std::size_t(j)] / counts[std::size_t(c)]);
            }
        }
    }
    return cb;
}

std::vector<std::uint32_t> encode(std::span<const float> v, const PQCodebook& cb) {
    if (int(v.size()) != cb.dim()) fail_dim("pq encode: vector length does not match codebook");
    std::vector<std::uint32_t> codes(static_cast<std::size_t>(cb.m));
    for (int sub = 0; sub < cb.m; ++sub)
        codes[std::size_t(sub)] = std::uint32_t(nearest_centroid(v.data() + sub * cb.sub_dim, cb, sub));
    return codes;
}

std::vector<float> decode(std::span<const std::uint32_t> codes, const PQCodebook& cb) {
    if (int(codes.size()) != cb.m) fail_dim("pq decode: code length does not match codebook");
    std::vector<float> out(static_cast<std::size_t>(cb.dim()));
    for (int sub = 0; sub < cb.m; ++sub) {
        if (int(codes[std::size_t(sub)]) >= cb.k) fail_dim("pq decode: code out of range");
        std::memcpy(out.data() + sub * cb.sub_dim, cb.centroid(sub, int(codes[std::size_t(sub)])),
                    std::size_t(cb.sub_dim) * sizeof(float));
    }
    return out;
}

std::int64_t memory_report_bytes(std::int64_t n_source_tokens, int x, int d_b,
                                 double bits_per_dim) {
    if (n_source_tokens < 0 || x < 1 || d_b < 1 || bits_per_dim <= 0)
        fail_config("memory_report: bad arguments");
    const double bits_exact = double(d_b) * bits_per_dim;
    const std::int64_t bits_per_vec = std::int64_t(std::llround(bits_exact));
    if (std::abs(bits_exact - double(bits_per_vec)) > 1e-6)
        fail_config("memory_report: d_b * bits_per_dim must be integral");
    const std::int64_t n_vecs = (n_source_tokens + x - 1) / x;
    return (n_vecs * bits_per_vec + 7) / 8;
}

void write_codebook(const std::string& path, const PQCodebook& cb) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_io("cannot open codebook for writing: " + path);
    const char magic[8] = {'A', 'R', 'C', 'P', 'Q', '1', '\0', '\0'};
    os.write(magic, 8);
    std::int32_t head[3] = {cb.m, cb.k, cb.sub_dim * cb.m};
    os.write(reinterpret_cast<const char*>(head), sizeof(head));
    std::uint64_t seed = cb.seed;
    os.write(reinterpret_cast<const char*>(&seed), sizeof(seed));
    os.write(reinterpret_cast<const char*>(cb.centroids.data()),
             std::streamsize(cb.centroids.size() * sizeof(float)));
    if (!os) fail_io("codebook write failed: " + path);
}

PQCodebook read_codebook(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_io("missing codebook file: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "ARCPQ1\0\0", 8) != 0) fail_io("not a codebook file: " + path);
    std::int32_t head[3];
    is.read(reinterpret_cast<char*>(head), sizeof(head));
    PQCodebook cb;
    cb.m = head[0];
    cb.k = head[1];
    cb.sub_dim = head[2] / head[0];
    is.read(reinterpret_cast<char*>(&cb.seed), sizeof(cb.seed));
    cb.centroids.resize(std::size_t(cb.m) * cb.k * cb.sub_dim);
    is.read(reinterpret_cast<char*>(cb.centroids.data()),
            std::streamsize(cb.centroids.size() * sizeof(float)));
    if (!is) fail_io("truncated codebook file: " + path);
    return cb;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, int bits_per_code) {
    std::vector<std::uint8_t> out((codes.size() * std::size_t(bits_per_code) + 7) / 8, 0);
    std::size_t bit = 0;
    for (std::uint32_t c : codes) {
        for (int b = 0; b < bits_per_code; ++b) {
            if (c >> b & 1u) out[bit >> 3] |= std::uint8_t(1u << (bit & 7));
            ++bit;
        }
    }
    return out;
}

std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes, int count,
                                        int bits_per_code) {
    std::vector<std::uint32_t> out(std::size_t(count), 0);
    std::size_t bit = 0;
    for (auto& c : out) {
        for (int b = 0; b < bits_per_code; ++b) {
            if (bytes[bit >> 3] >> (bit & 7) & 1u) c |= 1u << b;
            ++bit;
        }
    }
    return out;
}

std::vector<float> collect_bottleneck_vectors(const EvalBundle& bundle,
                                              const std::vector<QaItem>& items, int x, int* dim) {
    if (!bundle.arc || !bundle.registry) fail_contract("collect_bottleneck_vectors: unwired bundle");
    const DecoderEntry& entry = bundle.registry->at(bundle.decoder_id);
    NoGradGuard ng;
    std::vector<float> out;
    int d_b = 0;
    for (const auto& item : items) {
        Tensor z = bottleneck_rows(*bundle.arc, entry.projector, tokenize(item.doc.text), x);
        d_b = z.cols();
        out.insert(out.end(), z.data().begin(), z.data().end());
    }
    if (dim) *dim = d_b;
    return out;
}

QaEvalResult eval_with_pq(const EvalBundle& bundle, const std::vector<QaItem>& items,
                          const std::vector<QaItem>& shots, int k_shot, int x,
                          const PQCodebook* cb, int max_new) {
    if (items.empty()) fail_contract("eval_with_pq: empty dataset");
    if (int(shots.size()) < k_shot) fail_contract("eval_with_pq: fewer shot examples than k_shot");
    const DecoderEntry& entry = bundle.registry->at(bundle.decoder_id);
    NoGradGuard ng;

    std::vector<FewshotExample> shot_examples;
    for (const auto& s : shots) {
        FewshotExample e;
        e.doc_tokens = tokenize(s.doc.text);
        e.question = s.question;
        e.answer = s.answer;
        shot_examples.push_back(std::move(e));
    }
    std::span<const FewshotExample> shot_span(shot_examples.data(), std::size_t(k_shot));

    auto quantized_doc_rows = [&](const std::vector<int>& doc_tokens) {
        Tensor z = bottleneck_rows(*bundle.arc, entry.projector, doc_tokens, x);
        if (cb) {
            const int rows = z.rows(), d_b = z.cols();
            std::vector<float> vals(z.data().begin(), z.data().end());
            for (int r = 0; r < rows; ++r) {
                std::span<const float> row(vals.data() + std::size_t(r) * d_b, std::size_t(d_b));
                auto codes = encode(row, *cb);
                auto dec = decode(codes, *cb);
                std::memcpy(vals.data() + std::size_t(r) * d_b, dec.data(),
                            std::size_t(d_b) * sizeof(float));
            }
            z = Tensor::from_values({rows, d_b}, std::move(vals));
        }
        return rows_from_bottleneck(z, entry, TaskToken::Cont);
    };

    long hits = 0;
    for (const auto& item : items) {
        auto segments = render_fewshot_prompt(shot_span, tokenize(item.doc.text), item.question,
                                              DocMode::Compressed);
        std::vector<Tensor> parts;
        for (const auto& seg : segments) {
            if (seg.kind == Segment::Kind::Text)
                parts.push_back(embed_tokens(entry.decoder, seg.tokens));
            else
                parts.push_back(quantized_doc_rows(seg.tokens));
        }
        Tensor rows = parts.size() == 1 ? parts[0] : concat_rows(parts);
        std::vector<int> gen = generate_greedy(entry.decoder, rows, max_new, int('\n'));
        hits += exact_match(detokenize(gen), {item.answer});
    }
    QaEvalResult r;
    r.em = 100.0 * double(hits) / double(items.size());
    r.n_items = int(items.size());
    r.realized_pf = double(x);
    return r;
}

}  // namespace pq
}  // namespace arc
