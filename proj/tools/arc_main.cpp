// arc: desk-scale context-compression experiments from the command line.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "arc/checkpoint.hpp"
#include "arc/costmodel.hpp"
#include "arc/pipeline.hpp"
#include "arc/pqstore.hpp"

namespace {

using namespace arc;

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Config:
        case ErrorKind::Dimension:
        case ErrorKind::Contract: return 2;
        case ErrorKind::Numeric: return 3;
        case ErrorKind::Io: return 4;
    }
    return 2;
}

KeyValueConfig merged_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
    KeyValueConfig kv =
        config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(config_path);
    for (const auto& o : overrides) kv.apply_override(o);
    validate_keys(kv);
    return kv;
}

std::vector<int> tokens_from_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_io("missing input file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    std::string text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    if (text.empty()) fail_dim("input file is empty: " + path);
    return tokenize(text);
}

struct TrainCli {
    std::string config_path, run_dir = "runs/last";
    std::vector<std::string> overrides;
};

void add_train_options(CLI::App* cmd, TrainCli& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--run-dir", args.run_dir, "output directory");
    cmd->add_option("--set", args.overrides, "config overrides, key=value");
}

int run_train_phase(const TrainCli& args, const std::string& phase) {
    KeyValueConfig kv = merged_config(args.config_path, args.overrides);
    if (!kv.has("train.phase")) kv.set("train.phase", phase);
    ArcConfig cfg = ArcConfig::from_kv(kv);
    // decoder stand-in LM training rides under the pretrain subcommand
    const bool decoder_lm_ok = phase == "pretrain" && cfg.train.phase == Phase::DecoderLm;
    if (to_string(cfg.train.phase) != phase && !decoder_lm_ok)
        fail_config("config sets train.phase=" + to_string(cfg.train.phase) +
                    " but the subcommand is '" + phase + "'");
    ensure_run_dir(args.run_dir);
    write_snapshot(args.run_dir, kv);
    run_training_phase(cfg, args.run_dir);
    std::cout << "run written to " << args.run_dir << "\n";
    return 0;
}

int cmd_gen_data(std::uint64_t seed, int n_docs, int fact_density, const std::string& out) {
    auto docs = gen_corpus(seed, n_docs, fact_density);
    write_corpus(out, docs);
    std::cout << "wrote " << docs.size() << " documents to " << out << "\n";
    return 0;
}

int cmd_compress(const std::string& bundle_path, const std::string& in, int factor,
                 const std::string& decoder, const std::string& task, const std::string& out,
                 bool chunked, int chunk_len, int max_chunks) {
    ArcBundle bundle = ArcBundle::load(bundle_path);
    auto toks = tokens_from_file(in);
    CompressedContext ctx;
    if (chunked) {
        std::string warning;
        ctx = compress_chunks(bundle.arc, bundle.registry.at(decoder), toks, chunk_len, factor,
                              max_chunks, &warning);
        if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
    } else {
        ctx = compress(bundle.arc, bundle.registry.at(decoder), toks, factor,
                       task_token_from_string(task));
    }
    write_context(out, ctx);
    std::cout << "compressed " << ctx.source_token_count << " tokens into " << ctx.vectors.rows()
              << " vectors (realized factor " << ctx.realized_factor() << ") -> " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& bundle_path, const std::string& corpus, const std::string& decoder,
             EvalSpec spec, const std::string& mode, double heldout_frac,
             const std::string& out_csv) {
    ArcBundle bundle = ArcBundle::load(bundle_path);
    if (mode == "compressed")
        spec.mode = DocMode::Compressed;
    else if (mode == "openbook")
        spec.mode = DocMode::OpenBook;
    else if (mode == "closedbook")
        spec.mode = DocMode::ClosedBook;
    else
        fail_config("unknown eval mode '" + mode + "' (compressed, openbook, closedbook)");
    auto docs = read_corpus(corpus);
    EvalOutcome r = run_eval(bundle, decoder, docs, heldout_frac, spec);
    const char* metric_name = spec.metric == "qa"      ? "em"
                              : spec.metric == "recon" ? "token_accuracy"
                                                       : "ppl";
    std::cout << spec.metric << " (" << mode << ", x=" << spec.x << ", k=" << spec.k_shot
              << "): " << r.value << "  realized_pf=" << r.realized_pf << "  n=" << r.n_items
              << "\n";
    if (!out_csv.empty()) {
        std::ofstream os(out_csv);
        write_results_header(os);
        write_results_row(os, {"synthqa-" + mode, spec.x, spec.k_shot, metric_name, r.value,
                               r.n_items, spec.seed});
    }
    return 0;
}

int cmd_flops(std::int64_t s, std::int64_t d, std::int64_t layers, std::int64_t vocab, int x,
              double p, double ffn_const, std::int64_t enc_d, std::int64_t enc_layers,
              const std::string& csv) {
    cost::CostConfig cfg;
    cfg.s = s;
    cfg.d = d;
    cfg.n_layers = layers;
    cfg.vocab = vocab;
    cfg.x = x;
    cfg.p = p;
    cfg.ffn_const = ffn_const;
    const double lin = cost::relative_cost(p, x, cost::Regime::TokenDominatedByD);
    const double quad = cost::relative_cost(p, x, cost::Regime::TokenDominatedByS);
    std::printf("prefill FLOPs (raw decoder, s=%lld): %lld\n", (long long)s,
                (long long)cost::prefill_flops(cfg));
    std::printf("compressed pipeline (encoder d=%lld x%lld layers + decoder at s/x): %lld\n",
                (long long)enc_d, (long long)enc_layers,
                (long long)cost::compressed_prefill_flops(cfg, enc_d, enc_layers));
    std::printf("relative cost, d >> s regime:  p + 1/x      = %.4f  (%.2fx smaller)\n", lin,
                1.0 / lin);
    std::printf("relative cost, d << s regime:  sqrt(p)+1/x^2 = %.4f  (%.2fx smaller)\n", quad,
                1.0 / quad);
    if (!csv.empty()) {
        auto rows = cost::sweep(cfg, enc_d, enc_layers, {s / 4, s / 2, s, 2 * s},
                                {1, 2, 4, 8, 16});
        std::ofstream os(csv);
        cost::write_sweep_csv(os, rows);
        std::cout << "sweep written to " << csv << "\n";
    }
    return 0;
}

int cmd_pq_train(const std::string& bundle_path, const std::string& corpus,
                 const std::string& decoder, int x, int m, int k, int iters, std::uint64_t seed,
                 int n_docs, const std::string& out) {
    ArcBundle bundle = ArcBundle::load(bundle_path);
    auto docs = read_corpus(corpus);
    if (n_docs > 0 && int(docs.size()) > n_docs) docs.resize(std::size_t(n_docs));
    std::vector<QaItem> items;
    Rng rng(sub_seed(seed, "pq.items"));
    for (const auto& d : docs) items.push_back(qa_from_doc(d, rng));
    EvalBundle eb{&bundle.arc, &bundle.registry, decoder};
    int dim = 0;
    auto vectors = pq::collect_bottleneck_vectors(eb, items, x, &dim);
    std::vector<double> trace;
    bool degenerate = false;
    pq::PQCodebook cb = pq::train_pq(vectors, dim, m, k, iters, seed, &trace, &degenerate);
    if (degenerate) std::cerr << "warning: fewer distinct sub-vectors than centroids\n";
    pq::write_codebook(out, cb);
    std::cout << "trained " << m << "x" << k << " codebook over " << cb.trained_on
              << " vectors (dim " << dim << ", " << cb.bits_per_dim()
              << " bits/dim, final objective " << (trace.empty() ? 0.0 : trace.back()) << ") -> "
              << out << "\n";
    return 0;
}

int cmd_pq_encode(const std::string& bundle_path, const std::string& cb_path,
                  const std::string& decoder, const std::string& in, int x,
                  const std::string& out) {
    ArcBundle bundle = ArcBundle::load(bundle_path);
    pq::PQCodebook cb = pq::read_codebook(cb_path);
    auto toks = tokens_from_file(in);
    NoGradGuard ng;
    Tensor z = bottleneck_rows(bundle.arc, bundle.registry.at(decoder).projector, toks, x);
    if (z.cols() != cb.dim()) fail_dim("codebook dim does not match the bundle bottleneck");
    std::vector<std::uint32_t> codes;
    for (int r = 0; r < z.rows(); ++r) {
        auto row_codes = pq::encode(
            std::span<const float>(z.data().data() + std::size_t(r) * cb.dim(),
                                   std::size_t(cb.dim())),
            cb);
        codes.insert(codes.end(), row_codes.begin(), row_codes.end());
    }
    auto packed = pq::pack_codes(codes, cb.bits_per_code());
    std::ofstream os(out, std::ios::binary);
    std::int32_t head[2] = {z.rows(), cb.bits_per_code()};
    os.write(reinterpret_cast<const char*>(head), sizeof(head));
    os.write(reinterpret_cast<const char*>(packed.data()), std::streamsize(packed.size()));
    if (!os) fail_io("cannot write codes: " + out);
    std::cout << "encoded " << z.rows() << " vectors (" << packed.size() + sizeof(head)
              << " bytes) -> " << out << "\n";
    return 0;
}

int cmd_pq_report(std::int64_t tokens, int x, int d_b, double bits_per_dim) {
    const std::int64_t bytes = pq::memory_report_bytes(tokens, x, d_b, bits_per_dim);
    std::printf("%lld source tokens at x=%d, d_b=%d, %.3g bits/dim -> %lld bytes (%.3f MiB)\n",
                (long long)tokens, x, d_b, bits_per_dim, (long long)bytes,
                double(bytes) / (1024.0 * 1024.0));
    return 0;
}

int cmd_inspect(const std::string& path) {
    Checkpoint ckpt = Checkpoint::read(path);
    std::map<std::string, std::size_t> sections;
    std::size_t total = 0;
    for (const auto& e : ckpt.entries()) {
        const auto dot = e.name.find('.', e.name.find('.') + 1);
        sections[e.name.substr(0, dot)] += e.numel();
        total += e.numel();
    }
    std::size_t sum = 0;
    for (const auto& [name, count] : sections) {
        std::printf("%-24s %12zu\n", name.c_str(), count);
        sum += count;
    }
    std::printf("%-24s %12zu\n", "total", total);
    if (sum != total) fail_contract("inspect: section sums do not add up");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale context compression pipeline"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
    std::uint64_t gen_seed = 0;
    int gen_docs = 4000, gen_density = 3;
    std::string gen_out = "corpus.tsv";
    gen->add_option("--seed", gen_seed);
    gen->add_option("--n-docs", gen_docs);
    gen->add_option("--fact-density", gen_density);
    gen->add_option("--out", gen_out);

    // training phases
    TrainCli pretrain_args, finetune_args, adapt_args;
    auto* pre = app.add_subcommand("pretrain", "alternating reconstruction/continuation training");
    add_train_options(pre, pretrain_args);
    auto* fine = app.add_subcommand("finetune", "masked few-shot fine-tuning");
    add_train_options(fine, finetune_args);
    auto* adapt = app.add_subcommand("adapt", "projector-only adaptation to a new decoder");
    add_train_options(adapt, adapt_args);
    std::string adapt_new_decoder;
    adapt->add_option("--new-decoder", adapt_new_decoder, "decoder id to adapt to");

    // compress
    auto* comp = app.add_subcommand("compress", "compress a text file into context vectors");
    std::string comp_bundle, comp_in, comp_decoder = "A", comp_task = "cont", comp_out = "ctx.bin";
    int comp_factor = 4, comp_chunk_len = 64, comp_max_chunks = 32;
    bool comp_chunked = false;
    comp->add_option("--bundle", comp_bundle)->required();
    comp->add_option("--in", comp_in)->required();
    comp->add_option("--factor", comp_factor);
    comp->add_option("--decoder", comp_decoder);
    comp->add_option("--task", comp_task);
    comp->add_option("--out", comp_out);
    comp->add_flag("--chunked", comp_chunked, "chunk-parallel long-context mode");
    comp->add_option("--chunk-len", comp_chunk_len);
    comp->add_option("--max-chunks", comp_max_chunks);

    // eval
    auto* ev = app.add_subcommand("eval", "score a bundle on the synthetic benchmark");
    std::string ev_bundle, ev_corpus = "corpus.tsv", ev_decoder = "A", ev_mode = "compressed";
    std::string ev_metric = "qa", ev_csv;
    EvalSpec ev_spec;
    double ev_heldout = 0.1;
    ev->add_option("--bundle", ev_bundle)->required();
    ev->add_option("--corpus", ev_corpus);
    ev->add_option("--decoder", ev_decoder);
    ev->add_option("--metric", ev_metric, "qa | recon | ppl");
    ev->add_option("--mode", ev_mode, "compressed | openbook | closedbook");
    ev->add_option("--x", ev_spec.x);
    ev->add_option("--k-shot", ev_spec.k_shot);
    ev->add_option("--n-items", ev_spec.n_items);
    ev->add_option("--max-new", ev_spec.max_new);
    ev->add_option("--seed", ev_spec.seed);
    ev->add_option("--heldout-frac", ev_heldout);
    ev->add_option("--out", ev_csv, "results CSV path");

    // flops
    auto* fl = app.add_subcommand("flops", "analytic prefill cost model");
    std::int64_t fl_s = 4096, fl_d = 4096, fl_layers = 32, fl_vocab = 128000;
    std::int64_t fl_enc_d = 3072, fl_enc_layers = 26;
    int fl_x = 4;
    double fl_p = 3.0 / 7.0, fl_ffn = 8.0;
    std::string fl_csv;
    fl->add_option("--s", fl_s);
    fl->add_option("--d", fl_d);
    fl->add_option("--layers", fl_layers);
    fl->add_option("--vocab", fl_vocab);
    fl->add_option("--x", fl_x);
    fl->add_option("--p", fl_p);
    fl->add_option("--ffn-const", fl_ffn);
    fl->add_option("--enc-d", fl_enc_d);
    fl->add_option("--enc-layers", fl_enc_layers);
    fl->add_option("--csv", fl_csv);

    // pq
    auto* pq_cmd = app.add_subcommand("pq", "product quantization of compressed contexts");
    pq_cmd->require_subcommand(1);
    auto* pq_train = pq_cmd->add_subcommand("train", "train codebooks on bottleneck vectors");
    std::string pqt_bundle, pqt_corpus = "corpus.tsv", pqt_decoder = "A", pqt_out = "codebook.pq";
    int pqt_x = 4, pqt_m = 12, pqt_k = 16, pqt_iters = 25, pqt_docs = 256;
    std::uint64_t pqt_seed = 0;
    pq_train->add_option("--bundle", pqt_bundle)->required();
    pq_train->add_option("--corpus", pqt_corpus);
    pq_train->add_option("--decoder", pqt_decoder);
    pq_train->add_option("--x", pqt_x);
    pq_train->add_option("--m", pqt_m);
    pq_train->add_option("--k", pqt_k);
    pq_train->add_option("--iters", pqt_iters);
    pq_train->add_option("--seed", pqt_seed);
    pq_train->add_option("--n-docs", pqt_docs);
    pq_train->add_option("--out", pqt_out);

    auto* pq_encode = pq_cmd->add_subcommand("encode", "encode one document's vectors");
    std::string pqe_bundle, pqe_cb, pqe_decoder = "A", pqe_in, pqe_out = "codes.bin";
    int pqe_x = 4;
    pq_encode->add_option("--bundle", pqe_bundle)->required();
    pq_encode->add_option("--codebook", pqe_cb)->required();
    pq_encode->add_option("--decoder", pqe_decoder);
    pq_encode->add_option("--in", pqe_in)->required();
    pq_encode->add_option("--x", pqe_x);
    pq_encode->add_option("--out", pqe_out);

    auto* pq_report = pq_cmd->add_subcommand("report", "storage accounting");
    std::int64_t pqr_tokens = 1000000;
    int pqr_x = 4, pqr_db = 48;
    double pqr_bits = 4.0;
    pq_report->add_option("--tokens", pqr_tokens);
    pq_report->add_option("--x", pqr_x);
    pq_report->add_option("--d-b", pqr_db);
    pq_report->add_option("--bits-per-dim", pqr_bits);

    // inspect
    auto* ins = app.add_subcommand("inspect", "print per-section parameter counts");
    std::string ins_path;
    ins->add_option("ckpt", ins_path, "checkpoint path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_seed, gen_docs, gen_density, gen_out);
        if (pre->parsed()) return run_train_phase(pretrain_args, "pretrain");
        if (fine->parsed()) return run_train_phase(finetune_args, "finetune");
        if (adapt->parsed()) {
            if (!adapt_new_decoder.empty())
                adapt_args.overrides.push_back("train.adapt_decoder=" + adapt_new_decoder);
            return run_train_phase(adapt_args, "adapt");
        }
        if (comp->parsed())
            return cmd_compress(comp_bundle, comp_in, comp_factor, comp_decoder, comp_task,
                                comp_out, comp_chunked, comp_chunk_len, comp_max_chunks);
        if (ev->parsed()) {
            ev_spec.metric = ev_metric;
            return cmd_eval(ev_bundle, ev_corpus, ev_decoder, ev_spec, ev_mode, ev_heldout, ev_csv);
        }
        if (fl->parsed())
            return cmd_flops(fl_s, fl_d, fl_layers, fl_vocab, fl_x, fl_p, fl_ffn, fl_enc_d,
                             fl_enc_layers, fl_csv);
        if (pq_cmd->parsed()) {
            if (pq_train->parsed())
                return cmd_pq_train(pqt_bundle, pqt_corpus, pqt_decoder, pqt_x, pqt_m, pqt_k,
                                    pqt_iters, pqt_seed, pqt_docs, pqt_out);
            if (pq_encode->parsed())
                return cmd_pq_encode(pqe_bundle, pqe_cb, pqe_decoder, pqe_in, pqe_x, pqe_out);
            if (pq_report->parsed()) return cmd_pq_report(pqr_tokens, pqr_x, pqr_db, pqr_bits);
        }
        if (ins->parsed()) return cmd_inspect(ins_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
