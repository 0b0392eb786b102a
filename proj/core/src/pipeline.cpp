#include "arc/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "arc/checkpoint.hpp"

namespace arc {

std::vector<SyntheticDoc> load_or_gen_corpus(const ArcConfig& cfg) {
    if (!cfg.corpus_path.empty() && std::filesystem::exists(cfg.corpus_path))
        return read_corpus(cfg.corpus_path);
    return gen_corpus(sub_seed(cfg.seed, "corpus"), cfg.n_docs, cfg.fact_density);
}

ArcBundle build_bundle(const ArcConfig& cfg) {
    if (!cfg.init_bundle.empty()) {
        ArcBundle bundle = ArcBundle::load(cfg.init_bundle);
        // register decoders that are new to this bundle (adaptation path)
        Rng proj_rng(sub_seed(cfg.seed, "init.projector"));
        for (const auto& spec : cfg.decoders) {
            if (bundle.registry.has(spec.id)) continue;
            if (spec.ckpt.empty())
                fail_config("decoder '" + spec.id + "' is new to the bundle and has no ckpt");
            Checkpoint ckpt = Checkpoint::read(spec.ckpt);
            ModelParams dec = ModelParams::load_from(ckpt, "decoder." + spec.id + ".");
            dec.name = spec.id;
            bundle.registry.add_decoder(std::move(dec), bundle.arc.d_model(), bundle.d_bottleneck,
                                        proj_rng);
        }
        return bundle;
    }

    ArcBundle bundle;
    Rng enc_rng(sub_seed(cfg.seed, "init.encoder"));
    bundle.arc = make_arc_encoder(cfg.enc, enc_rng);
    bundle.d_bottleneck = cfg.d_bottleneck;
    Rng proj_rng(sub_seed(cfg.seed, "init.projector"));
    for (const auto& spec : cfg.decoders) {
        if (spec.ckpt.empty())
            fail_config("decoder '" + spec.id + "' needs a stand-in checkpoint (decoders." +
                        spec.id + ".ckpt); train one with phase=decoder_lm");
        Checkpoint ckpt = Checkpoint::read(spec.ckpt);
        ModelParams dec = ModelParams::load_from(ckpt, "decoder." + spec.id + ".");
        dec.name = spec.id;
        bundle.registry.add_decoder(std::move(dec), cfg.enc.d_model, cfg.d_bottleneck, proj_rng);
    }
    return bundle;
}

void run_decoder_lm(const ArcConfig& cfg, const std::string& run_dir) {
    ensure_run_dir(run_dir);
    auto docs = load_or_gen_corpus(cfg);
    std::vector<SyntheticDoc> train, heldout;
    split_corpus(docs, cfg.heldout_frac, train, heldout);
    for (const auto& spec : cfg.decoders) {
        BlockConfig block;
        block.d_model = spec.d_model;
        block.n_heads = spec.n_heads;
        block.d_ffn = default_ffn_dim(spec.d_model, spec.n_heads);
        block.causal = true;
        std::ofstream csv(run_file(run_dir, "metrics_decoder_" + spec.id + ".csv"));
        ModelParams dec =
            train_decoder_lm(spec.id, block, spec.n_layers, kVocabSize, train, cfg.train, &csv);
        Checkpoint ckpt;
        dec.save_into(ckpt, "decoder." + spec.id + ".");
        ckpt.write(run_file(run_dir, "decoder_" + spec.id + ".ckpt"));
    }
}

void run_training_phase(const ArcConfig& cfg, const std::string& run_dir) {
    ensure_run_dir(run_dir);
    if (cfg.train.phase == Phase::DecoderLm) {
        run_decoder_lm(cfg, run_dir);
        return;
    }
    auto docs = load_or_gen_corpus(cfg);
    std::vector<SyntheticDoc> train, heldout;
    split_corpus(docs, cfg.heldout_frac, train, heldout);
    ArcBundle bundle = build_bundle(cfg);
    Trainer trainer(bundle, train, cfg.train);
    std::ofstream csv(run_file(run_dir, "metrics.csv"));
    trainer.run(&csv);
    bundle.save(run_file(run_dir, "bundle.ckpt"));
}

void eval_sets(const std::vector<SyntheticDoc>& docs, double heldout_frac, int n_items,
               int n_shots, std::uint64_t seed, std::vector<QaItem>& items,
               std::vector<QaItem>& shots) {
    std::vector<SyntheticDoc> train, heldout;
    split_corpus(docs, heldout_frac, train, heldout);
    if (heldout.empty() || train.empty()) fail_config("eval: corpus split left an empty side");
    Rng item_rng(sub_seed(seed, "eval.items"));
    items.clear();
    for (int i = 0; i < n_items; ++i) {
        const auto& doc = heldout[std::size_t(i) % heldout.size()];
        items.push_back(qa_from_doc(doc, item_rng));
    }
    // shots are fixed across all models and items
    Rng shot_rng(sub_seed(seed, "eval.shots"));
    shots.clear();
    for (int i = 0; i < n_shots; ++i) {
        const auto& doc = train[std::size_t(shot_rng.next_int(0, int(train.size()) - 1))];
        shots.push_back(qa_from_doc(doc, shot_rng));
    }
}

EvalOutcome run_eval(const ArcBundle& bundle, const std::string& decoder_id,
                     const std::vector<SyntheticDoc>& docs, double heldout_frac,
                     const EvalSpec& spec) {
    EvalBundle eb{&bundle.arc, &bundle.registry, decoder_id};
    EvalOutcome out;
    if (spec.metric == "qa") {
        std::vector<QaItem> items, shots;
        eval_sets(docs, heldout_frac, spec.n_items, std::max(spec.k_shot, 1), spec.seed, items,
                  shots);
        QaEvalResult r = eval_qa(eb, items, shots, spec.k_shot, spec.x, spec.mode, spec.max_new);
        out.value = r.em;
        out.realized_pf = r.realized_pf;
        out.n_items = r.n_items;
        return out;
    }
    // sequence metrics over held-out corpus slices
    std::vector<SyntheticDoc> train, heldout;
    split_corpus(docs, heldout_frac, train, heldout);
    Rng rng(sub_seed(spec.seed, "eval.seqs"));
    std::vector<std::vector<int>> seqs;
    for (int i = 0; i < spec.n_items; ++i) seqs.push_back(corpus_slice(heldout, rng, 32, 32));
    if (spec.metric == "recon") {
        ReconResult r = eval_reconstruction(eb, seqs, spec.x);
        out.value = r.token_accuracy;
        out.n_items = int(seqs.size());
        return out;
    }
    if (spec.metric == "ppl") {
        out.value = eval_ppl(eb, seqs, spec.x, 0.5);
        out.n_items = int(seqs.size());
        return out;
    }
    fail_config("unknown eval metric '" + spec.metric + "' (qa, recon, ppl)");
}

}  // namespace arc
