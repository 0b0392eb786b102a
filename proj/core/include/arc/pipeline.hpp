#pragma once

#include <string>
#include <vector>

#include "arc/config.hpp"
#include "arc/evalsuite.hpp"
#include "arc/training.hpp"

namespace arc {

// End-to-end drivers behind the CLI subcommands. Everything is seeded from
// the config's root seed through named streams, so a run directory snapshot
// replays byte-identically.

std::vector<SyntheticDoc> load_or_gen_corpus(const ArcConfig& cfg);

// Fresh bundle: seeded encoder + projectors, decoders loaded from their
// stand-in checkpoints and frozen. With cfg.init_bundle set, loads that
// bundle instead (fine-tuning / adaptation path) and registers any decoders
// that are new to it.
ArcBundle build_bundle(const ArcConfig& cfg);

// Trains every decoder in cfg.decoders as a byte LM and writes
// decoder_<id>.ckpt files plus per-decoder metrics CSVs into run_dir.
void run_decoder_lm(const ArcConfig& cfg, const std::string& run_dir);

// Pretrain / fine-tune / adapt per cfg.train.phase; writes metrics.csv and
// bundle.ckpt into run_dir.
void run_training_phase(const ArcConfig& cfg, const std::string& run_dir);

struct EvalSpec {
    std::string metric = "qa";  // qa | recon | ppl
    DocMode mode = DocMode::Compressed;
    int x = 4;
    int k_shot = 3;
    int n_items = 200;
    int max_new = 12;
    std::uint64_t seed = 0;
};

struct EvalOutcome {
    double value = 0.0;        // EM percent, token accuracy, or perplexity
    double realized_pf = 0.0;
    int n_items = 0;
};

// Shot examples are drawn once from the train split with the eval seed and
// held fixed; items come from the held-out split.
EvalOutcome run_eval(const ArcBundle& bundle, const std::string& decoder_id,
                     const std::vector<SyntheticDoc>& docs, double heldout_frac,
                     const EvalSpec& spec);

// Fixed seeded QA sets shared by evaluation paths.
void eval_sets(const std::vector<SyntheticDoc>& docs, double heldout_frac, int n_items,
               int n_shots, std::uint64_t seed, std::vector<QaItem>& items,
               std::vector<QaItem>& shots);

}  // namespace arc
