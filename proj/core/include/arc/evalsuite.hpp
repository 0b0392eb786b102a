#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "arc/arc_encoder.hpp"
#include "arc/samples.hpp"

namespace arc {

// lowercase, strip punctuation, collapse whitespace, drop leading articles.
std::string normalize_answer(std::string_view s);
// 1 iff the normalized prediction equals any normalized gold.
int exact_match(std::string_view pred, const std::vector<std::string>& golds);

struct EvalBundle {
    const ArcEncoder* arc = nullptr;
    const DecoderRegistry* registry = nullptr;
    std::string decoder_id;
};

struct QaEvalResult {
    double em = 0.0;           // percentage
    double realized_pf = 0.0;  // mean source tokens per compressed row
    int n_items = 0;
};

// k-shot QA over the fixed evaluation template; every Document slot is
// compressed at factor x (or fed raw/omitted for the open-/closed-book
// baselines). Greedy decoding stops at the first newline. Shot examples are
// fixed across the whole run and count toward compression stats.
QaEvalResult eval_qa(const EvalBundle& bundle, const std::vector<QaItem>& items,
                     const std::vector<QaItem>& shots, int k_shot, int x, DocMode mode,
                     int max_new = 16);

struct ReconResult {
    double token_accuracy = 0.0;
    double sequence_em = 0.0;
};

// Greedy decode from [compressed, <Rec>, BOS]; per-token accuracy against the
// source plus sequence-level exact match.
ReconResult eval_reconstruction(const EvalBundle& bundle, const std::vector<std::vector<int>>& seqs,
                                int x);

// exp(mean masked CE) over continuation positions given a compressed prefix
// (split_frac of each sequence is compressed, the rest is scored).
double eval_ppl(const EvalBundle& bundle, const std::vector<std::vector<int>>& seqs, int x,
                double split_frac);

// Results row: benchmark,x,k_shot,metric,value,n_items,seed
struct ResultRow {
    std::string benchmark;
    int x = 0;
    int k_shot = 0;
    std::string metric;
    double value = 0.0;
    int n_items = 0;
    std::uint64_t seed = 0;
};
void write_results_header(std::ostream& os);
void write_results_row(std::ostream& os, const ResultRow& r);

}  // namespace arc
