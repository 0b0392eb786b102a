#include "arc/evalsuite.hpp"

#include <cctype>
#include <cmath>
#include <ostream>

namespace arc {

std::string normalize_answer(std::string_view s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        if (std::ispunct(static_cast<unsigned char>(c))) continue;
        lowered.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    }
    std::vector<std::string> words;
    std::string cur;
    for (char c : lowered) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    std::size_t begin = 0;
    if (!words.empty() && (words[0] == "a" || words[0] == "an" || words[0] == "the")) begin = 1;
    std::string out;
    for (std::size_t i = begin; i < words.size(); ++i) {
        if (i > begin) out.push_back(' ');
        out += words[i];
    }
    return out;
}

int exact_match(std::string_view pred, const std::vector<std::string>& golds) {
    const std::string p = normalize_answer(pred);
    for (const auto& g : golds)
        if (p == normalize_answer(g)) return 1;
    return 0;
}

namespace {

const DecoderEntry& entry_of(const EvalBundle& b) {
    if (!b.arc || !b.registry) fail_contract("eval: bundle is not wired");
    return b.registry->at(b.decoder_id);
}

struct PromptRows {
    Tensor rows;
    long compressed_rows = 0;
    long source_tokens = 0;
};

PromptRows assemble_prompt(const EvalBundle& b, const std::vector<Segment>& segments, int x) {
    const DecoderEntry& entry = entry_of(b);
    PromptRows out;
    std::vector<Tensor> parts;
    for (const auto& seg : segments) {
        if (seg.kind == Segment::Kind::Text) {
            parts.push_back(embed_tokens(entry.decoder, seg.tokens));
        } else {
            CompressedContext ctx = compress(*b.arc, entry, seg.tokens, x, seg.task);
            out.compressed_rows += ctx.content_rows();
            out.source_tokens += ctx.source_token_count;
            parts.push_back(ctx.vectors);
        }
    }
    out.rows = parts.size() == 1 ? parts[0] : concat_rows(parts);
    return out;
}

std::vector<FewshotExample> to_examples(const std::vector<QaItem>& items) {
    std::vector<FewshotExample> out;
    out.reserve(items.size());
    for (const auto& it : items) {
        FewshotExample e;
        e.doc_tokens = tokenize(it.doc.text);
        e.question = it.question;
        e.answer = it.answer;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

QaEvalResult eval_qa(const EvalBundle& bundle, const std::vector<QaItem>& items,
                     const std::vector<QaItem>& shots, int k_shot, int x, DocMode mode,
                     int max_new) {
    if (items.empty()) fail_contract("eval_qa: empty dataset");
    if (int(shots.size()) < k_shot) fail_contract("eval_qa: fewer shot examples than k_shot");
    const DecoderEntry& entry = entry_of(bundle);
    const auto shot_examples = to_examples(shots);
    std::span<const FewshotExample> shot_span(shot_examples.data(), std::size_t(k_shot));

    NoGradGuard ng;
    long hits = 0;
    long compressed_rows = 0, source_tokens = 0;
    for (const auto& item : items) {
        auto segments =
            render_fewshot_prompt(shot_span, tokenize(item.doc.text), item.question, mode);
        PromptRows prompt = assemble_prompt(bundle, segments, x);
        compressed_rows += prompt.compressed_rows;
        source_tokens += prompt.source_tokens;
        // stop at the first newline: answers are single lines in the template
        std::vector<int> gen = generate_greedy(entry.decoder, prompt.rows, max_new, int('\n'));
        hits += exact_match(detokenize(gen), {item.answer});
    }
    QaEvalResult r;
    r.em = 100.0 * double(hits) / double(items.size());
    r.realized_pf = compressed_rows > 0 ? double(source_tokens) / double(compressed_rows) : 0.0;
    r.n_items = int(items.size());
    return r;
}

ReconResult eval_reconstruction(const EvalBundle& bundle, const std::vector<std::vector<int>>& seqs,
                                int x) {
    if (seqs.empty()) fail_contract("eval_reconstruction: empty dataset");
    const DecoderEntry& entry = entry_of(bundle);
    NoGradGuard ng;
    long correct = 0, total = 0, em = 0;
    for (const auto& seq : seqs) {
        Tensor comp = compress_rows(*bundle.arc, entry, seq, x, TaskToken::Rec);
        const int bos[] = {kBosId};
        Tensor prefix = concat_rows({comp, embed_tokens(entry.decoder, bos)});
        std::vector<int> gen = generate_greedy(entry.decoder, prefix, int(seq.size()), /*eos_id=*/-1);
        long ok = 0;
        for (std::size_t i = 0; i < seq.size(); ++i)
            if (i < gen.size() && gen[i] == seq[i]) ++ok;
        correct += ok;
        total += long(seq.size());
        em += (ok == long(seq.size())) ? 1 : 0;
    }
    ReconResult r;
    r.token_accuracy = double(correct) / double(total);
    r.sequence_em = double(em) / double(seqs.size());
    return r;
}

double eval_ppl(const EvalBundle& bundle, const std::vector<std::vector<int>>& seqs, int x,
                double split_frac) {
    if (seqs.empty()) fail_contract("eval_ppl: empty dataset");
    const DecoderEntry& entry = entry_of(bundle);
    NoGradGuard ng;
    double nll = 0.0;
    long count = 0;
    for (const auto& seq : seqs) {
        const int n = int(seq.size());
        int split = int(std::lround(split_frac * n));
        split = std::max(1, std::min(split, n - 1));
        TrainingSample s = build_continuation(seq, x, split, /*prefix_len=*/0);
        std::vector<Tensor> parts;
        for (const auto& seg : s.input) {
            if (seg.kind == Segment::Kind::Text)
                parts.push_back(embed_tokens(entry.decoder, seg.tokens));
            else
                parts.push_back(compress_rows(*bundle.arc, entry, seg.tokens, x, seg.task));
        }
        Tensor rows = parts.size() == 1 ? parts[0] : concat_rows(parts);
        ForwardResult r = forward_stack(rows, entry.decoder);
        Tensor loss = cross_entropy_masked(r.logits, s.targets, s.loss_mask);
        long active = 0;
        for (auto m : s.loss_mask) active += m ? 1 : 0;
        nll += double(loss.item()) * double(active);
        count += active;
    }
    return std::exp(nll / double(count));
}

void write_results_header(std::ostream& os) {
    os << "benchmark,x,k_shot,metric,value,n_items,seed\n";
}

void write_results_row(std::ostream& os, const ResultRow& r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", r.value);
    os << r.benchmark << ',' << r.x << ',' << r.k_shot << ',' << r.metric << ',' << buf << ','
       << r.n_items << ',' << r.seed << '\n';
}

}  // namespace arc
