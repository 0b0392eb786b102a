#include "arc/samples.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "arc/rng.hpp"

namespace arc {

std::vector<int> tokenize(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(int(c));
    return out;
}

std::string detokenize(std::span<const int> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens)
        if (t >= 0 && t < 256) out.push_back(char(static_cast<unsigned char>(t)));
    return out;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

namespace {

const std::array<const char*, 8> kNameHeads = {"ka", "mi", "to", "ra", "ne", "so", "lu", "ve"};
const std::array<const char*, 6> kNameTails = {"rel", "mos", "dan", "vik", "tas", "rin"};

struct RelationSpec {
    const char* name;
    std::array<const char*, 8> values;
};

// Statements and questions share the literal key phrase "the <rel> of <entity>",
// so answering open-book is a clean match-and-continue pattern; the value
// itself stays unpredictable without the document.
const std::array<RelationSpec, 8> kRelations = {{
    {"color", {"red", "blue", "green", "pink", "gray", "teal", "ivory", "amber"}},
    {"city", {"paris", "oslo", "cairo", "lima", "rome", "kyoto", "bonn", "quito"}},
    {"pet", {"cat", "dog", "fox", "owl", "hen", "crab", "mole", "toad"}},
    {"food", {"rice", "corn", "kale", "figs", "oats", "plums", "bread", "pears"}},
    {"drink", {"tea", "milk", "cider", "juice", "cocoa", "water", "mead", "punch"}},
    {"sport", {"chess", "golf", "rugby", "tennis", "squash", "darts", "polo", "judo"}},
    {"metal", {"iron", "zinc", "tin", "lead", "brass", "steel", "cobalt", "nickel"}},
    {"tree", {"oak", "pine", "elm", "fir", "birch", "maple", "cedar", "aspen"}},
}};

std::string statement_text(const Fact& fact) {
    return "the " + fact.relation + " of " + fact.entity + " is " + fact.value + ".";
}

std::string question_text(const Fact& fact) {
    return "what is the " + fact.relation + " of " + fact.entity + "?";
}

std::string entity_name(int idx) {
    return std::string(kNameHeads[std::size_t(idx) % kNameHeads.size()]) +
           kNameTails[std::size_t(idx) / kNameHeads.size() % kNameTails.size()];
}

constexpr int kNumEntities = int(kNameHeads.size() * kNameTails.size());

SyntheticDoc make_doc(int id, std::uint64_t doc_seed, int fact_density) {
    Rng rng(doc_seed);
    SyntheticDoc doc;
    doc.id = id;
    doc.seed = doc_seed;
    std::vector<int> entity_ids(static_cast<std::size_t>(kNumEntities));
    for (int i = 0; i < kNumEntities; ++i) entity_ids[std::size_t(i)] = i;
    rng.shuffle(entity_ids);
    const int n_facts = std::min(fact_density, kNumEntities);
    for (int f = 0; f < n_facts; ++f) {
        const RelationSpec& rel = kRelations[std::size_t(rng.next_int(0, int(kRelations.size()) - 1))];
        Fact fact;
        fact.entity = entity_name(entity_ids[std::size_t(f)]);
        fact.relation = rel.name;
        fact.value = rel.values[std::size_t(rng.next_int(0, int(rel.values.size()) - 1))];
        doc.facts.push_back(std::move(fact));
    }
    std::string text;
    for (std::size_t f = 0; f < doc.facts.size(); ++f) {
        if (f) text += ' ';
        text += statement_text(doc.facts[f]);
    }
    doc.text = std::move(text);
    return doc;
}

}  // namespace

std::vector<SyntheticDoc> gen_corpus(std::uint64_t seed, int n_docs, int fact_density) {
    if (n_docs < 1 || fact_density < 1) fail_config("gen_corpus: n_docs and fact_density must be >= 1");
    std::vector<SyntheticDoc> docs;
    docs.reserve(std::size_t(n_docs));
    for (int i = 0; i < n_docs; ++i)
        docs.push_back(make_doc(i, sub_seed(seed, "doc." + std::to_string(i)), fact_density));
    return docs;
}

QaItem qa_from_doc(const SyntheticDoc& doc, Rng& rng) {
    if (doc.facts.empty()) fail_contract("qa_from_doc: document carries no facts");
    const Fact& fact = doc.facts[std::size_t(rng.next_int(0, int(doc.facts.size()) - 1))];
    QaItem item;
    item.doc = doc;
    item.question = question_text(fact);
    item.answer = fact.value;
    return item;
}

QaItem gen_qa(std::uint64_t seed) {
    Rng rng(sub_seed(seed, "qa"));
    SyntheticDoc doc = make_doc(0, sub_seed(seed, "qa.doc"), 3);
    return qa_from_doc(doc, rng);
}

void write_corpus(const std::string& path, const std::vector<SyntheticDoc>& docs) {
    std::ofstream os(path);
    if (!os) fail_io("cannot open corpus for writing: " + path);
    for (const auto& d : docs) {
        os << d.id << '\t' << d.text << '\t';
        for (std::size_t f = 0; f < d.facts.size(); ++f) {
            if (f) os << ';';
            os << d.facts[f].entity << ',' << d.facts[f].relation << ',' << d.facts[f].value;
        }
        os << '\n';
    }
    if (!os) fail_io("corpus write failed: " + path);
}

std::vector<SyntheticDoc> read_corpus(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail_io("missing corpus file: " + path);
    std::vector<SyntheticDoc> docs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            fail_io("malformed corpus record: " + line.substr(0, 40));
        SyntheticDoc d;
        d.id = std::stoi(line.substr(0, t1));
        d.text = line.substr(t1 + 1, t2 - t1 - 1);
        std::stringstream facts(line.substr(t2 + 1));
        std::string triple;
        while (std::getline(facts, triple, ';')) {
            const auto c1 = triple.find(',');
            const auto c2 = triple.find(',', c1 + 1);
            d.facts.push_back({triple.substr(0, c1), triple.substr(c1 + 1, c2 - c1 - 1),
                               triple.substr(c2 + 1)});
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

// ---------------------------------------------------------------------------
// Sample assembly
// ---------------------------------------------------------------------------

namespace {

int compressed_rows(std::size_t span_len, int x, TaskToken task) {
    return int((span_len + std::size_t(x) - 1) / std::size_t(x)) + (task == TaskToken::None ? 0 : 1);
}

class SampleAssembler {
public:
    SampleAssembler(TrainingSample::Task task, int x) : x_(x) {
        s_.task = task;
        s_.factor = x;
    }

    void text(std::span<const int> toks) {
        if (toks.empty()) return;
        if (!s_.input.empty() && s_.input.back().kind == Segment::Kind::Text) {
            auto& dst = s_.input.back().tokens;
            dst.insert(dst.end(), toks.begin(), toks.end());
        } else {
            s_.input.push_back({Segment::Kind::Text, {toks.begin(), toks.end()}, TaskToken::None});
        }
        pos_ += int(toks.size());
    }
    void text(std::string_view str) {
        auto toks = tokenize(str);
        text(toks);
    }

    void compressed(std::span<const int> span, TaskToken task) {
        if (span.empty()) fail_contract("sample assembly: empty compressed span");
        s_.input.push_back({Segment::Kind::Compressed, {span.begin(), span.end()}, task});
        pos_ += compressed_rows(span.size(), x_, task);
    }

    // Teacher-forces `toks`: the prediction of toks[i] is scored at the
    // position preceding it, so the last token never enters the input.
    void teacher_text(std::span<const int> toks) {
        if (toks.empty()) return;
        if (pos_ == 0) fail_contract("sample assembly: teacher tokens need a preceding position");
        for (std::size_t i = 0; i < toks.size(); ++i)
            marks_.emplace_back(pos_ - 1 + int(i), toks[i]);
        if (toks.size() > 1) text(toks.subspan(0, toks.size() - 1));
    }

    int position() const { return pos_; }

    TrainingSample finish() {
        s_.targets.assign(std::size_t(pos_), -1);
        s_.loss_mask.assign(std::size_t(pos_), 0);
        for (auto [p, t] : marks_) {
            s_.targets[std::size_t(p)] = t;
            s_.loss_mask[std::size_t(p)] = 1;
        }
        return std::move(s_);
    }

private:
    TrainingSample s_;
    int x_;
    int pos_ = 0;
    std::vector<std::pair<int, int>> marks_;
};

void append_qa_block(SampleAssembler& a, const FewshotExample& ex, DocMode mode, bool first) {
    if (mode != DocMode::ClosedBook) {
        a.text(kDocPrefix);
        if (mode == DocMode::Compressed)
            a.compressed(ex.doc_tokens, TaskToken::Cont);
        else
            a.text(ex.doc_tokens);
        a.text(kQuestionPrefix);
    } else {
        a.text(first ? std::string_view("Question: ") : kQuestionPrefix.substr(1));
    }
    a.text(ex.question);
    a.text(kAnswerPrefix);
}

}  // namespace

int sample_input_length(const TrainingSample& s) {
    int n = 0;
    for (const auto& seg : s.input) {
        if (seg.kind == Segment::Kind::Text)
            n += int(seg.tokens.size());
        else
            n += compressed_rows(seg.tokens.size(), s.factor, seg.task);
    }
    return n;
}

TrainingSample build_reconstruction(std::span<const int> seq, int x) {
    if (seq.empty()) fail_contract("build_reconstruction: empty sequence");
    SampleAssembler a(TrainingSample::Task::Reconstruction, x);
    a.compressed(seq, TaskToken::Rec);
    const int bos[] = {kBosId};
    a.text(bos);
    a.teacher_text(seq);
    return a.finish();
}

TrainingSample build_continuation(std::span<const int> seq, int x, int split, int prefix_len) {
    const int n = int(seq.size());
    if (split <= 0 || split >= n) fail_contract("build_continuation: split must satisfy 0 < split < len");
    if (prefix_len < 0 || prefix_len >= split)
        fail_contract("build_continuation: prefix must leave a non-empty span to compress");
    SampleAssembler a(TrainingSample::Task::Continuation, x);
    if (prefix_len > 0) a.text(seq.subspan(0, std::size_t(prefix_len)));
    a.compressed(seq.subspan(std::size_t(prefix_len), std::size_t(split - prefix_len)),
                 TaskToken::Cont);
    a.teacher_text(seq.subspan(std::size_t(split)));
    return a.finish();
}

std::vector<Segment> render_fewshot_prompt(std::span<const FewshotExample> shots,
                                           const std::vector<int>& final_doc,
                                           const std::string& final_question, DocMode mode) {
    SampleAssembler a(TrainingSample::Task::Fewshot, 1);
    bool first = true;
    for (const auto& shot : shots) {
        append_qa_block(a, shot, mode, first);
        first = false;
        a.text(shot.answer);
        a.text(kBlockSep);
    }
    FewshotExample fin;
    fin.doc_tokens = final_doc;
    fin.question = final_question;
    append_qa_block(a, fin, mode, first);
    return a.finish().input;
}

TrainingSample build_fewshot(std::span<const FewshotExample> examples, int k, int x) {
    if (k < 1) fail_contract("build_fewshot: k must be >= 1");
    if (int(examples.size()) < k) fail_contract("build_fewshot: fewer examples than k");
    SampleAssembler a(TrainingSample::Task::Fewshot, x);
    bool first = true;
    for (int j = 0; j + 1 < k; ++j) {
        append_qa_block(a, examples[std::size_t(j)], DocMode::Compressed, first);
        first = false;
        a.text(examples[std::size_t(j)].answer);
        a.text(kBlockSep);
    }
    const FewshotExample& fin = examples[std::size_t(k - 1)];
    append_qa_block(a, fin, DocMode::Compressed, first);
    auto answer_toks = tokenize(fin.answer);
    a.teacher_text(answer_toks);
    return a.finish();
}

TrainingSample build_longcontext(std::span<const int> context, std::span<const int> target,
                                 int chunk_len, int x, TaskToken task) {
    if (context.empty() || target.empty()) fail_contract("build_longcontext: empty context or target");
    if (chunk_len < 1) fail_config("build_longcontext: chunk_len must be >= 1");
    SampleAssembler a(TrainingSample::Task::LongContext, x);
    a.text(kInstOpen);
    a.text(kInstTextPrefix);
    for (std::size_t off = 0; off < context.size(); off += std::size_t(chunk_len)) {
        const std::size_t len = std::min(std::size_t(chunk_len), context.size() - off);
        a.compressed(context.subspan(off, len), TaskToken::None);
    }
    std::string mid(task == TaskToken::Rec ? kInstRecInstruction : kInstContInstruction);
    mid += kInstClose;
    mid += (task == TaskToken::Rec ? kInstRecSuffix : kInstContSuffix);
    a.text(mid);
    a.teacher_text(target);
    TrainingSample s = a.finish();
    s.chunk_len = chunk_len;
    return s;
}

// ---------------------------------------------------------------------------
// Phase data sampling
// ---------------------------------------------------------------------------

std::vector<int> corpus_slice(const std::vector<SyntheticDoc>& docs, Rng& rng, int min_len,
                              int max_len) {
    if (docs.empty()) fail_contract("corpus_slice: empty corpus");
    const int target = rng.next_int(min_len, max_len);
    std::string text = docs[std::size_t(rng.next_int(0, int(docs.size()) - 1))].text;
    while (int(text.size()) < target) {
        text += ' ';
        text += docs[std::size_t(rng.next_int(0, int(docs.size()) - 1))].text;
    }
    text.resize(std::size_t(target));
    return tokenize(text);
}

FewshotExample fewshot_example_from(const SyntheticDoc& doc, Rng& rng) {
    QaItem qa = qa_from_doc(doc, rng);
    FewshotExample ex;
    ex.doc_tokens = tokenize(doc.text);
    ex.question = qa.question;
    ex.answer = qa.answer;
    return ex;
}

std::vector<int> lm_sequence(const std::vector<SyntheticDoc>& docs, Rng& rng, int max_len) {
    if (docs.empty()) fail_contract("lm_sequence: empty corpus");
    const double kind = rng.next_double();
    std::string text;
    auto pick_doc = [&]() -> const SyntheticDoc& {
        return docs[std::size_t(rng.next_int(0, int(docs.size()) - 1))];
    };
    if (kind < 0.40) {
        // open-book few-shot blocks, every answer written out
        const int k = rng.next_int(1, 3);
        for (int j = 0; j < k; ++j) {
            const auto& doc = pick_doc();
            QaItem qa = qa_from_doc(doc, rng);
            text += kDocPrefix;
            text += doc.text;
            text += kQuestionPrefix;
            text += qa.question;
            text += kAnswerPrefix;
            text += qa.answer;
            text += kBlockSep;
        }
    } else if (kind < 0.65) {
        // dense lookup drill: one document, several questions about it
        const auto& doc = pick_doc();
        text += kDocPrefix;
        text += doc.text;
        const int n_q = rng.next_int(2, std::max(2, int(doc.facts.size())));
        for (int j = 0; j < n_q; ++j) {
            QaItem qa = qa_from_doc(doc, rng);
            text += kQuestionPrefix;
            text += qa.question;
            text += kAnswerPrefix;
            text += qa.answer;
        }
        text += kBlockSep;
    } else if (kind < 0.80) {
        // plain document run
        while (int(text.size()) < max_len - 1) {
            if (!text.empty()) text += ' ';
            text += pick_doc().text;
            if (rng.next_double() < 0.3) break;
        }
    } else {
        // replication pattern (induction pressure)
        const auto& doc = pick_doc();
        text = doc.text + "\n" + doc.text + "\n";
        if (rng.bernoulli(0.5)) {
            const auto& doc2 = pick_doc();
            text += doc2.text + "\n" + doc2.text + "\n";
        }
    }
    if (int(text.size()) > max_len - 1) text.resize(std::size_t(max_len - 1));
    std::vector<int> toks;
    toks.reserve(text.size() + 1);
    // eval prompts start mid-pattern, so BOS leads only part of the mix
    if (rng.bernoulli(0.5)) toks.push_back(kBosId);
    for (unsigned char c : text) toks.push_back(int(c));
    return toks;
}

void split_corpus(const std::vector<SyntheticDoc>& docs, double heldout_frac,
                  std::vector<SyntheticDoc>& train, std::vector<SyntheticDoc>& heldout) {
    const int bucket = std::max(1, int(heldout_frac * 100.0 + 0.5));
    train.clear();
    heldout.clear();
    for (const auto& d : docs) {
        if (d.id % 100 < bucket)
            heldout.push_back(d);
        else
            train.push_back(d);
    }
}

}  // namespace arc
