#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arc/arc_encoder.hpp"

namespace arc {

class Rng;

// Byte-level vocabulary: 256 raw bytes + BOS/EOS/PAD.
inline constexpr int kVocabSize = 259;
inline constexpr int kBosId = 256;
inline constexpr int kEosId = 257;
inline constexpr int kPadId = 258;

std::vector<int> tokenize(std::string_view text);
std::string detokenize(std::span<const int> tokens);  // non-byte ids are dropped

// ---------------------------------------------------------------------------
// Synthetic corpus: short documents built from (entity, relation, value)
// facts rendered as templated sentences. Values are drawn per document, so
// questions are unanswerable without the document in context.
// ---------------------------------------------------------------------------

struct Fact {
    std::string entity, relation, value;
};

struct SyntheticDoc {
    int id = 0;
    std::string text;
    std::vector<Fact> facts;
    std::uint64_t seed = 0;
};

std::vector<SyntheticDoc> gen_corpus(std::uint64_t seed, int n_docs, int fact_density);

struct QaItem {
    SyntheticDoc doc;
    std::string question, answer;
};

QaItem qa_from_doc(const SyntheticDoc& doc, Rng& rng);
QaItem gen_qa(std::uint64_t seed);

// Newline-delimited records: id <TAB> text <TAB> entity,relation,value;...
void write_corpus(const std::string& path, const std::vector<SyntheticDoc>& docs);
std::vector<SyntheticDoc> read_corpus(const std::string& path);

// ---------------------------------------------------------------------------
// Prompt templates. The few-shot skeleton is fixed; training and evaluation
// render through the same assembler so layouts stay byte-identical.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDocPrefix = "Document: ";
inline constexpr std::string_view kQuestionPrefix = "\nQuestion: ";
inline constexpr std::string_view kAnswerPrefix = "\nAnswer: ";
inline constexpr std::string_view kBlockSep = "\n\n";

// Instruct-style wrapper used by the long-context task.
inline constexpr std::string_view kInstOpen = "<s> [INST] ";
inline constexpr std::string_view kInstClose = " [/INST] ";
inline constexpr std::string_view kInstEnd = "</s>";
inline constexpr std::string_view kInstTextPrefix = "Text:\n\n";
inline constexpr std::string_view kInstRecInstruction = "\n Replicate the input text.";
inline constexpr std::string_view kInstRecSuffix = "Replicated text:\n";
inline constexpr std::string_view kInstContInstruction = "\n Continue the previous text.";
inline constexpr std::string_view kInstContSuffix = "Text continuation:\n...";

// ---------------------------------------------------------------------------
// Training samples
// ---------------------------------------------------------------------------

struct Segment {
    enum class Kind { Text, Compressed };
    Kind kind = Kind::Text;
    std::vector<int> tokens;          // literal tokens, or the span to compress
    TaskToken task = TaskToken::None; // Compressed segments only
};

struct TrainingSample {
    enum class Task { Reconstruction, Continuation, Fewshot, LongContext };
    Task task = Task::Reconstruction;
    std::vector<Segment> input;
    std::vector<int> targets;            // -1 where undefined
    std::vector<std::uint8_t> loss_mask; // true only where targets are defined
    int factor = 1;                      // x the layout was computed for
    int chunk_len = 0;                   // LongContext samples only
};

// Decoder input length: sum of text segment lengths + sum of ceil(span/x)
// + number of task tokens (+ chunk rounding for LongContext).
int sample_input_length(const TrainingSample& s);

TrainingSample build_reconstruction(std::span<const int> seq, int x);
TrainingSample build_continuation(std::span<const int> seq, int x, int split, int prefix_len);

struct FewshotExample {
    std::vector<int> doc_tokens;
    std::string question, answer;
};

// k-1 full (doc, q, a) blocks then a final block whose answer carries the
// loss; every document slot is compressed with a trailing <Cont>.
TrainingSample build_fewshot(std::span<const FewshotExample> examples, int k, int x);

// Prompt segments for evaluation: shot blocks plus the final question, ending
// right after the answer prefix. Used by build_fewshot internally.
enum class DocMode { Compressed, OpenBook, ClosedBook };
std::vector<Segment> render_fewshot_prompt(std::span<const FewshotExample> shots,
                                           const std::vector<int>& final_doc,
                                           const std::string& final_question, DocMode mode);

// Instruct-template sample over a chunk-compressed context.
TrainingSample build_longcontext(std::span<const int> context, std::span<const int> target,
                                 int chunk_len, int x, TaskToken task);

// ---------------------------------------------------------------------------
// Sequence sampling for the training phases
// ---------------------------------------------------------------------------

// Contiguous token window drawn from the corpus (documents concatenated with
// a separating space when one is too short).
std::vector<int> corpus_slice(const std::vector<SyntheticDoc>& docs, Rng& rng, int min_len,
                              int max_len);

// Mixed byte-LM sequences for training the decoder stand-ins: few-shot QA
// blocks rendered open-book, plain document runs, and doc+repeat copies.
std::vector<int> lm_sequence(const std::vector<SyntheticDoc>& docs, Rng& rng, int max_len);

FewshotExample fewshot_example_from(const SyntheticDoc& doc, Rng& rng);

// Deterministic train/heldout split by document id.
void split_corpus(const std::vector<SyntheticDoc>& docs, double heldout_frac,
                  std::vector<SyntheticDoc>& train, std::vector<SyntheticDoc>& heldout);

}  // namespace arc
