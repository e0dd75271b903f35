#pragma once

#include "ccot/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ccot {

// One (query, reasoning chain, answer) triple, stored as text. Token views
// are produced on demand by the tokenizer; the tokenized answer always ends
// with <EOS>.
struct ReasoningInstance {
  std::string id;
  std::string question;
  std::string chain;
  std::string answer;
};

// Character-level tokenizer over the synthetic task alphabet with four
// reserved special ids. Round-trips exactly on any generable string.
class Tokenizer {
 public:
  static constexpr int kCot = 0;
  static constexpr int kAns = 1;
  static constexpr int kEos = 2;
  static constexpr int kPause = 3;

  Tokenizer();

  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<int>& tokens) const;

  // tokenize(answer) + <EOS>
  std::vector<int> answer_tokens(const std::string& answer) const;

  int vocab_size() const { return static_cast<int>(id_to_char_.size()); }

 private:
  std::vector<std::string> id_to_char_;
  int char_to_id_[256];
};

// Deterministic chained-arithmetic word problem:
//   question "12+5*2-3=?", chain "12+5=17;17*2=34;34-3=31;", answer "31".
// Operators apply left to right; every intermediate stays within [0, 99].
ReasoningInstance gen_arithmetic(uint64_t seed, int num_steps, int value_lo = 2, int value_hi = 49);

// Evaluates the question text left to right; the independent oracle for
// generator tests.
int eval_question(const std::string& question);

struct Corpus {
  std::vector<ReasoningInstance> instances;
  size_t skipped = 0;
};

// Builds a deduplicated corpus by walking seeds from `seed_base`. Step counts
// are drawn in [steps_min, steps_max]. `exclude` skips instances whose
// question already appears there (used to keep eval disjoint from train).
Corpus build_corpus(size_t count, uint64_t seed_base, int steps_min, int steps_max,
                    const std::vector<ReasoningInstance>* exclude = nullptr);

// Native dataset files: one JSON object {"id","question","chain","answer"}
// per line.
void save_jsonl(const std::string& path, const std::vector<ReasoningInstance>& instances);
Corpus load_jsonl(const std::string& path);

// GSM-format reader: objects with "question" and "answer", the answer holding
// chain and final result separated by "####". Calculator annotations
// "<<...>>" are stripped; the final answer is normalized. Malformed lines are
// skipped and counted.
Corpus load_gsm_jsonl(const std::string& path);

// Strips "<<...>>" spans.
std::string strip_calculator_annotations(const std::string& chain);

// Removes whitespace and commas; the exact-match normalization.
std::string normalize_answer(const std::string& s);

uint64_t corpus_digest(const std::vector<ReasoningInstance>& instances);

}  // namespace ccot
