#pragma once

#include <string>
#include <vector>

#include "seqforge/text.hpp"

namespace seqforge::eval {

// Anything that assigns a (natural) log-probability to an encoded sentence,
// including the terminal </s> prediction. -infinity marks a zero-probability
// sentence.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual double sentence_logprob(const text::EncodedSentence& s) const = 0;
};

// Baseline scorer: every prediction is 1/|V|.
class UniformScorer : public SentenceScorer {
 public:
  explicit UniformScorer(size_t vocab_size) : vocab_size_(vocab_size) {}
  double sentence_logprob(const text::EncodedSentence& s) const override;

 private:
  size_t vocab_size_;
};

// exp of the negative mean per-token log-probability over the corpus. The
// token count includes one </s> event per sentence. Any -infinity step makes
// the perplexity infinite.
double perplexity(const SentenceScorer& scorer,
                  const std::vector<text::EncodedSentence>& corpus);

struct BleuStats {
  size_t matched[4] = {0, 0, 0, 0};  // clipped n-gram matches per order
  size_t total[4] = {0, 0, 0, 0};    // candidate n-gram counts per order
  size_t candidate_len = 0;
  size_t reference_len = 0;
  double precision[4] = {0, 0, 0, 0};
  double brevity_penalty = 1.0;
  double bleu = 0.0;

  // BLEU=... BP=... p1..p4=... len_ratio=... with six decimals
  std::string report_line() const;
};

using TokenCorpus = std::vector<std::vector<std::string>>;

// Corpus-level modified n-gram precision with reference clipping.
double modified_precision(const TokenCorpus& candidates,
                          const TokenCorpus& references, size_t n);

// 1 when the candidate is at least as long as the reference, otherwise
// exp(1 - r/l).
double brevity_penalty(size_t candidate_len, size_t reference_len);

// Geometric mean of the modified 1..4-gram precisions times the brevity
// penalty; zero (without smoothing) when any precision is zero.
BleuStats bleu(const TokenCorpus& candidates, const TokenCorpus& references);

}  // namespace seqforge::eval
