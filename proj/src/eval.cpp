#include "seqforge/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace seqforge::eval {

double UniformScorer::sentence_logprob(const text::EncodedSentence& s) const {
  return -static_cast<double>(s.size() + 1) *
         std::log(static_cast<double>(vocab_size_));
}

double perplexity(const SentenceScorer& scorer,
                  const std::vector<text::EncodedSentence>& corpus) {
  if (corpus.empty()) throw Error("perplexity over an empty corpus");
  double total = 0.0;
  size_t tokens = 0;
  for (const auto& s : corpus) {
    double lp = scorer.sentence_logprob(s);
    if (lp == -std::numeric_limits<double>::infinity())
      return std::numeric_limits<double>::infinity();
    total += lp;
    tokens += s.size() + 1;  // </s> is a scored event
  }
  return std::exp(-total / static_cast<double>(tokens));
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, size_t> ngram_counts(const std::vector<std::string>& tokens,
                                     size_t n) {
  std::map<Ngram, size_t> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<long>(i),
                   tokens.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

double modified_precision(const TokenCorpus& candidates,
                          const TokenCorpus& references, size_t n) {
  if (candidates.empty()) throw Error("empty candidate corpus");
  if (candidates.size() != references.size())
    throw Error("candidate/reference corpora are not line-aligned");
  size_t matched = 0, total = 0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    auto cand = ngram_counts(candidates[s], n);
    auto ref = ngram_counts(references[s], n);
    for (const auto& [gram, c] : cand) {
      auto it = ref.find(gram);
      size_t cref = it == ref.end() ? 0 : it->second;
      matched += std::min(c, cref);
      total += c;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
}

double brevity_penalty(size_t candidate_len, size_t reference_len) {
  if (candidate_len < 1 || reference_len < 1)
    throw Error("brevity penalty needs positive lengths");
  if (candidate_len >= reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) /
                            static_cast<double>(candidate_len));
}

BleuStats bleu(const TokenCorpus& candidates, const TokenCorpus& references) {
  if (candidates.empty()) throw Error("empty candidate corpus");
  if (candidates.size() != references.size())
    throw Error("candidate/reference corpora are not line-aligned");
  BleuStats st;
  for (size_t s = 0; s < candidates.size(); ++s) {
    st.candidate_len += candidates[s].size();
    st.reference_len += references[s].size();
    for (size_t n = 1; n <= 4; ++n) {
      auto cand = ngram_counts(candidates[s], n);
      auto ref = ngram_counts(references[s], n);
      for (const auto& [gram, c] : cand) {
        auto it = ref.find(gram);
        st.matched[n - 1] += std::min(c, it == ref.end() ? 0 : it->second);
        st.total[n - 1] += c;
      }
    }
  }
  st.brevity_penalty = brevity_penalty(std::max<size_t>(1, st.candidate_len),
                                       std::max<size_t>(1, st.reference_len));
  double log_mean = 0.0;
  bool zero = false;
  for (size_t n = 0; n < 4; ++n) {
    st.precision[n] = st.total[n] == 0
                          ? 0.0
                          : static_cast<double>(st.matched[n]) /
                                static_cast<double>(st.total[n]);
    if (st.precision[n] == 0.0) zero = true;
    else log_mean += 0.25 * std::log(st.precision[n]);
  }
  st.bleu = zero ? 0.0 : st.brevity_penalty * std::exp(log_mean);
  return st;
}

std::string BleuStats::report_line() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(6);
  os << "BLEU=" << bleu << " BP=" << brevity_penalty;
  for (size_t n = 0; n < 4; ++n) os << " p" << (n + 1) << "=" << precision[n];
  double ratio = reference_len == 0
                     ? 0.0
                     : static_cast<double>(candidate_len) /
                           static_cast<double>(reference_len);
  os << " len_ratio=" << ratio;
  return os.str();
}

}  // namespace seqforge::eval
