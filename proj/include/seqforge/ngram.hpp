#pragma once

#include <array>
#include <unordered_map>
#include <vector>

#include "seqforge/text.hpp"

namespace seqforge::ngram {

using text::EncodedSentence;
using text::TokenId;

using Key = std::vector<TokenId>;

struct KeyHash {
  size_t operator()(const Key& k) const {
    size_t h = 1469598103934665603ull;
    for (TokenId id : k) {
      h ^= static_cast<size_t>(static_cast<unsigned>(id));
      h *= 1099511628211ull;
    }
    return h;
  }
};

template <class V>
using KeyMap = std::unordered_map<Key, V, KeyHash>;

// Raw occurrence counts for all orders 1..n. Each sentence is padded with
// n-1 <s> and one </s> before windowing.
struct NgramCounts {
  size_t order = 0;
  std::vector<KeyMap<size_t>> grams;           // [k-1]: k-gram -> count
  std::vector<KeyMap<size_t>> context_totals;  // [k-1]: context -> sum of counts
  // [k-1]: context -> number of continuation types with count 1, 2, >=3
  std::vector<KeyMap<std::array<size_t, 3>>> context_types;

  size_t count_of(const Key& gram) const;
  size_t total_of(size_t k, const Key& context) const;
};

NgramCounts count(const std::vector<EncodedSentence>& corpus, size_t order);

// Count-of-count statistics and the derived discounts for one order.
struct KnDiscounts {
  size_t n1 = 0, n2 = 0, n3 = 0, n4 = 0;
  double y = 0.0, d1 = 0.0, d2 = 0.0, d3plus = 0.0;

  double discount(size_t c) const {
    if (c == 0) return 0.0;
    if (c == 1) return d1;
    if (c == 2) return d2;
    return d3plus;
  }
};

KnDiscounts kn_discounts(const NgramCounts& counts, size_t k);

enum class Smoothing { kMle, kAdditive, kInterpolated, kModifiedKn, kArpa };

// Backoff tables parsed from an ARPA file; probabilities in log10.
struct ArpaTable {
  size_t order = 0;
  std::vector<KeyMap<double>> logprob;  // [k-1]
  std::vector<KeyMap<double>> logbow;   // [k-1]
};

class NgramModel {
 public:
  NgramModel() = default;

  static NgramModel build(const std::vector<EncodedSentence>& corpus,
                          size_t order, Smoothing smoothing,
                          text::Vocabulary vocab, double alpha = 1.0);

  size_t order() const { return order_; }
  Smoothing smoothing() const { return smoothing_; }
  const text::Vocabulary& vocabulary() const { return vocab_; }
  const NgramCounts& counts() const { return counts_; }
  const KnDiscounts& discounts(size_t k) const { return discounts_[k - 1]; }
  const std::vector<double>& lambdas() const { return lambdas_; }

  // Conditional probability of w given the last order-1 ids of context,
  // dispatched on the configured smoothing.
  double prob(const std::vector<TokenId>& context, TokenId w) const;

  double prob_mle(const std::vector<TokenId>& context, TokenId w) const;
  double prob_additive(const std::vector<TokenId>& context, TokenId w,
                       double alpha) const;
  double prob_interpolated(const std::vector<TokenId>& context, TokenId w) const;
  double prob_kn(const std::vector<TokenId>& context, TokenId w) const;

  // Per-order interpolation weights fit on held-out text by a coordinate
  // grid search over {0.1, ..., 0.9}.
  void fit_lambdas(const std::vector<EncodedSentence>& held_out);
  void set_lambdas(std::vector<double> lambdas);

  // Natural-log probability with <s> padding and a terminal </s>. A zero
  // probability step yields -infinity.
  double sentence_logprob(const EncodedSentence& sentence) const;

  void export_arpa(const std::string& path) const;
  static NgramModel import_arpa(const std::string& path);

 private:
  double kn_recurse(size_t k, const Key& context, TokenId w) const;
  double interp_recurse(size_t k, const Key& context, TokenId w) const;
  double arpa_logprob(const Key& context, TokenId w) const;
  Key clip_context(const std::vector<TokenId>& context) const;

  size_t order_ = 1;
  Smoothing smoothing_ = Smoothing::kMle;
  double alpha_ = 1.0;
  std::vector<double> lambdas_;  // [k-1], used for k >= 2
  NgramCounts counts_;
  std::vector<KnDiscounts> discounts_;
  text::Vocabulary vocab_;
  ArpaTable arpa_;
};

}  // namespace seqforge::ngram
