#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqforge/rng.hpp"
#include "seqforge/tensor.hpp"

namespace seqforge::text {

using TokenId = int;

constexpr TokenId kPad = 0;
constexpr TokenId kBos = 1;
constexpr TokenId kEos = 2;
constexpr TokenId kUnk = 3;

// Splits on runs of whitespace; no further normalization.
std::vector<std::string> tokenize(const std::string& line);

bool valid_utf8(const std::string& line);

// Token <-> id bijection with the four reserved entries in fixed slots.
class Vocabulary {
 public:
  Vocabulary();

  TokenId id_of(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token_of(TokenId id) const;  // throws on out-of-range
  bool contains(const std::string& token) const;
  size_t size() const { return tokens_.size(); }

  // Appends a non-special token; internal to building and file loading.
  TokenId add(const std::string& token);

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Tokens ranked by frequency (ties broken lexicographically), truncated to
// max_size entries including the specials; tokens below min_count are left
// out and encode to <unk>.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                       std::optional<size_t> max_size, size_t min_count);

struct EncodedSentence {
  std::vector<TokenId> ids;  // no implicit BOS/EOS
  size_t size() const { return ids.size(); }
};

EncodedSentence encode(const Vocabulary& v, const std::vector<std::string>& tokens);
std::vector<std::string> decode(const Vocabulary& v, const EncodedSentence& s);

// One corpus line per sentence. Lines that are not valid UTF-8 or exceed
// max_len tokens are dropped; the counts are surfaced in the result.
struct Corpus {
  std::vector<std::vector<std::string>> sentences;
  size_t rejected_encoding = 0;
  size_t rejected_length = 0;
};

Corpus read_corpus(const std::string& path, size_t max_len = 50);

std::vector<EncodedSentence> encode_corpus(const Vocabulary& v, const Corpus& c);

// Seeded shuffle followed by a contiguous cut. Ratios must be positive and
// sum to one; every part must end up non-empty.
template <class T>
struct Split {
  std::vector<T> train, val, test;
};

template <class T>
Split<T> split(std::vector<T> data, double train_ratio, double val_ratio,
               double test_ratio, uint64_t seed) {
  if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0)
    throw Error("split ratios must all be positive");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw Error("split ratios must sum to one");
  if (data.size() < 3) throw Error("dataset too small to split three ways");
  Rng rng(seed);
  rng.shuffle(data);
  size_t n = data.size();
  size_t n_train = static_cast<size_t>(train_ratio * static_cast<double>(n));
  size_t n_val = static_cast<size_t>(val_ratio * static_cast<double>(n));
  n_train = std::max<size_t>(1, std::min(n_train, n - 2));
  n_val = std::max<size_t>(1, std::min(n_val, n - n_train - 1));
  Split<T> out;
  out.train.assign(data.begin(), data.begin() + static_cast<long>(n_train));
  out.val.assign(data.begin() + static_cast<long>(n_train),
                 data.begin() + static_cast<long>(n_train + n_val));
  out.test.assign(data.begin() + static_cast<long>(n_train + n_val), data.end());
  return out;
}

// Fixed-width id grid padded with <pad>, plus the 0/1 mask and true lengths.
struct Minibatch {
  std::vector<std::vector<TokenId>> ids;  // M x L
  std::vector<std::vector<double>> mask;  // M x L, 1 iff j < lengths[i]
  std::vector<size_t> lengths;
  size_t width() const { return ids.empty() ? 0 : ids[0].size(); }
  size_t rows() const { return ids.size(); }
};

// Every sentence appears exactly once. With sort_by_length, sentences are
// bucketed by length first to reduce padding and the batch order is then
// shuffled.
std::vector<Minibatch> make_batches(const std::vector<EncodedSentence>& sentences,
                                    size_t batch_size, bool sort_by_length,
                                    uint64_t seed);

}  // namespace seqforge::text
