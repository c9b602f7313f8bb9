#include "seqforge/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace seqforge::text {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool valid_utf8(const std::string& line) {
  size_t i = 0;
  while (i < line.size()) {
    unsigned char c = static_cast<unsigned char>(line[i]);
    size_t extra;
    if (c < 0x80) extra = 0;
    else if ((c >> 5) == 0x6) extra = 1;
    else if ((c >> 4) == 0xE) extra = 2;
    else if ((c >> 3) == 0x1E) extra = 3;
    else return false;
    for (size_t k = 1; k <= extra; ++k) {
      if (i + k >= line.size()) return false;
      if ((static_cast<unsigned char>(line[i + k]) >> 6) != 0x2) return false;
    }
    i += extra + 1;
  }
  return true;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<s>", "</s>", "<unk>"};
  for (size_t i = 0; i < tokens_.size(); ++i)
    index_[tokens_[i]] = static_cast<TokenId>(i);
}

TokenId Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
    throw Error("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

TokenId Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  TokenId id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_[token] = id;
  return id;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary file " + path);
  for (const std::string& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read vocabulary file " + path);
  Vocabulary v;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno < 4) {
      if (line != v.tokens_[lineno])
        throw Error("vocabulary file " + path + " line " +
                    std::to_string(lineno + 1) + ": expected special token " +
                    v.tokens_[lineno]);
    } else {
      if (line.empty()) throw Error("empty token in vocabulary file " + path);
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < 4) throw Error("vocabulary file " + path + " is truncated");
  return v;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                       std::optional<size_t> max_size, size_t min_count) {
  if (corpus.empty()) throw Error("cannot build a vocabulary from an empty corpus");
  std::map<std::string, size_t> freq;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) ++freq[tok];
  std::vector<std::pair<std::string, size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, count] : ranked) {
    if (max_size && v.size() >= *max_size) break;
    if (count < min_count) continue;
    v.add(tok);
  }
  return v;
}

EncodedSentence encode(const Vocabulary& v, const std::vector<std::string>& tokens) {
  EncodedSentence s;
  s.ids.reserve(tokens.size());
  for (const auto& t : tokens) s.ids.push_back(v.id_of(t));
  return s;
}

std::vector<std::string> decode(const Vocabulary& v, const EncodedSentence& s) {
  std::vector<std::string> out;
  out.reserve(s.ids.size());
  for (TokenId id : s.ids) out.push_back(v.token_of(id));
  return out;
}

Corpus read_corpus(const std::string& path, size_t max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read corpus file " + path);
  Corpus c;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!valid_utf8(line)) {
      ++c.rejected_encoding;
      continue;
    }
    auto toks = tokenize(line);
    if (toks.size() > max_len) {
      ++c.rejected_length;
      continue;
    }
    c.sentences.push_back(std::move(toks));
  }
  return c;
}

std::vector<EncodedSentence> encode_corpus(const Vocabulary& v, const Corpus& c) {
  std::vector<EncodedSentence> out;
  out.reserve(c.sentences.size());
  for (const auto& s : c.sentences) out.push_back(encode(v, s));
  return out;
}

std::vector<Minibatch> make_batches(const std::vector<EncodedSentence>& sentences,
                                    size_t batch_size, bool sort_by_length,
                                    uint64_t seed) {
  if (batch_size < 1) throw Error("batch size must be at least 1");
  Rng rng(seed);
  std::vector<size_t> order(sentences.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (sort_by_length) {
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return sentences[a].size() < sentences[b].size();
    });
  } else {
    rng.shuffle(order);
  }
  std::vector<Minibatch> batches;
  for (size_t off = 0; off < order.size(); off += batch_size) {
    size_t take = std::min(batch_size, order.size() - off);
    Minibatch b;
    size_t width = 0;
    for (size_t i = 0; i < take; ++i)
      width = std::max(width, sentences[order[off + i]].size());
    for (size_t i = 0; i < take; ++i) {
      const auto& s = sentences[order[off + i]];
      std::vector<TokenId> row(width, kPad);
      std::vector<double> m(width, 0.0);
      for (size_t j = 0; j < s.size(); ++j) {
        row[j] = s.ids[j];
        m[j] = 1.0;
      }
      b.ids.push_back(std::move(row));
      b.mask.push_back(std::move(m));
      b.lengths.push_back(s.size());
    }
    batches.push_back(std::move(b));
  }
  if (sort_by_length) rng.shuffle(batches);
  return batches;
}

}  // namespace seqforge::text
