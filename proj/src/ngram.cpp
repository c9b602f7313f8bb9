#include "seqforge/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace seqforge::ngram {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

size_t NgramCounts::count_of(const Key& gram) const {
  if (gram.empty() || gram.size() > order) return 0;
  const auto& m = grams[gram.size() - 1];
  auto it = m.find(gram);
  return it == m.end() ? 0 : it->second;
}

size_t NgramCounts::total_of(size_t k, const Key& context) const {
  if (k < 1 || k > order) return 0;
  const auto& m = context_totals[k - 1];
  auto it = m.find(context);
  return it == m.end() ? 0 : it->second;
}

NgramCounts count(const std::vector<EncodedSentence>& corpus, size_t order) {
  if (order < 1) throw Error("n-gram order must be at least 1");
  NgramCounts c;
  c.order = order;
  c.grams.resize(order);
  c.context_totals.resize(order);
  c.context_types.resize(order);
  for (const auto& sentence : corpus) {
    std::vector<TokenId> padded;
    padded.reserve(sentence.size() + order);
    for (size_t i = 0; i + 1 < order; ++i) padded.push_back(text::kBos);
    padded.insert(padded.end(), sentence.ids.begin(), sentence.ids.end());
    padded.push_back(text::kEos);
    for (size_t k = 1; k <= order; ++k) {
      if (padded.size() < k) continue;
      for (size_t i = 0; i + k <= padded.size(); ++i) {
        Key gram(padded.begin() + static_cast<long>(i),
                 padded.begin() + static_cast<long>(i + k));
        ++c.grams[k - 1][gram];
        Key context(gram.begin(), gram.end() - 1);
        ++c.context_totals[k - 1][context];
      }
    }
  }
  // bucket continuation types by their final count
  for (size_t k = 1; k <= order; ++k)
    for (const auto& [gram, n] : c.grams[k - 1]) {
      Key context(gram.begin(), gram.end() - 1);
      auto& buckets = c.context_types[k - 1][context];
      buckets[std::min<size_t>(n, 3) - 1] += 1;
    }
  return c;
}

KnDiscounts kn_discounts(const NgramCounts& counts, size_t k) {
  KnDiscounts d;
  for (const auto& [gram, n] : counts.grams[k - 1]) {
    if (n == 1) ++d.n1;
    else if (n == 2) ++d.n2;
    else if (n == 3) ++d.n3;
    else if (n == 4) ++d.n4;
  }
  double n1 = static_cast<double>(d.n1), n2 = static_cast<double>(d.n2);
  double n3 = static_cast<double>(d.n3), n4 = static_cast<double>(d.n4);
  d.y = (n1 + 2.0 * n2) > 0.0 ? n1 / (n1 + 2.0 * n2) : 1.0;
  // vanishing count-of-count ratios fall back to the undiscounted limit
  d.d1 = 1.0 - 2.0 * d.y * (n1 > 0.0 ? n2 / n1 : 0.0);
  d.d2 = 2.0 - 3.0 * d.y * (n2 > 0.0 ? n3 / n2 : 0.0);
  d.d3plus = 3.0 - 4.0 * d.y * (n3 > 0.0 ? n4 / n3 : 0.0);
  d.d1 = std::max(0.0, d.d1);
  d.d2 = std::max(0.0, d.d2);
  d.d3plus = std::max(0.0, d.d3plus);
  return d;
}

NgramModel NgramModel::build(const std::vector<EncodedSentence>& corpus,
                             size_t order, Smoothing smoothing,
                             text::Vocabulary vocab, double alpha) {
  if (corpus.empty()) throw Error("cannot build an n-gram model from an empty corpus");
  if (smoothing == Smoothing::kAdditive && (alpha <= 0.0 || alpha > 1.0))
    throw Error("additive smoothing requires 0 < alpha <= 1");
  NgramModel m;
  m.order_ = order;
  m.smoothing_ = smoothing;
  m.alpha_ = alpha;
  m.vocab_ = std::move(vocab);
  m.counts_ = count(corpus, order);
  m.discounts_.clear();
  for (size_t k = 1; k <= order; ++k)
    m.discounts_.push_back(kn_discounts(m.counts_, k));
  m.lambdas_.assign(order, 0.5);
  return m;
}

Key NgramModel::clip_context(const std::vector<TokenId>& context) const {
  size_t want = order_ - 1;
  if (context.size() <= want) return Key(context.begin(), context.end());
  return Key(context.end() - static_cast<long>(want), context.end());
}

double NgramModel::prob(const std::vector<TokenId>& context, TokenId w) const {
  switch (smoothing_) {
    case Smoothing::kMle: return prob_mle(context, w);
    case Smoothing::kAdditive: return prob_additive(context, w, alpha_);
    case Smoothing::kInterpolated: return prob_interpolated(context, w);
    case Smoothing::kModifiedKn: return prob_kn(context, w);
    case Smoothing::kArpa:
      return std::pow(10.0, arpa_logprob(clip_context(context), w));
  }
  throw Error("unknown smoothing");
}

double NgramModel::prob_mle(const std::vector<TokenId>& context, TokenId w) const {
  Key ctx = clip_context(context);
  size_t total = counts_.total_of(ctx.size() + 1, ctx);
  if (total == 0)
    throw Error("undefined distribution: unseen context for maximum-likelihood estimate");
  Key gram = ctx;
  gram.push_back(w);
  return static_cast<double>(counts_.count_of(gram)) / static_cast<double>(total);
}

double NgramModel::prob_additive(const std::vector<TokenId>& context, TokenId w,
                                 double alpha) const {
  Key ctx = clip_context(context);
  size_t total = counts_.total_of(ctx.size() + 1, ctx);
  Key gram = ctx;
  gram.push_back(w);
  double v = static_cast<double>(vocab_.size());
  return (alpha + static_cast<double>(counts_.count_of(gram))) /
         (alpha * v + static_cast<double>(total));
}

double NgramModel::interp_recurse(size_t k, const Key& context, TokenId w) const {
  if (k == 1) {
    // add-one unigram floor keeps the distribution proper over all of V
    Key gram = {w};
    double v = static_cast<double>(vocab_.size());
    double total = static_cast<double>(counts_.total_of(1, Key{}));
    return (1.0 + static_cast<double>(counts_.count_of(gram))) / (v + total);
  }
  Key lower(context.begin() + 1, context.end());
  size_t total = counts_.total_of(k, context);
  if (total == 0) return interp_recurse(k - 1, lower, w);
  Key gram = context;
  gram.push_back(w);
  double mle = static_cast<double>(counts_.count_of(gram)) / static_cast<double>(total);
  double lambda = lambdas_[k - 1];
  return lambda * mle + (1.0 - lambda) * interp_recurse(k - 1, lower, w);
}

double NgramModel::prob_interpolated(const std::vector<TokenId>& context,
                                     TokenId w) const {
  return interp_recurse(order_, clip_context(context), w);
}

double NgramModel::kn_recurse(size_t k, const Key& context, TokenId w) const {
  const KnDiscounts& d = discounts_[k - 1];
  if (k == 1) {
    double total = static_cast<double>(counts_.total_of(1, Key{}));
    if (total == 0.0) return 1.0 / static_cast<double>(vocab_.size());
    size_t c = counts_.count_of({w});
    double held = 0.0;
    auto it = counts_.context_types[0].find(Key{});
    if (it != counts_.context_types[0].end())
      held = d.d1 * static_cast<double>(it->second[0]) +
             d.d2 * static_cast<double>(it->second[1]) +
             d.d3plus * static_cast<double>(it->second[2]);
    double alpha = (static_cast<double>(c) - d.discount(c)) / total;
    double gamma = held / total;
    return alpha + gamma / static_cast<double>(vocab_.size());
  }
  Key lower(context.begin() + 1, context.end());
  size_t total = counts_.total_of(k, context);
  if (total == 0) return kn_recurse(k - 1, lower, w);
  Key gram = context;
  gram.push_back(w);
  size_t c = counts_.count_of(gram);
  double alpha = (static_cast<double>(c) - d.discount(c)) / static_cast<double>(total);
  auto it = counts_.context_types[k - 1].find(context);
  double held = 0.0;
  if (it != counts_.context_types[k - 1].end())
    held = d.d1 * static_cast<double>(it->second[0]) +
           d.d2 * static_cast<double>(it->second[1]) +
           d.d3plus * static_cast<double>(it->second[2]);
  double gamma = held / static_cast<double>(total);
  return alpha + gamma * kn_recurse(k - 1, lower, w);
}

double NgramModel::prob_kn(const std::vector<TokenId>& context, TokenId w) const {
  return kn_recurse(order_, clip_context(context), w);
}

void NgramModel::set_lambdas(std::vector<double> lambdas) {
  if (lambdas.size() != order_) throw Error("one lambda per order required");
  for (double l : lambdas)
    if (l < 0.0 || l > 1.0) throw Error("lambda outside [0, 1]");
  lambdas_ = std::move(lambdas);
}

void NgramModel::fit_lambdas(const std::vector<EncodedSentence>& held_out) {
  if (held_out.empty()) throw Error("empty held-out set for lambda fitting");
  for (size_t k = 2; k <= order_; ++k) {
    double best_l = lambdas_[k - 1];
    double best_ll = kNegInf;
    for (int step = 1; step <= 9; ++step) {
      lambdas_[k - 1] = 0.1 * step;
      double ll = 0.0;
      for (const auto& s : held_out) ll += sentence_logprob(s);
      if (ll > best_ll) {
        best_ll = ll;
        best_l = lambdas_[k - 1];
      }
    }
    lambdas_[k - 1] = best_l;
  }
}

double NgramModel::sentence_logprob(const EncodedSentence& sentence) const {
  std::vector<TokenId> history(order_ > 0 ? order_ - 1 : 0, text::kBos);
  double total = 0.0;
  auto step = [&](TokenId w) {
    double p;
    if (smoothing_ == Smoothing::kMle) {
      Key ctx = clip_context(history);
      size_t denom = counts_.total_of(ctx.size() + 1, ctx);
      if (denom == 0) {
        p = 0.0;  // unseen context: the n-gram itself is unseen
      } else {
        Key gram = ctx;
        gram.push_back(w);
        p = static_cast<double>(counts_.count_of(gram)) /
            static_cast<double>(denom);
      }
    } else {
      p = prob(history, w);
    }
    total += p > 0.0 ? std::log(p) : kNegInf;
    history.push_back(w);
  };
  for (TokenId w : sentence.ids) step(w);
  step(text::kEos);
  return total;
}

namespace {

std::string format_log10(double p) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(6) << std::log10(p);
  return os.str();
}

}  // namespace

void NgramModel::export_arpa(const std::string& path) const {
  if (smoothing_ != Smoothing::kInterpolated && smoothing_ != Smoothing::kModifiedKn)
    throw Error("only interpolated or modified Kneser-Ney models export to ARPA");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write ARPA file " + path);

  // sorted n-gram lists per order; the unigram section covers all of V so
  // every word is scorable after import
  std::vector<std::vector<Key>> rows(order_);
  for (TokenId w = 0; w < static_cast<TokenId>(vocab_.size()); ++w)
    rows[0].push_back({w});
  for (size_t k = 2; k <= order_; ++k) {
    rows[k - 1].reserve(counts_.grams[k - 1].size());
    for (const auto& [gram, n] : counts_.grams[k - 1]) rows[k - 1].push_back(gram);
    std::sort(rows[k - 1].begin(), rows[k - 1].end());
  }
  std::sort(rows[0].begin(), rows[0].end());

  out << "\\data\\\n";
  for (size_t k = 1; k <= order_; ++k)
    out << "ngram " << k << "=" << rows[k - 1].size() << "\n";

  auto conditional = [&](const Key& gram) {
    Key ctx(gram.begin(), gram.end() - 1);
    return smoothing_ == Smoothing::kModifiedKn
               ? kn_recurse(gram.size(), ctx, gram.back())
               : interp_recurse(gram.size(), ctx, gram.back());
  };
  auto backoff_weight = [&](const Key& context) -> std::optional<double> {
    // weight applied when this entry is used as a backed-off context
    size_t k = context.size() + 1;
    if (k > order_) return std::nullopt;
    size_t total = counts_.total_of(k, context);
    if (total == 0) return std::nullopt;  // never a context: full lower-order mass
    if (smoothing_ == Smoothing::kInterpolated) return 1.0 - lambdas_[k - 1];
    const KnDiscounts& d = discounts_[k - 1];
    auto it = counts_.context_types[k - 1].find(context);
    double held = 0.0;
    if (it != counts_.context_types[k - 1].end())
      held = d.d1 * static_cast<double>(it->second[0]) +
             d.d2 * static_cast<double>(it->second[1]) +
             d.d3plus * static_cast<double>(it->second[2]);
    return held / static_cast<double>(total);
  };

  for (size_t k = 1; k <= order_; ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const Key& gram : rows[k - 1]) {
      out << format_log10(conditional(gram));
      out << "\t";
      for (size_t i = 0; i < gram.size(); ++i)
        out << (i ? " " : "") << vocab_.token_of(gram[i]);
      if (auto bow = backoff_weight(gram); bow && *bow > 0.0)
        out << "\t" << format_log10(*bow);
      out << "\n";
    }
  }
  out << "\n\\end\\\n";
}

double NgramModel::arpa_logprob(const Key& context, TokenId w) const {
  Key gram = context;
  gram.push_back(w);
  double bow_acc = 0.0;
  while (true) {
    size_t k = gram.size();
    const auto& probs = arpa_.logprob[k - 1];
    auto it = probs.find(gram);
    if (it != probs.end()) return bow_acc + it->second;
    if (k == 1) return kNegInf;  // word absent from the unigram section
    Key ctx(gram.begin(), gram.end() - 1);
    auto bow = arpa_.logbow[ctx.size() - 1].find(ctx);
    if (bow != arpa_.logbow[ctx.size() - 1].end()) bow_acc += bow->second;
    gram.erase(gram.begin());
  }
}

NgramModel NgramModel::import_arpa(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read ARPA file " + path);
  NgramModel m;
  m.smoothing_ = Smoothing::kArpa;

  std::string line;
  size_t lineno = 0;
  auto parse_error = [&](const std::string& what) {
    throw Error("ARPA parse error at " + path + ":" + std::to_string(lineno) +
                ": " + what);
  };
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };

  if (!next_line() || line != "\\data\\") parse_error("expected \\data\\ header");
  std::vector<size_t> declared;
  while (next_line() && line.rfind("ngram ", 0) == 0) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) parse_error("malformed ngram count line");
    declared.push_back(static_cast<size_t>(std::stoull(line.substr(eq + 1))));
  }
  if (declared.empty()) parse_error("no ngram counts declared");
  m.order_ = declared.size();
  m.arpa_.order = m.order_;
  m.arpa_.logprob.resize(m.order_);
  m.arpa_.logbow.resize(m.order_);

  // the loop above already consumed the first section header
  for (size_t k = 1; k <= m.order_; ++k) {
    std::string header = "\\" + std::to_string(k) + "-grams:";
    if (line != header) parse_error("expected section " + header);
    size_t rows = 0;
    while (next_line() && line[0] != '\\') {
      std::istringstream fields(line);
      std::string probstr;
      fields >> probstr;
      double logp;
      try {
        logp = std::stod(probstr);
      } catch (...) {
        parse_error("bad probability " + probstr);
        return m;
      }
      Key gram;
      std::string tok;
      for (size_t i = 0; i < k; ++i) {
        if (!(fields >> tok)) parse_error("truncated n-gram line");
        if (k == 1) m.vocab_.add(tok);
        TokenId id = m.vocab_.id_of(tok);
        if (tok != m.vocab_.token_of(id)) parse_error("unknown token " + tok);
        gram.push_back(id);
      }
      m.arpa_.logprob[k - 1][gram] = logp;
      std::string bowstr;
      if (fields >> bowstr) {
        try {
          m.arpa_.logbow[k - 1][gram] = std::stod(bowstr);
        } catch (...) {
          parse_error("bad backoff weight " + bowstr);
        }
      }
      ++rows;
    }
    if (rows != declared[k - 1])
      parse_error("section " + std::to_string(k) + " has " + std::to_string(rows) +
                  " rows, header declared " + std::to_string(declared[k - 1]));
  }
  if (line != "\\end\\") parse_error("expected \\end\\");
  return m;
}

}  // namespace seqforge::ngram
