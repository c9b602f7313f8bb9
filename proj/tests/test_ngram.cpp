#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "seqforge/ngram.hpp"

using namespace seqforge;
using namespace seqforge::ngram;
using seqforge::text::EncodedSentence;
using seqforge::text::TokenId;

namespace {

struct Fixture {
  text::Vocabulary vocab;
  std::vector<EncodedSentence> corpus;
};

Fixture make_fixture(const std::vector<std::string>& lines,
                     std::optional<size_t> max_size = std::nullopt) {
  Fixture f;
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& l : lines) tokenized.push_back(text::tokenize(l));
  f.vocab = text::build_vocab(tokenized, max_size, 1);
  for (const auto& t : tokenized) f.corpus.push_back(text::encode(f.vocab, t));
  return f;
}

}  // namespace

TEST_CASE("count: windows over the padded sentence") {
  auto f = make_fixture({"a b"});
  auto c = count(f.corpus, 2);
  TokenId a = f.vocab.id_of("a"), b = f.vocab.id_of("b");
  CHECK(c.count_of({text::kBos, a}) == 1);
  CHECK(c.count_of({a, b}) == 1);
  CHECK(c.count_of({b, text::kEos}) == 1);
  CHECK(c.count_of({a, a}) == 0);

  // duplicating the sentence doubles every count
  auto doubled = count({f.corpus[0], f.corpus[0]}, 2);
  CHECK(doubled.count_of({text::kBos, a}) == 2);
  CHECK(doubled.count_of({a, b}) == 2);
  CHECK(doubled.count_of({b, text::kEos}) == 2);
}

TEST_CASE("count: marginal consistency with boundary adjustment") {
  auto f = make_fixture({"a b a", "b a b b"});
  auto c = count(f.corpus, 2);
  // the count of any unigram equals the bigram mass it opens, except </s>
  // which closes each sentence
  for (const auto& [gram, n] : c.grams[0]) {
    size_t opened = c.total_of(2, gram);
    size_t end_adjust = gram[0] == text::kEos ? f.corpus.size() : 0;
    CHECK(opened + end_adjust == n);
  }
}

TEST_CASE("count: bigram contexts of the three-sentence example corpus") {
  auto f = make_fixture({"there are three teams left for the qualification",
                         "four teams have passed the first round",
                         "four groups are playing in the field"});
  auto c = count(f.corpus, 2);
  TokenId four = f.vocab.id_of("four");
  TokenId teams = f.vocab.id_of("teams");
  TokenId groups = f.vocab.id_of("groups");
  CHECK(c.count_of({four, teams}) == 1);
  CHECK(c.count_of({four, groups}) == 1);

  auto m = NgramModel::build(f.corpus, 2, Smoothing::kMle, f.vocab);
  CHECK(m.prob_mle({four}, teams) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.prob_mle({four}, groups) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("prob_mle: only continuation, zero numerator, unseen context") {
  auto f = make_fixture({"a b"});
  auto m = NgramModel::build(f.corpus, 2, Smoothing::kMle, f.vocab);
  TokenId a = f.vocab.id_of("a"), b = f.vocab.id_of("b");
  CHECK(m.prob_mle({a}, b) == 1.0);
  CHECK(m.prob_mle({a}, a) == 0.0);
  CHECK_THROWS_WITH_AS(m.prob_mle({text::kEos}, a),
                       doctest::Contains("unseen context"), Error);
}

TEST_CASE("prob_additive: uniform on unseen contexts, recovers MLE in the limit") {
  auto f = make_fixture({"a b"});
  auto m = NgramModel::build(f.corpus, 2, Smoothing::kAdditive, f.vocab, 1.0);
  TokenId a = f.vocab.id_of("a"), b = f.vocab.id_of("b");
  double v = static_cast<double>(f.vocab.size());
  CHECK(v == 6.0);  // four specials + a + b

  // unseen context: counts cancel to the uniform distribution
  CHECK(m.prob_additive({text::kUnk}, a, 1.0) ==
        doctest::Approx(1.0 / v).epsilon(1e-12));

  // hand-computed: (1 + 1) / (6 + 1)
  CHECK(m.prob_additive({a}, b, 1.0) == doctest::Approx(2.0 / 7.0).epsilon(1e-12));

  // alpha -> 0 approaches the maximum-likelihood estimate
  CHECK(m.prob_additive({a}, b, 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("prob_interpolated: degenerate lambdas and proper distribution") {
  auto f = make_fixture({"a b c", "a b d", "b c a"});
  auto m = NgramModel::build(f.corpus, 2, Smoothing::kInterpolated, f.vocab);
  TokenId a = f.vocab.id_of("a"), b = f.vocab.id_of("b");

  m.set_lambdas({0.5, 1.0});
  CHECK(m.prob_interpolated({a}, b) ==
        doctest::Approx(m.prob_mle({a}, b)).epsilon(1e-12));

  m.set_lambdas({0.5, 0.0});
  // with zero weight on the bigram, the context is irrelevant
  CHECK(m.prob_interpolated({a}, b) ==
        doctest::Approx(m.prob_interpolated({b}, b)).epsilon(1e-12));

  m.set_lambdas({0.5, 0.7});
  for (const auto& [ctx, total] : m.counts().context_totals[1]) {
    double mass = 0.0;
    for (TokenId w = 0; w < static_cast<TokenId>(f.vocab.size()); ++w)
      mass += m.prob_interpolated({ctx[0]}, w);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("kn_discounts: closed-form values and guards") {
  NgramCounts c;
  c.order = 1;
  c.grams.resize(1);
  c.context_totals.resize(1);
  c.context_types.resize(1);
  // four singletons, two doubles, one triple, one quadruple
  int next = 10;
  auto put = [&](size_t copies, size_t times) {
    for (size_t i = 0; i < copies; ++i) c.grams[0][{next++}] = times;
  };
  put(4, 1);
  put(2, 2);
  put(1, 3);
  put(1, 4);
  auto d = kn_discounts(c, 1);
  CHECK(d.y == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.d1 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.d2 == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(d.d3plus == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.discount(0) == 0.0);

  // degenerate count-of-counts go to the undiscounted limits
  NgramCounts ones;
  ones.order = 1;
  ones.grams.resize(1);
  ones.context_totals.resize(1);
  ones.context_types.resize(1);
  ones.grams[0][{10}] = 1;
  ones.grams[0][{11}] = 1;
  auto dg = kn_discounts(ones, 1);
  CHECK(dg.y == 1.0);
  CHECK(dg.d1 == 1.0);
  CHECK(dg.d2 == 2.0);
  CHECK(dg.d3plus == 3.0);
}

TEST_CASE("prob_kn: proper distribution for every observed context") {
  Rng rng(77);
  std::vector<std::string> lines;
  const char* words[] = {"sun", "moon", "stars", "wind", "rain", "cloud"};
  for (int i = 0; i < 60; ++i) {
    std::string line;
    size_t len = 1 + rng.index(7);
    for (size_t j = 0; j < len; ++j) {
      if (j) line += ' ';
      line += words[rng.index(6)];
    }
    lines.push_back(line);
  }
  auto f = make_fixture(lines);
  auto m = NgramModel::build(f.corpus, 3, Smoothing::kModifiedKn, f.vocab);
  size_t checked = 0;
  for (const auto& [ctx, total] : m.counts().context_totals[2]) {
    double mass = 0.0;
    for (TokenId w = 0; w < static_cast<TokenId>(f.vocab.size()); ++w)
      mass += m.prob_kn({ctx[0], ctx[1]}, w);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    ++checked;
  }
  CHECK(checked > 10);

  // discounted mass plus backoff weight accounts for the whole conditional
  for (const auto& [ctx, total] : m.counts().context_totals[2]) {
    const auto& d = m.discounts(3);
    double alpha_mass = 0.0;
    for (TokenId w = 0; w < static_cast<TokenId>(f.vocab.size()); ++w) {
      Key gram = {ctx[0], ctx[1], w};
      size_t cnt = m.counts().count_of(gram);
      alpha_mass += (static_cast<double>(cnt) - d.discount(cnt)) /
                    static_cast<double>(total);
    }
    auto types = m.counts().context_types[2].find(ctx);
    REQUIRE(types != m.counts().context_types[2].end());
    double gamma = (d.d1 * static_cast<double>(types->second[0]) +
                    d.d2 * static_cast<double>(types->second[1]) +
                    d.d3plus * static_cast<double>(types->second[2])) /
                   static_cast<double>(total);
    CHECK(alpha_mass + gamma == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("prob_kn: backoff gives unseen words positive probability") {
  auto f = make_fixture({"a b c", "a b d", "c a b"});
  auto m = NgramModel::build(f.corpus, 2, Smoothing::kModifiedKn, f.vocab);
  TokenId a = f.vocab.id_of("a");
  TokenId d = f.vocab.id_of("d");
  // d never follows a
  CHECK(m.counts().count_of({a, d}) == 0);
  double p = m.prob_kn({a}, d);
  CHECK(p > 0.0);
  // equals gamma(context) * lower-order probability exactly
  const auto& dk = m.discounts(2);
  auto types = m.counts().context_types[1].find(Key{a});
  double gamma = (dk.d1 * static_cast<double>(types->second[0]) +
                  dk.d2 * static_cast<double>(types->second[1]) +
                  dk.d3plus * static_cast<double>(types->second[2])) /
                 static_cast<double>(m.counts().total_of(2, {a}));
  // lower order here is the unigram base case
  double expected_lower = p / gamma;
  double mass = 0.0;
  for (TokenId w = 0; w < static_cast<TokenId>(f.vocab.size()); ++w) {
    double pw = m.prob_kn({a}, w);
    mass += pw;
    CHECK(pw > 0.0);
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(expected_lower > 0.0);
  CHECK(expected_lower < 1.0);
}

// Independent trigram Kneser-Ney evaluator built directly from the formulas
// with plain maps, used as a step-by-step oracle for a held-out sentence.
namespace {

struct NaiveKn {
  std::map<std::vector<TokenId>, size_t> counts;
  std::map<std::vector<TokenId>, size_t> totals;
  size_t vocab = 0;
  double d_for(size_t order, size_t c) const {
    double n1 = 0, n2 = 0, n3 = 0, n4 = 0;
    for (const auto& [g, cnt] : counts) {
      if (g.size() != order) continue;
      if (cnt == 1) ++n1;
      if (cnt == 2) ++n2;
      if (cnt == 3) ++n3;
      if (cnt == 4) ++n4;
    }
    double y = (n1 + 2 * n2) > 0 ? n1 / (n1 + 2 * n2) : 1.0;
    double d1 = std::max(0.0, 1 - 2 * y * (n1 > 0 ? n2 / n1 : 0.0));
    double d2 = std::max(0.0, 2 - 3 * y * (n2 > 0 ? n3 / n2 : 0.0));
    double d3 = std::max(0.0, 3 - 4 * y * (n3 > 0 ? n4 / n3 : 0.0));
    if (c == 0) return 0.0;
    if (c == 1) return d1;
    if (c == 2) return d2;
    return d3;
  }
  double prob(std::vector<TokenId> ctx, TokenId w) const {
    size_t order = ctx.size() + 1;
    if (order == 1) {
      double total = 0;
      for (const auto& [g, cnt] : counts)
        if (g.size() == 1) total += static_cast<double>(cnt);
      auto it = counts.find({w});
      size_t c = it == counts.end() ? 0 : it->second;
      double held = 0.0;
      for (const auto& [g, cnt] : counts)
        if (g.size() == 1) held += d_for(1, cnt);
      double a = (static_cast<double>(c) - d_for(1, c)) / total;
      return a + (held / total) / static_cast<double>(vocab);
    }
    auto tt = totals.find(ctx);
    std::vector<TokenId> shorter(ctx.begin() + 1, ctx.end());
    if (tt == totals.end()) return prob(shorter, w);
    double total = static_cast<double>(tt->second);
    auto full = ctx;
    full.push_back(w);
    auto it = counts.find(full);
    size_t c = it == counts.end() ? 0 : it->second;
    double held = 0.0;
    for (const auto& [g, cnt] : counts)
      if (g.size() == order &&
          std::equal(ctx.begin(), ctx.end(), g.begin()))
        held += d_for(order, cnt);
    double a = (static_cast<double>(c) - d_for(order, c)) / total;
    return a + (held / total) * prob(shorter, w);
  }
};

}  // namespace

TEST_CASE("prob_kn: matches an independent step-by-step evaluation") {
  auto f = make_fixture({"the cat sat on the mat", "the dog sat on the rug",
                         "a cat saw the dog", "the mat was red",
                         "a dog sat on a mat"});
  auto m = NgramModel::build(f.corpus, 3, Smoothing::kModifiedKn, f.vocab);

  NaiveKn naive;
  naive.vocab = f.vocab.size();
  for (const auto& s : f.corpus) {
    std::vector<TokenId> padded = {text::kBos, text::kBos};
    padded.insert(padded.end(), s.ids.begin(), s.ids.end());
    padded.push_back(text::kEos);
    for (size_t k = 1; k <= 3; ++k)
      for (size_t i = 0; i + k <= padded.size(); ++i) {
        std::vector<TokenId> gram(padded.begin() + static_cast<long>(i),
                                  padded.begin() + static_cast<long>(i + k));
        ++naive.counts[gram];
        std::vector<TokenId> ctx(gram.begin(), gram.end() - 1);
        ++naive.totals[ctx];
      }
  }

  auto held_out = text::encode(f.vocab, text::tokenize("the cat sat on a rug"));
  std::vector<TokenId> history = {text::kBos, text::kBos};
  double expect = 0.0;
  auto extend = [&](TokenId w) {
    std::vector<TokenId> ctx(history.end() - 2, history.end());
    expect += std::log(naive.prob(ctx, w));
    history.push_back(w);
  };
  for (TokenId w : held_out.ids) extend(w);
  extend(text::kEos);

  CHECK(m.sentence_logprob(held_out) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("sentence_logprob: degenerate corpora and the zero-probability marker") {
  auto f = make_fixture({"i like dogs"});
  auto m = NgramModel::build(f.corpus, 3, Smoothing::kMle, f.vocab);
  // the only sentence has probability one under its own MLE model
  CHECK(m.sentence_logprob(f.corpus[0]) == doctest::Approx(0.0).epsilon(1e-12));

  auto f2 = make_fixture({"i like dogs", "you like llama", "i hate cats"});
  auto m2 = NgramModel::build(f2.corpus, 3, Smoothing::kMle, f2.vocab);
  auto missing = text::encode(f2.vocab, text::tokenize("i like llama"));
  CHECK(m2.sentence_logprob(missing) == -std::numeric_limits<double>::infinity());

  auto kn = NgramModel::build(f2.corpus, 3, Smoothing::kModifiedKn, f2.vocab);
  CHECK(std::isfinite(kn.sentence_logprob(missing)));
}

TEST_CASE("mle probability never decreases when an n-gram gets more frequent") {
  auto f = make_fixture({"a b", "a c"});
  auto base = NgramModel::build(f.corpus, 2, Smoothing::kMle, f.vocab);
  TokenId a = f.vocab.id_of("a"), b = f.vocab.id_of("b");
  double p0 = base.prob_mle({a}, b);

  auto more = f.corpus;
  more.push_back(f.corpus[0]);  // one more occurrence of the bigram (a, b)
  auto bumped = NgramModel::build(more, 2, Smoothing::kMle, f.vocab);
  CHECK(bumped.prob_mle({a}, b) >= p0);
  CHECK(p0 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bumped.prob_mle({a}, b) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("fit_lambdas: picks weights that improve held-out likelihood") {
  auto f = make_fixture({"a b c", "a b d", "b c d", "c d a", "a b c", "d a b"});
  auto m = NgramModel::build(f.corpus, 2, Smoothing::kInterpolated, f.vocab);
  auto held = text::encode(f.vocab, text::tokenize("a b c"));
  m.set_lambdas({0.5, 0.1});
  double before = m.sentence_logprob(held);
  m.fit_lambdas({held});
  double after = m.sentence_logprob(held);
  CHECK(after >= before);
  CHECK(m.lambdas()[1] >= 0.1);
  CHECK(m.lambdas()[1] <= 0.9);
}

TEST_CASE("arpa: export/import round trip preserves scores") {
  auto f = make_fixture({"the cat sat", "the dog sat", "a cat ran",
                         "the cat ran far", "a dog sat"});
  auto m = NgramModel::build(f.corpus, 3, Smoothing::kModifiedKn, f.vocab);
  std::string path = "roundtrip.arpa";
  m.export_arpa(path);
  auto loaded = NgramModel::import_arpa(path);
  CHECK(loaded.order() == 3);

  // stored conditionals agree within the six-decimal serialization grain
  for (const auto& [gram, cnt] : m.counts().grams[2]) {
    std::vector<TokenId> ctx = {gram[0], gram[1]};
    // map ids across the two vocabularies through the surface tokens
    std::vector<TokenId> lctx = {
        loaded.vocabulary().id_of(f.vocab.token_of(gram[0])),
        loaded.vocabulary().id_of(f.vocab.token_of(gram[1]))};
    TokenId lw = loaded.vocabulary().id_of(f.vocab.token_of(gram[2]));
    double pm = m.prob(ctx, gram[2]);
    double pl = loaded.prob(lctx, lw);
    CHECK(pl == doctest::Approx(pm).epsilon(1e-4));
  }

  // in-memory and file-backed scoring agree on fresh sentences
  for (const char* line : {"the cat sat", "a dog ran far", "the dog ran"}) {
    auto s = text::encode(f.vocab, text::tokenize(line));
    text::EncodedSentence sl;
    for (TokenId id : s.ids)
      sl.ids.push_back(loaded.vocabulary().id_of(f.vocab.token_of(id)));
    CHECK(loaded.sentence_logprob(sl) ==
          doctest::Approx(m.sentence_logprob(s)).epsilon(1e-3));
  }

  std::remove(path.c_str());
}

TEST_CASE("arpa: declared entry counts must match section lengths") {
  std::string path = "broken.arpa";
  {
    std::ofstream out(path);
    out << "\\data\\\n";
    out << "ngram 1=3\n";
    out << "\n\\1-grams:\n";
    out << "-0.5\ta\n";
    out << "-0.7\tb\n";
    out << "\n\\end\\\n";
  }
  CHECK_THROWS_WITH_AS(NgramModel::import_arpa(path), doctest::Contains(":"),
                       Error);
  std::remove(path.c_str());
}

TEST_CASE("arpa: malformed probability reports the line number") {
  std::string path = "garbage.arpa";
  {
    std::ofstream out(path);
    out << "\\data\\\n";
    out << "ngram 1=1\n";
    out << "\n\\1-grams:\n";
    out << "oops\ta\n";
    out << "\n\\end\\\n";
  }
  CHECK_THROWS_WITH_AS(NgramModel::import_arpa(path), doctest::Contains(":5"),
                       Error);
  std::remove(path.c_str());
}

TEST_CASE("arpa: only smoothed models export") {
  auto f = make_fixture({"a b"});
  auto m = NgramModel::build(f.corpus, 2, Smoothing::kMle, f.vocab);
  CHECK_THROWS_AS(m.export_arpa("nope.arpa"), Error);
}
