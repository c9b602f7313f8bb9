#include "seqforge/langmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace seqforge::lm {

NlmModel::NlmModel(size_t order, size_t vocab, size_t emb_dim, size_t hidden,
                   Rng& rng)
    : order_(order) {
  if (order < 2) throw Error("a feedforward n-gram model needs order >= 2");
  size_t ctx = order - 1;
  emb = Parameter("emb", nn::init_weight(vocab, emb_dim, rng));
  w = Parameter("w", nn::init_weight(hidden, ctx * emb_dim, rng));
  b = Parameter("b", Tensor({hidden, 1}));
  v_out = Parameter("v_out", nn::init_weight(vocab, hidden, rng));
  c_out = Parameter("c_out", Tensor({vocab, 1}));
}

size_t NlmModel::vocab_size() const { return emb.tensor.rows(); }

std::vector<Parameter*> NlmModel::parameters() {
  return {&emb, &w, &b, &v_out, &c_out};
}

namespace {

// one embedded column block per context position, stacked by rows
int context_block(Graph& g, Parameter& emb,
                  const std::vector<std::vector<text::TokenId>>& contexts) {
  size_t positions = contexts[0].size();
  std::vector<int> parts;
  parts.reserve(positions);
  for (size_t j = 0; j < positions; ++j) {
    std::vector<int> column;
    column.reserve(contexts.size());
    for (const auto& ctx : contexts) column.push_back(ctx[j]);
    parts.push_back(g.embed(g.param(emb), column));
  }
  return parts.size() == 1 ? parts[0] : g.concat_rows(parts);
}

}  // namespace

int NlmModel::build_loss(Graph& g,
                         const std::vector<std::vector<TokenId>>& contexts,
                         const std::vector<TokenId>& targets) {
  if (contexts.empty() || contexts.size() != targets.size())
    throw Error("contexts and targets must align");
  for (const auto& c : contexts)
    if (c.size() != order_ - 1)
      throw Error("context length must be exactly order - 1");
  int p = context_block(g, emb, contexts);
  int h = g.tanh(nn::affine(g, p, g.param(w), g.param(b)));
  int logits = nn::affine(g, h, g.param(v_out), g.param(c_out));
  return g.cross_entropy(logits, targets);
}

nn::OutputDistribution NlmModel::predict(const std::vector<TokenId>& context) {
  if (context.size() != order_ - 1)
    throw Error("context length must be exactly order - 1");
  Graph g;
  int p = context_block(g, emb, {context});
  int h = g.tanh(nn::affine(g, p, g.param(w), g.param(b)));
  int dist = nn::categorical_head(g, h, g.param(v_out), g.param(c_out));
  g.forward({});
  return {nn::OutputDistribution::Kind::kCategorical, g.value(dist), {}};
}

double NlmModel::sentence_logprob(const EncodedSentence& s) const {
  auto& self = const_cast<NlmModel&>(*this);
  std::vector<TokenId> history(order_ - 1, text::kBos);
  double total = 0.0;
  auto step = [&](TokenId wid) {
    std::vector<TokenId> ctx(history.end() - static_cast<long>(order_ - 1),
                             history.end());
    auto dist = self.predict(ctx);
    total += std::log(std::max(dist.mean[static_cast<size_t>(wid)], 1e-300));
    history.push_back(wid);
  };
  for (TokenId wid : s.ids) step(wid);
  step(text::kEos);
  return total;
}

CbowModel::CbowModel(size_t window, size_t vocab, size_t emb_dim, Rng& rng)
    : window_(window) {
  if (window < 1) throw Error("window must be at least 1");
  emb = Parameter("emb", nn::init_weight(vocab, emb_dim, rng));
}

Tensor CbowModel::conditional_dist(const std::vector<TokenId>& left,
                                   const std::vector<TokenId>& right) {
  Graph g;
  std::vector<TokenId> ctx;
  ctx.insert(ctx.end(), left.begin(), left.end());
  ctx.insert(ctx.end(), right.begin(), right.end());
  int ep = g.param(emb);
  int logits;
  if (ctx.empty()) {
    // empty window: bias-free logits are all zero
    logits = g.constant(Tensor({emb.tensor.rows(), 1}));
  } else {
    int s = g.sum_cols(g.embed(ep, ctx));
    logits = g.matmul(ep, s);
  }
  int dist = g.softmax(logits);
  g.forward({});
  return g.value(dist);
}

double CbowModel::conditional(const std::vector<TokenId>& left,
                              const std::vector<TokenId>& right, TokenId w) {
  return conditional_dist(left, right)[static_cast<size_t>(w)];
}

std::vector<TokenId> CbowModel::window_of(const EncodedSentence& s, size_t pos,
                                          bool* any) const {
  std::vector<TokenId> ctx;
  for (size_t k = 1; k <= window_; ++k) {
    if (pos >= k) ctx.push_back(s.ids[pos - k]);
    if (pos + k < s.size()) ctx.push_back(s.ids[pos + k]);
  }
  if (any) *any = !ctx.empty();
  return ctx;
}

int CbowModel::build_position_loss(Graph& g, const EncodedSentence& s,
                                   size_t pos) {
  bool any = false;
  auto ctx = window_of(s, pos, &any);
  int ep = g.param(emb);
  int logits;
  if (any) {
    int sum = g.sum_cols(g.embed(ep, ctx));
    logits = g.matmul(ep, sum);
  } else {
    logits = g.constant(Tensor({emb.tensor.rows(), 1}));
  }
  return g.cross_entropy(logits, {s.ids[pos]});
}

double CbowModel::pseudo_loglik(const EncodedSentence& s) {
  if (s.size() < 1) throw Error("pseudo-likelihood of an empty sentence");
  double total = 0.0;
  for (size_t pos = 0; pos < s.size(); ++pos) {
    auto ctx = window_of(s, pos, nullptr);
    total += std::log(std::max(conditional(ctx, {}, s.ids[pos]), 1e-300));
  }
  return total;
}

RnnLmModel::RnnLmModel(nn::CellKind kind, size_t vocab, size_t emb_dim,
                       size_t hidden, Rng& rng)
    : emb_dim_(emb_dim), hidden_(hidden) {
  emb = Parameter("emb", nn::init_weight(vocab, emb_dim, rng));
  cell_.init(kind, "cell", hidden, emb_dim, rng);
  v_out = Parameter("v_out", nn::init_weight(vocab, hidden, rng));
  c_out = Parameter("c_out", Tensor({vocab, 1}));
}

std::vector<Parameter*> RnnLmModel::parameters() {
  auto ps = cell_.parameters();
  ps.insert(ps.begin(), &emb);
  ps.push_back(&v_out);
  ps.push_back(&c_out);
  return ps;
}

int RnnLmModel::build_loss(Graph& g, const text::Minibatch& batch) {
  size_t m = batch.rows();
  if (m == 0) throw Error("empty minibatch");
  size_t width = batch.width();
  auto state = nn::cell_start(g, cell_.kind, hidden_, m);
  int total = -1;
  for (size_t t = 0; t <= width; ++t) {
    std::vector<TokenId> inputs(m), targets(m);
    std::vector<double> weights(m);
    for (size_t i = 0; i < m; ++i) {
      size_t len = batch.lengths[i];
      inputs[i] = t == 0 ? text::kBos
                         : (t - 1 < len ? batch.ids[i][t - 1] : text::kPad);
      if (t < len) {
        targets[i] = batch.ids[i][t];
        weights[i] = 1.0;
      } else if (t == len) {
        targets[i] = text::kEos;
        weights[i] = 1.0;
      } else {
        targets[i] = text::kPad;
        weights[i] = 0.0;
      }
    }
    int x = g.embed(g.param(emb), inputs);
    state = nn::cell_step(g, cell_, x, state);
    int logits = nn::affine(g, state.h, g.param(v_out), g.param(c_out));
    int step_cost = g.cross_entropy(logits, targets, weights);
    total = total < 0 ? step_cost : g.add(total, step_cost);
  }
  return total;
}

RnnlmScore RnnLmModel::score(const EncodedSentence& s) const {
  auto& self = const_cast<RnnLmModel&>(*this);
  Graph g;
  auto state = nn::cell_start(g, cell_.kind, hidden_, 1);
  std::vector<int> heads;
  for (size_t t = 0; t <= s.size(); ++t) {
    TokenId prev = t == 0 ? text::kBos : s.ids[t - 1];
    int x = g.embed(g.param(self.emb), {prev});
    state = nn::cell_step(g, self.cell_, x, state);
    heads.push_back(nn::categorical_head(g, state.h, g.param(self.v_out),
                                         g.param(self.c_out)));
  }
  g.forward({});
  RnnlmScore out;
  out.logprob = 0.0;
  for (size_t t = 0; t <= s.size(); ++t) {
    TokenId target = t < s.size() ? s.ids[t] : text::kEos;
    const Tensor& dist = g.value(heads[t]);
    out.logprob += std::log(std::max(dist[static_cast<size_t>(target)], 1e-300));
    out.step_dists.push_back(dist);
  }
  return out;
}

double RnnLmModel::sentence_logprob(const EncodedSentence& s) const {
  return score(s).logprob;
}

std::vector<std::pair<TokenId, double>> nearest_words(const Tensor& emb,
                                                      TokenId query, size_t k) {
  size_t v = emb.rows(), d = emb.cols();
  if (query < 0 || static_cast<size_t>(query) >= v)
    throw Error("query id out of range");
  if (k >= v) throw Error("k must be smaller than the vocabulary");
  auto row_norm = [&](size_t r) {
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) s += emb.at(r, j) * emb.at(r, j);
    return std::sqrt(s);
  };
  double qn = row_norm(static_cast<size_t>(query));
  if (qn == 0.0) throw Error("query embedding has zero norm");
  std::vector<std::pair<TokenId, double>> scored;
  for (size_t r = 0; r < v; ++r) {
    if (static_cast<TokenId>(r) == query) continue;
    double rn = row_norm(r);
    double cosine = 0.0;
    if (rn > 0.0) {
      for (size_t j = 0; j < d; ++j)
        cosine += emb.at(static_cast<size_t>(query), j) * emb.at(r, j);
      cosine /= qn * rn;
    }
    scored.emplace_back(static_cast<TokenId>(r), cosine);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  scored.resize(k);
  return scored;
}

void export_embeddings(const std::string& path, const Tensor& emb,
                       const text::Vocabulary& vocab) {
  if (emb.rows() != vocab.size())
    throw Error("embedding rows must match the vocabulary size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedding file " + path);
  out.imbue(std::locale::classic());
  out << emb.rows() << " " << emb.cols() << "\n";
  out << std::fixed << std::setprecision(6);
  for (size_t r = 0; r < emb.rows(); ++r) {
    out << vocab.token_of(static_cast<text::TokenId>(r));
    for (size_t j = 0; j < emb.cols(); ++j) out << " " << emb.at(r, j);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

NlmTask::NlmTask(NlmModel& model, const std::vector<EncodedSentence>& train,
                 const std::vector<EncodedSentence>& val)
    : model_(model),
      train_rows_(explode(train, model.order())),
      val_rows_(explode(val, model.order())) {
  if (train_rows_.empty() || val_rows_.empty())
    throw Error("empty dataset for neural language model training");
}

std::vector<NlmTask::Row> NlmTask::explode(
    const std::vector<EncodedSentence>& corpus, size_t order) {
  std::vector<Row> rows;
  for (const auto& s : corpus) {
    std::vector<TokenId> padded(order - 1, text::kBos);
    padded.insert(padded.end(), s.ids.begin(), s.ids.end());
    padded.push_back(text::kEos);
    for (size_t t = order - 1; t < padded.size(); ++t)
      rows.emplace_back(
          std::vector<TokenId>(padded.begin() + static_cast<long>(t - order + 1),
                               padded.begin() + static_cast<long>(t)),
          padded[t]);
  }
  return rows;
}

double NlmTask::batch_cost_and_grad(const std::vector<size_t>& rows) {
  Graph g;
  std::vector<std::vector<TokenId>> contexts;
  std::vector<TokenId> targets;
  for (size_t r : rows) {
    contexts.push_back(train_rows_[r].first);
    targets.push_back(train_rows_[r].second);
  }
  int cost = model_.build_loss(g, contexts, targets);
  g.forward({});
  g.backward(cost);
  return g.value(cost)[0];
}

double NlmTask::set_cost(const std::vector<Row>& rows) {
  double total = 0.0;
  for (size_t off = 0; off < rows.size(); off += 256) {
    size_t take = std::min<size_t>(256, rows.size() - off);
    Graph g;
    std::vector<std::vector<TokenId>> contexts;
    std::vector<TokenId> targets;
    for (size_t i = 0; i < take; ++i) {
      contexts.push_back(rows[off + i].first);
      targets.push_back(rows[off + i].second);
    }
    int cost = model_.build_loss(g, contexts, targets);
    g.forward({});
    total += g.value(cost)[0];
  }
  return total / static_cast<double>(rows.size());
}

double NlmTask::train_cost() { return set_cost(train_rows_); }
double NlmTask::val_cost() { return set_cost(val_rows_); }

CbowTask::CbowTask(CbowModel& model, std::vector<EncodedSentence> train,
                   std::vector<EncodedSentence> val)
    : model_(model), train_(std::move(train)), val_(std::move(val)) {
  for (size_t s = 0; s < train_.size(); ++s)
    for (size_t p = 0; p < train_[s].size(); ++p) train_rows_.emplace_back(s, p);
  if (train_rows_.empty() || val_.empty())
    throw Error("empty dataset for window model training");
}

double CbowTask::batch_cost_and_grad(const std::vector<size_t>& rows) {
  double total = 0.0;
  for (size_t r : rows) {
    auto [s, p] = train_rows_[r];
    Graph g;
    int cost = model_.build_position_loss(g, train_[s], p);
    g.forward({});
    g.backward(cost);
    total += g.value(cost)[0];
  }
  return total;
}

double CbowTask::set_cost(const std::vector<EncodedSentence>& corpus) {
  double total = 0.0;
  size_t n = 0;
  for (const auto& s : corpus) {
    if (s.size() == 0) continue;
    total += -model_.pseudo_loglik(s);
    ++n;
  }
  return total / static_cast<double>(std::max<size_t>(1, n));
}

double CbowTask::train_cost() { return set_cost(train_); }
double CbowTask::val_cost() { return set_cost(val_); }

RnnLmTask::RnnLmTask(RnnLmModel& model, std::vector<EncodedSentence> train,
                     std::vector<EncodedSentence> val, size_t score_batch)
    : model_(model),
      train_(std::move(train)),
      val_(std::move(val)),
      score_batch_(score_batch) {
  if (train_.empty() || val_.empty())
    throw Error("empty dataset for recurrent language model training");
}

double RnnLmTask::batch_cost_and_grad(const std::vector<size_t>& rows) {
  std::vector<EncodedSentence> subset;
  subset.reserve(rows.size());
  for (size_t r : rows) subset.push_back(train_[r]);
  auto batches = text::make_batches(subset, subset.size(), false, 0);
  Graph g;
  int cost = model_.build_loss(g, batches[0]);
  g.forward({});
  g.backward(cost);
  return g.value(cost)[0];
}

double RnnLmTask::set_cost(const std::vector<EncodedSentence>& corpus) {
  double total = 0.0;
  auto batches = text::make_batches(corpus, score_batch_, true, 0);
  for (const auto& batch : batches) {
    Graph g;
    int cost = model_.build_loss(g, batch);
    g.forward({});
    total += g.value(cost)[0];
  }
  return total / static_cast<double>(corpus.size());
}

double RnnLmTask::train_cost() { return set_cost(train_); }
double RnnLmTask::val_cost() { return set_cost(val_); }

double RnnLmTask::val_tokens() const {
  double n = 0;
  for (const auto& s : val_) n += static_cast<double>(s.size() + 1);
  return n;
}

}  // namespace seqforge::lm
