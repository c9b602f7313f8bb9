#pragma once

#include "seqforge/eval.hpp"
#include "seqforge/nn.hpp"
#include "seqforge/optim.hpp"
#include "seqforge/text.hpp"

namespace seqforge::lm {

using text::EncodedSentence;
using text::TokenId;

// Feedforward n-gram language model: embedded context words concatenated,
// one tanh layer, softmax output.
class NlmModel : public eval::SentenceScorer {
 public:
  NlmModel() = default;
  NlmModel(size_t order, size_t vocab, size_t emb_dim, size_t hidden, Rng& rng);

  size_t order() const { return order_; }
  size_t vocab_size() const;
  std::vector<Parameter*> parameters();

  // distribution over the next word for exactly order-1 context ids
  nn::OutputDistribution predict(const std::vector<TokenId>& context);

  // categorical cross-entropy over (context, target) rows, summed
  int build_loss(Graph& g, const std::vector<std::vector<TokenId>>& contexts,
                 const std::vector<TokenId>& targets);

  double sentence_logprob(const EncodedSentence& s) const override;

  Parameter emb, w, b, v_out, c_out;

 private:
  size_t order_ = 2;
};

// Word-window model with one shared embedding matrix on both sides; trained
// and scored by pseudo-likelihood, not a normalized sentence probability.
class CbowModel {
 public:
  CbowModel() = default;
  CbowModel(size_t window, size_t vocab, size_t emb_dim, Rng& rng);

  size_t window() const { return window_; }
  std::vector<Parameter*> parameters() { return {&emb}; }

  // p(w | left, right); absent edge positions simply drop out of the sum
  double conditional(const std::vector<TokenId>& left,
                     const std::vector<TokenId>& right, TokenId w);
  Tensor conditional_dist(const std::vector<TokenId>& left,
                          const std::vector<TokenId>& right);

  // sum of log conditionals of every position given its window
  double pseudo_loglik(const EncodedSentence& s);

  // loss node for one position of one sentence
  int build_position_loss(Graph& g, const EncodedSentence& s, size_t pos);

  Parameter emb;

 private:
  std::vector<TokenId> window_of(const EncodedSentence& s, size_t pos,
                                 bool* any) const;
  size_t window_ = 1;
};

struct RnnlmScore {
  double logprob;
  std::vector<Tensor> step_dists;  // one distribution per predicted token
};

class RnnLmModel : public eval::SentenceScorer {
 public:
  RnnLmModel() = default;
  RnnLmModel(nn::CellKind kind, size_t vocab, size_t emb_dim, size_t hidden,
             Rng& rng);

  nn::CellKind cell_kind() const { return cell_.kind; }
  size_t hidden() const { return hidden_; }
  size_t emb_dim() const { return emb_dim_; }
  size_t vocab_size() const { return emb.tensor.rows(); }
  std::vector<Parameter*> parameters();

  // masked, batched training loss (sum over the batch); every row is scored
  // on its tokens plus the terminal </s>
  int build_loss(Graph& g, const text::Minibatch& batch);

  RnnlmScore score(const EncodedSentence& s) const;
  double sentence_logprob(const EncodedSentence& s) const override;

  Parameter emb, v_out, c_out;
  nn::CellParams cell_;

 private:
  size_t emb_dim_ = 0, hidden_ = 0;
};

// top-k rows of the embedding matrix by cosine similarity, query excluded,
// ties broken by id
std::vector<std::pair<TokenId, double>> nearest_words(const Tensor& emb,
                                                      TokenId query, size_t k);

// header line "|V| d", then one line per token with six-decimal components
void export_embeddings(const std::string& path, const Tensor& emb,
                       const text::Vocabulary& vocab);

// Shared SGD adapters ------------------------------------------------------

class NlmTask : public optim::SgdTask {
 public:
  NlmTask(NlmModel& model, const std::vector<EncodedSentence>& train,
          const std::vector<EncodedSentence>& val);
  size_t train_size() const override { return train_rows_.size(); }
  std::vector<Parameter*> parameters() override { return model_.parameters(); }
  double batch_cost_and_grad(const std::vector<size_t>& rows) override;
  double train_cost() override;
  double val_cost() override;

 private:
  using Row = std::pair<std::vector<TokenId>, TokenId>;
  static std::vector<Row> explode(const std::vector<EncodedSentence>& corpus,
                                  size_t order);
  double set_cost(const std::vector<Row>& rows);
  NlmModel& model_;
  std::vector<Row> train_rows_, val_rows_;
};

class CbowTask : public optim::SgdTask {
 public:
  CbowTask(CbowModel& model, std::vector<EncodedSentence> train,
           std::vector<EncodedSentence> val);
  size_t train_size() const override { return train_rows_.size(); }
  std::vector<Parameter*> parameters() override { return model_.parameters(); }
  double batch_cost_and_grad(const std::vector<size_t>& rows) override;
  double train_cost() override;
  double val_cost() override;

 private:
  using Row = std::pair<size_t, size_t>;  // sentence, position
  CbowModel& model_;
  std::vector<EncodedSentence> train_, val_;
  std::vector<Row> train_rows_;
  double set_cost(const std::vector<EncodedSentence>& corpus);
};

class RnnLmTask : public optim::SgdTask {
 public:
  RnnLmTask(RnnLmModel& model, std::vector<EncodedSentence> train,
            std::vector<EncodedSentence> val, size_t score_batch = 64);
  size_t train_size() const override { return train_.size(); }
  std::vector<Parameter*> parameters() override { return model_.parameters(); }
  double batch_cost_and_grad(const std::vector<size_t>& rows) override;
  double train_cost() override;
  double val_cost() override;
  double val_tokens() const;

 private:
  double set_cost(const std::vector<EncodedSentence>& corpus);
  RnnLmModel& model_;
  std::vector<EncodedSentence> train_, val_;
  size_t score_batch_;
};

}  // namespace seqforge::lm
