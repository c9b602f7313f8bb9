#pragma once

#include <optional>

#include "seqforge/graph.hpp"
#include "seqforge/rng.hpp"

namespace seqforge::nn {

enum class Act { kSigmoid, kTanh, kRect };

struct Maxout {
  int rank;
};

// weights uniform in (-s, s) with s = 1 / sqrt(fan_in); biases zero
Tensor init_weight(size_t rows, size_t cols, Rng& rng);

int affine(Graph& g, int x, int w, int b);
int activate(Graph& g, Act a, int x);
int activate(Graph& g, Maxout m, int x);

// single row lookup; batched lookups go through Graph::embed directly
int embed(Graph& g, int table, int token_id);

struct RnnParams {
  Parameter w, u, b;
  void init(const std::string& prefix, size_t d_h, size_t d_in, Rng& rng);
  std::vector<Parameter*> parameters();
};

struct GruParams {
  Parameter w, u, b;     // candidate state
  Parameter wr, ur, br;  // reset gate
  Parameter wu, uu, bu;  // update gate
  // When set, the update gate reads h_prev directly instead of r (.) h_prev,
  // removing the serial dependency between the two gates.
  bool parallel_gates = false;
  void init(const std::string& prefix, size_t d_h, size_t d_in, Rng& rng);
  std::vector<Parameter*> parameters();
};

struct LstmParams {
  Parameter wc, uc, bc;  // candidate memory
  Parameter wf, uf, bf;  // forget gate
  Parameter wi, ui, bi;  // input gate
  Parameter wo, uo, bo;  // output gate
  void init(const std::string& prefix, size_t d_h, size_t d_in, Rng& rng);
  std::vector<Parameter*> parameters();
};

int rnn_step(Graph& g, RnnParams& p, int x_emb, int h_prev, Act act = Act::kTanh);

struct GruOut {
  int h, u, r, h_cand;
};
GruOut gru_step(Graph& g, GruParams& p, int x_emb, int h_prev);

struct LstmOut {
  int h, c, f, i, o;
};
LstmOut lstm_step(Graph& g, LstmParams& p, int x_emb, int h_prev, int c_prev);

// state interpolation used by the gated cells, exposed for inspection
int gru_combine(Graph& g, int u, int h_prev, int h_cand);
int lstm_combine(Graph& g, int f, int i, int c_prev, int c_cand);

enum class CellKind { kSimple, kGru, kLstm };

CellKind cell_kind_from(const std::string& name);
const char* cell_kind_name(CellKind k);

// One recurrent cell of any kind behind a single step interface. The memory
// node is unused except for the LSTM.
struct CellParams {
  CellKind kind = CellKind::kSimple;
  RnnParams rnn;
  GruParams gru;
  LstmParams lstm;
  void init(CellKind k, const std::string& prefix, size_t d_h, size_t d_in,
            Rng& rng);
  std::vector<Parameter*> parameters();
};

struct CellState {
  int h = -1;
  int c = -1;  // LSTM memory; -1 elsewhere
};

CellState cell_start(Graph& g, CellKind kind, size_t d_h, size_t batch);
CellState cell_step(Graph& g, CellParams& p, int x_emb, const CellState& prev);

// softmax(v_out h + c)
int categorical_head(Graph& g, int h, int v_out, int c);

// Distribution produced by an output head.
struct OutputDistribution {
  enum class Kind { kBernoulli, kCategorical, kGaussian } kind;
  Tensor mean;    // bernoulli/categorical probabilities or gaussian means
  Tensor stddev;  // gaussian only
};

// Per-sample negative log-likelihood nodes matching the output heads.
int bernoulli_loss(Graph& g, int mu, std::vector<double> y);
int categorical_loss(Graph& g, int probs, int class_index);
int gaussian_loss(Graph& g, int mu, int sigma, std::vector<double> y);

}  // namespace seqforge::nn
