#include "seqforge/nn.hpp"

#include <cmath>

namespace seqforge::nn {

Tensor init_weight(size_t rows, size_t cols, Rng& rng) {
  double s = 1.0 / std::sqrt(static_cast<double>(cols));
  Tensor t({rows, cols});
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-s, s);
  return t;
}

int affine(Graph& g, int x, int w, int b) {
  return g.add_bias(g.matmul(w, x), b);
}

int activate(Graph& g, Act a, int x) {
  switch (a) {
    case Act::kSigmoid: return g.sigmoid(x);
    case Act::kTanh: return g.tanh(x);
    case Act::kRect: return g.rect(x);
  }
  throw Error("unknown activation");
}

int activate(Graph& g, Maxout m, int x) { return g.maxout(x, m.rank); }

int embed(Graph& g, int table, int token_id) {
  return g.embed(table, {token_id});
}

void RnnParams::init(const std::string& prefix, size_t d_h, size_t d_in, Rng& rng) {
  w = Parameter(prefix + ".w", init_weight(d_h, d_in, rng));
  u = Parameter(prefix + ".u", init_weight(d_h, d_h, rng));
  b = Parameter(prefix + ".b", Tensor({d_h, 1}));
}

std::vector<Parameter*> RnnParams::parameters() { return {&w, &u, &b}; }

void GruParams::init(const std::string& prefix, size_t d_h, size_t d_in, Rng& rng) {
  w = Parameter(prefix + ".w", init_weight(d_h, d_in, rng));
  u = Parameter(prefix + ".u", init_weight(d_h, d_h, rng));
  b = Parameter(prefix + ".b", Tensor({d_h, 1}));
  wr = Parameter(prefix + ".wr", init_weight(d_h, d_in, rng));
  ur = Parameter(prefix + ".ur", init_weight(d_h, d_h, rng));
  br = Parameter(prefix + ".br", Tensor({d_h, 1}));
  wu = Parameter(prefix + ".wu", init_weight(d_h, d_in, rng));
  uu = Parameter(prefix + ".uu", init_weight(d_h, d_h, rng));
  bu = Parameter(prefix + ".bu", Tensor({d_h, 1}));
}

std::vector<Parameter*> GruParams::parameters() {
  return {&w, &u, &b, &wr, &ur, &br, &wu, &uu, &bu};
}

void LstmParams::init(const std::string& prefix, size_t d_h, size_t d_in, Rng& rng) {
  wc = Parameter(prefix + ".wc", init_weight(d_h, d_in, rng));
  uc = Parameter(prefix + ".uc", init_weight(d_h, d_h, rng));
  bc = Parameter(prefix + ".bc", Tensor({d_h, 1}));
  wf = Parameter(prefix + ".wf", init_weight(d_h, d_in, rng));
  uf = Parameter(prefix + ".uf", init_weight(d_h, d_h, rng));
  bf = Parameter(prefix + ".bf", Tensor({d_h, 1}));
  wi = Parameter(prefix + ".wi", init_weight(d_h, d_in, rng));
  ui = Parameter(prefix + ".ui", init_weight(d_h, d_h, rng));
  bi = Parameter(prefix + ".bi", Tensor({d_h, 1}));
  wo = Parameter(prefix + ".wo", init_weight(d_h, d_in, rng));
  uo = Parameter(prefix + ".uo", init_weight(d_h, d_h, rng));
  bo = Parameter(prefix + ".bo", Tensor({d_h, 1}));
}

std::vector<Parameter*> LstmParams::parameters() {
  return {&wc, &uc, &bc, &wf, &uf, &bf, &wi, &ui, &bi, &wo, &uo, &bo};
}

int rnn_step(Graph& g, RnnParams& p, int x_emb, int h_prev, Act act) {
  int pre = g.add_bias(g.add(g.matmul(g.param(p.w), x_emb),
                             g.matmul(g.param(p.u), h_prev)),
                       g.param(p.b));
  return activate(g, act, pre);
}

int gru_combine(Graph& g, int u, int h_prev, int h_cand) {
  return g.add(g.mul(g.one_minus(u), h_prev), g.mul(u, h_cand));
}

int lstm_combine(Graph& g, int f, int i, int c_prev, int c_cand) {
  return g.add(g.mul(f, c_prev), g.mul(i, c_cand));
}

GruOut gru_step(Graph& g, GruParams& p, int x_emb, int h_prev) {
  int r = g.sigmoid(g.add_bias(g.add(g.matmul(g.param(p.wr), x_emb),
                                     g.matmul(g.param(p.ur), h_prev)),
                               g.param(p.br)));
  int gated = g.mul(r, h_prev);
  int u_src = p.parallel_gates ? h_prev : gated;
  int u = g.sigmoid(g.add_bias(g.add(g.matmul(g.param(p.wu), x_emb),
                                     g.matmul(g.param(p.uu), u_src)),
                               g.param(p.bu)));
  int cand = g.tanh(g.add_bias(g.add(g.matmul(g.param(p.w), x_emb),
                                     g.matmul(g.param(p.u), gated)),
                               g.param(p.b)));
  return {gru_combine(g, u, h_prev, cand), u, r, cand};
}

LstmOut lstm_step(Graph& g, LstmParams& p, int x_emb, int h_prev, int c_prev) {
  auto gate = [&](Parameter& w, Parameter& u, Parameter& b) {
    return g.sigmoid(g.add_bias(g.add(g.matmul(g.param(w), x_emb),
                                      g.matmul(g.param(u), h_prev)),
                                g.param(b)));
  };
  int f = gate(p.wf, p.uf, p.bf);
  int i = gate(p.wi, p.ui, p.bi);
  int o = gate(p.wo, p.uo, p.bo);
  int cand = g.tanh(g.add_bias(g.add(g.matmul(g.param(p.wc), x_emb),
                                     g.matmul(g.param(p.uc), h_prev)),
                               g.param(p.bc)));
  int c = lstm_combine(g, f, i, c_prev, cand);
  int h = g.mul(o, g.tanh(c));
  return {h, c, f, i, o};
}

CellKind cell_kind_from(const std::string& name) {
  if (name == "simple") return CellKind::kSimple;
  if (name == "gru") return CellKind::kGru;
  if (name == "lstm") return CellKind::kLstm;
  throw Error("unknown cell kind: " + name);
}

const char* cell_kind_name(CellKind k) {
  switch (k) {
    case CellKind::kSimple: return "simple";
    case CellKind::kGru: return "gru";
    case CellKind::kLstm: return "lstm";
  }
  return "?";
}

void CellParams::init(CellKind k, const std::string& prefix, size_t d_h,
                      size_t d_in, Rng& rng) {
  kind = k;
  switch (kind) {
    case CellKind::kSimple: rnn.init(prefix, d_h, d_in, rng); break;
    case CellKind::kGru: gru.init(prefix, d_h, d_in, rng); break;
    case CellKind::kLstm: lstm.init(prefix, d_h, d_in, rng); break;
  }
}

std::vector<Parameter*> CellParams::parameters() {
  switch (kind) {
    case CellKind::kSimple: return rnn.parameters();
    case CellKind::kGru: return gru.parameters();
    case CellKind::kLstm: return lstm.parameters();
  }
  return {};
}

CellState cell_start(Graph& g, CellKind kind, size_t d_h, size_t batch) {
  CellState s;
  s.h = g.constant(Tensor({d_h, batch}));
  if (kind == CellKind::kLstm) s.c = g.constant(Tensor({d_h, batch}));
  return s;
}

CellState cell_step(Graph& g, CellParams& p, int x_emb, const CellState& prev) {
  CellState out;
  switch (p.kind) {
    case CellKind::kSimple:
      out.h = rnn_step(g, p.rnn, x_emb, prev.h);
      break;
    case CellKind::kGru:
      out.h = gru_step(g, p.gru, x_emb, prev.h).h;
      break;
    case CellKind::kLstm: {
      auto r = lstm_step(g, p.lstm, x_emb, prev.h, prev.c);
      out.h = r.h;
      out.c = r.c;
      break;
    }
  }
  return out;
}

int categorical_head(Graph& g, int h, int v_out, int c) {
  return g.softmax(affine(g, h, v_out, c));
}

int bernoulli_loss(Graph& g, int mu, std::vector<double> y) {
  return g.bernoulli_nll(mu, std::move(y));
}

int categorical_loss(Graph& g, int probs, int class_index) {
  return g.pick_nll(probs, {class_index});
}

int gaussian_loss(Graph& g, int mu, int sigma, std::vector<double> y) {
  return g.gaussian_nll(mu, sigma, std::move(y));
}

}  // namespace seqforge::nn
