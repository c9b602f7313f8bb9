#include "seqforge/graph.hpp"

#include <algorithm>
#include <cmath>

namespace seqforge {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConst: return "const";
    case Op::kParam: return "parameter";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kAddBias: return "add-bias";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kOneMinus: return "one-minus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRect: return "rectifier";
    case Op::kMaxout: return "maxout";
    case Op::kSoftmax: return "softmax";
    case Op::kConcatRows: return "concat-rows";
    case Op::kSliceRows: return "slice-rows";
    case Op::kBroadcastCols: return "broadcast-cols";
    case Op::kBroadcastRows: return "broadcast-rows";
    case Op::kSumCols: return "sum-cols";
    case Op::kSumAll: return "sum-all";
    case Op::kEmbed: return "embed";
    case Op::kCrossEntropy: return "cross-entropy";
    case Op::kPickNll: return "pick-nll";
    case Op::kBernoulliNll: return "bernoulli-nll";
    case Op::kGaussianNll: return "gaussian-nll";
  }
  return "?";
}

int Graph::push(Node n) {
  for (int in : n.inputs)
    if (in < 0 || static_cast<size_t>(in) >= nodes_.size())
      throw Error("node input must reference an earlier node");
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input() {
  Node n;
  n.op = Op::kInput;
  return push(std::move(n));
}

int Graph::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  n.has_value = true;
  return push(std::move(n));
}

int Graph::param(Parameter& p) {
  Node n;
  n.op = Op::kParam;
  n.param = &p;
  return push(std::move(n));
}

int Graph::matmul(int a, int b, bool ta, bool tb) {
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a, b};
  n.trans_a = ta;
  n.trans_b = tb;
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  return push(std::move(n));
}

int Graph::add_bias(int m, int bias) {
  Node n;
  n.op = Op::kAddBias;
  n.inputs = {m, bias};
  return push(std::move(n));
}

int Graph::mul(int a, int b) {
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  return push(std::move(n));
}

int Graph::scale(int a, double c) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a};
  n.factor = c;
  return push(std::move(n));
}

int Graph::one_minus(int a) {
  Node n;
  n.op = Op::kOneMinus;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::sigmoid(int a) {
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::tanh(int a) {
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::rect(int a) {
  Node n;
  n.op = Op::kRect;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::maxout(int a, int k) {
  if (k < 2) throw Error("maxout rank must be at least 2");
  Node n;
  n.op = Op::kMaxout;
  n.inputs = {a};
  n.group = k;
  return push(std::move(n));
}

int Graph::softmax(int a) {
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw Error("concat of zero tensors");
  Node n;
  n.op = Op::kConcatRows;
  n.inputs = parts;
  return push(std::move(n));
}

int Graph::slice_rows(int a, size_t begin, size_t end) {
  if (end <= begin) throw Error("empty row slice");
  Node n;
  n.op = Op::kSliceRows;
  n.inputs = {a};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

int Graph::broadcast_cols(int a, size_t cols) {
  Node n;
  n.op = Op::kBroadcastCols;
  n.inputs = {a};
  n.extent = cols;
  return push(std::move(n));
}

int Graph::broadcast_rows(int a, size_t rows) {
  Node n;
  n.op = Op::kBroadcastRows;
  n.inputs = {a};
  n.extent = rows;
  return push(std::move(n));
}

int Graph::sum_cols(int a) {
  Node n;
  n.op = Op::kSumCols;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::sum_all(int a) {
  Node n;
  n.op = Op::kSumAll;
  n.inputs = {a};
  return push(std::move(n));
}

int Graph::embed(int table, std::vector<int> ids) {
  if (ids.empty()) throw Error("embed with no ids");
  Node n;
  n.op = Op::kEmbed;
  n.inputs = {table};
  n.ids = std::move(ids);
  return push(std::move(n));
}

int Graph::cross_entropy(int logits, std::vector<int> targets,
                         std::vector<double> weights) {
  Node n;
  n.op = Op::kCrossEntropy;
  n.inputs = {logits};
  n.ids = std::move(targets);
  n.weights = std::move(weights);
  return push(std::move(n));
}

int Graph::pick_nll(int probs, std::vector<int> targets,
                    std::vector<double> weights) {
  Node n;
  n.op = Op::kPickNll;
  n.inputs = {probs};
  n.ids = std::move(targets);
  n.weights = std::move(weights);
  return push(std::move(n));
}

int Graph::bernoulli_nll(int mu, std::vector<double> y) {
  Node n;
  n.op = Op::kBernoulliNll;
  n.inputs = {mu};
  n.target = std::move(y);
  return push(std::move(n));
}

int Graph::gaussian_nll(int mu, int sigma, std::vector<double> y) {
  Node n;
  n.op = Op::kGaussianNll;
  n.inputs = {mu, sigma};
  n.target = std::move(y);
  return push(std::move(n));
}

void Graph::fail(int id, const std::string& what) const {
  throw Error("node #" + std::to_string(id) + " (" +
              op_name(nodes_[static_cast<size_t>(id)].op) + "): " + what);
}

static constexpr double kProbFloor = 1e-12;

void Graph::compute(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  auto in = [&](size_t i) -> const Tensor& {
    return nodes_[static_cast<size_t>(n.inputs[i])].value;
  };
  switch (n.op) {
    case Op::kInput:
      if (!n.has_value) fail(id, "unbound input");
      break;
    case Op::kConst:
      break;
    case Op::kParam:
      n.value = n.param->tensor;
      break;
    case Op::kMatMul:
      try {
        n.value = seqforge::matmul(in(0), n.trans_a, in(1), n.trans_b);
      } catch (const Error& e) {
        fail(id, e.what());
      }
      break;
    case Op::kAdd: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(id, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
      n.value = a;
      for (size_t i = 0; i < a.size(); ++i) n.value[i] += b[i];
      break;
    }
    case Op::kAddBias: {
      const Tensor& m = in(0);
      const Tensor& b = in(1);
      if (b.cols() != 1 || b.rows() != m.rows())
        fail(id, "bias shape " + b.shape_str() + " does not broadcast over " +
                     m.shape_str());
      n.value = m;
      size_t c = m.cols();
      for (size_t i = 0; i < m.rows(); ++i)
        for (size_t j = 0; j < c; ++j) n.value.data()[i * c + j] += b[i];
      break;
    }
    case Op::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(id, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
      n.value = a;
      for (size_t i = 0; i < a.size(); ++i) n.value[i] *= b[i];
      break;
    }
    case Op::kScale:
      n.value = in(0);
      for (size_t i = 0; i < n.value.size(); ++i) n.value[i] *= n.factor;
      break;
    case Op::kOneMinus:
      n.value = in(0);
      for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = 1.0 - n.value[i];
      break;
    case Op::kSigmoid:
      n.value = in(0);
      for (size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = 1.0 / (1.0 + std::exp(-n.value[i]));
      break;
    case Op::kTanh:
      n.value = in(0);
      for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(n.value[i]);
      break;
    case Op::kRect:
      n.value = in(0);
      for (size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = n.value[i] > 0.0 ? n.value[i] : 0.0;
      break;
    case Op::kMaxout: {
      const Tensor& x = in(0);
      size_t k = static_cast<size_t>(n.group);
      if (x.rows() % k != 0)
        fail(id, "row count " + std::to_string(x.rows()) +
                     " not divisible by rank " + std::to_string(k));
      size_t p = x.rows() / k, c = x.cols();
      n.value = Tensor({p, c});
      for (size_t g = 0; g < p; ++g)
        for (size_t j = 0; j < c; ++j) {
          double best = x.at(g * k, j);
          for (size_t r = 1; r < k; ++r)
            if (x.at(g * k + r, j) > best) best = x.at(g * k + r, j);
          n.value.at(g, j) = best;
        }
      break;
    }
    case Op::kSoftmax: {
      const Tensor& x = in(0);
      n.value = x;
      size_t r = x.rows(), c = x.cols();
      for (size_t j = 0; j < c; ++j) {
        double mx = x.at(0, j);
        for (size_t i = 1; i < r; ++i) mx = std::max(mx, x.at(i, j));
        double z = 0.0;
        for (size_t i = 0; i < r; ++i) {
          double e = std::exp(x.at(i, j) - mx);
          n.value.at(i, j) = e;
          z += e;
        }
        for (size_t i = 0; i < r; ++i) n.value.at(i, j) /= z;
      }
      break;
    }
    case Op::kConcatRows: {
      size_t cols = nodes_[static_cast<size_t>(n.inputs[0])].value.cols();
      size_t rows = 0;
      for (int p : n.inputs) {
        const Tensor& t = nodes_[static_cast<size_t>(p)].value;
        if (t.cols() != cols) fail(id, "column count mismatch in concat");
        rows += t.rows();
      }
      n.value = Tensor({rows, cols});
      size_t r0 = 0;
      for (int p : n.inputs) {
        const Tensor& t = nodes_[static_cast<size_t>(p)].value;
        for (size_t i = 0; i < t.rows(); ++i)
          for (size_t j = 0; j < cols; ++j) n.value.at(r0 + i, j) = t.at(i, j);
        r0 += t.rows();
      }
      break;
    }
    case Op::kSliceRows: {
      const Tensor& x = in(0);
      if (n.end > x.rows()) fail(id, "slice range exceeds " + x.shape_str());
      size_t rows = n.end - n.begin, c = x.cols();
      n.value = Tensor({rows, c});
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < c; ++j) n.value.at(i, j) = x.at(n.begin + i, j);
      break;
    }
    case Op::kBroadcastCols: {
      const Tensor& x = in(0);
      if (x.cols() != 1) fail(id, "expects a column vector, got " + x.shape_str());
      n.value = Tensor({x.rows(), n.extent});
      for (size_t i = 0; i < x.rows(); ++i)
        for (size_t j = 0; j < n.extent; ++j) n.value.at(i, j) = x[i];
      break;
    }
    case Op::kBroadcastRows: {
      const Tensor& x = in(0);
      if (x.rows() != 1) fail(id, "expects a row vector, got " + x.shape_str());
      n.value = Tensor({n.extent, x.cols()});
      for (size_t i = 0; i < n.extent; ++i)
        for (size_t j = 0; j < x.cols(); ++j) n.value.at(i, j) = x.at(0, j);
      break;
    }
    case Op::kSumCols: {
      const Tensor& x = in(0);
      n.value = Tensor({x.rows(), 1});
      for (size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < x.cols(); ++j) acc += x.at(i, j);
        n.value[i] = acc;
      }
      break;
    }
    case Op::kSumAll:
      n.value = Tensor::scalar(seqforge::sum(in(0)));
      break;
    case Op::kEmbed: {
      const Tensor& e = in(0);
      size_t d = e.cols(), m = n.ids.size();
      n.value = Tensor({d, m});
      for (size_t j = 0; j < m; ++j) {
        int row = n.ids[j];
        if (row < 0 || static_cast<size_t>(row) >= e.rows())
          fail(id, "token id " + std::to_string(row) + " out of range for " +
                       e.shape_str());
        for (size_t i = 0; i < d; ++i) n.value.at(i, j) = e.at(static_cast<size_t>(row), i);
      }
      break;
    }
    case Op::kCrossEntropy: {
      const Tensor& z = in(0);
      size_t r = z.rows(), c = z.cols();
      if (n.ids.size() != c) fail(id, "one target per column required");
      n.aux = z;  // softmax cache for backward
      double loss = 0.0;
      for (size_t j = 0; j < c; ++j) {
        int y = n.ids[j];
        if (y < 0 || static_cast<size_t>(y) >= r)
          fail(id, "target " + std::to_string(y) + " out of range");
        double w = n.weights.empty() ? 1.0 : n.weights[j];
        double mx = z.at(0, j);
        for (size_t i = 1; i < r; ++i) mx = std::max(mx, z.at(i, j));
        double den = 0.0;
        for (size_t i = 0; i < r; ++i) den += std::exp(z.at(i, j) - mx);
        double lse = mx + std::log(den);
        for (size_t i = 0; i < r; ++i)
          n.aux.at(i, j) = std::exp(z.at(i, j) - mx) / den;
        loss += w * (lse - z.at(static_cast<size_t>(y), j));
      }
      n.value = Tensor::scalar(loss);
      break;
    }
    case Op::kPickNll: {
      const Tensor& p = in(0);
      size_t r = p.rows(), c = p.cols();
      if (n.ids.size() != c) fail(id, "one target per column required");
      n.aux = Tensor({c});  // clamped picked probabilities
      double loss = 0.0;
      for (size_t j = 0; j < c; ++j) {
        int y = n.ids[j];
        if (y < 0 || static_cast<size_t>(y) >= r)
          fail(id, "target " + std::to_string(y) + " out of range");
        double w = n.weights.empty() ? 1.0 : n.weights[j];
        double v = p.at(static_cast<size_t>(y), j);
        if (v < kProbFloor || v > 1.0 - kProbFloor) ++clamp_events_;
        v = std::clamp(v, kProbFloor, 1.0 - kProbFloor);
        n.aux[j] = v;
        loss += w * -std::log(v);
      }
      n.value = Tensor::scalar(loss);
      break;
    }
    case Op::kBernoulliNll: {
      const Tensor& mu = in(0);
      if (n.target.size() != mu.size()) fail(id, "target size mismatch");
      n.aux = mu;
      double loss = 0.0;
      for (size_t i = 0; i < mu.size(); ++i) {
        double m = mu[i];
        if (m < kProbFloor || m > 1.0 - kProbFloor) ++clamp_events_;
        m = std::clamp(m, kProbFloor, 1.0 - kProbFloor);
        n.aux[i] = m;
        loss += -n.target[i] * std::log(m) - (1.0 - n.target[i]) * std::log(1.0 - m);
      }
      n.value = Tensor::scalar(loss);
      break;
    }
    case Op::kGaussianNll: {
      const Tensor& mu = in(0);
      const Tensor& sg = in(1);
      if (n.target.size() != mu.size() || sg.size() != mu.size())
        fail(id, "mean/stddev/target size mismatch");
      double loss = 0.0;
      for (size_t i = 0; i < mu.size(); ++i) {
        double s = sg[i];
        if (s <= 0.0) fail(id, "stddev must be positive");
        double d = n.target[i] - mu[i];
        loss += d * d / (2.0 * s * s) + std::log(s);
      }
      n.value = Tensor::scalar(loss);
      break;
    }
  }
  n.has_value = true;
}

void Graph::forward(const Bindings& bindings) {
  for (auto& [id, v] : bindings) {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw Error("binding for unknown node #" + std::to_string(id));
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op != Op::kInput)
      fail(id, "only input nodes accept bindings");
    n.value = v;
    n.has_value = true;
  }
  for (size_t id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].op != Op::kConst &&
        !(nodes_[id].op == Op::kInput && nodes_[id].has_value))
      compute(static_cast<int>(id));
    else
      nodes_[id].has_value = true;
  forward_done_ = true;
}

void Graph::propagate(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = n.grad;
  auto in_val = [&](size_t i) -> const Tensor& {
    return nodes_[static_cast<size_t>(n.inputs[i])].value;
  };
  auto in_grad = [&](size_t i) -> Tensor& {
    return nodes_[static_cast<size_t>(n.inputs[i])].grad;
  };
  switch (n.op) {
    case Op::kInput:
    case Op::kConst:
    case Op::kParam:
      break;
    case Op::kMatMul: {
      // fan the cost derivative back through both operands
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (!n.trans_a)
        matmul_acc(in_grad(0), g, false, b, !n.trans_b);
      else
        matmul_acc(in_grad(0), b, n.trans_b, g, true);
      if (!n.trans_b)
        matmul_acc(in_grad(1), a, !n.trans_a, g, false);
      else
        matmul_acc(in_grad(1), g, true, a, n.trans_a);
      break;
    }
    case Op::kAdd:
      for (size_t i = 0; i < g.size(); ++i) in_grad(0)[i] += g[i];
      for (size_t i = 0; i < g.size(); ++i) in_grad(1)[i] += g[i];
      break;
    case Op::kAddBias: {
      Tensor& gm = in_grad(0);
      Tensor& gb = in_grad(1);
      size_t c = n.value.cols();
      for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      for (size_t i = 0; i < n.value.rows(); ++i)
        for (size_t j = 0; j < c; ++j) gb[i] += g.data()[i * c + j];
      break;
    }
    case Op::kMul:
      for (size_t i = 0; i < g.size(); ++i) in_grad(0)[i] += g[i] * in_val(1)[i];
      for (size_t i = 0; i < g.size(); ++i) in_grad(1)[i] += g[i] * in_val(0)[i];
      break;
    case Op::kScale:
      for (size_t i = 0; i < g.size(); ++i) in_grad(0)[i] += g[i] * n.factor;
      break;
    case Op::kOneMinus:
      for (size_t i = 0; i < g.size(); ++i) in_grad(0)[i] -= g[i];
      break;
    case Op::kSigmoid:
      for (size_t i = 0; i < g.size(); ++i) {
        double y = n.value[i];
        in_grad(0)[i] += g[i] * y * (1.0 - y);
      }
      break;
    case Op::kTanh:
      for (size_t i = 0; i < g.size(); ++i) {
        double y = n.value[i];
        in_grad(0)[i] += g[i] * (1.0 - y * y);
      }
      break;
    case Op::kRect:
      for (size_t i = 0; i < g.size(); ++i)
        if (in_val(0)[i] > 0.0) in_grad(0)[i] += g[i];
      break;
    case Op::kMaxout: {
      const Tensor& x = in_val(0);
      Tensor& gx = in_grad(0);
      size_t k = static_cast<size_t>(n.group);
      size_t p = n.value.rows(), c = n.value.cols();
      for (size_t gi = 0; gi < p; ++gi)
        for (size_t j = 0; j < c; ++j) {
          size_t win = 0;
          double best = x.at(gi * k, j);
          for (size_t r = 1; r < k; ++r)
            if (x.at(gi * k + r, j) > best) {
              best = x.at(gi * k + r, j);
              win = r;
            }
          gx.at(gi * k + win, j) += g.at(gi, j);
        }
      break;
    }
    case Op::kSoftmax: {
      Tensor& gx = in_grad(0);
      size_t r = n.value.rows(), c = n.value.cols();
      for (size_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (size_t i = 0; i < r; ++i) s += g.at(i, j) * n.value.at(i, j);
        for (size_t i = 0; i < r; ++i)
          gx.at(i, j) += n.value.at(i, j) * (g.at(i, j) - s);
      }
      break;
    }
    case Op::kConcatRows: {
      size_t r0 = 0, c = n.value.cols();
      for (size_t pi = 0; pi < n.inputs.size(); ++pi) {
        Tensor& gp = in_grad(pi);
        size_t rows = in_val(pi).rows();
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < c; ++j) gp.data()[i * c + j] += g.at(r0 + i, j);
        r0 += rows;
      }
      break;
    }
    case Op::kSliceRows: {
      Tensor& gx = in_grad(0);
      size_t c = n.value.cols();
      for (size_t i = 0; i < n.value.rows(); ++i)
        for (size_t j = 0; j < c; ++j) gx.at(n.begin + i, j) += g.at(i, j);
      break;
    }
    case Op::kBroadcastCols: {
      Tensor& gx = in_grad(0);
      for (size_t i = 0; i < n.value.rows(); ++i)
        for (size_t j = 0; j < n.extent; ++j) gx[i] += g.at(i, j);
      break;
    }
    case Op::kBroadcastRows: {
      Tensor& gx = in_grad(0);
      for (size_t i = 0; i < n.extent; ++i)
        for (size_t j = 0; j < n.value.cols(); ++j) gx.data()[j] += g.at(i, j);
      break;
    }
    case Op::kSumCols: {
      Tensor& gx = in_grad(0);
      size_t c = in_val(0).cols();
      for (size_t i = 0; i < in_val(0).rows(); ++i)
        for (size_t j = 0; j < c; ++j) gx.at(i, j) += g[i];
      break;
    }
    case Op::kSumAll: {
      Tensor& gx = in_grad(0);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
      break;
    }
    case Op::kEmbed: {
      Tensor& ge = in_grad(0);
      size_t d = n.value.rows();
      for (size_t j = 0; j < n.ids.size(); ++j) {
        size_t row = static_cast<size_t>(n.ids[j]);
        for (size_t i = 0; i < d; ++i) ge.at(row, i) += g.at(i, j);
      }
      break;
    }
    case Op::kCrossEntropy: {
      Tensor& gz = in_grad(0);
      size_t r = n.aux.rows(), c = n.aux.cols();
      for (size_t j = 0; j < c; ++j) {
        double w = (n.weights.empty() ? 1.0 : n.weights[j]) * g[0];
        for (size_t i = 0; i < r; ++i) {
          double p = n.aux.at(i, j);
          gz.at(i, j) += w * (p - (static_cast<int>(i) == n.ids[j] ? 1.0 : 0.0));
        }
      }
      break;
    }
    case Op::kPickNll: {
      Tensor& gp = in_grad(0);
      size_t c = in_val(0).cols();
      for (size_t j = 0; j < c; ++j) {
        double w = (n.weights.empty() ? 1.0 : n.weights[j]) * g[0];
        gp.at(static_cast<size_t>(n.ids[j]), j) += w * (-1.0 / n.aux[j]);
      }
      break;
    }
    case Op::kBernoulliNll: {
      Tensor& gm = in_grad(0);
      for (size_t i = 0; i < gm.size(); ++i) {
        double m = n.aux[i];
        gm[i] += g[0] * (-n.target[i] / m + (1.0 - n.target[i]) / (1.0 - m));
      }
      break;
    }
    case Op::kGaussianNll: {
      Tensor& gm = in_grad(0);
      Tensor& gs = in_grad(1);
      const Tensor& mu = in_val(0);
      const Tensor& sg = in_val(1);
      for (size_t i = 0; i < gm.size(); ++i) {
        double s = sg[i];
        double d = n.target[i] - mu[i];
        gm[i] += g[0] * (-d / (s * s));
        gs[i] += g[0] * (-d * d / (s * s * s) + 1.0 / s);
      }
      break;
    }
  }
}

void Graph::backward(int cost) {
  if (!forward_done_) throw Error("backward called before forward");
  if (cost < 0 || static_cast<size_t>(cost) >= nodes_.size())
    throw Error("unknown cost node");
  if (nodes_[static_cast<size_t>(cost)].value.size() != 1)
    fail(cost, "cost node must be scalar");
  for (Node& n : nodes_) {
    n.grad = Tensor::zeros_like(n.value);
  }
  nodes_[static_cast<size_t>(cost)].grad[0] = 1.0;
  for (int id = cost; id >= 0; --id) propagate(id);
  for (Node& n : nodes_)
    if (n.op == Op::kParam)
      for (size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
}

const Tensor& Graph::value(int id) const {
  const Node& n = nodes_.at(static_cast<size_t>(id));
  if (!n.has_value) throw Error("node value not computed; run forward first");
  return n.value;
}

const Tensor& Graph::grad(int id) const {
  return nodes_.at(static_cast<size_t>(id)).grad;
}

std::map<int, Tensor> Graph::values() const {
  std::map<int, Tensor> out;
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].has_value) out[static_cast<int>(i)] = nodes_[i].value;
  return out;
}

double finite_diff_check(Graph& g, const Graph::Bindings& bindings, int cost,
                         Parameter& p, double epsilon) {
  if (epsilon <= 0.0) throw Error("epsilon must be positive");
  p.zero_grad();
  g.forward(bindings);
  g.backward(cost);
  Tensor analytic = p.grad;
  double worst = 0.0;
  for (size_t i = 0; i < p.tensor.size(); ++i) {
    double saved = p.tensor[i];
    p.tensor[i] = saved + epsilon;
    g.forward(bindings);
    double up = g.value(cost)[0];
    p.tensor[i] = saved - epsilon;
    g.forward(bindings);
    double down = g.value(cost)[0];
    p.tensor[i] = saved;
    double numeric = (up - down) / (2.0 * epsilon);
    double err = std::abs(analytic[i] - numeric) /
                 std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  g.forward(bindings);  // restore cached values at the unperturbed point
  return worst;
}

}  // namespace seqforge
