#pragma once

#include <map>
#include <string>
#include <vector>

#include "seqforge/tensor.hpp"

namespace seqforge {

// Named model weight with a gradient accumulator of identical shape.
// Gradients accumulate by addition; call zero_grad() to open a new
// accumulation window.
struct Parameter {
  std::string name;
  Tensor tensor;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor t)
      : name(std::move(n)), tensor(std::move(t)), grad(Tensor::zeros_like(tensor)) {}

  void zero_grad() { grad.fill(0.0); }
};

enum class Op {
  kInput,
  kConst,
  kParam,
  kMatMul,
  kAdd,        // elementwise, same shape
  kAddBias,    // matrix + column vector broadcast over columns
  kMul,        // elementwise product
  kScale,      // multiply by a compile-time constant
  kOneMinus,   // 1 - x
  kSigmoid,
  kTanh,
  kRect,
  kMaxout,     // rows grouped into k-tuples, max per group
  kSoftmax,    // each column normalized to a distribution
  kConcatRows,
  kSliceRows,
  kBroadcastCols,  // d x 1 -> d x n
  kBroadcastRows,  // 1 x n -> d x n
  kSumCols,        // d x n -> d x 1
  kSumAll,         // -> scalar
  kEmbed,          // rows of E gathered as columns
  kCrossEntropy,   // logits + integer targets -> scalar, numerically fused
  kPickNll,        // -log(prob[target]) on an explicit distribution column
  kBernoulliNll,
  kGaussianNll,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::kInput;
  std::vector<int> inputs;
  Tensor value;
  Tensor grad;
  bool has_value = false;

  // op attributes
  bool trans_a = false, trans_b = false;
  double factor = 1.0;
  int group = 0;                  // maxout rank
  size_t begin = 0, end = 0;      // slice range
  size_t extent = 0;              // broadcast width/height
  std::vector<int> ids;           // embed rows / loss targets
  std::vector<double> weights;    // per-column loss weights
  std::vector<double> target;     // real-valued loss targets
  Parameter* param = nullptr;
  Tensor aux;                     // op scratch cached by forward
};

// Reverse-mode automatic differentiation over an explicit DAG. Nodes are
// appended in creation order, which is by construction a topological order;
// forward() evaluates them in that order and backward() walks it in reverse,
// summing contributions where a node fans out into several consumers.
//
// A graph is built once per minibatch (define-by-run) and is single-threaded.
class Graph {
 public:
  using Bindings = std::map<int, Tensor>;

  int input();
  int constant(Tensor v);
  int param(Parameter& p);

  int matmul(int a, int b, bool ta = false, bool tb = false);
  int add(int a, int b);
  int add_bias(int m, int bias);
  int mul(int a, int b);
  int scale(int a, double c);
  int one_minus(int a);
  int sigmoid(int a);
  int tanh(int a);
  int rect(int a);
  int maxout(int a, int k);
  int softmax(int a);
  int concat_rows(const std::vector<int>& parts);
  int slice_rows(int a, size_t begin, size_t end);
  int broadcast_cols(int a, size_t n);
  int broadcast_rows(int a, size_t rows);
  int sum_cols(int a);
  int sum_all(int a);
  int embed(int table, std::vector<int> ids);
  int cross_entropy(int logits, std::vector<int> targets,
                    std::vector<double> weights = {});
  int pick_nll(int probs, std::vector<int> targets,
               std::vector<double> weights = {});
  int bernoulli_nll(int mu, std::vector<double> y);
  int gaussian_nll(int mu, int sigma, std::vector<double> y);

  size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  // Computes every node value in topological order. Throws on an unbound
  // input or a shape mismatch, naming the offending node.
  void forward(const Bindings& bindings = {});

  // Propagates d(cost)/d(node) into every node's grad and accumulates
  // parameter gradients into Parameter::grad. forward() must have run and
  // the cost node must be scalar.
  void backward(int cost);

  const Tensor& value(int id) const;
  const Tensor& grad(int id) const;
  std::map<int, Tensor> values() const;

  // Count of probability clamps applied by the loss nodes (exact zeros or
  // ones fed to a log).
  long clamp_events() const { return clamp_events_; }

 private:
  int push(Node n);
  void compute(int id);
  void propagate(int id);
  [[noreturn]] void fail(int id, const std::string& what) const;

  std::vector<Node> nodes_;
  bool forward_done_ = false;
  long clamp_events_ = 0;
};

// Max over parameter elements of the relative difference between the
// analytic gradient and a central finite difference of the cost.
double finite_diff_check(Graph& g, const Graph::Bindings& bindings, int cost,
                         Parameter& p, double epsilon);

}  // namespace seqforge
