#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqforge/graph.hpp"
#include "seqforge/nn.hpp"
#include "seqforge/rng.hpp"

namespace seqforge::optim {

struct OptimConfig {
  double learning_rate = 0.1;
  size_t minibatch_size = 1;
  std::optional<double> clip_threshold;
  size_t max_epochs = 1;
  size_t patience = 0;      // tolerated evaluations without a new best
  size_t eval_every = 1;    // updates between validation evaluations
  uint64_t seed = 0;

  void validate() const;
};

struct EvalRecord {
  size_t updates;
  double train_cost;
  double val_cost;
};

enum class StopReason { kPatienceExhausted, kMaxEpochs };

struct TrainReport {
  std::vector<EvalRecord> records;
  StopReason stopping_reason = StopReason::kMaxEpochs;
  size_t best_checkpoint_at = 0;
  size_t final_update = 0;
  size_t skipped_steps = 0;  // minibatches dropped for non-finite gradients

  double best_val_cost() const;
  std::string to_csv() const;
};

// Scales the collection uniformly so the concatenated gradient norm does not
// exceed tau; direction is preserved exactly. Returns the factor applied.
double clip_gradient(const std::vector<Tensor*>& grads, double tau);
double clip_gradient(const std::vector<Parameter*>& params, double tau);

// One update: optional clipping, theta <- theta - eta * grad, gradients
// zeroed. Returns false (and leaves parameters untouched) when any gradient
// is non-finite.
bool sgd_step(const std::vector<Parameter*>& params, const OptimConfig& cfg);

// Training problem driven by the early-stopping loop: gradient accumulation
// for a minibatch of training rows plus full-set cost evaluation.
class SgdTask {
 public:
  virtual ~SgdTask() = default;
  virtual size_t train_size() const = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  // Accumulates summed gradients over the given rows into Parameter::grad
  // and returns the summed cost.
  virtual double batch_cost_and_grad(const std::vector<size_t>& rows) = 0;
  virtual double train_cost() = 0;  // mean per example
  virtual double val_cost() = 0;    // mean per example
};

// Minibatch SGD with early stopping on the validation cost. Stops when the
// best validation cost has not strictly improved for `patience` consecutive
// evaluations, or at max_epochs. Parameters are restored to the best
// evaluated checkpoint before returning.
TrainReport train(SgdTask& task, const OptimConfig& cfg);

// W = Y X^T (X X^T)^{-1} for inputs X (d x N) and targets Y (k x N).
// ridge > 0 adds ridge * I before inversion; by default a singular system
// is an error suggesting that option.
Tensor closed_form_linreg(const Tensor& x, const Tensor& y, double ridge = 0.0);

struct SpectralEstimate {
  double value = 0.0;
  bool converged = false;
};

// Power-iteration estimate of the dominant eigenvalue magnitude of a square
// matrix. On non-convergence the last iterate is reported with
// converged=false.
SpectralEstimate spectral_radius(const Tensor& u, size_t iters);

// Largest derivative of the activation, used with spectral_radius as the
// recurrence explosion diagnostic: risk when radius * bound > 1.
double derivative_bound(nn::Act a);
bool explosion_risk(const Tensor& u, nn::Act a, size_t iters = 1000);

}  // namespace seqforge::optim
