#include "seqforge/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace seqforge::optim {

void OptimConfig::validate() const {
  if (learning_rate <= 0.0) throw Error("learning rate must be positive");
  if (minibatch_size < 1) throw Error("minibatch size must be at least 1");
  if (clip_threshold && *clip_threshold <= 0.0)
    throw Error("clip threshold must be positive");
  if (max_epochs < 1) throw Error("max_epochs must be at least 1");
  if (eval_every < 1) throw Error("eval_every must be at least 1");
}

double TrainReport::best_val_cost() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : records) best = std::min(best, r.val_cost);
  return best;
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "updates,train_cost,val_cost\n";
  for (const auto& r : records)
    os << r.updates << "," << r.train_cost << "," << r.val_cost << "\n";
  return os.str();
}

double clip_gradient(const std::vector<Tensor*>& grads, double tau) {
  if (tau <= 0.0) throw Error("clip threshold must be positive");
  double sq = 0.0;
  for (const Tensor* t : grads)
    for (size_t i = 0; i < t->size(); ++i) sq += (*t)[i] * (*t)[i];
  double norm = std::sqrt(sq);
  if (norm <= tau) return 1.0;
  double factor = tau / norm;
  for (Tensor* t : grads)
    for (size_t i = 0; i < t->size(); ++i) (*t)[i] *= factor;
  return factor;
}

double clip_gradient(const std::vector<Parameter*>& params, double tau) {
  std::vector<Tensor*> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) grads.push_back(&p->grad);
  return clip_gradient(grads, tau);
}

bool sgd_step(const std::vector<Parameter*>& params, const OptimConfig& cfg) {
  for (Parameter* p : params)
    if (!p->grad.all_finite()) {
      for (Parameter* q : params) q->zero_grad();
      return false;
    }
  if (cfg.clip_threshold) clip_gradient(params, *cfg.clip_threshold);
  for (Parameter* p : params) {
    for (size_t i = 0; i < p->tensor.size(); ++i)
      p->tensor[i] -= cfg.learning_rate * p->grad[i];
    p->zero_grad();
  }
  return true;
}

TrainReport train(SgdTask& task, const OptimConfig& cfg) {
  cfg.validate();
  size_t n = task.train_size();
  if (n == 0) throw Error("empty training set");

  std::vector<Parameter*> params = task.parameters();
  for (Parameter* p : params) p->zero_grad();

  TrainReport report;
  Rng rng(cfg.seed);

  double best = std::numeric_limits<double>::infinity();
  size_t since_best = 0;
  std::vector<Tensor> best_params;
  auto snapshot = [&]() {
    best_params.clear();
    for (Parameter* p : params) best_params.push_back(p->tensor);
  };

  // baseline evaluation before any update
  {
    double val0 = task.val_cost();
    if (!std::isfinite(val0)) throw Error("non-finite validation cost");
    report.records.push_back({0, task.train_cost(), val0});
    best = val0;
    report.best_checkpoint_at = 0;
    snapshot();
  }

  size_t updates = 0;
  double train_acc = 0.0;
  size_t train_acc_batches = 0;
  bool stop = false;

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    rng.shuffle(order);
    for (size_t off = 0; off < n && !stop; off += cfg.minibatch_size) {
      size_t take = std::min(cfg.minibatch_size, n - off);
      std::vector<size_t> rows(order.begin() + static_cast<long>(off),
                               order.begin() + static_cast<long>(off + take));
      double cost = task.batch_cost_and_grad(rows);
      if (!std::isfinite(cost)) throw Error("non-finite training cost");
      // minibatch gradient is the mean of per-example gradients
      double inv = 1.0 / static_cast<double>(take);
      for (Parameter* p : params)
        for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= inv;
      if (!sgd_step(params, cfg)) ++report.skipped_steps;
      ++updates;
      train_acc += cost * inv;
      ++train_acc_batches;

      if (updates % cfg.eval_every == 0) {
        double val = task.val_cost();
        if (!std::isfinite(val)) throw Error("non-finite validation cost");
        double tr = train_acc / static_cast<double>(train_acc_batches);
        report.records.push_back({updates, tr, val});
        train_acc = 0.0;
        train_acc_batches = 0;
        if (val < best) {
          best = val;
          report.best_checkpoint_at = updates;
          since_best = 0;
          snapshot();
        } else {
          ++since_best;
          if (since_best > cfg.patience) {
            report.stopping_reason = StopReason::kPatienceExhausted;
            stop = true;
          }
        }
      }
    }
  }
  if (!stop) report.stopping_reason = StopReason::kMaxEpochs;
  report.final_update = updates;

  for (size_t i = 0; i < params.size(); ++i) params[i]->tensor = best_params[i];
  for (Parameter* p : params) p->zero_grad();
  return report;
}

namespace {

// Gauss-Jordan inverse with partial pivoting; a is overwritten.
Tensor invert(Tensor a) {
  size_t d = a.rows();
  if (a.cols() != d) throw Error("inverse of a non-square matrix");
  Tensor inv({d, d});
  for (size_t i = 0; i < d; ++i) inv.at(i, i) = 1.0;
  for (size_t col = 0; col < d; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < d; ++r)
      if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
    if (std::abs(a.at(pivot, col)) < 1e-12)
      throw Error(
          "singular system in closed-form least squares; "
          "consider a small ridge term");
    if (pivot != col)
      for (size_t j = 0; j < d; ++j) {
        std::swap(a.at(pivot, j), a.at(col, j));
        std::swap(inv.at(pivot, j), inv.at(col, j));
      }
    double diag = a.at(col, col);
    for (size_t j = 0; j < d; ++j) {
      a.at(col, j) /= diag;
      inv.at(col, j) /= diag;
    }
    for (size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      double f = a.at(r, col);
      if (f == 0.0) continue;
      for (size_t j = 0; j < d; ++j) {
        a.at(r, j) -= f * a.at(col, j);
        inv.at(r, j) -= f * inv.at(col, j);
      }
    }
  }
  return inv;
}

}  // namespace

Tensor closed_form_linreg(const Tensor& x, const Tensor& y, double ridge) {
  if (x.cols() != y.cols())
    throw Error("inputs and targets must have the same number of columns");
  Tensor gram = matmul(x, false, x, true);  // d x d
  if (ridge > 0.0)
    for (size_t i = 0; i < gram.rows(); ++i) gram.at(i, i) += ridge;
  Tensor yxt = matmul(y, false, x, true);  // k x d
  return matmul(yxt, false, invert(std::move(gram)), false);
}

SpectralEstimate spectral_radius(const Tensor& u, size_t iters) {
  size_t d = u.rows();
  if (u.cols() != d) throw Error("spectral radius of a non-square matrix");
  if (iters < 1) throw Error("power iteration needs at least one step");
  Tensor v = Tensor::filled({d}, 1.0 / std::sqrt(static_cast<double>(d)));
  double growth = 0.0, prev = -1.0;
  std::vector<double> recent;
  bool converged = false;
  for (size_t k = 0; k < iters; ++k) {
    Tensor w = matmul(u, false, v, false);
    growth = norm2(w);
    if (growth == 0.0) return {0.0, true};  // v landed in the null space
    for (size_t i = 0; i < d; ++i) v[i] = w[i] / growth;
    recent.push_back(growth);
    if (recent.size() > 64) recent.erase(recent.begin());
    if (prev >= 0.0 && std::abs(growth - prev) <= 1e-12 * std::max(1.0, growth)) {
      converged = true;
      break;
    }
    prev = growth;
  }
  if (converged) return {growth, true};
  // oscillating growth factors (complex dominant pair); report the geometric
  // mean over the recent window as the last iterate
  double acc = 0.0;
  for (double g : recent) acc += std::log(g);
  return {std::exp(acc / static_cast<double>(recent.size())), false};
}

double derivative_bound(nn::Act a) {
  switch (a) {
    case nn::Act::kSigmoid: return 0.25;
    case nn::Act::kTanh: return 1.0;
    case nn::Act::kRect: return 1.0;
  }
  return 1.0;
}

bool explosion_risk(const Tensor& u, nn::Act a, size_t iters) {
  return spectral_radius(u, iters).value * derivative_bound(a) > 1.0;
}

}  // namespace seqforge::optim
