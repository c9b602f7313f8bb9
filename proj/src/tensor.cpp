#include "seqforge/tensor.hpp"

#include <cmath>
#include <sstream>

namespace seqforge {

static size_t shape_product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) {
    if (d == 0) throw Error("tensor dimensions must be positive");
    n *= d;
  }
  return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw Error("tensor shape/data size mismatch: shape " + shape_str() +
                " vs " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::vec(std::vector<double> v) {
  size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(size_t r, size_t c, std::vector<double> v) {
  return Tensor({r, c}, std::move(v));
}

Tensor Tensor::filled(std::vector<size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

bool Tensor::same_shape(const Tensor& o) const { return shape_ == o.shape_; }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ")";
  return os.str();
}

namespace {

struct MatView {
  const double* p;
  size_t r, c;
  bool t;
  size_t rows() const { return t ? c : r; }
  size_t cols() const { return t ? r : c; }
  double at(size_t i, size_t j) const { return t ? p[j * c + i] : p[i * c + j]; }
};

MatView view(const Tensor& a, bool trans) {
  return MatView{a.data().data(), a.rows(), a.cols(), trans};
}

}  // namespace

void matmul_acc(Tensor& out, const Tensor& a, bool ta, const Tensor& b, bool tb) {
  MatView A = view(a, ta), B = view(b, tb);
  if (A.cols() != B.rows())
    throw Error("matmul inner dimension mismatch: " + a.shape_str() +
                (ta ? "^T" : "") + " * " + b.shape_str() + (tb ? "^T" : ""));
  size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (out.rows() != m || out.cols() != n)
    throw Error("matmul output shape mismatch");
  double* o = out.data().data();
  if (!ta && !tb) {
    // row-major streaming order
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    for (size_t i = 0; i < m; ++i) {
      double* orow = o + i * n;
      const double* arow = ap + i * k;
      for (size_t kk = 0; kk < k; ++kk) {
        double av = arow[kk];
        const double* brow = bp + kk * n;
        for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  } else if (ta && !tb) {
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    // A is k x m stored row-major; iterate its rows
    for (size_t kk = 0; kk < k; ++kk) {
      const double* arow = ap + kk * m;
      const double* brow = bp + kk * n;
      for (size_t i = 0; i < m; ++i) {
        double av = arow[i];
        double* orow = o + i * n;
        for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    for (size_t i = 0; i < m; ++i) {
      const double* arow = ap + i * k;
      double* orow = o + i * n;
      for (size_t j = 0; j < n; ++j) {
        const double* brow = bp + j * k;
        double acc = 0.0;
        for (size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        orow[j] += acc;
      }
    }
  } else {
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (size_t kk = 0; kk < k; ++kk) acc += A.at(i, kk) * B.at(kk, j);
        o[i * n + j] += acc;
      }
  }
}

Tensor matmul(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  MatView A = view(a, ta), B = view(b, tb);
  if (A.cols() != B.rows())
    throw Error("matmul inner dimension mismatch: " + a.shape_str() +
                (ta ? "^T" : "") + " * " + b.shape_str() + (tb ? "^T" : ""));
  // keep rank 1 when the result is a column
  Tensor out;
  if (B.cols() == 1 && b.rank() == 1 && !tb)
    out = Tensor({A.rows()});
  else
    out = Tensor({A.rows(), B.cols()});
  matmul_acc(out, a, ta, b, tb);
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw Error("dot size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double sum(const Tensor& a) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

}  // namespace seqforge
