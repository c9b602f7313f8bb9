#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqforge {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense array of 64-bit reals, row-major. Rank 1 tensors are treated as
// column vectors by every matrix operation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> v);
  static Tensor matrix(size_t r, size_t c, std::vector<double> v);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
  static Tensor filled(std::vector<size_t> shape, double v);

  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const std::vector<size_t>& shape() const { return shape_; }

  size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  size_t cols() const { return shape_.size() >= 2 ? shape_[1] : (shape_.empty() ? 0 : 1); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  double& at(size_t i, size_t j) { return data_[i * cols() + j]; }
  double at(size_t i, size_t j) const { return data_[i * cols() + j]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const;
  bool all_finite() const;
  void fill(double v);

  std::string shape_str() const;

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// out = op(A) * op(B), with op controlled by the transpose flags.
Tensor matmul(const Tensor& a, bool ta, const Tensor& b, bool tb);
// out += op(A) * op(B); shapes must already agree.
void matmul_acc(Tensor& out, const Tensor& a, bool ta, const Tensor& b, bool tb);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double sum(const Tensor& a);

}  // namespace seqforge
