#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "uta/errors.hpp"
#include "uta/image.hpp"

namespace uta::nn {

/// Dense row-major n-dimensional array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }
  static Tensor scalar(double v) { return Tensor({1}, v); }
  static Tensor from_image(const Image& img);          // (1, 1, H, W)
  Image to_image() const;                              // squeezes to (H, W)

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;
  bool all_finite() const;
  double min_value() const;
  double max_value() const;

  /// Row-major strides of the current shape.
  std::vector<size_t> strides() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by ensure_grad
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  std::uint64_t order = 0;  // creation counter; a valid topological key

  Tensor& ensure_grad();
};

/// Value-semantic handle to a tape vertex.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && node_->grad_ready; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  const std::vector<int>& shape() const { return node_->value.shape(); }
  size_t size() const { return node_->value.size(); }

  NodePtr node() const { return node_; }
  static Var wrap(NodePtr n);

 private:
  NodePtr node_;
};

/// Runs reverse-mode accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

/// While a guard is alive, new ops record values only (no tape edges).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

/// Internal helper for op implementations.
Var make_op(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn);

inline size_t shape_count(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

}  // namespace uta::nn
