#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ccap {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void()> backward_fn;  // reads this->grad, accumulates into parents

  void ensure_grad();
};

// Dense float64 tensor participating in a reverse-mode graph. Value-semantic
// handle: copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t size() const { return node_->values.size(); }
  size_t dim(size_t i) const { return node_->shape[i]; }
  size_t rank() const { return node_->shape.size(); }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  double value() const;  // scalar only
  double operator[](size_t i) const { return node_->values[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Reverse pass from a scalar node; visits each reachable node once.
  void backward() const;

  TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
  friend Tensor make_node(Shape shape, std::vector<Tensor> parents);
};

// Graph construction can be suspended for inference-only passes.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Elementwise and shape ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // broadcast over last dim
Tensor gelu(const Tensor& x);                          // exact x * Phi(x)
Tensor sigmoid(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // 2-D
Tensor concat(const Tensor& a, const Tensor& b, size_t axis);
Tensor slice(const Tensor& x, size_t axis, size_t start, size_t len);
Tensor gather_rows(const Tensor& m, const std::vector<size_t>& idx);

// Linear algebra and normalization.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
Tensor softmax_rows(const Tensor& x);
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot);

// Spatial ops on channel-first grids.
Tensor conv2d(const Tensor& x, const Tensor& kernel);     // k in {1, 3}
Tensor tokens_to_grid(const Tensor& x, size_t h, size_t w);  // (h*w) x d -> d x h x w
Tensor grid_to_tokens(const Tensor& g);                      // inverse permutation
Tensor bilinear_warp(const Tensor& grid, const Tensor& flow);

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
};

// Central-difference check of d(f)/d(params) on a random coordinate sample
// (at least min_coords per tensor, capped by the tensor size).
GradCheckReport gradient_check(const std::function<Tensor()>& f,
                               const std::vector<Tensor>& params,
                               double step = 1e-5, size_t min_coords = 32,
                               uint64_t seed = 17);

}  // namespace ccap
