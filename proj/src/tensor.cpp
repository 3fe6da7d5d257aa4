#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "rng.hpp"

namespace ccap {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// c[m x p] += a[m x k] * b[k x p]
void mm_acc(const double* __restrict a, const double* __restrict b,
            double* __restrict c, size_t m, size_t k, size_t p) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * p;
    for (size_t l = 0; l < k; ++l) {
      const double al = ai[l];
      const double* bl = b + l * p;
      for (size_t j = 0; j < p; ++j) ci[j] += al * bl[j];
    }
  }
}

// c[m x k] += a[m x p] * b[k x p]^T
void mm_nt_acc(const double* __restrict a, const double* __restrict b,
               double* __restrict c, size_t m, size_t p, size_t k) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * p;
    double* ci = c + i * k;
    for (size_t l = 0; l < k; ++l) {
      const double* bl = b + l * p;
      double acc = 0.0;
      for (size_t j = 0; j < p; ++j) acc += ai[j] * bl[j];
      ci[l] += acc;
    }
  }
}

// c[k x p] += a[m x k]^T * b[m x p]
void mm_tn_acc(const double* __restrict a, const double* __restrict b,
               double* __restrict c, size_t m, size_t k, size_t p) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * p;
    for (size_t l = 0; l < k; ++l) {
      const double al = ai[l];
      double* cl = c + l * p;
      for (size_t j = 0; j < p; ++j) cl[j] += al * bi[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct BlockDims {
  size_t outer, axis, inner;
};

BlockDims block_dims(const Shape& s, size_t axis) {
  BlockDims d{1, s[axis], 1};
  for (size_t i = 0; i < axis; ++i) d.outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) d.inner *= s[i];
  return d;
}

}  // namespace

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_node(Shape shape, std::vector<Tensor> parents) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values.assign(shape_numel(node->shape), 0.0);
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      if (p.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
    if (node->requires_grad) node->parents = std::move(parents);
  }
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t = make_node(std::move(shape), {});
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("from_values: " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.node_->values = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values({1}, {v}, requires_grad);
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("value(): tensor " + shape_str(shape()) + " is not scalar");
  }
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (!defined()) throw std::invalid_argument("backward on undefined tensor");
  if (size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) {
    throw std::runtime_error("backward: loss does not depend on any trainable tensor");
  }

  // Reverse postorder of the DFS is a topological order, so every node's
  // grad is complete before its backward_fn runs.
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<TensorNode*> postorder;
  std::unordered_set<TensorNode*> visited;
  std::vector<Frame> stack;
  auto push = [&](TensorNode* n) {
    if (n->requires_grad && visited.insert(n).second) stack.push_back({n, 0});
  };
  push(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      push(f.n->parents[f.next++].node());
    } else {
      postorder.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = postorder.rbegin(); it != postorder.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out = make_node(a.shape(), {a, b});
  const size_t n = out.size();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    out.node()->backward_fn = [on, an, bn, n]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor out = make_node(a.shape(), {a, b});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    out.node()->backward_fn = [on, an, bn, n]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] -= on->grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out = make_node(a.shape(), {a, b});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    out.node()->backward_fn = [on, an, bn, n]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->values[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = make_node(a.shape(), {a});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * c;
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    out.node()->backward_fn = [on, an, c, n]() {
      an->ensure_grad();
      for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * c;
    };
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || x.shape().back() != bias.dim(0)) {
    shape_error("add_bias", x.shape(), bias.shape());
  }
  const size_t d = bias.dim(0);
  const size_t rows = x.size() / d;
  Tensor out = make_node(x.shape(), {x, bias});
  for (size_t r = 0; r < rows; ++r) {
    for (size_t j = 0; j < d; ++j) {
      out.values()[r * d + j] = x.values()[r * d + j] + bias.values()[j];
    }
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    TensorNode* bn = bias.node();
    out.node()->backward_fn = [on, xn, bn, rows, d]() {
      if (xn->requires_grad) {
        xn->ensure_grad();
        const size_t n = rows * d;
        for (size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
          for (size_t j = 0; j < d; ++j) bn->grad[j] += on->grad[r * d + j];
        }
      }
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = make_node(x.shape(), {x});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) {
    const double v = x.values()[i];
    out.values()[i] = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    out.node()->backward_fn = [on, xn, n]() {
      xn->ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        const double v = xn->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        xn->grad[i] += on->grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = make_node(x.shape(), {x});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = stable_sigmoid(x.values()[i]);
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    out.node()->backward_fn = [on, xn, n]() {
      xn->ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        const double y = on->values[i];
        xn->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    };
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    shape_error("reshape", x.shape(), shape);
  }
  Tensor out = make_node(std::move(shape), {x});
  out.values() = x.values();
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    const size_t n = x.size();
    out.node()->backward_fn = [on, xn, n]() {
      xn->ensure_grad();
      for (size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i];
    };
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("transpose: rank-2 required, got " + shape_str(x.shape()));
  }
  const size_t r = x.dim(0), c = x.dim(1);
  Tensor out = make_node({c, r}, {x});
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) out.values()[j * r + i] = x.values()[i * c + j];
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    out.node()->backward_fn = [on, xn, r, c]() {
      xn->ensure_grad();
      for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) xn->grad[i * c + j] += on->grad[j * r + i];
      }
    };
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) shape_error("concat", a.shape(), b.shape());
  for (size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) shape_error("concat", a.shape(), b.shape());
  }
  Shape out_shape = a.shape();
  out_shape[axis] += b.dim(axis);
  Tensor out = make_node(out_shape, {a, b});
  const BlockDims da = block_dims(a.shape(), axis);
  const BlockDims db = block_dims(b.shape(), axis);
  const size_t a_blk = da.axis * da.inner;
  const size_t b_blk = db.axis * db.inner;
  for (size_t o = 0; o < da.outer; ++o) {
    std::memcpy(out.values().data() + o * (a_blk + b_blk), a.values().data() + o * a_blk,
                a_blk * sizeof(double));
    std::memcpy(out.values().data() + o * (a_blk + b_blk) + a_blk,
                b.values().data() + o * b_blk, b_blk * sizeof(double));
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    const size_t outer = da.outer;
    out.node()->backward_fn = [on, an, bn, outer, a_blk, b_blk]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t o = 0; o < outer; ++o) {
          const double* g = on->grad.data() + o * (a_blk + b_blk);
          double* dst = an->grad.data() + o * a_blk;
          for (size_t i = 0; i < a_blk; ++i) dst[i] += g[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t o = 0; o < outer; ++o) {
          const double* g = on->grad.data() + o * (a_blk + b_blk) + a_blk;
          double* dst = bn->grad.data() + o * b_blk;
          for (size_t i = 0; i < b_blk; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return out;
}

Tensor slice(const Tensor& x, size_t axis, size_t start, size_t len) {
  if (axis >= x.rank() || start + len > x.dim(axis)) {
    throw std::invalid_argument("slice: [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of range for axis " +
                                std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Tensor out = make_node(out_shape, {x});
  const BlockDims d = block_dims(x.shape(), axis);
  const size_t src_blk = d.axis * d.inner;
  const size_t dst_blk = len * d.inner;
  for (size_t o = 0; o < d.outer; ++o) {
    std::memcpy(out.values().data() + o * dst_blk,
                x.values().data() + o * src_blk + start * d.inner, dst_blk * sizeof(double));
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    const size_t outer = d.outer;
    const size_t inner = d.inner;
    out.node()->backward_fn = [on, xn, outer, inner, src_blk, dst_blk, start]() {
      xn->ensure_grad();
      for (size_t o = 0; o < outer; ++o) {
        const double* g = on->grad.data() + o * dst_blk;
        double* dst = xn->grad.data() + o * src_blk + start * inner;
        for (size_t i = 0; i < dst_blk; ++i) dst[i] += g[i];
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& m, const std::vector<size_t>& idx) {
  if (m.rank() != 2) {
    throw std::invalid_argument("gather_rows: rank-2 required, got " + shape_str(m.shape()));
  }
  const size_t rows = m.dim(0), d = m.dim(1);
  for (size_t i : idx) {
    if (i >= rows) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                  " out of range for " + shape_str(m.shape()));
    }
  }
  Tensor out = make_node({idx.size(), d}, {m});
  for (size_t r = 0; r < idx.size(); ++r) {
    std::memcpy(out.values().data() + r * d, m.values().data() + idx[r] * d, d * sizeof(double));
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* mn = m.node();
    const std::vector<size_t> indices = idx;
    out.node()->backward_fn = [on, mn, indices, d]() {
      mn->ensure_grad();
      for (size_t r = 0; r < indices.size(); ++r) {
        const double* g = on->grad.data() + r * d;
        double* dst = mn->grad.data() + indices[r] * d;
        for (size_t j = 0; j < d; ++j) dst[j] += g[j];
      }
    };
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out = make_node({m, p}, {a, b});
  mm_acc(a.values().data(), b.values().data(), out.values().data(), m, k, p);
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    out.node()->backward_fn = [on, an, bn, m, k, p]() {
      if (an->requires_grad) {
        an->ensure_grad();
        mm_nt_acc(on->grad.data(), bn->values.data(), an->grad.data(), m, p, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        mm_tn_acc(an->values.data(), on->grad.data(), bn->grad.data(), m, k, p);
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1) {
    shape_error("layer_norm", x.shape(), gain.shape());
  }
  const size_t d = x.shape().back();
  if (gain.dim(0) != d || bias.dim(0) != d) {
    shape_error("layer_norm: gain/bias width", gain.shape(), {d});
  }
  const size_t rows = x.size() / d;
  Tensor out = make_node(x.shape(), {x, gain, bias});
  std::vector<double> inv_std(rows), mean(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * d;
    double mu = 0.0;
    for (size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    mean[r] = mu;
    inv_std[r] = inv;
    double* orow = out.values().data() + r * d;
    for (size_t j = 0; j < d; ++j) {
      orow[j] = (xr[j] - mu) * inv * gain.values()[j] + bias.values()[j];
    }
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    TensorNode* gn = gain.node();
    TensorNode* bn = bias.node();
    out.node()->backward_fn = [on, xn, gn, bn, rows, d, mean, inv_std]() {
      std::vector<double> norm(d), t(d);
      if (xn->requires_grad) xn->ensure_grad();
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      for (size_t r = 0; r < rows; ++r) {
        const double* xr = xn->values.data() + r * d;
        const double* g = on->grad.data() + r * d;
        for (size_t j = 0; j < d; ++j) norm[j] = (xr[j] - mean[r]) * inv_std[r];
        if (bn->requires_grad) {
          for (size_t j = 0; j < d; ++j) bn->grad[j] += g[j];
        }
        if (gn->requires_grad) {
          for (size_t j = 0; j < d; ++j) gn->grad[j] += g[j] * norm[j];
        }
        if (xn->requires_grad) {
          double t_mean = 0.0, tn_mean = 0.0;
          for (size_t j = 0; j < d; ++j) {
            t[j] = g[j] * gn->values[j];
            t_mean += t[j];
            tn_mean += t[j] * norm[j];
          }
          t_mean /= static_cast<double>(d);
          tn_mean /= static_cast<double>(d);
          double* dx = xn->grad.data() + r * d;
          for (size_t j = 0; j < d; ++j) {
            dx[j] += inv_std[r] * (t[j] - t_mean - norm[j] * tn_mean);
          }
        }
      }
    };
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("softmax_rows: rank-2 required, got " + shape_str(x.shape()));
  }
  const size_t rows = x.dim(0), d = x.dim(1);
  Tensor out = make_node(x.shape(), {x});
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * d;
    double* orow = out.values().data() + r * d;
    double mx = xr[0];
    for (size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (size_t j = 0; j < d; ++j) {
      orow[j] = std::exp(xr[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (size_t j = 0; j < d; ++j) orow[j] *= inv;
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    out.node()->backward_fn = [on, xn, rows, d]() {
      xn->ensure_grad();
      for (size_t r = 0; r < rows; ++r) {
        const double* y = on->values.data() + r * d;
        const double* g = on->grad.data() + r * d;
        double dot = 0.0;
        for (size_t j = 0; j < d; ++j) dot += y[j] * g[j];
        double* dx = xn->grad.data() + r * d;
        for (size_t j = 0; j < d; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot) {
  if (logits.rank() != 2 || logits.shape() != one_hot.shape()) {
    shape_error("softmax_cross_entropy", logits.shape(), one_hot.shape());
  }
  if (one_hot.requires_grad()) {
    throw std::invalid_argument("softmax_cross_entropy: targets must not require grad");
  }
  const size_t rows = logits.dim(0), v = logits.dim(1);
  std::vector<size_t> target(rows);
  for (size_t r = 0; r < rows; ++r) {
    size_t ones = 0, idx = 0;
    for (size_t j = 0; j < v; ++j) {
      const double t = one_hot.values()[r * v + j];
      if (t == 1.0) {
        ones++;
        idx = j;
      } else if (t != 0.0) {
        ones = 2;
        break;
      }
    }
    if (ones != 1) {
      throw std::invalid_argument("softmax_cross_entropy: target row " + std::to_string(r) +
                                  " is not one-hot");
    }
    target[r] = idx;
  }
  Tensor out = make_node({1}, {logits});
  std::vector<double> probs(rows * v);
  double loss = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    const double* lr = logits.values().data() + r * v;
    double mx = lr[0];
    for (size_t j = 1; j < v; ++j) mx = std::max(mx, lr[j]);
    double sum = 0.0;
    for (size_t j = 0; j < v; ++j) {
      probs[r * v + j] = std::exp(lr[j] - mx);
      sum += probs[r * v + j];
    }
    const double inv = 1.0 / sum;
    for (size_t j = 0; j < v; ++j) probs[r * v + j] *= inv;
    loss += std::log(sum) + mx - lr[target[r]];
  }
  out.values()[0] = loss / static_cast<double>(rows);
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* ln = logits.node();
    out.node()->backward_fn = [on, ln, rows, v, probs, target]() {
      ln->ensure_grad();
      const double g = on->grad[0] / static_cast<double>(rows);
      for (size_t r = 0; r < rows; ++r) {
        double* dst = ln->grad.data() + r * v;
        const double* p = probs.data() + r * v;
        for (size_t j = 0; j < v; ++j) dst[j] += g * p[j];
        dst[target[r]] -= g;
      }
    };
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    shape_error("conv2d", x.shape(), kernel.shape());
  }
  const size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const size_t cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != cin || kernel.dim(3) != k) {
    shape_error("conv2d: kernel vs input channels", kernel.shape(), x.shape());
  }
  if (k != 1 && k != 3) {
    throw std::invalid_argument("conv2d: kernel size " + std::to_string(k) +
                                " unsupported (1 or 3)");
  }
  const int pad = (k == 3) ? 1 : 0;
  Tensor out = make_node({cout, h, w}, {x, kernel});
  const double* xv = x.values().data();
  const double* kv = kernel.values().data();
  double* ov = out.values().data();
  for (size_t o = 0; o < cout; ++o) {
    for (size_t c = 0; c < cin; ++c) {
      const double* kp = kv + (o * cin + c) * k * k;
      const double* xp = xv + c * h * w;
      double* op = ov + o * h * w;
      for (size_t y = 0; y < h; ++y) {
        for (size_t xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (size_t ky = 0; ky < k; ++ky) {
            const int sy = static_cast<int>(y + ky) - pad;
            if (sy < 0 || sy >= static_cast<int>(h)) continue;
            for (size_t kx = 0; kx < k; ++kx) {
              const int sx = static_cast<int>(xx + kx) - pad;
              if (sx < 0 || sx >= static_cast<int>(w)) continue;
              acc += kp[ky * k + kx] * xp[sy * w + sx];
            }
          }
          op[y * w + xx] += acc;
        }
      }
    }
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    TensorNode* kn = kernel.node();
    out.node()->backward_fn = [on, xn, kn, cin, cout, h, w, k, pad]() {
      if (xn->requires_grad) xn->ensure_grad();
      if (kn->requires_grad) kn->ensure_grad();
      for (size_t o = 0; o < cout; ++o) {
        for (size_t c = 0; c < cin; ++c) {
          const double* kp = kn->values.data() + (o * cin + c) * k * k;
          double* dkp = kn->requires_grad ? kn->grad.data() + (o * cin + c) * k * k : nullptr;
          const double* xp = xn->values.data() + c * h * w;
          double* dxp = xn->requires_grad ? xn->grad.data() + c * h * w : nullptr;
          const double* gp = on->grad.data() + o * h * w;
          for (size_t y = 0; y < h; ++y) {
            for (size_t xx = 0; xx < w; ++xx) {
              const double g = gp[y * w + xx];
              if (g == 0.0) continue;
              for (size_t ky = 0; ky < k; ++ky) {
                const int sy = static_cast<int>(y + ky) - pad;
                if (sy < 0 || sy >= static_cast<int>(h)) continue;
                for (size_t kx = 0; kx < k; ++kx) {
                  const int sx = static_cast<int>(xx + kx) - pad;
                  if (sx < 0 || sx >= static_cast<int>(w)) continue;
                  if (dkp) dkp[ky * k + kx] += g * xp[sy * w + sx];
                  if (dxp) dxp[sy * w + sx] += g * kp[ky * k + kx];
                }
              }
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor tokens_to_grid(const Tensor& x, size_t h, size_t w) {
  if (x.rank() != 2 || x.dim(0) != h * w) {
    throw std::invalid_argument("tokens_to_grid: " + shape_str(x.shape()) + " is not " +
                                std::to_string(h) + "x" + std::to_string(w) + " tokens");
  }
  const size_t d = x.dim(1);
  Tensor out = make_node({d, h, w}, {x});
  for (size_t t = 0; t < h * w; ++t) {
    for (size_t c = 0; c < d; ++c) out.values()[c * h * w + t] = x.values()[t * d + c];
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    const size_t hw = h * w;
    out.node()->backward_fn = [on, xn, hw, d]() {
      xn->ensure_grad();
      for (size_t t = 0; t < hw; ++t) {
        for (size_t c = 0; c < d; ++c) xn->grad[t * d + c] += on->grad[c * hw + t];
      }
    };
  }
  return out;
}

Tensor grid_to_tokens(const Tensor& g) {
  if (g.rank() != 3) {
    throw std::invalid_argument("grid_to_tokens: rank-3 required, got " + shape_str(g.shape()));
  }
  const size_t d = g.dim(0), h = g.dim(1), w = g.dim(2);
  const size_t hw = h * w;
  Tensor out = make_node({hw, d}, {g});
  for (size_t t = 0; t < hw; ++t) {
    for (size_t c = 0; c < d; ++c) out.values()[t * d + c] = g.values()[c * hw + t];
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* gn = g.node();
    out.node()->backward_fn = [on, gn, hw, d]() {
      gn->ensure_grad();
      for (size_t t = 0; t < hw; ++t) {
        for (size_t c = 0; c < d; ++c) gn->grad[c * hw + t] += on->grad[t * d + c];
      }
    };
  }
  return out;
}

Tensor bilinear_warp(const Tensor& grid, const Tensor& flow) {
  if (grid.rank() != 3 || flow.rank() != 3 || flow.dim(0) != 2 || grid.dim(1) != flow.dim(1) ||
      grid.dim(2) != flow.dim(2)) {
    shape_error("bilinear_warp", grid.shape(), flow.shape());
  }
  const size_t d = grid.dim(0), h = grid.dim(1), w = grid.dim(2);
  const size_t hw = h * w;
  Tensor out = make_node(grid.shape(), {grid, flow});
  const double* gv = grid.values().data();
  const double* fv = flow.values().data();
  double* ov = out.values().data();
  const double hmax = static_cast<double>(h - 1);
  const double wmax = static_cast<double>(w - 1);
  for (size_t m = 0; m < h; ++m) {
    for (size_t n = 0; n < w; ++n) {
      const double raw_x = static_cast<double>(n) + fv[m * w + n];
      const double raw_y = static_cast<double>(m) + fv[hw + m * w + n];
      const double sx = std::clamp(raw_x, 0.0, wmax);
      const double sy = std::clamp(raw_y, 0.0, hmax);
      const size_t x0 = static_cast<size_t>(sx);
      const size_t y0 = static_cast<size_t>(sy);
      const size_t x1 = std::min(x0 + 1, w - 1);
      const size_t y1 = std::min(y0 + 1, h - 1);
      const double wx = sx - static_cast<double>(x0);
      const double wy = sy - static_cast<double>(y0);
      const double w00 = (1.0 - wy) * (1.0 - wx);
      const double w01 = (1.0 - wy) * wx;
      const double w10 = wy * (1.0 - wx);
      const double w11 = wy * wx;
      for (size_t c = 0; c < d; ++c) {
        const double* plane = gv + c * hw;
        // Weight-gated sums keep the zero-flow warp a bit-exact copy.
        double v = 0.0;
        if (w00 != 0.0) v += w00 * plane[y0 * w + x0];
        if (w01 != 0.0) v += w01 * plane[y0 * w + x1];
        if (w10 != 0.0) v += w10 * plane[y1 * w + x0];
        if (w11 != 0.0) v += w11 * plane[y1 * w + x1];
        if (w00 == 1.0) v = plane[y0 * w + x0];
        ov[c * hw + m * w + n] = v;
      }
    }
  }
  if (out.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* gn = grid.node();
    TensorNode* fn = flow.node();
    out.node()->backward_fn = [on, gn, fn, d, h, w, hw, hmax, wmax]() {
      if (gn->requires_grad) gn->ensure_grad();
      if (fn->requires_grad) fn->ensure_grad();
      for (size_t m = 0; m < h; ++m) {
        for (size_t n = 0; n < w; ++n) {
          const double raw_x = static_cast<double>(n) + fn->values[m * w + n];
          const double raw_y = static_cast<double>(m) + fn->values[hw + m * w + n];
          const bool clamped_x = raw_x < 0.0 || raw_x > wmax;
          const bool clamped_y = raw_y < 0.0 || raw_y > hmax;
          const double sx = std::clamp(raw_x, 0.0, wmax);
          const double sy = std::clamp(raw_y, 0.0, hmax);
          const size_t x0 = static_cast<size_t>(sx);
          const size_t y0 = static_cast<size_t>(sy);
          const size_t x1 = std::min(x0 + 1, w - 1);
          const size_t y1 = std::min(y0 + 1, h - 1);
          const double wx = sx - static_cast<double>(x0);
          const double wy = sy - static_cast<double>(y0);
          double dsx = 0.0, dsy = 0.0;
          for (size_t c = 0; c < d; ++c) {
            const double g = on->grad[c * hw + m * w + n];
            if (g == 0.0) continue;
            const double* plane = gn->values.data() + c * hw;
            if (gn->requires_grad) {
              double* dplane = gn->grad.data() + c * hw;
              dplane[y0 * w + x0] += g * (1.0 - wy) * (1.0 - wx);
              dplane[y0 * w + x1] += g * (1.0 - wy) * wx;
              dplane[y1 * w + x0] += g * wy * (1.0 - wx);
              dplane[y1 * w + x1] += g * wy * wx;
            }
            if (fn->requires_grad) {
              dsx += g * ((1.0 - wy) * (plane[y0 * w + x1] - plane[y0 * w + x0]) +
                          wy * (plane[y1 * w + x1] - plane[y1 * w + x0]));
              dsy += g * ((1.0 - wx) * (plane[y1 * w + x0] - plane[y0 * w + x0]) +
                          wx * (plane[y1 * w + x1] - plane[y0 * w + x1]));
            }
          }
          if (fn->requires_grad) {
            if (!clamped_x) fn->grad[m * w + n] += dsx;
            if (!clamped_y) fn->grad[hw + m * w + n] += dsy;
          }
        }
      }
    };
  }
  return out;
}

GradCheckReport gradient_check(const std::function<Tensor()>& f,
                               const std::vector<Tensor>& params, double step,
                               size_t min_coords, uint64_t seed) {
  for (const Tensor& p : params) {
    const_cast<Tensor&>(p).zero_grad();
  }
  Tensor loss = f();
  if (loss.size() != 1) {
    throw std::invalid_argument("gradient_check: f must be scalar-valued, got " +
                                shape_str(loss.shape()));
  }
  if (loss.requires_grad()) loss.backward();

  Rng rng(seed);
  GradCheckReport report;
  for (const Tensor& p : params) {
    const size_t n = p.size();
    std::vector<size_t> coords;
    if (n <= min_coords) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::unordered_set<size_t> seen;
      while (coords.size() < min_coords) {
        const size_t i = rng.below(n);
        if (seen.insert(i).second) coords.push_back(i);
      }
    }
    std::vector<double> analytic(coords.size(), 0.0);
    if (p.has_grad()) {
      for (size_t c = 0; c < coords.size(); ++c) analytic[c] = p.grad()[coords[c]];
    }
    Tensor& mut = const_cast<Tensor&>(p);
    for (size_t c = 0; c < coords.size(); ++c) {
      const size_t i = coords[c];
      const double orig = mut.values()[i];
      mut.values()[i] = orig + step;
      const double up = f().value();
      mut.values()[i] = orig - step;
      const double down = f().value();
      mut.values()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      // Floor at 1e-5: central differences in double cannot resolve smaller
      // gradient components against cancellation noise.
      const double denom = std::max({std::fabs(analytic[c]), std::fabs(numeric), 1e-5});
      report.max_rel_err = std::max(report.max_rel_err, std::fabs(analytic[c] - numeric) / denom);
      report.coords_checked++;
    }
  }
  return report;
}

}  // namespace ccap
