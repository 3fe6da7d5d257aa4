#pragma once

#include <map>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace ccap {

// Named parameter registry. Modules hold Tensor handles created here, so
// loading a checkpoint copies values into the live nodes.
class ParamStore {
 public:
  // fan_in > 0: uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)];
  // fan_in == 0: zero init.
  Tensor create(const std::string& name, Shape shape, size_t fan_in, Rng& rng);

  const std::map<std::string, Tensor>& all() const { return params_; }
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }

  // requires_grad := name starts with any of the given prefixes.
  void set_trainable_prefixes(const std::vector<std::string>& prefixes);
  std::vector<Tensor> trainable() const;
  std::vector<std::string> trainable_names() const;

  void save(const std::string& path) const;
  // Copies values into existing tensors; every stored name must be present
  // with a matching shape. Missing-from-file names are left untouched when
  // allow_partial is set.
  void load(const std::string& path, bool allow_partial = false);

  size_t total_params() const;

 private:
  std::map<std::string, Tensor> params_;
};

struct Linear {
  Tensor w;  // in x out
  Tensor b;  // out
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, size_t in, size_t out, Rng& rng,
         size_t fan_in_override = 0);
  Tensor forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, size_t d, Rng& rng);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

// Multi-head scaled dot-product attention; self-attention when q_in == kv_in.
struct Attention {
  Linear q, k, v, o;
  size_t heads = 1;
  Attention() = default;
  Attention(ParamStore& store, const std::string& prefix, size_t d, size_t n_heads, Rng& rng);
  Tensor forward(const Tensor& q_in, const Tensor& kv_in, bool causal) const;
};

struct FeedForward {
  Linear up, down;
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& prefix, size_t d, size_t hidden, Rng& rng);
  Tensor forward(const Tensor& x) const { return down.forward(gelu(up.forward(x))); }
};

}  // namespace ccap
