#include "nn.hpp"

#include <cmath>
#include <stdexcept>

#include "checkpoint.hpp"

namespace ccap {

Tensor ParamStore::create(const std::string& name, Shape shape, size_t fan_in, Rng& rng) {
  if (params_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (fan_in > 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
  }
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

void ParamStore::set_trainable_prefixes(const std::vector<std::string>& prefixes) {
  for (auto& [name, t] : params_) {
    bool trainable = false;
    for (const std::string& p : prefixes) {
      if (name.rfind(p, 0) == 0) {
        trainable = true;
        break;
      }
    }
    t.set_requires_grad(trainable);
  }
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : params_) {
    if (t.requires_grad()) out.push_back(name);
  }
  return out;
}

void ParamStore::save(const std::string& path) const { save_checkpoint(path, params_); }

void ParamStore::load(const std::string& path, bool allow_partial) {
  auto loaded = load_checkpoint(path);
  for (auto& [name, t] : params_) {
    auto it = loaded.find(name);
    if (it == loaded.end()) {
      if (allow_partial) continue;
      throw std::runtime_error("checkpoint is missing parameter: " + name);
    }
    if (it->second.shape() != t.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": file " +
                               shape_str(it->second.shape()) + " vs model " +
                               shape_str(t.shape()));
    }
    t.values() = it->second.values();
  }
}

size_t ParamStore::total_params() const {
  size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

Linear::Linear(ParamStore& store, const std::string& prefix, size_t in, size_t out, Rng& rng,
               size_t fan_in_override)
    : w(store.create(prefix + ".w", {in, out}, fan_in_override ? fan_in_override : in, rng)),
      b(store.create(prefix + ".b", {out}, 0, rng)) {}

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, size_t d, Rng& rng)
    : gain(store.create(prefix + ".g", {d}, 0, rng)),
      bias(store.create(prefix + ".b", {d}, 0, rng)) {
  for (double& v : gain.values()) v = 1.0;
}

Attention::Attention(ParamStore& store, const std::string& prefix, size_t d, size_t n_heads,
                     Rng& rng)
    : q(store, prefix + ".q", d, d, rng),
      k(store, prefix + ".k", d, d, rng),
      v(store, prefix + ".v", d, d, rng),
      o(store, prefix + ".o", d, d, rng),
      heads(n_heads) {
  if (d % n_heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(d) +
                                " not divisible by heads " + std::to_string(n_heads));
  }
}

Tensor Attention::forward(const Tensor& q_in, const Tensor& kv_in, bool causal) const {
  const size_t d = q.w.dim(0);
  const size_t dh = d / heads;
  const size_t sq = q_in.dim(0);
  const size_t sk = kv_in.dim(0);
  Tensor qp = q.forward(q_in);
  Tensor kp = k.forward(kv_in);
  Tensor vp = v.forward(kv_in);

  Tensor mask;
  if (causal) {
    if (sq != sk) throw std::invalid_argument("causal attention requires square score matrix");
    std::vector<double> m(sq * sk, 0.0);
    for (size_t i = 0; i < sq; ++i) {
      for (size_t j = i + 1; j < sk; ++j) m[i * sk + j] = -1e30;
    }
    mask = Tensor::from_values({sq, sk}, std::move(m));
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor ctx;
  for (size_t h = 0; h < heads; ++h) {
    Tensor qh = slice(qp, 1, h * dh, dh);
    Tensor kh = slice(kp, 1, h * dh, dh);
    Tensor vh = slice(vp, 1, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) scores = add(scores, mask);
    Tensor attn = softmax_rows(scores);
    Tensor ch = matmul(attn, vh);
    ctx = h == 0 ? ch : concat(ctx, ch, 1);
  }
  return o.forward(ctx);
}

FeedForward::FeedForward(ParamStore& store, const std::string& prefix, size_t d, size_t hidden,
                         Rng& rng)
    : up(store, prefix + ".up", d, hidden, rng), down(store, prefix + ".down", hidden, d, rng) {}

}  // namespace ccap
