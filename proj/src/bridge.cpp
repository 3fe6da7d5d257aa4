#include "bridge.hpp"

#include <stdexcept>

namespace ccap {

EmphasisInput emphasis_input_from_string(const std::string& s) {
  if (s == "self_other") return EmphasisInput::SelfOther;
  if (s == "diff") return EmphasisInput::Diff;
  if (s == "self_other_diff") return EmphasisInput::SelfOtherDiff;
  throw std::invalid_argument("unknown emphasis input mode: " + s);
}

std::string to_string(EmphasisInput m) {
  switch (m) {
    case EmphasisInput::SelfOther: return "self_other";
    case EmphasisInput::Diff: return "diff";
    case EmphasisInput::SelfOtherDiff: return "self_other_diff";
  }
  return "?";
}

SemanticBridge::SemanticBridge(ParamStore& store, const BridgeConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.width != cfg_.visual_width) {
    // Cross-attention projects kv from the visual width; keeping both equal
    // keeps the stand-in minimal.
    throw std::invalid_argument("bridge: query width must equal visual width");
  }
  queries_ = store.create("bridge.qformer.queries", {cfg_.query_slots, cfg_.width}, cfg_.width,
                          rng);
  blocks_.resize(cfg_.blocks);
  for (size_t i = 0; i < cfg_.blocks; ++i) {
    const std::string p = "bridge.qformer.block" + std::to_string(i);
    blocks_[i].ln_q = LayerNorm(store, p + ".ln_q", cfg_.width, rng);
    blocks_[i].ln_ff = LayerNorm(store, p + ".ln_ff", cfg_.width, rng);
    blocks_[i].cross = Attention(store, p + ".cross", cfg_.width, cfg_.heads, rng);
    blocks_[i].ff = FeedForward(store, p + ".ff", cfg_.width, cfg_.mlp_hidden, rng);
  }
  size_t emph_in = 2 * cfg_.width;
  if (cfg_.emphasis_input == EmphasisInput::Diff) emph_in = cfg_.width;
  if (cfg_.emphasis_input == EmphasisInput::SelfOtherDiff) emph_in = 3 * cfg_.width;
  emph_w_ = store.create("bridge.emph.w", {emph_in, cfg_.width}, 0, rng);
  emph_b_ = store.create("bridge.emph.b", {cfg_.width}, 0, rng);
  proj_ = Linear(store, "bridge.proj", cfg_.width, cfg_.decoder_width, rng);
}

Tensor SemanticBridge::query_transform(const Tensor& visual_tokens) const {
  Tensor q = queries_;
  for (const BridgeBlock& blk : blocks_) {
    q = add(q, blk.cross.forward(blk.ln_q.forward(q), visual_tokens, false));
    q = add(q, blk.ff.forward(blk.ln_ff.forward(q)));
  }
  return q;
}

Tensor SemanticBridge::emphasis_features(const Tensor& self, const Tensor& other) const {
  switch (cfg_.emphasis_input) {
    case EmphasisInput::SelfOther: return concat(self, other, 1);
    case EmphasisInput::Diff: return sub(self, other);
    case EmphasisInput::SelfOtherDiff:
      return concat(concat(self, other, 1), sub(self, other), 1);
  }
  throw std::logic_error("unreachable");
}

std::pair<Tensor, Tensor> SemanticBridge::emphasize(const Tensor& q1, const Tensor& q2) const {
  if (q1.shape() != q2.shape()) {
    throw std::invalid_argument("emphasize: query shapes differ, " + shape_str(q1.shape()) +
                                " vs " + shape_str(q2.shape()));
  }
  Tensor a1 = sigmoid(add_bias(matmul(emphasis_features(q1, q2), emph_w_), emph_b_));
  Tensor a2 = sigmoid(add_bias(matmul(emphasis_features(q2, q1), emph_w_), emph_b_));
  return {mul(a1, q1), mul(a2, q2)};
}

Tensor SemanticBridge::project(const Tensor& f1, const Tensor& f2) const {
  return proj_.forward(concat(f1, f2, 0));
}

Tensor SemanticBridge::prefix_for_pair(const Tensor& x1, const Tensor& x2) const {
  Tensor q1 = query_transform(x1);
  Tensor q2 = query_transform(x2);
  if (cfg_.emphasis) {
    auto [f1, f2] = emphasize(q1, q2);
    return project(f1, f2);
  }
  return project(q1, q2);
}

}  // namespace ccap
