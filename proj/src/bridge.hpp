#pragma once

#include <string>
#include <utility>

#include "nn.hpp"

namespace ccap {

enum class EmphasisInput { SelfOther, Diff, SelfOtherDiff };

EmphasisInput emphasis_input_from_string(const std::string& s);
std::string to_string(EmphasisInput m);

struct BridgeConfig {
  size_t query_slots = 8;   // K
  size_t width = 64;        // d_q
  size_t visual_width = 64; // d of the incoming token sequences
  size_t blocks = 2;
  size_t heads = 4;
  size_t mlp_hidden = 128;
  size_t decoder_width = 64;   // d_dec
  bool emphasis = true;        // semantic emphasizing on/off
  EmphasisInput emphasis_input = EmphasisInput::SelfOther;
};

struct BridgeBlock {
  LayerNorm ln_q, ln_ff;
  Attention cross;
  FeedForward ff;
};

// Q-Former stand-in: learned query slots cross-attend over the visual
// tokens, then semantic emphasizing gates the two summaries against each
// other, and a projection maps the concatenated slots to decoder width.
class SemanticBridge {
 public:
  SemanticBridge(ParamStore& store, const BridgeConfig& cfg, Rng& rng);

  Tensor query_transform(const Tensor& visual_tokens) const;  // -> K x d_q
  // a_i = sigmoid(FC(self-then-other concat)); f_i = a_i (.) q_i. One shared
  // FC serves both orderings.
  std::pair<Tensor, Tensor> emphasize(const Tensor& q1, const Tensor& q2) const;
  Tensor project(const Tensor& f1, const Tensor& f2) const;  // -> 2K x d_dec

  // Full bridge with the emphasis switch applied.
  Tensor prefix_for_pair(const Tensor& x1, const Tensor& x2) const;

  const BridgeConfig& config() const { return cfg_; }

 private:
  Tensor emphasis_features(const Tensor& self, const Tensor& other) const;

  BridgeConfig cfg_;
  Tensor queries_;  // K x d_q
  std::vector<BridgeBlock> blocks_;
  Tensor emph_w_, emph_b_;
  Linear proj_;
};

}  // namespace ccap
