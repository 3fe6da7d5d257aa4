#pragma once

#include <optional>
#include <utility>

#include "nn.hpp"

namespace ccap {

struct EncoderConfig {
  size_t image_size = 64;    // H = W, pixels
  size_t patch_size = 8;     // r
  size_t width = 64;         // d
  size_t blocks = 8;         // L
  size_t heads = 4;
  size_t mlp_hidden = 128;
  size_t bottleneck = 16;    // d_b
  size_t fused_interval = 2; // N; fused adapters in blocks where (i+1) % N == 0
  double alpha = 0.5;        // parallel-adapter coefficient
  bool adapters = true;      // per-stream adapters
  bool fused_adapters = true;

  size_t grid_side() const { return image_size / patch_size; }
  size_t patch_count() const { return grid_side() * grid_side(); }
  size_t tokens() const { return patch_count() + 1; }
  void validate() const;
};

// Bottleneck adapter: F_up(GELU(F_down(x))) + beta * x, with F_up zero at
// init so the host block is untouched when training starts.
struct Adapter {
  Tensor down;  // d x d_b
  Tensor up;    // d_b x d, zero-init
  Adapter() = default;
  Adapter(ParamStore& store, const std::string& prefix, size_t d, size_t d_b, Rng& rng);
  Tensor forward(const Tensor& x, double beta) const;
};

// Dual-input/dual-output adapter mixing the two streams through a shared
// projection of the concatenated bottleneck features.
struct FusedAdapter {
  Tensor down1, down2;  // d x d_b
  Tensor mix;           // 2*d_b x d_b
  Tensor up1, up2;      // d_b x d, zero-init
  FusedAdapter() = default;
  FusedAdapter(ParamStore& store, const std::string& prefix, size_t d, size_t d_b, Rng& rng);
  std::pair<Tensor, Tensor> forward(const Tensor& x1, const Tensor& x2, double beta) const;
};

struct EncoderBlock {
  LayerNorm ln1, ln2;
  Attention attn;
  FeedForward mlp;
  std::optional<Adapter> adp1, adp2;
  std::optional<FusedAdapter> fadp1, fadp2;
  bool fused = false;
};

// Two-stream ViT: one set of weights applied to both images in lockstep;
// fused-adapter blocks couple the streams, all other processing is
// per-stream.
class VitEncoder {
 public:
  VitEncoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng);

  Tensor patch_embed(const Tensor& image) const;
  std::pair<Tensor, Tensor> encode_pair(const Tensor& img1, const Tensor& img2) const;
  // Adapter-free reference path over the same weights.
  Tensor encode_pristine(const Tensor& image) const;

  const EncoderConfig& config() const { return cfg_; }
  // Prefixes of every adapter/fused-adapter parameter (the phase-2
  // trainable subset of the encoder).
  std::vector<std::string> adapter_prefixes() const;

 private:
  std::pair<Tensor, Tensor> block_forward(const Tensor& x1, const Tensor& x2,
                                          size_t index) const;
  Tensor block_forward_pristine(const Tensor& x, size_t index) const;

  EncoderConfig cfg_;
  Tensor patch_w_, patch_b_;  // (3*r*r) x d, d
  Tensor cls_;                // 1 x d
  Tensor pos_;                // (n+1) x d
  std::vector<EncoderBlock> blocks_;
};

}  // namespace ccap
