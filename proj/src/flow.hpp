#pragma once

#include <string>
#include <utility>

#include "nn.hpp"

namespace ccap {

enum class FusionMode { Add, Subtract, Concat };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct FlowConfig {
  size_t width = 64;       // d, must match the encoder
  size_t grid_h = 8;
  size_t grid_w = 8;
  size_t reduced = 16;     // 1x1 conv output channels (d/4)
  FusionMode fusion = FusionMode::Add;
};

// Class token held aside while the patch tokens live on the 2-D grid.
struct GridAndCls {
  Tensor cls;   // 1 x d
  Tensor grid;  // d x h x w
};

// Predicts a 2-channel displacement field per image over the patch lattice,
// warps each grid toward the other viewpoint by bilinear sampling, and fuses
// original with warped features. Flow units are grid cells; channel 0 is the
// horizontal displacement (+h samples from the right), channel 1 vertical.
class ViewpointFlow {
 public:
  ViewpointFlow(ParamStore& store, const FlowConfig& cfg, Rng& rng);

  static GridAndCls sequence_to_grid(const Tensor& seq, size_t h, size_t w);
  static Tensor grid_to_sequence(const GridAndCls& g);

  std::pair<Tensor, Tensor> predict_flow(const Tensor& g1, const Tensor& g2) const;
  std::pair<Tensor, Tensor> register_and_fuse(const Tensor& x1, const Tensor& x2) const;

  const FlowConfig& config() const { return cfg_; }

 private:
  FlowConfig cfg_;
  Tensor conv1a_, conv1b_;  // reduced x d x 1 x 1
  Tensor conv3_;            // 4 x 2*reduced x 3 x 3, zero-init: identity warp at start
  Tensor concat_proj_;      // d x 2d x 1 x 1, only materialized for Concat fusion
};

// Flow-color-wheel rendering (hue = direction, saturation = magnitude).
// Returns 3 x h x w RGB in [0, 1].
std::vector<double> flow_to_rgb(const Tensor& flow, double max_magnitude = 0.0);

}  // namespace ccap
