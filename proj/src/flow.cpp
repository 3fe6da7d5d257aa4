#include "flow.hpp"

#include <cmath>
#include <stdexcept>

namespace ccap {

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "add") return FusionMode::Add;
  if (s == "subtract") return FusionMode::Subtract;
  if (s == "concat") return FusionMode::Concat;
  throw std::invalid_argument("unknown fusion mode: " + s);
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Add: return "add";
    case FusionMode::Subtract: return "subtract";
    case FusionMode::Concat: return "concat";
  }
  return "?";
}

ViewpointFlow::ViewpointFlow(ParamStore& store, const FlowConfig& cfg, Rng& rng) : cfg_(cfg) {
  const size_t d = cfg_.width;
  const size_t red = cfg_.reduced;
  conv1a_ = store.create("flow.reduce1.w", {red, d, 1, 1}, d, rng);
  conv1b_ = store.create("flow.reduce2.w", {red, d, 1, 1}, d, rng);
  conv3_ = store.create("flow.predict.w", {4, 2 * red, 3, 3}, 0, rng);
  if (cfg_.fusion == FusionMode::Concat) {
    concat_proj_ = store.create("flow.concat_proj.w", {d, 2 * d, 1, 1}, 2 * d, rng);
  }
}

GridAndCls ViewpointFlow::sequence_to_grid(const Tensor& seq, size_t h, size_t w) {
  if (seq.rank() != 2 || seq.dim(0) != h * w + 1) {
    throw std::invalid_argument("sequence_to_grid: " + shape_str(seq.shape()) +
                                " does not hold a class token plus a " + std::to_string(h) + "x" +
                                std::to_string(w) + " grid");
  }
  GridAndCls out;
  out.cls = slice(seq, 0, 0, 1);
  out.grid = tokens_to_grid(slice(seq, 0, 1, h * w), h, w);
  return out;
}

Tensor ViewpointFlow::grid_to_sequence(const GridAndCls& g) {
  return concat(g.cls, grid_to_tokens(g.grid), 0);
}

std::pair<Tensor, Tensor> ViewpointFlow::predict_flow(const Tensor& g1, const Tensor& g2) const {
  if (g1.shape() != g2.shape()) {
    throw std::invalid_argument("predict_flow: grid shapes differ, " + shape_str(g1.shape()) +
                                " vs " + shape_str(g2.shape()));
  }
  Tensor r1 = conv2d(g1, conv1a_);
  Tensor r2 = conv2d(g2, conv1b_);
  Tensor fields = conv2d(concat(r1, r2, 0), conv3_);
  return {slice(fields, 0, 0, 2), slice(fields, 0, 2, 2)};
}

std::pair<Tensor, Tensor> ViewpointFlow::register_and_fuse(const Tensor& x1,
                                                           const Tensor& x2) const {
  const size_t h = cfg_.grid_h, w = cfg_.grid_w;
  GridAndCls a = sequence_to_grid(x1, h, w);
  GridAndCls b = sequence_to_grid(x2, h, w);
  auto [flow1, flow2] = predict_flow(a.grid, b.grid);
  // x'_i = warp(x_i, flow_i); x'_1 is aligned with x_2 and vice versa.
  Tensor warped1 = bilinear_warp(a.grid, flow1);
  Tensor warped2 = bilinear_warp(b.grid, flow2);

  Tensor f1, f2;
  switch (cfg_.fusion) {
    case FusionMode::Add:
      f1 = add(a.grid, warped2);
      f2 = add(b.grid, warped1);
      break;
    case FusionMode::Subtract:
      f1 = sub(a.grid, warped2);
      f2 = sub(b.grid, warped1);
      break;
    case FusionMode::Concat:
      f1 = conv2d(concat(a.grid, warped2, 0), concat_proj_);
      f2 = conv2d(concat(b.grid, warped1, 0), concat_proj_);
      break;
  }
  return {grid_to_sequence({a.cls, f1}), grid_to_sequence({b.cls, f2})};
}

std::vector<double> flow_to_rgb(const Tensor& flow, double max_magnitude) {
  if (flow.rank() != 3 || flow.dim(0) != 2) {
    throw std::invalid_argument("flow_to_rgb: expected [2xhxw], got " + shape_str(flow.shape()));
  }
  const size_t h = flow.dim(1), w = flow.dim(2), hw = h * w;
  double max_mag = max_magnitude;
  if (max_mag <= 0.0) {
    for (size_t i = 0; i < hw; ++i) {
      max_mag = std::max(max_mag, std::hypot(flow[i], flow[hw + i]));
    }
    if (max_mag == 0.0) max_mag = 1.0;
  }
  std::vector<double> rgb(3 * hw);
  for (size_t i = 0; i < hw; ++i) {
    const double fx = flow[i];
    const double fy = flow[hw + i];
    const double mag = std::hypot(fx, fy);
    const double sat = std::min(1.0, mag / max_mag);
    const double hue = (std::atan2(-fy, -fx) / 3.141592653589793 + 1.0) / 2.0;  // [0,1)
    const double hh = hue * 6.0;
    const int sector = std::min(5, static_cast<int>(hh));
    const double f = hh - sector;
    // Fully saturated hue for the direction, then blended toward mid-gray
    // as the magnitude shrinks: zero flow renders uniform 0.5 gray.
    double r = 0.0, g = 0.0, b = 0.0;
    switch (sector) {
      case 0: r = 1.0; g = f; break;
      case 1: r = 1.0 - f; g = 1.0; break;
      case 2: g = 1.0; b = f; break;
      case 3: g = 1.0 - f; b = 1.0; break;
      case 4: r = f; b = 1.0; break;
      default: r = 1.0; b = 1.0 - f; break;
    }
    rgb[i] = 0.5 + sat * (r - 0.5);
    rgb[hw + i] = 0.5 + sat * (g - 0.5);
    rgb[2 * hw + i] = 0.5 + sat * (b - 0.5);
  }
  return rgb;
}

}  // namespace ccap
