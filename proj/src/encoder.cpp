#include "encoder.hpp"

#include <stdexcept>

namespace ccap {

void EncoderConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("encoder: image size " + std::to_string(image_size) +
                                " not divisible by patch size " + std::to_string(patch_size));
  }
  if (width % heads != 0) {
    throw std::invalid_argument("encoder: width not divisible by heads");
  }
  if (bottleneck >= width) {
    throw std::invalid_argument("encoder: bottleneck must be narrower than width");
  }
}

Adapter::Adapter(ParamStore& store, const std::string& prefix, size_t d, size_t d_b, Rng& rng)
    : down(store.create(prefix + ".down", {d, d_b}, d, rng)),
      up(store.create(prefix + ".up", {d_b, d}, 0, rng)) {}

Tensor Adapter::forward(const Tensor& x, double beta) const {
  Tensor h = matmul(gelu(matmul(x, down)), up);
  if (beta == 0.0) return h;
  if (beta == 1.0) return add(h, x);
  return add(h, scale(x, beta));
}

FusedAdapter::FusedAdapter(ParamStore& store, const std::string& prefix, size_t d, size_t d_b,
                           Rng& rng)
    : down1(store.create(prefix + ".down1", {d, d_b}, d, rng)),
      down2(store.create(prefix + ".down2", {d, d_b}, d, rng)),
      mix(store.create(prefix + ".mix", {2 * d_b, d_b}, 2 * d_b, rng)),
      up1(store.create(prefix + ".up1", {d_b, d}, 0, rng)),
      up2(store.create(prefix + ".up2", {d_b, d}, 0, rng)) {}

std::pair<Tensor, Tensor> FusedAdapter::forward(const Tensor& x1, const Tensor& x2,
                                                double beta) const {
  if (x1.shape() != x2.shape()) {
    throw std::invalid_argument("fused adapter: stream shapes differ, " + shape_str(x1.shape()) +
                                " vs " + shape_str(x2.shape()));
  }
  Tensor b1 = gelu(matmul(x1, down1));
  Tensor b2 = gelu(matmul(x2, down2));
  Tensor joint = matmul(concat(b1, b2, 1), mix);
  Tensor o1 = matmul(joint, up1);
  Tensor o2 = matmul(joint, up2);
  if (beta == 0.0) return {o1, o2};
  if (beta == 1.0) return {add(o1, x1), add(o2, x2)};
  return {add(o1, scale(x1, beta)), add(o2, scale(x2, beta))};
}

VitEncoder::VitEncoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const size_t d = cfg_.width;
  const size_t patch_dim = 3 * cfg_.patch_size * cfg_.patch_size;
  patch_w_ = store.create("encoder.patch.w", {patch_dim, d}, patch_dim, rng);
  patch_b_ = store.create("encoder.patch.b", {d}, 0, rng);
  cls_ = store.create("encoder.cls", {1, d}, d, rng);
  pos_ = store.create("encoder.pos", {cfg_.tokens(), d}, d, rng);

  blocks_.resize(cfg_.blocks);
  for (size_t i = 0; i < cfg_.blocks; ++i) {
    const std::string p = "encoder.block" + std::to_string(i);
    EncoderBlock& blk = blocks_[i];
    blk.ln1 = LayerNorm(store, p + ".ln1", d, rng);
    blk.ln2 = LayerNorm(store, p + ".ln2", d, rng);
    blk.attn = Attention(store, p + ".attn", d, cfg_.heads, rng);
    blk.mlp = FeedForward(store, p + ".mlp", d, cfg_.mlp_hidden, rng);
    blk.fused = cfg_.adapters && cfg_.fused_adapters && cfg_.fused_interval > 0 &&
                (i + 1) % cfg_.fused_interval == 0;
    if (blk.fused) {
      blk.fadp1.emplace(store, p + ".fadp1", d, cfg_.bottleneck, rng);
      blk.fadp2.emplace(store, p + ".fadp2", d, cfg_.bottleneck, rng);
    } else if (cfg_.adapters) {
      blk.adp1.emplace(store, p + ".adp1", d, cfg_.bottleneck, rng);
      blk.adp2.emplace(store, p + ".adp2", d, cfg_.bottleneck, rng);
    }
  }
}

Tensor VitEncoder::patch_embed(const Tensor& image) const {
  const size_t r = cfg_.patch_size;
  const size_t hw = cfg_.image_size;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != hw || image.dim(2) != hw) {
    throw std::invalid_argument("patch_embed: expected image [3x" + std::to_string(hw) + "x" +
                                std::to_string(hw) + "], got " + shape_str(image.shape()));
  }
  const size_t side = cfg_.grid_side();
  const size_t n = cfg_.patch_count();
  const size_t patch_dim = 3 * r * r;

  // Patch extraction is a fixed permutation of constant pixels; the
  // projection matmul carries the gradient.
  std::vector<double> patches(n * patch_dim);
  const double* img = image.values().data();
  for (size_t gy = 0; gy < side; ++gy) {
    for (size_t gx = 0; gx < side; ++gx) {
      double* dst = patches.data() + (gy * side + gx) * patch_dim;
      for (size_t c = 0; c < 3; ++c) {
        for (size_t py = 0; py < r; ++py) {
          for (size_t px = 0; px < r; ++px) {
            dst[c * r * r + py * r + px] = img[c * hw * hw + (gy * r + py) * hw + (gx * r + px)];
          }
        }
      }
    }
  }
  Tensor patch_mat = Tensor::from_values({n, patch_dim}, std::move(patches));
  Tensor tokens = add_bias(matmul(patch_mat, patch_w_), patch_b_);
  return add(concat(cls_, tokens, 0), pos_);
}

std::pair<Tensor, Tensor> VitEncoder::block_forward(const Tensor& x1, const Tensor& x2,
                                                    size_t index) const {
  const EncoderBlock& blk = blocks_[index];
  Tensor n1 = blk.ln1.forward(x1);
  Tensor n2 = blk.ln1.forward(x2);
  Tensor a1 = blk.attn.forward(n1, n1, false);
  Tensor a2 = blk.attn.forward(n2, n2, false);

  Tensor h1 = a1, h2 = a2;
  if (blk.fused) {
    std::tie(h1, h2) = blk.fadp1->forward(a1, a2, 1.0);
  } else if (blk.adp1) {
    h1 = blk.adp1->forward(a1, 1.0);
    h2 = blk.adp1->forward(a2, 1.0);
  }
  Tensor t1 = blk.ln2.forward(add(h1, x1));
  Tensor t2 = blk.ln2.forward(add(h2, x2));

  Tensor o1 = add(t1, blk.mlp.forward(t1));
  Tensor o2 = add(t2, blk.mlp.forward(t2));
  if (blk.fused) {
    auto [p1, p2] = blk.fadp2->forward(t1, t2, 0.0);
    o1 = add(o1, scale(p1, cfg_.alpha));
    o2 = add(o2, scale(p2, cfg_.alpha));
  } else if (blk.adp2) {
    o1 = add(o1, scale(blk.adp2->forward(t1, 0.0), cfg_.alpha));
    o2 = add(o2, scale(blk.adp2->forward(t2, 0.0), cfg_.alpha));
  }
  return {o1, o2};
}

Tensor VitEncoder::block_forward_pristine(const Tensor& x, size_t index) const {
  const EncoderBlock& blk = blocks_[index];
  Tensor n = blk.ln1.forward(x);
  Tensor a = blk.attn.forward(n, n, false);
  Tensor t = blk.ln2.forward(add(a, x));
  return add(t, blk.mlp.forward(t));
}

std::pair<Tensor, Tensor> VitEncoder::encode_pair(const Tensor& img1, const Tensor& img2) const {
  Tensor x1 = patch_embed(img1);
  Tensor x2 = patch_embed(img2);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    std::tie(x1, x2) = block_forward(x1, x2, i);
  }
  return {x1, x2};
}

Tensor VitEncoder::encode_pristine(const Tensor& image) const {
  Tensor x = patch_embed(image);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    x = block_forward_pristine(x, i);
  }
  return x;
}

std::vector<std::string> VitEncoder::adapter_prefixes() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "encoder.block" + std::to_string(i);
    if (blocks_[i].fused) {
      out.push_back(p + ".fadp1.");
      out.push_back(p + ".fadp2.");
    } else if (blocks_[i].adp1) {
      out.push_back(p + ".adp1.");
      out.push_back(p + ".adp2.");
    }
  }
  return out;
}

}  // namespace ccap
