#pragma once

#include <memory>
#include <optional>
#include <string>

#include "bridge.hpp"
#include "decoder.hpp"
#include "encoder.hpp"
#include "flow.hpp"
#include "nn.hpp"

namespace ccap {

struct ModelConfig {
  EncoderConfig encoder;
  bool vrf = true;
  FusionMode fusion = FusionMode::Add;
  BridgeConfig bridge;
  DecoderConfig decoder;
  uint64_t init_seed = 42;

  void resolve();  // ties the cross-module widths together
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Full two-image change-caption pipeline. The same instance serves both
// training phases; switches live in the config.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  // Registered visual features -> decoder prefix (2K x d_dec).
  Tensor prefix_for_pair(const Tensor& img1, const Tensor& img2) const;
  Tensor pair_loss(const Tensor& img1, const Tensor& img2,
                   const std::vector<size_t>& words) const;
  // Text-only sample: the visual prefix is all zeros.
  Tensor text_loss(const std::vector<size_t>& words) const;

  Tensor caption_logits_for_pair(const Tensor& img1, const Tensor& img2,
                                 const std::vector<size_t>& input_tokens) const;
  // Adapter-free/flow-free/0.5-gate reference over the same weights: what the
  // frozen backbone alone produces at the start of the adapt phase.
  Tensor reference_step0_logits(const Tensor& img1, const Tensor& img2,
                                const std::vector<size_t>& input_tokens) const;

  std::vector<size_t> generate(const Tensor& img1, const Tensor& img2) const;
  std::vector<RankedCaption> rank_candidates(
      const Tensor& img1, const Tensor& img2,
      const std::vector<std::vector<size_t>>& candidates) const;

  std::pair<Tensor, Tensor> predicted_flows(const Tensor& img1, const Tensor& img2) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& params() const { return store_; }
  const VitEncoder& encoder() const { return *encoder_; }
  const SemanticBridge& bridge() const { return *bridge_; }
  const CaptionDecoder& decoder() const { return *decoder_; }

  // Parameter-name prefixes trained in each phase; everything else frozen.
  std::vector<std::string> pretrain_trainable_prefixes() const;
  std::vector<std::string> adapt_trainable_prefixes() const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<VitEncoder> encoder_;
  std::unique_ptr<ViewpointFlow> flow_;
  std::unique_ptr<SemanticBridge> bridge_;
  std::unique_ptr<CaptionDecoder> decoder_;
};

}  // namespace ccap
