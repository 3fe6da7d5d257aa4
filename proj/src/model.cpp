#include "model.hpp"

#include <stdexcept>

#include "json.hpp"

namespace ccap {

using ordered_json = nlohmann::ordered_json;

void ModelConfig::resolve() {
  bridge.visual_width = encoder.width;
  decoder.prefix_slots = 2 * bridge.query_slots;
  bridge.decoder_width = decoder.width;
  encoder.validate();
}

std::string ModelConfig::to_json() const {
  ordered_json j = {
      {"image_size", encoder.image_size},
      {"patch_size", encoder.patch_size},
      {"width", encoder.width},
      {"blocks", encoder.blocks},
      {"heads", encoder.heads},
      {"mlp_hidden", encoder.mlp_hidden},
      {"bottleneck", encoder.bottleneck},
      {"fused_interval", encoder.fused_interval},
      {"alpha", encoder.alpha},
      {"adapters", encoder.adapters},
      {"fused_adapters", encoder.fused_adapters},
      {"vrf", vrf},
      {"fusion", to_string(fusion)},
      {"query_slots", bridge.query_slots},
      {"bridge_width", bridge.width},
      {"bridge_blocks", bridge.blocks},
      {"bridge_heads", bridge.heads},
      {"bridge_mlp_hidden", bridge.mlp_hidden},
      {"sem", bridge.emphasis},
      {"emphasis_input", to_string(bridge.emphasis_input)},
      {"decoder_width", decoder.width},
      {"decoder_layers", decoder.layers},
      {"decoder_heads", decoder.heads},
      {"decoder_mlp_hidden", decoder.mlp_hidden},
      {"instr_len", decoder.instr_len},
      {"max_len", decoder.max_len},
      {"beams", decoder.beams},
      {"repetition_penalty", decoder.repetition_penalty},
      {"temperature", decoder.temperature},
      {"vocab_size", decoder.vocab_size},
      {"init_seed", init_seed},
  };
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ModelConfig c;
  c.encoder.image_size = j.at("image_size").get<size_t>();
  c.encoder.patch_size = j.at("patch_size").get<size_t>();
  c.encoder.width = j.at("width").get<size_t>();
  c.encoder.blocks = j.at("blocks").get<size_t>();
  c.encoder.heads = j.at("heads").get<size_t>();
  c.encoder.mlp_hidden = j.at("mlp_hidden").get<size_t>();
  c.encoder.bottleneck = j.at("bottleneck").get<size_t>();
  c.encoder.fused_interval = j.at("fused_interval").get<size_t>();
  c.encoder.alpha = j.at("alpha").get<double>();
  c.encoder.adapters = j.at("adapters").get<bool>();
  c.encoder.fused_adapters = j.at("fused_adapters").get<bool>();
  c.vrf = j.at("vrf").get<bool>();
  c.fusion = fusion_mode_from_string(j.at("fusion").get<std::string>());
  c.bridge.query_slots = j.at("query_slots").get<size_t>();
  c.bridge.width = j.at("bridge_width").get<size_t>();
  c.bridge.blocks = j.at("bridge_blocks").get<size_t>();
  c.bridge.heads = j.at("bridge_heads").get<size_t>();
  c.bridge.mlp_hidden = j.at("bridge_mlp_hidden").get<size_t>();
  c.bridge.emphasis = j.at("sem").get<bool>();
  c.bridge.emphasis_input = emphasis_input_from_string(j.at("emphasis_input").get<std::string>());
  c.decoder.width = j.at("decoder_width").get<size_t>();
  c.decoder.layers = j.at("decoder_layers").get<size_t>();
  c.decoder.heads = j.at("decoder_heads").get<size_t>();
  c.decoder.mlp_hidden = j.at("decoder_mlp_hidden").get<size_t>();
  c.decoder.instr_len = j.at("instr_len").get<size_t>();
  c.decoder.max_len = j.at("max_len").get<size_t>();
  c.decoder.beams = j.at("beams").get<size_t>();
  c.decoder.repetition_penalty = j.at("repetition_penalty").get<double>();
  c.decoder.temperature = j.at("temperature").get<double>();
  c.decoder.vocab_size = j.at("vocab_size").get<size_t>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
  c.resolve();
  return c;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.resolve();
  Rng rng(cfg_.init_seed);
  encoder_ = std::make_unique<VitEncoder>(store_, cfg_.encoder, rng);
  if (cfg_.vrf) {
    FlowConfig fc;
    fc.width = cfg_.encoder.width;
    fc.grid_h = cfg_.encoder.grid_side();
    fc.grid_w = cfg_.encoder.grid_side();
    fc.reduced = cfg_.encoder.width / 4;
    fc.fusion = cfg_.fusion;
    flow_ = std::make_unique<ViewpointFlow>(store_, fc, rng);
  }
  bridge_ = std::make_unique<SemanticBridge>(store_, cfg_.bridge, rng);
  decoder_ = std::make_unique<CaptionDecoder>(store_, cfg_.decoder, rng);
}

Tensor Model::prefix_for_pair(const Tensor& img1, const Tensor& img2) const {
  auto [x1, x2] = encoder_->encode_pair(img1, img2);
  if (flow_) {
    std::tie(x1, x2) = flow_->register_and_fuse(x1, x2);
  }
  return bridge_->prefix_for_pair(x1, x2);
}

Tensor Model::pair_loss(const Tensor& img1, const Tensor& img2,
                        const std::vector<size_t>& words) const {
  return decoder_->caption_loss(prefix_for_pair(img1, img2), words);
}

Tensor Model::text_loss(const std::vector<size_t>& words) const {
  return decoder_->caption_loss(decoder_->zero_prefix(), words);
}

Tensor Model::caption_logits_for_pair(const Tensor& img1, const Tensor& img2,
                                      const std::vector<size_t>& input_tokens) const {
  return decoder_->caption_logits(prefix_for_pair(img1, img2), input_tokens);
}

Tensor Model::reference_step0_logits(const Tensor& img1, const Tensor& img2,
                                     const std::vector<size_t>& input_tokens) const {
  Tensor x1 = encoder_->encode_pristine(img1);
  Tensor x2 = encoder_->encode_pristine(img2);
  if (cfg_.vrf) {
    // Zero-initialized flow means identity warps, so registration reduces
    // to summing the two patch grids.
    const size_t side = cfg_.encoder.grid_side();
    GridAndCls a = ViewpointFlow::sequence_to_grid(x1, side, side);
    GridAndCls b = ViewpointFlow::sequence_to_grid(x2, side, side);
    x1 = ViewpointFlow::grid_to_sequence({a.cls, add(a.grid, b.grid)});
    x2 = ViewpointFlow::grid_to_sequence({b.cls, add(b.grid, a.grid)});
  }
  Tensor q1 = bridge_->query_transform(x1);
  Tensor q2 = bridge_->query_transform(x2);
  Tensor f1 = q1, f2 = q2;
  if (cfg_.bridge.emphasis) {
    // Zero emphasis weights gate every component by sigmoid(0) = 0.5.
    f1 = scale(q1, 0.5);
    f2 = scale(q2, 0.5);
  }
  Tensor prefix = bridge_->project(f1, f2);
  return decoder_->caption_logits(prefix, input_tokens);
}

std::vector<size_t> Model::generate(const Tensor& img1, const Tensor& img2) const {
  NoGradGuard no_grad;
  return decoder_->generate(prefix_for_pair(img1, img2));
}

std::vector<RankedCaption> Model::rank_candidates(
    const Tensor& img1, const Tensor& img2,
    const std::vector<std::vector<size_t>>& candidates) const {
  NoGradGuard no_grad;
  return decoder_->vocab_ranked_score(prefix_for_pair(img1, img2), candidates);
}

std::pair<Tensor, Tensor> Model::predicted_flows(const Tensor& img1, const Tensor& img2) const {
  if (!flow_) throw std::runtime_error("model has no viewpoint registration flow");
  auto [x1, x2] = encoder_->encode_pair(img1, img2);
  const size_t side = cfg_.encoder.grid_side();
  GridAndCls a = ViewpointFlow::sequence_to_grid(x1, side, side);
  GridAndCls b = ViewpointFlow::sequence_to_grid(x2, side, side);
  return flow_->predict_flow(a.grid, b.grid);
}

std::vector<std::string> Model::pretrain_trainable_prefixes() const {
  return {"encoder.", "bridge.qformer.", "bridge.proj.", "decoder.", "instr."};
}

std::vector<std::string> Model::adapt_trainable_prefixes() const {
  std::vector<std::string> prefixes = encoder_->adapter_prefixes();
  prefixes.push_back("flow.");
  prefixes.push_back("bridge.emph.");
  prefixes.push_back("bridge.proj.");
  prefixes.push_back("instr.");
  return prefixes;
}

}  // namespace ccap
