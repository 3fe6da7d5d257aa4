#include "config.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ccap {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json flatten(const AppConfig& c) {
  return ordered_json{
      // dataset
      {"train_pairs", c.dataset.train_pairs},
      {"val_pairs", c.dataset.val_pairs},
      {"test_pairs", c.dataset.test_pairs},
      {"image_size", c.dataset.image_size},
      {"object_min", c.dataset.object_min},
      {"object_max", c.dataset.object_max},
      {"shift_bound", c.dataset.shift_bound},
      {"max_rotation", c.dataset.max_rotation},
      {"illum_lo", c.dataset.illum_lo},
      {"illum_hi", c.dataset.illum_hi},
      {"distractor_fraction", c.dataset.distractor_fraction},
      {"data_seed", c.dataset.seed},
      // training
      {"phase", c.train.phase},
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"lr", c.train.lr},
      {"min_lr", c.train.min_lr},
      {"weight_decay", c.train.weight_decay},
      {"warmup_steps", c.train.warmup_steps},
      {"cosine_decay", c.train.cosine_decay},
      {"seed", c.train.seed},
      {"pretrain_checkpoint", c.train.pretrain_checkpoint},
      {"adapters", c.train.adapters},
      {"fused_adapters", c.train.fused_adapters},
      {"vrf", c.train.vrf},
      {"sem", c.train.sem},
      {"fusion", c.train.fusion},
      {"emphasis_input", c.train.emphasis_input},
      // model dimensions
      {"patch_size", c.model.encoder.patch_size},
      {"width", c.model.encoder.width},
      {"blocks", c.model.encoder.blocks},
      {"heads", c.model.encoder.heads},
      {"mlp_hidden", c.model.encoder.mlp_hidden},
      {"bottleneck", c.model.encoder.bottleneck},
      {"fused_interval", c.model.encoder.fused_interval},
      {"alpha", c.model.encoder.alpha},
      {"query_slots", c.model.bridge.query_slots},
      {"bridge_blocks", c.model.bridge.blocks},
      {"bridge_heads", c.model.bridge.heads},
      {"bridge_mlp_hidden", c.model.bridge.mlp_hidden},
      {"decoder_width", c.model.decoder.width},
      {"decoder_layers", c.model.decoder.layers},
      {"decoder_heads", c.model.decoder.heads},
      {"decoder_mlp_hidden", c.model.decoder.mlp_hidden},
      {"instr_len", c.model.decoder.instr_len},
      {"max_len", c.model.decoder.max_len},
      {"beams", c.model.decoder.beams},
      {"repetition_penalty", c.model.decoder.repetition_penalty},
      {"temperature", c.model.decoder.temperature},
  };
}

void unflatten(const ordered_json& j, AppConfig& c) {
  c.dataset.train_pairs = j.at("train_pairs").get<size_t>();
  c.dataset.val_pairs = j.at("val_pairs").get<size_t>();
  c.dataset.test_pairs = j.at("test_pairs").get<size_t>();
  c.dataset.image_size = j.at("image_size").get<size_t>();
  c.dataset.object_min = j.at("object_min").get<size_t>();
  c.dataset.object_max = j.at("object_max").get<size_t>();
  c.dataset.shift_bound = j.at("shift_bound").get<double>();
  c.dataset.max_rotation = j.at("max_rotation").get<double>();
  c.dataset.illum_lo = j.at("illum_lo").get<double>();
  c.dataset.illum_hi = j.at("illum_hi").get<double>();
  c.dataset.distractor_fraction = j.at("distractor_fraction").get<double>();
  c.dataset.seed = j.at("data_seed").get<uint64_t>();

  c.train.phase = j.at("phase").get<std::string>();
  c.train.epochs = j.at("epochs").get<size_t>();
  c.train.batch_size = j.at("batch_size").get<size_t>();
  c.train.lr = j.at("lr").get<double>();
  c.train.min_lr = j.at("min_lr").get<double>();
  c.train.weight_decay = j.at("weight_decay").get<double>();
  c.train.warmup_steps = j.at("warmup_steps").get<size_t>();
  c.train.cosine_decay = j.at("cosine_decay").get<bool>();
  c.train.seed = j.at("seed").get<uint64_t>();
  c.train.pretrain_checkpoint = j.at("pretrain_checkpoint").get<std::string>();
  c.train.adapters = j.at("adapters").get<bool>();
  c.train.fused_adapters = j.at("fused_adapters").get<bool>();
  c.train.vrf = j.at("vrf").get<bool>();
  c.train.sem = j.at("sem").get<bool>();
  c.train.fusion = j.at("fusion").get<std::string>();
  c.train.emphasis_input = j.at("emphasis_input").get<std::string>();

  c.model.encoder.image_size = c.dataset.image_size;
  c.model.encoder.patch_size = j.at("patch_size").get<size_t>();
  c.model.encoder.width = j.at("width").get<size_t>();
  c.model.encoder.blocks = j.at("blocks").get<size_t>();
  c.model.encoder.heads = j.at("heads").get<size_t>();
  c.model.encoder.mlp_hidden = j.at("mlp_hidden").get<size_t>();
  c.model.encoder.bottleneck = j.at("bottleneck").get<size_t>();
  c.model.encoder.fused_interval = j.at("fused_interval").get<size_t>();
  c.model.encoder.alpha = j.at("alpha").get<double>();
  c.model.bridge.query_slots = j.at("query_slots").get<size_t>();
  c.model.bridge.width = c.model.encoder.width;
  c.model.bridge.blocks = j.at("bridge_blocks").get<size_t>();
  c.model.bridge.heads = j.at("bridge_heads").get<size_t>();
  c.model.bridge.mlp_hidden = j.at("bridge_mlp_hidden").get<size_t>();
  c.model.decoder.width = j.at("decoder_width").get<size_t>();
  c.model.decoder.layers = j.at("decoder_layers").get<size_t>();
  c.model.decoder.heads = j.at("decoder_heads").get<size_t>();
  c.model.decoder.mlp_hidden = j.at("decoder_mlp_hidden").get<size_t>();
  c.model.decoder.instr_len = j.at("instr_len").get<size_t>();
  c.model.decoder.max_len = j.at("max_len").get<size_t>();
  c.model.decoder.beams = j.at("beams").get<size_t>();
  c.model.decoder.repetition_penalty = j.at("repetition_penalty").get<double>();
  c.model.decoder.temperature = j.at("temperature").get<double>();
  c.model.init_seed = c.train.seed;
}

}  // namespace

std::string AppConfig::to_json() const { return flatten(*this).dump(2); }

AppConfig AppConfig::defaults() { return AppConfig{}; }

AppConfig AppConfig::from_json_text(const std::string& text) {
  AppConfig c;
  ordered_json merged = flatten(c);
  ordered_json incoming = ordered_json::parse(text);
  for (const auto& [key, value] : incoming.items()) {
    if (!merged.contains(key)) {
      throw std::invalid_argument("unknown configuration key: " + key);
    }
    merged[key] = value;
  }
  unflatten(merged, c);
  return c;
}

void AppConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ordered_json merged = flatten(*this);
  ordered_json incoming = ordered_json::parse(text);
  for (const auto& [key, value] : incoming.items()) {
    if (!merged.contains(key)) {
      throw std::invalid_argument("unknown configuration key: " + key);
    }
    merged[key] = value;
  }
  unflatten(merged, *this);
}

void AppConfig::set_key(const std::string& key, const std::string& value) {
  ordered_json merged = flatten(*this);
  if (!merged.contains(key)) {
    throw std::invalid_argument("unknown configuration key: " + key);
  }
  ordered_json parsed;
  try {
    parsed = ordered_json::parse(value);
  } catch (const ordered_json::parse_error&) {
    parsed = value;  // bare strings (e.g. fusion=add) arrive unquoted
  }
  // Bare words like "add" parse as errors above; bools/numbers parse cleanly.
  merged[key] = parsed;
  unflatten(merged, *this);
}

}  // namespace ccap
