#pragma once

#include <string>

#include "model.hpp"
#include "scene.hpp"
#include "trainer.hpp"

namespace ccap {

// One flat key/value configuration covering dataset synthesis, model
// dimensions, and training. JSON file plus --key value overrides map onto
// the same key set.
struct AppConfig {
  DatasetConfig dataset;
  TrainConfig train;
  ModelConfig model;  // dimensions; switches and vocab filled in by the trainer

  std::string to_json() const;
  static AppConfig defaults();
  static AppConfig from_json_text(const std::string& text);

  void load_file(const std::string& path);
  // value is parsed as a JSON literal when possible, else taken as a string.
  void set_key(const std::string& key, const std::string& value);
};

}  // namespace ccap
