#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "model.hpp"
#include "scene.hpp"

namespace ccap {

struct TrainConfig {
  std::string phase = "adapt";  // "pretrain" | "adapt"
  size_t epochs = 40;
  size_t batch_size = 16;
  double lr = 1e-3;
  double min_lr = 1e-5;
  double weight_decay = 0.05;
  size_t warmup_steps = 0;  // 0 -> 5% of total steps
  bool cosine_decay = true;
  uint64_t seed = 42;
  std::string pretrain_checkpoint;  // required for the adapt phase

  // Ablation switches (paper-best defaults).
  bool adapters = true;
  bool fused_adapters = true;
  bool vrf = true;
  bool sem = true;
  std::string fusion = "add";
  std::string emphasis_input = "self_other";
};

// Decoupled-weight-decay Adam; betas (0.9, 0.99).
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  // grad_scale multiplies raw gradients (1/batch for mean-of-sample losses).
  // Throws on non-finite gradients, naming the parameter.
  void step(const std::vector<Tensor>& params, const std::vector<std::string>& names,
            double lr_t, double grad_scale);
  size_t step_count() const { return step_count_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  size_t step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear warmup then cosine decay to min_lr; constant after warmup when
// cosine is disabled. step is 1-based.
double lr_at_step(size_t step, size_t total_steps, size_t warmup_steps, double lr,
                  double min_lr, bool cosine);

struct TrainResult {
  std::string checkpoint_path;
  double best_val = 0.0;  // exact match (adapt) / negative loss (pretrain)
  std::vector<double> epoch_losses;
  bool frozen_grads_clean = true;
  size_t steps = 0;
};

// One training phase over an on-disk dataset. prepare() builds the model and
// freeze set so callers can snapshot frozen state before run().
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, ModelConfig model_template, const std::string& dataset_dir,
          const std::string& out_dir);

  void prepare();
  TrainResult run();

  Model& model() { return *model_; }
  const Vocabulary& vocab() const { return vocab_; }
  // Parameters excluded from training in the current phase.
  std::map<std::string, Tensor> frozen_params() const;

 private:
  struct Sample {
    const PairRecord* rec;
    bool text_only;
    bool use_after;  // pretrain captioning side
  };

  Tensor sample_loss(const Sample& s, size_t epoch, size_t index_in_epoch) const;
  double validate(size_t epoch);

  TrainConfig cfg_;
  ModelConfig model_cfg_;
  std::string dataset_dir_, out_dir_;
  Vocabulary vocab_;
  std::vector<PairRecord> train_, val_;
  std::unique_ptr<Model> model_;
  bool prepared_ = false;
};

struct EvalOptions {
  std::string split = "test";
  std::string candidates_path;  // word list; empty -> dataset's candidates.txt
  std::string out_prefix;       // empty -> no files written
  size_t beams_override = 0;    // 0 -> checkpoint config
};

struct EvalResult {
  BinnedReport ranked;     // vocabulary-ranking predictions (primary protocol)
  BinnedReport generated;  // beam-search predictions
  size_t pairs = 0;

  std::optional<double> ranked_metric(const std::string& metric) const;
  std::optional<double> generated_metric(const std::string& metric) const;
};

EvalResult evaluate(const std::string& checkpoint_path, const std::string& dataset_dir,
                    const EvalOptions& opts);

// Loads a checkpoint plus its sidecar config. Returns the model and vocab.
std::pair<std::unique_ptr<Model>, Vocabulary> load_model(const std::string& checkpoint_path);
void save_model(const Model& model, const Vocabulary& vocab, const TrainConfig& cfg,
                const std::string& checkpoint_path);

void viz_flow(const std::string& checkpoint_path, const std::string& dataset_dir,
              const std::string& split, const std::vector<std::string>& pair_ids,
              const std::string& out_dir);

// Caption a single before/after PPM pair.
std::string infer_pair(const std::string& checkpoint_path, const std::string& before_ppm,
                       const std::string& after_ppm, const std::string& candidates_path);

struct GradcheckEntry {
  std::string name;
  double max_rel_err;
};

struct GradcheckSummary {
  std::vector<GradcheckEntry> entries;
  double worst = 0.0;
  bool pass(double tol = 1e-4) const { return worst < tol; }
};

// Per-op finite-difference checks plus the end-to-end pipeline check at toy
// sizes (flow weights randomized away from the bilinear lattice kinks).
GradcheckSummary run_gradcheck_suite();

}  // namespace ccap
