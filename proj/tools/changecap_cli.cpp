// Command-line front end; talks to the core exclusively through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "changecap/changecap.h"

namespace {

struct CtxGuard {
  ccap_ctx* ctx = ccap_ctx_new();
  ~CtxGuard() { ccap_ctx_free(ctx); }
};

int bail(ccap_ctx* ctx, ccap_status status) {
  std::fprintf(stderr, "{\"error\":\"%s\",\"status\":%d}\n", ccap_last_error(ctx),
               static_cast<int>(status));
  return static_cast<int>(status);
}

// Leftover tokens are interpreted as --key value configuration overrides.
int apply_overrides(ccap_ctx* ctx, const std::vector<std::string>& extras) {
  for (size_t i = 0; i < extras.size(); i += 2) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0 || i + 1 >= extras.size()) {
      std::fprintf(stderr, "{\"error\":\"expected --key value override, got '%s'\"}\n",
                   key.c_str());
      return 1;
    }
    key = key.substr(2);
    const ccap_status s = ccap_config_set(ctx, key.c_str(), extras[i + 1].c_str());
    if (s != CCAP_OK) return bail(ctx, s);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CtxGuard guard;
  ccap_ctx* ctx = guard.ctx;
  if (!ctx) {
    std::fprintf(stderr, "{\"error\":\"context allocation failed\"}\n");
    return 1;
  }

  CLI::App app{"changecap: procedural change-caption dataset, training, and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file (flat key set)");

  std::string out_dir, dataset_dir, checkpoint, split = "test";
  std::string candidates, before_ppm, after_ppm, rank_captions, pair_ids, out_prefix;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset");
  gen->add_option("out_dir", out_dir, "output directory")->required();
  gen->allow_extras();

  CLI::App* train = app.add_subcommand("train", "run one training phase");
  train->add_option("dataset_dir", dataset_dir, "dataset directory")->required();
  train->add_option("out_dir", out_dir, "run output directory")->required();
  train->allow_extras();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("dataset_dir", dataset_dir, "dataset directory")->required();
  eval->add_option("--split", split, "dataset split (default test)");
  eval->add_option("--candidates", candidates, "candidate word list file");
  eval->add_option("--out", out_prefix, "output file prefix for reports");
  eval->allow_extras();

  CLI::App* infer = app.add_subcommand("infer", "caption one before/after pair");
  infer->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  infer->add_option("before", before_ppm, "before image (P6 PPM)")->required();
  infer->add_option("after", after_ppm, "after image (P6 PPM)")->required();
  infer->add_option("--rank-captions", rank_captions,
                    "file of candidate captions to rank instead of beam search");

  CLI::App* viz = app.add_subcommand("viz-flow", "export flow-field visualizations");
  viz->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  viz->add_option("dataset_dir", dataset_dir, "dataset directory")->required();
  viz->add_option("out_dir", out_dir, "output directory")->required();
  viz->add_option("--split", split, "dataset split (default test)");
  viz->add_option("--pairs", pair_ids, "comma-separated pair ids (default: all)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");

  CLI11_PARSE(app, argc, argv);

  if (!config_path.empty()) {
    const ccap_status s = ccap_config_load_file(ctx, config_path.c_str());
    if (s != CCAP_OK) return bail(ctx, s);
  }

  char buf[65536];

  if (gen->parsed()) {
    if (int rc = apply_overrides(ctx, gen->remaining())) return rc;
    const ccap_status s = ccap_gen_data(ctx, out_dir.c_str());
    if (s != CCAP_OK) return bail(ctx, s);
    std::printf("dataset written to %s\n", out_dir.c_str());
    return 0;
  }
  if (train->parsed()) {
    if (int rc = apply_overrides(ctx, train->remaining())) return rc;
    const ccap_status s = ccap_train(ctx, dataset_dir.c_str(), out_dir.c_str(), buf,
                                     sizeof(buf));
    if (s != CCAP_OK) return bail(ctx, s);
    std::printf("best checkpoint: %s\n", buf);
    return 0;
  }
  if (eval->parsed()) {
    if (int rc = apply_overrides(ctx, eval->remaining())) return rc;
    const ccap_status s = ccap_evaluate(ctx, checkpoint.c_str(), dataset_dir.c_str(),
                                        split.c_str(), candidates.c_str(),
                                        out_prefix.c_str(), buf, sizeof(buf));
    if (s != CCAP_OK) return bail(ctx, s);
    std::printf("%s\n", buf);
    return 0;
  }
  if (infer->parsed()) {
    const ccap_status s = ccap_infer(ctx, checkpoint.c_str(), before_ppm.c_str(),
                                     after_ppm.c_str(), rank_captions.c_str(), buf,
                                     sizeof(buf));
    if (s != CCAP_OK) return bail(ctx, s);
    std::printf("%s\n", buf);
    return 0;
  }
  if (viz->parsed()) {
    const ccap_status s = ccap_viz_flow(ctx, checkpoint.c_str(), dataset_dir.c_str(),
                                        split.c_str(), pair_ids.c_str(), out_dir.c_str());
    if (s != CCAP_OK) return bail(ctx, s);
    std::printf("flow visualizations written to %s\n", out_dir.c_str());
    return 0;
  }
  if (gradcheck->parsed()) {
    double worst = 0.0;
    int pass = 0;
    const ccap_status s = ccap_gradcheck(ctx, &worst, &pass);
    if (s != CCAP_OK) return bail(ctx, s);
    std::printf("{\"max_rel_err\":%.3e,\"pass\":%s}\n", worst, pass ? "true" : "false");
    return pass ? 0 : 5;
  }
  return 0;
}
