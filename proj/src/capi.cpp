#include "changecap/changecap.h"

#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "config.hpp"
#include "json.hpp"
#include "scene.hpp"
#include "trainer.hpp"

struct ccap_ctx {
  ccap::AppConfig config;
  std::string last_error;
};

namespace {

ccap_status fail(ccap_ctx* ctx, ccap_status code, const std::string& message) {
  if (ctx) ctx->last_error = message;
  return code;
}

ccap_status classify(ccap_ctx* ctx, const std::exception& e) {
  const std::string what = e.what();
  if (dynamic_cast<const std::invalid_argument*>(&e)) {
    return fail(ctx, CCAP_ERR_INVALID_ARGUMENT, what);
  }
  if (what.find("cannot read") != std::string::npos ||
      what.find("cannot write") != std::string::npos ||
      what.find("cannot open") != std::string::npos ||
      what.find("truncated") != std::string::npos) {
    return fail(ctx, CCAP_ERR_IO, what);
  }
  return fail(ctx, CCAP_ERR_INTERNAL, what);
}

ccap_status copy_out(ccap_ctx* ctx, const std::string& s, char* buf, size_t cap) {
  if (!buf) return CCAP_OK;
  if (s.size() + 1 > cap) {
    return fail(ctx, CCAP_ERR_INVALID_ARGUMENT,
                "output buffer too small (" + std::to_string(s.size() + 1) + " bytes needed)");
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return CCAP_OK;
}

bool require(ccap_ctx* ctx, const void* p, const char* name) {
  if (p) return true;
  fail(ctx, CCAP_ERR_INVALID_ARGUMENT, std::string(name) + " must not be NULL");
  return false;
}

}  // namespace

extern "C" {

ccap_ctx* ccap_ctx_new(void) {
  try {
    return new ccap_ctx();
  } catch (...) {
    return nullptr;
  }
}

void ccap_ctx_free(ccap_ctx* ctx) { delete ctx; }

const char* ccap_last_error(const ccap_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

const char* ccap_version(void) { return "0.1.0"; }

ccap_status ccap_config_load_file(ccap_ctx* ctx, const char* path) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, path, "path")) return CCAP_ERR_INVALID_ARGUMENT;
  try {
    ctx->config.load_file(path);
    return CCAP_OK;
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_config_set(ccap_ctx* ctx, const char* key, const char* value) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, key, "key") || !require(ctx, value, "value")) {
    return CCAP_ERR_INVALID_ARGUMENT;
  }
  try {
    ctx->config.set_key(key, value);
    return CCAP_OK;
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_config_dump(ccap_ctx* ctx, char* buf, size_t cap) {
  if (!ctx) return CCAP_ERR_STATE;
  try {
    return copy_out(ctx, ctx->config.to_json(), buf, cap);
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_gen_data(ccap_ctx* ctx, const char* out_dir) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, out_dir, "out_dir")) return CCAP_ERR_INVALID_ARGUMENT;
  try {
    ccap::build_dataset(ctx->config.dataset, out_dir);
    return CCAP_OK;
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_train(ccap_ctx* ctx, const char* dataset_dir, const char* out_dir,
                       char* checkpoint_buf, size_t checkpoint_cap) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, dataset_dir, "dataset_dir") || !require(ctx, out_dir, "out_dir")) {
    return CCAP_ERR_INVALID_ARGUMENT;
  }
  try {
    ccap::Trainer trainer(ctx->config.train, ctx->config.model, dataset_dir, out_dir);
    ccap::TrainResult result = trainer.run();
    return copy_out(ctx, result.checkpoint_path, checkpoint_buf, checkpoint_cap);
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_evaluate(ccap_ctx* ctx, const char* checkpoint, const char* dataset_dir,
                          const char* split, const char* candidates, const char* out_prefix,
                          char* summary_buf, size_t summary_cap) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, checkpoint, "checkpoint") || !require(ctx, dataset_dir, "dataset_dir")) {
    return CCAP_ERR_INVALID_ARGUMENT;
  }
  try {
    ccap::EvalOptions opts;
    if (split && *split) opts.split = split;
    if (candidates && *candidates) opts.candidates_path = candidates;
    if (out_prefix && *out_prefix) opts.out_prefix = out_prefix;
    ccap::EvalResult result = ccap::evaluate(checkpoint, dataset_dir, opts);
    nlohmann::ordered_json summary;
    for (const char* metric : {"exact_match", "bleu4", "rouge_l", "cider_d"}) {
      auto r = result.ranked_metric(metric);
      auto g = result.generated_metric(metric);
      summary["ranked"][metric] = r ? nlohmann::ordered_json(*r) : nullptr;
      summary["generated"][metric] = g ? nlohmann::ordered_json(*g) : nullptr;
    }
    summary["pairs"] = result.pairs;
    return copy_out(ctx, summary.dump(), summary_buf, summary_cap);
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_infer(ccap_ctx* ctx, const char* checkpoint, const char* before_ppm,
                       const char* after_ppm, const char* rank_captions, char* caption_buf,
                       size_t caption_cap) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, checkpoint, "checkpoint") || !require(ctx, before_ppm, "before_ppm") ||
      !require(ctx, after_ppm, "after_ppm")) {
    return CCAP_ERR_INVALID_ARGUMENT;
  }
  try {
    const std::string caption = ccap::infer_pair(
        checkpoint, before_ppm, after_ppm, rank_captions ? rank_captions : "");
    return copy_out(ctx, caption, caption_buf, caption_cap);
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_viz_flow(ccap_ctx* ctx, const char* checkpoint, const char* dataset_dir,
                          const char* split, const char* pair_ids_csv, const char* out_dir) {
  if (!ctx) return CCAP_ERR_STATE;
  if (!require(ctx, checkpoint, "checkpoint") || !require(ctx, dataset_dir, "dataset_dir") ||
      !require(ctx, out_dir, "out_dir")) {
    return CCAP_ERR_INVALID_ARGUMENT;
  }
  try {
    std::vector<std::string> ids;
    if (pair_ids_csv) {
      std::stringstream ss(pair_ids_csv);
      std::string id;
      while (std::getline(ss, id, ',')) {
        if (!id.empty()) ids.push_back(id);
      }
    }
    ccap::viz_flow(checkpoint, dataset_dir, split && *split ? split : "test", ids, out_dir);
    return CCAP_OK;
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

ccap_status ccap_gradcheck(ccap_ctx* ctx, double* max_rel_err, int* pass) {
  if (!ctx) return CCAP_ERR_STATE;
  try {
    ccap::GradcheckSummary summary = ccap::run_gradcheck_suite();
    if (max_rel_err) *max_rel_err = summary.worst;
    if (pass) *pass = summary.pass() ? 1 : 0;
    return CCAP_OK;
  } catch (const std::exception& e) {
    return classify(ctx, e);
  }
}

}  // extern "C"
