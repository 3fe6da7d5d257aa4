#ifndef CHANGECAP_H
#define CHANGECAP_H

/* Change-caption toolkit: procedural scene-pair datasets, a two-stream
 * adapter ViT with viewpoint registration and semantic emphasizing, an
 * autoregressive caption decoder, training, and evaluation.
 *
 * All state lives behind the opaque context handle. Every call returns a
 * status code; ccap_last_error() holds the message for the most recent
 * failure on the same context.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ccap_ctx ccap_ctx;

typedef enum ccap_status {
  CCAP_OK = 0,
  CCAP_ERR_INVALID_ARGUMENT = 1,
  CCAP_ERR_IO = 2,
  CCAP_ERR_STATE = 3,
  CCAP_ERR_INTERNAL = 4
} ccap_status;

ccap_ctx* ccap_ctx_new(void);
void ccap_ctx_free(ccap_ctx* ctx);

const char* ccap_last_error(const ccap_ctx* ctx);
const char* ccap_version(void);

/* Configuration: one flat key set (JSON file and key/value overrides).
 * Unknown keys are rejected. */
ccap_status ccap_config_load_file(ccap_ctx* ctx, const char* path);
ccap_status ccap_config_set(ccap_ctx* ctx, const char* key, const char* value);
/* Writes the effective configuration as JSON into buf (NUL-terminated). */
ccap_status ccap_config_dump(ccap_ctx* ctx, char* buf, size_t cap);

/* Deterministic dataset synthesis into out_dir (splits, annotations,
 * vocabulary, candidate word list). */
ccap_status ccap_gen_data(ccap_ctx* ctx, const char* out_dir);

/* Runs the configured training phase; writes best.ckpt, best.ckpt.json and
 * train_log.jsonl under out_dir. The checkpoint path is copied into
 * checkpoint_buf when non-NULL. */
ccap_status ccap_train(ccap_ctx* ctx, const char* dataset_dir, const char* out_dir,
                       char* checkpoint_buf, size_t checkpoint_cap);

/* Evaluates a checkpoint on one dataset split. candidates may be NULL (the
 * dataset's word list is used). When out_prefix is non-NULL, writes
 * <prefix>_report.{txt,json} and <prefix>_hypotheses.jsonl. When
 * summary_buf is non-NULL it receives a one-line JSON metric summary. */
ccap_status ccap_evaluate(ccap_ctx* ctx, const char* checkpoint, const char* dataset_dir,
                          const char* split, const char* candidates, const char* out_prefix,
                          char* summary_buf, size_t summary_cap);

/* Captions a single before/after PPM pair. rank_captions may name a file of
 * candidate captions (one per line) to score instead of beam search. */
ccap_status ccap_infer(ccap_ctx* ctx, const char* checkpoint, const char* before_ppm,
                       const char* after_ppm, const char* rank_captions, char* caption_buf,
                       size_t caption_cap);

/* Writes flow-field visualizations for the given pair ids (comma separated;
 * NULL or empty = every pair in the split). */
ccap_status ccap_viz_flow(ccap_ctx* ctx, const char* checkpoint, const char* dataset_dir,
                          const char* split, const char* pair_ids_csv, const char* out_dir);

/* Runs the finite-difference gradient suite; stores the worst relative
 * error. Returns CCAP_OK also when the tolerance is exceeded — inspect the
 * value. pass is set to 1 when every check is below 1e-4. */
ccap_status ccap_gradcheck(ccap_ctx* ctx, double* max_rel_err, int* pass);

#ifdef __cplusplus
}
#endif

#endif /* CHANGECAP_H */
