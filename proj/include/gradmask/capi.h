/* C interface to the gradmask training library. All entry points return a
 * gm_status; on failure gm_last_error() carries a thread-local message.
 * Handles are opaque and freed with their matching *_free function. */
#ifndef GRADMASK_CAPI_H
#define GRADMASK_CAPI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gm_status {
    GM_OK = 0,
    GM_ERR_INVALID_ARG = 1,
    GM_ERR_SHAPE = 2,
    GM_ERR_DTYPE = 3,
    GM_ERR_VALIDATION = 4,
    GM_ERR_DOMAIN = 5,
    GM_ERR_CONTRACT = 6,
    GM_ERR_UNSUPPORTED = 7,
    GM_ERR_IO = 8,
    GM_ERR_FORMAT = 9,
    GM_ERR_DIVERGED = 10,
    GM_ERR_INTERNAL = 11
} gm_status;

const char* gm_status_name(gm_status status);

/* Message for the most recent failure on the calling thread. Never NULL. */
const char* gm_last_error(void);

typedef struct gm_dataset gm_dataset;
typedef struct gm_model gm_model;

/* ---- datasets ---- */

/* synth_json keys (all optional, defaults in parentheses): h (32), w (32),
 * n_train (128), n_valid (128), n_test (512), lesion_axis_min (3),
 * lesion_axis_max (6), lesion_offset (0.35), background_level (0.25),
 * noise_sigma (0.15), patch_size (3), patch_offset (0.5), rho_train (0.95),
 * rho_test (0.5), seed (0), dtype ("f32"). */
gm_status gm_dataset_generate(const char* synth_json, gm_dataset** out);
gm_status gm_dataset_read(const char* dir, gm_dataset** out);
gm_status gm_dataset_write(const gm_dataset* ds, const char* dir);
gm_status gm_dataset_split_count(const gm_dataset* ds, const char* split, size_t* out);
/* One-line human summary (counts, rho values, confounder corner). */
gm_status gm_dataset_describe(const gm_dataset* ds, char** out);
void gm_dataset_free(gm_dataset* ds);

/* ---- models ---- */

gm_status gm_model_load(const char* checkpoint_path, gm_model** out);
void gm_model_free(gm_model* m);

/* ---- training ---- */

/* spec_json:
 *   {"model": {...}, "data": {"dir": "..."} | {"synth": {...}},
 *    "train": {"epochs_max","batch_size","lr","patience","seed"},
 *    "penalty": {"variant","lambda","norm","target","healthy"}}
 * Writes a checkpoint when checkpoint_out is non-NULL. result_json receives
 * a malloc'd run record; free with gm_string_free. */
gm_status gm_train(const char* spec_json, const char* checkpoint_out, char** result_json);

/* As gm_train, plus "sweep": {"n_trials","base_seed","lambda_min","lambda_max",
 * "lr_min","lr_max","threads"} and "variants": ["none","contrast",...].
 * Writes runs.jsonl, report.csv and per-trial checkpoints under out_dir;
 * table_text (optional) receives the rendered summary table. */
gm_status gm_experiment(const char* spec_json, const char* out_dir, char** table_text);

/* ---- saliency overlays ---- */

/* variant: "per_class" | "contrast"; target: "logits" | "probabilities".
 * Writes <out_prefix>_input.pgm, _saliency.pgm, _masked.pgm. */
gm_status gm_saliency_export(const gm_model* m, const gm_dataset* ds, const char* split,
                             size_t index, const char* variant, const char* target,
                             const char* out_prefix);

/* ---- reports ---- */

/* Re-aggregates an existing runs.jsonl; writes csv_out if non-NULL. */
gm_status gm_report(const char* runs_jsonl, const char* csv_out, char** table_text);

void gm_string_free(char* s);

#ifdef __cplusplus
}
#endif
#endif /* GRADMASK_CAPI_H */
