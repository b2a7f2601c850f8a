#ifndef DLVAE_CAPI_H
#define DLVAE_CAPI_H

/* C interface to the dual-latent VAE library. Every entry point returns 0
 * on success or one of the error codes below; the failure message is
 * available from dlvae_last_error() until the next call on the same
 * thread. Strings handed out through char** parameters are heap-allocated
 * and must be released with dlvae_string_free(). */

#include <stdint.h>

#if defined(_WIN32)
#define DLVAE_API __declspec(dllexport)
#else
#define DLVAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
    DLVAE_OK = 0,
    DLVAE_ERR_GENERIC = 1,
    DLVAE_ERR_CONFIG = 2,
    DLVAE_ERR_DIVERGENCE = 3,
    DLVAE_ERR_INTEGRITY = 4,
    DLVAE_ERR_IO = 5,
    DLVAE_ERR_UNSUPPORTED = 6,
    DLVAE_ERR_DIMENSION = 7,
    DLVAE_ERR_DOMAIN = 8,
    DLVAE_ERR_CONTRACT = 9,
    DLVAE_ERR_INPUT = 10
};

typedef struct dlvae_config dlvae_config;

DLVAE_API const char* dlvae_version(void);
DLVAE_API const char* dlvae_last_error(void);
DLVAE_API void dlvae_string_free(char* s);

/* Configs: from a shipped preset, raw JSON text, or a file. */
DLVAE_API int dlvae_config_preset(const char* name, dlvae_config** out);
DLVAE_API int dlvae_config_parse(const char* json_text, dlvae_config** out);
DLVAE_API int dlvae_config_load(const char* path, dlvae_config** out);

/* One "dotted.path=value" assignment, e.g. "train.weights.adv=0". */
DLVAE_API int dlvae_config_set(dlvae_config* cfg, const char* assignment);
DLVAE_API int dlvae_config_set_seed(dlvae_config* cfg, uint64_t seed);
DLVAE_API int dlvae_config_to_json(const dlvae_config* cfg, char** out_json);
DLVAE_API void dlvae_config_free(dlvae_config* cfg);

/* Trains under out_root; *out_run_dir names the run directory (also on
 * divergence, which returns DLVAE_ERR_DIVERGENCE but leaves the partial
 * artifacts in place). */
DLVAE_API int dlvae_train(const dlvae_config* cfg, const char* out_root, char** out_run_dir);

/* Recomputes the metrics stored in the run's config; *out_report_json
 * receives the eval_report.json content. */
DLVAE_API int dlvae_eval(const char* run_dir, char** out_report_json);

DLVAE_API int dlvae_gen_data(const dlvae_config* cfg, const char* out_dir);
DLVAE_API int dlvae_export(const char* run_dir);

/* which: "table1" | "table2" | "cmnist". Writes the summary CSV under
 * out_root alongside the individual run directories. */
DLVAE_API int dlvae_repro(const char* which, const char* out_root, int n_seeds);

#ifdef __cplusplus
}
#endif

#endif /* DLVAE_CAPI_H */
