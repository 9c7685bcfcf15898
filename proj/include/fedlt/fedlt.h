#ifndef FEDLT_H
#define FEDLT_H

/* C API for the fedlt federated long-tailed learning simulator.
 *
 * The core is a C++ library exposed here through opaque handles and status
 * codes. All functions are thread-compatible: distinct handles may be used
 * from distinct threads, a single handle must not be shared concurrently.
 * Error messages for the calling thread are available via fedlt_last_error().
 */

#include <stddef.h>

#if defined(_WIN32)
#define FEDLT_API __declspec(dllexport)
#else
#define FEDLT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedlt_status {
  FEDLT_OK = 0,
  FEDLT_ERROR_CONFIG = 2,  /* bad configuration file, key or value */
  FEDLT_ERROR_RUNTIME = 3  /* any other failure */
} fedlt_status;

/* Opaque configuration handle: flat "section.key = value" entries. */
typedef struct fedlt_config_t fedlt_config_t;

FEDLT_API fedlt_status fedlt_config_open(const char* path, fedlt_config_t** out_cfg);
FEDLT_API fedlt_status fedlt_config_parse(const char* text, fedlt_config_t** out_cfg);
FEDLT_API fedlt_status fedlt_config_set(fedlt_config_t* cfg, const char* key, const char* value);
/* Returns the value string owned by the handle, or NULL when absent. */
FEDLT_API const char* fedlt_config_get(const fedlt_config_t* cfg, const char* key);
FEDLT_API void fedlt_config_free(fedlt_config_t* cfg);

/* Last error message for the calling thread; never NULL. */
FEDLT_API const char* fedlt_last_error(void);

/* Commands. Each writes its artifacts under out_dir and, when out_text is
 * non-NULL, returns the human-readable table that the CLI prints. The
 * returned string is heap allocated; release it with fedlt_string_free(). */
FEDLT_API fedlt_status fedlt_cmd_generate(const fedlt_config_t* cfg, const char* out_dir,
                                          char** out_text);
FEDLT_API fedlt_status fedlt_cmd_train(const fedlt_config_t* cfg, const char* out_dir,
                                       char** out_text);
FEDLT_API fedlt_status fedlt_cmd_sweep(const fedlt_config_t* cfg, const char* out_dir,
                                       const char* param, const char* values_csv,
                                       char** out_text);
FEDLT_API fedlt_status fedlt_cmd_report(const char* const* log_paths, size_t num_logs,
                                        char** out_text);

FEDLT_API void fedlt_string_free(char* text);

FEDLT_API const char* fedlt_version(void);

#ifdef __cplusplus
}
#endif

#endif /* FEDLT_H */
