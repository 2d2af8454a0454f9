#ifndef CONVREC_H
#define CONVREC_H

/* C API for the convrec conversational recommender core.
 *
 * Every function returns one of the CONVREC_* codes below. On failure the
 * optional `err` out-parameter receives a malloc'd message the caller frees
 * with convrec_free(). String out-parameters are likewise owned by the
 * caller. Handles are opaque and single-threaded.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  CONVREC_OK = 0,
  CONVREC_ERR_CONFIG = 2,  /* bad configuration / flags */
  CONVREC_ERR_DATA = 3,    /* missing or malformed files, bad ids */
  CONVREC_ERR_RUNTIME = 4  /* numerical or internal failure */
};

const char* convrec_version(void);

void convrec_free(char* s);

/* Generate the synthetic corpus described by an INI spec file into out_dir
 * (items.jsonl + dialogs.jsonl). Refuses to overwrite unless force != 0. */
int convrec_gen_corpus(const char* spec_path, const char* out_dir, int force,
                       char** err);

/* config_path may be NULL when every setting comes from overrides; overrides
 * are "section.key=value" strings. */
int convrec_train(const char* config_path, const char* const* overrides,
                  size_t n_overrides, char** err);

int convrec_build_index(const char* config_path, const char* const* overrides,
                        size_t n_overrides, char** err);

/* On success *report_json receives the full evaluation report. */
int convrec_eval(const char* config_path, const char* const* overrides,
                 size_t n_overrides, char** report_json, char** err);

/* mode: "cluster" | "ablation" | "stats". */
int convrec_analyze(const char* config_path, const char* mode,
                    const char* const* overrides, size_t n_overrides,
                    char** report_json, char** err);

/* Interactive chat session over a trained checkpoint and built index. */
typedef struct convrec_chat convrec_chat;

int convrec_chat_open(const char* config_path, const char* const* overrides,
                      size_t n_overrides, convrec_chat** out, char** err);

/* One seeker utterance in, the generated reply out. trace_json (optional)
 * receives the per-turn trace record. The session survives data errors such
 * as unknown item mentions. */
int convrec_chat_turn(convrec_chat* chat, const char* user_text, char** reply,
                      char** trace_json, char** err);

int convrec_chat_reset(convrec_chat* chat);

void convrec_chat_close(convrec_chat* chat);

#ifdef __cplusplus
}
#endif

#endif /* CONVREC_H */
