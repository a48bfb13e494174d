/* sgwalk — scene-graph walking question answering.
 *
 * C interface to the sgwalk core: opaque handles, integer status codes,
 * UTF-8 strings. Every function returning sgw_status sets a thread-local
 * error message retrievable with sgw_last_error() on failure. Strings
 * returned through char** are heap-allocated; release them with
 * sgw_string_free().
 */
#ifndef SGWALK_H
#define SGWALK_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sgw_status {
  SGW_OK = 0,
  SGW_ERR_IO = 1,       /* missing/unreadable/unwritable files */
  SGW_ERR_PARSE = 2,    /* malformed JSON/JSONL/embedding input */
  SGW_ERR_INVALID = 3,  /* contract violation: bad config, bad arguments */
  SGW_ERR_INTERNAL = 4, /* unexpected failure */
} sgw_status;

typedef struct sgw_graph sgw_graph;
typedef struct sgw_corpus sgw_corpus;
typedef struct sgw_model sgw_model;

const char* sgw_version(void);

/* Message for the most recent failure on this thread ("" if none). */
const char* sgw_last_error(void);

void sgw_string_free(char* s);

/* ----- scene graphs ----- */

/* Loads a scene-graph file. Native JSON and GQA-format files are detected
 * automatically; scene_id selects a scene from a multi-scene GQA file and
 * may be NULL otherwise. */
sgw_status sgw_graph_load(const char* path, const char* scene_id, sgw_graph** out);
sgw_status sgw_graph_parse(const char* json_text, sgw_graph** out);
sgw_status sgw_graph_import_gqa(const char* json_text, const char* scene_id,
                                sgw_graph** out);

/* JSON array of "rule: detail" violation strings (empty array if valid). */
sgw_status sgw_graph_validate(const sgw_graph* g, char** violations_json);

/* Augmented copy: inverse completion, hub, NO_OP self-loops, yes/no nodes. */
sgw_status sgw_graph_augment(const sgw_graph* g, sgw_graph** out);

/* {"id", "entities", "triples", "augmented"} summary counts. */
sgw_status sgw_graph_stats(const sgw_graph* g, char** stats_json);
sgw_status sgw_graph_to_json(const sgw_graph* g, char** json_out);

void sgw_graph_free(sgw_graph* g);

/* ----- corpora ----- */

/* Generates a synthetic corpus under out_dir. config_json keys (all
 * optional): num_graphs, min_entities, max_entities, questions_per_graph,
 * train_frac, val_frac, seed, templates, objects, attribute_classes,
 * relations. Unknown keys are rejected. */
sgw_status sgw_corpus_generate(const char* config_json, const char* out_dir);

sgw_status sgw_corpus_open(const char* dir, sgw_corpus** out);

/* {"graphs", "questions", "splits": {...}} counts. */
sgw_status sgw_corpus_stats(const sgw_corpus* c, char** stats_json);

void sgw_corpus_free(sgw_corpus* c);

/* ----- training, evaluation, answering ----- */

/* Trains on the corpus's train split. model_config_json / train_config_json
 * accept the documented keys (unknown keys rejected); either may be NULL
 * for defaults. embeddings_path optionally points to a word-vector text
 * file ("word v1 ... vd" lines) matching the configured dimension d;
 * resume_ckpt optionally continues a previous run. Writes the best
 * checkpoint to ckpt_out, the latest to ckpt_out + ".last", and one JSONL
 * metrics line per epoch to metrics_out. */
sgw_status sgw_train(const char* corpus_dir, const char* model_config_json,
                     const char* train_config_json, const char* embeddings_path,
                     const char* resume_ckpt, const char* ckpt_out,
                     const char* metrics_out);

sgw_status sgw_model_load(const char* ckpt_path, sgw_model** out);
sgw_status sgw_model_config(const sgw_model* m, char** config_json);
void sgw_model_free(sgw_model* m);

/* Greedy evaluation of one split; report carries the GQA-style metric
 * columns as JSON and as an aligned text table. */
sgw_status sgw_evaluate(const sgw_model* m, const char* corpus_dir, const char* split,
                        char** report_json, char** report_table);

/* Free-text question against a graph; result JSON:
 * {"answer", "question_type", "trace": <trace schema>}. */
sgw_status sgw_answer(const sgw_model* m, const sgw_graph* g, const char* question_text,
                      char** result_json);

/* Greedy trace for a corpus question, as "json" or "dot". */
sgw_status sgw_trace_question(const sgw_model* m, const char* corpus_dir, const char* qid,
                              const char* format, char** out_text);

#ifdef __cplusplus
}
#endif

#endif /* SGWALK_H */
