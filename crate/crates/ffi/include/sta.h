#ifndef STA_FFI_H
#define STA_FFI_H

/* Generated by cbindgen from the sta-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every FFI entry point.
typedef enum StaStatus {
  // The call succeeded.
  STA_STATUS_OK = 0,
  // A required pointer argument was NULL.
  STA_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8 or not valid JSON.
  STA_STATUS_INVALID_ARGUMENT = 2,
  // Macro expansion, parsing, or validation rejected the program.
  STA_STATUS_DIAGNOSTICS = 3,
  // The requested prompt or object does not exist.
  STA_STATUS_NOT_FOUND = 4,
  // Execution or replay failed.
  STA_STATUS_RUNTIME_ERROR = 5,
} StaStatus;

// A compiled program: parsed, validated, headers rendered.
typedef struct StaProgram StaProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message raised on this thread, or NULL when the previous call
// succeeded. The caller owns the string (release with `sta_string_free`).
char *sta_last_error_message(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned by one of this library's
// functions, not yet freed; NULL is accepted and ignored.
void sta_string_free(char *s);

// Compile STA source text. `macros_json` is a JSON object binding macro
// names to integers or strings (NULL or empty for none). On success the
// handle is stored in `out_program`.
//
// # Safety
// `source` must be a NUL-terminated string; `macros_json` NULL or a
// NUL-terminated string; `out_program` a valid pointer.
enum StaStatus sta_program_compile(const char *source,
                                   const char *macros_json,
                                   struct StaProgram **out_program);

// Release a program handle. NULL is accepted and ignored.
//
// # Safety
// `program` must come from `sta_program_compile` and not be freed twice.
void sta_program_free(struct StaProgram *program);

// Number of prompts in the program.
//
// # Safety
// `program` must be a live handle.
size_t sta_program_prompt_count(const struct StaProgram *program);

// Name of the prompt at `index` (declaration order).
//
// # Safety
// `program` must be a live handle and `out_name` a valid pointer.
enum StaStatus sta_program_prompt_name(const struct StaProgram *program,
                                       size_t index,
                                       char **out_name);

// Rendered header of one prompt, byte for byte.
//
// # Safety
// `program` must be a live handle; `prompt` a NUL-terminated string;
// `out_header` a valid pointer.
enum StaStatus sta_program_render_header(const struct StaProgram *program,
                                         const char *prompt,
                                         char **out_header);

// DOT rendering of the control-flow graph and per-prompt automata.
//
// # Safety
// `program` must be a live handle and `out_dot` a valid pointer.
enum StaStatus sta_program_graph_dot(const struct StaProgram *program, char **out_dot);

// Run the program. `inputs_json` is a JSON object of strings or string
// arrays; `backends_path` names a backend configuration file. On success
// `out_outputs_json` holds the outputs array and, when `out_trace_json` is
// not NULL, the full execution trace is returned there too.
//
// # Safety
// `program` must be a live handle; string arguments NUL-terminated;
// `out_outputs_json` valid; `out_trace_json` NULL or valid.
enum StaStatus sta_program_run(const struct StaProgram *program,
                               const char *inputs_json,
                               const char *backends_path,
                               char **out_outputs_json,
                               char **out_trace_json);

// Replay a recorded trace against this program and return the reconstructed
// outputs. Fails with `RuntimeError` on any divergence from the recording.
//
// # Safety
// `program` must be a live handle; `trace_json` NUL-terminated;
// `out_outputs_json` valid.
enum StaStatus sta_program_replay(const struct StaProgram *program,
                                  const char *trace_json,
                                  char **out_outputs_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STA_FFI_H */
