#ifndef HYBRIDPLANE_H
#define HYBRIDPLANE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HpStatus {
  HP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  HP_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not UTF-8.
   */
  HP_STATUS_INVALID_UTF8 = 2,
  /**
   * The spec document is malformed or breaks the schema.
   */
  HP_STATUS_PARSE_ERROR = 3,
  /**
   * The spec parsed but fails validation.
   */
  HP_STATUS_VALIDATION_FAILED = 4,
  /**
   * No such cluster, pod, service or channel.
   */
  HP_STATUS_NOT_FOUND = 5,
  /**
   * Allocator exhaustion, inconsistent configs or a caught panic.
   */
  HP_STATUS_INTERNAL = 6,
} HpStatus;

/**
 * A parsed deployment spec.
 */
typedef struct HpSpec HpSpec;

/**
 * A simulated network built from a spec's converged configs.
 */
typedef struct HpWorld HpWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or null. Valid
 * until the next call into this library on the same thread.
 */
const char *hp_last_error(void);

/**
 * Library version as a static string.
 */
const char *hp_version(void);

/**
 * Parse a spec document. Parsing does not validate; see
 * [`hp_spec_validate`].
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum HpStatus hp_spec_parse(const char *json, struct HpSpec **out);

/**
 * # Safety
 * `spec` must come from [`hp_spec_parse`] and not be used afterwards.
 */
void hp_spec_free(struct HpSpec *spec);

/**
 * Validation report as a JSON array of `{subject, kind, detail}`; empty
 * means valid. Returns `HP_STATUS_OK` either way.
 *
 * # Safety
 * `spec` must be a live handle and `out` writable.
 */
enum HpStatus hp_spec_validate(const struct HpSpec *spec, char **out);

/**
 * Canonical JSON config for `cluster`.
 *
 * # Safety
 * `spec` must be a live handle, `cluster` NUL-terminated and `out`
 * writable.
 */
enum HpStatus hp_converge(const struct HpSpec *spec, const char *cluster, char **out);

/**
 * Expected reachability matrix computed from the spec alone.
 *
 * # Safety
 * `spec` must be a live handle and `out` writable.
 */
enum HpStatus hp_oracle_matrix(const struct HpSpec *spec, char **out);

/**
 * Converge every cluster of `spec` and build a world with all tunnels up.
 *
 * # Safety
 * `spec` must be a live handle and `out` writable.
 */
enum HpStatus hp_world_new(const struct HpSpec *spec, struct HpWorld **out);

/**
 * # Safety
 * `world` must come from [`hp_world_new`] and not be used afterwards.
 */
void hp_world_free(struct HpWorld *world);

/**
 * Trace one connection. `HP_STATUS_OK` means a trace was produced; the
 * verdict is inside it.
 *
 * # Safety
 * `world` must be a live handle, `pod` and `service` NUL-terminated and
 * `out` writable.
 */
enum HpStatus hp_world_trace(const struct HpWorld *world,
                             const char *pod,
                             const char *service,
                             char **out);

/**
 * Simulated reachability matrix under the current tunnel states.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum HpStatus hp_world_matrix(const struct HpWorld *world, char **out);

/**
 * Bring the tunnel named `key` (`<mode>:<private cluster>:<service>`) up or
 * down.
 *
 * # Safety
 * `world` must be a live handle not used concurrently by another thread,
 * and `key` NUL-terminated.
 */
enum HpStatus hp_world_set_tunnel(struct HpWorld *world, const char *key, bool up);

/**
 * # Safety
 * `s` must be a string returned by this library, or null.
 */
void hp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRIDPLANE_H */
