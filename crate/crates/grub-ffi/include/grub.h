/* C ABI for the grub replication framework.
 *
 * Conventions:
 *  - Objects are opaque handles created by *_new and released by *_free
 *    (which accepts NULL).
 *  - Fallible functions return grub_status (GRUB_OK == 0) and write results
 *    through out-pointers. Out-pointers are only written on success.
 *  - Keys are byte strings that must be valid UTF-8; key_len is the byte
 *    length (no NUL terminator required).
 *  - Strings returned by the library are released with grub_string_free.
 */
#ifndef GRUB_H
#define GRUB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum grub_status {
    GRUB_OK = 0,          /* success */
    GRUB_ERR_NULL = 1,    /* a required pointer argument was NULL */
    GRUB_ERR_INVALID = 2, /* an argument was out of range */
    GRUB_ERR_UTF8 = 3,    /* a key was not valid UTF-8 */
    GRUB_ERR_SIM = 4      /* the simulation rejected the trace or config */
} grub_status;

/* Replication states reported by deciders. */
#define GRUB_STATE_NR 0u /* not replicated: reads are delivered with proofs */
#define GRUB_STATE_R 1u  /* replicated: reads are served from contract state */

typedef struct GrubDecider GrubDecider;
typedef struct GrubTrace GrubTrace;
typedef struct GrubSimResult GrubSimResult;

/* Simulation configuration. policy_kind selects the replication policy:
 *   0 memoryless   (policy_a = K, the consecutive-read threshold)
 *   1 memorizing   (policy_a = K', policy_b = D)
 *   2 adaptive-k1  (policy_a = window)
 *   3 adaptive-k2  (policy_a = window)
 *   4 BL1 baseline (nothing replicated)
 *   5 BL2 baseline (everything replicated)
 */
typedef struct grub_sim_config {
    uint64_t epoch_len;         /* ticks per synchronization epoch */
    uint64_t block_time;        /* ticks per block */
    uint64_t finality_blocks;   /* blocks before a transaction is final */
    uint64_t propagation_delay; /* ticks from submission to inclusion */
    uint64_t rng_seed;
    int32_t policy_kind;
    uint32_t policy_a;
    uint32_t policy_b;
    uint8_t always_digest; /* nonzero: emit a digest update every epoch */
} grub_sim_config;

/* Deciders ---------------------------------------------------------------- */

grub_status grub_decider_memoryless_new(uint32_t k, GrubDecider **out);
grub_status grub_decider_memorizing_new(uint32_t k_prime, uint32_t d,
                                        GrubDecider **out);
grub_status grub_decider_adaptive_new(int32_t variant, size_t window,
                                      double threshold, GrubDecider **out);

/* Feeds one operation (is_write nonzero for a write) and reports the key's
 * replication state after the operation. */
grub_status grub_decider_step(GrubDecider *decider, const uint8_t *key,
                              size_t key_len, uint8_t is_write,
                              uint8_t *state_out);

/* Reads the current state of a key without advancing the decider. */
grub_status grub_decider_state(const GrubDecider *decider, const uint8_t *key,
                               size_t key_len, uint8_t *state_out);

void grub_decider_free(GrubDecider *decider);

/* Traces ------------------------------------------------------------------ */

grub_status grub_trace_new(GrubTrace **out);
grub_status grub_trace_push_write(GrubTrace *trace, const uint8_t *key,
                                  size_t key_len, uint64_t value_words);
grub_status grub_trace_push_read(GrubTrace *trace, const uint8_t *key,
                                 size_t key_len);
grub_status grub_trace_push_scan(GrubTrace *trace, const uint8_t *start_key,
                                 size_t key_len, uint64_t count);
size_t grub_trace_len(const GrubTrace *trace);
void grub_trace_free(GrubTrace *trace);

/* Simulation -------------------------------------------------------------- */

grub_status grub_sim_config_default(grub_sim_config *out);
grub_status grub_sim_run(const GrubTrace *trace, const grub_sim_config *config,
                         GrubSimResult **out);

uint64_t grub_sim_result_total_gas(const GrubSimResult *result);
double grub_sim_result_per_op_gas(const GrubSimResult *result);
uint64_t grub_sim_result_delivered_ok(const GrubSimResult *result);
uint64_t grub_sim_result_integrity_failures(const GrubSimResult *result);

/* Per-epoch gas ledger as CSV; release with grub_string_free. */
grub_status grub_sim_result_ledger_csv(const GrubSimResult *result,
                                       char **out);

void grub_sim_result_free(GrubSimResult *result);
void grub_string_free(char *s);

#ifdef __cplusplus
}
#endif

#endif /* GRUB_H */
