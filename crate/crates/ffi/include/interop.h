#ifndef INTEROP_H
#define INTEROP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum InteropStatus {
  INTEROP_STATUS_OK = 0,
  INTEROP_STATUS_NULL_ARGUMENT = 1,
  INTEROP_STATUS_INVALID_ARGUMENT = 2,
  INTEROP_STATUS_CRYPTO = 3,
  INTEROP_STATUS_DECODE = 4,
  INTEROP_STATUS_SCENARIO = 5,
  INTEROP_STATUS_PANIC = 6,
} InteropStatus;

/**
 * Signing and encryption key pair.
 */
typedef struct InteropKeyPair InteropKeyPair;

/**
 * A decoded request or response.
 */
typedef struct InteropMessage InteropMessage;

/**
 * Caller-owned byte buffer.
 */
typedef struct InteropBuffer {
  uint8_t *data;
  size_t len;
} InteropBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread; empty after a success.
 */
const char *interop_last_error(void);

/**
 * Releases a buffer returned by this library. A null buffer is ignored.
 *
 * # Safety
 * `buffer` must come from this library and not have been freed.
 */
void interop_buffer_free(struct InteropBuffer buffer);

/**
 * Generates a key pair: deterministic from `seed` when `seeded`, else from
 * OS entropy.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum InteropStatus interop_keypair_generate(uint64_t seed,
                                            bool seeded,
                                            struct InteropKeyPair **out);

/**
 * # Safety
 * `keys` must be null or a handle from [`interop_keypair_generate`].
 */
void interop_keypair_free(struct InteropKeyPair *keys);

/**
 * Writes the 32-byte signing key and the 32-byte encryption key.
 *
 * # Safety
 * `keys` must be a live handle; each output must hold 32 bytes.
 */
enum InteropStatus interop_keypair_public_keys(const struct InteropKeyPair *keys,
                                               uint8_t *out_public_key,
                                               uint8_t *out_enc_public_key);

/**
 * Signs `message`; writes a 64-byte signature.
 *
 * # Safety
 * `keys` must be a live handle, `message` must hold `message_len` bytes and
 * `out_signature` 64 writable bytes.
 */
enum InteropStatus interop_sign(const struct InteropKeyPair *keys,
                                const uint8_t *message,
                                size_t message_len,
                                uint8_t *out_signature);

/**
 * Checks a signature. A malformed public key is an error; a wrong
 * signature is `Ok` with `*out_valid == false`.
 *
 * # Safety
 * `public_key` must hold 32 bytes, `signature` 64, `message` `message_len`.
 */
enum InteropStatus interop_verify(const uint8_t *public_key,
                                  const uint8_t *message,
                                  size_t message_len,
                                  const uint8_t *signature,
                                  bool *out_valid);

/**
 * Seals `plaintext` for the holder of `recipient_enc_public_key`. The
 * output is the canonical encoding of the ciphertext.
 *
 * # Safety
 * `recipient_enc_public_key` must hold 32 bytes, `plaintext`
 * `plaintext_len`; `out` must be valid.
 */
enum InteropStatus interop_hybrid_encrypt(const uint8_t *recipient_enc_public_key,
                                          const uint8_t *plaintext,
                                          size_t plaintext_len,
                                          struct InteropBuffer *out);

/**
 * Opens a ciphertext from [`interop_hybrid_encrypt`] with `keys`.
 *
 * # Safety
 * `keys` must be a live handle, `ciphertext` must hold `ciphertext_len`
 * bytes; `out` must be valid.
 */
enum InteropStatus interop_hybrid_decrypt(const struct InteropKeyPair *keys,
                                          const uint8_t *ciphertext,
                                          size_t ciphertext_len,
                                          struct InteropBuffer *out);

/**
 * SHA-256 of a canonical byte string (a byte string encodes as itself).
 *
 * # Safety
 * `data` must hold `len` bytes and `out_digest` 32 writable bytes.
 */
enum InteropStatus interop_canonical_digest(const uint8_t *data, size_t len, uint8_t *out_digest);

/**
 * Decodes one complete frame.
 *
 * # Safety
 * `frame` must hold `frame_len` bytes; `out` must be valid.
 */
enum InteropStatus interop_message_decode(const uint8_t *frame,
                                          size_t frame_len,
                                          struct InteropMessage **out);

/**
 * # Safety
 * `message` must be null or a handle from [`interop_message_decode`].
 */
void interop_message_free(struct InteropMessage *message);

/**
 * Re-encodes a decoded message into a frame.
 *
 * # Safety
 * `message` must be a live handle; `out` must be valid.
 */
enum InteropStatus interop_message_encode(const struct InteropMessage *message,
                                          struct InteropBuffer *out);

/**
 * Writes the 16-byte request id and whether the message is a request.
 *
 * # Safety
 * `message` must be a live handle; `out_request_id` must hold 16 bytes.
 */
enum InteropStatus interop_message_request_id(const struct InteropMessage *message,
                                              uint8_t *out_request_id,
                                              bool *out_is_request);

/**
 * The digest attestations bind to. Fails for responses.
 *
 * # Safety
 * `message` must be a live handle; `out_digest` must hold 32 bytes.
 */
enum InteropStatus interop_request_digest(const struct InteropMessage *message,
                                          uint8_t *out_digest);

/**
 * Runs the trade scenario in process. `attack` is one of `none`, `tamper`,
 * `replay`, `unauthorized`, `censor`. Writes the JSON-lines transcript and
 * whether every expected verdict was reached.
 *
 * # Safety
 * `attack` must be a nul-terminated string; outputs must be valid.
 */
enum InteropStatus interop_scenario_run(uint64_t seed,
                                        const char *attack,
                                        uint64_t deadline_ms,
                                        struct InteropBuffer *out_transcript,
                                        bool *out_expected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTEROP_H */
