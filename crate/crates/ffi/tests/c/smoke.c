#include <stdio.h>
#include <string.h>
#include "interop.h"

static int hexval(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

static size_t unhex(const char *hex, uint8_t *out) {
    size_t n = strlen(hex) / 2;
    for (size_t i = 0; i < n; i++) out[i] = (uint8_t)(hexval(hex[2 * i]) << 4 | hexval(hex[2 * i + 1]));
    return n;
}

#define CHECK(expr) do { if (!(expr)) { fprintf(stderr, "failed: %s (%s)\n", #expr, interop_last_error()); return 1; } } while (0)

int main(int argc, char **argv) {
    if (argc != 2) return 2;
    static uint8_t frame[4096];
    size_t frame_len = unhex(argv[1], frame);

    InteropKeyPair *keys = NULL;
    CHECK(interop_keypair_generate(42, true, &keys) == INTEROP_STATUS_OK);
    uint8_t pk[32], epk[32], sig[64];
    CHECK(interop_keypair_public_keys(keys, pk, epk) == INTEROP_STATUS_OK);
    const char *msg = "from c";
    CHECK(interop_sign(keys, (const uint8_t *)msg, strlen(msg), sig) == INTEROP_STATUS_OK);
    bool valid = false;
    CHECK(interop_verify(pk, (const uint8_t *)msg, strlen(msg), sig, &valid) == INTEROP_STATUS_OK && valid);

    InteropBuffer ct, pt;
    CHECK(interop_hybrid_encrypt(epk, (const uint8_t *)msg, strlen(msg), &ct) == INTEROP_STATUS_OK);
    CHECK(interop_hybrid_decrypt(keys, ct.data, ct.len, &pt) == INTEROP_STATUS_OK);
    CHECK(pt.len == strlen(msg) && memcmp(pt.data, msg, pt.len) == 0);
    interop_buffer_free(ct);
    interop_buffer_free(pt);
    interop_keypair_free(keys);

    InteropMessage *m = NULL;
    CHECK(interop_message_decode(frame, frame_len, &m) == INTEROP_STATUS_OK);
    uint8_t id[16], digest[32];
    bool is_request = false;
    CHECK(interop_message_request_id(m, id, &is_request) == INTEROP_STATUS_OK && is_request);
    CHECK(interop_request_digest(m, digest) == INTEROP_STATUS_OK);
    InteropBuffer again;
    CHECK(interop_message_encode(m, &again) == INTEROP_STATUS_OK);
    CHECK(again.len == frame_len && memcmp(again.data, frame, frame_len) == 0);
    interop_buffer_free(again);
    interop_message_free(m);

    CHECK(interop_message_decode(frame, 3, &m) == INTEROP_STATUS_DECODE);
    for (int i = 0; i < 32; i++) printf("%02x", digest[i]);
    printf("\n");
    return 0;
}
