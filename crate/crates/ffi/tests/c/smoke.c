#include <stdio.h>
#include <string.h>
#include "xdomain.h"

static int fail(const char *what) {
    const char *e = xd_last_error();
    fprintf(stderr, "%s: %s\n", what, e ? e : "(no message)");
    return 1;
}

int main(int argc, char **argv) {
    if (argc != 2) return 2;
    printf("version %s\n", xd_version());

    uint32_t a[] = {0, 1, 0, 1};
    uint32_t l[] = {7, 7, 9, 9};
    double p = 0.0;
    if (xd_purity(a, l, 4, &p) != XD_STATUS_OK || p != 0.5) return fail("purity");

    float v[32];
    if (xd_fallback_encode("thin films", 32, v, 16) != XD_STATUS_BUFFER_TOO_SMALL) return fail("buffer check");
    if (xd_fallback_encode("thin films", 32, v, 32) != XD_STATUS_OK) return fail("encode");

    XdSnapshot *snap = NULL;
    if (xd_snapshot_open(argv[1], "fallback", &snap) != XD_STATUS_OK) return fail("open");
    char *out = NULL;
    const char *req = "{\"abstract\": \"Alpha beta gamma. Delta epsilon zeta.\", \"sentence_index\": 1, \"t\": 2}";
    if (xd_search(snap, req, &out) != XD_STATUS_OK) return fail("search");
    printf("search %zu bytes\n", strlen(out));
    xd_string_free(out);

    const char *bad = "{\"abstract\": \"Alpha beta gamma.\", \"sentence_index\": 9}";
    if (xd_search(snap, bad, &out) != XD_STATUS_INVALID_ARGUMENT) return fail("bad index accepted");
    if (xd_last_error() == NULL) return 1;
    xd_snapshot_free(snap);
    printf("ok\n");
    return 0;
}
