#include <stdio.h>
#include <string.h>
#include "coig.h"

#define CHECK(call)                                                       \
    do {                                                                  \
        CoigStatus s_ = (call);                                           \
        if (s_ != COIG_STATUS_OK) {                                       \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,             \
                    coig_last_error() ? coig_last_error() : "?");         \
            return 1;                                                     \
        }                                                                 \
    } while (0)

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    CoigEngine *engine = NULL;
    CHECK(coig_engine_open(NULL, argv[1], &engine));

    char *summary = NULL;
    CHECK(coig_run_prompt(engine, "A red apple and a blue bowl on a table", NULL, false, &summary));
    if (!strstr(summary, "\"status\": \"completed\"")) {
        fprintf(stderr, "unexpected summary %s\n", summary);
        return 1;
    }
    printf("%s", summary);
    coig_string_free(summary);

    char *out = NULL;
    if (coig_run_get(engine, "missing", &out) != COIG_STATUS_NOT_FOUND || out != NULL) return 1;
    if (coig_last_error() == NULL) return 1;
    if (coig_plan(engine, NULL, NULL, &out) != COIG_STATUS_NULL_ARGUMENT) return 1;

    coig_engine_free(engine);
    return 0;
}
