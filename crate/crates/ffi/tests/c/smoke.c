#include <stdio.h>
#include <string.h>

#include "protoken.h"

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      const char *e = ptk_last_error();                              \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
              e ? e : "no error");                                   \
      return 1;                                                      \
    }                                                                \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) return 2;
  PtkModel *model = NULL;
  CHECK(ptk_model_train("bpe", "protein", argv[1], 12, 1, 0, &model) == PTK_STATUS_OK);
  CHECK(ptk_model_vocab_size(model) == 12);

  const char *seq = "MKVLAAGMKV";
  PtkEncoding *enc = NULL;
  CHECK(ptk_encode(model, seq, &enc) == PTK_STATUS_OK);
  size_t n = ptk_encoding_len(enc);
  const uint32_t *ids = ptk_encoding_ids(enc);
  const uint32_t *off = ptk_encoding_offsets(enc);
  char rebuilt[64] = {0};
  for (size_t i = 0; i < n; i++) {
    char *tok = NULL;
    CHECK(ptk_model_token(model, ids[i], &tok) == PTK_STATUS_OK);
    CHECK(strlen(tok) == off[2 * i + 1] - off[2 * i]);
    strcat(rebuilt, tok);
    ptk_string_free(tok);
  }
  CHECK(strcmp(rebuilt, seq) == 0);

  PtkModel *missing = NULL;
  CHECK(ptk_model_load("/nonexistent/model.json", &missing) == PTK_STATUS_IO);
  CHECK(missing == NULL && ptk_last_error() != NULL);

  ptk_encoding_free(enc);
  ptk_model_free(model);
  printf("ok %s\n", ptk_version());
  return 0;
}
