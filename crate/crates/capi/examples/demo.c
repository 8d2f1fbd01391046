/* Trains on a treebank, parses it back, and prints the attachment scores.
 *
 * Build from the repository root:
 *   cargo build -p xlparse-capi
 *   cc crates/capi/examples/demo.c -Icrates/capi/include \
 *      target/debug/libxlparse_capi.a -lpthread -ldl -lm -o demo
 *   ./demo fixtures/grammar.conllu
 */
#include <stdio.h>
#include <xlparse.h>

static int bail(const char *where) {
  fprintf(stderr, "%s failed: %s\n", where, xlp_last_error());
  return 1;
}

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: %s <treebank.conllu>\n", argv[0]);
    return 2;
  }
  printf("xlparse %s\n", xlp_version());

  XlpTreebank *bank = NULL;
  if (xlp_treebank_load(argv[1], "xx", &bank) != XLP_STATUS_OK)
    return bail("treebank load");
  printf("loaded %zu sentences\n", xlp_treebank_len(bank));

  XlpModel *model = NULL;
  if (xlp_train(bank, 1, NULL, NULL, 3, 8, 1, &model) != XLP_STATUS_OK)
    return bail("training");

  XlpTreebank *parsed = NULL;
  if (xlp_parse(model, bank, 1, &parsed) != XLP_STATUS_OK)
    return bail("parsing");

  double uas = 0.0, las = 0.0;
  if (xlp_evaluate(bank, parsed, false, &uas, &las) != XLP_STATUS_OK)
    return bail("evaluation");
  printf("training UAS %.2f, LAS %.2f\n", uas, las);

  xlp_treebank_free(parsed);
  xlp_model_free(model);
  xlp_treebank_free(bank);
  return 0;
}
