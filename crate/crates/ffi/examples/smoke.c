#include <stdio.h>
#include <stdlib.h>

#include "gist.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    GistStatus s_ = (call);                                                \
    if (s_ != GIST_STATUS_OK) {                                            \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,              \
              gist_last_error());                                          \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  GistDataset *ds = NULL;
  CHECK(gist_dataset_open("sbm:n=60,k=3,p_in=0.3,p_out=0.02,d=6,seed=1", &ds));

  GistModel *model = NULL;
  CHECK(gist_train(ds, "{\"m\":2,\"zeta\":2,\"hidden\":[8],\"epochs\":10}", &model));

  size_t needed = 0;
  if (gist_model_predict(model, ds, NULL, 0, &needed) != GIST_STATUS_BUFFER_TOO_SMALL) {
    return 1;
  }
  float *probs = malloc(needed * sizeof(float));
  CHECK(gist_model_predict(model, ds, probs, needed, NULL));

  size_t dims[] = {1433, 256, 256, 7};
  uint64_t per_worker[2];
  uint64_t total = 0;
  CHECK(gist_comm_cost("gist", "gcn", dims, 4, 2, false, per_worker, &total));

  printf("%zu %llu\n", needed, (unsigned long long)per_worker[0]);
  free(probs);
  gist_model_free(model);
  gist_dataset_free(ds);
  return 0;
}
