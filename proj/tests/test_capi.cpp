// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared-library C surface the way an external client would:
// only flexmt.h, opaque handles, status codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flexmt/flexmt.h"

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

flexmt_gen_config small_gen() {
  flexmt_gen_config g;
  flexmt_gen_config_init(&g);
  g.n = 16;
  g.seed = 9;
  g.noise = 0.05;
  g.vocab = 12;
  g.text_len = 3;
  return g;
}

flexmt_model_config small_model() {
  flexmt_model_config m;
  flexmt_model_config_init(&m);
  m.d_model = 8;
  m.n_heads = 2;
  m.n_layers = 1;
  m.d_ff = 16;
  m.vocab = 12;
  m.max_len = 16;
  m.conv_channels = 1;
  m.n_experts = 2;
  m.fusion_hidden1 = 8;
  m.fusion_hidden2 = 4;
  m.fused_dim = 4;
  return m;
}

}  // namespace

TEST_CASE("defaults match the published model shape") {
  flexmt_model_config m;
  flexmt_model_config_init(&m);
  CHECK(m.d_model == 768);
  CHECK(m.fusion_hidden1 == 512);
  CHECK(m.fusion_hidden2 == 256);
  CHECK(m.fused_dim == 128);
  CHECK(m.n_layers == 2);
  flexmt_train_config t;
  flexmt_train_config_init(&t);
  CHECK(t.p_drop == 0.3);
}

TEST_CASE("dataset generate/save/load round-trips through the C API") {
  flexmt_gen_config g = small_gen();
  flexmt_dataset* ds = nullptr;
  REQUIRE(flexmt_dataset_generate(&g, &ds) == FLEXMT_OK);
  CHECK(flexmt_dataset_size(ds) == 16);
  int counts[2] = {0, 0};
  REQUIRE(flexmt_dataset_class_counts(ds, counts, 2) == FLEXMT_OK);
  CHECK(counts[0] == 8);
  CHECK(counts[1] == 8);
  REQUIRE(flexmt_dataset_save(ds, "/tmp/flexmt_capi_data.jsonl") == FLEXMT_OK);

  flexmt_dataset* loaded = nullptr;
  REQUIRE(flexmt_dataset_load("/tmp/flexmt_capi_data.jsonl", &loaded) == FLEXMT_OK);
  CHECK(flexmt_dataset_size(loaded) == 16);
  REQUIRE(flexmt_dataset_save(loaded, "/tmp/flexmt_capi_data2.jsonl") == FLEXMT_OK);
  CHECK(file_bytes("/tmp/flexmt_capi_data.jsonl") ==
        file_bytes("/tmp/flexmt_capi_data2.jsonl"));
  flexmt_dataset_free(loaded);
  flexmt_dataset_free(ds);
}

TEST_CASE("error paths set a status and a message") {
  flexmt_dataset* ds = nullptr;
  CHECK(flexmt_dataset_load("/tmp/definitely_missing_flexmt.jsonl", &ds) == FLEXMT_ERR_IO);
  CHECK(std::strlen(flexmt_last_error()) > 0);

  flexmt_gen_config g = small_gen();
  g.n = 0;
  CHECK(flexmt_dataset_generate(&g, &ds) == FLEXMT_ERR_INVALID_ARGUMENT);
  CHECK(flexmt_dataset_generate(nullptr, &ds) == FLEXMT_ERR_INVALID_ARGUMENT);

  flexmt_model* model = nullptr;
  flexmt_model_config m = small_model();
  m.n_heads = 3;  // 8 % 3 != 0
  CHECK(flexmt_model_create(&m, 1, &model) == FLEXMT_ERR_INVALID_ARGUMENT);
  CHECK(flexmt_model_load("/tmp/definitely_missing_ckpt.bin", &model) == FLEXMT_ERR_IO);
}

TEST_CASE("train, evaluate, report and split through the C API") {
  flexmt_gen_config g = small_gen();
  g.n = 24;
  flexmt_dataset* ds = nullptr;
  REQUIRE(flexmt_dataset_generate(&g, &ds) == FLEXMT_OK);

  flexmt_dataset* train_set = nullptr;
  flexmt_dataset* test_set = nullptr;
  REQUIRE(flexmt_dataset_split(ds, 0.75, 3, &train_set, &test_set) == FLEXMT_OK);
  CHECK(flexmt_dataset_size(train_set) == 18);
  CHECK(flexmt_dataset_size(test_set) == 6);

  flexmt_model_config m = small_model();
  flexmt_model* model = nullptr;
  REQUIRE(flexmt_model_create(&m, 11, &model) == FLEXMT_OK);

  flexmt_train_config t;
  flexmt_train_config_init(&t);
  t.epochs = 2;
  t.lr = 0.01;
  t.seed = 11;
  int epochs_seen = 0;
  auto count_epochs = [](int, double, void* user) { ++*static_cast<int*>(user); };
  REQUIRE(flexmt_train(model, train_set, &t, count_epochs, &epochs_seen) == FLEXMT_OK);
  CHECK(epochs_seen == 2);

  flexmt_metrics metrics;
  REQUIRE(flexmt_evaluate(model, test_set, FLEXMT_DROP_NONE, &metrics) == FLEXMT_OK);
  CHECK(metrics.n_eval == 6);
  CHECK(metrics.tp + metrics.tn + metrics.fp + metrics.fn == 6);

  REQUIRE(flexmt_eval_report(model, test_set, FLEXMT_DROP_TEXT, "fmt",
                             "/tmp/flexmt_capi_report.csv", &metrics) == FLEXMT_OK);
  std::string report = file_bytes("/tmp/flexmt_capi_report.csv");
  CHECK(report.rfind("model,accuracy,recall,f1,n_eval\nfmt,", 0) == 0);

  // checkpoint round-trip through the C API
  REQUIRE(flexmt_model_save(model, "/tmp/flexmt_capi_model.bin") == FLEXMT_OK);
  flexmt_model* restored = nullptr;
  REQUIRE(flexmt_model_load("/tmp/flexmt_capi_model.bin", &restored) == FLEXMT_OK);
  flexmt_metrics again;
  REQUIRE(flexmt_evaluate(restored, test_set, FLEXMT_DROP_NONE, &again) == FLEXMT_OK);
  flexmt_metrics base;
  REQUIRE(flexmt_evaluate(model, test_set, FLEXMT_DROP_NONE, &base) == FLEXMT_OK);
  CHECK(again.tp == base.tp);
  CHECK(again.tn == base.tn);
  CHECK(again.fp == base.fp);
  CHECK(again.fn == base.fn);

  flexmt_model_free(restored);
  flexmt_model_free(model);
  flexmt_dataset_free(train_set);
  flexmt_dataset_free(test_set);
  flexmt_dataset_free(ds);
}

TEST_CASE("ablate writes the variant and reference rows") {
  flexmt_gen_config g = small_gen();
  g.n = 16;
  flexmt_dataset* ds = nullptr;
  REQUIRE(flexmt_dataset_generate(&g, &ds) == FLEXMT_OK);
  flexmt_model_config m = small_model();
  flexmt_train_config t;
  flexmt_train_config_init(&t);
  t.epochs = 1;
  t.lr = 0.01;
  REQUIRE(flexmt_ablate(ds, &m, &t, 5, "/tmp/flexmt_capi_ablate.csv") == FLEXMT_OK);
  std::string csv = file_bytes("/tmp/flexmt_capi_ablate.csv");
  CHECK(csv.rfind("model,accuracy,recall,f1,source\nfmt,", 0) == 0);
  CHECK(csv.find("image-only,") != std::string::npos);
  CHECK(csv.find("text-only,") != std::string::npos);
  CHECK(csv.find("fusion-no-stack,") != std::string::npos);
  CHECK(csv.find("no-masking,") != std::string::npos);
  CHECK(csv.find("FRT,0.9400,0.9500,0.9300,paper") != std::string::npos);
  CHECK(csv.find("CheXMed,0.9000,0.9100,0.9200,paper") != std::string::npos);
  flexmt_dataset_free(ds);
}

TEST_CASE("mask render produces the legend and grid") {
  size_t needed = 0;
  REQUIRE(flexmt_mask_render(2, 2, FLEXMT_TASK_JOINT, FLEXMT_DROP_NONE, nullptr, 0,
                             &needed) == FLEXMT_OK);
  std::vector<char> buf(needed);
  REQUIRE(flexmt_mask_render(2, 2, FLEXMT_TASK_JOINT, FLEXMT_DROP_NONE, buf.data(),
                             buf.size(), &needed) == FLEXMT_OK);
  CHECK(std::string(buf.data()) == "tags,I,i,i,T,t,t\n......\n......\n......\n......\n......\n......\n");

  REQUIRE(flexmt_mask_render(1, 1, FLEXMT_TASK_IMAGE_ONLY, FLEXMT_DROP_NONE, buf.data(),
                             buf.size(), &needed) == FLEXMT_OK);
  CHECK(std::string(buf.data()) == "tags,I,i,T,t\n..XX\n..XX\nXX.X\nXXX.\n");

  std::vector<char> joint_drop(needed);
  REQUIRE(flexmt_mask_render(1, 1, FLEXMT_TASK_JOINT, FLEXMT_DROP_TEXT, joint_drop.data(),
                             joint_drop.size(), &needed) == FLEXMT_OK);
  // identical grid to image-only
  CHECK(std::string(joint_drop.data()) == std::string(buf.data()));

  CHECK(flexmt_mask_render(-1, 2, FLEXMT_TASK_JOINT, FLEXMT_DROP_NONE, nullptr, 0,
                           &needed) == FLEXMT_ERR_INVALID_ARGUMENT);
}
