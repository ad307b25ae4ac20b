// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "flexmt/checkpoint.hpp"
#include "flexmt/error.hpp"
#include "flexmt/model.hpp"
#include "flexmt/rng.hpp"
#include "flexmt/train.hpp"
#include "oracles.hpp"

using namespace flexmt;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.d_model = 8;
  config.n_heads = 2;
  config.n_layers = 1;
  config.d_ff = 16;
  config.vocab = 12;
  config.max_len = 16;
  config.num_classes = 2;
  config.n_experts = 2;
  config.conv_channels = 1;
  config.fusion_hidden1 = 8;
  config.fusion_hidden2 = 4;
  config.fused_dim = 4;
  return config;
}

GenConfig tiny_data_config() {
  GenConfig config;
  config.n = 12;
  config.seed = 5;
  config.noise = 0.1;
  config.vocab = 12;
  config.text_len = 3;
  return config;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig bad = tiny_config();
  bad.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(Model(bad, 0), Error);
  bad = tiny_config();
  bad.num_classes = 1;
  CHECK_THROWS_AS(Model(bad, 0), Error);
}

TEST_CASE("full model forward+loss passes the finite-difference gradient check") {
  Model model(tiny_config(), 42);
  std::vector<Record> records = generate(tiny_data_config());
  const Record& rec = records[1];
  REQUIRE(rec.has_image);
  REQUIRE(rec.has_text);

  SUBCASE("both modalities present") {
    auto loss = [&] { return cross_entropy(model.forward_probs(rec, std::nullopt), rec.label); };
    auto result = oracle::check_gradients(model.parameters(), loss);
    INFO("worst ", result.worst, " at ", result.worst_at);
    CHECK(result.ok());
  }
  SUBCASE("text dropped (absent-embedding path)") {
    auto loss = [&] { return cross_entropy(model.forward_probs(rec, Modality::Text), rec.label); };
    auto result = oracle::check_gradients(model.parameters(), loss);
    INFO("worst ", result.worst, " at ", result.worst_at);
    CHECK(result.ok());
  }
  SUBCASE("fusion-only head") {
    auto loss = [&] {
      return cross_entropy(model.forward_probs(rec, std::nullopt, HeadMode::FusionOnly),
                           rec.label);
    };
    auto result = oracle::check_gradients(model.parameters(), loss);
    INFO("worst ", result.worst, " at ", result.worst_at);
    CHECK(result.ok());
  }
}

TEST_CASE("dropped-text logits are bit-invariant to text content") {
  Model model(tiny_config(), 7);
  std::vector<Record> records = generate(tiny_data_config());
  Record rec = records[0];
  REQUIRE(rec.has_text);
  Tensor base = model.forward_probs(rec, Modality::Text);
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    Record perturbed = rec;
    for (int& t : perturbed.text) t = static_cast<int>(rng.index(12));
    Tensor probs = model.forward_probs(perturbed, Modality::Text);
    CHECK(probs.values() == base.values());  // bitwise
  }
  // symmetric: dropped-image logits ignore pixel content
  Tensor base_img = model.forward_probs(rec, Modality::Image);
  for (int trial = 0; trial < 25; ++trial) {
    Record perturbed = rec;
    for (double& p : perturbed.image) p = rng.uniform();
    Tensor probs = model.forward_probs(perturbed, Modality::Image);
    CHECK(probs.values() == base_img.values());
  }
}

TEST_CASE("dropping a modality equals physically removing it") {
  Model model(tiny_config(), 8);
  std::vector<Record> records = generate(tiny_data_config());
  Record rec = records[2];
  Tensor dropped = model.forward_probs(rec, Modality::Text);
  Record stripped = rec;
  stripped.text.clear();
  stripped.has_text = false;
  Tensor absent = model.forward_probs(stripped, std::nullopt);
  CHECK(dropped.values() == absent.values());
}

TEST_CASE("predict_class breaks ties toward the lowest class index") {
  CHECK(Model::predict_class(Tensor::row({0.5, 0.5})) == 0);
  CHECK(Model::predict_class(Tensor::row({0.2, 0.5, 0.3})) == 1);
  CHECK(Model::predict_class(Tensor::row({0.25, 0.25, 0.25, 0.25})) == 0);
}

TEST_CASE("a zero-parameter model predicts uniformly and evaluate tie-breaks to class 0") {
  Model model(tiny_config(), 3);
  for (auto& [name, tensor] : model.named_parameters())
    for (double& v : tensor.values()) v = 0.0;
  std::vector<Record> records = generate(tiny_data_config());
  ConfusionCounts counts = evaluate(model, records);
  CHECK(counts.tp == 0);
  CHECK(counts.fp == 0);  // everything predicted class 0
  CHECK(counts.tn + counts.fn == static_cast<long long>(records.size()));
}

TEST_CASE("evaluate matches a per-record tally oracle") {
  Model model(tiny_config(), 11);
  GenConfig data_config = tiny_data_config();
  data_config.n = 50;
  data_config.missing_rate = 0.2;
  std::vector<Record> records = generate(data_config);
  std::vector<int> actual, predicted;
  for (const Record& rec : records) {
    actual.push_back(rec.label);
    predicted.push_back(Model::predict_class(model.forward_probs(rec, std::nullopt)));
  }
  oracle::Tally want = oracle::tally_reference(actual, predicted);
  ConfusionCounts got = evaluate(model, records);
  CHECK(got.tp == want.tp);
  CHECK(got.tn == want.tn);
  CHECK(got.fp == want.fp);
  CHECK(got.fn == want.fn);
}

TEST_CASE("training with lr=0 leaves parameters unchanged") {
  Model model(tiny_config(), 21);
  std::vector<std::vector<double>> before;
  for (auto& [name, tensor] : model.named_parameters()) before.push_back(tensor.values());
  std::vector<Record> records = generate(tiny_data_config());
  TrainConfig config;
  config.epochs = 1;
  config.lr = 0.0;  // zero step size
  config.seed = 1;
  train(model, records, config);
  std::size_t i = 0;
  for (auto& [name, tensor] : model.named_parameters()) CHECK(tensor.values() == before[i++]);
}

TEST_CASE("train validates its config") {
  Model model(tiny_config(), 21);
  std::vector<Record> records = generate(tiny_data_config());
  TrainConfig config;
  config.epochs = 0;
  CHECK_THROWS_AS(train(model, records, config), Error);
  config = TrainConfig{};
  config.p_drop = 1.5;
  CHECK_THROWS_AS(train(model, records, config), Error);
  config = TrainConfig{};
  config.lr = -0.1;
  CHECK_THROWS_AS(train(model, records, config), Error);
  CHECK_THROWS_AS(train(model, {}, TrainConfig{}), Error);
}

TEST_CASE("identical seeds produce bit-identical checkpoints") {
  std::vector<Record> records = generate(tiny_data_config());
  TrainConfig config;
  config.epochs = 2;
  config.lr = 0.01;
  config.p_drop = 0.4;
  config.seed = 17;
  auto run = [&](const std::string& path) {
    Model model(tiny_config(), 17);
    train(model, records, config);
    save_checkpoint(model, path);
  };
  run("/tmp/flexmt_ckpt_a.bin");
  run("/tmp/flexmt_ckpt_b.bin");
  const std::string bytes = file_bytes("/tmp/flexmt_ckpt_a.bin");
  CHECK(!bytes.empty());
  CHECK(bytes == file_bytes("/tmp/flexmt_ckpt_b.bin"));
}

TEST_CASE("aux loss trains the auxiliary head") {
  Model model(tiny_config(), 30);
  std::vector<Record> records = generate(tiny_data_config());
  TrainConfig config;
  config.epochs = 1;
  config.seed = 2;
  config.aux_loss_weight = 0.5;
  std::vector<double> losses = train(model, records, config);
  CHECK(losses.size() == 1);
  CHECK(losses[0] > 0.0);
}

TEST_CASE("checkpoint round-trip is bit-exact, optimizer state included") {
  Model model(tiny_config(), 55);
  std::vector<Record> records = generate(tiny_data_config());
  TrainConfig config;
  config.epochs = 1;
  config.seed = 3;
  AdamState adam;
  train(model, records, config, {}, HeadMode::Full, std::nullopt, &adam);
  const std::string path = "/tmp/flexmt_ckpt_rt.bin";
  save_checkpoint(model, path, &adam);

  AdamState restored_adam;
  std::unique_ptr<Model> restored = load_checkpoint(path, &restored_adam);
  auto& orig = model.named_parameters();
  auto& back = restored->named_parameters();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == back[i].first);
    CHECK(orig[i].second.values() == back[i].second.values());
  }
  CHECK(restored_adam.step_count == adam.step_count);
  CHECK(restored_adam.lr == adam.lr);
  for (std::size_t i = 0; i < adam.first_moment.size(); ++i) {
    CHECK(restored_adam.first_moment[i].values() == adam.first_moment[i].values());
    CHECK(restored_adam.second_moment[i].values() == adam.second_moment[i].values());
  }

  // restored model evaluates identically
  for (const Record& rec : records) {
    Tensor a = model.forward_probs(rec, std::nullopt);
    Tensor b = restored->forward_probs(rec, std::nullopt);
    CHECK(a.values() == b.values());
  }
}

TEST_CASE("checkpoint loader rejects damage and mismatches") {
  Model model(tiny_config(), 60);
  const std::string path = "/tmp/flexmt_ckpt_err.bin";
  save_checkpoint(model, path);

  SUBCASE("truncated file") {
    std::string bytes = file_bytes(path);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    try {
      load_checkpoint(path);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
    }
  }
  SUBCASE("bad magic") {
    std::string bytes = file_bytes(path);
    bytes[0] = 'X';
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
  SUBCASE("unknown version") {
    std::string bytes = file_bytes(path);
    bytes[4] = 9;
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      load_checkpoint(path);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("config mismatch names the first offending tensor") {
    ModelConfig bigger = tiny_config();
    bigger.d_model = 16;
    Model other(bigger, 1);
    try {
      load_checkpoint_into(other, path);
      FAIL("expected incompatibility error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Incompatible);
      CHECK(std::string(e.what()).find("cls.image") != std::string::npos);
    }
  }
  SUBCASE("optimizer state requested but absent") {
    AdamState adam;
    CHECK_THROWS_AS(load_checkpoint(path, &adam), Error);
  }
}

TEST_CASE("forced text drop during evaluation ignores text everywhere") {
  Model model(tiny_config(), 70);
  GenConfig data_config = tiny_data_config();
  data_config.n = 20;
  std::vector<Record> records = generate(data_config);
  std::vector<Record> garbled = records;
  Rng rng(1);
  for (Record& rec : garbled)
    for (int& t : rec.text) t = static_cast<int>(rng.index(12));
  ConfusionCounts a = evaluate(model, records, Modality::Text);
  ConfusionCounts b = evaluate(model, garbled, Modality::Text);
  CHECK(a.tp == b.tp);
  CHECK(a.tn == b.tn);
  CHECK(a.fp == b.fp);
  CHECK(a.fn == b.fn);
}

TEST_CASE("ablation emits the expected variant rows plus flagged references") {
  GenConfig data_config = tiny_data_config();
  data_config.n = 16;
  std::vector<Record> records = generate(data_config);
  AblateOptions options;
  options.model = tiny_config();
  options.train.epochs = 1;
  options.train.lr = 0.01;
  options.seed = 4;
  std::vector<AblationRow> rows = ablate(records, options);
  std::vector<std::string> names;
  for (const AblationRow& row : rows)
    if (!row.from_paper) names.push_back(row.model);
  CHECK(names == std::vector<std::string>{"fmt", "image-only", "text-only",
                                          "fusion-no-stack", "no-masking"});
  int paper_rows = 0;
  for (const AblationRow& row : rows) paper_rows += row.from_paper;
  CHECK(paper_rows == 8);

  const std::string path = "/tmp/flexmt_ablate.csv";
  write_ablation_csv(path, rows);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "model,accuracy,recall,f1,source");
  std::string line;
  bool found_reference = false;
  while (std::getline(in, line))
    found_reference |= line == "FRT,0.9400,0.9500,0.9300,paper";
  CHECK(found_reference);
}
