// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <optional>

#include "flexmt/embedding.hpp"
#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"
#include "oracles.hpp"

using namespace flexmt;

namespace {

Tensor& param(std::vector<std::pair<std::string, Tensor>>& params, const std::string& name) {
  for (auto& [key, tensor] : params)
    if (key == name) return tensor;
  REQUIRE(false);
  static Tensor dummy;
  return dummy;
}

void set_values(Tensor& t, const std::vector<double>& values) {
  REQUIRE(t.size() == values.size());
  t.values() = values;
}

}  // namespace

TEST_CASE("embed_text with all-zero tables is the zero matrix") {
  Rng rng(1);
  TextEmbedder embedder(4, 6, 3, rng);
  auto params = embedder.named_parameters();
  for (auto& [name, tensor] : params)
    for (double& v : tensor.values()) v = 0.0;
  Tensor out = embedder.embed({1, 3, 0}, {0, 0, 1});
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 3);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("embed_text equals the lookup-sum of the three table rows") {
  Rng rng(2);
  TextEmbedder embedder(4, 5, 3, rng);
  auto params = embedder.named_parameters();
  set_values(param(params, "text.word_table"),
             {0.1, 0.2, 0.3, 1, 2, 3, 10, 20, 30, 100, 200, 300});
  set_values(param(params, "text.segment_table"), {0.5, 0.5, 0.5, 7, 8, 9});
  set_values(param(params, "text.position_table"),
             {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 1, 1, 1, 2, 2, 2});

  Tensor out = embedder.embed({2}, {1});
  CHECK(out.at(0, 0) == doctest::Approx(10 + 7 + 0.01).epsilon(1e-15));
  CHECK(out.at(0, 1) == doctest::Approx(20 + 8 + 0.02).epsilon(1e-15));
  CHECK(out.at(0, 2) == doctest::Approx(30 + 9 + 0.03).epsilon(1e-15));

  // position offset shifts which position row is added
  Tensor shifted = embedder.embed({2}, {1}, /*pos_offset=*/2);
  CHECK(shifted.at(0, 0) == doctest::Approx(10 + 7 + 0.07).epsilon(1e-15));

  // random tables: row i = word[tok] + segment[seg] + position[i]
  Rng rng2(77);
  for (auto& [name, tensor] : params)
    for (double& v : tensor.values()) v = rng2.uniform(-1.0, 1.0);
  std::vector<int> toks = {3, 0, 3};
  std::vector<int> segs = {0, 1, 0};
  Tensor batch = embedder.embed(toks, segs);
  auto& word = param(params, "text.word_table");
  auto& seg = param(params, "text.segment_table");
  auto& pos = param(params, "text.position_table");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(batch.at(i, j) == word.at(toks[i], j) + seg.at(segs[i], j) + pos.at(i, j));
}

TEST_CASE("embed_text: same token at two positions gives distinct rows") {
  Rng rng(3);
  TextEmbedder embedder(4, 5, 3, rng);
  Tensor out = embedder.embed({2, 2}, {0, 0});
  bool any_diff = false;
  for (int j = 0; j < 3; ++j) any_diff |= out.at(0, j) != out.at(1, j);
  CHECK(any_diff);
}

TEST_CASE("embed_text rejects out-of-range ids naming the index") {
  Rng rng(4);
  TextEmbedder embedder(4, 5, 3, rng);
  try {
    embedder.embed({1, 9}, {0, 0});
    FAIL("expected a vocabulary error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("9") != std::string::npos);
    CHECK(std::string(e.what()).find("position 1") != std::string::npos);
  }
  CHECK_THROWS_AS(embedder.embed({1}, {0}, /*pos_offset=*/5), Error);
}

TEST_CASE("project_image: zero input with zero biases gives zero output") {
  Rng rng(5);
  ImageProjector projector(8, 2, rng);
  std::vector<double> zeros(projector.input_dim(), 0.0);
  Tensor out = projector.project(zeros);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 8);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("project_image output shape is 1 x d_model for any valid input") {
  Rng rng(6);
  ImageProjector projector(12, 3, rng);
  Rng data_rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> pixels(projector.input_dim());
    for (double& p : pixels) p = data_rng.uniform();
    Tensor out = projector.project(pixels);
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 12);
  }
  CHECK_THROWS_AS(projector.project(std::vector<double>(100, 0.0)), Error);
}

TEST_CASE("three_layer_mlp matches a hand-computed forward on 2->2->2->2 weights") {
  // Biases of +10 push every GELU into its exactly-linear regime, so the
  // expected values reduce to integer arithmetic done on paper.
  Tensor w1(2, 2, {1, 0, 0, 1});
  Tensor b1 = Tensor::row({10, 10});
  Tensor w2(2, 2, {1, 0, 1, 1});  // [x, y] -> [x + y, y]
  Tensor b2 = Tensor::row({10, 10});
  Tensor w3(2, 2, {0, 1, 1, 0});  // swap
  Tensor b3 = Tensor::row({10, 10});
  Tensor x = Tensor::row({1, 0});
  // stage 1: [1, 0] + [10, 10]  = [11, 10]
  // stage 2: [11 + 10, 10] + b  = [31, 20]
  // stage 3: swap([31, 20]) + b = [30, 41]
  Tensor out = three_layer_mlp(x, w1, b1, w2, b2, w3, b3, /*activate_last=*/true);
  CHECK(out.at(0, 0) == 30.0);
  CHECK(out.at(0, 1) == 41.0);

  // one genuine nonlinearity point against the frozen normal-CDF constant
  Tensor g = gelu(Tensor::scalar(1.0));
  CHECK(g.item() == doctest::Approx(0.8413447460685429).epsilon(1e-15));
}

TEST_CASE("project_image gradient passes the finite-difference check") {
  Rng rng(8);
  ImageProjector projector(4, 1, rng);
  std::vector<double> pixels(projector.input_dim());
  Rng data_rng(9);
  for (double& p : pixels) p = data_rng.uniform();
  auto params_named = projector.named_parameters();
  std::vector<Tensor> params;
  for (auto& [name, tensor] : params_named) params.push_back(tensor);
  auto loss = [&projector, &pixels] {
    Tensor y = projector.project(pixels);
    return sum_all(mul(y, y));
  };
  auto result = oracle::check_gradients(params, loss);
  INFO("worst ", result.worst, " at ", result.worst_at);
  CHECK(result.ok());
}

TEST_CASE("assemble fixes the layout [ImageCls, Image..., TextCls, Text...]") {
  Rng rng(10);
  Tensor img = oracle::random_tensor(rng, 2, 4);
  Tensor txt = oracle::random_tensor(rng, 3, 4);
  Tensor cls_img = oracle::random_tensor(rng, 1, 4);
  Tensor cls_txt = oracle::random_tensor(rng, 1, 4);

  MultimodalSequence seq = assemble(img, txt, cls_img, cls_txt);
  CHECK(seq.embeddings.rows() == 7);
  CHECK(seq.tags == std::vector<TokenTag>{TokenTag::ImageCls, TokenTag::Image,
                                          TokenTag::Image, TokenTag::TextCls,
                                          TokenTag::Text, TokenTag::Text, TokenTag::Text});
  CHECK(seq.text_cls_index == 3);
  for (int j = 0; j < 4; ++j) {
    CHECK(seq.embeddings.at(0, j) == cls_img.at(0, j));
    CHECK(seq.embeddings.at(1, j) == img.at(0, j));
    CHECK(seq.embeddings.at(3, j) == cls_txt.at(0, j));
    CHECK(seq.embeddings.at(6, j) == txt.at(2, j));
  }
}

TEST_CASE("assemble with no image tokens keeps the ImageCls row") {
  Rng rng(11);
  Tensor txt = oracle::random_tensor(rng, 2, 4);
  Tensor cls_img = oracle::random_tensor(rng, 1, 4);
  Tensor cls_txt = oracle::random_tensor(rng, 1, 4);
  MultimodalSequence seq = assemble(Tensor(), txt, cls_img, cls_txt);
  CHECK(seq.embeddings.rows() == 4);  // 2 + n_txt
  CHECK(seq.tags[0] == TokenTag::ImageCls);
  CHECK(seq.tags[1] == TokenTag::TextCls);
  CHECK(seq.text_cls_index == 1);
}

TEST_CASE("assemble is deterministic and rejects width mismatches") {
  Rng rng(12);
  Tensor img = oracle::random_tensor(rng, 1, 4);
  Tensor txt = oracle::random_tensor(rng, 2, 4);
  Tensor cls_img = oracle::random_tensor(rng, 1, 4);
  Tensor cls_txt = oracle::random_tensor(rng, 1, 4);
  MultimodalSequence a = assemble(img, txt, cls_img, cls_txt);
  MultimodalSequence b = assemble(img, txt, cls_img, cls_txt);
  CHECK(a.embeddings.values() == b.embeddings.values());
  CHECK(a.tags == b.tags);

  Tensor bad = oracle::random_tensor(rng, 2, 5);
  CHECK_THROWS_AS(assemble(img, bad, cls_img, cls_txt), Error);
}
