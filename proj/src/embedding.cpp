// SPDX-License-Identifier: Apache-2.0
#include "flexmt/embedding.hpp"

#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

TextEmbedder::TextEmbedder(int vocab, int max_len, int d_model, Rng& rng)
    : word_table_(vocab, d_model),
      segment_table_(2, d_model),
      position_table_(max_len, d_model) {
  init_gaussian(word_table_, rng, 0.3);
  init_gaussian(segment_table_, rng, 0.3);
  init_gaussian(position_table_, rng, 0.3);
}

Tensor TextEmbedder::embed(const std::vector<int>& token_ids,
                           const std::vector<int>& segment_ids, int pos_offset) const {
  if (token_ids.size() != segment_ids.size())
    fail(ErrorKind::Dimension, "embed: " + std::to_string(token_ids.size()) +
                                   " tokens vs " + std::to_string(segment_ids.size()) +
                                   " segment ids");
  if (token_ids.empty()) fail(ErrorKind::Contract, "embed: empty token list");
  for (std::size_t i = 0; i < token_ids.size(); ++i)
    if (token_ids[i] < 0 || token_ids[i] >= vocab())
      fail(ErrorKind::Validation, "embed: token id " + std::to_string(token_ids[i]) +
                                      " out of vocabulary [0, " + std::to_string(vocab()) +
                                      ") at position " + std::to_string(i));
  std::vector<int> positions(token_ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = pos_offset + static_cast<int>(i);
    if (positions[i] >= max_len())
      fail(ErrorKind::Validation, "embed: position " + std::to_string(positions[i]) +
                                      " exceeds max_len " + std::to_string(max_len()));
  }
  Tensor words = embed_rows(word_table_, token_ids);
  Tensor segments = embed_rows(segment_table_, segment_ids);
  Tensor pos = embed_rows(position_table_, positions);
  return add(add(words, segments), pos);
}

std::vector<std::pair<std::string, Tensor>> TextEmbedder::named_parameters() {
  return {{"text.word_table", word_table_},
          {"text.segment_table", segment_table_},
          {"text.position_table", position_table_}};
}

namespace {

// 2x2 average pooling over a kConvSide x kConvSide grid, expressed as a
// constant matrix so it rides the regular matmul gradient.
Tensor make_pool_matrix() {
  const int in_side = ImageProjector::kConvSide;
  const int out_side = ImageProjector::kPooledSide;
  Tensor pool(out_side * out_side, in_side * in_side);
  for (int r = 0; r < out_side; ++r)
    for (int c = 0; c < out_side; ++c)
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc)
          pool.at(r * out_side + c, (2 * r + dr) * in_side + (2 * c + dc)) = 0.25;
  return pool;
}

// im2col over the raw pixel grid. Pixels are leaf inputs (no gradient flows
// into the image), so the patch matrix can be built outside the tape.
Tensor make_patches(const std::vector<double>& pixels) {
  const int grid = ImageProjector::kGrid;
  const int k = ImageProjector::kKernel;
  const int side = ImageProjector::kConvSide;
  Tensor patches(side * side, k * k);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      for (int dr = 0; dr < k; ++dr)
        for (int dc = 0; dc < k; ++dc)
          patches.at(r * side + c, dr * k + dc) = pixels[(r + dr) * grid + (c + dc)];
  return patches;
}

}  // namespace

ImageProjector::ImageProjector(int d_model, int conv_channels, Rng& rng)
    : conv_channels_(conv_channels),
      conv_weight_(kKernel * kKernel, conv_channels),
      conv_bias_(1, conv_channels),
      pool_matrix_(make_pool_matrix()),
      mlp_w1_(kPooledSide * kPooledSide * conv_channels, d_model),
      mlp_b1_(1, d_model),
      mlp_w2_(d_model, d_model),
      mlp_b2_(1, d_model),
      mlp_w3_(d_model, d_model),
      mlp_b3_(1, d_model) {
  if (conv_channels < 1)
    fail(ErrorKind::InvalidArgument, "conv_channels must be >= 1");
  init_xavier(conv_weight_, rng, kKernel * kKernel, conv_channels);
  init_xavier(mlp_w1_, rng, mlp_w1_.rows(), d_model);
  init_xavier(mlp_w2_, rng, d_model, d_model);
  init_xavier(mlp_w3_, rng, d_model, d_model);
}

Tensor three_layer_mlp(const Tensor& x, const Tensor& w1, const Tensor& b1,
                       const Tensor& w2, const Tensor& b2, const Tensor& w3,
                       const Tensor& b3, bool activate_last) {
  Tensor h1 = gelu(add_bias(matmul(x, w1), b1));
  Tensor h2 = gelu(add_bias(matmul(h1, w2), b2));
  Tensor h3 = add_bias(matmul(h2, w3), b3);
  return activate_last ? gelu(h3) : h3;
}

Tensor ImageProjector::project(const std::vector<double>& features) const {
  if (static_cast<int>(features.size()) != input_dim())
    fail(ErrorKind::Dimension, "project: expected " + std::to_string(input_dim()) +
                                   " pixels, got " + std::to_string(features.size()));
  Tensor patches = make_patches(features);
  Tensor conv = gelu(add_bias(matmul(patches, conv_weight_), conv_bias_));
  Tensor pooled = matmul(pool_matrix_, conv);  // (kPooledSide^2) x channels
  Tensor flat = reshape(pooled, 1, pooled_dim());
  return three_layer_mlp(flat, mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_, mlp_w3_, mlp_b3_,
                         /*activate_last=*/true);
}

std::vector<std::pair<std::string, Tensor>> ImageProjector::named_parameters() {
  return {{"image.conv_weight", conv_weight_}, {"image.conv_bias", conv_bias_},
          {"image.mlp_w1", mlp_w1_},           {"image.mlp_b1", mlp_b1_},
          {"image.mlp_w2", mlp_w2_},           {"image.mlp_b2", mlp_b2_},
          {"image.mlp_w3", mlp_w3_},           {"image.mlp_b3", mlp_b3_}};
}

MultimodalSequence assemble(const Tensor& image_tokens, const Tensor& text_tokens,
                            const Tensor& cls_image, const Tensor& cls_text) {
  const int d = cls_image.cols();
  if (cls_image.rows() != 1 || cls_text.rows() != 1 || cls_text.cols() != d)
    fail(ErrorKind::Dimension, "assemble: CLS tokens must be 1x" + std::to_string(d));
  for (const Tensor* t : {&image_tokens, &text_tokens})
    if (!t->empty() && t->cols() != d)
      fail(ErrorKind::Dimension,
           "assemble: token width " + t->shape_str() + " does not match d=" + std::to_string(d));

  std::vector<Tensor> parts;
  MultimodalSequence seq;
  parts.push_back(cls_image);
  seq.tags.push_back(TokenTag::ImageCls);
  if (!image_tokens.empty()) {
    parts.push_back(image_tokens);
    for (int i = 0; i < image_tokens.rows(); ++i) seq.tags.push_back(TokenTag::Image);
  }
  seq.text_cls_index = static_cast<int>(seq.tags.size());
  parts.push_back(cls_text);
  seq.tags.push_back(TokenTag::TextCls);
  if (!text_tokens.empty()) {
    parts.push_back(text_tokens);
    for (int i = 0; i < text_tokens.rows(); ++i) seq.tags.push_back(TokenTag::Text);
  }
  seq.embeddings = concat_rows(parts);
  return seq;
}

}  // namespace flexmt
