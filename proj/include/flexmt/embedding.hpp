// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flexmt/modality.hpp"
#include "flexmt/tensor.hpp"

namespace flexmt {

class Rng;

// Composite token sequence fed to the encoder: embeddings plus a modality tag
// per row. Layout is fixed as [ImageCls, Image..., TextCls, Text...].
struct MultimodalSequence {
  Tensor embeddings;            // L x d
  std::vector<TokenTag> tags;   // length L
  int text_cls_index = 0;       // row of the TextCls token
};

// Word + segment + position lookup tables, summed per token.
class TextEmbedder {
 public:
  TextEmbedder(int vocab, int max_len, int d_model, Rng& rng);

  // Row i = word[token_ids[i]] + segment[segment_ids[i]] + position[pos_offset + i].
  // pos_offset lets positions index the composite sequence rather than the
  // text block alone.
  Tensor embed(const std::vector<int>& token_ids, const std::vector<int>& segment_ids,
               int pos_offset = 0) const;

  int vocab() const { return word_table_.rows(); }
  int max_len() const { return position_table_.rows(); }

  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  Tensor word_table_;      // vocab x d
  Tensor segment_table_;   // 2 x d
  Tensor position_table_;  // max_len x d
};

// Convolution + pooling stand-in backbone feeding a three-affine-layer
// perceptron that maps the pooled features to d_model. Input is a flattened
// 16x16 grayscale grid.
class ImageProjector {
 public:
  ImageProjector(int d_model, int conv_channels, Rng& rng);

  // features.size() must equal input_dim(). Returns a 1 x d_model token.
  Tensor project(const std::vector<double>& features) const;

  int input_dim() const { return kGrid * kGrid; }
  int pooled_dim() const { return kPooledSide * kPooledSide * conv_channels_; }

  std::vector<std::pair<std::string, Tensor>> named_parameters();

  static constexpr int kGrid = 16;
  static constexpr int kKernel = 3;
  static constexpr int kConvSide = kGrid - kKernel + 1;  // valid conv, 14
  static constexpr int kPooledSide = kConvSide / 2;      // 2x2 avg pool, 7

 private:
  int conv_channels_;
  Tensor conv_weight_;  // (kKernel*kKernel) x conv_channels
  Tensor conv_bias_;    // 1 x conv_channels
  Tensor pool_matrix_;  // constant (kPooledSide^2) x (kConvSide^2)
  Tensor mlp_w1_, mlp_b1_;  // pooled -> d_model
  Tensor mlp_w2_, mlp_b2_;  // d_model -> d_model
  Tensor mlp_w3_, mlp_b3_;  // d_model -> d_model
};

// Three-affine-layer perceptron with an activation after each stage.
// Exposed for the image projector and the fusion layer, which share the
// pattern with different widths.
Tensor three_layer_mlp(const Tensor& x, const Tensor& w1, const Tensor& b1,
                       const Tensor& w2, const Tensor& b2, const Tensor& w3,
                       const Tensor& b3, bool activate_last);

// Prepend per-modality classification tokens and concatenate:
// [cls_image, image_tokens..., cls_text, text_tokens...]. Either token block
// may be empty (0 rows); the CLS rows are always present.
MultimodalSequence assemble(const Tensor& image_tokens, const Tensor& text_tokens,
                            const Tensor& cls_image, const Tensor& cls_text);

}  // namespace flexmt
