// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flexmt/embedding.hpp"
#include "flexmt/modality.hpp"
#include "flexmt/tensor.hpp"

namespace flexmt {

class Rng;

// Square additive mask: 0 where attention is allowed, kMaskedScore where it
// is prohibited. The diagonal is always 0 so no softmax row can be fully
// masked.
struct AttentionMask {
  Tensor matrix;  // L x L of {0, kMaskedScore}

  int size() const { return matrix.rows(); }
  bool allowed(int i, int j) const { return matrix.at(i, j) == 0.0; }
};

// Allowed pairs by task:
//   Joint     - every pair,
//   ImageOnly - both tokens tagged {ImageCls, Image},
//   TextOnly  - both tokens tagged {TextCls, Text}.
// Tokens of a dropped modality (CLS included) are cut off from every
// off-diagonal pair in both directions; they keep self-attention.
AttentionMask build_mask(const std::vector<TokenTag>& tags, Task task,
                         std::optional<Modality> dropped);

struct EncoderConfig {
  int d_model = 768;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 0;  // 0 -> 4 * d_model

  int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  void validate() const;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention(int d_model, int n_heads, Rng& rng, const std::string& prefix);

  Tensor forward(const Tensor& x, const AttentionMask& mask) const;
  // Same pass, also exposing the per-head softmax weight matrices.
  Tensor forward_with_weights(const Tensor& x, const AttentionMask& mask,
                              std::vector<Tensor>* weights_out) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  int d_model_;
  int n_heads_;
  int d_head_;
  std::string prefix_;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

// Post-norm transformer stack: per layer, masked multi-head attention with a
// residual and layer norm, then a GELU feed-forward with a residual and
// layer norm.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Rng& rng);

  Tensor forward(const Tensor& x, const AttentionMask& mask) const;

  const EncoderConfig& config() const { return config_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  struct Layer {
    MultiHeadAttention attn;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  };
  EncoderConfig config_;
  std::vector<Layer> layers_;
};

// Training-time modality dropout.
struct DropoutPolicy {
  double p_drop = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Stateless draw: fully determined by (policy.rng_seed, draw_index). Records
// that already miss a modality are never degraded further; at most one
// modality is dropped, never both.
std::optional<Modality> sample_dropout(const DropoutPolicy& policy,
                                       std::uint64_t draw_index, bool has_image,
                                       bool has_text);

// ASCII rendering of a mask ('.' allowed / 'X' prohibited) preceded by a tag
// legend line; used by the mask-demo CLI subcommand.
std::string render_mask_ascii(const std::vector<TokenTag>& tags, Task task,
                              std::optional<Modality> dropped);

}  // namespace flexmt
