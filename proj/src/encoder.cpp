// SPDX-License-Identifier: Apache-2.0
#include "flexmt/encoder.hpp"

#include <cmath>

#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

AttentionMask build_mask(const std::vector<TokenTag>& tags, Task task,
                         std::optional<Modality> dropped) {
  const int n = static_cast<int>(tags.size());
  if (n == 0) fail(ErrorKind::Contract, "build_mask: empty tag list");
  AttentionMask mask;
  mask.matrix = Tensor(n, n);
  auto task_allows = [task](TokenTag t) {
    switch (task) {
      case Task::Joint: return true;
      case Task::ImageOnly: return is_image_tag(t);
      default: return is_text_tag(t);
    }
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;  // self-attention always allowed
      bool ok = task_allows(tags[i]) && task_allows(tags[j]);
      if (dropped &&
          (tag_modality(tags[i]) == *dropped || tag_modality(tags[j]) == *dropped))
        ok = false;
      if (!ok) mask.matrix.at(i, j) = kMaskedScore;
    }
  }
  return mask;
}

void EncoderConfig::validate() const {
  if (d_model < 1) fail(ErrorKind::InvalidArgument, "d_model must be >= 1");
  if (n_heads < 1) fail(ErrorKind::InvalidArgument, "n_heads must be >= 1");
  if (d_model % n_heads != 0)
    fail(ErrorKind::InvalidArgument, "d_model " + std::to_string(d_model) +
                                         " not divisible by n_heads " + std::to_string(n_heads));
  if (n_layers < 1) fail(ErrorKind::InvalidArgument, "n_layers must be >= 1");
}

MultiHeadAttention::MultiHeadAttention(int d_model, int n_heads, Rng& rng,
                                       const std::string& prefix)
    : d_model_(d_model),
      n_heads_(n_heads),
      d_head_(d_model / n_heads),
      prefix_(prefix),
      wq_(d_model, d_model), bq_(1, d_model),
      wk_(d_model, d_model), bk_(1, d_model),
      wv_(d_model, d_model), bv_(1, d_model),
      wo_(d_model, d_model), bo_(1, d_model) {
  for (Tensor* w : {&wq_, &wk_, &wv_, &wo_}) init_xavier(*w, rng, d_model, d_model);
}

Tensor MultiHeadAttention::forward(const Tensor& x, const AttentionMask& mask) const {
  return forward_with_weights(x, mask, nullptr);
}

Tensor MultiHeadAttention::forward_with_weights(const Tensor& x, const AttentionMask& mask,
                                                std::vector<Tensor>* weights_out) const {
  if (x.cols() != d_model_)
    fail(ErrorKind::Dimension,
         "attention: input " + x.shape_str() + " vs d_model " + std::to_string(d_model_));
  if (mask.matrix.rows() != x.rows() || mask.matrix.cols() != x.rows())
    fail(ErrorKind::Dimension, "attention: mask " + mask.matrix.shape_str() +
                                   " does not fit sequence of length " +
                                   std::to_string(x.rows()));
  Tensor q = add_bias(matmul(x, wq_), bq_);
  Tensor k = add_bias(matmul(x, wk_), bk_);
  Tensor v = add_bias(matmul(x, wv_), bv_);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head_));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(n_heads_);
  for (int h = 0; h < n_heads_; ++h) {
    Tensor qh = slice_cols(q, h * d_head_, d_head_);
    Tensor kh = slice_cols(k, h * d_head_, d_head_);
    Tensor vh = slice_cols(v, h * d_head_, d_head_);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor weights = softmax_rows(add_mask(scores, mask.matrix));
    if (weights_out) weights_out->push_back(weights);
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = n_heads_ == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return add_bias(matmul(merged, wo_), bo_);
}

std::vector<std::pair<std::string, Tensor>> MultiHeadAttention::named_parameters() {
  return {{prefix_ + ".wq", wq_}, {prefix_ + ".bq", bq_}, {prefix_ + ".wk", wk_},
          {prefix_ + ".bk", bk_}, {prefix_ + ".wv", wv_}, {prefix_ + ".bv", bv_},
          {prefix_ + ".wo", wo_}, {prefix_ + ".bo", bo_}};
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  const int d = config.d_model;
  const int ff = config.ff_dim();
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    Layer layer{MultiHeadAttention(d, config.n_heads, rng, prefix + ".attn"),
                Tensor(d, ff), Tensor(1, ff), Tensor(ff, d), Tensor(1, d)};
    init_xavier(layer.ff_w1, rng, d, ff);
    init_xavier(layer.ff_w2, rng, ff, d);
    layers_.push_back(std::move(layer));
  }
}

Tensor Encoder::forward(const Tensor& x, const AttentionMask& mask) const {
  Tensor h = x;
  int index = 0;
  for (const Layer& layer : layers_) {
    if (h.cols() != config_.d_model)
      fail(ErrorKind::Dimension, "encoder layer " + std::to_string(index) +
                                     ": width " + h.shape_str());
    Tensor attn = layer.attn.forward(h, mask);
    h = layer_norm(add(h, attn));
    Tensor ff = add_bias(
        matmul(gelu(add_bias(matmul(h, layer.ff_w1), layer.ff_b1)), layer.ff_w2),
        layer.ff_b2);
    h = layer_norm(add(h, ff));
    ++index;
  }
  return h;
}

std::vector<std::pair<std::string, Tensor>> Encoder::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    for (auto& kv : layers_[l].attn.named_parameters()) out.push_back(kv);
    out.emplace_back(prefix + ".ff_w1", layers_[l].ff_w1);
    out.emplace_back(prefix + ".ff_b1", layers_[l].ff_b1);
    out.emplace_back(prefix + ".ff_w2", layers_[l].ff_w2);
    out.emplace_back(prefix + ".ff_b2", layers_[l].ff_b2);
  }
  return out;
}

void DropoutPolicy::validate() const {
  if (p_drop < 0.0 || p_drop > 1.0)
    fail(ErrorKind::InvalidArgument,
         "p_drop must lie in [0, 1], got " + std::to_string(p_drop));
}

std::optional<Modality> sample_dropout(const DropoutPolicy& policy,
                                       std::uint64_t draw_index, bool has_image,
                                       bool has_text) {
  policy.validate();
  if (!has_image || !has_text) return std::nullopt;  // already degraded
  Rng rng = Rng::stream(policy.rng_seed, draw_index);
  if (rng.uniform() >= policy.p_drop) return std::nullopt;
  return rng.uniform() < 0.5 ? Modality::Image : Modality::Text;
}

std::string render_mask_ascii(const std::vector<TokenTag>& tags, Task task,
                              std::optional<Modality> dropped) {
  AttentionMask mask = build_mask(tags, task, dropped);
  auto tag_char = [](TokenTag t) {
    switch (t) {
      case TokenTag::ImageCls: return 'I';
      case TokenTag::Image: return 'i';
      case TokenTag::TextCls: return 'T';
      default: return 't';
    }
  };
  std::string out = "tags";
  for (TokenTag t : tags) {
    out += ',';
    out += tag_char(t);
  }
  out += '\n';
  for (int i = 0; i < mask.size(); ++i) {
    for (int j = 0; j < mask.size(); ++j) out += mask.allowed(i, j) ? '.' : 'X';
    out += '\n';
  }
  return out;
}

}  // namespace flexmt
