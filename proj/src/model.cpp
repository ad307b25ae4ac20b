// SPDX-License-Identifier: Apache-2.0
#include "flexmt/model.hpp"

#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

void ModelConfig::validate() const {
  encoder().validate();
  if (vocab < 2) fail(ErrorKind::InvalidArgument, "vocab must be >= 2");
  if (max_len < 4) fail(ErrorKind::InvalidArgument, "max_len must be >= 4");
  if (num_classes < 2) fail(ErrorKind::InvalidArgument, "num_classes must be >= 2");
  if (n_experts < 1) fail(ErrorKind::InvalidArgument, "n_experts must be >= 1");
  if (conv_channels < 1) fail(ErrorKind::InvalidArgument, "conv_channels must be >= 1");
  for (int w : {fusion_hidden1, fusion_hidden2, fused_dim})
    if (w < 1) fail(ErrorKind::InvalidArgument, "fusion widths must be >= 1");
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(seed ^ 0x464d5431ULL);  // decorrelate from data seeds
  text_embedder_ = std::make_unique<TextEmbedder>(config.vocab, config.max_len,
                                                  config.d_model, rng);
  image_projector_ = std::make_unique<ImageProjector>(config.d_model,
                                                      config.conv_channels, rng);
  cls_image_ = Tensor(1, config.d_model);
  cls_text_ = Tensor(1, config.d_model);
  init_gaussian(cls_image_, rng, 0.3);
  init_gaussian(cls_text_, rng, 0.3);
  encoder_ = std::make_unique<Encoder>(config.encoder(), rng);
  fusion_ = std::make_unique<FusionLayer>(config.d_model, config.fusion_hidden1,
                                          config.fusion_hidden2, config.fused_dim, rng);
  absent_ = std::make_unique<AbsentEmbeddings>(config.fused_dim, rng);
  stack_ = std::make_unique<ExpertStack>(config.fused_dim, config.n_experts, rng);
  gate_ = std::make_unique<GatingGru>(config.fused_dim, config.num_classes, rng);
  direct_w_ = Tensor(config.fused_dim, config.num_classes);
  direct_b_ = Tensor(1, config.num_classes);
  aux_w_ = Tensor(config.fused_dim, config.num_classes);
  aux_b_ = Tensor(1, config.num_classes);
  init_xavier(direct_w_, rng, config.fused_dim, config.num_classes);
  init_xavier(aux_w_, rng, config.fused_dim, config.num_classes);

  params_.emplace_back("cls.image", cls_image_);
  params_.emplace_back("cls.text", cls_text_);
  for (auto& kv : text_embedder_->named_parameters()) params_.push_back(kv);
  for (auto& kv : image_projector_->named_parameters()) params_.push_back(kv);
  for (auto& kv : encoder_->named_parameters()) params_.push_back(kv);
  for (auto& kv : fusion_->named_parameters()) params_.push_back(kv);
  for (auto& kv : absent_->named_parameters()) params_.push_back(kv);
  for (auto& kv : stack_->named_parameters()) params_.push_back(kv);
  for (auto& kv : gate_->named_parameters()) params_.push_back(kv);
  params_.emplace_back("head.direct_w", direct_w_);
  params_.emplace_back("head.direct_b", direct_b_);
  params_.emplace_back("head.aux_w", aux_w_);
  params_.emplace_back("head.aux_b", aux_b_);
}

ForwardResult Model::forward(const Record& record, std::optional<Modality> dropped,
                             HeadMode mode) const {
  record.validate(config_.num_classes);
  const bool avail_img = record.has_image && dropped != Modality::Image;
  const bool avail_txt = record.has_text && dropped != Modality::Text;

  std::array<std::optional<Tensor>, 3> task_outputs;
  if (avail_img || avail_txt) {
    Tensor image_tokens;
    if (record.has_image) image_tokens = image_projector_->project(record.image);
    Tensor text_tokens;
    if (record.has_text) {
      const int n_img = image_tokens.empty() ? 0 : image_tokens.rows();
      const std::vector<int> segments(record.text.size(), 0);
      // positions index the composite sequence: text starts after
      // [ImageCls, image tokens..., TextCls]
      text_tokens = text_embedder_->embed(record.text, segments, n_img + 2);
    }
    MultimodalSequence seq = assemble(image_tokens, text_tokens, cls_image_, cls_text_);

    // The modality to mask away inside a pass: unavailable-but-present
    // tokens keep self-attention only. (At most one modality can be
    // unavailable here, otherwise no pass runs at all.)
    std::optional<Modality> masked;
    if (!avail_img) masked = Modality::Image;
    if (!avail_txt) masked = Modality::Text;

    auto run_pass = [&](Task task) {
      AttentionMask mask = build_mask(seq.tags, task, masked);
      Tensor encoded = encoder_->forward(seq.embeddings, mask);
      Tensor img_cls = embed_rows(encoded, {0});
      Tensor txt_cls = embed_rows(encoded, {seq.text_cls_index});
      switch (task) {
        case Task::Joint:
          if (avail_img && avail_txt) return scale(add(img_cls, txt_cls), 0.5);
          return avail_img ? img_cls : txt_cls;
        case Task::ImageOnly: return img_cls;
        default: return txt_cls;
      }
    };
    task_outputs[0] = run_pass(Task::Joint);
    if (avail_img) task_outputs[1] = run_pass(Task::ImageOnly);
    if (avail_txt) task_outputs[2] = run_pass(Task::TextOnly);
  }

  ForwardResult result;
  for (int slot = 0; slot < 3; ++slot)
    result.slot_present[slot] = task_outputs[slot].has_value();
  result.fused = fuse(task_outputs, *fusion_, *absent_);
  if (mode == HeadMode::FusionOnly) {
    Tensor pooled = mean_rows(result.fused);
    result.probs = softmax_rows(add_bias(matmul(pooled, direct_w_), direct_b_));
  } else {
    result.probs = gate_->forward(stack_->forward(result.fused));
  }
  return result;
}

Tensor Model::forward_probs(const Record& record, std::optional<Modality> dropped,
                            HeadMode mode) const {
  return forward(record, dropped, mode).probs;
}

Tensor Model::aux_probs(const Tensor& fused_row) const {
  return softmax_rows(add_bias(matmul(fused_row, aux_w_), aux_b_));
}

int Model::predict_class(const Tensor& probs) {
  int best = 0;
  for (int j = 1; j < probs.cols(); ++j)
    if (probs.at(0, j) > probs.at(0, best)) best = j;
  return best;
}

std::vector<std::pair<std::string, Tensor>>& Model::named_parameters() { return params_; }

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (auto& kv : params_) out.push_back(kv.second);
  return out;
}

}  // namespace flexmt
