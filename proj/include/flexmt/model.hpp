// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flexmt/data.hpp"
#include "flexmt/embedding.hpp"
#include "flexmt/encoder.hpp"
#include "flexmt/moe.hpp"

namespace flexmt {

struct ModelConfig {
  int d_model = 768;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 0;  // 0 -> 4 * d_model
  int vocab = 32;
  int max_len = 64;
  int num_classes = 2;
  int n_experts = 4;
  int conv_channels = 4;
  int fusion_hidden1 = 512;
  int fusion_hidden2 = 256;
  int fused_dim = 128;

  EncoderConfig encoder() const { return {d_model, n_heads, n_layers, d_ff}; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Full head runs fusion -> expert cascade -> GRU gate; FusionOnly classifies
// the mean fused row directly (the naive-fusion ablation variant).
enum class HeadMode { Full, FusionOnly };

struct ForwardResult {
  Tensor probs;                                 // 1 x num_classes
  Tensor fused;                                 // 3 x fused_dim
  std::array<bool, 3> slot_present{};           // Joint, ImageOnly, TextOnly
};

// The complete classifier: dual-modality embedding, three shared-weight
// masked encoder passes (joint / image-only / text-only), fusion with
// learned stand-ins for missing tasks, the serial expert cascade and the
// GRU-gated readout.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  // `dropped` marks a modality unavailable on top of the record's own
  // presence flags; its tokens stay in the sequence and are masked out.
  ForwardResult forward(const Record& record, std::optional<Modality> dropped,
                        HeadMode mode = HeadMode::Full) const;
  Tensor forward_probs(const Record& record, std::optional<Modality> dropped,
                       HeadMode mode = HeadMode::Full) const;

  // Auxiliary per-task classification from one fused row (1 x fused_dim).
  Tensor aux_probs(const Tensor& fused_row) const;

  // argmax with ties broken toward the lowest class index.
  static int predict_class(const Tensor& probs);

  const ModelConfig& config() const { return config_; }
  // Stable name -> tensor view of every parameter; handles share storage
  // with the layers, so watching them on a tape trains the model.
  std::vector<std::pair<std::string, Tensor>>& named_parameters();
  std::vector<Tensor> parameters();

 private:
  ModelConfig config_;
  std::unique_ptr<TextEmbedder> text_embedder_;
  std::unique_ptr<ImageProjector> image_projector_;
  Tensor cls_image_, cls_text_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<FusionLayer> fusion_;
  std::unique_ptr<AbsentEmbeddings> absent_;
  std::unique_ptr<ExpertStack> stack_;
  std::unique_ptr<GatingGru> gate_;
  Tensor direct_w_, direct_b_;  // FusionOnly readout
  Tensor aux_w_, aux_b_;        // auxiliary task readout
  std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace flexmt
