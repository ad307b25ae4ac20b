// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flexmt/data.hpp"
#include "flexmt/metrics.hpp"
#include "flexmt/model.hpp"

namespace flexmt {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 1;
  double lr = 0.003;
  double p_drop = 0.3;  // modality dropout probability
  std::uint64_t seed = 1;
  double aux_loss_weight = 0.0;

  void validate() const;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Per sample: modality dropout draw, the three task passes, fusion, expert
// cascade, GRU gate, cross-entropy (plus optional per-task auxiliary
// losses), then an Adam step per batch. Deterministic given (seed, data,
// config). Returns the per-epoch mean losses.
std::vector<double> train(Model& model, const std::vector<Record>& records,
                          const TrainConfig& config, const EpochCallback& on_epoch = {},
                          HeadMode head = HeadMode::Full,
                          std::optional<Modality> forced_drop = std::nullopt,
                          AdamState* adam_out = nullptr);

// Confusion tallies over the records; forced_drop masks that modality for
// every record. Ties in the probability row go to the lowest class index.
ConfusionCounts evaluate(const Model& model, const std::vector<Record>& records,
                         std::optional<Modality> forced_drop = std::nullopt,
                         HeadMode head = HeadMode::Full);

// One ablation run: a shared 75/25 split and seed, the full model plus its
// degraded variants, and the published reference rows.
struct AblationRow {
  std::string model;
  double accuracy = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool from_paper = false;  // reference constant, not reproduced here
};

struct AblateOptions {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
};

// Variants: fmt (modality dropout on), image-only, text-only,
// fusion-no-stack, no-masking (p_drop = 0).
std::vector<AblationRow> ablate(const std::vector<Record>& records,
                                const AblateOptions& options);

// CSV with header `model,accuracy,recall,f1,source`; source is `run` or
// `paper`.
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

// Reference results carried for side-by-side display only.
const std::vector<AblationRow>& paper_reference_rows();

}  // namespace flexmt
