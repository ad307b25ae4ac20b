// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flexmt/tensor.hpp"

namespace flexmt {

class Rng;

// Linear resampling with endpoints aligned: out[j] = v at j*(n-1)/(m-1),
// interpolated between neighbours. m == n is an exact identity; m == 1
// returns v[0]; n == 1 broadcasts. Rides the tape via a constant matrix.
Tensor interpolate_resize(const Tensor& v, int m);

// Interpolation to a common width, then a shared three-affine-layer MLP
// (target -> h1 -> h2 -> fused) and per-row standardization.
class FusionLayer {
 public:
  FusionLayer(int target_dim, int hidden1, int hidden2, int fused_dim, Rng& rng);

  // One present task output (1 x n, any n >= 1) -> fused row (1 x fused_dim).
  Tensor fuse_one(const Tensor& task_output) const;

  int target_dim() const { return target_dim_; }
  int fused_dim() const { return fused_dim_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  int target_dim_;
  int fused_dim_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

// One serial MoE stage: E expert perceptrons plus a score vector that
// attention-weights their outputs into a single row.
class ExpertLayer {
 public:
  ExpertLayer(int width, int n_experts, Rng& rng, const std::string& prefix);

  // h is 1 x width. weights_out, when given, receives the 1 x E softmax row.
  Tensor forward(const Tensor& h, Tensor* weights_out = nullptr) const;

  int n_experts() const { return static_cast<int>(expert_w1_.size()); }
  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  int width_;
  std::string prefix_;
  std::vector<Tensor> expert_w1_, expert_b1_, expert_w2_, expert_b2_;
  Tensor score_vector_;  // width x 1
};

// Three cascaded expert layers; layer k consumes the attention-weighted
// output of layer k-1. The cascade starts from the mean of the fused rows.
class ExpertStack {
 public:
  ExpertStack(int width, int n_experts, Rng& rng);

  // fused is 3 x width. Returns the three layer outputs [h1, h2, h3].
  std::array<Tensor, 3> forward(const Tensor& fused) const;

  static constexpr int kLayers = 3;
  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  std::vector<ExpertLayer> layers_;
};

// Two stacked GRU cells consuming the cascade outputs as a 3-step sequence;
// the final top-cell state feeds an affine readout and softmax.
class GatingGru {
 public:
  GatingGru(int width, int num_classes, Rng& rng);

  // steps are 1 x width each. Returns 1 x num_classes probabilities.
  Tensor forward(const std::array<Tensor, 3>& steps) const;
  // Pre-softmax readout of the final hidden state.
  Tensor logits(const std::array<Tensor, 3>& steps) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  struct Cell {
    Tensor wz, uz, bz;  // update gate
    Tensor wr, ur, br;  // reset gate
    Tensor wn, un, bn;  // candidate
  };
  Tensor cell_step(const Cell& cell, const Tensor& x, const Tensor& h) const;

  int width_;
  std::array<Cell, 2> cells_;
  Tensor readout_w_, readout_b_;
};

// Learned stand-in rows substituted for a task slot whose modality is
// dropped or missing, one per slot (Joint, ImageOnly, TextOnly).
class AbsentEmbeddings {
 public:
  AbsentEmbeddings(int fused_dim, Rng& rng);

  const Tensor& slot(int task_index) const;
  std::vector<std::pair<std::string, Tensor>> named_parameters();

 private:
  std::array<Tensor, 3> slots_;
};

// Stack the three task slots in fixed order [Joint, ImageOnly, TextOnly]:
// present outputs go through the fusion layer, absent slots take their
// learned stand-in row verbatim.
Tensor fuse(const std::array<std::optional<Tensor>, 3>& task_outputs,
            const FusionLayer& fusion, const AbsentEmbeddings& absent);

}  // namespace flexmt
