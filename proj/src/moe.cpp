// SPDX-License-Identifier: Apache-2.0
#include "flexmt/moe.hpp"

#include <cmath>

#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

Tensor interpolate_resize(const Tensor& v, int m) {
  if (v.rows() != 1) fail(ErrorKind::Dimension, "interpolate_resize: expected a row vector");
  if (m < 1) fail(ErrorKind::InvalidArgument, "interpolate_resize: target size must be >= 1");
  const int n = v.cols();
  if (n == m) return v;
  Tensor resample(n, m);  // out = v * resample
  if (m == 1) {
    resample.at(0, 0) = 1.0;  // out[0] = v[0]
  } else if (n == 1) {
    for (int j = 0; j < m; ++j) resample.at(0, j) = 1.0;  // broadcast
  } else {
    for (int j = 0; j < m; ++j) {
      const double pos = static_cast<double>(j) * (n - 1) / (m - 1);
      int lo = static_cast<int>(pos);
      if (lo > n - 2) lo = n - 2;  // right endpoint lands exactly on v[n-1]
      const double frac = pos - lo;
      resample.at(lo, j) = 1.0 - frac;
      resample.at(lo + 1, j) = frac;
    }
  }
  return matmul(v, resample);
}

FusionLayer::FusionLayer(int target_dim, int hidden1, int hidden2, int fused_dim, Rng& rng)
    : target_dim_(target_dim),
      fused_dim_(fused_dim),
      w1_(target_dim, hidden1), b1_(1, hidden1),
      w2_(hidden1, hidden2), b2_(1, hidden2),
      w3_(hidden2, fused_dim), b3_(1, fused_dim) {
  init_xavier(w1_, rng, target_dim, hidden1);
  init_xavier(w2_, rng, hidden1, hidden2);
  init_xavier(w3_, rng, hidden2, fused_dim);
}

Tensor FusionLayer::fuse_one(const Tensor& task_output) const {
  Tensor resized = interpolate_resize(task_output, target_dim_);
  Tensor h1 = gelu(add_bias(matmul(resized, w1_), b1_));
  Tensor h2 = gelu(add_bias(matmul(h1, w2_), b2_));
  Tensor h3 = add_bias(matmul(h2, w3_), b3_);
  return layer_norm(h3);
}

std::vector<std::pair<std::string, Tensor>> FusionLayer::named_parameters() {
  return {{"fusion.w1", w1_}, {"fusion.b1", b1_}, {"fusion.w2", w2_},
          {"fusion.b2", b2_}, {"fusion.w3", w3_}, {"fusion.b3", b3_}};
}

ExpertLayer::ExpertLayer(int width, int n_experts, Rng& rng, const std::string& prefix)
    : width_(width), prefix_(prefix), score_vector_(width, 1) {
  if (n_experts < 1) fail(ErrorKind::InvalidArgument, "expert count must be >= 1");
  // Near-identity init so the serial cascade preserves per-sample variation:
  // an identity first stage, and a second stage whose 1.5 diagonal undoes the
  // variance GELU removes from unit-scale activations. Plain Xavier here
  // leaves the stack contractive enough to pin training at the uniform
  // prediction.
  for (int e = 0; e < n_experts; ++e) {
    Tensor w1(width, width), b1(1, width), w2(width, width), b2(1, width);
    init_xavier(w1, rng, width, width);
    init_xavier(w2, rng, width, width);
    for (std::size_t i = 0; i < w1.size(); ++i) {
      w1.values()[i] *= 0.3;
      w2.values()[i] *= 0.3;
    }
    for (int i = 0; i < width; ++i) {
      w1.at(i, i) += 1.0;
      w2.at(i, i) += 1.5;
    }
    expert_w1_.push_back(w1);
    expert_b1_.push_back(b1);
    expert_w2_.push_back(w2);
    expert_b2_.push_back(b2);
  }
  init_gaussian(score_vector_, rng, 0.5);
}

Tensor ExpertLayer::forward(const Tensor& h, Tensor* weights_out) const {
  if (h.rows() != 1 || h.cols() != width_)
    fail(ErrorKind::Dimension, "expert layer: expected 1x" + std::to_string(width_) +
                                   ", got " + h.shape_str());
  std::vector<Tensor> outputs;
  outputs.reserve(expert_w1_.size());
  for (std::size_t e = 0; e < expert_w1_.size(); ++e) {
    Tensor z = gelu(add_bias(matmul(h, expert_w1_[e]), expert_b1_[e]));
    outputs.push_back(add_bias(matmul(z, expert_w2_[e]), expert_b2_[e]));
  }
  // Score each expert output against the learned vector, dot-product style.
  Tensor stacked = outputs.size() == 1 ? outputs[0] : concat_rows(outputs);  // E x width
  Tensor scores = scale(matmul(stacked, score_vector_),
                        1.0 / std::sqrt(static_cast<double>(width_)));       // E x 1
  Tensor weights = softmax_rows(transpose(scores));                          // 1 x E
  if (weights_out) *weights_out = weights;
  return matmul(weights, stacked);  // 1 x width
}

std::vector<std::pair<std::string, Tensor>> ExpertLayer::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t e = 0; e < expert_w1_.size(); ++e) {
    const std::string p = prefix_ + ".expert" + std::to_string(e);
    out.emplace_back(p + ".w1", expert_w1_[e]);
    out.emplace_back(p + ".b1", expert_b1_[e]);
    out.emplace_back(p + ".w2", expert_w2_[e]);
    out.emplace_back(p + ".b2", expert_b2_[e]);
  }
  out.emplace_back(prefix_ + ".score", score_vector_);
  return out;
}

ExpertStack::ExpertStack(int width, int n_experts, Rng& rng) {
  for (int k = 0; k < kLayers; ++k)
    layers_.emplace_back(width, n_experts, rng, "stack." + std::to_string(k));
}

std::array<Tensor, 3> ExpertStack::forward(const Tensor& fused) const {
  if (fused.rows() != 3)
    fail(ErrorKind::Contract, "expert stack: expected 3 fused rows, got " + fused.shape_str());
  Tensor h = mean_rows(fused);
  std::array<Tensor, 3> outputs;
  for (int k = 0; k < kLayers; ++k) {
    h = layers_[k].forward(h);
    outputs[k] = h;
  }
  return outputs;
}

std::vector<std::pair<std::string, Tensor>> ExpertStack::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& layer : layers_)
    for (auto& kv : layer.named_parameters()) out.push_back(kv);
  return out;
}

GatingGru::GatingGru(int width, int num_classes, Rng& rng)
    : width_(width), readout_w_(width, num_classes), readout_b_(1, num_classes) {
  for (Cell& cell : cells_) {
    cell.wz = Tensor(width, width); cell.uz = Tensor(width, width); cell.bz = Tensor(1, width);
    cell.wr = Tensor(width, width); cell.ur = Tensor(width, width); cell.br = Tensor(1, width);
    cell.wn = Tensor(width, width); cell.un = Tensor(width, width); cell.bn = Tensor(1, width);
    for (Tensor* w : {&cell.wz, &cell.uz, &cell.wr, &cell.ur, &cell.wn, &cell.un})
      init_xavier(*w, rng, width, width);
    // candidate-dominated update gate at init keeps the final state
    // responsive to the last cascade outputs
    for (double& v : cell.bz.values()) v = -1.0;
  }
  init_xavier(readout_w_, rng, width, num_classes);
}

// z = sigmoid(Wz x + Uz h + bz)
// r = sigmoid(Wr x + Ur h + br)
// n = tanh(Wn x + Un (r * h) + bn)
// h' = (1 - z) * n + z * h
Tensor GatingGru::cell_step(const Cell& cell, const Tensor& x, const Tensor& h) const {
  Tensor z = sigmoid(add_bias(add(matmul(x, cell.wz), matmul(h, cell.uz)), cell.bz));
  Tensor r = sigmoid(add_bias(add(matmul(x, cell.wr), matmul(h, cell.ur)), cell.br));
  Tensor n = tanh_op(add_bias(add(matmul(x, cell.wn), matmul(mul(r, h), cell.un)), cell.bn));
  Tensor one_minus_z = sub(Tensor::full(1, width_, 1.0), z);
  return add(mul(one_minus_z, n), mul(z, h));
}

Tensor GatingGru::logits(const std::array<Tensor, 3>& steps) const {
  Tensor h0 = Tensor::zeros(1, width_);
  Tensor h1 = Tensor::zeros(1, width_);
  for (const Tensor& x : steps) {
    h0 = cell_step(cells_[0], x, h0);
    h1 = cell_step(cells_[1], h0, h1);
  }
  return add_bias(matmul(h1, readout_w_), readout_b_);
}

Tensor GatingGru::forward(const std::array<Tensor, 3>& steps) const {
  return softmax_rows(logits(steps));
}

std::vector<std::pair<std::string, Tensor>> GatingGru::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const std::string p = "gru." + std::to_string(c);
    Cell& cell = cells_[c];
    out.emplace_back(p + ".wz", cell.wz); out.emplace_back(p + ".uz", cell.uz);
    out.emplace_back(p + ".bz", cell.bz); out.emplace_back(p + ".wr", cell.wr);
    out.emplace_back(p + ".ur", cell.ur); out.emplace_back(p + ".br", cell.br);
    out.emplace_back(p + ".wn", cell.wn); out.emplace_back(p + ".un", cell.un);
    out.emplace_back(p + ".bn", cell.bn);
  }
  out.emplace_back("gru.readout_w", readout_w_);
  out.emplace_back("gru.readout_b", readout_b_);
  return out;
}

AbsentEmbeddings::AbsentEmbeddings(int fused_dim, Rng& rng) {
  for (Tensor& slot : slots_) {
    slot = Tensor(1, fused_dim);
    init_gaussian(slot, rng, 0.02);
  }
}

const Tensor& AbsentEmbeddings::slot(int task_index) const {
  if (task_index < 0 || task_index > 2)
    fail(ErrorKind::Contract, "absent embedding slot out of range");
  return slots_[task_index];
}

std::vector<std::pair<std::string, Tensor>> AbsentEmbeddings::named_parameters() {
  return {{"absent.joint", slots_[0]},
          {"absent.image_only", slots_[1]},
          {"absent.text_only", slots_[2]}};
}

Tensor fuse(const std::array<std::optional<Tensor>, 3>& task_outputs,
            const FusionLayer& fusion, const AbsentEmbeddings& absent) {
  std::vector<Tensor> rows;
  rows.reserve(3);
  for (int slot = 0; slot < 3; ++slot) {
    if (task_outputs[slot].has_value())
      rows.push_back(fusion.fuse_one(*task_outputs[slot]));
    else
      rows.push_back(absent.slot(slot));
  }
  return concat_rows(rows);
}

}  // namespace flexmt
