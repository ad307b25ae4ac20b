// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace flexmt {

class Tape;

// Additive attention-mask sentinel. softmax_rows maps it to an exactly-zero
// weight instead of relying on exp underflow, so masking is bit-testable.
inline constexpr double kMaskedScore = -std::numeric_limits<double>::infinity();

namespace detail {

struct TensorData {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // empty until the tensor joins a backward pass
  Tape* tape = nullptr;      // tape this tensor currently participates in
};

}  // namespace detail

// Dense row-major matrix of 64-bit floats. Copies share storage, so a
// parameter handle kept by a layer and the same handle watched by a tape see
// one buffer. Row vectors are 1xN, scalars 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols);
  Tensor(int rows, int cols, std::vector<double> values);

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor full(int rows, int cols, double value);
  static Tensor row(std::vector<double> values);
  static Tensor scalar(double value);

  bool empty() const { return d_ == nullptr; }
  int rows() const { return d_ ? d_->rows : 0; }
  int cols() const { return d_ ? d_->cols : 0; }
  std::size_t size() const { return d_ ? d_->values.size() : 0; }
  std::vector<int> shape() const { return {rows(), cols()}; }
  std::string shape_str() const;

  double at(int i, int j) const { return d_->values[idx(i, j)]; }
  double& at(int i, int j) { return d_->values[idx(i, j)]; }
  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& values() { return d_->values; }

  // Value of a 1x1 tensor.
  double item() const;

  bool participates() const { return d_ && d_->tape != nullptr; }
  bool has_grad() const { return d_ && !d_->grad.empty(); }
  const std::vector<double>& grad() const;
  double grad_at(int i, int j) const { return grad()[idx(i, j)]; }

  bool same_shape(const Tensor& other) const {
    return rows() == other.rows() && cols() == other.cols();
  }

  // Deep copy with fresh storage; drops tape participation and gradient.
  Tensor clone() const;

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * d_->cols + j;
  }
  std::shared_ptr<detail::TensorData> d_;

  friend class Tape;
  friend struct OpAccess;
};

// Linear record of operations for one forward pass. Watch the parameters,
// run the forward, call backward(loss) once; gradients accumulate into the
// watched tensors and survive the tape so the optimizer can read them.
class Tape {
 public:
  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Attach a leaf tensor; zeroes its gradient accumulator.
  void watch(Tensor& t);

  // Reverse pass from a scalar loss produced on this tape. Visits every node
  // exactly once; calling it a second time is a contract error.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<detail::TensorData>> attached_;
  bool ran_backward_ = false;

  friend struct OpAccess;
};

// --- differentiable operations -------------------------------------------
//
// Each op computes eagerly and records itself when any input participates in
// a tape. Ops that take two tensors require both participants to share one
// tape. All outputs of finite inputs are checked finite; add_mask is the one
// op allowed to emit the kMaskedScore sentinel.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[m x n] + bias broadcast over rows; bias is 1 x n.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
// Standardize each row to zero mean / unit variance, eps-guarded.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);
// Row-wise softmax. Entries equal to kMaskedScore produce exactly 0; a row
// of nothing but the sentinel is an error ("fully masked row").
Tensor softmax_rows(const Tensor& x);
// scores + mask where mask entries are 0 or kMaskedScore.
Tensor add_mask(const Tensor& scores, const Tensor& mask);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, int start, int count);
// Gather rows of `table` by index; duplicates accumulate gradient.
Tensor embed_rows(const Tensor& table, const std::vector<int>& indices);
// Column means: [m x n] -> [1 x n].
Tensor mean_rows(const Tensor& x);
Tensor reshape(const Tensor& x, int rows, int cols);
Tensor transpose(const Tensor& x);
// -log(probs[0][label]) for a 1 x C probability row.
Tensor cross_entropy(const Tensor& probs, int label);
Tensor sum_all(const Tensor& x);

// --- optimizer -------------------------------------------------------------

struct AdamState {
  long long step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState init(const std::vector<Tensor>& params, double lr,
                        double beta1 = 0.9, double beta2 = 0.999,
                        double eps = 1e-8);
};

// One bias-corrected Adam update from the gradients currently stored on the
// parameters. Parameters without a gradient are treated as zero-gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state);

class Rng;

// Xavier-style uniform init over [-a, a], a = sqrt(6 / (fan_in + fan_out)).
void init_xavier(Tensor& t, Rng& rng, int fan_in, int fan_out);
// Small-scale gaussian init (tables, CLS vectors).
void init_gaussian(Tensor& t, Rng& rng, double stddev);

}  // namespace flexmt
