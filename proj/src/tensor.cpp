// SPDX-License-Identifier: Apache-2.0
#include "flexmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

namespace {

std::string dims(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(int rows, int cols) {
  if (rows <= 0 || cols <= 0)
    fail(ErrorKind::Dimension, "tensor dimensions must be positive, got " + dims(rows, cols));
  d_ = std::make_shared<detail::TensorData>();
  d_->rows = rows;
  d_->cols = cols;
  d_->values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Tensor::Tensor(int rows, int cols, std::vector<double> values) : Tensor(rows, cols) {
  if (values.size() != d_->values.size())
    fail(ErrorKind::Dimension,
         "tensor " + dims(rows, cols) + " needs " + std::to_string(d_->values.size()) +
             " values, got " + std::to_string(values.size()));
  d_->values = std::move(values);
}

Tensor Tensor::full(int rows, int cols, double value) {
  Tensor t(rows, cols);
  std::fill(t.d_->values.begin(), t.d_->values.end(), value);
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, {value}); }

std::string Tensor::shape_str() const { return dims(rows(), cols()); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1)
    fail(ErrorKind::Contract, "item() requires a 1x1 tensor, got " + shape_str());
  return d_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    fail(ErrorKind::Contract, "tensor has no gradient");
  return d_->grad;
}

Tensor Tensor::clone() const {
  if (empty()) return Tensor();
  return Tensor(rows(), cols(), d_->values);
}

// ---------------------------------------------------------------------------
// Tape plumbing

struct OpAccess {
  static std::shared_ptr<detail::TensorData>& data(Tensor& t) { return t.d_; }
  static const std::shared_ptr<detail::TensorData>& data(const Tensor& t) { return t.d_; }

  static Tape* tape_of(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
      if (!t->d_ || !t->d_->tape) continue;
      if (tape && tape != t->d_->tape)
        fail(ErrorKind::Contract, "operands participate in different tapes");
      tape = t->d_->tape;
    }
    return tape;
  }

  static void record(Tape* tape, std::vector<const Tensor*> ins, Tensor& out,
                     std::function<void()> back) {
    if (!tape) return;
    Tape::Node node;
    for (const Tensor* t : ins)
      if (t->d_ && t->d_->tape) node.inputs.push_back(t->d_);
    node.output = out.d_;
    node.back = std::move(back);
    out.d_->tape = tape;
    tape->attached_.push_back(out.d_);
    tape->nodes_.push_back(std::move(node));
  }

  static void ensure_grad(const std::shared_ptr<detail::TensorData>& d) {
    if (d->grad.empty()) d->grad.assign(d->values.size(), 0.0);
  }
  static void ensure_grad(const Tensor& t) { ensure_grad(t.d_); }

  static bool live(const Tensor& t) { return !t.d_->grad.empty(); }
  static std::vector<double>& g(const Tensor& t) { return t.d_->grad; }
  static const std::vector<double>& v(const Tensor& t) { return t.d_->values; }
};

namespace {

using OA = OpAccess;

void require_finite(const Tensor& t, const char* op) {
  for (double x : t.values())
    if (!std::isfinite(x))
      fail(ErrorKind::Contract, std::string(op) + " produced a non-finite value");
}

// Shared skeleton: run `back` only when the output accumulated a gradient,
// and make sure gradient buffers exist on the listed inputs first.
void record_op(const char* /*name*/, std::initializer_list<const Tensor*> ins,
               Tensor& out, std::function<void()> back) {
  Tape* tape = OA::tape_of(ins);
  if (!tape) return;
  std::vector<const Tensor*> in_vec(ins);
  // Grad buffers for participating inputs are created lazily inside the
  // wrapped closure so non-participants stay untouched.
  std::vector<Tensor> holders;
  holders.reserve(in_vec.size());
  for (const Tensor* t : in_vec) holders.push_back(*t);
  Tensor out_holder = out;
  auto wrapped = [holders, out_holder, back = std::move(back)]() {
    if (!OA::live(out_holder)) return;  // never contributed to the loss
    for (const Tensor& t : holders)
      if (t.participates()) OA::ensure_grad(t);
    back();
  };
  OA::record(tape, in_vec, out, std::move(wrapped));
}

}  // namespace

Tape::~Tape() {
  for (auto& d : attached_) d->tape = nullptr;
}

void Tape::watch(Tensor& t) {
  if (t.empty()) fail(ErrorKind::Contract, "cannot watch an empty tensor");
  auto& d = OpAccess::data(t);
  if (d->tape == this) return;
  if (d->tape != nullptr)
    fail(ErrorKind::Contract, "tensor already participates in another tape");
  d->tape = this;
  d->grad.assign(d->values.size(), 0.0);
  attached_.push_back(d);
}

void Tape::backward(const Tensor& loss) {
  if (ran_backward_)
    fail(ErrorKind::Contract, "backward already ran on this tape; build a fresh tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    fail(ErrorKind::Contract, "backward requires a scalar loss, got " + loss.shape_str());
  if (!loss.participates() || OpAccess::data(loss)->tape != this)
    fail(ErrorKind::Contract, "loss was not produced on this tape");
  ran_backward_ = true;
  auto& ld = OpAccess::data(loss);
  ld->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    it->back();
}

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    fail(ErrorKind::Dimension,
         "matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      const std::size_t orow = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ov[orow + j] += aip * bv[brow + j];
    }
  require_finite(out, "matmul");
  record_op("matmul", {&a, &b}, out, [a, b, out, m, k, n]() {
    const auto& go = OA::g(out);
    if (a.participates()) {
      auto& ga = OA::g(a);
      const auto& bv = OA::v(b);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j)
            s += go[static_cast<std::size_t>(i) * n + j] * bv[static_cast<std::size_t>(p) * n + j];
          ga[static_cast<std::size_t>(i) * k + p] += s;
        }
    }
    if (b.participates()) {
      auto& gb = OA::g(b);
      const auto& av = OA::v(a);
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i)
            s += av[static_cast<std::size_t>(i) * k + p] * go[static_cast<std::size_t>(i) * n + j];
          gb[static_cast<std::size_t>(p) * n + j] += s;
        }
    }
  });
  return out;
}

namespace {

Tensor elementwise(const char* name, const Tensor& a, const Tensor& b,
                   double (*fwd)(double, double), int which_grad_mode) {
  if (!a.same_shape(b))
    fail(ErrorKind::Dimension,
         std::string(name) + ": shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = fwd(a.values()[i], b.values()[i]);
  require_finite(out, name);
  record_op(name, {&a, &b}, out, [a, b, out, which_grad_mode]() {
    const auto& go = OA::g(out);
    if (a.participates()) {
      auto& ga = OA::g(a);
      for (std::size_t i = 0; i < go.size(); ++i)
        ga[i] += which_grad_mode == 2 ? go[i] * OA::v(b)[i] : go[i];
    }
    if (b.participates()) {
      auto& gb = OA::g(b);
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (which_grad_mode == 0) gb[i] += go[i];          // add
        else if (which_grad_mode == 1) gb[i] -= go[i];     // sub
        else gb[i] += go[i] * OA::v(a)[i];                 // mul
      }
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise("add", a, b, [](double x, double y) { return x + y; }, 0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise("sub", a, b, [](double x, double y) { return x - y; }, 1);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise("mul", a, b, [](double x, double y) { return x * y; }, 2);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    fail(ErrorKind::Dimension,
         "add_bias: bias " + bias.shape_str() + " does not broadcast over " + x.shape_str());
  Tensor out(x.rows(), x.cols());
  const int n = x.cols();
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + bias.at(0, j);
  require_finite(out, "add_bias");
  record_op("add_bias", {&x, &bias}, out, [x, bias, out, n]() {
    const auto& go = OA::g(out);
    const int m = x.rows();
    if (x.participates()) {
      auto& gx = OA::g(x);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (bias.participates()) {
      auto& gb = OA::g(bias);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb[j] += go[static_cast<std::size_t>(i) * n + j];
    }
  });
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] * factor;
  require_finite(out, "scale");
  record_op("scale", {&x}, out, [x, out, factor]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * factor;
  });
  return out;
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

Tensor unary(const char* name, const Tensor& x, double (*fwd)(double),
             double (*dfdx)(double)) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = fwd(x.values()[i]);
  require_finite(out, name);
  record_op(name, {&x}, out, [x, out, dfdx]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * dfdx(OA::v(x)[i]);
  });
  return out;
}

}  // namespace

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) {
        const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return phi + v * pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
}

Tensor tanh_op(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Tensor layer_norm(const Tensor& x, double eps) {
  const int m = x.rows(), n = x.cols();
  Tensor out(m, n);
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[i] = s;
    for (int j = 0; j < n; ++j) out.at(i, j) = (x.at(i, j) - mean) * s;
  }
  require_finite(out, "layer_norm");
  record_op("layer_norm", {&x}, out, [x, out, inv_std, m, n]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    const auto& ov = OA::v(out);
    for (int i = 0; i < m; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * n;
      double mean_g = 0.0, mean_gy = 0.0;
      for (int j = 0; j < n; ++j) {
        mean_g += go[base + j];
        mean_gy += go[base + j] * ov[base + j];
      }
      mean_g /= n;
      mean_gy /= n;
      for (int j = 0; j < n; ++j)
        gx[base + j] += inv_std[i] * (go[base + j] - mean_g - ov[base + j] * mean_gy);
    }
  });
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  Tensor out(m, n);
  for (int i = 0; i < m; ++i) {
    double row_max = kMaskedScore;
    for (int j = 0; j < n; ++j) {
      const double v = x.at(i, j);
      if (v != kMaskedScore && !std::isfinite(v))
        fail(ErrorKind::Contract, "softmax_rows: non-finite entry that is not the mask sentinel");
      if (v != kMaskedScore && v > row_max) row_max = v;
    }
    if (row_max == kMaskedScore)
      fail(ErrorKind::Contract, "softmax_rows: fully masked row " + std::to_string(i));
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = x.at(i, j);
      if (v == kMaskedScore) continue;
      const double e = std::exp(v - row_max);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < n; ++j) {
      if (x.at(i, j) == kMaskedScore)
        out.at(i, j) = 0.0;  // exact zero, not underflow
      else
        out.at(i, j) /= denom;
    }
  }
  record_op("softmax_rows", {&x}, out, [x, out, m, n]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    const auto& w = OA::v(out);
    for (int i = 0; i < m; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += w[base + j] * go[base + j];
      for (int j = 0; j < n; ++j)
        gx[base + j] += w[base + j] * (go[base + j] - dot);  // 0 at masked slots
    }
  });
  return out;
}

Tensor add_mask(const Tensor& scores, const Tensor& mask) {
  if (!scores.same_shape(mask))
    fail(ErrorKind::Dimension,
         "add_mask: mask " + mask.shape_str() + " vs scores " + scores.shape_str());
  Tensor out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double mv = mask.values()[i];
    if (mv != 0.0 && mv != kMaskedScore)
      fail(ErrorKind::Contract, "add_mask: mask entries must be 0 or the sentinel");
    out.values()[i] = mv == kMaskedScore ? kMaskedScore : scores.values()[i];
  }
  record_op("add_mask", {&scores}, out, [scores, mask, out]() {
    if (!scores.participates()) return;
    auto& gs = OA::g(scores);
    const auto& go = OA::g(out);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (mask.values()[i] == 0.0) gs[i] += go[i];
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::Contract, "concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != m)
      fail(ErrorKind::Dimension, "concat_cols: row counts differ, " + p.shape_str());
    total += p.cols();
  }
  Tensor out(m, total);
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.cols();
  }
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Tape* t = OpAccess::tape_of({&p});
    if (t && tape && t != tape)
      fail(ErrorKind::Contract, "operands participate in different tapes");
    if (t) tape = t;
  }
  if (tape) {
    std::vector<const Tensor*> ins;
    for (const Tensor& p : parts) ins.push_back(&p);
    std::vector<Tensor> held = parts;
    Tensor out_h = out;
    OpAccess::record(tape, ins, out, [held, out_h, m]() {
      if (!OpAccess::live(out_h)) return;
      const auto& go = OpAccess::g(out_h);
      const int total = out_h.cols();
      int off = 0;
      for (const Tensor& p : held) {
        if (p.participates()) {
          OpAccess::ensure_grad(p);
          auto& gp = OpAccess::g(p);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < p.cols(); ++j)
              gp[static_cast<std::size_t>(i) * p.cols() + j] +=
                  go[static_cast<std::size_t>(i) * total + off + j];
        }
        off += p.cols();
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::Contract, "concat_rows: no inputs");
  const int n = parts[0].cols();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n)
      fail(ErrorKind::Dimension, "concat_rows: column counts differ, " + p.shape_str());
    total += p.rows();
  }
  Tensor out(total, n);
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < n; ++j) out.at(off + i, j) = p.at(i, j);
    off += p.rows();
  }
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Tape* t = OpAccess::tape_of({&p});
    if (t && tape && t != tape)
      fail(ErrorKind::Contract, "operands participate in different tapes");
    if (t) tape = t;
  }
  if (tape) {
    std::vector<const Tensor*> ins;
    for (const Tensor& p : parts) ins.push_back(&p);
    std::vector<Tensor> held = parts;
    Tensor out_h = out;
    OpAccess::record(tape, ins, out, [held, out_h, n]() {
      if (!OpAccess::live(out_h)) return;
      const auto& go = OpAccess::g(out_h);
      int off = 0;
      for (const Tensor& p : held) {
        if (p.participates()) {
          OpAccess::ensure_grad(p);
          auto& gp = OpAccess::g(p);
          for (std::size_t i = 0; i < p.size(); ++i)
            gp[i] += go[static_cast<std::size_t>(off) * n + i];
        }
        off += p.rows();
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int count) {
  if (start < 0 || count <= 0 || start + count > x.cols())
    fail(ErrorKind::Dimension, "slice_cols: range [" + std::to_string(start) + ", " +
                                   std::to_string(start + count) + ") outside " + x.shape_str());
  Tensor out(x.rows(), count);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = x.at(i, start + j);
  record_op("slice_cols", {&x}, out, [x, out, start, count]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    const int n = x.cols();
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < count; ++j)
        gx[static_cast<std::size_t>(i) * n + start + j] +=
            go[static_cast<std::size_t>(i) * count + j];
  });
  return out;
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& indices) {
  if (indices.empty()) fail(ErrorKind::Contract, "embed_rows: no indices");
  for (std::size_t k = 0; k < indices.size(); ++k)
    if (indices[k] < 0 || indices[k] >= table.rows())
      fail(ErrorKind::Validation, "embed_rows: index " + std::to_string(indices[k]) +
                                      " out of range [0, " + std::to_string(table.rows()) +
                                      ") at position " + std::to_string(k));
  const int n = table.cols();
  Tensor out(static_cast<int>(indices.size()), n);
  for (std::size_t k = 0; k < indices.size(); ++k)
    for (int j = 0; j < n; ++j) out.at(static_cast<int>(k), j) = table.at(indices[k], j);
  record_op("embed_rows", {&table}, out, [table, out, indices, n]() {
    if (!table.participates()) return;
    auto& gt = OA::g(table);
    const auto& go = OA::g(out);
    for (std::size_t k = 0; k < indices.size(); ++k)
      for (int j = 0; j < n; ++j)
        gt[static_cast<std::size_t>(indices[k]) * n + j] += go[k * n + j];
  });
  return out;
}

Tensor mean_rows(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  Tensor out(1, n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += x.at(i, j);
    out.at(0, j) = s / m;
  }
  require_finite(out, "mean_rows");
  record_op("mean_rows", {&x}, out, [x, out, m, n]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(i) * n + j] += go[j] / m;
  });
  return out;
}

Tensor reshape(const Tensor& x, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != x.size())
    fail(ErrorKind::Dimension, "reshape: " + x.shape_str() + " has " +
                                   std::to_string(x.size()) + " values, target " + dims(rows, cols));
  Tensor out(rows, cols, x.values());
  record_op("reshape", {&x}, out, [x, out]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  Tensor out(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
  record_op("transpose", {&x}, out, [x, out, m, n]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const auto& go = OA::g(out);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        gx[static_cast<std::size_t>(i) * n + j] += go[static_cast<std::size_t>(j) * m + i];
  });
  return out;
}

Tensor cross_entropy(const Tensor& probs, int label) {
  if (probs.rows() != 1)
    fail(ErrorKind::Dimension, "cross_entropy: expected a 1xC probability row, got " +
                                   probs.shape_str());
  if (label < 0 || label >= probs.cols())
    fail(ErrorKind::Validation, "cross_entropy: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(probs.cols()) + ")");
  const double p = probs.at(0, label);
  if (!(p > 0.0))
    fail(ErrorKind::Contract, "cross_entropy: probability of the true class is not positive");
  Tensor out = Tensor::scalar(-std::log(p));
  record_op("cross_entropy", {&probs}, out, [probs, out, label, p]() {
    if (!probs.participates()) return;
    OA::g(probs)[label] += OA::g(out)[0] * (-1.0 / p);
  });
  return out;
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  require_finite(out, "sum_all");
  record_op("sum_all", {&x}, out, [x, out]() {
    if (!x.participates()) return;
    auto& gx = OA::g(x);
    const double go = OA::g(out)[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::init(const std::vector<Tensor>& params, double lr, double beta1,
                          double beta2, double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const Tensor& p : params) {
    s.first_moment.push_back(Tensor::zeros(p.rows(), p.cols()));
    s.second_moment.push_back(Tensor::zeros(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.first_moment.size())
    fail(ErrorKind::Dimension, "adam_step: state tracks " +
                                   std::to_string(state.first_moment.size()) +
                                   " parameters, got " + std::to_string(params.size()));
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    if (!p.same_shape(m))
      fail(ErrorKind::Dimension, "adam_step: parameter " + std::to_string(k) + " is " +
                                     p.shape_str() + " but moment is " + m.shape_str());
    const std::vector<double>* g = p.has_grad() ? &p.grad() : nullptr;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m.values()[i] = state.beta1 * m.values()[i] + (1.0 - state.beta1) * gi;
      v.values()[i] = state.beta2 * v.values()[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.values()[i] / bc1;
      const double vhat = v.values()[i] / bc2;
      p.values()[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Initializers

void init_xavier(Tensor& t, Rng& rng, int fan_in, int fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-a, a);
}

void init_gaussian(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.values()) v = rng.gaussian() * stddev;
}

}  // namespace flexmt
