// SPDX-License-Identifier: Apache-2.0
#include "flexmt/train.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "flexmt/encoder.hpp"
#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (lr < 0.0) fail(ErrorKind::InvalidArgument, "lr must be >= 0");
  if (p_drop < 0.0 || p_drop > 1.0)
    fail(ErrorKind::InvalidArgument, "p_drop must lie in [0, 1]");
  if (aux_loss_weight < 0.0)
    fail(ErrorKind::InvalidArgument, "aux_loss_weight must be >= 0");
}

std::vector<double> train(Model& model, const std::vector<Record>& records,
                          const TrainConfig& config, const EpochCallback& on_epoch,
                          HeadMode head, std::optional<Modality> forced_drop,
                          AdamState* adam_out) {
  config.validate();
  if (records.empty()) fail(ErrorKind::InvalidArgument, "training set is empty");
  for (const Record& rec : records) rec.validate(model.config().num_classes);

  std::vector<Tensor> params = model.parameters();
  AdamState adam = AdamState::init(params, config.lr);
  DropoutPolicy policy{config.p_drop, config.seed};
  Rng shuffle_rng(config.seed ^ 0x5348464cULL);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> epoch_losses;
  std::uint64_t draw_index = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end = std::min(cursor + config.batch_size, order.size());
      Tape tape;
      for (Tensor& p : params) tape.watch(p);
      Tensor batch_loss;
      for (std::size_t k = cursor; k < batch_end; ++k) {
        const Record& rec = records[order[k]];
        std::optional<Modality> dropped = forced_drop;
        if (!dropped)
          dropped = sample_dropout(policy, draw_index, rec.has_image, rec.has_text);
        ++draw_index;
        ForwardResult result = model.forward(rec, dropped, head);
        Tensor loss = cross_entropy(result.probs, rec.label);
        if (config.aux_loss_weight > 0.0) {
          int present = 0;
          Tensor aux_sum;
          for (int slot = 0; slot < 3; ++slot) {
            if (!result.slot_present[slot]) continue;
            Tensor row = embed_rows(result.fused, {slot});
            Tensor aux = cross_entropy(model.aux_probs(row), rec.label);
            aux_sum = present == 0 ? aux : add(aux_sum, aux);
            ++present;
          }
          if (present > 0)
            loss = add(loss, scale(aux_sum, config.aux_loss_weight / present));
        }
        batch_loss = k == cursor ? loss : add(batch_loss, loss);
      }
      const double inv = 1.0 / static_cast<double>(batch_end - cursor);
      Tensor mean_loss = scale(batch_loss, inv);
      loss_sum += mean_loss.item() * static_cast<double>(batch_end - cursor);
      tape.backward(mean_loss);
      adam_step(params, adam);
      cursor = batch_end;
    }
    const double mean = loss_sum / static_cast<double>(order.size());
    epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  if (adam_out) *adam_out = std::move(adam);
  return epoch_losses;
}

ConfusionCounts evaluate(const Model& model, const std::vector<Record>& records,
                         std::optional<Modality> forced_drop, HeadMode head) {
  ConfusionCounts counts;
  for (const Record& rec : records) {
    Tensor probs = model.forward_probs(rec, forced_drop, head);
    counts.add(rec.label, Model::predict_class(probs));
  }
  return counts;
}

namespace {

AblationRow run_variant(const std::string& name, const std::vector<Record>& train_set,
                        const std::vector<Record>& test_set, const AblateOptions& options,
                        double p_drop, HeadMode head, std::optional<Modality> forced_drop) {
  Model model(options.model, options.seed);
  TrainConfig cfg = options.train;
  cfg.p_drop = p_drop;
  cfg.seed = options.seed;
  train(model, train_set, cfg, {}, head, forced_drop);
  ConfusionCounts counts = evaluate(model, test_set, forced_drop, head);
  MetricReport report = make_report(name, counts);
  return {name, report.accuracy, report.recall, report.f1, false};
}

}  // namespace

const std::vector<AblationRow>& paper_reference_rows() {
  static const std::vector<AblationRow> rows = {
      {"FRT", 0.94, 0.95, 0.93, true},
      {"ResNet", 0.89, 0.91, 0.86, true},
      {"BERT", 0.79, 0.85, 0.84, true},
      {"TextCNN", 0.88, 0.91, 0.86, true},
      {"RoBERTa", 0.81, 0.86, 0.85, true},
      {"BERT+ResNe-Without-CNN", 0.88, 0.86, 0.84, true},
      {"BERT+ResNet-NN", 0.89, 0.90, 0.84, true},
      {"CheXMed", 0.90, 0.91, 0.92, true},
  };
  return rows;
}

std::vector<AblationRow> ablate(const std::vector<Record>& records,
                                const AblateOptions& options) {
  auto [train_set, test_set] = split(records, SplitSpec{0.75, options.seed});
  const double p = options.train.p_drop;
  std::vector<AblationRow> rows;
  rows.push_back(run_variant("fmt", train_set, test_set, options, p, HeadMode::Full,
                             std::nullopt));
  rows.push_back(run_variant("image-only", train_set, test_set, options, 0.0,
                             HeadMode::Full, Modality::Text));
  rows.push_back(run_variant("text-only", train_set, test_set, options, 0.0,
                             HeadMode::Full, Modality::Image));
  rows.push_back(run_variant("fusion-no-stack", train_set, test_set, options, p,
                             HeadMode::FusionOnly, std::nullopt));
  rows.push_back(run_variant("no-masking", train_set, test_set, options, 0.0,
                             HeadMode::Full, std::nullopt));
  for (const AblationRow& ref : paper_reference_rows()) rows.push_back(ref);
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out << "model,accuracy,recall,f1,source\n";
  for (const AblationRow& row : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%s", row.model.c_str(), row.accuracy,
                  row.recall, row.f1, row.from_paper ? "paper" : "run");
    out << buf << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write to " + path + " failed");
}

}  // namespace flexmt
