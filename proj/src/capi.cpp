// SPDX-License-Identifier: Apache-2.0
#include "flexmt/flexmt.h"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "flexmt/checkpoint.hpp"
#include "flexmt/data.hpp"
#include "flexmt/encoder.hpp"
#include "flexmt/error.hpp"
#include "flexmt/metrics.hpp"
#include "flexmt/model.hpp"
#include "flexmt/train.hpp"

using namespace flexmt;

struct flexmt_dataset {
  std::vector<Record> records;
};

struct flexmt_model {
  std::unique_ptr<Model> model;
};

namespace {

thread_local std::string g_last_error;

flexmt_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return FLEXMT_ERR_INVALID_ARGUMENT;
    case ErrorKind::Dimension: return FLEXMT_ERR_DIMENSION;
    case ErrorKind::Validation: return FLEXMT_ERR_VALIDATION;
    case ErrorKind::Parse: return FLEXMT_ERR_PARSE;
    case ErrorKind::Format: return FLEXMT_ERR_FORMAT;
    case ErrorKind::Incompatible: return FLEXMT_ERR_INCOMPATIBLE;
    case ErrorKind::Io: return FLEXMT_ERR_IO;
    case ErrorKind::Contract: return FLEXMT_ERR_CONTRACT;
    case ErrorKind::UndefinedMetric: return FLEXMT_ERR_UNDEFINED_METRIC;
  }
  return FLEXMT_ERR_INTERNAL;
}

template <typename Fn>
flexmt_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FLEXMT_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FLEXMT_ERR_INTERNAL;
  }
}

flexmt_status require(bool ok, const char* message) {
  if (ok) return FLEXMT_OK;
  g_last_error = message;
  return FLEXMT_ERR_INVALID_ARGUMENT;
}

std::optional<Modality> to_modality(flexmt_drop drop) {
  switch (drop) {
    case FLEXMT_DROP_IMAGE: return Modality::Image;
    case FLEXMT_DROP_TEXT: return Modality::Text;
    default: return std::nullopt;
  }
}

ModelConfig to_model_config(const flexmt_model_config& c) {
  ModelConfig out;
  out.d_model = c.d_model;
  out.n_heads = c.n_heads;
  out.n_layers = c.n_layers;
  out.d_ff = c.d_ff;
  out.vocab = c.vocab;
  out.max_len = c.max_len;
  out.num_classes = c.num_classes;
  out.n_experts = c.n_experts;
  out.conv_channels = c.conv_channels;
  out.fusion_hidden1 = c.fusion_hidden1;
  out.fusion_hidden2 = c.fusion_hidden2;
  out.fused_dim = c.fused_dim;
  return out;
}

TrainConfig to_train_config(const flexmt_train_config& c) {
  TrainConfig out;
  out.epochs = c.epochs;
  out.batch_size = c.batch_size;
  out.lr = c.lr;
  out.p_drop = c.p_drop;
  out.seed = c.seed;
  out.aux_loss_weight = c.aux_loss_weight;
  return out;
}

flexmt_metrics to_metrics(const ConfusionCounts& counts) {
  MetricReport report = make_report("", counts);
  flexmt_metrics m;
  m.tp = counts.tp;
  m.tn = counts.tn;
  m.fp = counts.fp;
  m.fn = counts.fn;
  m.n_eval = report.n_eval;
  m.accuracy = report.accuracy;
  m.recall = report.recall;
  m.precision = report.precision;
  m.f1 = report.f1;
  return m;
}

}  // namespace

extern "C" {

const char* flexmt_last_error(void) { return g_last_error.c_str(); }

void flexmt_model_config_init(flexmt_model_config* config) {
  if (!config) return;
  ModelConfig d;
  *config = {d.d_model, d.n_heads, d.n_layers, d.d_ff, d.vocab, d.max_len,
             d.num_classes, d.n_experts, d.conv_channels, d.fusion_hidden1,
             d.fusion_hidden2, d.fused_dim};
}

void flexmt_gen_config_init(flexmt_gen_config* config) {
  if (!config) return;
  GenConfig d;
  *config = {d.n, d.seed, d.noise, d.missing_rate, d.vocab, d.text_len, d.num_classes};
}

void flexmt_train_config_init(flexmt_train_config* config) {
  if (!config) return;
  TrainConfig d;
  *config = {d.epochs, d.batch_size, d.lr, d.p_drop, d.seed, d.aux_loss_weight};
}

flexmt_status flexmt_dataset_generate(const flexmt_gen_config* config,
                                      flexmt_dataset** out) {
  if (auto s = require(config && out, "config and out must be non-null")) return s;
  return guarded([&] {
    GenConfig g;
    g.n = config->n;
    g.seed = config->seed;
    g.noise = config->noise;
    g.missing_rate = config->missing_rate;
    g.vocab = config->vocab;
    g.text_len = config->text_len;
    g.num_classes = config->num_classes;
    *out = new flexmt_dataset{generate(g)};
  });
}

flexmt_status flexmt_dataset_load(const char* path, flexmt_dataset** out) {
  if (auto s = require(path && out, "path and out must be non-null")) return s;
  return guarded([&] { *out = new flexmt_dataset{load_records(path)}; });
}

flexmt_status flexmt_dataset_save(const flexmt_dataset* dataset, const char* path) {
  if (auto s = require(dataset && path, "dataset and path must be non-null")) return s;
  return guarded([&] { save_records(dataset->records, path); });
}

int flexmt_dataset_size(const flexmt_dataset* dataset) {
  return dataset ? static_cast<int>(dataset->records.size()) : 0;
}

flexmt_status flexmt_dataset_class_counts(const flexmt_dataset* dataset, int* counts,
                                          int num_classes) {
  if (auto s = require(dataset && counts && num_classes > 0, "bad arguments")) return s;
  return guarded([&] {
    for (int i = 0; i < num_classes; ++i) counts[i] = 0;
    for (const Record& rec : dataset->records) {
      if (rec.label < 0 || rec.label >= num_classes)
        fail(ErrorKind::Validation, "record " + rec.id + ": label " +
                                        std::to_string(rec.label) + " outside [0, " +
                                        std::to_string(num_classes) + ")");
      ++counts[rec.label];
    }
  });
}

flexmt_status flexmt_dataset_split(const flexmt_dataset* dataset, double train_fraction,
                                   uint64_t seed, flexmt_dataset** train_out,
                                   flexmt_dataset** test_out) {
  if (auto s = require(dataset && train_out && test_out, "bad arguments")) return s;
  return guarded([&] {
    auto [train_set, test_set] = split(dataset->records, SplitSpec{train_fraction, seed});
    *train_out = new flexmt_dataset{std::move(train_set)};
    *test_out = new flexmt_dataset{std::move(test_set)};
  });
}

void flexmt_dataset_free(flexmt_dataset* dataset) { delete dataset; }

flexmt_status flexmt_model_create(const flexmt_model_config* config, uint64_t seed,
                                  flexmt_model** out) {
  if (auto s = require(config && out, "config and out must be non-null")) return s;
  return guarded([&] {
    *out = new flexmt_model{std::make_unique<Model>(to_model_config(*config), seed)};
  });
}

flexmt_status flexmt_model_save(flexmt_model* model, const char* path) {
  if (auto s = require(model && path, "model and path must be non-null")) return s;
  return guarded([&] { save_checkpoint(*model->model, path); });
}

flexmt_status flexmt_model_load(const char* path, flexmt_model** out) {
  if (auto s = require(path && out, "path and out must be non-null")) return s;
  return guarded([&] { *out = new flexmt_model{load_checkpoint(path)}; });
}

void flexmt_model_free(flexmt_model* model) { delete model; }

flexmt_status flexmt_train(flexmt_model* model, const flexmt_dataset* dataset,
                           const flexmt_train_config* config,
                           flexmt_epoch_callback on_epoch, void* user) {
  if (auto s = require(model && dataset && config, "bad arguments")) return s;
  return guarded([&] {
    EpochCallback cb;
    if (on_epoch)
      cb = [on_epoch, user](int epoch, double mean_loss) { on_epoch(epoch, mean_loss, user); };
    train(*model->model, dataset->records, to_train_config(*config), cb);
  });
}

flexmt_status flexmt_evaluate(const flexmt_model* model, const flexmt_dataset* dataset,
                              flexmt_drop forced_drop, flexmt_metrics* out) {
  if (auto s = require(model && dataset && out, "bad arguments")) return s;
  return guarded([&] {
    *out = to_metrics(evaluate(*model->model, dataset->records, to_modality(forced_drop)));
  });
}

flexmt_status flexmt_eval_report(const flexmt_model* model, const flexmt_dataset* dataset,
                                 flexmt_drop forced_drop, const char* model_name,
                                 const char* report_path, flexmt_metrics* out) {
  if (auto s = require(model && dataset && model_name && report_path, "bad arguments"))
    return s;
  return guarded([&] {
    ConfusionCounts counts =
        evaluate(*model->model, dataset->records, to_modality(forced_drop));
    MetricReport report = make_report(model_name, counts);
    write_report_csv(report_path, {report});
    if (out) *out = to_metrics(counts);
  });
}

flexmt_status flexmt_ablate(const flexmt_dataset* dataset,
                            const flexmt_model_config* model_config,
                            const flexmt_train_config* train_config, uint64_t seed,
                            const char* out_csv_path) {
  if (auto s = require(dataset && model_config && train_config && out_csv_path,
                       "bad arguments"))
    return s;
  return guarded([&] {
    AblateOptions options;
    options.model = to_model_config(*model_config);
    options.train = to_train_config(*train_config);
    options.seed = seed;
    write_ablation_csv(out_csv_path, ablate(dataset->records, options));
  });
}

flexmt_status flexmt_mask_render(int n_img, int n_txt, flexmt_task task,
                                 flexmt_drop dropped, char* buf, size_t cap,
                                 size_t* needed) {
  if (auto s = require(n_img >= 0 && n_txt >= 0, "token counts must be >= 0")) return s;
  return guarded([&] {
    std::vector<TokenTag> tags;
    tags.push_back(TokenTag::ImageCls);
    for (int i = 0; i < n_img; ++i) tags.push_back(TokenTag::Image);
    tags.push_back(TokenTag::TextCls);
    for (int i = 0; i < n_txt; ++i) tags.push_back(TokenTag::Text);
    Task t = task == FLEXMT_TASK_JOINT      ? Task::Joint
             : task == FLEXMT_TASK_IMAGE_ONLY ? Task::ImageOnly
                                              : Task::TextOnly;
    const std::string text = render_mask_ascii(tags, t, to_modality(dropped));
    if (needed) *needed = text.size() + 1;
    if (buf && cap > 0) {
      const size_t n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

}  // extern "C"
