// SPDX-License-Identifier: Apache-2.0
//
// flexmt command line: gen-data, train, eval, ablate, mask-demo. Everything
// goes through the shared-library C API; exit codes are 0 on success, 1 on
// validation/format/runtime errors, 2 on usage errors.
#include <cinttypes>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexmt/flexmt.h"

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

int report_failure(flexmt_status status) {
  std::fprintf(stderr, "error: %s\n", flexmt_last_error());
  return status == FLEXMT_ERR_INVALID_ARGUMENT ? kExitUsage : kExitError;
}

struct DatasetHandle {
  flexmt_dataset* ptr = nullptr;
  ~DatasetHandle() { flexmt_dataset_free(ptr); }
};

struct ModelHandle {
  flexmt_model* ptr = nullptr;
  ~ModelHandle() { flexmt_model_free(ptr); }
};

void add_model_flags(CLI::App* cmd, flexmt_model_config& config) {
  cmd->add_option("--d-model", config.d_model, "embedding width");
  cmd->add_option("--n-heads", config.n_heads, "attention heads");
  cmd->add_option("--n-layers", config.n_layers, "encoder layers");
  cmd->add_option("--d-ff", config.d_ff, "feed-forward width (0 = 4*d-model)");
  cmd->add_option("--vocab", config.vocab, "token vocabulary size");
  cmd->add_option("--max-len", config.max_len, "maximum sequence length");
  cmd->add_option("--classes", config.num_classes, "number of classes");
  cmd->add_option("--experts", config.n_experts, "experts per stacked layer");
  cmd->add_option("--conv-channels", config.conv_channels, "image backbone channels");
  cmd->add_option("--fusion-h1", config.fusion_hidden1, "fusion hidden width 1");
  cmd->add_option("--fusion-h2", config.fusion_hidden2, "fusion hidden width 2");
  cmd->add_option("--fused-dim", config.fused_dim, "fused embedding width");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flexmt: masked-attention multimodal classifier with a stacked "
               "mixture-of-experts head"};
  app.require_subcommand(1);

  // gen-data
  flexmt_gen_config gen_cfg;
  flexmt_gen_config_init(&gen_cfg);
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_option("--n", gen_cfg.n, "record count")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_cfg.seed, "rng seed");
  gen->add_option("--noise", gen_cfg.noise, "image noise stddev")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--missing-rate", gen_cfg.missing_rate, "chance a record loses a modality")
      ->check(CLI::Range(0.0, 0.999999));
  gen->add_option("--vocab", gen_cfg.vocab, "token vocabulary size");
  gen->add_option("--text-len", gen_cfg.text_len, "tokens per record");
  gen->add_option("--classes", gen_cfg.num_classes, "number of classes");

  // train
  flexmt_model_config model_cfg;
  flexmt_model_config_init(&model_cfg);
  flexmt_train_config train_cfg;
  flexmt_train_config_init(&train_cfg);
  std::string train_data, train_out;
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  tr->add_option("--data", train_data, "dataset path")->required();
  tr->add_option("--out", train_out, "checkpoint path")->required();
  tr->add_option("--epochs", train_cfg.epochs, "training epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", train_cfg.batch_size, "records per optimizer step")
      ->check(CLI::PositiveNumber);
  tr->add_option("--lr", train_cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--p-drop", train_cfg.p_drop, "modality dropout probability")
      ->check(CLI::Range(0.0, 1.0));
  tr->add_option("--seed", train_cfg.seed, "rng seed");
  tr->add_option("--aux-loss-weight", train_cfg.aux_loss_weight,
                 "per-task auxiliary loss weight")
      ->check(CLI::NonNegativeNumber);
  add_model_flags(tr, model_cfg);

  // eval
  std::string eval_model, eval_data, eval_report, eval_name = "fmt";
  bool drop_text = false, drop_image = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and write a report");
  ev->add_option("--model", eval_model, "checkpoint path")->required();
  ev->add_option("--data", eval_data, "dataset path")->required();
  ev->add_option("--report", eval_report, "report CSV path")->required();
  ev->add_option("--name", eval_name, "model name column");
  auto* flag_dt = ev->add_flag("--drop-text", drop_text, "mask text for every record");
  ev->add_flag("--drop-image", drop_image, "mask images for every record")
      ->excludes(flag_dt);

  // ablate
  std::string abl_data, abl_out;
  uint64_t abl_seed = 0;
  flexmt_model_config abl_model_cfg;
  flexmt_model_config_init(&abl_model_cfg);
  flexmt_train_config abl_train_cfg;
  flexmt_train_config_init(&abl_train_cfg);
  auto* ab = app.add_subcommand("ablate", "train/evaluate the model family on one split");
  ab->add_option("--data", abl_data, "dataset path")->required();
  ab->add_option("--out", abl_out, "output CSV path")->required();
  ab->add_option("--seed", abl_seed, "split/init seed");
  ab->add_option("--epochs", abl_train_cfg.epochs, "epochs per variant")
      ->check(CLI::PositiveNumber);
  ab->add_option("--batch-size", abl_train_cfg.batch_size, "records per optimizer step")
      ->check(CLI::PositiveNumber);
  ab->add_option("--lr", abl_train_cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  ab->add_option("--p-drop", abl_train_cfg.p_drop, "modality dropout for fmt variants")
      ->check(CLI::Range(0.0, 1.0));
  add_model_flags(ab, abl_model_cfg);

  // mask-demo
  int n_img = 2, n_txt = 2;
  std::string task_name = "joint", drop_name;
  auto* md = app.add_subcommand("mask-demo", "print a modality mask as an ASCII grid");
  md->add_option("--n-img", n_img, "image token count")->check(CLI::NonNegativeNumber);
  md->add_option("--n-txt", n_txt, "text token count")->check(CLI::NonNegativeNumber);
  md->add_option("--task", task_name, "joint | image-only | text-only")
      ->check(CLI::IsMember({"joint", "image-only", "text-only"}));
  md->add_option("--drop", drop_name, "drop a modality: image | text")
      ->check(CLI::IsMember({"image", "text"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  if (gen->parsed()) {
    DatasetHandle ds;
    if (auto s = flexmt_dataset_generate(&gen_cfg, &ds.ptr)) return report_failure(s);
    if (auto s = flexmt_dataset_save(ds.ptr, gen_out.c_str())) return report_failure(s);
    std::printf("records,%d\n", flexmt_dataset_size(ds.ptr));
    std::vector<int> counts(gen_cfg.num_classes, 0);
    if (auto s = flexmt_dataset_class_counts(ds.ptr, counts.data(), gen_cfg.num_classes))
      return report_failure(s);
    for (int c = 0; c < gen_cfg.num_classes; ++c)
      std::printf("class,%d,count,%d\n", c, counts[c]);
    return 0;
  }

  if (tr->parsed()) {
    DatasetHandle ds;
    if (auto s = flexmt_dataset_load(train_data.c_str(), &ds.ptr)) return report_failure(s);
    ModelHandle model;
    if (auto s = flexmt_model_create(&model_cfg, train_cfg.seed, &model.ptr))
      return report_failure(s);
    auto print_epoch = [](int epoch, double mean_loss, void*) {
      std::printf("epoch,%d,loss,%.4f\n", epoch, mean_loss);
    };
    if (auto s = flexmt_train(model.ptr, ds.ptr, &train_cfg, print_epoch, nullptr))
      return report_failure(s);
    if (auto s = flexmt_model_save(model.ptr, train_out.c_str())) return report_failure(s);
    return 0;
  }

  if (ev->parsed()) {
    ModelHandle model;
    if (auto s = flexmt_model_load(eval_model.c_str(), &model.ptr)) return report_failure(s);
    DatasetHandle ds;
    if (auto s = flexmt_dataset_load(eval_data.c_str(), &ds.ptr)) return report_failure(s);
    const flexmt_drop drop = drop_text ? FLEXMT_DROP_TEXT
                             : drop_image ? FLEXMT_DROP_IMAGE
                                          : FLEXMT_DROP_NONE;
    flexmt_metrics m;
    if (auto s = flexmt_eval_report(model.ptr, ds.ptr, drop, eval_name.c_str(),
                                    eval_report.c_str(), &m))
      return report_failure(s);
    std::printf("%s,%.4f,%.4f,%.4f,%lld\n", eval_name.c_str(), m.accuracy, m.recall, m.f1,
                m.n_eval);
    return 0;
  }

  if (ab->parsed()) {
    DatasetHandle ds;
    if (auto s = flexmt_dataset_load(abl_data.c_str(), &ds.ptr)) return report_failure(s);
    abl_train_cfg.seed = abl_seed;
    if (auto s = flexmt_ablate(ds.ptr, &abl_model_cfg, &abl_train_cfg, abl_seed,
                               abl_out.c_str()))
      return report_failure(s);
    std::printf("wrote,%s\n", abl_out.c_str());
    return 0;
  }

  if (md->parsed()) {
    const flexmt_task task = task_name == "joint"        ? FLEXMT_TASK_JOINT
                             : task_name == "image-only" ? FLEXMT_TASK_IMAGE_ONLY
                                                         : FLEXMT_TASK_TEXT_ONLY;
    const flexmt_drop drop = drop_name == "image" ? FLEXMT_DROP_IMAGE
                             : drop_name == "text" ? FLEXMT_DROP_TEXT
                                                   : FLEXMT_DROP_NONE;
    size_t needed = 0;
    if (auto s = flexmt_mask_render(n_img, n_txt, task, drop, nullptr, 0, &needed))
      return report_failure(s);
    std::vector<char> buf(needed);
    if (auto s = flexmt_mask_render(n_img, n_txt, task, drop, buf.data(), buf.size(),
                                    &needed))
      return report_failure(s);
    std::fputs(buf.data(), stdout);
    return 0;
  }

  return kExitUsage;
}
