// SPDX-License-Identifier: Apache-2.0
#include "flexmt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "flexmt/error.hpp"

namespace flexmt {

namespace {

using nlohmann::json;

void put_f64le(std::string& buf, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64le(const std::string& buf, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[offset + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

json config_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},
              {"d_ff", c.d_ff},
              {"vocab", c.vocab},
              {"max_len", c.max_len},
              {"num_classes", c.num_classes},
              {"n_experts", c.n_experts},
              {"conv_channels", c.conv_channels},
              {"fusion_hidden1", c.fusion_hidden1},
              {"fusion_hidden2", c.fusion_hidden2},
              {"fused_dim", c.fused_dim}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.n_experts = j.at("n_experts").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.fusion_hidden1 = j.at("fusion_hidden1").get<int>();
  c.fusion_hidden2 = j.at("fusion_hidden2").get<int>();
  c.fused_dim = j.at("fused_dim").get<int>();
  return c;
}

struct ParsedCheckpoint {
  json manifest;
  std::string data;  // raw float64 section
};

ParsedCheckpoint read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 9) fail(ErrorKind::Format, path + ": truncated checkpoint header");
  if (bytes.compare(0, 4, kCheckpointMagic, 4) != 0)
    fail(ErrorKind::Format, path + ": bad magic, not a checkpoint");
  const unsigned char version = static_cast<unsigned char>(bytes[4]);
  if (version != kCheckpointVersion)
    fail(ErrorKind::Format,
         path + ": unsupported checkpoint version " + std::to_string(version));
  std::uint32_t manifest_len = 0;
  for (int i = 0; i < 4; ++i)
    manifest_len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[5 + i])) << (8 * i);
  if (bytes.size() < 9 + static_cast<std::size_t>(manifest_len))
    fail(ErrorKind::Format, path + ": truncated manifest");
  ParsedCheckpoint parsed;
  parsed.manifest = json::parse(bytes.substr(9, manifest_len), nullptr,
                                /*allow_exceptions=*/false);
  if (parsed.manifest.is_discarded())
    fail(ErrorKind::Format, path + ": manifest is not valid JSON");
  parsed.data = bytes.substr(9 + manifest_len);
  return parsed;
}

void read_tensor(const ParsedCheckpoint& parsed, const json& entry, Tensor& dst,
                 const std::string& path) {
  const std::size_t offset = entry.at("offset").get<std::size_t>();
  const std::size_t bytes = dst.size() * 8;
  if (offset + bytes > parsed.data.size())
    fail(ErrorKind::Format, path + ": truncated data for tensor " +
                                entry.at("name").get<std::string>());
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst.values()[i] = get_f64le(parsed.data, offset + i * 8);
}

const json* find_tensor(const json& manifest, const std::string& name) {
  for (const json& entry : manifest.at("tensors"))
    if (entry.at("name").get<std::string>() == name) return &entry;
  return nullptr;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path, const AdamState* adam) {
  json manifest;
  manifest["config"] = config_to_json(model.config());
  json tensors = json::array();
  std::string data;
  auto append = [&](const std::string& name, const Tensor& t) {
    tensors.push_back(json{{"name", name},
                           {"rows", t.rows()},
                           {"cols", t.cols()},
                           {"offset", data.size()}});
    for (double v : t.values()) put_f64le(data, v);
  };
  auto& params = model.named_parameters();
  for (auto& [name, tensor] : params) append(name, tensor);
  if (adam) {
    if (adam->first_moment.size() != params.size())
      fail(ErrorKind::Dimension, "optimizer state does not match model parameters");
    manifest["optimizer"] = json{{"step_count", adam->step_count},
                                 {"lr", adam->lr},
                                 {"beta1", adam->beta1},
                                 {"beta2", adam->beta2},
                                 {"eps", adam->eps}};
    for (std::size_t i = 0; i < params.size(); ++i) {
      append("adam.m." + params[i].first, adam->first_moment[i]);
      append("adam.v." + params[i].first, adam->second_moment[i]);
    }
  }
  manifest["tensors"] = std::move(tensors);
  const std::string manifest_bytes = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 4);
  out.put(static_cast<char>(kCheckpointVersion));
  const std::uint32_t len = static_cast<std::uint32_t>(manifest_bytes.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
  out.write(manifest_bytes.data(), static_cast<std::streamsize>(manifest_bytes.size()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::Io, "write to " + path + " failed");
}

void load_checkpoint_into(Model& model, const std::string& path, AdamState* adam) {
  ParsedCheckpoint parsed = read_file(path);
  auto stored = config_from_json(parsed.manifest.at("config"));
  auto& params = model.named_parameters();
  for (auto& [name, tensor] : params) {
    const json* entry = find_tensor(parsed.manifest, name);
    if (!entry)
      fail(ErrorKind::Incompatible, path + ": checkpoint is missing tensor " + name);
    const int rows = entry->at("rows").get<int>();
    const int cols = entry->at("cols").get<int>();
    if (rows != tensor.rows() || cols != tensor.cols())
      fail(ErrorKind::Incompatible,
           path + ": tensor " + name + " is " + std::to_string(rows) + "x" +
               std::to_string(cols) + " in the checkpoint but " + tensor.shape_str() +
               " in the model");
  }
  if (stored != model.config())
    fail(ErrorKind::Incompatible, path + ": checkpoint config differs from model config");
  for (auto& [name, tensor] : params)
    read_tensor(parsed, *find_tensor(parsed.manifest, name), tensor, path);
  if (adam) {
    if (!parsed.manifest.contains("optimizer"))
      fail(ErrorKind::Incompatible, path + ": checkpoint carries no optimizer state");
    const json& opt = parsed.manifest.at("optimizer");
    AdamState state = AdamState::init(model.parameters(), opt.at("lr").get<double>(),
                                      opt.at("beta1").get<double>(),
                                      opt.at("beta2").get<double>(),
                                      opt.at("eps").get<double>());
    state.step_count = opt.at("step_count").get<long long>();
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (auto [prefix, moments] :
           {std::pair{"adam.m.", &state.first_moment},
            std::pair{"adam.v.", &state.second_moment}}) {
        const std::string name = prefix + params[i].first;
        const json* entry = find_tensor(parsed.manifest, name);
        if (!entry) fail(ErrorKind::Incompatible, path + ": missing " + name);
        read_tensor(parsed, *entry, (*moments)[i], path);
      }
    }
    *adam = std::move(state);
  }
}

std::unique_ptr<Model> load_checkpoint(const std::string& path, AdamState* adam) {
  ParsedCheckpoint parsed = read_file(path);
  ModelConfig config = config_from_json(parsed.manifest.at("config"));
  auto model = std::make_unique<Model>(config, /*seed=*/0);
  load_checkpoint_into(*model, path, adam);
  return model;
}

}  // namespace flexmt
