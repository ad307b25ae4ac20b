// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "flexmt/model.hpp"
#include "flexmt/tensor.hpp"

namespace flexmt {

// Checkpoint layout: 4-byte magic "FMT1", one version byte, a little-endian
// u32 manifest length, a JSON manifest (model config, optional optimizer
// scalars, tensor name -> shape and byte offset), then raw little-endian
// 64-bit floats. Loaders reject unknown versions and truncated files.

inline constexpr char kCheckpointMagic[4] = {'F', 'M', 'T', '1'};
inline constexpr unsigned char kCheckpointVersion = 1;

// Pass adam to persist optimizer moments alongside the parameters.
void save_checkpoint(Model& model, const std::string& path,
                     const AdamState* adam = nullptr);

// Rebuild a model from the config stored in the checkpoint.
std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       AdamState* adam = nullptr);

// Load parameters into an existing model; every model tensor must appear in
// the file with an identical shape, otherwise the first mismatch is named.
void load_checkpoint_into(Model& model, const std::string& path,
                          AdamState* adam = nullptr);

}  // namespace flexmt
