// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flexmt {

// One multimodal sample. Invariants: has_image <=> image holds 256 values in
// [0, 1]; has_text <=> text is non-empty; at least one modality present.
struct Record {
  std::string id;
  int label = 0;
  std::vector<double> image;  // 16x16 grid flattened, row-major
  std::vector<int> text;      // token ids
  bool has_image = false;
  bool has_text = false;

  void validate(int num_classes = -1) const;
};

struct GenConfig {
  int n = 0;
  std::uint64_t seed = 0;
  double noise = 0.0;          // gaussian stddev added to the class template
  double missing_rate = 0.0;   // chance a record loses one modality
  int vocab = 32;
  int text_len = 12;
  int num_classes = 2;

  void validate() const;
};

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
};

// Class-balanced records, pure function of the config: per class, the image
// is a fixed template grid plus scaled gaussian noise clipped to [0, 1], and
// the text is drawn from a class-specific token distribution that partially
// overlaps across classes (text is informative but weaker than the image).
std::vector<Record> generate(const GenConfig& config);

// Class template grid without noise (exposed for the nearest-template
// oracle used in tests).
std::vector<double> class_template(int label, int num_classes);

// One JSON object per line, UTF-8. Fields: id, label, image?, text?,
// has_image, has_text. Unknown fields are rejected.
void save_records(const std::vector<Record>& records, const std::string& path);
std::vector<Record> load_records(const std::string& path);

// Deterministic shuffle, then |train| = floor(train_fraction * n).
std::pair<std::vector<Record>, std::vector<Record>> split(
    const std::vector<Record>& records, const SplitSpec& spec);

}  // namespace flexmt
