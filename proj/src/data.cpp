// SPDX-License-Identifier: Apache-2.0
#include "flexmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "flexmt/error.hpp"
#include "flexmt/rng.hpp"

namespace flexmt {

void Record::validate(int num_classes) const {
  if (has_image != !image.empty())
    fail(ErrorKind::Validation, "record " + id + ": has_image flag disagrees with image field");
  if (has_text != !text.empty())
    fail(ErrorKind::Validation, "record " + id + ": has_text flag disagrees with text field");
  if (!has_image && !has_text)
    fail(ErrorKind::Validation, "record " + id + ": both modalities absent");
  if (has_image && image.size() != 256)
    fail(ErrorKind::Validation, "record " + id + ": image has " +
                                    std::to_string(image.size()) + " values, expected 256");
  for (double v : image)
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorKind::Validation, "record " + id + ": image value outside [0, 1]");
  if (label < 0 || (num_classes > 0 && label >= num_classes))
    fail(ErrorKind::Validation, "record " + id + ": label " + std::to_string(label) +
                                    " out of range");
  for (int t : text)
    if (t < 0) fail(ErrorKind::Validation, "record " + id + ": negative token id");
}

void GenConfig::validate() const {
  if (n < 1) fail(ErrorKind::InvalidArgument, "record count must be >= 1");
  if (noise < 0.0) fail(ErrorKind::InvalidArgument, "noise must be >= 0");
  if (missing_rate < 0.0 || missing_rate >= 1.0)
    fail(ErrorKind::InvalidArgument, "missing_rate must lie in [0, 1)");
  if (vocab < 2) fail(ErrorKind::InvalidArgument, "vocab must be >= 2");
  if (text_len < 1) fail(ErrorKind::InvalidArgument, "text_len must be >= 1");
  if (num_classes < 2) fail(ErrorKind::InvalidArgument, "num_classes must be >= 2");
}

std::vector<double> class_template(int label, int num_classes) {
  constexpr int kGrid = 16;
  std::vector<double> grid(kGrid * kGrid, 0.22);
  // Class 0 keeps the plain low-intensity field. Later classes add a motif:
  // a bright centred disc ("opacity"), a vertical band, a horizontal band,
  // a diagonal, a corner block. Motifs cycle past five classes.
  const int motif = label == 0 ? 0 : 1 + (label - 1) % 5;
  for (int r = 0; r < kGrid; ++r) {
    for (int c = 0; c < kGrid; ++c) {
      bool lit = false;
      switch (motif) {
        case 1: {
          const double dr = r - 7.5, dc = c - 7.5;
          lit = dr * dr + dc * dc <= 4.5 * 4.5;
          break;
        }
        case 2: lit = c >= 6 && c <= 9; break;
        case 3: lit = r >= 6 && r <= 9; break;
        case 4: lit = std::abs(r - c) <= 1; break;
        case 5: lit = r < 6 && c < 6; break;
        default: break;
      }
      if (lit) grid[r * kGrid + c] = 0.82;
    }
  }
  (void)num_classes;
  return grid;
}

namespace {

// Per-class token weights: the class's own token band is favoured, the rest
// stays uniform, so classes overlap and text is a weaker channel than the
// image (roughly 0.8 Bayes accuracy at the default text length).
std::vector<double> token_weights(int label, int num_classes, int vocab) {
  std::vector<double> w(vocab, 1.0);
  for (int t = 0; t < vocab; ++t)
    if (t % num_classes == label % num_classes) w[t] = 2.0;
  return w;
}

Record make_record(const GenConfig& config, int index) {
  Record rec;
  char buf[16];
  std::snprintf(buf, sizeof buf, "r%06d", index);
  rec.id = buf;
  rec.label = index % config.num_classes;

  Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(index));

  rec.image = class_template(rec.label, config.num_classes);
  for (double& v : rec.image) {
    v += rng.gaussian() * config.noise;
    v = std::clamp(v, 0.0, 1.0);
  }
  rec.has_image = true;

  const std::vector<double> weights = token_weights(rec.label, config.num_classes, config.vocab);
  rec.text.resize(config.text_len);
  for (int& t : rec.text) t = static_cast<int>(rng.categorical(weights));
  rec.has_text = true;

  if (rng.uniform() < config.missing_rate) {
    if (rng.uniform() < 0.5) {
      rec.image.clear();
      rec.has_image = false;
    } else {
      rec.text.clear();
      rec.has_text = false;
    }
  }
  return rec;
}

}  // namespace

std::vector<Record> generate(const GenConfig& config) {
  config.validate();
  std::vector<Record> records;
  records.reserve(config.n);
  for (int i = 0; i < config.n; ++i) records.push_back(make_record(config, i));
  return records;
}

void save_records(const std::vector<Record>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  for (const Record& rec : records) {
    rec.validate();
    nlohmann::json j;
    j["id"] = rec.id;
    j["label"] = rec.label;
    j["has_image"] = rec.has_image;
    j["has_text"] = rec.has_text;
    if (rec.has_image) j["image"] = rec.image;
    if (rec.has_text) j["text"] = rec.text;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write to " + path + " failed");
}

std::vector<Record> load_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  static const std::set<std::string> kKnown = {"id", "label", "image",
                                               "text", "has_image", "has_text"};
  std::vector<Record> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": malformed record");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!kKnown.count(it.key()))
        fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": unknown field '" +
                                   it.key() + "'");
    Record rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.label = j.at("label").get<int>();
      rec.has_image = j.at("has_image").get<bool>();
      rec.has_text = j.at("has_text").get<bool>();
      if (j.contains("image")) rec.image = j.at("image").get<std::vector<double>>();
      if (j.contains("text")) rec.text = j.at("text").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse,
           path + ":" + std::to_string(line_no) + ": " + std::string(e.what()));
    }
    rec.validate();
    records.push_back(std::move(rec));
  }
  return records;
}

// Stratified by label so the class priors of both parts stay close to the
// dataset's. Deterministic: groups shuffle in label order, the leftover
// train slots go to the groups with the largest fractional remainders, and
// both parts get a final seeded shuffle.
std::pair<std::vector<Record>, std::vector<Record>> split(const std::vector<Record>& records,
                                                          const SplitSpec& spec) {
  if (records.size() < 2)
    fail(ErrorKind::InvalidArgument, "split needs at least 2 records, got " +
                                         std::to_string(records.size()));
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    fail(ErrorKind::InvalidArgument, "train_fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label].push_back(i);

  Rng rng(spec.seed);
  for (auto& [label, group] : by_label) rng.shuffle(group);

  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(spec.train_fraction * static_cast<double>(records.size())));
  std::vector<std::size_t> take(by_label.size());
  std::vector<std::pair<double, std::size_t>> remainders;  // (-rem, group) for ordering
  std::size_t assigned = 0, g = 0;
  for (auto& [label, group] : by_label) {
    const double exact = spec.train_fraction * static_cast<double>(group.size());
    take[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += take[g];
    remainders.push_back({-(exact - std::floor(exact)), g});
    ++g;
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t k = 0; assigned < n_train && k < remainders.size(); ++k) {
    const std::size_t gi = remainders[k].second;
    std::size_t group_size = 0, gg = 0;
    for (auto& [label, group] : by_label) {
      if (gg == gi) group_size = group.size();
      ++gg;
    }
    if (take[gi] < group_size) {
      ++take[gi];
      ++assigned;
    }
  }

  std::vector<std::size_t> train_idx, test_idx;
  g = 0;
  for (auto& [label, group] : by_label) {
    for (std::size_t i = 0; i < group.size(); ++i)
      (i < take[g] ? train_idx : test_idx).push_back(group[i]);
    ++g;
  }
  rng.shuffle(train_idx);
  rng.shuffle(test_idx);

  std::pair<std::vector<Record>, std::vector<Record>> parts;
  for (std::size_t i : train_idx) parts.first.push_back(records[i]);
  for (std::size_t i : test_idx) parts.second.push_back(records[i]);
  return parts;
}

}  // namespace flexmt
