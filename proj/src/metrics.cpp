// SPDX-License-Identifier: Apache-2.0
#include "flexmt/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "flexmt/error.hpp"

namespace flexmt {

void ConfusionCounts::add(int actual, int predicted) {
  const bool actual_pos = actual == 1;
  const bool pred_pos = predicted == 1;
  if (actual_pos && pred_pos) ++tp;
  else if (!actual_pos && !pred_pos) ++tn;
  else if (!actual_pos && pred_pos) ++fp;
  else ++fn;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) fail(ErrorKind::UndefinedMetric, "accuracy undefined: no samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double recall(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0)
    fail(ErrorKind::UndefinedMetric, "recall undefined: no positive samples");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double precision(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0)
    fail(ErrorKind::UndefinedMetric, "precision undefined: no positive predictions");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

MetricReport make_report(const std::string& model_name, const ConfusionCounts& c) {
  MetricReport r;
  r.model_name = model_name;
  r.n_eval = c.total();
  r.accuracy = accuracy(c);
  r.recall = c.tp + c.fn > 0 ? recall(c) : 0.0;
  r.precision = c.tp + c.fp > 0 ? precision(c) : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

std::string report_row(const MetricReport& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%lld", row.model_name.c_str(),
                row.accuracy, row.recall, row.f1, row.n_eval);
  return buf;
}

void write_report_csv(const std::string& path, const std::vector<MetricReport>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out << "model,accuracy,recall,f1,n_eval\n";
  for (const MetricReport& row : rows) out << report_row(row) << '\n';
  if (!out) fail(ErrorKind::Io, "write to " + path + " failed");
}

}  // namespace flexmt
