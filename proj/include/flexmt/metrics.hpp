// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace flexmt {

// Binary confusion tallies; the positive class is label 1.
struct ConfusionCounts {
  long long tp = 0;
  long long tn = 0;
  long long fp = 0;
  long long fn = 0;

  long long total() const { return tp + tn + fp + fn; }
  void add(int actual, int predicted);
};

// Strict metric functions: each throws an undefined-metric error when its
// denominator is zero.
double accuracy(const ConfusionCounts& c);   // (TP + TN) / N
double recall(const ConfusionCounts& c);     // TP / (TP + FN)
double precision(const ConfusionCounts& c);  // TP / (TP + FP)
// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

struct MetricReport {
  std::string model_name;
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  long long n_eval = 0;
};

// Report with the total conventions used in CSV output: undefined precision
// or recall collapse to 0 rather than throwing.
MetricReport make_report(const std::string& model_name, const ConfusionCounts& c);

// CSV with header `model,accuracy,recall,f1,n_eval`; fractions at 4 decimals.
void write_report_csv(const std::string& path, const std::vector<MetricReport>& rows);
std::string report_row(const MetricReport& row);

}  // namespace flexmt
