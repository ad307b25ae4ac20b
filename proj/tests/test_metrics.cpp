// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "flexmt/error.hpp"
#include "flexmt/metrics.hpp"
#include "flexmt/rng.hpp"
#include "oracles.hpp"

using namespace flexmt;

TEST_CASE("accuracy worked example: TP=3 TN=4 N=10 -> 0.7") {
  ConfusionCounts c{3, 4, 2, 1};
  CHECK(accuracy(c) == 0.7);
  ConfusionCounts all_right{6, 4, 0, 0};
  CHECK(accuracy(all_right) == 1.0);
}

TEST_CASE("recall worked example: TP=9 FN=1 -> 0.9") {
  ConfusionCounts c;
  c.tp = 9;
  c.fn = 1;
  CHECK(recall(c) == 0.9);
  c.fn = 0;
  CHECK(recall(c) == 1.0);
}

TEST_CASE("f1 worked example: p=0.8 r=0.9 -> 0.8471") {
  CHECK(f1_score(0.8, 0.9) == doctest::Approx(0.847058823529).epsilon(1e-10));
  CHECK(f1_score(1.0, 1.0) == 1.0);
  CHECK(f1_score(0.0, 0.0) == 0.0);  // defined as 0 by rule
  CHECK(f1_score(0.0, 0.9) == 0.0);
}

TEST_CASE("undefined metrics raise errors") {
  ConfusionCounts empty;
  CHECK_THROWS_AS(accuracy(empty), Error);
  ConfusionCounts no_pos{0, 5, 2, 0};
  CHECK_THROWS_AS(recall(no_pos), Error);
  ConfusionCounts no_pred{0, 5, 0, 2};
  CHECK_THROWS_AS(precision(no_pred), Error);
  try {
    accuracy(empty);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedMetric);
  }
}

TEST_CASE("counts and metrics match the tally oracle on 1000 random scenarios") {
  Rng rng(1234);
  for (int scenario = 0; scenario < 1000; ++scenario) {
    const int n = 1 + static_cast<int>(rng.index(40));
    std::vector<int> actual(n), predicted(n);
    for (int i = 0; i < n; ++i) {
      actual[i] = static_cast<int>(rng.index(2));
      predicted[i] = static_cast<int>(rng.index(2));
    }
    ConfusionCounts counts;
    for (int i = 0; i < n; ++i) counts.add(actual[i], predicted[i]);
    oracle::Tally want = oracle::tally_reference(actual, predicted);
    CHECK(counts.tp == want.tp);
    CHECK(counts.tn == want.tn);
    CHECK(counts.fp == want.fp);
    CHECK(counts.fn == want.fn);

    // metric values agree exactly with the oracle-side arithmetic
    CHECK(accuracy(counts) ==
          static_cast<double>(want.tp + want.tn) /
              static_cast<double>(want.tp + want.tn + want.fp + want.fn));
    if (want.tp + want.fn > 0)
      CHECK(recall(counts) ==
            static_cast<double>(want.tp) / static_cast<double>(want.tp + want.fn));
    if (want.tp + want.fp > 0)
      CHECK(precision(counts) ==
            static_cast<double>(want.tp) / static_cast<double>(want.tp + want.fp));
  }
}

TEST_CASE("multi-class counts treat class 1 as the positive class") {
  ConfusionCounts counts;
  counts.add(1, 1);  // tp
  counts.add(2, 1);  // fp (actual not positive, predicted positive)
  counts.add(1, 0);  // fn
  counts.add(0, 2);  // tn (neither is class 1)
  CHECK(counts.tp == 1);
  CHECK(counts.fp == 1);
  CHECK(counts.fn == 1);
  CHECK(counts.tn == 1);
}

TEST_CASE("reports keep f1 consistent with precision and recall") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionCounts c{static_cast<long long>(rng.index(20)),
                      static_cast<long long>(rng.index(20)),
                      static_cast<long long>(rng.index(20)),
                      static_cast<long long>(rng.index(20))};
    if (c.total() == 0) continue;
    MetricReport r = make_report("m", c);
    CHECK(std::abs(r.f1 - f1_score(r.precision, r.recall)) < 1e-12);
    CHECK(r.n_eval == c.total());
  }
}

TEST_CASE("report CSV format: header, four decimals, n_eval") {
  ConfusionCounts c{45, 40, 5, 10};
  MetricReport r = make_report("demo", c);
  const std::string path = "/tmp/flexmt_metrics_report.csv";
  write_report_csv(path, {r});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "model,accuracy,recall,f1,n_eval");
  CHECK(row == "demo,0.8500,0.8182,0.8571,100");
}
