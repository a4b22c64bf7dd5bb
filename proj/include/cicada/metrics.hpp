#pragma once

#include <vector>

#include "cicada/errors.hpp"

namespace cicada {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

// Binary precision/recall/F1; labels and predictions are 0/1.
Prf prf(const std::vector<int>& pred, const std::vector<int>& label);

// Area under the ROC curve with the tie convention score_pos == score_neg
// counting 1/2 (midrank statistic).  Throws SingleClass when labels contain
// only one class.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision: descending-score sweep, ties processed as one group,
// summing precision-after-group times the recall step.  Throws NoPositives
// when labels contain no 1s.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

// Point-adjustment protocol: any hit inside a contiguous true-anomaly run
// marks the whole run detected.  Returns the adjusted predictions.
std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& label);

// Threshold maximizing F1 under y = 1 iff score > C, searched over midpoints
// between consecutive distinct sorted scores.
double max_f1_threshold(const std::vector<double>& scores, const std::vector<int>& labels);

// q-th percentile (0..100) with linear interpolation between order statistics.
double percentile(const std::vector<double>& scores, double q);

std::vector<int> apply_threshold(const std::vector<double>& scores, double c);

}  // namespace cicada
