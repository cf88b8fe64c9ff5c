#pragma once

#include "mcmt/core_types.hpp"

#include <string>
#include <vector>

namespace mcmt {

/// Percentage of queries whose prediction has IoU strictly greater than m.
double rank1_at_iou(const std::vector<Moment>& preds, const std::vector<Moment>& gts,
                    double m);

/// 100 x mean IoU.
double mean_iou(const std::vector<Moment>& preds, const std::vector<Moment>& gts);

struct EvaluationReport {
  std::vector<double> thresholds;
  std::vector<double> rank1;  // one per threshold, percent
  double miou = 0.0;          // percent
  std::size_t queries = 0;
};

EvaluationReport evaluate(const std::vector<Moment>& preds, const std::vector<Moment>& gts,
                          const std::vector<double>& thresholds);

/// Whitespace-aligned table: a header row `Model IoU=0.3 ... mIoU` and one
/// result row labelled `label`.
std::string format_report(const EvaluationReport& report, const std::string& label);

}  // namespace mcmt
