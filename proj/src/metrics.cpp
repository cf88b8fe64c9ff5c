#include "mcmt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace mcmt {

namespace {

void check_aligned(const std::vector<Moment>& preds, const std::vector<Moment>& gts) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(preds.size()) +
                                " predictions for " + std::to_string(gts.size()) +
                                " ground-truth moments");
  }
  if (preds.empty()) throw std::invalid_argument("metrics: no queries to score");
}

}  // namespace

double rank1_at_iou(const std::vector<Moment>& preds, const std::vector<Moment>& gts,
                    double m) {
  check_aligned(preds, gts);
  if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("metrics: threshold must lie in (0,1)");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (iou(preds[i], gts[i]) > m) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mean_iou(const std::vector<Moment>& preds, const std::vector<Moment>& gts) {
  check_aligned(preds, gts);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += iou(preds[i], gts[i]);
  return 100.0 * total / static_cast<double>(preds.size());
}

EvaluationReport evaluate(const std::vector<Moment>& preds, const std::vector<Moment>& gts,
                          const std::vector<double>& thresholds) {
  EvaluationReport r;
  r.thresholds = thresholds;
  for (double m : thresholds) r.rank1.push_back(rank1_at_iou(preds, gts, m));
  r.miou = mean_iou(preds, gts);
  r.queries = preds.size();
  return r;
}

std::string format_report(const EvaluationReport& report, const std::string& label) {
  std::string head = "Model";
  std::string row = label;
  const std::size_t width = std::max<std::size_t>(label.size(), 5) + 2;
  head.resize(width, ' ');
  row.resize(width, ' ');
  char buf[64];
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "IoU=%g", report.thresholds[i]);
    std::string col = buf;
    col.resize(10, ' ');
    head += col;
    std::snprintf(buf, sizeof(buf), "%-10.2f", report.rank1[i]);
    row += buf;
  }
  head += "mIoU";
  std::snprintf(buf, sizeof(buf), "%.2f", report.miou);
  row += buf;
  return head + "\n" + row + "\n";
}

}  // namespace mcmt
