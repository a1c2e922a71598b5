#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omcl/error.hpp"

namespace omcl {

// Marker for samples whose true class was never seen in training.
constexpr int kUnknownClass = -1;

// One test sample after scoring. predicted_class is always a known class in
// 1..C; true_class is 1..C or kUnknownClass.
struct ScoredPrediction {
  double known_score = 0.0;
  int predicted_class = 0;
  int true_class = 0;
};

// Fraction of known-class samples whose prediction matches the true class.
double closed_accuracy(const std::vector<ScoredPrediction>& preds);

// Rank-based (Mann-Whitney) area under the ROC curve, treating known
// samples as positives. Ties get mid-ranks, i.e. count one half.
double auroc(const std::vector<double>& known_scores,
             const std::vector<double>& unknown_scores);

struct CurvePoint {
  double threshold;
  double fpr;
  double ccr;  // holds the true-positive rate for ROC exports
};

// Sweeps the score threshold over all distinct scores, descending, with
// score >= threshold counting as accepted. CCR counts known samples that
// are both correct and accepted; FPR counts accepted unknowns. The area is
// trapezoidal over the staircase, extended to FPR = 0 at the strictest
// threshold and to FPR = 1.
double oscr(const std::vector<ScoredPrediction>& preds);
std::vector<CurvePoint> oscr_curve(const std::vector<ScoredPrediction>& preds);
std::vector<CurvePoint> roc_curve(const std::vector<double>& known_scores,
                                  const std::vector<double>& unknown_scores);
double area_under(const std::vector<CurvePoint>& curve);

// CSV with header "threshold,fpr,ccr", one point per line.
std::string curve_csv(const std::vector<CurvePoint>& curve);

struct EvalReport {
  int trial = 0;
  double acc_c = 0.0;
  double auroc_o = 0.0;
  double oscr_o = 0.0;
  int64_t n_known = 0;
  int64_t n_unknown = 0;
  std::string config_digest;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample std; 0 for a single trial
};

struct TrialAggregate {
  MetricSummary acc_c, auroc_o, oscr_o;
  int trials = 0;
  std::string config_digest;
};

// Mean and sample standard deviation across trials. All reports must share
// one config digest.
TrialAggregate aggregate_trials(const std::vector<EvalReport>& reports);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json_text(const std::string& text);

}  // namespace omcl
