#include "omcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace omcl {

double closed_accuracy(const std::vector<ScoredPrediction>& preds) {
  int64_t known = 0, correct = 0;
  for (const auto& p : preds) {
    if (p.true_class == kUnknownClass) continue;
    ++known;
    if (p.predicted_class == p.true_class) ++correct;
  }
  if (known == 0) throw Error("closed_accuracy: no known-class samples");
  return static_cast<double>(correct) / static_cast<double>(known);
}

double auroc(const std::vector<double>& known_scores,
             const std::vector<double>& unknown_scores) {
  if (known_scores.empty() || unknown_scores.empty())
    throw Error("auroc: both score lists must be nonempty");
  const size_t n1 = known_scores.size(), n2 = unknown_scores.size();
  // (score, is_known) sorted ascending; mid-rank ties
  std::vector<std::pair<double, int>> all;
  all.reserve(n1 + n2);
  for (double s : known_scores) all.emplace_back(s, 1);
  for (double s : unknown_scores) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double rank_sum_known = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    // ranks are 1-based; tied block [i, j) shares the average rank
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum_known += mid_rank;
    i = j;
  }
  const double u = rank_sum_known - static_cast<double>(n1) * (n1 + 1) / 2.0;
  return u / (static_cast<double>(n1) * static_cast<double>(n2));
}

std::vector<CurvePoint> oscr_curve(const std::vector<ScoredPrediction>& preds) {
  int64_t n_known = 0, n_unknown = 0;
  for (const auto& p : preds)
    (p.true_class == kUnknownClass ? n_unknown : n_known)++;
  if (n_known == 0 || n_unknown == 0)
    throw Error("oscr: need both known and unknown samples");

  std::vector<double> thresholds;
  thresholds.reserve(preds.size());
  for (const auto& p : preds) thresholds.push_back(p.known_score);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  // sort samples by score descending and accumulate counts as the
  // threshold drops past each distinct score
  std::vector<const ScoredPrediction*> order;
  order.reserve(preds.size());
  for (const auto& p : preds) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return a->known_score > b->known_score;
  });

  std::vector<CurvePoint> curve;
  curve.reserve(thresholds.size());
  size_t next = 0;
  int64_t correct_accepted = 0, unknown_accepted = 0;
  for (double th : thresholds) {
    while (next < order.size() && order[next]->known_score >= th) {
      const auto* p = order[next];
      if (p->true_class == kUnknownClass)
        ++unknown_accepted;
      else if (p->predicted_class == p->true_class)
        ++correct_accepted;
      ++next;
    }
    curve.push_back(CurvePoint{
        th, static_cast<double>(unknown_accepted) / static_cast<double>(n_unknown),
        static_cast<double>(correct_accepted) / static_cast<double>(n_known)});
  }
  return curve;
}

double area_under(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) throw Error("area_under: empty curve");
  double area = 0.0;
  // extend to fpr = 0 with the value at the strictest threshold
  double prev_x = 0.0, prev_y = curve.front().ccr;
  for (const auto& pt : curve) {
    area += (pt.fpr - prev_x) * 0.5 * (pt.ccr + prev_y);
    prev_x = pt.fpr;
    prev_y = pt.ccr;
  }
  // extend to fpr = 1 (flat, the curve already accepted everything)
  area += (1.0 - prev_x) * prev_y;
  return area;
}

double oscr(const std::vector<ScoredPrediction>& preds) {
  return area_under(oscr_curve(preds));
}

std::vector<CurvePoint> roc_curve(const std::vector<double>& known_scores,
                                  const std::vector<double>& unknown_scores) {
  if (known_scores.empty() || unknown_scores.empty())
    throw Error("roc_curve: both score lists must be nonempty");
  std::vector<ScoredPrediction> preds;
  preds.reserve(known_scores.size() + unknown_scores.size());
  // reuse the OSCR sweep with every known sample counted as correct,
  // which turns CCR into the true-positive rate
  for (double s : known_scores) preds.push_back(ScoredPrediction{s, 1, 1});
  for (double s : unknown_scores)
    preds.push_back(ScoredPrediction{s, 1, kUnknownClass});
  return oscr_curve(preds);
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,fpr,ccr\n";
  for (const auto& pt : curve)
    os << pt.threshold << ',' << pt.fpr << ',' << pt.ccr << '\n';
  return os.str();
}

TrialAggregate aggregate_trials(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error("aggregate_trials: no reports");
  for (const auto& r : reports)
    if (r.config_digest != reports.front().config_digest)
      throw Error("aggregate_trials: mixed config digests (" + r.config_digest +
                  " vs " + reports.front().config_digest + ")");

  auto summarize = [&](auto field) {
    MetricSummary s;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) s.mean += field(r);
    s.mean /= n;
    if (reports.size() > 1) {
      double sq = 0.0;
      for (const auto& r : reports) {
        const double d = field(r) - s.mean;
        sq += d * d;
      }
      s.stddev = std::sqrt(sq / (n - 1.0));
    }
    return s;
  };

  TrialAggregate agg;
  agg.trials = static_cast<int>(reports.size());
  agg.config_digest = reports.front().config_digest;
  agg.acc_c = summarize([](const EvalReport& r) { return r.acc_c; });
  agg.auroc_o = summarize([](const EvalReport& r) { return r.auroc_o; });
  agg.oscr_o = summarize([](const EvalReport& r) { return r.oscr_o; });
  return agg;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["trial"] = report.trial;
  j["acc_c"] = report.acc_c;
  j["auroc_o"] = report.auroc_o;
  j["oscr_o"] = report.oscr_o;
  j["n_known"] = report.n_known;
  j["n_unknown"] = report.n_unknown;
  j["config_digest"] = report.config_digest;
  j["oscr_convention"] = "accept if score >= threshold; trapezoidal area";
  return j.dump(2);
}

EvalReport report_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  r.trial = j.at("trial").get<int>();
  r.acc_c = j.at("acc_c").get<double>();
  r.auroc_o = j.at("auroc_o").get<double>();
  r.oscr_o = j.at("oscr_o").get<double>();
  r.n_known = j.at("n_known").get<int64_t>();
  r.n_unknown = j.at("n_unknown").get<int64_t>();
  r.config_digest = j.at("config_digest").get<std::string>();
  return r;
}

}  // namespace omcl
