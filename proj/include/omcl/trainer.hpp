#pragma once

#include <functional>
#include <string>
#include <vector>

#include "omcl/config.hpp"
#include "omcl/dataset.hpp"
#include "omcl/metrics.hpp"
#include "omcl/model.hpp"

namespace omcl {

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double cos_part = 0.0;
  double mlas_part = 0.0;
  double oss_part = 0.0;
  double s = 0.0;  // scale value after the epoch's updates
};

struct RunRecord {
  int trial = 0;
  std::vector<EpochStats> epochs;      // one entry per epoch
  std::vector<double> batch_losses;    // every batch loss, in order
  double wall_seconds = 0.0;           // not part of any serialized artifact
  EvalReport report;
};

using EpochLogger = std::function<void(const EpochStats&)>;

// Runs the full optimization for one trial: shuffled epochs, fresh
// descriptors per batch, Adam on all parameters with the scale at 0.1x the
// model rate (skipped entirely when adaptive_scale is off), scale floored
// at 1. Throws NumericError with epoch/batch context if the loss goes
// non-finite. Deterministic in cfg.seed.
Model train_trial(const TrainConfig& cfg, const ImageDataset& train,
                  const OpenSetSplit& split, RunRecord* record = nullptr,
                  const EpochLogger& log = {});

// Scores the test set: closed accuracy over known classes, AUROC and OSCR
// against the unknown-class samples, using the model's stored
// normalization. The report's trial and digest come from split and cfg.
EvalReport evaluate_trial(const Model& m, const ImageDataset& test,
                          const OpenSetSplit& split, const TrainConfig& cfg);

std::vector<ScoredPrediction> score_test_set(const Model& m, const ImageDataset& test,
                                             const OpenSetSplit& split,
                                             const TrainConfig& cfg);

struct SweepRow {
  double value = 0.0;
  double acc = 0.0;
  double auroc = 0.0;
  double oscr = 0.0;
};

// Trains and evaluates every trial at each value of the swept axis
// (t, m, lambda, M, or s0) and averages the metrics. jobs > 1 runs whole
// (value, trial) cells concurrently; results do not depend on jobs.
std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& axis,
                            const std::vector<double>& values,
                            const ImageDataset& train, const ImageDataset& test,
                            const std::vector<OpenSetSplit>& trials, int jobs = 1);

// CSV with header "value,acc,auroc,oscr".
std::string sweep_csv(const std::vector<SweepRow>& rows);

TrainConfig apply_sweep_value(const TrainConfig& base, const std::string& axis,
                              double value);

// Embeddings of up to `per_class_cap` samples per original class, in
// dataset order, without augmentation. Header: sample_id,true_class,z0...
// Unknown-class rows carry the literal UNKNOWN.
std::string export_embeddings_csv(const Model& m, const ImageDataset& ds,
                                  const OpenSetSplit& split, int per_class_cap = 200);

// Applies cfg.threads to the kernel dispatch: 1 forces the serial
// reference kernels, larger values cap the OpenMP team size.
void apply_thread_config(const TrainConfig& cfg);

std::string epoch_stats_to_json(const EpochStats& e);
std::string run_record_to_json(const RunRecord& r);

}  // namespace omcl
