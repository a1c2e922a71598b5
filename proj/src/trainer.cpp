#include "omcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "omcl/adam.hpp"
#include "omcl/kernels.hpp"

namespace omcl {

namespace {

constexpr double kScaleFloor = 1.0;

BackboneConfig backbone_from(const TrainConfig& cfg, const ImageDataset& ds) {
  BackboneConfig bb;
  bb.arch = arch_from_string(cfg.backbone);
  bb.in_h = ds.h;
  bb.in_w = ds.w;
  bb.in_ch = ds.ch;
  bb.mlp_hidden = cfg.mlp_hidden;
  bb.embed_dim = cfg.embed_dim;
  return bb;
}

LossSettings loss_settings_from(const TrainConfig& cfg) {
  LossSettings st;
  st.enable_mlas = cfg.enable_mlas;
  st.enable_oss = cfg.enable_oss;
  st.margin = cfg.margin;
  st.threshold = cfg.threshold;
  st.lambda = cfg.lambda;
  return st;
}

}  // namespace

void apply_thread_config(const TrainConfig& cfg) {
  if (cfg.threads == 1) {
    kernels::set_parallel(false);
  } else if (cfg.threads > 1) {
    kernels::set_parallel(true);
#ifdef _OPENMP
    omp_set_num_threads(cfg.threads);
#endif
  }
}

Model train_trial(const TrainConfig& cfg, const ImageDataset& train,
                  const OpenSetSplit& split, RunRecord* record, const EpochLogger& log) {
  const auto t_start = std::chrono::steady_clock::now();
  if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
  if (cfg.epochs < 1) throw ConfigError("epochs must be positive");

  HeadConfig head;
  head.num_classes = split.num_known();
  head.margin = cfg.margin;
  head.threshold = cfg.threshold;
  head.lambda = cfg.lambda;

  const BackboneConfig bb = backbone_from(cfg, train);
  Rng init_rng(cfg.seed, "init", static_cast<uint64_t>(split.trial));
  Model model = init_model(bb, head, cfg.s0, init_rng);
  model.stats = compute_channel_stats(train, split.known);

  Rng desc_rng(cfg.seed, "descriptors", static_cast<uint64_t>(split.trial));
  const DescriptorMode desc_mode = descriptor_mode_from_string(cfg.descriptor_mode);
  const LossSettings settings = loss_settings_from(cfg);

  AdamOptimizer opt;
  for (auto& [name, t] : model.backbone_params) opt.attach(&t);
  opt.attach(&model.head_w);
  if (cfg.adaptive_scale) opt.attach(&model.scale, 0.1);

  AugmentOptions aug;
  aug.enabled = cfg.augment;

  if (record) {
    record->trial = split.trial;
    record->epochs.clear();
    record->batch_losses.clear();
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(train, split, model.stats, aug, cfg.batch_size,
                                       cfg.seed, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    int batch_index = 0;
    for (const auto& batch : batches) {
      const int n = static_cast<int>(batch.labels.size());
      int m_rows = 0;
      if (settings.enable_oss)
        m_rows = cfg.descriptors < 0 ? n : cfg.descriptors;
      Tensor descriptors;
      if (m_rows > 0)
        descriptors = sample_descriptors(m_rows, bb.embed_dim, model.s(), desc_mode,
                                         desc_rng);

      Graph g;
      std::vector<Var> params;
      params.reserve(model.backbone_params.size());
      for (const auto& [name, t] : model.backbone_params) params.push_back(g.leaf(t));
      Var w = g.leaf(model.head_w);
      Var s = g.leaf(model.scale);
      Var z = embed(g, g.leaf(batch.images), bb, params);
      LossGraph loss = omcl_loss(g, z, batch.labels, descriptors, w, s, settings);

      const double loss_value = g.value(loss.total).item();
      if (!std::isfinite(loss_value))
        throw NumericError("training loss is not finite at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ", trial " +
                           std::to_string(split.trial));
      g.backward(loss.total);

      std::vector<const std::vector<double>*> grads;
      grads.reserve(params.size() + 2);
      for (Var p : params) grads.push_back(&g.grad(p));
      grads.push_back(&g.grad(w));
      if (cfg.adaptive_scale) grads.push_back(&g.grad(s));
      opt.step(grads, cfg.lr);
      if (cfg.adaptive_scale && model.scale.data[0] < kScaleFloor)
        model.scale.data[0] = kScaleFloor;

      stats.loss += loss_value;
      stats.cos_part += g.value(loss.cos_term).item();
      if (loss.mlas_term.valid()) stats.mlas_part += g.value(loss.mlas_term).item();
      if (loss.oss_term.valid()) stats.oss_part += g.value(loss.oss_term).item();
      if (record) record->batch_losses.push_back(loss_value);
      ++batch_index;
    }
    const double nb = static_cast<double>(batches.size());
    stats.loss /= nb;
    stats.cos_part /= nb;
    stats.mlas_part /= nb;
    stats.oss_part /= nb;
    stats.s = model.s();
    if (record) record->epochs.push_back(stats);
    if (log) log(stats);
  }

  if (record) {
    record->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
  }
  return model;
}

std::vector<ScoredPrediction> score_test_set(const Model& m, const ImageDataset& test,
                                             const OpenSetSplit& split,
                                             const TrainConfig& cfg) {
  if (m.head.num_classes != split.num_known())
    throw Error("checkpoint trained for " + std::to_string(m.head.num_classes) +
                " classes, split has " + std::to_string(split.num_known()));
  const ScoringMode mode = scoring_mode_from_string(cfg.scoring);
  std::vector<int64_t> indices;
  for (int64_t i = 0; i < test.count; ++i) indices.push_back(i);

  std::vector<ScoredPrediction> preds;
  preds.reserve(indices.size());
  for (const auto& batch :
       eval_batches(test, split, m.stats, indices, std::max(cfg.batch_size, 1))) {
    const auto batch_preds = predict(m, batch.images, mode);
    for (size_t r = 0; r < batch_preds.size(); ++r) {
      ScoredPrediction sp;
      sp.known_score = batch_preds[r].known_score;
      sp.predicted_class = batch_preds[r].cls;
      sp.true_class = batch.labels[r];  // already kUnknownClass for unknowns
      preds.push_back(sp);
    }
  }
  return preds;
}

EvalReport evaluate_trial(const Model& m, const ImageDataset& test,
                          const OpenSetSplit& split, const TrainConfig& cfg) {
  const auto preds = score_test_set(m, test, split, cfg);
  std::vector<double> known_scores, unknown_scores;
  for (const auto& p : preds)
    (p.true_class == kUnknownClass ? unknown_scores : known_scores)
        .push_back(p.known_score);

  EvalReport report;
  report.trial = split.trial;
  report.acc_c = closed_accuracy(preds);
  report.auroc_o = auroc(known_scores, unknown_scores);
  report.oscr_o = oscr(preds);
  report.n_known = static_cast<int64_t>(known_scores.size());
  report.n_unknown = static_cast<int64_t>(unknown_scores.size());
  report.config_digest = config_digest(cfg);
  return report;
}

TrainConfig apply_sweep_value(const TrainConfig& base, const std::string& axis,
                              double value) {
  TrainConfig cfg = base;
  if (axis == "t" || axis == "threshold") cfg.threshold = value;
  else if (axis == "m" || axis == "margin") cfg.margin = value;
  else if (axis == "lambda") cfg.lambda = value;
  else if (axis == "M" || axis == "descriptors") cfg.descriptors = static_cast<int>(value);
  else if (axis == "s0") cfg.s0 = value;
  else throw ConfigError("unknown sweep axis '" + axis +
                         "' (expected t, m, lambda, M, or s0)");
  return cfg;
}

std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& axis,
                            const std::vector<double>& values,
                            const ImageDataset& train, const ImageDataset& test,
                            const std::vector<OpenSetSplit>& trials, int jobs) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  if (trials.empty()) throw ConfigError("sweep: no trials given");
  jobs = std::max(jobs, 1);

  struct Cell {
    size_t value_index;
    const OpenSetSplit* split;
    TrainConfig cfg;
  };
  std::vector<Cell> cells;
  for (size_t vi = 0; vi < values.size(); ++vi) {
    const TrainConfig cfg = apply_sweep_value(base, axis, values[vi]);
    for (const auto& split : trials) cells.push_back(Cell{vi, &split, cfg});
  }

  std::vector<EvalReport> reports(cells.size());
  for (size_t start = 0; start < cells.size(); start += static_cast<size_t>(jobs)) {
    const size_t stop = std::min(cells.size(), start + static_cast<size_t>(jobs));
    std::vector<std::future<EvalReport>> wave;
    for (size_t i = start; i < stop; ++i) {
      const Cell& cell = cells[i];
      wave.push_back(std::async(std::launch::async, [&cell, &train, &test]() {
        Model m = train_trial(cell.cfg, train, *cell.split);
        return evaluate_trial(m, test, *cell.split, cell.cfg);
      }));
    }
    for (size_t i = start; i < stop; ++i) reports[i] = wave[i - start].get();
  }

  std::vector<SweepRow> rows;
  for (size_t vi = 0; vi < values.size(); ++vi) {
    std::vector<EvalReport> group;
    for (size_t i = 0; i < cells.size(); ++i)
      if (cells[i].value_index == vi) group.push_back(reports[i]);
    const TrialAggregate agg = aggregate_trials(group);
    rows.push_back(SweepRow{values[vi], agg.acc_c.mean, agg.auroc_o.mean,
                            agg.oscr_o.mean});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "value,acc,auroc,oscr\n";
  for (const auto& r : rows)
    os << r.value << ',' << r.acc << ',' << r.auroc << ',' << r.oscr << '\n';
  return os.str();
}

std::string export_embeddings_csv(const Model& m, const ImageDataset& ds,
                                  const OpenSetSplit& split, int per_class_cap) {
  if (per_class_cap < 1) throw ConfigError("per-class cap must be positive");
  std::map<int, int> taken;
  std::vector<int64_t> indices;
  for (int64_t i = 0; i < ds.count; ++i) {
    const int original = ds.labels[i];
    if (taken[original] >= per_class_cap) continue;
    ++taken[original];
    indices.push_back(i);
  }

  std::ostringstream os;
  os.precision(17);
  os << "sample_id,true_class";
  for (int j = 0; j < m.backbone.embed_dim; ++j) os << ",z" << j;
  os << '\n';

  const int chunk = 256;
  for (size_t start = 0; start < indices.size(); start += chunk) {
    const size_t stop = std::min(indices.size(), start + chunk);
    std::vector<int64_t> slice(indices.begin() + static_cast<long>(start),
                               indices.begin() + static_cast<long>(stop));
    const auto batches = eval_batches(ds, split, m.stats, slice,
                                      static_cast<int>(slice.size()));
    const Tensor z = embed_values(m, batches.front().images);
    for (size_t r = 0; r < slice.size(); ++r) {
      const int remapped = batches.front().labels[r];
      os << slice[r] << ',';
      if (remapped == kUnknownClass)
        os << "UNKNOWN";
      else
        os << remapped;
      for (int j = 0; j < m.backbone.embed_dim; ++j)
        os << ',' << z.data[r * static_cast<size_t>(m.backbone.embed_dim) +
                            static_cast<size_t>(j)];
      os << '\n';
    }
  }
  return os.str();
}

std::string epoch_stats_to_json(const EpochStats& e) {
  nlohmann::json j;
  j["epoch"] = e.epoch;
  j["loss"] = e.loss;
  j["loss_cos"] = e.cos_part;
  j["loss_mlas"] = e.mlas_part;
  j["loss_oss"] = e.oss_part;
  j["s"] = e.s;
  return j.dump();
}

std::string run_record_to_json(const RunRecord& r) {
  nlohmann::json j;
  j["trial"] = r.trial;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs)
    j["epochs"].push_back(nlohmann::json::parse(epoch_stats_to_json(e)));
  j["report"] = nlohmann::json::parse(report_to_json(r.report));
  return j.dump(2);
}

}  // namespace omcl
