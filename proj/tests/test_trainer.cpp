#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "omcl/checkpoint.hpp"
#include "omcl/trainer.hpp"
#include "support/synth.hpp"

using namespace omcl;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.backbone = "mlp";
  cfg.mlp_hidden = {16};
  cfg.embed_dim = 8;
  cfg.batch_size = 32;
  cfg.epochs = 3;
  cfg.s0 = 12.0;
  cfg.augment = false;  // 1x1 inputs have nothing to crop
  cfg.seed = 41;
  return cfg;
}

struct Task {
  ImageDataset train = synth::gaussian_mixture(4, 40, 7, "train");
  ImageDataset test = synth::gaussian_mixture(4, 25, 8, "test");
  OpenSetSplit split;
  Task() {
    split.trial = 0;
    split.known = {0, 2};
    split.unknown = {1, 3};
  }
};

}  // namespace

TEST_CASE("both toggles off reproduces the plain cosine baseline per batch") {
  Task task;
  TrainConfig off = tiny_config();
  off.enable_mlas = false;
  off.enable_oss = false;

  TrainConfig weightless = tiny_config();
  weightless.lambda = 0.0;   // terms built but weightless
  weightless.descriptors = 0;

  RunRecord rec_off, rec_weightless;
  train_trial(off, task.train, task.split, &rec_off);
  train_trial(weightless, task.train, task.split, &rec_weightless);

  REQUIRE(rec_off.batch_losses.size() == rec_weightless.batch_losses.size());
  for (size_t i = 0; i < rec_off.batch_losses.size(); ++i)
    CHECK(std::fabs(rec_off.batch_losses[i] - rec_weightless.batch_losses[i]) < 1e-12);

  // absolute anchor: the very first batch loss equals the scalar-route
  // cosine cross-entropy of the freshly initialized model
  Rng init_rng(off.seed, "init", 0);
  BackboneConfig bb;
  bb.arch = Arch::mlp;
  bb.in_h = 1;
  bb.in_w = 1;
  bb.in_ch = 2;
  bb.mlp_hidden = off.mlp_hidden;
  bb.embed_dim = off.embed_dim;
  HeadConfig head;
  head.num_classes = 2;
  Model fresh = init_model(bb, head, off.s0, init_rng);
  fresh.stats = compute_channel_stats(task.train, task.split.known);
  AugmentOptions no_aug;
  no_aug.enabled = false;
  const auto batches = epoch_batches(task.train, task.split, fresh.stats, no_aug,
                                     off.batch_size, off.seed, 0);
  Graph g;
  std::vector<Var> params;
  for (const auto& [name, t] : fresh.backbone_params) params.push_back(g.leaf(t));
  Var z = embed(g, g.leaf(batches[0].images), bb, params);
  const Tensor& cos = g.value(
      cosine_matrix(g, z, g.leaf(fresh.head_w), ZeroNormPolicy::clamp));
  double ce = 0.0;
  for (size_t i = 0; i < batches[0].labels.size(); ++i) {
    std::vector<double> row(cos.data.begin() + static_cast<long>(i) * 2,
                            cos.data.begin() + static_cast<long>(i) * 2 + 2);
    ce -= std::log(cos_prob(row, batches[0].labels[i], fresh.s()));
  }
  ce /= static_cast<double>(batches[0].labels.size());
  CHECK(std::fabs(rec_off.batch_losses[0] - ce) < 1e-12);
}

TEST_CASE("parameter count is identical across the ablation configs") {
  Task task;
  TrainConfig omcl_cfg = tiny_config();
  TrainConfig base_cfg = tiny_config();
  base_cfg.enable_mlas = false;
  base_cfg.enable_oss = false;
  Model a = train_trial(omcl_cfg, task.train, task.split);
  Model b = train_trial(base_cfg, task.train, task.split);
  CHECK(trainable_parameter_count(a) == trainable_parameter_count(b));
}

TEST_CASE("scale trace: adaptive moves, frozen stays, floor holds") {
  Task task;
  TrainConfig cfg = tiny_config();
  RunRecord rec;
  train_trial(cfg, task.train, task.split, &rec);
  REQUIRE(static_cast<int>(rec.epochs.size()) == cfg.epochs);
  bool moved = false;
  for (const auto& e : rec.epochs) {
    CHECK(e.s >= 1.0);
    if (e.s != cfg.s0) moved = true;
  }
  CHECK(moved);

  TrainConfig frozen = cfg;
  frozen.adaptive_scale = false;
  RunRecord rec_frozen;
  train_trial(frozen, task.train, task.split, &rec_frozen);
  for (const auto& e : rec_frozen.epochs) CHECK(e.s == cfg.s0);
}

TEST_CASE("checkpoint round trip preserves evaluation exactly") {
  Task task;
  TrainConfig cfg = tiny_config();
  Model m = train_trial(cfg, task.train, task.split);
  const EvalReport before = evaluate_trial(m, task.test, task.split, cfg);

  const std::string path = "ckpt_tmp.omcl";
  save_checkpoint(path, m, {{1, 2, 3, 4}});
  std::vector<std::array<uint64_t, 4>> states;
  Model loaded = load_checkpoint(path, &states);
  std::remove(path.c_str());

  CHECK(states.size() == 1);
  CHECK(states[0] == std::array<uint64_t, 4>{1, 2, 3, 4});
  CHECK(loaded.head.num_classes == m.head.num_classes);
  CHECK(loaded.s() == m.s());
  CHECK(loaded.head_w.data == m.head_w.data);
  REQUIRE(loaded.backbone_params.size() == m.backbone_params.size());
  for (size_t i = 0; i < m.backbone_params.size(); ++i) {
    CHECK(loaded.backbone_params[i].first == m.backbone_params[i].first);
    CHECK(loaded.backbone_params[i].second.data == m.backbone_params[i].second.data);
  }

  const EvalReport after = evaluate_trial(loaded, task.test, task.split, cfg);
  CHECK(after.acc_c == before.acc_c);
  CHECK(after.auroc_o == before.auroc_o);
  CHECK(after.oscr_o == before.oscr_o);
}

TEST_CASE("identical config and seed give bit-identical reports") {
  Task task;
  TrainConfig cfg = tiny_config();
  cfg.threads = 1;
  apply_thread_config(cfg);
  Model m1 = train_trial(cfg, task.train, task.split);
  Model m2 = train_trial(cfg, task.train, task.split);
  const EvalReport r1 = evaluate_trial(m1, task.test, task.split, cfg);
  const EvalReport r2 = evaluate_trial(m2, task.test, task.split, cfg);
  CHECK(r1.acc_c == r2.acc_c);
  CHECK(r1.auroc_o == r2.auroc_o);
  CHECK(r1.oscr_o == r2.oscr_o);
  CHECK(m1.head_w.data == m2.head_w.data);
  TrainConfig parallel_again = cfg;
  parallel_again.threads = 2;
  apply_thread_config(parallel_again);
  Model m3 = train_trial(parallel_again, task.train, task.split);
  CHECK(m3.head_w.data == m1.head_w.data);  // kernels are order-stable
  cfg.threads = 0;
  apply_thread_config(cfg);
}

TEST_CASE("a hand-built separable model evaluates to perfect metrics") {
  // identity embedding of 1x1x2 inputs; class directions on the axes
  Model m;
  m.backbone.arch = Arch::mlp;
  m.backbone.in_h = 1;
  m.backbone.in_w = 1;
  m.backbone.in_ch = 2;
  m.backbone.mlp_hidden = {};
  m.backbone.embed_dim = 2;
  m.backbone_params.emplace_back("fc1_w", Tensor({2, 2}, {1, 0, 0, 1}));
  m.backbone_params.emplace_back("fc1_b", Tensor::zeros({2}));
  m.head.num_classes = 2;
  m.head_w = Tensor({2, 2}, {1, 0, 0, 1});
  m.scale = Tensor::scalar(16.0);
  m.stats.mean = {0.0, 0.0};
  m.stats.stddev = {1.0, 1.0};

  ImageDataset test;
  test.h = 1;
  test.w = 1;
  test.ch = 2;
  test.tag = "test";
  test.num_classes = 3;
  auto push = [&](uint8_t a, uint8_t b, int label) {
    test.pixels.push_back(a);
    test.pixels.push_back(b);
    test.labels.push_back(label);
    ++test.count;
  };
  push(250, 5, 0);
  push(240, 10, 0);
  push(5, 250, 1);
  push(12, 244, 1);
  push(150, 150, 2);  // unknown direction between the class axes
  push(140, 160, 2);

  OpenSetSplit split;
  split.trial = 0;
  split.known = {0, 1};
  split.unknown = {2};

  TrainConfig cfg = tiny_config();
  const EvalReport r = evaluate_trial(m, test, split, cfg);
  CHECK(r.acc_c == 1.0);
  CHECK(r.auroc_o == 1.0);
  CHECK(r.oscr_o == 1.0);
  CHECK(r.n_known == 4);
  CHECK(r.n_unknown == 2);
}

TEST_CASE("noise scores drive auroc to one half") {
  Rng rng(404);
  std::vector<double> ks(2000), us(2000);
  for (double& v : ks) v = rng.uniform();
  for (double& v : us) v = rng.uniform();
  CHECK(std::fabs(auroc(ks, us) - 0.5) < 0.03);
}

TEST_CASE("class-count mismatch between checkpoint and split is rejected") {
  Task task;
  TrainConfig cfg = tiny_config();
  Model m = train_trial(cfg, task.train, task.split);
  OpenSetSplit bigger;
  bigger.trial = 0;
  bigger.known = {0, 1, 2};
  bigger.unknown = {3};
  CHECK_THROWS_AS(evaluate_trial(m, task.test, bigger, cfg), Error);
}

TEST_CASE("a diverging run aborts with a numeric error") {
  Task task;
  TrainConfig cfg = tiny_config();
  cfg.lr = 1e280;  // one step is enough to blow the parameters up
  cfg.epochs = 2;
  CHECK_THROWS_AS(train_trial(cfg, task.train, task.split), NumericError);
}

TEST_CASE("sweep consistency and csv shape") {
  Task task;
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;

  const auto rows =
      sweep(cfg, "lambda", {0.5}, task.train, task.test, {task.split}, 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].value == 0.5);

  // a single-value sweep equals the direct run
  TrainConfig direct_cfg = apply_sweep_value(cfg, "lambda", 0.5);
  Model direct = train_trial(direct_cfg, task.train, task.split);
  const EvalReport r = evaluate_trial(direct, task.test, task.split, direct_cfg);
  CHECK(rows[0].acc == r.acc_c);
  CHECK(rows[0].auroc == r.auroc_o);
  CHECK(rows[0].oscr == r.oscr_o);

  const auto multi =
      sweep(cfg, "M", {0.0, 8.0, 32.0}, task.train, task.test, {task.split}, 2);
  CHECK(multi.size() == 3);
  const std::string csv = sweep_csv(multi);
  CHECK(csv.rfind("value,acc,auroc,oscr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  CHECK_THROWS_AS(apply_sweep_value(cfg, "nonsense", 1.0), ConfigError);
}

TEST_CASE("embedding export: caps, labels, and values") {
  Task task;
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  Model m = train_trial(cfg, task.train, task.split);

  const std::string csv = export_embeddings_csv(m, task.test, task.split, 10);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("sample_id,true_class,z0", 0) == 0);

  int rows = 0, unknown_rows = 0;
  std::string line;
  std::string first_line;
  while (std::getline(in, line)) {
    if (rows == 0) first_line = line;
    ++rows;
    if (line.find("UNKNOWN") != std::string::npos) ++unknown_rows;
  }
  CHECK(rows == 40);  // 4 classes, capped at 10 each
  CHECK(unknown_rows == 20);

  // first row's coordinates equal the direct embedding of that sample
  const auto batches = eval_batches(task.test, task.split, m.stats, {0}, 1);
  const Tensor z = embed_values(m, batches[0].images);
  std::istringstream row(first_line);
  std::string cell;
  std::getline(row, cell, ',');
  CHECK(cell == "0");
  std::getline(row, cell, ',');
  for (int j = 0; j < m.backbone.embed_dim; ++j) {
    std::getline(row, cell, ',');
    CHECK(std::stod(cell) ==
          doctest::Approx(z.data[static_cast<size_t>(j)]).epsilon(1e-12));
  }
}
