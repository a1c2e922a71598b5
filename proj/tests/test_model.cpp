#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "omcl/gradcheck.hpp"
#include "omcl/model.hpp"

using namespace omcl;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// unit row with prescribed cosines against the first axes (d >= len + 1)
Tensor unit_row_with_cos(const std::vector<double>& cos, int d) {
  Tensor t = Tensor::zeros({1, d});
  double sq = 0.0;
  for (size_t j = 0; j < cos.size(); ++j) {
    t.data[j] = cos[j];
    sq += cos[j] * cos[j];
  }
  t.data[cos.size()] = std::sqrt(1.0 - sq);
  return t;
}

Tensor axis_rows(int c, int d) {
  Tensor w = Tensor::zeros({c, d});
  for (int i = 0; i < c; ++i) w.data[static_cast<size_t>(i) * d + i] = 1.0;
  return w;
}

}  // namespace

TEST_CASE("cosine logits: alignment, scale, 3-4-5 row") {
  Graph g;
  Var w = g.leaf(axis_rows(2, 2));

  Var z = g.leaf(Tensor({1, 2}, {2.0, 0.0}));  // aligned with w1, orthogonal to w2
  Var s1 = g.leaf(Tensor::scalar(1.0));
  const Tensor& l1 = g.value(cosine_logits(g, z, w, s1, ZeroNormPolicy::error));
  CHECK(l1.data[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l1.data[1] == doctest::Approx(0.0).epsilon(1e-14));

  Var s2 = g.leaf(Tensor::scalar(2.0));
  const Tensor& l2 = g.value(cosine_logits(g, z, w, s2, ZeroNormPolicy::error));
  CHECK(l2.data[0] == doctest::Approx(2.0).epsilon(1e-14));

  Var z34 = g.leaf(Tensor({1, 2}, {3.0, 4.0}));
  const Tensor& l3 = g.value(cosine_logits(g, z34, w, s1, ZeroNormPolicy::error));
  CHECK(l3.data[0] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(l3.data[1] == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("cosine is scale invariant and bounded by s") {
  Rng rng(3);
  Graph g;
  Var w = g.leaf(random_tensor({4, 8}, rng));
  Var s = g.leaf(Tensor::scalar(7.5));
  Tensor zt = random_tensor({5, 8}, rng);
  Var z = g.leaf(zt);
  const Tensor& a = g.value(cosine_logits(g, z, w, s, ZeroNormPolicy::error));
  Tensor scaled_z = zt;
  for (double& v : scaled_z.data) v *= 37.0;
  const Tensor& b =
      g.value(cosine_logits(g, g.leaf(scaled_z), w, s, ZeroNormPolicy::error));
  for (size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));
    CHECK(std::fabs(a.data[i]) <= 7.5 + 1e-12);
  }
}

TEST_CASE("cosine logits reject zero-norm rows under the strict policy") {
  Graph g;
  Var w = g.leaf(axis_rows(2, 2));
  Var s = g.leaf(Tensor::scalar(1.0));
  Var z = g.leaf(Tensor({1, 2}, {0.0, 0.0}));
  CHECK_THROWS_AS(cosine_logits(g, z, w, s, ZeroNormPolicy::error), NumericError);
}

TEST_CASE("mlas probability worked examples") {
  // symmetric: three equal terms
  CHECK(mlas_prob({0.0, 0.0}, 1, 1.0, 0.0, 0.0) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // margin and threshold at the tuned defaults
  const double p = mlas_prob({0.9, 0.1}, 1, 1.0, -0.1, 0.1);
  const double expected =
      std::exp(1.0) / (std::exp(1.0) + std::exp(0.1) + std::exp(0.1));
  CHECK(p == doctest::Approx(expected).epsilon(1e-15));
  CHECK(p == doctest::Approx(0.5516).epsilon(1e-4));
}

TEST_CASE("mlas reduces to the plain cosine probability") {
  // m = 0 with the threshold term removed (t -> -inf makes e^(st) vanish)
  Rng rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> row(4);
    for (double& v : row) v = rng.uniform(-1.0, 1.0);
    const double s = rng.uniform(1.0, 16.0);
    const int y = 1 + static_cast<int>(rng.below(4));
    const double lhs =
        mlas_prob(row, y, s, 0.0, -std::numeric_limits<double>::infinity());
    CHECK(lhs == doctest::Approx(cos_prob(row, y, s)).epsilon(1e-12));
  }
}

TEST_CASE("mlas is decreasing in margin and threshold") {
  const std::vector<double> row{0.7, 0.2, -0.1};
  double prev = 1.0;
  for (double m : {-0.2, -0.1, 0.0, 0.1, 0.2}) {
    const double p = mlas_prob(row, 1, 8.0, m, 0.1);
    CHECK(p < prev);
    prev = p;
  }
  prev = 1.0;
  for (double t : {-0.2, 0.0, 0.2, 0.4}) {
    const double p = mlas_prob(row, 1, 8.0, -0.1, t);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("oss probability worked examples") {
  CHECK(oss_prob({0.0, 0.0}, 1.0, 0.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const double expected =
      std::exp(0.1) / (std::exp(0.1) + std::exp(0.9) + std::exp(0.1));
  CHECK(oss_prob({0.9, 0.1}, 1.0, 0.1) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(oss_prob({0.9, 0.1}, 1.0, 0.1) == doctest::Approx(0.2366).epsilon(1e-4));
  CHECK(oss_prob({0.0, 0.0}, 1.0, -50.0) < 1e-20);
}

TEST_CASE("probability closure with the threshold channel") {
  Rng rng(12);
  Graph g;
  Tensor cos = random_tensor({6, 4}, rng);
  const double s = 9.0, t = 0.1;
  Tensor scaled = cos;
  for (double& v : scaled.data) v *= s;
  Var p = g.softmax_ext(g.leaf(scaled), g.leaf(Tensor::scalar(s * t)));
  const Tensor& probs = g.value(p);
  for (int i = 0; i < 6; ++i) {
    double total = 0.0;
    for (int j = 0; j <= 4; ++j) total += probs.data[static_cast<size_t>(i) * 5 + j];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    // the extra channel carries exactly the suppression probability
    std::vector<double> row(cos.data.begin() + static_cast<long>(i) * 4,
                            cos.data.begin() + static_cast<long>(i) * 4 + 4);
    CHECK(probs.data[static_cast<size_t>(i) * 5 + 4] ==
          doctest::Approx(oss_prob(row, s, t)).epsilon(1e-12));
  }
}

TEST_CASE("descriptors: exact radius, 1-D sign, both modes") {
  Rng rng(5);
  for (DescriptorMode mode :
       {DescriptorMode::cube_project, DescriptorMode::sphere_uniform}) {
    Tensor d1 = sample_descriptors(64, 1, 3.5, mode, rng);
    for (double v : d1.data) CHECK((v == 3.5 || v == -3.5));

    Tensor d8 = sample_descriptors(200, 8, 16.0, mode, rng);
    for (int i = 0; i < 200; ++i) {
      double sq = 0.0;
      for (int j = 0; j < 8; ++j) {
        const double v = d8.data[static_cast<size_t>(i) * 8 + j];
        sq += v * v;
      }
      CHECK(std::fabs(std::sqrt(sq) - 16.0) < 1e-9);
    }
  }
  CHECK(sample_descriptors(0, 4, 1.0, DescriptorMode::cube_project, rng).size() == 0);
  CHECK_THROWS_AS(sample_descriptors(1, 0, 1.0, DescriptorMode::cube_project, rng),
                  Error);
}

TEST_CASE("combined loss matches the chained scalar oracles") {
  // one training row with cos = (0.9, 0.1), one descriptor with cos = (0.1, 0.1)
  Graph g;
  Var z = g.leaf(unit_row_with_cos({0.9, 0.1}, 3));
  Tensor desc = unit_row_with_cos({0.1, 0.1}, 3);
  Var w = g.leaf(axis_rows(2, 3));
  Var s = g.leaf(Tensor::scalar(1.0));

  LossSettings st;
  st.margin = -0.1;
  st.threshold = 0.1;
  st.lambda = 0.5;
  LossGraph loss = omcl_loss(g, z, {1}, desc, w, s, st);

  const double s_cos = cos_prob({0.9, 0.1}, 1, 1.0);
  const double s_mlas = mlas_prob({0.9, 0.1}, 1, 1.0, -0.1, 0.1);
  const double s_oss = oss_prob({0.1, 0.1}, 1.0, 0.1);
  CHECK(s_cos == doctest::Approx(0.6900).epsilon(1e-4));
  CHECK(s_oss == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const double expected =
      -0.5 * (std::log(s_cos) + 0.5 * std::log(s_mlas) + 0.5 * std::log(s_oss));
  CHECK(g.value(loss.total).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss reduces to plain cosine cross-entropy") {
  Rng rng(21);
  Graph g;
  Tensor zt = random_tensor({7, 5}, rng);
  Tensor wt = random_tensor({3, 5}, rng);
  std::vector<int> labels;
  for (int i = 0; i < 7; ++i) labels.push_back(1 + static_cast<int>(rng.below(3)));
  Var z = g.leaf(zt);
  Var w = g.leaf(wt);
  Var s = g.leaf(Tensor::scalar(11.0));

  LossSettings st;
  st.lambda = 0.0;  // keeps both extra terms weightless
  LossGraph loss = omcl_loss(g, z, labels, Tensor(), w, s, st);

  // scalar route: mean of -log softmax over the true class
  Graph g2;
  const Tensor& cos = g2.value(
      cosine_matrix(g2, g2.leaf(zt), g2.leaf(wt), ZeroNormPolicy::error));
  double ce = 0.0;
  for (int i = 0; i < 7; ++i) {
    std::vector<double> row(cos.data.begin() + static_cast<long>(i) * 3,
                            cos.data.begin() + static_cast<long>(i) * 3 + 3);
    ce -= std::log(cos_prob(row, labels[static_cast<size_t>(i)], 11.0));
  }
  ce /= 7.0;
  CHECK(g.value(loss.total).item() == doctest::Approx(ce).epsilon(1e-12));

  // disabling both mechanisms is the same reduction
  LossSettings off;
  off.enable_mlas = false;
  off.enable_oss = false;
  Graph g3;
  LossGraph base = omcl_loss(g3, g3.leaf(zt), labels, Tensor(), g3.leaf(wt),
                             g3.leaf(Tensor::scalar(11.0)), off);
  CHECK(g3.value(base.total).item() == doctest::Approx(ce).epsilon(1e-12));
}

TEST_CASE("full loss passes gradcheck") {
  Rng rng(33);
  const int n = 3, m = 2, c = 3, d = 5;
  Tensor desc = sample_descriptors(m, d, 4.0, DescriptorMode::cube_project, rng);
  std::vector<int> labels{2, 1, 3};
  LossSettings st;
  auto f = [&](Graph& g, const std::vector<Var>& v) {
    return omcl_loss(g, v[0], labels, desc, v[1], v[2], st).total;
  };
  auto report = gradcheck(
      f, {random_tensor({n, d}, rng), random_tensor({c, d}, rng), Tensor({1}, {5.0})},
      1e-3, 1e-4);
  CHECK(report.passed());
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("descriptor rows leave backbone gradients untouched") {
  Rng rng(44);
  const int n = 4, m = 3, c = 3, d = 6;
  Tensor zt = random_tensor({n, d}, rng);
  Tensor wt = random_tensor({c, d}, rng);
  Tensor desc = sample_descriptors(m, d, 8.0, DescriptorMode::cube_project, rng);
  std::vector<int> labels{1, 2, 3, 1};

  LossSettings with_oss;
  Graph ga;
  Var za = ga.leaf(zt);
  LossGraph la =
      omcl_loss(ga, za, labels, desc, ga.leaf(wt), ga.leaf(Tensor::scalar(6.0)), with_oss);
  ga.backward(la.total);

  LossSettings no_oss = with_oss;
  no_oss.enable_oss = false;  // same rows and normalization, suppression masked
  Graph gb;
  Var zb = gb.leaf(zt);
  LossGraph lb =
      omcl_loss(gb, zb, labels, desc, gb.leaf(wt), gb.leaf(Tensor::scalar(6.0)), no_oss);
  gb.backward(lb.total);

  CHECK(ga.grad(za) == gb.grad(zb));  // bit-identical: no contribution at all
}

TEST_CASE("parameter count does not grow with the open-set objective") {
  Rng rng(1);
  BackboneConfig bb;
  bb.arch = Arch::mlp;
  bb.in_h = 1;
  bb.in_w = 1;
  bb.in_ch = 2;
  bb.mlp_hidden = {16};
  bb.embed_dim = 8;
  HeadConfig head;
  head.num_classes = 4;
  Model omcl_model = init_model(bb, head, 16.0, rng);
  Model baseline = init_model(bb, head, 16.0, rng);
  CHECK(trainable_parameter_count(omcl_model) == trainable_parameter_count(baseline));
  // the threshold channel carries no trainable row
  CHECK(omcl_model.head_w.dim(0) == head.num_classes);
}

TEST_CASE("embed contracts") {
  Rng rng(2);
  BackboneConfig bb;
  bb.arch = Arch::mlp;
  bb.in_h = 2;
  bb.in_w = 2;
  bb.in_ch = 1;
  bb.mlp_hidden = {8};
  bb.embed_dim = 3;
  HeadConfig head;
  head.num_classes = 2;
  Model m = init_model(bb, head, 16.0, rng);

  SUBCASE("zero image through a zero-bias mlp gives the zero embedding") {
    Tensor z = embed_values(m, Tensor::zeros({2, 2, 2, 1}));
    CHECK(z.shape == std::vector<int>{2, 3});
    for (double v : z.data) CHECK(v == 0.0);
  }
  SUBCASE("output shape is [B, d]") {
    Rng rx(9);
    Tensor z = embed_values(m, random_tensor({5, 2, 2, 1}, rx));
    CHECK(z.shape == std::vector<int>{5, 3});
    CHECK(z.all_finite());
  }
  SUBCASE("identical input and seed give bit-identical embeddings") {
    Rng ra(7), rb(7);
    Model m1 = init_model(bb, head, 16.0, ra);
    Model m2 = init_model(bb, head, 16.0, rb);
    Rng rx(9);
    Tensor imgs = random_tensor({4, 2, 2, 1}, rx);
    Tensor z1 = embed_values(m1, imgs), z2 = embed_values(m2, imgs);
    CHECK(std::memcmp(z1.data.data(), z2.data.data(),
                      z1.data.size() * sizeof(double)) == 0);
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(embed_values(m, Tensor::zeros({2, 3, 2, 1})), ShapeError);
  }
}

TEST_CASE("small-cnn embed produces the configured dimension") {
  Rng rng(6);
  BackboneConfig bb;
  bb.arch = Arch::small_cnn;
  bb.in_h = 12;
  bb.in_w = 12;
  bb.in_ch = 3;
  bb.embed_dim = 10;
  HeadConfig head;
  head.num_classes = 3;
  Model m = init_model(bb, head, 16.0, rng);
  Rng rx(1);
  Tensor z = embed_values(m, random_tensor({2, 12, 12, 3}, rx));
  CHECK(z.shape == std::vector<int>{2, 10});
  CHECK(z.all_finite());
}

TEST_CASE("predict: worked example, ties, threshold limit") {
  Tensor cos({1, 2}, {0.9, 0.1});

  auto with_channel = predict_from_cos(cos, 1.0, 0.1, ScoringMode::threshold_channel);
  const double expected =
      std::exp(0.9) / (std::exp(0.9) + std::exp(0.1) + std::exp(0.1));
  CHECK(with_channel[0].cls == 1);
  CHECK(with_channel[0].known_score == doctest::Approx(expected).epsilon(1e-14));
  CHECK(with_channel[0].known_score == doctest::Approx(0.5267).epsilon(1e-4));

  Tensor sym({1, 3}, {0.4, 0.4, 0.4});
  CHECK(predict_from_cos(sym, 2.0, 0.1, ScoringMode::threshold_channel)[0].cls == 1);

  // a very negative threshold recovers the plain cosine softmax score
  auto plain = predict_from_cos(cos, 1.0, 0.0, ScoringMode::plain);
  auto limit = predict_from_cos(cos, 1.0, -50.0, ScoringMode::threshold_channel);
  CHECK(std::fabs(plain[0].known_score - limit[0].known_score) < 1e-15);
}

TEST_CASE("predict score drops as the threshold rises") {
  Tensor cos({1, 2}, {0.8, 0.2});
  double prev = 1.0;
  for (double t : {-0.5, 0.0, 0.5, 1.0}) {
    const double sc =
        predict_from_cos(cos, 4.0, t, ScoringMode::threshold_channel)[0].known_score;
    CHECK(sc < prev);
    prev = sc;
  }
}
