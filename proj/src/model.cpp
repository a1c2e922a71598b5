#include "omcl/model.hpp"

#include <algorithm>
#include <cmath>

#include "omcl/gradcheck.hpp"

namespace omcl {

Arch arch_from_string(const std::string& s) {
  if (s == "mlp") return Arch::mlp;
  if (s == "small-cnn" || s == "small_cnn") return Arch::small_cnn;
  throw ConfigError("unknown backbone '" + s + "' (expected mlp or small-cnn)");
}

std::string arch_to_string(Arch a) {
  return a == Arch::mlp ? "mlp" : "small-cnn";
}

DescriptorMode descriptor_mode_from_string(const std::string& s) {
  if (s == "cube-project" || s == "cube_project") return DescriptorMode::cube_project;
  if (s == "sphere-uniform" || s == "sphere_uniform")
    return DescriptorMode::sphere_uniform;
  throw ConfigError("unknown descriptor mode '" + s + "'");
}

ScoringMode scoring_mode_from_string(const std::string& s) {
  if (s == "threshold-channel" || s == "threshold_channel")
    return ScoringMode::threshold_channel;
  if (s == "plain") return ScoringMode::plain;
  throw ConfigError("unknown scoring mode '" + s + "'");
}

namespace {

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = sd * rng.normal();
  return t;
}

constexpr int kConv1Channels = 32;
constexpr int kConv2Channels = 64;

}  // namespace

Model init_model(const BackboneConfig& bb, const HeadConfig& head, double s0, Rng& rng) {
  if (head.num_classes < 2) throw ConfigError("model needs at least two known classes");
  if (bb.embed_dim < 1) throw ConfigError("embedding dimension must be positive");
  Model m;
  m.backbone = bb;
  m.head = head;

  if (bb.arch == Arch::mlp) {
    std::vector<int> widths;
    widths.push_back(bb.in_h * bb.in_w * bb.in_ch);
    for (int hny : bb.mlp_hidden) widths.push_back(hny);
    widths.push_back(bb.embed_dim);
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      const std::string tag = "fc" + std::to_string(l + 1);
      m.backbone_params.emplace_back(
          tag + "_w", he_normal({widths[l + 1], widths[l]}, widths[l], rng));
      m.backbone_params.emplace_back(tag + "_b", Tensor::zeros({widths[l + 1]}));
    }
  } else {
    if (bb.in_h < 8 || bb.in_w < 8)
      throw ConfigError("small-cnn needs inputs of at least 8x8");
    m.backbone_params.emplace_back(
        "conv1_w", he_normal({kConv1Channels, 3, 3, bb.in_ch}, 9 * bb.in_ch, rng));
    m.backbone_params.emplace_back("conv1_b", Tensor::zeros({kConv1Channels}));
    m.backbone_params.emplace_back(
        "conv2_w",
        he_normal({kConv2Channels, 3, 3, kConv1Channels}, 9 * kConv1Channels, rng));
    m.backbone_params.emplace_back("conv2_b", Tensor::zeros({kConv2Channels}));
    const int flat = (bb.in_h / 4) * (bb.in_w / 4) * kConv2Channels;
    m.backbone_params.emplace_back("fc_w", he_normal({bb.embed_dim, flat}, flat, rng));
    m.backbone_params.emplace_back("fc_b", Tensor::zeros({bb.embed_dim}));
  }

  m.head_w = he_normal({head.num_classes, bb.embed_dim}, bb.embed_dim, rng);
  m.scale = Tensor::scalar(s0);
  return m;
}

int64_t trainable_parameter_count(const Model& m) {
  int64_t n = m.head_w.size() + m.scale.size();
  for (const auto& [name, t] : m.backbone_params) n += t.size();
  return n;
}

Var embed(Graph& g, Var images, const BackboneConfig& bb,
          const std::vector<Var>& params) {
  const Tensor& in = g.value(images);
  if (in.ndim() != 4 || in.dim(1) != bb.in_h || in.dim(2) != bb.in_w ||
      in.dim(3) != bb.in_ch)
    throw ShapeError("embed: images " + shape_str(in.shape) + " do not match input " +
                     std::to_string(bb.in_h) + "x" + std::to_string(bb.in_w) + "x" +
                     std::to_string(bb.in_ch));
  const int batch = in.dim(0);

  if (bb.arch == Arch::mlp) {
    Var x = g.reshape(images, {batch, bb.in_h * bb.in_w * bb.in_ch});
    const size_t n_layers = params.size() / 2;
    for (size_t l = 0; l < n_layers; ++l) {
      x = g.add_rowvec(g.matmul_nt(x, params[2 * l]), params[2 * l + 1]);
      if (l + 1 < n_layers) x = g.relu(x);
    }
    return x;
  }

  Var h1 = g.maxpool2(g.relu(g.conv2d(images, params[0], params[1], 1)));
  Var h2 = g.maxpool2(g.relu(g.conv2d(h1, params[2], params[3], 1)));
  const int flat = (bb.in_h / 4) * (bb.in_w / 4) * kConv2Channels;
  Var x = g.reshape(h2, {batch, flat});
  return g.add_rowvec(g.matmul_nt(x, params[4]), params[5]);
}

Var cosine_matrix(Graph& g, Var z, Var w, ZeroNormPolicy policy) {
  return g.matmul_nt(g.l2_normalize_rows(z, policy), g.l2_normalize_rows(w, policy));
}

Var cosine_logits(Graph& g, Var z, Var w, Var s, ZeroNormPolicy policy) {
  return g.scale_var(cosine_matrix(g, z, w, policy), s);
}

Tensor sample_descriptors(int count, int dim, double radius, DescriptorMode mode,
                          Rng& rng) {
  if (count < 0) throw Error("sample_descriptors: negative count");
  if (dim < 1) throw Error("sample_descriptors: dimension must be positive");
  if (radius <= 0.0) throw Error("sample_descriptors: radius must be positive");
  Tensor out = Tensor::zeros({count, dim});
  std::vector<double> row(static_cast<size_t>(dim));
  for (int i = 0; i < count; ++i) {
    double norm = 0.0;
    do {
      for (int j = 0; j < dim; ++j)
        row[static_cast<size_t>(j)] = mode == DescriptorMode::cube_project
                                          ? rng.uniform(-radius, radius)
                                          : rng.normal();
      double sq = 0.0;
      for (double v : row) sq += v * v;
      norm = std::sqrt(sq);
    } while (norm < 1e-9);
    for (int j = 0; j < dim; ++j)
      out.data[static_cast<size_t>(i) * dim + j] =
          row[static_cast<size_t>(j)] / norm * radius;
  }
  return out;
}

namespace {

std::vector<int> zero_based(const std::vector<int>& labels, int num_classes) {
  std::vector<int> cols;
  cols.reserve(labels.size());
  for (int lab : labels) {
    if (lab < 1 || lab > num_classes)
      throw Error("label " + std::to_string(lab) + " outside 1.." +
                  std::to_string(num_classes));
    cols.push_back(lab - 1);
  }
  return cols;
}

}  // namespace

LossGraph omcl_loss(Graph& g, Var z_train, const std::vector<int>& labels,
                    const Tensor& descriptors, Var head_w, Var s,
                    const LossSettings& settings) {
  const int n = g.value(z_train).dim(0);
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("omcl_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " embeddings");
  const int c = g.value(head_w).dim(0);
  const int m_rows = descriptors.size() > 0 ? descriptors.dim(0) : 0;
  const std::vector<int> cols = zero_based(labels, c);

  Var z_all = z_train;
  if (m_rows > 0) z_all = g.concat_rows(z_train, g.leaf(descriptors));
  Var cos_all = cosine_matrix(g, z_all, head_w, ZeroNormPolicy::clamp);
  Var cos_train = m_rows > 0 ? g.slice_rows(cos_all, 0, n) : cos_all;

  const double inv_rows = 1.0 / static_cast<double>(n + m_rows);

  Var scaled = g.scale_var(cos_train, s);
  Var logp_cos = g.sub(g.select_cols(scaled, cols), g.logsumexp_rows(scaled));

  LossGraph out;
  out.cos_train = cos_train;
  out.cos_term = g.scale(g.sum(logp_cos), -inv_rows);
  Var total = out.cos_term;

  if (settings.enable_mlas) {
    Tensor margin_mask = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i)
      margin_mask.data[static_cast<size_t>(i) * c + cols[static_cast<size_t>(i)]] =
          settings.margin;
    Var margined = g.scale_var(g.sub(cos_train, g.leaf(margin_mask)), s);
    Var ext = g.append_col(margined, g.scale(s, settings.threshold));
    Var logp_mlas = g.sub(g.select_cols(ext, cols), g.logsumexp_rows(ext));
    out.mlas_term = g.scale(g.sum(logp_mlas), -settings.lambda * inv_rows);
    total = g.add(total, out.mlas_term);
  }

  if (settings.enable_oss && m_rows > 0) {
    Var cos_desc = g.slice_rows(cos_all, n, n + m_rows);
    Var ext = g.append_col(g.scale_var(cos_desc, s), g.scale(s, settings.threshold));
    // the appended threshold column is the implicit class C+1
    Var logp_oss =
        g.sub(g.select_cols(ext, std::vector<int>(static_cast<size_t>(m_rows), c)),
              g.logsumexp_rows(ext));
    out.oss_term = g.scale(g.sum(logp_oss), -settings.lambda * inv_rows);
    total = g.add(total, out.oss_term);
  }

  out.total = total;
  return out;
}

double cos_prob(const std::vector<double>& cos_row, int label, double s) {
  const int c = static_cast<int>(cos_row.size());
  if (label < 1 || label > c) throw Error("cos_prob: label out of range");
  double denom = 0.0;
  for (double v : cos_row) denom += std::exp(s * v);
  return std::exp(s * cos_row[static_cast<size_t>(label - 1)]) / denom;
}

double mlas_prob(const std::vector<double>& cos_row, int label, double s, double m,
                 double t) {
  const int c = static_cast<int>(cos_row.size());
  if (label < 1 || label > c) throw Error("mlas_prob: label out of range");
  const double num = std::exp(s * (cos_row[static_cast<size_t>(label - 1)] - m));
  double denom = num + std::exp(s * t);
  for (int j = 0; j < c; ++j)
    if (j != label - 1) denom += std::exp(s * cos_row[static_cast<size_t>(j)]);
  return num / denom;
}

double oss_prob(const std::vector<double>& cos_row, double s, double t) {
  const double num = std::exp(s * t);
  double denom = num;
  for (double v : cos_row) denom += std::exp(s * v);
  return num / denom;
}

std::vector<Prediction> predict_from_cos(const Tensor& cos, double s, double t,
                                         ScoringMode mode) {
  if (cos.ndim() != 2) throw ShapeError("predict: cos matrix must be 2-D");
  const int rows = cos.dim(0), c = cos.dim(1);
  std::vector<Prediction> preds;
  preds.reserve(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    const double* row = cos.data.data() + static_cast<size_t>(i) * c;
    double mx = s * t;
    if (mode == ScoringMode::plain) mx = -1e300;
    for (int j = 0; j < c; ++j) mx = std::max(mx, s * row[j]);
    double denom = mode == ScoringMode::threshold_channel ? std::exp(s * t - mx) : 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(s * row[j] - mx);

    Prediction p;
    p.cls = 1;
    double best = row[0];
    for (int j = 1; j < c; ++j)
      if (row[j] > best) {
        best = row[j];
        p.cls = j + 1;
      }
    p.known_score = std::exp(s * best - mx) / denom;
    preds.push_back(p);
  }
  return preds;
}

Tensor embed_values(const Model& m, const Tensor& images) {
  Graph g;
  std::vector<Var> params;
  params.reserve(m.backbone_params.size());
  for (const auto& [name, t] : m.backbone_params) params.push_back(g.leaf(t));
  Var z = embed(g, g.leaf(images), m.backbone, params);
  return g.value(z);
}

std::vector<Prediction> predict(const Model& m, const Tensor& images,
                                ScoringMode mode) {
  Graph g;
  std::vector<Var> params;
  params.reserve(m.backbone_params.size());
  for (const auto& [name, t] : m.backbone_params) params.push_back(g.leaf(t));
  Var z = embed(g, g.leaf(images), m.backbone, params);
  Var cos = cosine_matrix(g, z, g.leaf(m.head_w), ZeroNormPolicy::clamp);
  return predict_from_cos(g.value(cos), m.s(), m.head.threshold, mode);
}

std::vector<LossTermGradCheck> check_loss_gradients(uint64_t seed, int configs,
                                                    double step, double tolerance) {
  Rng rng(seed, "gradcheck");
  std::vector<LossTermGradCheck> results = {{"cos", 0.0, true},
                                            {"mlas", 0.0, true},
                                            {"oss", 0.0, true},
                                            {"total", 0.0, true}};
  for (int cfg = 0; cfg < configs; ++cfg) {
    const int c = 2 + static_cast<int>(rng.below(7));    // 2..8
    const int d = 2 + static_cast<int>(rng.below(15));   // 2..16
    const int n = 2 + static_cast<int>(rng.below(3));
    const int m_rows = 1 + static_cast<int>(rng.below(3));
    LossSettings st;
    st.margin = rng.uniform(-0.3, 0.3);
    st.threshold = rng.uniform(-0.5, 0.5);
    st.lambda = 0.5;
    const double s0 = rng.uniform(1.0, 32.0);

    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(1 + static_cast<int>(rng.below(c)));
    Tensor desc = sample_descriptors(m_rows, d, s0, DescriptorMode::cube_project, rng);

    std::vector<Tensor> point;
    point.push_back(Tensor::zeros({n, d}));
    point.push_back(Tensor::zeros({c, d}));
    for (double& v : point[0].data) v = rng.uniform(-1.0, 1.0);
    for (double& v : point[1].data) v = rng.uniform(-1.0, 1.0);
    point.push_back(Tensor::scalar(s0));

    for (auto& res : results) {
      auto f = [&](Graph& g, const std::vector<Var>& v) {
        LossGraph loss = omcl_loss(g, v[0], labels, desc, v[1], v[2], st);
        if (res.term == "cos") return loss.cos_term;
        if (res.term == "mlas") return loss.mlas_term;
        if (res.term == "oss") return loss.oss_term;
        return loss.total;
      };
      const GradCheckReport rep = gradcheck(f, point, step, tolerance);
      res.max_rel_err = std::max(res.max_rel_err, rep.max_rel_err);
      if (!rep.passed()) res.passed = false;
    }
  }
  return results;
}

}  // namespace omcl
