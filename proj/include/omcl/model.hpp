#pragma once

#include <string>
#include <utility>
#include <vector>

#include "omcl/dataset.hpp"
#include "omcl/graph.hpp"
#include "omcl/rng.hpp"
#include "omcl/tensor.hpp"

namespace omcl {

enum class Arch : uint8_t { mlp, small_cnn };

Arch arch_from_string(const std::string& s);
std::string arch_to_string(Arch a);

struct BackboneConfig {
  Arch arch = Arch::small_cnn;
  int in_h = 28, in_w = 28, in_ch = 3;
  std::vector<int> mlp_hidden = {64};  // widths between input and embedding
  int embed_dim = 128;
  // small_cnn: conv3x3(32) relu pool2 conv3x3(64) relu pool2 flatten fc(d)
};

struct HeadConfig {
  int num_classes = 0;     // C; the threshold channel carries no weights
  double margin = -0.1;    // m
  double threshold = 0.1;  // t
  double lambda = 0.5;
};

enum class DescriptorMode : uint8_t { cube_project, sphere_uniform };
enum class ScoringMode : uint8_t { threshold_channel, plain };

DescriptorMode descriptor_mode_from_string(const std::string& s);
ScoringMode scoring_mode_from_string(const std::string& s);

// Trainable state plus the normalization constants the model was trained
// with. Rows of head_w are always L2-normalized before use; scale is the
// learnable s, floored at 1 during training.
struct Model {
  BackboneConfig backbone;
  HeadConfig head;
  std::vector<std::pair<std::string, Tensor>> backbone_params;
  Tensor head_w;  // [C, d]
  Tensor scale;   // [1]
  ChannelStats stats;

  double s() const { return scale.data[0]; }
};

Model init_model(const BackboneConfig& bb, const HeadConfig& head, double s0, Rng& rng);
int64_t trainable_parameter_count(const Model& m);

// Forward pass of the backbone: images [B,H,W,ch] -> embeddings [B,d].
// `params` are graph leaves in backbone_params order.
Var embed(Graph& g, Var images, const BackboneConfig& bb, const std::vector<Var>& params);

// cos(theta) matrix [B,C] between normalized embeddings and normalized
// class directions; entries lie in [-1, 1].
Var cosine_matrix(Graph& g, Var z, Var w, ZeroNormPolicy policy);
// s * cos(theta): each entry lies in [-s, s].
Var cosine_logits(Graph& g, Var z, Var w, Var s, ZeroNormPolicy policy);

// M pseudo-unknown rows of norm `radius`. cube_project draws coordinates
// uniformly from [-radius, radius] and projects the row onto the sphere
// (rows with norm < 1e-9 are redrawn); sphere_uniform normalizes Gaussian
// draws instead, giving a uniform direction distribution.
Tensor sample_descriptors(int count, int dim, double radius, DescriptorMode mode,
                          Rng& rng);

struct LossSettings {
  bool enable_mlas = true;
  bool enable_oss = true;
  double margin = -0.1;
  double threshold = 0.1;
  double lambda = 0.5;
};

// The combined training objective over one batch.
//
// Per training row i with label y: -log S_cos and, when the margin term is
// enabled, -lambda * log S_MLAS, where S_MLAS puts s*(cos(theta_y) - m) on
// the true class and adds the fixed threshold channel e^(s*t) to the
// denominator. Per descriptor row, when suppression is enabled:
// -lambda * log S_OSS, the probability mass of the threshold channel.
// Everything is averaged over N + M rows. Descriptors join the training
// embeddings only at the head input, so their gradients reach w and s but
// no backbone parameter.
struct LossGraph {
  Var total;       // scalar
  Var cos_term;    // contribution of the plain cosine cross-entropy
  Var mlas_term;   // invalid when disabled
  Var oss_term;    // invalid when disabled or no descriptors
  Var cos_train;   // [N, C] cos(theta) of the training rows
};

LossGraph omcl_loss(Graph& g, Var z_train, const std::vector<int>& labels,
                    const Tensor& descriptors, Var head_w, Var s,
                    const LossSettings& settings);

// Scalar reference forms of the per-row probabilities (cos_row holds
// cos(theta), labels are 1..C).
double cos_prob(const std::vector<double>& cos_row, int label, double s);
double mlas_prob(const std::vector<double>& cos_row, int label, double s, double m,
                 double t);
double oss_prob(const std::vector<double>& cos_row, double s, double t);

struct Prediction {
  int cls = 0;            // 1..C, ties broken toward the lowest class
  double known_score = 0; // max known-class probability
};

// Scores a cos(theta) matrix [B,C]. threshold_channel includes e^(s*t) in
// the softmax denominator; plain scores over the C known channels only.
std::vector<Prediction> predict_from_cos(const Tensor& cos, double s, double t,
                                         ScoringMode mode);

// Full path: embed (no augmentation) then score.
std::vector<Prediction> predict(const Model& m, const Tensor& images, ScoringMode mode);

// Backbone forward only; images [B,H,W,ch] -> [B,d].
Tensor embed_values(const Model& m, const Tensor& images);

struct LossTermGradCheck {
  std::string term;    // "cos", "mlas", "oss", "total"
  double max_rel_err = 0.0;
  bool passed = false;
};

// Finite-difference check of each loss term at `configs` random settings
// (C in 2..8, d in 2..16, m in [-0.3,0.3], t in [-0.5,0.5], s in [1,32]),
// differentiating through embeddings, class weights, and the scale.
std::vector<LossTermGradCheck> check_loss_gradients(uint64_t seed, int configs,
                                                    double step, double tolerance);

}  // namespace omcl
