#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "optenc/inputs.hpp"
#include "optenc/rng.hpp"

namespace optenc {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn_mult = 4;
  int vocab_size = 0;
  int max_len = 128;
  int segment_count = 3;
  /// Width of the topic classifier head; 0 until fine-tuning adds one.
  int classes = 0;
  double dropout = 0.0;

  int head_dim() const { return hidden / heads; }
  int ffn_dim() const { return hidden * ffn_mult; }
  /// Throws ConfigError on inconsistent dimensions.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln1_gamma, ln1_beta;
  Matrix w1, b1, w2, b2;
  Matrix ln2_gamma, ln2_beta;
};

/// Every trainable tensor, in checkpoint declaration order. Biases and
/// layer-norm parameters are stored as 1xN row matrices.
struct ParameterSet {
  Matrix token_embedding, segment_embedding, position_embedding;
  std::vector<LayerParams> layers;
  Matrix mlm_weight, mlm_bias;
  Matrix ccp_weight, ccp_bias;
  Matrix msp_proj_a, msp_bias_a, msp_proj_b, msp_bias_b;
  Matrix cls_weight, cls_bias;

  /// Calls f(name, tensor) for every tensor in declaration order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Same shapes, all entries zero.
  ParameterSet zeros_like() const;
  /// Element-wise this += other (shapes must match).
  ParameterSet& operator+=(const ParameterSet& other);
  ParameterSet& operator*=(double s);

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    f("token_embedding", p.token_embedding);
    f("segment_embedding", p.segment_embedding);
    f("position_embedding", p.position_embedding);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& L = p.layers[l];
      const std::string pre = "layer" + std::to_string(l) + ".";
      f(pre + "wq", L.wq);
      f(pre + "bq", L.bq);
      f(pre + "wk", L.wk);
      f(pre + "bk", L.bk);
      f(pre + "wv", L.wv);
      f(pre + "bv", L.bv);
      f(pre + "wo", L.wo);
      f(pre + "bo", L.bo);
      f(pre + "ln1_gamma", L.ln1_gamma);
      f(pre + "ln1_beta", L.ln1_beta);
      f(pre + "w1", L.w1);
      f(pre + "b1", L.b1);
      f(pre + "w2", L.w2);
      f(pre + "b2", L.b2);
      f(pre + "ln2_gamma", L.ln2_gamma);
      f(pre + "ln2_beta", L.ln2_beta);
    }
    f("mlm_weight", p.mlm_weight);
    f("mlm_bias", p.mlm_bias);
    f("ccp_weight", p.ccp_weight);
    f("ccp_bias", p.ccp_bias);
    f("msp_proj_a", p.msp_proj_a);
    f("msp_bias_a", p.msp_bias_a);
    f("msp_proj_b", p.msp_proj_b);
    f("msp_bias_b", p.msp_bias_b);
    f("cls_weight", p.cls_weight);
    f("cls_bias", p.cls_bias);
  }
};

using GradientSet = ParameterSet;

/// Weights ~ N(0, 0.02^2), biases 0, layer-norm gain 1, classifier head 0.
ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed);

/// Replaces the classifier head with a zero-initialized one of `classes` outputs.
void reset_classifier(ParameterSet& params, ModelConfig& cfg, int classes);

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  /// Attention weights per head (sequence x sequence), exactly 0 where masked.
  std::vector<Matrix> probs;
  Matrix context;
  Matrix attn_drop;
  Matrix ln1_xhat;
  Vector ln1_inv_std;
  Matrix ln1_out;
  Matrix ffn_pre;
  Matrix ffn_act;
  Matrix ffn_drop;
  Matrix ln2_xhat;
  Vector ln2_inv_std;
};

struct ForwardTrace {
  /// Embedding output followed by each layer's output (layers + 1 entries),
  /// each sequence x hidden.
  std::vector<Matrix> hidden_states;
  std::vector<LayerCache> layers;
  /// Additive logit mask derived from the input (0 or -1e9).
  Matrix mask_bias;
  const Matrix& final_hidden() const { return hidden_states.back(); }
};

/// Post-norm encoder: embeddings (token + segment + position), then per layer
/// masked multi-head self-attention -> residual + layer norm -> GELU
/// feed-forward -> residual + layer norm. Dropout applies only with
/// `train_mode`, a positive rate and a generator.
///
/// Throws ShapeError on inputs outside the configuration and NonFiniteError
/// when activations overflow.
ForwardTrace forward(const ModelInput& input, const ParameterSet& params, const ModelConfig& cfg,
                     bool train_mode = false, Rng* dropout_rng = nullptr);

struct Losses {
  double mlm = 0.0;
  double ccp = 0.0;
  double msp = 0.0;
  double cls = 0.0;
  double total() const { return mlm + ccp + msp + cls; }
};

/// Sum over labeled positions of -log softmax(original id).
double loss_mlm(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params);
/// Binary cross-entropy of sigmoid(w . h_CLS + b); 0 without a ccp label.
double loss_ccp(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params);
/// Binary cross-entropy over msp labels of
/// sigmoid((h_i A + a) . (h_j B + b)).
double loss_msp(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params);
/// Softmax cross-entropy of the classifier head on h_CLS; 0 without a label.
double loss_cls(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params);

inline double loss_total(double mlm, double ccp, double msp) { return mlm + ccp + msp; }

Losses compute_losses(const ForwardTrace& trace, const ModelInput& input,
                      const ParameterSet& params);

/// Gradient of compute_losses(...).total() with respect to every parameter.
/// Throws NonFiniteError if a gradient is not finite.
GradientSet backward(const ForwardTrace& trace, const ModelInput& input,
                     const ParameterSet& params, const ModelConfig& cfg);

RowVector mlm_logits(const ForwardTrace& trace, const ParameterSet& params, std::size_t position);
double ccp_logit(const ForwardTrace& trace, const ParameterSet& params);
double msp_logit(const ForwardTrace& trace, const ParameterSet& params, std::size_t i,
                 std::size_t j);
RowVector class_logits(const ForwardTrace& trace, const ParameterSet& params);

/// log(1 + exp(x)) without overflow.
double softplus(double x);
double sigmoid(double x);

}  // namespace optenc
