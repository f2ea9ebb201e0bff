#include "optenc/model.hpp"

#include <cmath>
#include <numbers>

#include "optenc/error.hpp"

namespace optenc {

namespace {

constexpr double kMaskedLogit = -1e9;
constexpr double kLayerNormEps = 1e-12;

Matrix row_zeros(int n) { return Matrix::Zero(1, n); }

Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = stddev * rng.normal();
  return m;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Row-wise layer norm; fills xhat and 1/sigma for the backward pass.
Matrix layer_norm(const Matrix& u, const Matrix& gamma, const Matrix& beta, Matrix& xhat,
                  Vector& inv_std) {
  const Eigen::Index n = u.rows();
  const auto width = static_cast<double>(u.cols());
  xhat.resize(u.rows(), u.cols());
  inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = u.row(i).sum() / width;
    const RowVector centered = u.row(i).array() - mean;
    const double var = centered.squaredNorm() / width;
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = centered * inv_std(i);
  }
  return (xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& inv_std,
                           const Matrix& gamma, Matrix& dgamma, Matrix& dbeta) {
  dgamma += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbeta += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  const auto width = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / width;
    const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / width;
    dx.row(i) = inv_std(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dx;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  Matrix m = Matrix::Ones(rows, cols);
  if (rng == nullptr || rate <= 0.0) return m;
  const double keep = 1.0 - rate;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng->uniform01() < keep ? 1.0 / keep : 0.0;
  return m;
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void ModelConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || ffn_mult < 1 || vocab_size < 1 || max_len < 1 ||
      segment_count < 1 || classes < 0)
    throw ConfigError("model dimensions must be >= 1");
  if (hidden % heads != 0) throw ConfigError("hidden must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

std::vector<Matrix*> ParameterSet::tensors() {
  std::vector<Matrix*> out;
  visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> ParameterSet::tensors() const {
  std::vector<const Matrix*> out;
  visit([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  visit([&](const std::string& name, const Matrix&) { out.push_back(name); });
  return out;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool ParameterSet::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out = *this;
  out.visit([](const std::string&, Matrix& m) { m.setZero(); });
  return out;
}

ParameterSet& ParameterSet::operator+=(const ParameterSet& other) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  if (mine.size() != theirs.size()) throw ShapeError("parameter sets differ in layout");
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i] += *theirs[i];
  return *this;
}

ParameterSet& ParameterSet::operator*=(double s) {
  visit([s](const std::string&, Matrix& m) { m *= s; });
  return *this;
}

ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  constexpr double kStd = 0.02;
  Rng rng(seed);
  const int h = cfg.hidden;
  const int f = cfg.ffn_dim();
  ParameterSet p;
  p.token_embedding = normal_matrix(cfg.vocab_size, h, kStd, rng);
  p.segment_embedding = normal_matrix(cfg.segment_count, h, kStd, rng);
  p.position_embedding = normal_matrix(cfg.max_len, h, kStd, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams L;
    L.wq = normal_matrix(h, h, kStd, rng);
    L.bq = row_zeros(h);
    L.wk = normal_matrix(h, h, kStd, rng);
    L.bk = row_zeros(h);
    L.wv = normal_matrix(h, h, kStd, rng);
    L.bv = row_zeros(h);
    L.wo = normal_matrix(h, h, kStd, rng);
    L.bo = row_zeros(h);
    L.ln1_gamma = Matrix::Ones(1, h);
    L.ln1_beta = row_zeros(h);
    L.w1 = normal_matrix(h, f, kStd, rng);
    L.b1 = row_zeros(f);
    L.w2 = normal_matrix(f, h, kStd, rng);
    L.b2 = row_zeros(h);
    L.ln2_gamma = Matrix::Ones(1, h);
    L.ln2_beta = row_zeros(h);
    p.layers.push_back(std::move(L));
  }
  p.mlm_weight = normal_matrix(h, cfg.vocab_size, kStd, rng);
  p.mlm_bias = row_zeros(cfg.vocab_size);
  p.ccp_weight = normal_matrix(h, 1, kStd, rng);
  p.ccp_bias = row_zeros(1);
  p.msp_proj_a = normal_matrix(h, h, kStd, rng);
  p.msp_bias_a = row_zeros(h);
  p.msp_proj_b = normal_matrix(h, h, kStd, rng);
  p.msp_bias_b = row_zeros(h);
  p.cls_weight = Matrix::Zero(h, cfg.classes);
  p.cls_bias = row_zeros(cfg.classes);
  return p;
}

void reset_classifier(ParameterSet& params, ModelConfig& cfg, int classes) {
  cfg.classes = classes;
  params.cls_weight = Matrix::Zero(cfg.hidden, classes);
  params.cls_bias = Matrix::Zero(1, classes);
}

ForwardTrace forward(const ModelInput& input, const ParameterSet& params, const ModelConfig& cfg,
                     bool train_mode, Rng* dropout_rng) {
  const auto n = static_cast<Eigen::Index>(input.ids.size());
  if (n == 0) throw ShapeError("empty input");
  if (n > cfg.max_len) throw ShapeError("input longer than max_len");
  if (input.segments.size() != input.ids.size() || input.positions.size() != input.ids.size())
    throw ShapeError("ids, segments and positions differ in length");
  if (input.mask.rows() != n || input.mask.cols() != n) throw ShapeError("mask shape mismatch");
  if (static_cast<int>(params.layers.size()) != cfg.layers)
    throw ShapeError("parameter set does not match layer count");

  const int h = cfg.hidden;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double drop = train_mode ? cfg.dropout : 0.0;
  Rng* rng = (train_mode && drop > 0.0) ? dropout_rng : nullptr;

  ForwardTrace trace;
  trace.mask_bias = (input.mask.array() == 0).cast<double>() * kMaskedLogit;

  Matrix x(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const int id = input.ids[u];
    const int seg = input.segments[u];
    const int pos = input.positions[u];
    if (id < 0 || id >= cfg.vocab_size) throw ShapeError("token id outside vocabulary");
    if (seg < 0 || seg >= cfg.segment_count) throw ShapeError("segment id out of range");
    if (pos < 0 || pos >= cfg.max_len) throw ShapeError("position id out of range");
    x.row(i) = params.token_embedding.row(id) + params.segment_embedding.row(seg) +
               params.position_embedding.row(pos);
  }
  trace.hidden_states.push_back(x);

  const auto masked = (input.mask.array() == 0);
  for (const auto& L : params.layers) {
    LayerCache c;
    c.input = x;
    c.q = (x * L.wq).rowwise() + L.bq.row(0);
    c.k = (x * L.wk).rowwise() + L.bk.row(0);
    c.v = (x * L.wv).rowwise() + L.bv.row(0);
    c.context.resize(n, h);
    for (int head = 0; head < cfg.heads; ++head) {
      const auto off = static_cast<Eigen::Index>(head) * dh;
      Matrix s = (c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose()) * scale +
                 trace.mask_bias;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      s = masked.select(0.0, s);
      c.context.middleCols(off, dh) = s * c.v.middleCols(off, dh);
      c.probs.push_back(std::move(s));
    }
    Matrix attn = (c.context * L.wo).rowwise() + L.bo.row(0);
    c.attn_drop = dropout_mask(n, h, drop, rng);
    Matrix u = x + attn.cwiseProduct(c.attn_drop);
    c.ln1_out = layer_norm(u, L.ln1_gamma, L.ln1_beta, c.ln1_xhat, c.ln1_inv_std);

    c.ffn_pre = (c.ln1_out * L.w1).rowwise() + L.b1.row(0);
    c.ffn_act = c.ffn_pre.unaryExpr([](double v) { return gelu(v); });
    Matrix ffn = (c.ffn_act * L.w2).rowwise() + L.b2.row(0);
    c.ffn_drop = dropout_mask(n, h, drop, rng);
    Matrix z = c.ln1_out + ffn.cwiseProduct(c.ffn_drop);
    x = layer_norm(z, L.ln2_gamma, L.ln2_beta, c.ln2_xhat, c.ln2_inv_std);
    trace.layers.push_back(std::move(c));
    trace.hidden_states.push_back(x);
  }
  if (!x.allFinite()) throw NonFiniteError("non-finite activations in forward pass");
  return trace;
}

RowVector mlm_logits(const ForwardTrace& trace, const ParameterSet& params, std::size_t position) {
  return trace.final_hidden().row(static_cast<Eigen::Index>(position)) * params.mlm_weight +
         params.mlm_bias.row(0);
}

double ccp_logit(const ForwardTrace& trace, const ParameterSet& params) {
  return trace.final_hidden().row(0).dot(params.ccp_weight.col(0)) + params.ccp_bias(0, 0);
}

double msp_logit(const ForwardTrace& trace, const ParameterSet& params, std::size_t i,
                 std::size_t j) {
  const Matrix& hs = trace.final_hidden();
  const RowVector a =
      hs.row(static_cast<Eigen::Index>(i)) * params.msp_proj_a + params.msp_bias_a.row(0);
  const RowVector b =
      hs.row(static_cast<Eigen::Index>(j)) * params.msp_proj_b + params.msp_bias_b.row(0);
  return a.dot(b);
}

RowVector class_logits(const ForwardTrace& trace, const ParameterSet& params) {
  return trace.final_hidden().row(0) * params.cls_weight + params.cls_bias.row(0);
}

namespace {

double log_sum_exp(const RowVector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

// BCE of sigmoid(logit) against a 0/1 target.
double bce_logit(double logit, int delta) { return delta ? softplus(-logit) : softplus(logit); }

}  // namespace

double loss_mlm(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params) {
  double loss = 0.0;
  for (const auto& label : input.mlm_labels) {
    const RowVector logits = mlm_logits(trace, params, label.position);
    loss += log_sum_exp(logits) - logits(label.original);
  }
  return loss;
}

double loss_ccp(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params) {
  if (!input.ccp_label) return 0.0;
  return bce_logit(ccp_logit(trace, params), *input.ccp_label);
}

double loss_msp(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params) {
  double loss = 0.0;
  for (const auto& label : input.msp_labels)
    loss += bce_logit(msp_logit(trace, params, label.i, label.j), label.delta);
  return loss;
}

double loss_cls(const ForwardTrace& trace, const ModelInput& input, const ParameterSet& params) {
  if (!input.class_label) return 0.0;
  const RowVector logits = class_logits(trace, params);
  return log_sum_exp(logits) - logits(*input.class_label);
}

Losses compute_losses(const ForwardTrace& trace, const ModelInput& input,
                      const ParameterSet& params) {
  return Losses{loss_mlm(trace, input, params), loss_ccp(trace, input, params),
                loss_msp(trace, input, params), loss_cls(trace, input, params)};
}

GradientSet backward(const ForwardTrace& trace, const ModelInput& input,
                     const ParameterSet& params, const ModelConfig& cfg) {
  GradientSet g = params.zeros_like();
  const Matrix& hs = trace.final_hidden();
  const Eigen::Index n = hs.rows();
  Matrix dx = Matrix::Zero(n, hs.cols());

  for (const auto& label : input.mlm_labels) {
    const auto p = static_cast<Eigen::Index>(label.position);
    const RowVector logits = mlm_logits(trace, params, label.position);
    RowVector d = (logits.array() - log_sum_exp(logits)).exp();
    d(label.original) -= 1.0;
    g.mlm_weight.noalias() += hs.row(p).transpose() * d;
    g.mlm_bias.row(0) += d;
    dx.row(p).noalias() += d * params.mlm_weight.transpose();
  }

  if (input.ccp_label) {
    const double d = sigmoid(ccp_logit(trace, params)) - *input.ccp_label;
    g.ccp_weight.col(0) += d * hs.row(0).transpose();
    g.ccp_bias(0, 0) += d;
    dx.row(0) += d * params.ccp_weight.col(0).transpose();
  }

  if (!input.msp_labels.empty()) {
    const auto base = static_cast<Eigen::Index>(input.node_span.begin);
    const auto count = static_cast<Eigen::Index>(input.node_span.size());
    const Matrix nodes = hs.middleRows(base, count);
    const Matrix a = (nodes * params.msp_proj_a).rowwise() + params.msp_bias_a.row(0);
    const Matrix b = (nodes * params.msp_proj_b).rowwise() + params.msp_bias_b.row(0);
    Matrix da = Matrix::Zero(count, a.cols());
    Matrix db = Matrix::Zero(count, b.cols());
    for (const auto& label : input.msp_labels) {
      const auto i = static_cast<Eigen::Index>(label.i) - base;
      const auto j = static_cast<Eigen::Index>(label.j) - base;
      const double d = sigmoid(a.row(i).dot(b.row(j))) - label.delta;
      da.row(i) += d * b.row(j);
      db.row(j) += d * a.row(i);
    }
    g.msp_proj_a.noalias() += nodes.transpose() * da;
    g.msp_bias_a += da.colwise().sum();
    g.msp_proj_b.noalias() += nodes.transpose() * db;
    g.msp_bias_b += db.colwise().sum();
    dx.middleRows(base, count).noalias() +=
        da * params.msp_proj_a.transpose() + db * params.msp_proj_b.transpose();
  }

  if (input.class_label) {
    const RowVector logits = class_logits(trace, params);
    RowVector d = (logits.array() - log_sum_exp(logits)).exp();
    d(*input.class_label) -= 1.0;
    g.cls_weight.noalias() += hs.row(0).transpose() * d;
    g.cls_bias.row(0) += d;
    dx.row(0).noalias() += d * params.cls_weight.transpose();
  }

  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& L = params.layers[static_cast<std::size_t>(l)];
    auto& G = g.layers[static_cast<std::size_t>(l)];
    const auto& c = trace.layers[static_cast<std::size_t>(l)];

    const Matrix dz =
        layer_norm_backward(dx, c.ln2_xhat, c.ln2_inv_std, L.ln2_gamma, G.ln2_gamma, G.ln2_beta);
    const Matrix dffn = dz.cwiseProduct(c.ffn_drop);
    G.w2.noalias() += c.ffn_act.transpose() * dffn;
    G.b2 += dffn.colwise().sum();
    const Matrix dpre =
        (dffn * L.w2.transpose()).cwiseProduct(c.ffn_pre.unaryExpr([](double v) {
          return gelu_grad(v);
        }));
    G.w1.noalias() += c.ln1_out.transpose() * dpre;
    G.b1 += dpre.colwise().sum();
    const Matrix dy = dz + dpre * L.w1.transpose();

    const Matrix du =
        layer_norm_backward(dy, c.ln1_xhat, c.ln1_inv_std, L.ln1_gamma, G.ln1_gamma, G.ln1_beta);
    const Matrix dattn = du.cwiseProduct(c.attn_drop);
    G.wo.noalias() += c.context.transpose() * dattn;
    G.bo += dattn.colwise().sum();
    const Matrix dctx = dattn * L.wo.transpose();

    Matrix dq(n, cfg.hidden), dk(n, cfg.hidden), dv(n, cfg.hidden);
    for (int head = 0; head < cfg.heads; ++head) {
      const auto off = static_cast<Eigen::Index>(head) * dh;
      const Matrix& prob = c.probs[static_cast<std::size_t>(head)];
      const auto dctx_h = dctx.middleCols(off, dh);
      const Matrix dprob = dctx_h * c.v.middleCols(off, dh).transpose();
      dv.middleCols(off, dh) = prob.transpose() * dctx_h;
      const Vector row_dot = (dprob.array() * prob.array()).rowwise().sum();
      const Matrix ds =
          (prob.array() * (dprob.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleCols(off, dh) = ds * c.k.middleCols(off, dh);
      dk.middleCols(off, dh) = ds.transpose() * c.q.middleCols(off, dh);
    }
    G.wq.noalias() += c.input.transpose() * dq;
    G.bq += dq.colwise().sum();
    G.wk.noalias() += c.input.transpose() * dk;
    G.bk += dk.colwise().sum();
    G.wv.noalias() += c.input.transpose() * dv;
    G.bv += dv.colwise().sum();
    dx = du + dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    g.token_embedding.row(input.ids[u]) += dx.row(i);
    g.segment_embedding.row(input.segments[u]) += dx.row(i);
    g.position_embedding.row(input.positions[u]) += dx.row(i);
  }
  if (!g.all_finite()) throw NonFiniteError("non-finite gradient");
  return g;
}

}  // namespace optenc
