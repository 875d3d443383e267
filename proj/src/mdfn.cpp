#include "soyo/mdfn.hpp"

#include <algorithm>
#include <cmath>

namespace soyo::mdfn {

namespace {

// out = W x + b, W is rows x cols row-major.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::size_t rows, std::size_t cols, std::vector<double>& out) {
  out.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    out[r] = s;
  }
}

struct MlpScratch {
  std::vector<double> pre;     // hidden pre-activation
  std::vector<double> hidden;  // post-activation
  std::vector<double> out;
};

void mlp_forward(const MlpParams& mlp, std::span<const double> x, MlpScratch& s) {
  affine(mlp.w1, mlp.b1, x, mlp.hidden, mlp.d_in, s.pre);
  s.hidden.resize(mlp.hidden);
  for (std::size_t h = 0; h < mlp.hidden; ++h) s.hidden[h] = std::max(s.pre[h], 0.0);
  affine(mlp.w2, mlp.b2, s.hidden, mlp.d_out, mlp.hidden, s.out);
}

// Accumulates parameter gradients for one sample and returns d(loss)/d(input).
void mlp_backward(const MlpParams& mlp, std::span<const double> x, const MlpScratch& s,
                  std::span<const double> d_out, MlpParams& grad,
                  std::vector<double>* d_input) {
  std::vector<double> d_hidden(mlp.hidden, 0.0);
  for (std::size_t r = 0; r < mlp.d_out; ++r) {
    const double g = d_out[r];
    grad.b2[r] += g;
    double* gw2 = grad.w2.data() + r * mlp.hidden;
    const double* w2 = mlp.w2.data() + r * mlp.hidden;
    for (std::size_t h = 0; h < mlp.hidden; ++h) {
      gw2[h] += g * s.hidden[h];
      d_hidden[h] += g * w2[h];
    }
  }
  std::vector<double> d_pre(mlp.hidden);
  for (std::size_t h = 0; h < mlp.hidden; ++h) d_pre[h] = s.pre[h] > 0.0 ? d_hidden[h] : 0.0;
  if (d_input != nullptr) d_input->assign(mlp.d_in, 0.0);
  for (std::size_t h = 0; h < mlp.hidden; ++h) {
    const double g = d_pre[h];
    if (g == 0.0) continue;
    grad.b1[h] += g;
    double* gw1 = grad.w1.data() + h * mlp.d_in;
    const double* w1 = mlp.w1.data() + h * mlp.d_in;
    for (std::size_t c = 0; c < mlp.d_in; ++c) {
      gw1[c] += g * x[c];
      if (d_input != nullptr) (*d_input)[c] += g * w1[c];
    }
  }
}

MdfnParams zero_like(const MdfnParams& p) {
  MdfnParams z;
  z.g1 = MlpParams::zeros(p.g1.d_in, p.g1.hidden, p.g1.d_out);
  z.g2 = MlpParams::zeros(p.g2.d_in, p.g2.hidden, p.g2.d_out);
  z.g3 = HeadParams::zeros(p.g3.d, p.g3.t);
  z.activation = p.activation;
  return z;
}

// Mean loss and gradients over the given rows.
std::pair<double, MdfnParams> loss_and_grad_rows(const LabeledBatch& batch,
                                                 const MdfnParams& params, LevelId aux_level,
                                                 LevelId main_level,
                                                 std::span<const std::size_t> rows) {
  const FeatureMatrix& mid = batch.level(aux_level);
  const FeatureMatrix& last = batch.level(main_level);
  const std::size_t t = params.g3.t;

  MdfnParams grad = zero_like(params);
  double loss_sum = 0.0;
  MlpScratch s1, s2;
  std::vector<double> fused, logits, d_fused;

  for (const std::size_t i : rows) {
    const DomainId label = batch.labels[i];
    if (label.index < 0 || static_cast<std::size_t>(label.index) >= t)
      throw BadLabel("loss_and_grad: label " + std::to_string(label.index) +
                     " outside [0, " + std::to_string(t) + ")");
    auto x_mid = mid.row(i);
    auto x_last = last.row(i);

    mlp_forward(params.g1, x_mid, s1);
    mlp_forward(params.g2, x_last, s2);
    fused.resize(params.dim());
    for (std::size_t j = 0; j < fused.size(); ++j)
      fused[j] = x_last[j] + s1.out[j] + s2.out[j];
    affine(params.g3.w, params.g3.b, fused, t, params.g3.d, logits);

    const double lse = log_sum_exp(logits);
    loss_sum += lse - logits[static_cast<std::size_t>(label.index)];

    // d(loss)/d(logits) = softmax - onehot
    std::vector<double> d_logits(t);
    for (std::size_t c = 0; c < t; ++c) d_logits[c] = std::exp(logits[c] - lse);
    d_logits[static_cast<std::size_t>(label.index)] -= 1.0;

    d_fused.assign(params.dim(), 0.0);
    for (std::size_t c = 0; c < t; ++c) {
      const double g = d_logits[c];
      grad.g3.b[c] += g;
      double* gw = grad.g3.w.data() + c * params.g3.d;
      const double* w = params.g3.w.data() + c * params.g3.d;
      for (std::size_t j = 0; j < params.g3.d; ++j) {
        gw[j] += g * fused[j];
        d_fused[j] += g * w[j];
      }
    }

    // The fused vector feeds both residual branches with unit weight.
    mlp_backward(params.g1, x_mid, s1, d_fused, grad.g1, nullptr);
    mlp_backward(params.g2, x_last, s2, d_fused, grad.g2, nullptr);
  }

  const double inv_n = 1.0 / static_cast<double>(rows.size());
  auto scale = [&](std::vector<double>& v) {
    for (double& x : v) x *= inv_n;
  };
  scale(grad.g1.w1);
  scale(grad.g1.b1);
  scale(grad.g1.w2);
  scale(grad.g1.b2);
  scale(grad.g2.w1);
  scale(grad.g2.b1);
  scale(grad.g2.w2);
  scale(grad.g2.b2);
  scale(grad.g3.w);
  scale(grad.g3.b);
  return {loss_sum * inv_n, std::move(grad)};
}

void fill_scaled_uniform(std::vector<double>& w, std::size_t fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : w) x = (2.0 * rng.uniform01() - 1.0) * bound;
}

}  // namespace

MlpParams MlpParams::zeros(std::size_t d_in, std::size_t hidden, std::size_t d_out) {
  MlpParams p;
  p.d_in = d_in;
  p.hidden = hidden;
  p.d_out = d_out;
  p.w1.assign(hidden * d_in, 0.0);
  p.b1.assign(hidden, 0.0);
  p.w2.assign(d_out * hidden, 0.0);
  p.b2.assign(d_out, 0.0);
  return p;
}

HeadParams HeadParams::zeros(std::size_t d, std::size_t t) {
  HeadParams p;
  p.d = d;
  p.t = t;
  p.w.assign(t * d, 0.0);
  p.b.assign(t, 0.0);
  return p;
}

void MdfnParams::validate() const {
  if (g1.d_in != g1.d_out || g2.d_in != g2.d_out)
    throw DimMismatch("MdfnParams: residual MLPs must map d -> d");
  if (g1.d_in != g2.d_in || g1.d_in != g3.d)
    throw DimMismatch("MdfnParams: g1, g2 and head input dims must agree");
  if (g3.t < 1) throw InvalidArgument("MdfnParams: head needs at least one output");
  auto check = [](const std::vector<double>& v, std::size_t want, const char* what) {
    if (v.size() != want) throw LengthMismatch(std::string("MdfnParams: bad ") + what);
  };
  check(g1.w1, g1.hidden * g1.d_in, "g1.w1");
  check(g1.w2, g1.d_out * g1.hidden, "g1.w2");
  check(g2.w1, g2.hidden * g2.d_in, "g2.w1");
  check(g2.w2, g2.d_out * g2.hidden, "g2.w2");
  check(g3.w, g3.t * g3.d, "g3.w");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be positive");
  if (weight_decay < 0.0) throw InvalidArgument("TrainConfig: weight_decay must be >= 0");
  if (epochs < 1 || batch_size < 1 || hidden < 1)
    throw InvalidArgument("TrainConfig: epochs, batch_size and hidden must be >= 1");
}

std::vector<double> forward_fuse(std::span<const double> x_mid, std::span<const double> x_last,
                                 const MdfnParams& params) {
  if (x_mid.size() != params.g1.d_in || x_last.size() != params.g2.d_in)
    throw DimMismatch("forward_fuse: input dimension mismatch");
  MlpScratch s1, s2;
  mlp_forward(params.g1, x_mid, s1);
  mlp_forward(params.g2, x_last, s2);
  std::vector<double> fused(x_last.size());
  for (std::size_t j = 0; j < fused.size(); ++j) fused[j] = x_last[j] + s1.out[j] + s2.out[j];
  return fused;
}

std::vector<double> forward_logits(std::span<const double> x_fused, const HeadParams& head) {
  if (x_fused.size() != head.d) throw DimMismatch("forward_logits: input dimension mismatch");
  std::vector<double> logits;
  affine(head.w, head.b, x_fused, head.t, head.d, logits);
  return logits;
}

double cross_entropy(std::span<const double> logits, DomainId label) {
  if (label.index < 0 || static_cast<std::size_t>(label.index) >= logits.size())
    throw BadLabel("cross_entropy: label out of range");
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(label.index)];
}

ProbVector softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  ProbVector p;
  p.values.resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) p.values[c] = std::exp(logits[c] - lse);
  return p;
}

std::pair<double, MdfnParams> loss_and_grad(const LabeledBatch& batch, const MdfnParams& params,
                                            LevelId aux_level, LevelId main_level) {
  if (batch.n_rows() == 0) throw EmptyInput("loss_and_grad: empty batch");
  batch.validate();
  std::vector<std::size_t> rows(batch.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return loss_and_grad_rows(batch, params, aux_level, main_level, rows);
}

void sgd_step(MdfnParams& params, const MdfnParams& grads, double learning_rate,
              double weight_decay) {
  auto update_w = [&](std::vector<double>& w, const std::vector<double>& g) {
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] -= learning_rate * (g[i] + weight_decay * w[i]);
  };
  auto update_b = [&](std::vector<double>& b, const std::vector<double>& g) {
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * g[i];
  };
  update_w(params.g1.w1, grads.g1.w1);
  update_b(params.g1.b1, grads.g1.b1);
  update_w(params.g1.w2, grads.g1.w2);
  update_b(params.g1.b2, grads.g1.b2);
  update_w(params.g2.w1, grads.g2.w1);
  update_b(params.g2.b1, grads.g2.b1);
  update_w(params.g2.w2, grads.g2.w2);
  update_b(params.g2.b2, grads.g2.b2);
  update_w(params.g3.w, grads.g3.w);
  update_b(params.g3.b, grads.g3.b);
}

MdfnParams init_params(std::size_t d, std::size_t hidden, std::size_t t, Activation activation,
                       RngStream rng) {
  MdfnParams p;
  p.g1 = MlpParams::zeros(d, hidden, d);
  p.g2 = MlpParams::zeros(d, hidden, d);
  p.g3 = HeadParams::zeros(d, t);
  p.activation = activation;
  // Second-layer weights and every bias stay zero so the fusion starts as
  // the identity on the last-level features.
  fill_scaled_uniform(p.g1.w1, d, rng);
  fill_scaled_uniform(p.g2.w1, d, rng);
  fill_scaled_uniform(p.g3.w, d, rng);
  return p;
}

TrainResult train(const LabeledBatch& batch, std::size_t t, const TrainConfig& cfg,
                  const MdfnParams* warm_start) {
  cfg.validate();
  if (batch.n_rows() == 0) throw EmptyInput("train: empty batch");
  batch.validate();
  if (t < 1) throw InvalidArgument("train: t must be >= 1");
  for (const DomainId label : batch.labels)
    if (label.index < 0 || static_cast<std::size_t>(label.index) >= t)
      throw BadLabel("train: label " + std::to_string(label.index) + " outside [0, " +
                     std::to_string(t) + ")");

  const std::size_t n = batch.n_rows();
  const std::size_t d = batch.level(cfg.main_level).dim();
  if (batch.level(cfg.aux_level).dim() != d)
    throw DimMismatch("train: aux and main level dims differ");

  TrainResult result;
  if (warm_start != nullptr) {
    warm_start->validate();
    if (warm_start->dim() != d || warm_start->n_domains() != t)
      throw DimMismatch("train: warm-start shape mismatch");
    result.params = *warm_start;
  } else {
    result.params = init_params(d, cfg.hidden, t, cfg.activation, cfg.seed.substream(0));
  }

  result.loss_curve.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_rng = cfg.seed.substream(1 + epoch);
    const std::vector<std::size_t> order = shuffle_rng.permutation(n);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      auto [loss, grad] =
          loss_and_grad_rows(batch, result.params, cfg.aux_level, cfg.main_level, rows);
      sgd_step(result.params, grad, cfg.learning_rate, cfg.weight_decay);
      epoch_loss += loss * static_cast<double>(rows.size());
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  return result;
}

std::pair<DomainId, ProbVector> predict(std::span<const double> x_mid,
                                        std::span<const double> x_last,
                                        const MdfnParams& params) {
  const std::vector<double> fused = forward_fuse(x_mid, x_last, params);
  const std::vector<double> logits = forward_logits(fused, params.g3);
  ProbVector probs = softmax(logits);
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return {DomainId{static_cast<int>(best)}, std::move(probs)};
}

}  // namespace soyo::mdfn
