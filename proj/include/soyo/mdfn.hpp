#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "soyo/core.hpp"

namespace soyo::mdfn {

enum class Activation { Relu };

/// Two-layer perceptron d_in -> hidden -> d_out, row-major weights.
struct MlpParams {
  std::size_t d_in = 0;
  std::size_t hidden = 0;
  std::size_t d_out = 0;
  std::vector<double> w1;  // hidden x d_in
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // d_out x hidden
  std::vector<double> b2;  // d_out

  static MlpParams zeros(std::size_t d_in, std::size_t hidden, std::size_t d_out);
  std::size_t n_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

/// Linear domain classification head, t outputs over d inputs.
struct HeadParams {
  std::size_t d = 0;
  std::size_t t = 0;
  std::vector<double> w;  // t x d
  std::vector<double> b;  // t

  static HeadParams zeros(std::size_t d, std::size_t t);
  std::size_t n_params() const { return w.size() + b.size(); }
};

/// Full fusion-network parameter set: residual encoders g1 (mid features)
/// and g2 (last features) plus the classification head g3.
struct MdfnParams {
  MlpParams g1;
  MlpParams g2;
  HeadParams g3;
  Activation activation = Activation::Relu;

  std::size_t dim() const { return g1.d_in; }
  std::size_t n_domains() const { return g3.t; }
  std::size_t n_params() const { return g1.n_params() + g2.n_params() + g3.n_params(); }

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 2e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t hidden = 16;
  Activation activation = Activation::Relu;
  RngStream seed;
  LevelId aux_level = LevelId::mid();
  LevelId main_level = LevelId::last();

  void validate() const;
};

struct TrainResult {
  MdfnParams params;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

/// x_last + g1(x_mid) + g2(x_last).
std::vector<double> forward_fuse(std::span<const double> x_mid, std::span<const double> x_last,
                                 const MdfnParams& params);

/// Affine head output; probabilities come from a stable softmax downstream.
std::vector<double> forward_logits(std::span<const double> x_fused, const HeadParams& head);

/// -log softmax(logits)[label], evaluated through log_sum_exp.
double cross_entropy(std::span<const double> logits, DomainId label);

/// Numerically stable softmax (shift by the max logit).
ProbVector softmax(std::span<const double> logits);

/// Mean cross-entropy over the batch plus exact analytic gradients for every
/// parameter. Feature inputs are constants; only the network parameters are
/// differentiated.
std::pair<double, MdfnParams> loss_and_grad(const LabeledBatch& batch, const MdfnParams& params,
                                            LevelId aux_level = LevelId::mid(),
                                            LevelId main_level = LevelId::last());

/// w <- w - lr (grad + weight_decay * w); biases are not decayed.
void sgd_step(MdfnParams& params, const MdfnParams& grads, double learning_rate,
              double weight_decay);

/// Fresh initialization (residual-identity at start: second-layer weights and
/// all biases zero, remaining weights scaled uniform under the seed) followed
/// by epochs x minibatch SGD with deterministic shuffling. Pass warm_start to
/// continue from existing parameters instead of reinitializing.
TrainResult train(const LabeledBatch& batch, std::size_t t, const TrainConfig& cfg,
                  const MdfnParams* warm_start = nullptr);

/// Initial parameter set as used by train.
MdfnParams init_params(std::size_t d, std::size_t hidden, std::size_t t, Activation activation,
                       RngStream rng);

/// Fused forward, stable softmax, argmax with ties to the lowest index.
std::pair<DomainId, ProbVector> predict(std::span<const double> x_mid,
                                        std::span<const double> x_last,
                                        const MdfnParams& params);

}  // namespace soyo::mdfn
