#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "soyo/mdfn.hpp"

using namespace soyo;
using namespace soyo::mdfn;

namespace {

MdfnParams zero_params(std::size_t d, std::size_t hidden, std::size_t t) {
  MdfnParams p;
  p.g1 = MlpParams::zeros(d, hidden, d);
  p.g2 = MlpParams::zeros(d, hidden, d);
  p.g3 = HeadParams::zeros(d, t);
  return p;
}

MdfnParams random_params(std::size_t d, std::size_t hidden, std::size_t t, RngStream rng) {
  MdfnParams p = zero_params(d, hidden, t);
  auto fill = [&](std::vector<double>& v) {
    for (double& x : v) x = rng.uniform01() - 0.5;
  };
  fill(p.g1.w1);
  fill(p.g1.b1);
  fill(p.g1.w2);
  fill(p.g1.b2);
  fill(p.g2.w1);
  fill(p.g2.b1);
  fill(p.g2.w2);
  fill(p.g2.b2);
  fill(p.g3.w);
  fill(p.g3.b);
  return p;
}

LabeledBatch random_batch(std::size_t n, std::size_t d, std::size_t t, RngStream rng) {
  LabeledBatch batch;
  batch.levels.emplace(LevelId::mid(), FeatureMatrix(n, d, rng.normals(n * d)));
  batch.levels.emplace(LevelId::last(), FeatureMatrix(n, d, rng.normals(n * d)));
  for (std::size_t i = 0; i < n; ++i)
    batch.labels.push_back(DomainId{static_cast<int>(rng.uniform_below(t))});
  return batch;
}

std::vector<std::vector<double>*> tensor_list(MdfnParams& p) {
  return {&p.g1.w1, &p.g1.b1, &p.g1.w2, &p.g1.b2, &p.g2.w1,
          &p.g2.b1, &p.g2.w2, &p.g2.b2, &p.g3.w,  &p.g3.b};
}

}  // namespace

TEST_CASE("forward_fuse is the identity on x_last at zero parameters") {
  const MdfnParams p = zero_params(3, 4, 2);
  const std::vector<double> x_mid{1.0, -2.0, 0.5};
  const std::vector<double> x_last{0.25, 4.0, -1.0};
  CHECK(forward_fuse(x_mid, x_last, p) == x_last);

  CHECK_THROWS_AS(forward_fuse(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0, 2.0},
                               zero_params(2, 4, 2)),
                  DimMismatch);
}

TEST_CASE("forward_fuse matches a hand-evaluated d=2 instance") {
  MdfnParams p = zero_params(2, 2, 2);
  p.g1.w1 = {1, 0, 0, 1};
  p.g1.w2 = {1, 1, 0, 1};
  p.g1.b2 = {0.5, -0.5};
  p.g2.w1 = {0, 1, 1, 0};
  p.g2.b1 = {0.1, 0.2};
  p.g2.w2 = {2, 0, 0, 3};

  const std::vector<double> x_mid{1.0, -2.0};
  const std::vector<double> x_last{0.5, 1.5};
  // g1: relu((1,-2)) = (1,0); r1 = (1*1+1*0+0.5, 0+1*0-0.5) = (1.5,-0.5)
  // g2: relu((1.6,0.7)) = (1.6,0.7); r2 = (3.2, 2.1)
  const std::vector<double> fused = forward_fuse(x_mid, x_last, p);
  CHECK(fused[0] == doctest::Approx(5.2).epsilon(1e-12));
  CHECK(fused[1] == doctest::Approx(3.1).epsilon(1e-12));
}

TEST_CASE("forward_logits and softmax") {
  const HeadParams zero = HeadParams::zeros(3, 4);
  const std::vector<double> logits = forward_logits(std::vector<double>{1.0, 2.0, 3.0}, zero);
  CHECK(logits == std::vector<double>{0.0, 0.0, 0.0, 0.0});
  const ProbVector uniform = softmax(logits);
  for (double v : uniform.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_NOTHROW(uniform.validate());

  HeadParams ident = HeadParams::zeros(2, 2);
  ident.w = {1, 0, 0, 1};
  ident.b = {0.5, -0.5};
  const std::vector<double> out = forward_logits(std::vector<double>{1.0, 0.0}, ident);
  CHECK(out[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(-0.5).epsilon(1e-12));

  CHECK_THROWS_AS(forward_logits(std::vector<double>{1.0}, ident), DimMismatch);
}

TEST_CASE("cross_entropy values") {
  CHECK(cross_entropy(std::vector<double>{30.0, 0.0}, DomainId{0}) <= 1e-12);
  CHECK(cross_entropy(std::vector<double>{0.0, 0.0, 0.0, 0.0}, DomainId{0}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(cross_entropy(std::vector<double>{1.0, 0.0}, DomainId{0}) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.0, 0.0}, DomainId{2}), BadLabel);
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.0, 0.0}, DomainId{-1}), BadLabel);
}

TEST_CASE("loss_and_grad at zero parameters") {
  const MdfnParams p = zero_params(3, 2, 2);
  LabeledBatch batch;
  RngStream rng(1, 0);
  batch.levels.emplace(LevelId::mid(), FeatureMatrix(4, 3, rng.normals(12)));
  batch.levels.emplace(LevelId::last(), FeatureMatrix(4, 3, rng.normals(12)));
  batch.labels = {DomainId{0}, DomainId{0}, DomainId{0}, DomainId{0}};

  const auto [loss, grad] = loss_and_grad(batch, p);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // softmax - onehot averaged: (0.5 - 1, 0.5 - 0)
  CHECK(grad.g3.b[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(grad.g3.b[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  const double eps = 1e-5;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const std::size_t d = 8, hidden = 4, t = 3, n = 12;
    MdfnParams p = random_params(d, hidden, t, RngStream(seed, 1));
    const LabeledBatch batch = random_batch(n, d, t, RngStream(seed, 2));

    MdfnParams grads = loss_and_grad(batch, p).second;
    const auto grad_tensors = tensor_list(grads);
    const auto param_tensors = tensor_list(p);

    double max_rel = 0.0;
    for (std::size_t ti = 0; ti < param_tensors.size(); ++ti) {
      std::vector<double>& tensor = *param_tensors[ti];
      for (std::size_t j = 0; j < tensor.size(); ++j) {
        const double saved = tensor[j];
        tensor[j] = saved + eps;
        const double up = loss_and_grad(batch, p).first;
        tensor[j] = saved - eps;
        const double down = loss_and_grad(batch, p).first;
        tensor[j] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double analytic = (*grad_tensors[ti])[j];
        const double rel =
            std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-3});
        max_rel = std::max(max_rel, rel);
      }
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("duplicated rows leave the mean loss and grads unchanged") {
  const std::size_t d = 4, hidden = 3, t = 2;
  const MdfnParams p = random_params(d, hidden, t, RngStream(5, 1));
  const LabeledBatch batch = random_batch(6, d, t, RngStream(5, 2));

  LabeledBatch doubled;
  std::vector<double> mid2, last2;
  const auto& mid = batch.level(LevelId::mid());
  const auto& last = batch.level(LevelId::last());
  for (int rep = 0; rep < 2; ++rep) {
    mid2.insert(mid2.end(), mid.data().begin(), mid.data().end());
    last2.insert(last2.end(), last.data().begin(), last.data().end());
    doubled.labels.insert(doubled.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  doubled.levels.emplace(LevelId::mid(), FeatureMatrix(12, d, std::move(mid2)));
  doubled.levels.emplace(LevelId::last(), FeatureMatrix(12, d, std::move(last2)));

  const auto [l1, g1] = loss_and_grad(batch, p);
  const auto [l2, g2] = loss_and_grad(doubled, p);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  for (std::size_t j = 0; j < g1.g3.w.size(); ++j)
    CHECK(g1.g3.w[j] == doctest::Approx(g2.g3.w[j]).epsilon(1e-12));
}

TEST_CASE("sgd_step arithmetic") {
  MdfnParams p = zero_params(1, 1, 1);
  MdfnParams g = zero_params(1, 1, 1);

  p.g3.w[0] = 1.0;
  p.g3.b[0] = 1.0;
  sgd_step(p, g, 0.01, 0.1);
  CHECK(p.g3.w[0] == doctest::Approx(0.999).epsilon(1e-15));  // decayed
  CHECK(p.g3.b[0] == doctest::Approx(1.0).epsilon(1e-15));    // biases not decayed

  MdfnParams q = random_params(3, 2, 2, RngStream(9, 0));
  const MdfnParams before = q;
  sgd_step(q, zero_params(3, 2, 2), 0.5, 0.0);
  CHECK(q.g3.w == before.g3.w);
  CHECK(q.g1.w1 == before.g1.w1);

  // reference update on a random small instance
  MdfnParams r = random_params(2, 2, 2, RngStream(10, 0));
  const MdfnParams grads = random_params(2, 2, 2, RngStream(10, 1));
  const MdfnParams orig = r;
  const double lr = 0.05, wd = 0.01;
  sgd_step(r, grads, lr, wd);
  for (std::size_t j = 0; j < r.g1.w1.size(); ++j)
    CHECK(r.g1.w1[j] ==
          doctest::Approx(orig.g1.w1[j] - lr * (grads.g1.w1[j] + wd * orig.g1.w1[j]))
              .epsilon(1e-12));
  for (std::size_t j = 0; j < r.g1.b1.size(); ++j)
    CHECK(r.g1.b1[j] == doctest::Approx(orig.g1.b1[j] - lr * grads.g1.b1[j]).epsilon(1e-12));
}

TEST_CASE("train separates two linearly separable domains") {
  const std::size_t d = 8, n = 100;
  RngStream rng(3, 0);
  std::vector<double> mid, last;
  std::vector<DomainId> labels;
  for (int domain = 0; domain < 2; ++domain) {
    const double center = domain == 0 ? -3.0 : 3.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (double v : rng.normals(d)) mid.push_back(center + v);
      for (double v : rng.normals(d)) last.push_back(center + v);
      labels.push_back(DomainId{domain});
    }
  }
  LabeledBatch batch;
  batch.levels.emplace(LevelId::mid(), FeatureMatrix(2 * n, d, std::move(mid)));
  batch.levels.emplace(LevelId::last(), FeatureMatrix(2 * n, d, std::move(last)));
  batch.labels = std::move(labels);

  TrainConfig cfg;
  cfg.seed = RngStream(4, 0);
  const TrainResult result = train(batch, 2, cfg);
  REQUIRE(result.loss_curve.size() == cfg.epochs);
  CHECK(result.loss_curve.back() < result.loss_curve.front());

  std::size_t correct = 0;
  const auto& bm = batch.level(LevelId::mid());
  const auto& bl = batch.level(LevelId::last());
  for (std::size_t i = 0; i < batch.n_rows(); ++i)
    if (predict(bm.row(i), bl.row(i), result.params).first == batch.labels[i]) ++correct;
  CHECK(correct == batch.n_rows());
}

TEST_CASE("train determinism and degenerate single-domain case") {
  const LabeledBatch batch = random_batch(40, 4, 1, RngStream(6, 0));
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = RngStream(7, 0);
  const TrainResult a = train(batch, 1, cfg);
  const TrainResult b = train(batch, 1, cfg);
  CHECK(a.params.g1.w1 == b.params.g1.w1);
  CHECK(a.params.g3.w == b.params.g3.w);
  CHECK(a.loss_curve == b.loss_curve);
  // single output: softmax is identically one, loss identically zero
  CHECK(a.loss_curve.back() == doctest::Approx(0.0).epsilon(1e-15));

  const auto [pred, probs] = predict(batch.level(LevelId::mid()).row(0),
                                     batch.level(LevelId::last()).row(0), a.params);
  CHECK(pred.index == 0);
  CHECK(probs.values == std::vector<double>{1.0});

  LabeledBatch empty;
  empty.levels.emplace(LevelId::mid(), FeatureMatrix::empty(4));
  empty.levels.emplace(LevelId::last(), FeatureMatrix::empty(4));
  CHECK_THROWS_AS(train(empty, 1, cfg), EmptyInput);

  LabeledBatch bad = random_batch(10, 4, 3, RngStream(8, 0));
  CHECK_THROWS_AS(train(bad, 2, cfg), BadLabel);
}

TEST_CASE("predict ties, probabilities and shift invariance") {
  // zero parameters: uniform probabilities, ties resolve to domain 0
  const MdfnParams zero = zero_params(2, 2, 3);
  const auto [pred_zero, probs_zero] =
      predict(std::vector<double>{1.0, 2.0}, std::vector<double>{0.5, -0.5}, zero);
  CHECK(pred_zero.index == 0);
  for (double v : probs_zero.values) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // forced logits (0, 5) via head biases
  MdfnParams forced = zero_params(1, 1, 2);
  forced.g3.b = {0.0, 5.0};
  const auto [pred, probs] =
      predict(std::vector<double>{0.0}, std::vector<double>{0.0}, forced);
  CHECK(pred.index == 1);
  CHECK(probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(5.0))).epsilon(1e-9));
  CHECK(probs[1] == doctest::Approx(std::exp(5.0) / (1.0 + std::exp(5.0))).epsilon(1e-9));
  CHECK(probs[0] == doctest::Approx(0.0066929).epsilon(1e-4));
  CHECK(probs[1] == doctest::Approx(0.9933071).epsilon(1e-4));

  // adding a constant to every logit changes nothing
  MdfnParams shifted = forced;
  shifted.g3.b = {10.0, 15.0};
  const auto [pred_s, probs_s] =
      predict(std::vector<double>{0.0}, std::vector<double>{0.0}, shifted);
  CHECK(pred_s == pred);
  for (std::size_t c = 0; c < 2; ++c)
    CHECK(probs_s[c] == doctest::Approx(probs[c]).epsilon(1e-12));
}
