#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "salstab/data.hpp"
#include "salstab/network.hpp"
#include "salstab/rng.hpp"
#include "salstab/train.hpp"

using namespace salstab;

namespace {

bool same_weights(const Network& a, const Network& b) {
  if (a.weights.size() != b.weights.size()) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    if (!(a.weights[l].array() == b.weights[l].array()).all()) return false;
  return true;
}

LabeledDataset tiny_blobs(int n = 60, int m = 6, std::uint64_t seed = 4) {
  return synth_blobs(n, m, 3, 3.0, seed);
}

}  // namespace

TEST_CASE("sgd_train is a pure function of init, data, config") {
  auto data = tiny_blobs();
  Network init = init_network({6, 5, 3}, Activation::kTanh, 1);
  TrainConfig cfg;
  cfg.step_c = 0.1;
  cfg.iterations = 200;
  cfg.seed = 42;
  Network a = sgd_train(init, data, cfg);
  Network b = sgd_train(init, data, cfg);
  CHECK(same_weights(a, b));
  CHECK_FALSE(same_weights(a, init));

  cfg.seed = 43;
  Network c = sgd_train(init, data, cfg);
  CHECK_FALSE(same_weights(a, c));
}

TEST_CASE("distinct reference seeds yield distinct models") {
  auto data = tiny_blobs();
  Network init = init_network({6, 5, 3}, Activation::kTanh, 1);
  TrainConfig cfg;
  cfg.step_c = 0.1;
  cfg.iterations = 100;
  std::vector<Network> models;
  for (std::uint64_t s : {10007ULL, 5678ULL, 12345ULL}) {
    cfg.seed = s;
    models.push_back(sgd_train(init, data, cfg));
  }
  CHECK_FALSE(same_weights(models[0], models[1]));
  CHECK_FALSE(same_weights(models[0], models[2]));
  CHECK_FALSE(same_weights(models[1], models[2]));
}

TEST_CASE("zero step size leaves the network unchanged") {
  auto data = tiny_blobs();
  Network init = init_network({6, 4, 3}, Activation::kTanh, 2);
  TrainConfig cfg;
  cfg.step_c = 0.0;
  cfg.iterations = 50;
  CHECK(same_weights(sgd_train(init, data, cfg), init));
}

TEST_CASE("single-step single-sample update unrolls by hand") {
  LabeledDataset data = tiny_blobs(1, 4, 9);
  data.num_classes = 3;
  Network init = init_network({4, 3, 3}, Activation::kTanh, 3);
  TrainConfig cfg;
  cfg.step_c = 0.25;
  cfg.iterations = 1;
  cfg.seed = 77;
  Network out = sgd_train(init, data, cfg);

  Vector x = data.features.row(0).transpose();
  FlatParams expect = flatten(init);
  expect.values -= 0.25 * param_gradient(init, x, data.labels[0]).values;
  Network manual = unflatten(init, expect);
  CHECK(same_weights(out, manual));
}

TEST_CASE("alpha_t follows c over t across two steps") {
  LabeledDataset data = tiny_blobs(1, 4, 9);
  Network init = init_network({4, 3, 3}, Activation::kTanh, 3);
  TrainConfig cfg;
  cfg.step_c = 0.2;
  cfg.iterations = 2;
  Network out = sgd_train(init, data, cfg);

  Vector x = data.features.row(0).transpose();
  int y = data.labels[0];
  FlatParams w = flatten(init);
  w.values -= (0.2 / 1.0) * param_gradient(init, x, y).values;
  Network step1 = unflatten(init, w);
  w.values -= (0.2 / 2.0) * param_gradient(step1, x, y).values;
  CHECK(same_weights(out, unflatten(init, w)));
}

TEST_CASE("noisy SGD approaches vanilla as kappa shrinks") {
  auto data = tiny_blobs();
  Network init = init_network({6, 5, 3}, Activation::kTanh, 5);
  TrainConfig vanilla;
  vanilla.step_c = 0.1;
  vanilla.iterations = 50;
  vanilla.seed = 8;
  Network a = sgd_train(init, data, vanilla);

  TrainConfig noisy = vanilla;
  noisy.variant = TrainVariant::kNoisy;
  noisy.kappa = 1e-9;
  Network b = noisy_sgd_train(init, data, noisy);
  double diff = (flatten(a).values - flatten(b).values).norm();
  CHECK(diff < 1e-6);
}

TEST_CASE("noisy gradient estimate is nearly unbiased for small kappa") {
  Network net = init_network({4, 4, 3}, Activation::kTanh, 6);
  CounterRng rng(13);
  Vector x(4);
  rng.fill_gaussian(x, 1.0);
  int y = 0;
  FlatParams base = flatten(net);
  Vector truth = param_gradient(net, x, y).values;
  Vector mean = Vector::Zero(truth.size());
  Vector v(truth.size());
  const int draws = 400;
  const double kappa = 0.05;
  for (int d = 0; d < draws; ++d) {
    rng.fill_gaussian(v, kappa);
    mean += param_gradient(unflatten(net, FlatParams{base.values + v}), x, y)
                .values;
  }
  mean /= draws;
  // bias is O(kappa^2) plus MC error of order kappa/sqrt(draws)
  CHECK((mean - truth).norm() < 0.05);
}

TEST_CASE("split_index_order is a deterministic permutation") {
  auto a = split_index_order(100, 17);
  auto b = split_index_order(100, 17);
  CHECK(a == b);
  auto c = split_index_order(100, 18);
  CHECK(a != c);
  std::set<Eigen::Index> seen(a.begin(), a.end());
  CHECK(seen.size() == 100);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 99);
}

TEST_CASE("split_dataset yields disjoint chunks matching the index order") {
  auto data = tiny_blobs(50, 4, 2);
  SplitPlan plan{3, 99, 12};
  auto splits = split_dataset(data, plan);
  REQUIRE(splits.size() == 3);
  auto order = split_index_order(data.size(), plan.seed);
  for (int s = 0; s < 3; ++s) {
    CHECK(splits[s].size() == 12);
    for (int r = 0; r < 12; ++r) {
      Eigen::Index src = order[static_cast<std::size_t>(s * 12 + r)];
      CHECK((splits[s].features.row(r).array() ==
             data.features.row(src).array())
                .all());
      CHECK(splits[s].labels[static_cast<std::size_t>(r)] ==
            data.labels[static_cast<std::size_t>(src)]);
    }
  }
  CHECK_THROWS(split_dataset(data, SplitPlan{5, 99, 12}));
}

TEST_CASE("permutation sampling touches every sample once per epoch") {
  // n steps of permutation SGD with a dataset of orthogonal one-hot inputs:
  // every step must pick a distinct sample, so the second epoch shuffle is
  // observable as a fresh visit pattern. Verified indirectly: permutation
  // and uniform sampling produce different trajectories under the same seed.
  auto data = tiny_blobs(30, 5, 3);
  Network init = init_network({5, 4, 3}, Activation::kTanh, 4);
  TrainConfig uni;
  uni.step_c = 0.1;
  uni.iterations = 30;
  uni.seed = 5;
  TrainConfig perm = uni;
  perm.sampling = Sampling::kRandomPermutationEpochs;
  CHECK_FALSE(same_weights(sgd_train(init, data, uni),
                           sgd_train(init, data, perm)));
  // same permutation seed twice: identical
  CHECK(same_weights(sgd_train(init, data, perm),
                     sgd_train(init, data, perm)));
}

TEST_CASE("init_network respects the uniform bound and determinism") {
  auto net = init_network({8, 6, 2}, Activation::kRelu, 123);
  CHECK(net.activation == Activation::kRelu);
  double a0 = std::sqrt(6.0 / (8 + 6));
  CHECK(net.weights[0].array().abs().maxCoeff() <= a0);
  auto again = init_network({8, 6, 2}, Activation::kRelu, 123);
  CHECK((net.weights[0].array() == again.weights[0].array()).all());
  auto other = init_network({8, 6, 2}, Activation::kRelu, 124);
  CHECK_FALSE((net.weights[0].array() == other.weights[0].array()).all());
}

TEST_CASE("config validation rejects bad values") {
  TrainConfig cfg;
  cfg.step_c = -1.0;
  CHECK_THROWS(cfg.validate());
  cfg.step_c = 0.1;
  cfg.iterations = 0;
  CHECK_THROWS(cfg.validate());
  cfg.iterations = 1;
  cfg.variant = TrainVariant::kNoisy;
  cfg.kappa = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg.kappa = 0.5;
  CHECK_NOTHROW(cfg.validate());
}
