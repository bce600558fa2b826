#include "salstab/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "salstab/rng.hpp"

namespace salstab {

void TrainConfig::validate() const {
  if (step_c < 0) throw std::invalid_argument("step_c must be nonnegative");
  if (iterations < 1) throw std::invalid_argument("need at least 1 iteration");
  if (variant == TrainVariant::kNoisy && kappa <= 0)
    throw std::invalid_argument("noisy SGD requires kappa > 0");
  if (noise_mc < 1) throw std::invalid_argument("noise_mc must be >= 1");
}

namespace {

// Index stream shared by both trainers; permutation mode reshuffles per epoch.
class SampleOrder {
 public:
  SampleOrder(Eigen::Index n, Sampling mode, std::uint64_t seed)
      : n_(n), mode_(mode), rng_(CounterRng::derive(seed, 0x5a)) {
    if (n_ == 0) throw std::invalid_argument("empty dataset");
    if (mode_ == Sampling::kRandomPermutationEpochs) {
      perm_.resize(static_cast<std::size_t>(n_));
      std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
    }
  }

  Eigen::Index next() {
    if (mode_ == Sampling::kUniformWithReplacement)
      return static_cast<Eigen::Index>(rng_.next_index(static_cast<std::size_t>(n_)));
    if (pos_ == perm_.size()) pos_ = 0;
    if (pos_ == 0) {
      for (std::size_t i = perm_.size(); i > 1; --i) {
        std::size_t j = rng_.next_index(i);
        std::swap(perm_[i - 1], perm_[j]);
      }
    }
    return perm_[pos_++];
  }

 private:
  Eigen::Index n_;
  Sampling mode_;
  CounterRng rng_;
  std::vector<Eigen::Index> perm_;
  std::size_t pos_ = 0;
};

void check_train_inputs(const Network& init, const LabeledDataset& data) {
  init.validate();
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  if (data.dim() != init.input_dim())
    throw std::invalid_argument("network/dataset dimension mismatch");
  if (data.num_classes > init.output_dim())
    throw std::invalid_argument("network has fewer outputs than classes");
}

}  // namespace

Network sgd_train(const Network& init, const LabeledDataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  check_train_inputs(init, data);
  SampleOrder order(data.size(), cfg.sampling, cfg.seed);
  FlatParams params = flatten(init);
  Network net = init;
  for (int t = 1; t <= cfg.iterations; ++t) {
    Eigen::Index i = order.next();
    Vector x = data.features.row(i).transpose();
    FlatParams g = param_gradient(net, x, data.labels[static_cast<std::size_t>(i)]);
    params.values -= (cfg.step_c / t) * g.values;
    net = unflatten(init, params);
  }
  return net;
}

Network noisy_sgd_train(const Network& init, const LabeledDataset& data,
                        const TrainConfig& cfg) {
  if (cfg.variant != TrainVariant::kNoisy)
    throw std::invalid_argument("noisy_sgd_train requires the Noisy variant");
  cfg.validate();
  check_train_inputs(init, data);
  SampleOrder order(data.size(), cfg.sampling, cfg.seed);
  CounterRng noise(CounterRng::derive(cfg.seed, 0xa5));
  FlatParams params = flatten(init);
  Network net = init;
  Vector perturb(params.values.size());
  for (int t = 1; t <= cfg.iterations; ++t) {
    Eigen::Index i = order.next();
    Vector x = data.features.row(i).transpose();
    int y = data.labels[static_cast<std::size_t>(i)];
    Vector avg = Vector::Zero(params.values.size());
    for (int j = 0; j < cfg.noise_mc; ++j) {
      noise.fill_gaussian(perturb, cfg.kappa);
      FlatParams shifted{params.values + perturb};
      avg += param_gradient(unflatten(init, shifted), x, y).values;
    }
    params.values -= (cfg.step_c / t) / cfg.noise_mc * avg;
    net = unflatten(init, params);
  }
  return net;
}

std::vector<Eigen::Index> split_index_order(Eigen::Index n,
                                            std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  CounterRng rng(CounterRng::derive(seed, 0x51));
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = rng.next_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

LabeledDataset take_rows(const LabeledDataset& data,
                         const std::vector<Eigen::Index>& indices) {
  LabeledDataset out = data;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), data.dim());
  out.labels.resize(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = data.features.row(indices[r]);
    out.labels[r] = data.labels[static_cast<std::size_t>(indices[r])];
  }
  return out;
}

std::vector<LabeledDataset> split_dataset(const LabeledDataset& data,
                                          const SplitPlan& plan) {
  if (plan.n_splits < 1 || plan.split_size < 1)
    throw std::invalid_argument("split plan must be positive");
  if (static_cast<Eigen::Index>(plan.n_splits) * plan.split_size > data.size())
    throw std::invalid_argument("insufficient data for split plan");
  auto order = split_index_order(data.size(), plan.seed);
  std::vector<LabeledDataset> out;
  out.reserve(static_cast<std::size_t>(plan.n_splits));
  for (int s = 0; s < plan.n_splits; ++s) {
    std::vector<Eigen::Index> chunk(
        order.begin() + static_cast<std::ptrdiff_t>(s) * plan.split_size,
        order.begin() + static_cast<std::ptrdiff_t>(s + 1) * plan.split_size);
    out.push_back(take_rows(data, chunk));
  }
  return out;
}

Network init_network(const std::vector<Eigen::Index>& dims,
                     Activation activation, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least 2 dims");
  Network net;
  net.activation = activation;
  CounterRng rng(CounterRng::derive(seed, 0x17));
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Eigen::Index fan_in = dims[i], fan_out = dims[i + 1];
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) w(r, c) = rng.next_symmetric(a);
    net.weights.push_back(std::move(w));
  }
  return net;
}

}  // namespace salstab
