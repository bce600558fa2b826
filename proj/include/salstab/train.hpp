#pragma once

#include <cstdint>
#include <vector>

#include "salstab/data.hpp"
#include "salstab/network.hpp"

namespace salstab {

enum class TrainVariant { kVanilla, kNoisy };
enum class Sampling { kUniformWithReplacement, kRandomPermutationEpochs };

struct TrainConfig {
  TrainVariant variant = TrainVariant::kVanilla;
  double step_c = 0.1;  // alpha_t = step_c / t
  int iterations = 1;   // T
  double kappa = 0.0;   // parameter-noise std, noisy variant only
  int noise_mc = 1;     // samples per noisy-gradient estimate
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::kUniformWithReplacement;

  void validate() const;
};

struct SplitPlan {
  int n_splits = 2;
  std::uint64_t seed = 0;
  int split_size = 0;
};

// W_{t+1} = W_t - (c/t) grad l(W_t, x_i, y_i), i drawn per cfg.sampling.
// Pure function of (init, data, cfg).
Network sgd_train(const Network& init, const LabeledDataset& data,
                  const TrainConfig& cfg);

// Same schedule, but each step averages cfg.noise_mc gradients taken at
// W_t + V_j with V_j ~ N(0, kappa^2 I) over the flat parameters.
Network noisy_sgd_train(const Network& init, const LabeledDataset& data,
                        const TrainConfig& cfg);

// Fisher-Yates shuffle of all indices with plan.seed, then consecutive
// chunks of split_size. Chunks are pairwise disjoint.
std::vector<LabeledDataset> split_dataset(const LabeledDataset& data,
                                          const SplitPlan& plan);

// Shuffled index order used by split_dataset; chunk i covers
// [i * split_size, (i+1) * split_size). Exposed so a harness can carve a
// held-out evaluation set disjoint from every split.
std::vector<Eigen::Index> split_index_order(Eigen::Index n,
                                            std::uint64_t seed);

LabeledDataset take_rows(const LabeledDataset& data,
                         const std::vector<Eigen::Index>& indices);

// Uniform init on [-a, a], a = sqrt(6 / (fan_in + fan_out)).
Network init_network(const std::vector<Eigen::Index>& dims,
                     Activation activation, std::uint64_t seed);

}  // namespace salstab
