#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salstab/data.hpp"
#include "salstab/saliency.hpp"

namespace salstab {

struct MapBatch {
  std::vector<SaliencyMap> maps;  // one per evaluation sample, same m
  std::optional<std::pair<int, int>> grid;  // (H, W) reshape for SSIM
  std::string producing_model;

  void validate() const;
};

struct SsimConfig {
  int window = 11;            // Gaussian window side
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
  // sample-covariance correction stays off to match the reference SSIM
};

// Order-independent deterministic reduction for batch means.
double pairwise_mean(const std::vector<double>& values);

struct ProxyResult {
  double mean = 0.0;
  double stderr_ = 0.0;  // standard error over the evaluation samples
};

// Eq.-style stability proxy: mean over samples of ||map_a - map_b||_2.
ProxyResult stability_proxy(const MapBatch& a, const MapBatch& b);

// Mean over samples of ||smoothed map - base map||_2; sigma = 0 is 0 by
// definition. `cfg.sigma` is absolute.
ProxyResult fidelity_proxy(const Network& net, SaliencyMethod base,
                           const LabeledDataset& eval_set,
                           const SmoothingConfig& cfg,
                           const IntegratedGradParams& ig_params = {});

// Mean local SSIM with a Gaussian window over valid positions. Both maps
// are taken element-wise absolute and min-max normalized to [0,1] first
// (a constant map normalizes to all-zeros); data_range is then 1.
double ssim(const Vector& a, const Vector& b, int height, int width,
            const SsimConfig& cfg = {});

// IoU of the index sets of the k largest |values|; ties broken by
// ascending index.
double topk_miou(const SaliencyMap& a, const SaliencyMap& b, int k);
double topk_miou_batch(const MapBatch& a, const MapBatch& b, int k);

struct BiasVariance {
  double avg_fidelity = 0.0;  // mean ||smoothed - unsmoothed||
  double avg_variance = 0.0;  // mean ||smoothed - ensemble mean||^2
};

BiasVariance bias_variance(const std::vector<Network>& models,
                           SaliencyMethod base,
                           const LabeledDataset& eval_set,
                           const SmoothingConfig& cfg,
                           const IntegratedGradParams& ig_params = {});

// Finite-ensemble estimate of the saliency generalization gap: the
// reference map is the ensemble mean; for each model, mean map-distance
// over eval_set minus mean over its own training set, averaged over models.
double saliency_generalization_gap(const std::vector<Network>& models,
                                   const std::vector<LabeledDataset>& train_sets,
                                   const LabeledDataset& eval_set,
                                   SaliencyMethod base,
                                   const IntegratedGradParams& ig_params = {});

}  // namespace salstab
