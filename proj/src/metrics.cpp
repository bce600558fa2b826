#include "salstab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace salstab {

void MapBatch::validate() const {
  if (maps.empty()) throw std::invalid_argument("empty map batch");
  Eigen::Index m = maps.front().values.size();
  for (const auto& map : maps) {
    if (map.values.size() != m)
      throw std::invalid_argument("inconsistent map dimensions in batch");
  }
  if (grid && static_cast<Eigen::Index>(grid->first) * grid->second != m)
    throw std::invalid_argument("grid does not match map dimension");
}

double pairwise_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  std::vector<double> acc = values;
  while (acc.size() > 1) {
    std::size_t half = (acc.size() + 1) / 2;
    for (std::size_t i = 0; i + half < acc.size(); ++i) acc[i] += acc[i + half];
    acc.resize(half);
  }
  return acc[0] / static_cast<double>(values.size());
}

namespace {

ProxyResult summarize(const std::vector<double>& per_sample) {
  ProxyResult r;
  r.mean = pairwise_mean(per_sample);
  if (per_sample.size() > 1) {
    std::vector<double> sq(per_sample.size());
    for (std::size_t i = 0; i < per_sample.size(); ++i) {
      double d = per_sample[i] - r.mean;
      sq[i] = d * d;
    }
    double var = pairwise_mean(sq) * per_sample.size() / (per_sample.size() - 1);
    r.stderr_ = std::sqrt(var / static_cast<double>(per_sample.size()));
  }
  return r;
}

}  // namespace

ProxyResult stability_proxy(const MapBatch& a, const MapBatch& b) {
  a.validate();
  b.validate();
  if (a.maps.size() != b.maps.size() ||
      a.maps.front().values.size() != b.maps.front().values.size())
    throw std::invalid_argument("misaligned map batches");
  std::vector<double> dists(a.maps.size());
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    dists[i] = (a.maps[i].values - b.maps[i].values).norm();
  return summarize(dists);
}

ProxyResult fidelity_proxy(const Network& net, SaliencyMethod base,
                           const LabeledDataset& eval_set,
                           const SmoothingConfig& cfg,
                           const IntegratedGradParams& ig_params) {
  if (cfg.sigma < 0) throw std::invalid_argument("sigma must be nonnegative");
  if (cfg.sigma == 0.0) return {0.0, 0.0};
  std::vector<double> dists(static_cast<std::size_t>(eval_set.size()));
  for (Eigen::Index i = 0; i < eval_set.size(); ++i) {
    Vector x = eval_set.features.row(i).transpose();
    int y = eval_set.labels[static_cast<std::size_t>(i)];
    SaliencyMap smoothed = smoothed_saliency(base, net, x, y, cfg, ig_params);
    Vector plain = base == SaliencyMethod::kSimpleGrad
                       ? simple_grad(net, x, y).values
                       : integrated_grad(net, x, y,
                                         ig_params.baseline.size() > 0
                                             ? ig_params.baseline
                                             : Vector(Vector::Zero(x.size())),
                                         ig_params.n_steps)
                             .values;
    dists[static_cast<std::size_t>(i)] = (smoothed.values - plain).norm();
  }
  return summarize(dists);
}

namespace {

Eigen::MatrixXd abs_minmax_grid(const Vector& v, int h, int w) {
  Eigen::MatrixXd g(h, w);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double a = std::abs(v[i]);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  double span = hi - lo;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double a = std::abs(v[static_cast<Eigen::Index>(r) * w + c]);
      g(r, c) = span > 0 ? (a - lo) / span : 0.0;
    }
  return g;
}

Eigen::MatrixXd gaussian_window(int side, double sigma) {
  Eigen::MatrixXd win(side, side);
  double half = (side - 1) / 2.0;
  double sum = 0.0;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      double dr = r - half, dc = c - half;
      win(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      sum += win(r, c);
    }
  return win / sum;
}

}  // namespace

double ssim(const Vector& a, const Vector& b, int height, int width,
            const SsimConfig& cfg) {
  if (a.size() != b.size())
    throw std::invalid_argument("map dimension mismatch");
  if (static_cast<Eigen::Index>(height) * width != a.size())
    throw std::invalid_argument("grid does not match map dimension");
  if (height < cfg.window || width < cfg.window)
    throw std::invalid_argument("grid smaller than SSIM window");

  Eigen::MatrixXd ga = abs_minmax_grid(a, height, width);
  Eigen::MatrixXd gb = abs_minmax_grid(b, height, width);
  Eigen::MatrixXd win = gaussian_window(cfg.window, cfg.window_sigma);

  double c1 = cfg.k1 * cfg.data_range, c2 = cfg.k2 * cfg.data_range;
  c1 *= c1;
  c2 *= c2;

  std::vector<double> local;
  local.reserve(static_cast<std::size_t>((height - cfg.window + 1)) *
                (width - cfg.window + 1));
  for (int r = 0; r + cfg.window <= height; ++r) {
    for (int c = 0; c + cfg.window <= width; ++c) {
      auto pa = ga.block(r, c, cfg.window, cfg.window);
      auto pb = gb.block(r, c, cfg.window, cfg.window);
      double mu_a = (win.array() * pa.array()).sum();
      double mu_b = (win.array() * pb.array()).sum();
      double ex2_a = (win.array() * pa.array().square()).sum();
      double ex2_b = (win.array() * pb.array().square()).sum();
      double exy = (win.array() * pa.array() * pb.array()).sum();
      double var_a = ex2_a - mu_a * mu_a;
      double var_b = ex2_b - mu_b * mu_b;
      double cov = exy - mu_a * mu_b;
      local.push_back(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                      ((mu_a * mu_a + mu_b * mu_b + c1) *
                       (var_a + var_b + c2)));
    }
  }
  return pairwise_mean(local);
}

namespace {

std::vector<Eigen::Index> top_k_indices(const Vector& v, int k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) {
    double ai = std::abs(v[i]), aj = std::abs(v[j]);
    if (ai != aj) return ai > aj;
    return i < j;
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

double topk_miou(const SaliencyMap& a, const SaliencyMap& b, int k) {
  if (a.values.size() != b.values.size())
    throw std::invalid_argument("map dimension mismatch");
  if (k < 1 || k > a.values.size())
    throw std::invalid_argument("k out of range");
  auto ia = top_k_indices(a.values, k);
  auto ib = top_k_indices(b.values, k);
  std::set<Eigen::Index> sa(ia.begin(), ia.end());
  int inter = 0;
  for (Eigen::Index i : ib) inter += sa.count(i) ? 1 : 0;
  int uni = 2 * k - inter;
  return static_cast<double>(inter) / uni;
}

double topk_miou_batch(const MapBatch& a, const MapBatch& b, int k) {
  a.validate();
  b.validate();
  if (a.maps.size() != b.maps.size())
    throw std::invalid_argument("misaligned map batches");
  std::vector<double> ious(a.maps.size());
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    ious[i] = topk_miou(a.maps[i], b.maps[i], k);
  return pairwise_mean(ious);
}

BiasVariance bias_variance(const std::vector<Network>& models,
                           SaliencyMethod base, const LabeledDataset& eval_set,
                           const SmoothingConfig& cfg,
                           const IntegratedGradParams& ig_params) {
  if (models.size() < 2)
    throw std::invalid_argument("bias_variance needs >= 2 models");
  const std::size_t n_models = models.size();
  const Eigen::Index n = eval_set.size();
  std::vector<double> fid;
  std::vector<double> var;
  fid.reserve(static_cast<std::size_t>(n) * n_models);
  var.reserve(static_cast<std::size_t>(n) * n_models);

  for (Eigen::Index i = 0; i < n; ++i) {
    Vector x = eval_set.features.row(i).transpose();
    int y = eval_set.labels[static_cast<std::size_t>(i)];
    std::vector<Vector> smoothed(n_models);
    Vector ensemble = Vector::Zero(x.size());
    for (std::size_t j = 0; j < n_models; ++j) {
      if (cfg.sigma > 0) {
        smoothed[j] =
            smoothed_saliency(base, models[j], x, y, cfg, ig_params).values;
      } else {
        smoothed[j] =
            base == SaliencyMethod::kSimpleGrad
                ? simple_grad(models[j], x, y).values
                : integrated_grad(models[j], x, y,
                                  ig_params.baseline.size() > 0
                                      ? ig_params.baseline
                                      : Vector(Vector::Zero(x.size())),
                                  ig_params.n_steps)
                      .values;
      }
      ensemble += smoothed[j];
    }
    ensemble /= static_cast<double>(n_models);
    for (std::size_t j = 0; j < n_models; ++j) {
      if (cfg.sigma > 0) {
        Vector plain =
            base == SaliencyMethod::kSimpleGrad
                ? simple_grad(models[j], x, y).values
                : integrated_grad(models[j], x, y,
                                  ig_params.baseline.size() > 0
                                      ? ig_params.baseline
                                      : Vector(Vector::Zero(x.size())),
                                  ig_params.n_steps)
                      .values;
        fid.push_back((smoothed[j] - plain).norm());
      } else {
        fid.push_back(0.0);
      }
      var.push_back((smoothed[j] - ensemble).squaredNorm());
    }
  }
  return {pairwise_mean(fid), pairwise_mean(var)};
}

namespace {

Vector plain_map(const Network& net, const Vector& x, int y,
                 SaliencyMethod base, const IntegratedGradParams& ig) {
  if (base == SaliencyMethod::kSimpleGrad) return simple_grad(net, x, y).values;
  Vector x0 =
      ig.baseline.size() > 0 ? ig.baseline : Vector(Vector::Zero(x.size()));
  return integrated_grad(net, x, y, x0, ig.n_steps).values;
}

double mean_distance_to_reference(const Network& net,
                                  const std::vector<Network>& models,
                                  const LabeledDataset& set,
                                  SaliencyMethod base,
                                  const IntegratedGradParams& ig) {
  std::vector<double> dists(static_cast<std::size_t>(set.size()));
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    Vector x = set.features.row(i).transpose();
    int y = set.labels[static_cast<std::size_t>(i)];
    Vector ref = Vector::Zero(x.size());
    for (const auto& m : models) ref += plain_map(m, x, y, base, ig);
    ref /= static_cast<double>(models.size());
    dists[static_cast<std::size_t>(i)] =
        (plain_map(net, x, y, base, ig) - ref).norm();
  }
  return pairwise_mean(dists);
}

}  // namespace

double saliency_generalization_gap(
    const std::vector<Network>& models,
    const std::vector<LabeledDataset>& train_sets,
    const LabeledDataset& eval_set, SaliencyMethod base,
    const IntegratedGradParams& ig_params) {
  if (models.size() < 2)
    throw std::invalid_argument("ensemble must have >= 2 models");
  if (models.size() != train_sets.size())
    throw std::invalid_argument("each model needs its training set");
  if (eval_set.size() == 0) throw std::invalid_argument("empty eval set");
  std::vector<double> gaps(models.size());
  for (std::size_t j = 0; j < models.size(); ++j) {
    if (train_sets[j].size() == 0)
      throw std::invalid_argument("empty training set");
    double test_loss = mean_distance_to_reference(models[j], models, eval_set,
                                                  base, ig_params);
    double train_loss = mean_distance_to_reference(models[j], models,
                                                   train_sets[j], base,
                                                   ig_params);
    gaps[j] = test_loss - train_loss;
  }
  return pairwise_mean(gaps);
}

}  // namespace salstab
