#include "salstab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "salstab/rng.hpp"

namespace salstab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Sampling sampling_from_name(const std::string& s) {
  if (s == "uniform") return Sampling::kUniformWithReplacement;
  if (s == "permutation") return Sampling::kRandomPermutationEpochs;
  throw std::runtime_error("train.sampling: unknown mode '" + s + "'");
}

std::string sampling_name(Sampling s) {
  return s == Sampling::kUniformWithReplacement ? "uniform" : "permutation";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_toml(const toml::Document& doc) {
  ExperimentConfig cfg;
  cfg.dataset_kind = doc.get_string("dataset.kind", cfg.dataset_kind);
  cfg.synth_n = static_cast<int>(doc.get_int("dataset.n", cfg.synth_n));
  cfg.synth_m = static_cast<int>(doc.get_int("dataset.m", cfg.synth_m));
  cfg.synth_classes =
      static_cast<int>(doc.get_int("dataset.classes", cfg.synth_classes));
  cfg.synth_separation =
      doc.get_double("dataset.separation", cfg.synth_separation);
  cfg.synth_seed = static_cast<std::uint64_t>(
      doc.get_int("dataset.seed", static_cast<std::int64_t>(cfg.synth_seed)));
  cfg.idx_images = doc.get_string("dataset.images", "");
  cfg.idx_labels = doc.get_string("dataset.labels", "");
  cfg.csv_path = doc.get_string("dataset.path", "");
  cfg.csv_label_column =
      doc.get_string("dataset.label_column", cfg.csv_label_column);
  cfg.norm_cap = doc.get_double("dataset.norm_cap", cfg.norm_cap);
  if (doc.contains("dataset.grid")) {
    auto g = doc.at("dataset.grid").as_int_array();
    if (g.size() != 2) throw std::runtime_error("dataset.grid: expected [H, W]");
    cfg.grid = {static_cast<int>(g[0]), static_cast<int>(g[1])};
  }

  cfg.split.n_splits =
      static_cast<int>(doc.get_int("split.n_splits", cfg.split.n_splits));
  cfg.split.split_size =
      static_cast<int>(doc.get_int("split.split_size", cfg.split.split_size));
  cfg.split.seed = static_cast<std::uint64_t>(
      doc.get_int("split.seed", static_cast<std::int64_t>(cfg.split.seed)));
  cfg.shared_init = doc.get_bool("split.shared_init", cfg.shared_init);

  if (doc.contains("network.hidden")) {
    cfg.hidden.clear();
    for (auto v : doc.at("network.hidden").as_int_array())
      cfg.hidden.push_back(static_cast<Eigen::Index>(v));
  }
  cfg.activation =
      activation_from_name(doc.get_string("network.activation", "tanh"));
  cfg.init_seed = static_cast<std::uint64_t>(doc.get_int(
      "network.init_seed", static_cast<std::int64_t>(cfg.init_seed)));
  if (doc.contains("network.project_caps"))
    cfg.project_caps = doc.at("network.project_caps").as_double_array();

  std::string variant = doc.get_string("train.variant", "vanilla");
  if (variant == "vanilla") {
    cfg.train.variant = TrainVariant::kVanilla;
  } else if (variant == "noisy") {
    cfg.train.variant = TrainVariant::kNoisy;
  } else {
    throw std::runtime_error("train.variant: unknown variant '" + variant + "'");
  }
  cfg.train.step_c = doc.get_double("train.step_c", cfg.train.step_c);
  cfg.train.iterations =
      static_cast<int>(doc.get_int("train.iterations", cfg.train.iterations));
  cfg.train.kappa = doc.get_double("train.kappa", cfg.train.kappa);
  cfg.train.noise_mc =
      static_cast<int>(doc.get_int("train.noise_mc", cfg.train.noise_mc));
  cfg.train.seed = static_cast<std::uint64_t>(
      doc.get_int("train.seed", static_cast<std::int64_t>(cfg.train.seed)));
  cfg.train.sampling =
      sampling_from_name(doc.get_string("train.sampling", "uniform"));

  if (doc.contains("saliency.methods")) {
    cfg.methods.clear();
    for (const auto& name : doc.at("saliency.methods").as_string_array())
      cfg.methods.push_back(method_from_name(name));
  }
  if (doc.contains("saliency.sigma_ratios"))
    cfg.sigma_ratios = doc.at("saliency.sigma_ratios").as_double_array();
  cfg.n_samples =
      static_cast<int>(doc.get_int("saliency.n_samples", cfg.n_samples));
  cfg.smoothing_seed = static_cast<std::uint64_t>(doc.get_int(
      "saliency.seed", static_cast<std::int64_t>(cfg.smoothing_seed)));
  cfg.normalize_input =
      doc.get_bool("saliency.normalize_input", cfg.normalize_input);
  cfg.common_random_numbers =
      doc.get_bool("saliency.common_random_numbers", cfg.common_random_numbers);
  cfg.ig_steps = static_cast<int>(doc.get_int("saliency.ig_steps", cfg.ig_steps));

  cfg.eval_size = static_cast<int>(doc.get_int("eval.size", cfg.eval_size));
  cfg.eval_seed = static_cast<std::uint64_t>(
      doc.get_int("eval.seed", static_cast<std::int64_t>(cfg.eval_seed)));
  cfg.topk = static_cast<int>(doc.get_int("eval.topk", cfg.topk));

  cfg.out_dir = doc.get_string("output.dir", cfg.out_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_toml(toml::Document::parse_file(path));
}

void ExperimentConfig::validate() const {
  if (dataset_kind != "synth_blobs" && dataset_kind != "idx" &&
      dataset_kind != "csv")
    throw std::runtime_error("dataset.kind: unknown kind '" + dataset_kind + "'");
  if (methods.empty())
    throw std::runtime_error("saliency.methods: need at least one method");
  for (auto m : methods) {
    if (m != SaliencyMethod::kSimpleGrad && m != SaliencyMethod::kIntegratedGrad)
      throw std::runtime_error(
          "saliency.methods: sweep methods must be unsmoothed bases");
  }
  for (std::size_t i = 0; i < sigma_ratios.size(); ++i) {
    if (sigma_ratios[i] < 0)
      throw std::runtime_error("saliency.sigma_ratios: must be nonnegative");
    if (i > 0 && sigma_ratios[i] <= sigma_ratios[i - 1])
      throw std::runtime_error("saliency.sigma_ratios: must be ascending");
  }
  if (split.n_splits < 1)
    throw std::runtime_error("split.n_splits: must be >= 1");
  if (split.split_size < 1)
    throw std::runtime_error("split.split_size: must be >= 1");
  if (eval_size < 1) throw std::runtime_error("eval.size: must be >= 1");
  if (hidden.empty())
    throw std::runtime_error("network.hidden: need at least one hidden layer");
  train.validate();
}

LabeledDataset build_dataset(const ExperimentConfig& cfg) {
  LabeledDataset d;
  if (cfg.dataset_kind == "synth_blobs") {
    d = synth_blobs(cfg.synth_n, cfg.synth_m, cfg.synth_classes,
                    cfg.synth_separation, cfg.synth_seed);
  } else if (cfg.dataset_kind == "idx") {
    d = load_idx(cfg.idx_images, cfg.idx_labels);
  } else {
    d = load_csv(cfg.csv_path, cfg.csv_label_column);
  }
  if (cfg.norm_cap > 0) d = normalize(d, cfg.norm_cap);
  if (cfg.grid) {
    if (static_cast<Eigen::Index>(cfg.grid->first) * cfg.grid->second != d.dim())
      throw std::runtime_error("dataset.grid: H*W does not match dimension");
    d.grid = cfg.grid;
  }
  return d;
}

namespace {

std::string canonical_config(const ExperimentConfig& cfg) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "kind=" << cfg.dataset_kind << ";n=" << cfg.synth_n
     << ";m=" << cfg.synth_m << ";classes=" << cfg.synth_classes
     << ";sep=" << cfg.synth_separation << ";dseed=" << cfg.synth_seed
     << ";idx=" << cfg.idx_images << "," << cfg.idx_labels
     << ";csv=" << cfg.csv_path << "," << cfg.csv_label_column
     << ";cap=" << cfg.norm_cap;
  if (cfg.grid) ss << ";grid=" << cfg.grid->first << "x" << cfg.grid->second;
  ss << ";splits=" << cfg.split.n_splits << "," << cfg.split.split_size << ","
     << cfg.split.seed << ";shared_init=" << cfg.shared_init << ";hidden=";
  for (auto h : cfg.hidden) ss << h << ",";
  ss << ";act=" << activation_name(cfg.activation)
     << ";init_seed=" << cfg.init_seed << ";caps=";
  for (auto c : cfg.project_caps) ss << c << ",";
  ss << ";variant=" << (cfg.train.variant == TrainVariant::kVanilla ? "v" : "n")
     << ";c=" << cfg.train.step_c << ";T=" << cfg.train.iterations
     << ";kappa=" << cfg.train.kappa << ";mc=" << cfg.train.noise_mc
     << ";tseed=" << cfg.train.seed
     << ";sampling=" << sampling_name(cfg.train.sampling) << ";methods=";
  for (auto m : cfg.methods) ss << method_name(m) << ",";
  ss << ";sigmas=";
  for (auto s : cfg.sigma_ratios) ss << s << ",";
  ss << ";ns=" << cfg.n_samples << ";sseed=" << cfg.smoothing_seed
     << ";norm_in=" << cfg.normalize_input
     << ";crn=" << cfg.common_random_numbers << ";ig=" << cfg.ig_steps
     << ";eval=" << cfg.eval_size << "," << cfg.eval_seed << "," << cfg.topk;
  return ss.str();
}

}  // namespace

std::string hash_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

TrainSplitsResult cmd_train_splits(const ExperimentConfig& cfg,
                                   bool write_outputs) {
  cfg.validate();
  LabeledDataset data = build_dataset(cfg);
  const Eigen::Index used =
      static_cast<Eigen::Index>(cfg.split.n_splits) * cfg.split.split_size;
  if (used + cfg.eval_size > data.size())
    throw std::runtime_error(
        "split.split_size: splits plus eval set exceed dataset size");

  TrainSplitsResult out;
  out.splits = split_dataset(data, cfg.split);

  // eval set: shuffle the leftover indices with eval.seed, take the head
  auto order = split_index_order(data.size(), cfg.split.seed);
  std::vector<Eigen::Index> leftover(order.begin() + used, order.end());
  CounterRng erng(CounterRng::derive(cfg.eval_seed, 0xe7));
  for (std::size_t i = leftover.size(); i > 1; --i)
    std::swap(leftover[i - 1], leftover[erng.next_index(i)]);
  leftover.resize(static_cast<std::size_t>(cfg.eval_size));
  out.eval_set = take_rows(data, leftover);
  out.pixel_range = data.x_max - data.x_min;

  std::vector<Eigen::Index> dims;
  dims.push_back(data.dim());
  for (auto h : cfg.hidden) dims.push_back(h);
  dims.push_back(std::max(data.num_classes, 2));

  nlohmann::json log;
  for (int s = 0; s < cfg.split.n_splits; ++s) {
    std::uint64_t init_seed =
        cfg.shared_init ? cfg.init_seed
                        : cfg.init_seed ^ static_cast<std::uint64_t>(s);
    Network init = init_network(dims, cfg.activation, init_seed);
    TrainConfig tc = cfg.train;
    tc.seed = CounterRng::derive(cfg.train.seed, static_cast<std::uint64_t>(s));
    Network trained = tc.variant == TrainVariant::kNoisy
                          ? noisy_sgd_train(init, out.splits[s], tc)
                          : sgd_train(init, out.splits[s], tc);
    if (!cfg.project_caps.empty())
      trained = project_spectral(trained, cfg.project_caps);
    double mean_loss = 0.0;
    for (Eigen::Index i = 0; i < out.splits[s].size(); ++i) {
      mean_loss += cross_entropy(
          forward(trained, out.splits[s].features.row(i).transpose()),
          out.splits[s].labels[static_cast<std::size_t>(i)]);
    }
    mean_loss /= static_cast<double>(out.splits[s].size());
    log["models"].push_back({{"split", s},
                             {"init_seed", init_seed},
                             {"train_seed", tc.seed},
                             {"final_train_loss", mean_loss}});
    out.models.push_back(std::move(trained));
  }

  // bound profile: per-layer worst case across the trained models
  out.profile.layer_caps.assign(dims.size() - 1, 0.0);
  for (const auto& model : out.models) {
    auto norms = spectral_norms(model);
    for (std::size_t l = 0; l < norms.size(); ++l)
      out.profile.layer_caps[l] =
          std::max(out.profile.layer_caps[l], norms[l].value);
  }
  out.profile.input_cap = data.norm_cap;
  out.profile.input_dim = static_cast<int>(data.dim());
  out.profile.loss_lip = 1.0;
  out.profile_mode = cfg.project_caps.empty() ? "measured" : "projected";

  if (write_outputs) {
    std::filesystem::create_directories(cfg.out_dir);
    for (std::size_t s = 0; s < out.models.size(); ++s)
      save_network(out.models[s],
                   cfg.out_dir + "/model_" + std::to_string(s) + ".json");
    nlohmann::json manifest;
    manifest["config_hash"] = hash_hex(canonical_config(cfg));
    manifest["split_seed"] = cfg.split.seed;
    manifest["split_size"] = cfg.split.split_size;
    manifest["n_splits"] = cfg.split.n_splits;
    for (int s = 0; s < cfg.split.n_splits; ++s) {
      std::vector<std::int64_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(s) * cfg.split.split_size,
          order.begin() +
              static_cast<std::ptrdiff_t>(s + 1) * cfg.split.split_size);
      manifest["split_indices"].push_back(idx);
    }
    manifest["eval_indices"] =
        std::vector<std::int64_t>(leftover.begin(), leftover.end());
    std::ofstream mf(cfg.out_dir + "/splits.json");
    mf << manifest.dump(2);
    std::ofstream lf(cfg.out_dir + "/train_log.json");
    lf << log.dump(2);
  }
  return out;
}

namespace {

struct Cell {
  std::size_t method_idx;
  std::size_t sigma_idx;
};

MapBatch base_batch(const Network& net, SaliencyMethod method,
                    const LabeledDataset& eval_set, int ig_steps) {
  MapBatch batch;
  batch.grid = eval_set.grid;
  batch.maps.reserve(static_cast<std::size_t>(eval_set.size()));
  for (Eigen::Index i = 0; i < eval_set.size(); ++i) {
    Vector x = eval_set.features.row(i).transpose();
    int y = eval_set.labels[static_cast<std::size_t>(i)];
    SaliencyMap map =
        method == SaliencyMethod::kSimpleGrad
            ? simple_grad(net, x, y)
            : integrated_grad(net, x, y, Vector::Zero(x.size()), ig_steps);
    map.input_id = i;
    batch.maps.push_back(std::move(map));
  }
  return batch;
}

MapBatch smoothed_batch(const Network& net, SaliencyMethod method,
                        const LabeledDataset& eval_set,
                        const SmoothingConfig& cell_cfg, int ig_steps) {
  MapBatch batch;
  batch.grid = eval_set.grid;
  batch.maps.reserve(static_cast<std::size_t>(eval_set.size()));
  IntegratedGradParams ig;
  ig.n_steps = ig_steps;
  for (Eigen::Index i = 0; i < eval_set.size(); ++i) {
    Vector x = eval_set.features.row(i).transpose();
    int y = eval_set.labels[static_cast<std::size_t>(i)];
    SmoothingConfig per_input = cell_cfg;
    per_input.seed =
        CounterRng::derive(cell_cfg.seed, static_cast<std::uint64_t>(i));
    SaliencyMap map = smoothed_saliency(method, net, x, y, per_input, ig);
    map.input_id = i;
    batch.maps.push_back(std::move(map));
  }
  return batch;
}

double batch_mean_ssim(const MapBatch& a, const MapBatch& b) {
  if (!a.grid) return kNaN;
  auto [h, w] = *a.grid;
  SsimConfig cfg;
  if (h < cfg.window || w < cfg.window) return kNaN;
  std::vector<double> vals(a.maps.size());
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    vals[i] = ssim(a.maps[i].values, b.maps[i].values, h, w, cfg);
  return pairwise_mean(vals);
}

int auto_topk(Eigen::Index m) {
  if (m >= 5000) return 500;
  return static_cast<int>((m + 9) / 10);
}

ProxyResult combined_fidelity(const MapBatch& smoothed_a, const MapBatch& base_a,
                              const MapBatch& smoothed_b,
                              const MapBatch& base_b) {
  std::vector<double> dists;
  dists.reserve(smoothed_a.maps.size() * 2);
  for (std::size_t i = 0; i < smoothed_a.maps.size(); ++i)
    dists.push_back((smoothed_a.maps[i].values - base_a.maps[i].values).norm());
  for (std::size_t i = 0; i < smoothed_b.maps.size(); ++i)
    dists.push_back((smoothed_b.maps[i].values - base_b.maps[i].values).norm());
  double mean = pairwise_mean(dists);
  std::vector<double> sq(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) {
    double d = dists[i] - mean;
    sq[i] = d * d;
  }
  double var = dists.size() > 1
                   ? pairwise_mean(sq) * dists.size() / (dists.size() - 1)
                   : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(dists.size()))};
}

}  // namespace

ExperimentReport cmd_sweep_sigma(const ExperimentConfig& cfg,
                                 const TrainSplitsResult& trained,
                                 int threads) {
  if (trained.models.size() < 2)
    throw std::runtime_error("sweep needs at least 2 trained models");
  auto t0 = std::chrono::steady_clock::now();
  const Network& model_a = trained.models[0];
  const Network& model_b = trained.models[1];
  if (model_a.input_dim() != trained.eval_set.dim())
    throw std::runtime_error("model/dataset dimension mismatch");

  const int topk =
      cfg.topk > 0 ? cfg.topk : auto_topk(trained.eval_set.dim());
  const double range = trained.pixel_range;

  // sigma-independent base maps per (method, model)
  std::vector<MapBatch> bases_a, bases_b;
  for (auto m : cfg.methods) {
    bases_a.push_back(base_batch(model_a, m, trained.eval_set, cfg.ig_steps));
    bases_b.push_back(base_batch(model_b, m, trained.eval_set, cfg.ig_steps));
  }

  const double beta =
      cfg.train.variant == TrainVariant::kNoisy
          ? smoothness_bound(trained.profile, SmoothnessVariant::kNoisySgd,
                             cfg.train.kappa)
          : (smoothness_constant(cfg.activation)
                 ? smoothness_bound(trained.profile,
                                    SmoothnessVariant::kVanillaSmoothActivation)
                 : kNaN);
  const double n_bound = cfg.split.split_size;
  const double T = cfg.train.iterations;

  std::vector<Cell> cells;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
    for (std::size_t si = 0; si < cfg.sigma_ratios.size(); ++si)
      cells.push_back({mi, si});

  ExperimentReport report;
  report.rows.resize(cells.size());

  auto run_cell = [&](std::size_t ci) {
    const Cell& cell = cells[ci];
    SaliencyMethod method = cfg.methods[cell.method_idx];
    double ratio = cfg.sigma_ratios[cell.sigma_idx];
    double sigma = ratio * range;

    ReportRow row;
    row.method = method_name(method);
    row.sigma_ratio = ratio;
    row.sigma_abs = sigma;

    const MapBatch& base_a = bases_a[cell.method_idx];
    const MapBatch& base_b = bases_b[cell.method_idx];
    row.ssim_plain = batch_mean_ssim(base_a, base_b);
    row.miou_plain = topk_miou_batch(base_a, base_b, topk);

    if (sigma == 0.0) {
      auto st = stability_proxy(base_a, base_b);
      row.stability = st.mean;
      row.stability_se = st.stderr_;
      row.fidelity = 0.0;
      row.fidelity_se = 0.0;
      row.ssim_smoothed = row.ssim_plain;
      row.miou_smoothed = row.miou_plain;
    } else {
      SmoothingConfig smoothing;
      smoothing.sigma = sigma;
      smoothing.n_samples = cfg.n_samples;
      smoothing.normalize_input = cfg.normalize_input;
      smoothing.clip_radius = trained.profile.input_cap;
      std::uint64_t cell_seed = CounterRng::derive(
          cfg.smoothing_seed, static_cast<std::uint64_t>(ci));
      smoothing.seed = cell_seed;
      MapBatch sm_a = smoothed_batch(model_a, method, trained.eval_set,
                                     smoothing, cfg.ig_steps);
      if (!cfg.common_random_numbers)
        smoothing.seed = CounterRng::derive(cell_seed, 1);
      MapBatch sm_b = smoothed_batch(model_b, method, trained.eval_set,
                                     smoothing, cfg.ig_steps);
      auto st = stability_proxy(sm_a, sm_b);
      row.stability = st.mean;
      row.stability_se = st.stderr_;
      auto fid = combined_fidelity(sm_a, base_a, sm_b, base_b);
      row.fidelity = fid.mean;
      row.fidelity_se = fid.stderr_;
      row.ssim_smoothed = batch_mean_ssim(sm_a, sm_b);
      row.miou_smoothed = topk_miou_batch(sm_a, sm_b, topk);
    }

    if (std::isnan(beta)) {
      row.stability_bound = kNaN;
    } else if (method == SaliencyMethod::kSimpleGrad) {
      row.stability_bound =
          sigma == 0.0
              ? simplegrad_stability_bound(trained.profile, n_bound, T,
                                           cfg.train.step_c, beta)
              : smoothgrad_stability_bound(trained.profile, n_bound, T,
                                           cfg.train.step_c, beta, sigma);
    } else {
      // no closed form for the smoothed Integrated-Grad map
      row.stability_bound =
          sigma == 0.0
              ? integratedgrad_stability_bound(trained.profile, n_bound, T,
                                               cfg.train.step_c, beta,
                                               StabilityRegime::kNonConvex)
              : kNaN;
    }
    row.fidelity_bound = fidelity_bound(
        trained.profile, sigma,
        method == SaliencyMethod::kSimpleGrad ? FidelityMethod::kSimpleGrad
                                              : FidelityMethod::kIntegratedGrad);
    report.rows[ci] = std::move(row);
  };

  if (threads <= 1) {
    for (std::size_t ci = 0; ci < cells.size(); ++ci) run_cell(ci);
  } else {
    std::vector<std::thread> pool;
    std::size_t per = (cells.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      std::size_t lo = static_cast<std::size_t>(t) * per;
      std::size_t hi = std::min(cells.size(), lo + per);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::size_t ci = lo; ci < hi; ++ci) run_cell(ci);
      });
    }
    for (auto& th : pool) th.join();
  }

  report.config_hash = hash_hex(canonical_config(cfg));
  report.split_seed = cfg.split.seed;
  report.smoothing_seed = cfg.smoothing_seed;
  report.eval_seed = cfg.eval_seed;
  report.profile_mode = trained.profile_mode;
  report.normalize_input = cfg.normalize_input;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

namespace {

void csv_value(std::ostream& os, double v) {
  if (std::isnan(v)) {
    os << "nan";
  } else {
    os << v;
  }
}

nlohmann::json json_value(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double from_json_value(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

}  // namespace

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "method,sigma_ratio,sigma_abs,stability,stability_se,fidelity,"
        "fidelity_se,ssim,ssim_smoothed,topk_miou,topk_miou_smoothed,"
        "stability_bound,fidelity_bound\n";
  for (const auto& r : report.rows) {
    ss << r.method << "," << r.sigma_ratio << "," << r.sigma_abs << ",";
    csv_value(ss, r.stability);
    ss << ",";
    csv_value(ss, r.stability_se);
    ss << ",";
    csv_value(ss, r.fidelity);
    ss << ",";
    csv_value(ss, r.fidelity_se);
    ss << ",";
    csv_value(ss, r.ssim_plain);
    ss << ",";
    csv_value(ss, r.ssim_smoothed);
    ss << ",";
    csv_value(ss, r.miou_plain);
    ss << ",";
    csv_value(ss, r.miou_smoothed);
    ss << ",";
    csv_value(ss, r.stability_bound);
    ss << ",";
    csv_value(ss, r.fidelity_bound);
    ss << "\n";
  }
  return ss.str();
}

std::string report_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["metadata"] = {{"config_hash", report.config_hash},
                   {"split_seed", report.split_seed},
                   {"smoothing_seed", report.smoothing_seed},
                   {"eval_seed", report.eval_seed},
                   {"profile_mode", report.profile_mode},
                   {"normalize_input", report.normalize_input},
                   {"wall_time_s", report.wall_time_s}};
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"method", r.method},
                         {"sigma_ratio", r.sigma_ratio},
                         {"sigma_abs", r.sigma_abs},
                         {"stability", json_value(r.stability)},
                         {"stability_se", json_value(r.stability_se)},
                         {"fidelity", json_value(r.fidelity)},
                         {"fidelity_se", json_value(r.fidelity_se)},
                         {"ssim", json_value(r.ssim_plain)},
                         {"ssim_smoothed", json_value(r.ssim_smoothed)},
                         {"topk_miou", json_value(r.miou_plain)},
                         {"topk_miou_smoothed", json_value(r.miou_smoothed)},
                         {"stability_bound", json_value(r.stability_bound)},
                         {"fidelity_bound", json_value(r.fidelity_bound)}});
  }
  return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ExperimentReport report;
  const auto& md = j.at("metadata");
  report.config_hash = md.at("config_hash");
  report.split_seed = md.at("split_seed");
  report.smoothing_seed = md.at("smoothing_seed");
  report.eval_seed = md.at("eval_seed");
  report.profile_mode = md.at("profile_mode");
  report.normalize_input = md.at("normalize_input");
  report.wall_time_s = md.at("wall_time_s");
  for (const auto& rj : j.at("rows")) {
    ReportRow r;
    r.method = rj.at("method");
    r.sigma_ratio = rj.at("sigma_ratio");
    r.sigma_abs = rj.at("sigma_abs");
    r.stability = from_json_value(rj.at("stability"));
    r.stability_se = from_json_value(rj.at("stability_se"));
    r.fidelity = from_json_value(rj.at("fidelity"));
    r.fidelity_se = from_json_value(rj.at("fidelity_se"));
    r.ssim_plain = from_json_value(rj.at("ssim"));
    r.ssim_smoothed = from_json_value(rj.at("ssim_smoothed"));
    r.miou_plain = from_json_value(rj.at("topk_miou"));
    r.miou_smoothed = from_json_value(rj.at("topk_miou_smoothed"));
    r.stability_bound = from_json_value(rj.at("stability_bound"));
    r.fidelity_bound = from_json_value(rj.at("fidelity_bound"));
    report.rows.push_back(std::move(r));
  }
  return report;
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir + "/report.csv", std::ios::binary);
  csv << report_csv(report);
  std::ofstream json(dir + "/report.json", std::ios::binary);
  json << report_json(report);
}

std::string report_plot_csv(const ExperimentReport& report) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "method,sigma_ratio,metric,value,stderr\n";
  auto emit = [&](const ReportRow& r, const char* metric, double v,
                  double se) {
    ss << r.method << "," << r.sigma_ratio << "," << metric << ",";
    csv_value(ss, v);
    ss << ",";
    csv_value(ss, se);
    ss << "\n";
  };
  for (const auto& r : report.rows) {
    emit(r, "stability", r.stability, r.stability_se);
    emit(r, "fidelity", r.fidelity, r.fidelity_se);
    emit(r, "ssim_smoothed", r.ssim_smoothed, 0.0);
    emit(r, "topk_miou_smoothed", r.miou_smoothed, 0.0);
    emit(r, "stability_bound", r.stability_bound, 0.0);
    emit(r, "fidelity_bound", r.fidelity_bound, 0.0);
  }
  return ss.str();
}

std::string report_summary_table(const ExperimentReport& report,
                                 double summary_sigma_ratio) {
  std::ostringstream ss;
  ss.precision(6);
  ss << "method,ssim,ssim_smoothed,topk_miou,topk_miou_smoothed\n";
  std::vector<std::string> seen;
  for (const auto& r : report.rows) {
    if (std::abs(r.sigma_ratio - summary_sigma_ratio) > 1e-12) continue;
    if (std::find(seen.begin(), seen.end(), r.method) != seen.end()) continue;
    seen.push_back(r.method);
    ss << r.method << "," << r.ssim_plain << "," << r.ssim_smoothed << ","
       << r.miou_plain << "," << r.miou_smoothed << "\n";
  }
  return ss.str();
}

std::vector<BiasVarianceRow> cmd_bias_variance(const ExperimentConfig& cfg,
                                               const TrainSplitsResult& trained,
                                               SaliencyMethod base) {
  std::vector<BiasVarianceRow> rows;
  IntegratedGradParams ig;
  ig.n_steps = cfg.ig_steps;
  for (std::size_t si = 0; si < cfg.sigma_ratios.size(); ++si) {
    BiasVarianceRow row;
    row.sigma_ratio = cfg.sigma_ratios[si];
    row.sigma_abs = row.sigma_ratio * trained.pixel_range;
    SmoothingConfig smoothing;
    smoothing.sigma = row.sigma_abs;
    smoothing.n_samples = cfg.n_samples;
    smoothing.seed = CounterRng::derive(cfg.smoothing_seed, 0xb100 + si);
    row.values =
        bias_variance(trained.models, base, trained.eval_set, smoothing, ig);
    rows.push_back(row);
  }
  return rows;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RandomCase {
  Network net;
  NormProfile profile;
};

RandomCase random_case(CounterRng& rng, bool mild_only) {
  int m = 4 + static_cast<int>(rng.next_index(9));
  int k = 2 + static_cast<int>(rng.next_index(3));
  std::vector<Eigen::Index> dims{m};
  for (int l = 1; l < k; ++l)
    dims.push_back(3 + static_cast<Eigen::Index>(rng.next_index(6)));
  dims.push_back(3);
  RandomCase rc;
  rc.profile.input_dim = m;
  rc.profile.input_cap = 1.0 + 2.0 * rng.next_double();
  double lo = mild_only ? 1.0 : 0.5;
  for (int l = 0; l < k; ++l)
    rc.profile.layer_caps.push_back(lo + rng.next_double());
  rc.net = project_spectral(init_network(dims, Activation::kTanh, rng.next_u64()),
                            rc.profile.layer_caps);
  return rc;
}

Vector random_input(CounterRng& rng, Eigen::Index m, double cap) {
  Vector x(m);
  rng.fill_gaussian(x, 1.0);
  double n = x.norm();
  if (n > 0) x *= (rng.next_double() * cap) / n;
  return x;
}

void record(SuiteResult& s, double bound, double observed) {
  ++s.trials;
  double margin = bound - observed;
  if (margin < 0) ++s.violations;
  s.worst_margin = std::min(s.worst_margin, margin);
}

// mean and standard error of the norm-of-mean for a running vector sum
struct VecStats {
  Vector sum, sumsq;
  long n = 0;
  explicit VecStats(Eigen::Index dim)
      : sum(Vector::Zero(dim)), sumsq(Vector::Zero(dim)) {}
  void add(const Vector& v) {
    sum += v;
    sumsq += v.cwiseProduct(v);
    ++n;
  }
  Vector mean() const { return sum / static_cast<double>(n); }
  double stderr_of_mean() const {
    double tot = 0.0;
    for (Eigen::Index i = 0; i < sum.size(); ++i) {
      double var = (sumsq[i] - sum[i] * sum[i] / n) / (n - 1);
      tot += std::max(var, 0.0);
    }
    return std::sqrt(tot / static_cast<double>(n));
  }
};

SuiteResult suite_forward_norm(std::uint64_t seed, int trials) {
  SuiteResult s{"forward_norm", 0, 0, kInf};
  CounterRng rng(CounterRng::derive(seed, 1));
  for (int t = 0; t < trials; ++t) {
    RandomCase rc = random_case(rng, false);
    Vector x = random_input(rng, rc.net.input_dim(), rc.profile.input_cap);
    double bound = delta(rc.profile.layer_caps, 0) * rc.profile.input_cap;
    record(s, bound, forward(rc.net, x).norm());
  }
  return s;
}

SuiteResult suite_input_gradient(std::uint64_t seed, int trials,
                                 bool negative_control) {
  SuiteResult s{"input_gradient_norm", 0, 0, kInf};
  CounterRng rng(CounterRng::derive(seed, 2));
  for (int t = 0; t < trials; ++t) {
    RandomCase rc = random_case(rng, false);
    if (negative_control) {
      // stale caps: recorded at a third of the live spectral norms
      auto est = spectral_norms(rc.net);
      std::vector<double> stale;
      for (const auto& e : est) stale.push_back(e.value / 3.0);
      double bound = delta(stale, 0);
      double worst = 0.0;
      Vector origin = Vector::Zero(rc.net.input_dim());
      for (int y = 0; y < 3; ++y)
        worst = std::max(worst, input_gradient(rc.net, origin, y).norm());
      record(s, bound, worst);
    } else {
      Vector x = random_input(rng, rc.net.input_dim(), rc.profile.input_cap);
      int y = static_cast<int>(rng.next_index(3));
      record(s, delta(rc.profile.layer_caps, 0),
             input_gradient(rc.net, x, y).norm());
    }
  }
  return s;
}

SuiteResult suite_gaussian_norm(std::uint64_t seed, int trials) {
  SuiteResult s{"gaussian_norm", 0, 0, kInf};
  CounterRng rng(CounterRng::derive(seed, 3));
  const int draws = std::max(50000, trials * 50);
  for (double sigma : {0.1, 0.5, 1.0, 2.0}) {
    for (int m : {1, 4, 16, 64, 128}) {
      Vector z(m);
      std::vector<double> norms(static_cast<std::size_t>(draws));
      for (int d = 0; d < draws; ++d) {
        rng.fill_gaussian(z, sigma);
        norms[static_cast<std::size_t>(d)] = z.norm();
      }
      double bound = sigma * std::sqrt(static_cast<double>(m));
      double observed = pairwise_mean(norms);
      s.trials += draws - 1;  // record() adds the last one
      record(s, bound, observed);
    }
  }
  return s;
}

SuiteResult suite_stein_identity(std::uint64_t seed, int trials) {
  SuiteResult s{"stein_identity", 0, 0, kInf};
  CounterRng rng(CounterRng::derive(seed, 4));
  const int draws = std::max(20000, trials * 20);
  for (int m : {1, 3, 8}) {
    for (double sigma : {0.5, 1.0}) {
      Vector x = random_input(rng, m, 1.0);
      if (m == 1) x[0] = 1.0;  // closed form: both sides equal 2x exactly
      VecStats diff(m), lhs(m), rhs(m);
      Vector z(m);
      for (int d = 0; d < draws; ++d) {
        rng.fill_gaussian(z, sigma);
        Vector xp = x + z;
        Vector grad = 2.0 * xp;                          // grad ||.||^2
        Vector stein = (xp.squaredNorm() / (sigma * sigma)) * z;
        lhs.add(grad);
        rhs.add(stein);
        diff.add(grad - stein);
      }
      s.trials += draws - 3;  // three record() calls below
      record(s, 3.0 * diff.stderr_of_mean(), diff.mean().norm());
      record(s, 3.0 * lhs.stderr_of_mean(), (lhs.mean() - 2.0 * x).norm());
      record(s, 3.0 * rhs.stderr_of_mean(), (rhs.mean() - 2.0 * x).norm());
    }
  }
  return s;
}

SuiteResult suite_smoothing_fidelity(std::uint64_t seed, int trials) {
  SuiteResult s{"smoothing_fidelity", 0, 0, kInf};
  CounterRng rng(CounterRng::derive(seed, 5));
  const int draws = std::max(300, trials / 4);
  for (int rep = 0; rep < 4; ++rep) {
    RandomCase rc = random_case(rng, true);
    Eigen::Index m = rc.net.input_dim();
    Vector x = random_input(rng, m, rc.profile.input_cap);
    int y = static_cast<int>(rng.next_index(3));
    Vector zero = Vector::Zero(m);
    for (double sigma : {0.05, 0.2}) {
      for (auto method :
           {FidelityMethod::kSimpleGrad, FidelityMethod::kIntegratedGrad}) {
        Vector base =
            method == FidelityMethod::kSimpleGrad
                ? input_gradient(rc.net, x, y)
                : integrated_grad(rc.net, x, y, zero, 20).values;
        std::vector<double> dists(static_cast<std::size_t>(draws));
        Vector z(m);
        for (int d = 0; d < draws; ++d) {
          rng.fill_gaussian(z, sigma);
          Vector shifted =
              method == FidelityMethod::kSimpleGrad
                  ? input_gradient(rc.net, x + z, y)
                  : integrated_grad(rc.net, x + z, y, zero, 20).values;
          dists[static_cast<std::size_t>(d)] = (shifted - base).norm();
        }
        double mean = pairwise_mean(dists);
        double var = 0.0;
        for (double d : dists) var += (d - mean) * (d - mean);
        var /= (draws - 1);
        double se = std::sqrt(var / draws);
        s.trials += draws - 1;
        record(s, fidelity_bound(rc.profile, sigma, method) + 3.0 * se, mean);
      }
    }
  }
  return s;
}

SuiteResult suite_noisy_smoothness(std::uint64_t seed, int trials) {
  SuiteResult s{"noisy_loss_smoothness", 0, 0, kInf};
  CounterRng rng(CounterRng::derive(seed, 6));
  const int draws = std::max(600, trials / 2);
  const double step = 0.05;
  for (int rep = 0; rep < 4; ++rep) {
    RandomCase rc = random_case(rng, true);
    rc.profile.loss_lip = std::sqrt(2.0);  // cross-entropy logit constant
    Vector x = random_input(rng, rc.net.input_dim(), rc.profile.input_cap);
    int y = static_cast<int>(rng.next_index(3));
    FlatParams w = flatten(rc.net);
    Vector dir(w.values.size());
    rng.fill_gaussian(dir, 1.0);
    dir *= step / dir.norm();
    FlatParams w2{w.values + dir};
    for (double kappa : {0.5, 1.0}) {
      VecStats diff(w.values.size());
      Vector v(w.values.size());
      for (int d = 0; d < draws; ++d) {
        rng.fill_gaussian(v, kappa);
        Network na = unflatten(rc.net, FlatParams{w.values + v});
        Network nb = unflatten(rc.net, FlatParams{w2.values + v});
        diff.add(param_gradient(na, x, y).values -
                 param_gradient(nb, x, y).values);
      }
      double bound = (lipschitz_bound(rc.profile) / kappa) * step +
                     3.0 * diff.stderr_of_mean();
      s.trials += draws - 1;
      record(s, bound, diff.mean().norm());
    }
  }
  return s;
}

}  // namespace

std::vector<SuiteResult> cmd_verify_bounds(std::uint64_t seed,
                                           bool negative_control, int trials) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::vector<SuiteResult> out;
  out.push_back(suite_forward_norm(seed, trials));
  out.push_back(suite_input_gradient(seed, trials, negative_control));
  out.push_back(suite_gaussian_norm(seed, trials));
  out.push_back(suite_stein_identity(seed, trials));
  out.push_back(suite_smoothing_fidelity(seed, trials));
  out.push_back(suite_noisy_smoothness(seed, trials));
  return out;
}

double spearman_rho(const std::vector<double>& xs,
                    const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("spearman needs two equal series, size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(xs), ry = ranks(ys);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

}  // namespace salstab
