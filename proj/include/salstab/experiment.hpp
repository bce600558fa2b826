#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "salstab/bounds.hpp"
#include "salstab/data.hpp"
#include "salstab/metrics.hpp"
#include "salstab/saliency.hpp"
#include "salstab/toml_lite.hpp"
#include "salstab/train.hpp"

namespace salstab {

struct ExperimentConfig {
  // dataset
  std::string dataset_kind = "synth_blobs";  // synth_blobs | idx | csv
  int synth_n = 4000;
  int synth_m = 64;
  int synth_classes = 3;
  double synth_separation = 4.0;
  std::uint64_t synth_seed = 1;
  std::string idx_images, idx_labels;
  std::string csv_path, csv_label_column = "label";
  double norm_cap = 0.0;  // 0 keeps the loader's cap
  std::optional<std::pair<int, int>> grid;

  // splits / init
  SplitPlan split{2, 10007, 0};
  bool shared_init = false;

  // network
  std::vector<Eigen::Index> hidden{32, 16};
  Activation activation = Activation::kTanh;
  std::uint64_t init_seed = 7;
  std::vector<double> project_caps;  // enforced after training when nonempty

  // training
  TrainConfig train;

  // saliency sweep
  std::vector<SaliencyMethod> methods{SaliencyMethod::kSimpleGrad};
  std::vector<double> sigma_ratios{0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
  int n_samples = 100;
  std::uint64_t smoothing_seed = 99;
  bool normalize_input = false;
  bool common_random_numbers = true;
  int ig_steps = 20;

  // evaluation
  int eval_size = 512;
  std::uint64_t eval_seed = 123;
  int topk = 0;  // 0: ceil(m/10), or 500 when m >= 5000

  std::string out_dir = "out";

  static ExperimentConfig from_toml(const toml::Document& doc);
  static ExperimentConfig from_file(const std::string& path);
  void validate() const;  // throws with field paths
};

LabeledDataset build_dataset(const ExperimentConfig& cfg);

struct TrainSplitsResult {
  std::vector<Network> models;
  std::vector<LabeledDataset> splits;
  LabeledDataset eval_set;
  NormProfile profile;        // measured post-training spectral norms
  std::string profile_mode;   // "measured" or "projected"
  double pixel_range = 0.0;   // x_max - x_min of the full dataset
};

// One network per split, trained per cfg.train; eval set carved from the
// indices left over after the split chunks. Model files land in cfg.out_dir
// when write_outputs is set.
TrainSplitsResult cmd_train_splits(const ExperimentConfig& cfg,
                                   bool write_outputs = true);

struct ReportRow {
  std::string method;
  double sigma_ratio = 0.0;
  double sigma_abs = 0.0;
  double stability = 0.0, stability_se = 0.0;
  double fidelity = 0.0, fidelity_se = 0.0;
  double ssim_plain = 0.0, ssim_smoothed = 0.0;     // NaN without a grid
  double miou_plain = 0.0, miou_smoothed = 0.0;
  double stability_bound = 0.0;  // NaN where no closed form applies
  double fidelity_bound = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::string config_hash;
  std::uint64_t split_seed = 0, smoothing_seed = 0, eval_seed = 0;
  std::string profile_mode;
  bool normalize_input = false;
  double wall_time_s = 0.0;  // metadata only, excluded from payload hashing
};

ExperimentReport cmd_sweep_sigma(const ExperimentConfig& cfg,
                                 const TrainSplitsResult& trained,
                                 int threads = 1);

// Payload serializations; wall time lives only in JSON metadata.
std::string report_csv(const ExperimentReport& report);
std::string report_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
void write_report(const ExperimentReport& report, const std::string& dir);

// Plot-ready (sigma, metric, stderr) columns plus a Table-1-shaped summary
// (one row per method: SSIM, smoothed SSIM, top-k mIoU, smoothed top-k
// mIoU at `summary_sigma_ratio`).
std::string report_plot_csv(const ExperimentReport& report);
std::string report_summary_table(const ExperimentReport& report,
                                 double summary_sigma_ratio = 0.15);

struct SuiteResult {
  std::string name;
  long trials = 0;
  long violations = 0;
  double worst_margin = 0.0;  // smallest (bound - observed); negative = hit
};

// Appendix-lemma property suites on seeded random profiles and networks.
// negative_control skips the spectral projection in the gradient-bound
// suite so stale caps are violated and the harness reports it.
std::vector<SuiteResult> cmd_verify_bounds(std::uint64_t seed,
                                           bool negative_control = false,
                                           int trials = 1000);

struct BiasVarianceRow {
  double sigma_ratio = 0.0;
  double sigma_abs = 0.0;
  BiasVariance values;
};

std::vector<BiasVarianceRow> cmd_bias_variance(const ExperimentConfig& cfg,
                                               const TrainSplitsResult& trained,
                                               SaliencyMethod base);

// Spearman rank correlation; ties get average ranks.
double spearman_rho(const std::vector<double>& xs,
                    const std::vector<double>& ys);

std::string hash_hex(const std::string& bytes);  // FNV-1a 64

}  // namespace salstab
