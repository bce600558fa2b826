#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace salstab {

// Immutable after construction; loaders enforce the row-norm cap and record
// the observed pixel range so sigma ratios translate to absolute noise.
struct LabeledDataset {
  Eigen::MatrixXd features;  // n x m, row per sample
  std::vector<int> labels;   // in [0, num_classes)
  int num_classes = 0;
  double norm_cap = 0.0;  // C: every row has l2 norm <= C * (1 + 1e-9)
  double x_min = 0.0;
  double x_max = 0.0;
  std::optional<std::pair<int, int>> grid;  // (H, W) with H*W == m

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const;
};

// MNIST-style IDX pair: images magic 0x00000803, labels magic 0x00000801,
// big-endian dimensions. Pixels scaled to [0,1], flattened row-major.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Rectangular numeric CSV with a header row; `label_column` names the
// integer label column, all other columns become features.
LabeledDataset load_csv(const std::string& path,
                        const std::string& label_column);
void write_csv(const LabeledDataset& data, const std::string& path,
               const std::string& label_column = "label");

// `classes` Gaussian clusters with mean norm `separation` and unit
// within-cluster std; labels by cluster, deterministic in `seed`.
LabeledDataset synth_blobs(int n, int m, int classes, double separation,
                           std::uint64_t seed);

// Projects every row with norm > cap onto the l2 ball of radius cap;
// recomputes x_min/x_max. Idempotent.
LabeledDataset normalize(const LabeledDataset& data, double cap);

}  // namespace salstab
