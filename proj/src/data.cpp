#include "salstab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "salstab/rng.hpp"

namespace salstab {

void LabeledDataset::validate() const {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("feature/label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("label out of range");
  }
  if (grid && static_cast<Eigen::Index>(grid->first) * grid->second != dim())
    throw std::invalid_argument("grid does not match feature dimension");
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (features.row(i).norm() > norm_cap * (1.0 + 1e-9))
      throw std::invalid_argument("row " + std::to_string(i) +
                                  " exceeds norm cap");
  }
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path,
                        std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error(path + ": truncated at offset " +
                             std::to_string(offset));
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void finish_ranges(LabeledDataset& d) {
  if (d.features.size() == 0) {
    d.x_min = d.x_max = 0.0;
    return;
  }
  d.x_min = d.features.minCoeff();
  d.x_max = d.features.maxCoeff();
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path);
  std::uint32_t magic = read_be32(img, images_path, 0);
  if (magic != 0x00000803u) {
    throw std::runtime_error(images_path +
                             ": bad image magic at offset 0, got " +
                             std::to_string(magic));
  }
  std::uint32_t n = read_be32(img, images_path, 4);
  std::uint32_t rows = read_be32(img, images_path, 8);
  std::uint32_t cols = read_be32(img, images_path, 12);
  std::size_t pixels = std::size_t(n) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  if (!img.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(pixels))) {
    throw std::runtime_error(images_path + ": truncated pixel data at offset " +
                             std::to_string(16 + img.gcount()));
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path);
  std::uint32_t lmagic = read_be32(lab, labels_path, 0);
  if (lmagic != 0x00000801u) {
    throw std::runtime_error(labels_path + ": bad label magic at offset 0");
  }
  std::uint32_t ln = read_be32(lab, labels_path, 4);
  if (ln != n) {
    throw std::runtime_error("label count " + std::to_string(ln) +
                             " != image count " + std::to_string(n));
  }
  std::vector<unsigned char> lraw(ln);
  if (!lab.read(reinterpret_cast<char*>(lraw.data()),
                static_cast<std::streamsize>(ln))) {
    throw std::runtime_error(labels_path + ": truncated label data at offset " +
                             std::to_string(8 + lab.gcount()));
  }

  LabeledDataset d;
  const Eigen::Index m = static_cast<Eigen::Index>(rows) * cols;
  d.features.resize(n, m);
  for (std::uint32_t i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      d.features(i, j) = raw[std::size_t(i) * m + j] / 255.0;
  d.labels.assign(lraw.begin(), lraw.end());
  d.num_classes =
      d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.grid = {static_cast<int>(rows), static_cast<int>(cols)};
  finish_ranges(d);
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    max_norm = std::max(max_norm, d.features.row(i).norm());
  d.norm_cap = std::max(max_norm, 1e-12);
  return d;
}

LabeledDataset load_csv(const std::string& path,
                        const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end())
    throw std::runtime_error(path + ": missing label column '" + label_column +
                             "'");
  std::size_t label_idx = static_cast<std::size_t>(it - header.begin());

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::size_t col = 0;
    int label = 0;
    while (std::getline(ss, cell, ',')) {
      double v;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": non-numeric cell '" + cell + "'");
      }
      if (col == label_idx)
        label = static_cast<int>(std::lround(v));
      else
        row.push_back(v);
      ++col;
    }
    if (col != header.size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": ragged row (" + std::to_string(col) +
                               " cells, expected " +
                               std::to_string(header.size()) + ")");
    }
    rows.push_back(std::move(row));
    labels.push_back(label);
  }

  LabeledDataset d;
  Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::Index m = n > 0 ? static_cast<Eigen::Index>(rows[0].size())
                         : static_cast<Eigen::Index>(header.size() - 1);
  d.features.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) d.features(i, j) = rows[i][j];
  d.labels = std::move(labels);
  d.num_classes =
      d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  finish_ranges(d);
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    max_norm = std::max(max_norm, d.features.row(i).norm());
  d.norm_cap = std::max(max_norm, 1e-12);
  return d;
}

void write_csv(const LabeledDataset& data, const std::string& path,
               const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << "f" << j << ",";
  out << label_column << "\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << data.features(i, j) << ",";
    out << data.labels[static_cast<std::size_t>(i)] << "\n";
  }
}

LabeledDataset synth_blobs(int n, int m, int classes, double separation,
                           std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("need at least 2 classes");
  CounterRng mean_rng(CounterRng::derive(seed, 0));
  Eigen::MatrixXd means(classes, m);
  for (int cl = 0; cl < classes; ++cl) {
    Eigen::VectorXd dir(m);
    mean_rng.fill_gaussian(dir, 1.0);
    double norm = dir.norm();
    if (norm > 0) dir *= separation / norm;
    means.row(cl) = dir.transpose();
  }

  LabeledDataset d;
  d.features.resize(n, m);
  d.labels.resize(static_cast<std::size_t>(n));
  d.num_classes = classes;
  CounterRng rng(CounterRng::derive(seed, 1));
  Eigen::VectorXd noise(m);
  for (int i = 0; i < n; ++i) {
    int label = static_cast<int>(rng.next_index(static_cast<std::size_t>(classes)));
    rng.fill_gaussian(noise, 1.0);
    d.features.row(i) = means.row(label) + noise.transpose();
    d.labels[static_cast<std::size_t>(i)] = label;
  }
  finish_ranges(d);
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    max_norm = std::max(max_norm, d.features.row(i).norm());
  d.norm_cap = std::max(max_norm, 1e-12);
  return d;
}

LabeledDataset normalize(const LabeledDataset& data, double cap) {
  if (cap <= 0) throw std::invalid_argument("norm cap must be positive");
  LabeledDataset out = data;
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    double norm = out.features.row(i).norm();
    if (norm > cap) out.features.row(i) *= cap / norm;
  }
  out.norm_cap = cap;
  finish_ranges(out);
  return out;
}

}  // namespace salstab
