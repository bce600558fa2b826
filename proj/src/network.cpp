#include "salstab/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace salstab {

namespace {
constexpr const char* kFormatTag = "salstab-net-v1";
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kShiftedSoftplus: return "shifted_softplus";
    case Activation::kRelu: return "relu";
  }
  throw std::logic_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "shifted_softplus") return Activation::kShiftedSoftplus;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation: " + name);
}

double activate(Activation a, double v) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kShiftedSoftplus:
      // softplus(v) - ln 2, evaluated without overflow for large |v|
      return (v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v))) -
             0.6931471805599453;
    case Activation::kRelu:
      return v > 0 ? v : 0.0;
  }
  throw std::logic_error("unknown activation");
}

double activate_deriv(Activation a, double v) {
  switch (a) {
    case Activation::kTanh: {
      double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::kShiftedSoftplus:
      return 1.0 / (1.0 + std::exp(-v));
    case Activation::kRelu:
      return v > 0 ? 1.0 : 0.0;
  }
  throw std::logic_error("unknown activation");
}

std::optional<double> smoothness_constant(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return 4.0 / (3.0 * std::sqrt(3.0));
    case Activation::kShiftedSoftplus:
      return 0.25;
    case Activation::kRelu:
      return std::nullopt;
  }
  throw std::logic_error("unknown activation");
}

std::vector<Eigen::Index> Network::dims() const {
  std::vector<Eigen::Index> d;
  d.reserve(weights.size() + 1);
  d.push_back(weights.front().cols());
  for (const auto& w : weights) d.push_back(w.rows());
  return d;
}

std::size_t Network::param_count() const {
  std::size_t total = 0;
  for (const auto& w : weights) total += static_cast<std::size_t>(w.size());
  return total;
}

void Network::validate() const {
  if (weights.empty()) throw std::invalid_argument("network has no layers");
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    if (weights[i + 1].cols() != weights[i].rows()) {
      throw std::invalid_argument("dimension chain broken between layers " +
                                  std::to_string(i) + " and " +
                                  std::to_string(i + 1));
    }
  }
}

FlatParams flatten(const Network& net) {
  FlatParams out;
  out.values.resize(static_cast<Eigen::Index>(net.param_count()));
  Eigen::Index at = 0;
  for (const auto& w : net.weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) out.values[at++] = w(r, c);
  }
  return out;
}

Network unflatten(const Network& like, const FlatParams& params) {
  if (params.values.size() !=
      static_cast<Eigen::Index>(like.param_count())) {
    throw std::invalid_argument("flat parameter length mismatch");
  }
  Network out = like;
  Eigen::Index at = 0;
  for (auto& w : out.weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = params.values[at++];
  }
  return out;
}

Vector forward(const Network& net, const Vector& x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("input dimension mismatch: got " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(net.input_dim()));
  }
  Vector h = x;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    h = net.weights[i] * h;
    if (i + 1 < net.weights.size()) {
      for (Eigen::Index j = 0; j < h.size(); ++j)
        h[j] = activate(net.activation, h[j]);
    }
  }
  return h;
}

namespace {

void check_class(const Network& net, int y) {
  if (y < 0 || y >= net.output_dim()) {
    throw std::invalid_argument("class index out of range: " +
                                std::to_string(y));
  }
}

// Pre-activations per layer; preacts.back() are the logits.
std::vector<Vector> run_forward(const Network& net, const Vector& x,
                                std::vector<Vector>* activations) {
  std::vector<Vector> preacts;
  preacts.reserve(net.depth());
  if (activations) {
    activations->clear();
    activations->push_back(x);
  }
  Vector h = x;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    Vector pre = net.weights[i] * h;
    preacts.push_back(pre);
    if (i + 1 < net.weights.size()) {
      h = pre;
      for (Eigen::Index j = 0; j < h.size(); ++j)
        h[j] = activate(net.activation, h[j]);
      if (activations) activations->push_back(h);
    }
  }
  return preacts;
}

}  // namespace

Vector input_gradient(const Network& net, const Vector& x, int y) {
  check_class(net, y);
  if (x.size() != net.input_dim())
    throw std::invalid_argument("input dimension mismatch");
  std::vector<Vector> preacts = run_forward(net, x, nullptr);
  const std::size_t k = net.depth();
  Vector v = net.weights[k - 1].row(y).transpose();
  for (std::size_t i = k - 1; i-- > 0;) {
    for (Eigen::Index j = 0; j < v.size(); ++j)
      v[j] *= activate_deriv(net.activation, preacts[i][j]);
    v = net.weights[i].transpose() * v;
  }
  return v;
}

double cross_entropy(const Vector& logits, int y) {
  if (y < 0 || y >= logits.size())
    throw std::invalid_argument("class index out of range");
  double mx = logits.maxCoeff();
  double lse = 0.0;
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    lse += std::exp(logits[j] - mx);
  return mx + std::log(lse) - logits[y];
}

FlatParams param_gradient(const Network& net, const Vector& x, int y) {
  check_class(net, y);
  if (x.size() != net.input_dim())
    throw std::invalid_argument("input dimension mismatch");
  std::vector<Vector> activations;
  std::vector<Vector> preacts = run_forward(net, x, &activations);
  const std::size_t k = net.depth();

  // softmax - onehot at the logits
  const Vector& logits = preacts.back();
  double mx = logits.maxCoeff();
  Vector delta = (logits.array() - mx).exp();
  delta /= delta.sum();
  delta[y] -= 1.0;

  std::vector<Matrix> grads(k);
  for (std::size_t i = k; i-- > 0;) {
    grads[i] = delta * activations[i].transpose();
    if (i > 0) {
      delta = net.weights[i].transpose() * delta;
      for (Eigen::Index j = 0; j < delta.size(); ++j)
        delta[j] *= activate_deriv(net.activation, preacts[i - 1][j]);
    }
  }

  Network shaped = net;
  shaped.weights = std::move(grads);
  return flatten(shaped);
}

std::vector<SpectralEstimate> spectral_norms(const Network& net, double tol,
                                             int max_iter) {
  if (tol <= 0) throw std::invalid_argument("tol must be positive");
  std::vector<SpectralEstimate> out;
  out.reserve(net.depth());
  for (const auto& w : net.weights) {
    // deterministic non-degenerate start vector
    Vector v(w.cols());
    for (Eigen::Index j = 0; j < v.size(); ++j)
      v[j] = 1.0 + 1e-3 * static_cast<double>(j % 7);
    v.normalize();
    SpectralEstimate est;
    est.converged = false;
    double prev = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      Vector u = w * v;
      double s = u.norm();
      if (s == 0.0) {
        est = {0.0, 0.0, true};
        break;
      }
      Vector next = w.transpose() * u;
      est.value = s;
      est.residual = (next - s * s * v).norm();
      v = next / next.norm();
      if (std::abs(s - prev) <= tol * std::max(1.0, s)) {
        est.converged = true;
        break;
      }
      prev = s;
    }
    out.push_back(est);
  }
  return out;
}

Network project_spectral(const Network& net, const std::vector<double>& caps) {
  if (caps.size() != net.depth())
    throw std::invalid_argument("one cap per layer required");
  for (double c : caps)
    if (c <= 0) throw std::invalid_argument("caps must be positive");
  Network out = net;
  auto norms = spectral_norms(net, 1e-12, 2000);
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    if (norms[i].value > caps[i])
      out.weights[i] *= caps[i] / norms[i].value;
  }
  return out;
}

std::string serialize_network(const Network& net) {
  nlohmann::json j;
  j["format"] = kFormatTag;
  auto dims = net.dims();
  j["dims"] = std::vector<std::int64_t>(dims.begin(), dims.end());
  j["activation"] = activation_name(net.activation);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& w : net.weights) {
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major.push_back(w(r, c));
    layers.push_back(std::move(row_major));
  }
  j["weights"] = std::move(layers);
  return j.dump();
}

Network deserialize_network(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (j.value("format", "") != kFormatTag)
    throw std::runtime_error("unrecognized network format tag");
  std::vector<std::int64_t> dims = j.at("dims");
  if (dims.size() < 2) throw std::runtime_error("network needs >= 2 dims");
  Network net;
  net.activation = activation_from_name(j.at("activation"));
  const auto& layers = j.at("weights");
  if (layers.size() + 1 != dims.size())
    throw std::runtime_error("layer count does not match dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Eigen::Index rows = dims[i + 1], cols = dims[i];
    std::vector<double> row_major = layers[i];
    if (static_cast<Eigen::Index>(row_major.size()) != rows * cols)
      throw std::runtime_error("layer " + std::to_string(i) + " size mismatch");
    Matrix w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        w(r, c) = row_major[static_cast<std::size_t>(r * cols + c)];
    net.weights.push_back(std::move(w));
  }
  net.validate();
  return net;
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize_network(net);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_network(ss.str());
}

}  // namespace salstab
