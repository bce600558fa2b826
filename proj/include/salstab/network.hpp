#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace salstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { kTanh, kShiftedSoftplus, kRelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// phi(0) = 0 and |phi(a) - phi(b)| <= |a - b| hold for all three variants.
double activate(Activation a, double v);
// ReLU derivative at 0 is defined as 0.
double activate_deriv(Activation a, double v);
// sup |phi''|, empty for ReLU (not smooth). Tanh: 4/(3*sqrt(3)),
// shifted softplus: 1/4, both within the 1-smooth assumption.
std::optional<double> smoothness_constant(Activation a);

// Fully connected chain W_k phi(W_{k-1} phi(... phi(W_1 x))), no biases,
// no activation after the final layer. Immutable in all evaluation paths;
// forward/gradient calls on a shared instance are safe concurrently.
struct Network {
  std::vector<Matrix> weights;  // weights[i] maps layer i activations
  Activation activation = Activation::kTanh;

  std::size_t depth() const { return weights.size(); }
  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.back().rows(); }
  // [d_0, d_1, ..., d_k]
  std::vector<Eigen::Index> dims() const;
  std::size_t param_count() const;

  void validate() const;  // throws std::invalid_argument on a broken chain
};

// All weight entries in a fixed order: layer-major, row-major within a layer.
struct FlatParams {
  Vector values;
};

FlatParams flatten(const Network& net);
// Shapes come from `like`; round-trips with flatten bit-exactly.
Network unflatten(const Network& like, const FlatParams& params);

Vector forward(const Network& net, const Vector& x);

// d(logits_y)/dx by reverse accumulation through the layer chain.
Vector input_gradient(const Network& net, const Vector& x, int y);

// Gradient of cross_entropy(forward(net, x), y) w.r.t. every weight entry.
FlatParams param_gradient(const Network& net, const Vector& x, int y);

// -log softmax(logits)_y via log-sum-exp.
double cross_entropy(const Vector& logits, int y);

struct SpectralEstimate {
  double value = 0.0;     // largest singular value (lower bound estimate)
  double residual = 0.0;  // ||W^T W v - value^2 v|| at the final iterate
  bool converged = true;
};

// Per-layer operator norms by power iteration on W^T W.
std::vector<SpectralEstimate> spectral_norms(const Network& net,
                                             double tol = 1e-10,
                                             int max_iter = 1000);

// Rescales each W_i by min(1, cap_i / ||W_i||_2).
Network project_spectral(const Network& net, const std::vector<double>& caps);

// JSON document {format, dims, activation, weights row-major per layer}.
std::string serialize_network(const Network& net);
Network deserialize_network(const std::string& json_text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace salstab
