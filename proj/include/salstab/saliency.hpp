#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salstab/network.hpp"

namespace salstab {

enum class SaliencyMethod {
  kSimpleGrad,
  kSmoothGrad,
  kIntegratedGrad,
  kSmoothedIntegratedGrad,
};

std::string method_name(SaliencyMethod m);
SaliencyMethod method_from_name(const std::string& name);

struct SaliencyMap {
  Vector values;
  SaliencyMethod method = SaliencyMethod::kSimpleGrad;
  double sigma = 0.0;  // 0 iff unsmoothed
  int n_samples = 1;
  std::int64_t input_id = -1;
};

struct SmoothingConfig {
  double sigma = 0.0;  // absolute noise std
  int n_samples = 100;
  std::uint64_t seed = 0;
  bool normalize_input = false;  // project x+z onto the l2 ball of clip_radius
  double clip_radius = 0.0;      // C, used only when normalize_input is set
  bool common_random_numbers = true;  // harness-level: reuse z across models

  void validate() const;
};

// Parameters of the unsmoothed base map (Integrated-Grad only).
struct IntegratedGradParams {
  Vector baseline;  // x0; empty means the zero vector
  int n_steps = 20;
};

SaliencyMap simple_grad(const Network& net, const Vector& x, int y);

// Monte-Carlo mean of simple_grad at x + z, z ~ N(0, sigma^2 I), draws
// addressed by (cfg.seed, sample index).
SaliencyMap smooth_grad(const Network& net, const Vector& x, int y,
                        const SmoothingConfig& cfg);

// Midpoint-rule discretization of the path integral from x0 to x, scaled
// element-wise by (x - x0).
SaliencyMap integrated_grad(const Network& net, const Vector& x, int y,
                            const Vector& x0, int n_steps = 20);

// Gaussian smoothing of any base map. base = kSimpleGrad coincides with
// smooth_grad bit-for-bit under equal seeds.
SaliencyMap smoothed_saliency(SaliencyMethod base, const Network& net,
                              const Vector& x, int y,
                              const SmoothingConfig& cfg,
                              const IntegratedGradParams& ig_params = {});

// CSV: one row per map (input_id, method, sigma, n_samples, m values).
void write_maps_csv(const std::vector<SaliencyMap>& maps,
                    const std::string& path);
std::vector<SaliencyMap> read_maps_csv(const std::string& path);

// Compact binary batch format for sweeps (little-endian, tagged header).
void write_maps_binary(const std::vector<SaliencyMap>& maps,
                       const std::string& path);
std::vector<SaliencyMap> read_maps_binary(const std::string& path);

}  // namespace salstab
