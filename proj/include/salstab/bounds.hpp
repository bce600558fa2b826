#pragma once

#include <string>
#include <vector>

namespace salstab {

// Per-layer spectral caps plus the input-norm cap: the inputs to every
// closed-form bound. loss_lip is the Lipschitz constant assumed for the
// logit-space loss (1 matches the accounting used by the bound formulas;
// cross-entropy's true constant is sqrt(2)).
struct NormProfile {
  std::vector<double> layer_caps;  // B_1..B_k
  double input_cap = 1.0;          // C
  int input_dim = 1;               // m
  double loss_lip = 1.0;

  int depth() const { return static_cast<int>(layer_caps.size()); }
  void validate() const;
  // Smoothness-dependent bounds assume B_i, C >= 1; false means the
  // assumption is violated and those bounds should be flagged.
  bool mild_assumption_holds() const;
};

enum class SmoothnessVariant { kNoisySgd, kVanillaSmoothActivation };
enum class StabilityRegime { kNonConvex, kConvex };

// Delta_{t,i}: elementary symmetric polynomial e_{t-i}(B_1..B_t), computed
// by the coefficient recurrence (never subset enumeration).
double delta(const std::vector<double>& caps, int order);
// Delta over the first `t` caps.
double delta_prefix(const std::vector<double>& caps, int t, int order);

// loss_lip * Delta_{k,1} * C
double lipschitz_bound(const NormProfile& p);

// NoisySgd: L / kappa. VanillaSmoothActivation: (3k+1) Delta_{k,1}^2 C^2,
// which requires a smooth activation; callers with ReLU must not use it.
double smoothness_bound(const NormProfile& p, SmoothnessVariant variant,
                        double kappa = 0.0);

// The SGD stability lemma. NonConvex:
//   ((1+beta c)/(n-1)) (2 c L L')^{1/(beta c+1)} (T M')^{beta c/(beta c+1)}
// Convex: (2 L L' / n) * alpha_sum.
double generic_stability_bound(double m_prime, double l_prime, double lip,
                               double beta, double step_c, double T, double n,
                               StabilityRegime regime, double alpha_sum = 0.0);

// Saliency-loss constants (M' bounded, L' Lipschitz) per method.
struct SaliencyLossConstants {
  double m_prime = 0.0;
  double l_prime = 0.0;
  bool degenerate = false;  // k = 1 collapses L' to 0
};

SaliencyLossConstants simplegrad_constants(const NormProfile& p);
SaliencyLossConstants smoothgrad_constants(const NormProfile& p, double sigma);
SaliencyLossConstants integratedgrad_constants(const NormProfile& p);

double simplegrad_stability_bound(const NormProfile& p, double n, double T,
                                  double step_c, double beta);
double smoothgrad_stability_bound(const NormProfile& p, double n, double T,
                                  double step_c, double beta, double sigma);
double integratedgrad_stability_bound(const NormProfile& p, double n, double T,
                                      double step_c, double beta,
                                      StabilityRegime regime,
                                      double alpha_sum = 0.0);

enum class FidelityMethod { kSimpleGrad, kIntegratedGrad };

// Lambda sigma sqrt(m) for Simple-Grad, Lambda (3C+1) sigma sqrt(m) for
// Integrated-Grad, with Lambda = Delta_{k,0} sum_{i<k} Delta_{i,0}.
double fidelity_bound(const NormProfile& p, double sigma,
                      FidelityMethod method);

struct BoundReport {
  double lipschitz = 0.0;
  double smoothness = 0.0;
  double simplegrad_stability = 0.0;
  double smoothgrad_stability = 0.0;    // at `sigma`
  double integratedgrad_stability = 0.0;
  double simplegrad_fidelity = 0.0;
  double integratedgrad_fidelity = 0.0;
  double sigma = 0.0;
  bool degenerate_depth = false;  // k = 1: stability constants collapse
  bool mild_assumption = true;
};

BoundReport evaluate_bounds(const NormProfile& p, double n, double T,
                            double step_c, double sigma);
std::string bound_report_json(const BoundReport& r);

}  // namespace salstab
