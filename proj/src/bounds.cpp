#include "salstab/bounds.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace salstab {

void NormProfile::validate() const {
  if (layer_caps.empty()) throw std::invalid_argument("profile needs layers");
  for (double b : layer_caps)
    if (b <= 0) throw std::invalid_argument("layer caps must be positive");
  if (input_cap <= 0) throw std::invalid_argument("input cap must be positive");
  if (input_dim < 1) throw std::invalid_argument("input dim must be positive");
}

bool NormProfile::mild_assumption_holds() const {
  if (input_cap < 1.0) return false;
  for (double b : layer_caps)
    if (b < 1.0) return false;
  return true;
}

double delta_prefix(const std::vector<double>& caps, int t, int order) {
  if (t < 0 || t > static_cast<int>(caps.size()))
    throw std::invalid_argument("prefix length out of range");
  if (order < 0 || order > t)
    throw std::invalid_argument("delta order out of range");
  // coefficient DP for e_0..e_{t-order} of caps[0..t)
  int want = t - order;
  std::vector<double> e(static_cast<std::size_t>(want) + 1, 0.0);
  e[0] = 1.0;
  for (int i = 0; i < t; ++i) {
    int hi = std::min(i + 1, want);
    for (int j = hi; j >= 1; --j)
      e[static_cast<std::size_t>(j)] += caps[static_cast<std::size_t>(i)] *
                                        e[static_cast<std::size_t>(j - 1)];
  }
  return e[static_cast<std::size_t>(want)];
}

double delta(const std::vector<double>& caps, int order) {
  return delta_prefix(caps, static_cast<int>(caps.size()), order);
}

namespace {

// sum_{i=1}^{k-1} Delta_{i,1}
double prefix_delta1_sum(const NormProfile& p) {
  double s = 0.0;
  for (int i = 1; i < p.depth(); ++i) s += delta_prefix(p.layer_caps, i, 1);
  return s;
}

// sum_{i=1}^{k-1} Delta_{i,0}
double prefix_delta0_sum(const NormProfile& p) {
  double s = 0.0;
  for (int i = 1; i < p.depth(); ++i) s += delta_prefix(p.layer_caps, i, 0);
  return s;
}

}  // namespace

double lipschitz_bound(const NormProfile& p) {
  p.validate();
  return p.loss_lip * delta(p.layer_caps, 1) * p.input_cap;
}

double smoothness_bound(const NormProfile& p, SmoothnessVariant variant,
                        double kappa) {
  p.validate();
  switch (variant) {
    case SmoothnessVariant::kNoisySgd:
      if (kappa <= 0) throw std::invalid_argument("kappa must be positive");
      return lipschitz_bound(p) / kappa;
    case SmoothnessVariant::kVanillaSmoothActivation: {
      double d1 = delta(p.layer_caps, 1);
      double k = static_cast<double>(p.depth());
      return (3.0 * k + 1.0) * d1 * d1 * p.input_cap * p.input_cap;
    }
  }
  throw std::logic_error("unknown smoothness variant");
}

double generic_stability_bound(double m_prime, double l_prime, double lip,
                               double beta, double step_c, double T, double n,
                               StabilityRegime regime, double alpha_sum) {
  if (n < 2) throw std::invalid_argument("n must be >= 2");
  switch (regime) {
    case StabilityRegime::kConvex:
      return 2.0 * lip * l_prime / n * alpha_sum;
    case StabilityRegime::kNonConvex: {
      double bc = beta * step_c;
      double q = 1.0 / (bc + 1.0);
      return (1.0 + bc) / (n - 1.0) *
             std::pow(2.0 * step_c * lip * l_prime, q) *
             std::pow(T * m_prime, bc * q);
    }
  }
  throw std::logic_error("unknown stability regime");
}

SaliencyLossConstants simplegrad_constants(const NormProfile& p) {
  p.validate();
  SaliencyLossConstants c;
  double d0 = delta(p.layer_caps, 0);
  c.m_prime = 2.0 * d0;
  c.l_prime = 2.0 * d0 * prefix_delta1_sum(p) * p.input_cap;
  c.degenerate = p.depth() == 1;
  return c;
}

SaliencyLossConstants smoothgrad_constants(const NormProfile& p,
                                           double sigma) {
  p.validate();
  if (sigma <= 0) throw std::invalid_argument("sigma must be positive");
  SaliencyLossConstants c;
  c.m_prime = 2.0 * delta(p.layer_caps, 0);
  c.l_prime = p.input_cap * delta(p.layer_caps, 1) / sigma;
  c.degenerate = p.depth() == 1;
  return c;
}

SaliencyLossConstants integratedgrad_constants(const NormProfile& p) {
  p.validate();
  SaliencyLossConstants c;
  double d0 = delta(p.layer_caps, 0);
  c.m_prime = 4.0 * d0 * p.input_cap;
  c.l_prime = 4.0 * d0 * prefix_delta1_sum(p) * p.input_cap * p.input_cap;
  c.degenerate = p.depth() == 1;
  return c;
}

double simplegrad_stability_bound(const NormProfile& p, double n, double T,
                                  double step_c, double beta) {
  auto c = simplegrad_constants(p);
  double lip = lipschitz_bound(p);
  return generic_stability_bound(c.m_prime, c.l_prime, lip, beta, step_c, T, n,
                                 StabilityRegime::kNonConvex);
}

double smoothgrad_stability_bound(const NormProfile& p, double n, double T,
                                  double step_c, double beta, double sigma) {
  auto c = smoothgrad_constants(p, sigma);
  double lip = lipschitz_bound(p);
  return generic_stability_bound(c.m_prime, c.l_prime, lip, beta, step_c, T, n,
                                 StabilityRegime::kNonConvex);
}

double integratedgrad_stability_bound(const NormProfile& p, double n, double T,
                                      double step_c, double beta,
                                      StabilityRegime regime,
                                      double alpha_sum) {
  auto c = integratedgrad_constants(p);
  double lip = lipschitz_bound(p);
  return generic_stability_bound(c.m_prime, c.l_prime, lip, beta, step_c, T, n,
                                 regime, alpha_sum);
}

double fidelity_bound(const NormProfile& p, double sigma,
                      FidelityMethod method) {
  p.validate();
  if (sigma < 0) throw std::invalid_argument("sigma must be nonnegative");
  double lambda = delta(p.layer_caps, 0) * prefix_delta0_sum(p);
  double base = lambda * sigma * std::sqrt(static_cast<double>(p.input_dim));
  switch (method) {
    case FidelityMethod::kSimpleGrad:
      return base;
    case FidelityMethod::kIntegratedGrad:
      return (3.0 * p.input_cap + 1.0) * base;
  }
  throw std::logic_error("unknown fidelity method");
}

BoundReport evaluate_bounds(const NormProfile& p, double n, double T,
                            double step_c, double sigma) {
  BoundReport r;
  r.sigma = sigma;
  r.lipschitz = lipschitz_bound(p);
  r.smoothness =
      smoothness_bound(p, SmoothnessVariant::kVanillaSmoothActivation);
  r.simplegrad_stability =
      simplegrad_stability_bound(p, n, T, step_c, r.smoothness);
  r.smoothgrad_stability =
      sigma > 0
          ? smoothgrad_stability_bound(p, n, T, step_c, r.smoothness, sigma)
          : r.simplegrad_stability;
  r.integratedgrad_stability = integratedgrad_stability_bound(
      p, n, T, step_c, r.smoothness, StabilityRegime::kNonConvex);
  r.simplegrad_fidelity = fidelity_bound(p, sigma, FidelityMethod::kSimpleGrad);
  r.integratedgrad_fidelity =
      fidelity_bound(p, sigma, FidelityMethod::kIntegratedGrad);
  r.degenerate_depth = p.depth() == 1;
  r.mild_assumption = p.mild_assumption_holds();
  return r;
}

std::string bound_report_json(const BoundReport& r) {
  nlohmann::json j;
  j["sigma"] = r.sigma;
  j["L"] = {{"formula", "loss_lip * Delta_{k,1} * C"}, {"value", r.lipschitz}};
  j["beta"] = {{"formula", "(3k+1) * Delta_{k,1}^2 * C^2"},
               {"value", r.smoothness}};
  j["stability"] = {
      {"simple_grad",
       {{"formula", "((1+bc)/(n-1)) (2cL)^{1/(bc+1)} T^{bc/(bc+1)} Gamma"},
        {"value", r.simplegrad_stability}}},
      {"smooth_grad",
       {{"formula",
         "simple_grad * (Delta_{k,1}/(2 sigma Delta_{k,0} sum Delta_{i,1}))^{1/(bc+1)}"},
        {"value", r.smoothgrad_stability}}},
      {"integrated_grad",
       {{"formula", "simple_grad * 2C"},
        {"value", r.integratedgrad_stability}}}};
  j["fidelity"] = {
      {"simple_grad",
       {{"formula", "Lambda sigma sqrt(m)"}, {"value", r.simplegrad_fidelity}}},
      {"integrated_grad",
       {{"formula", "Lambda (3C+1) sigma sqrt(m)"},
        {"value", r.integratedgrad_fidelity}}}};
  j["degenerate_depth"] = r.degenerate_depth;
  j["mild_assumption"] = r.mild_assumption;
  return j.dump(2);
}

}  // namespace salstab
