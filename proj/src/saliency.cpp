#include "salstab/saliency.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "salstab/rng.hpp"

namespace salstab {

std::string method_name(SaliencyMethod m) {
  switch (m) {
    case SaliencyMethod::kSimpleGrad: return "simple_grad";
    case SaliencyMethod::kSmoothGrad: return "smooth_grad";
    case SaliencyMethod::kIntegratedGrad: return "integrated_grad";
    case SaliencyMethod::kSmoothedIntegratedGrad:
      return "smoothed_integrated_grad";
  }
  throw std::logic_error("unknown saliency method");
}

SaliencyMethod method_from_name(const std::string& name) {
  if (name == "simple_grad") return SaliencyMethod::kSimpleGrad;
  if (name == "smooth_grad") return SaliencyMethod::kSmoothGrad;
  if (name == "integrated_grad") return SaliencyMethod::kIntegratedGrad;
  if (name == "smoothed_integrated_grad")
    return SaliencyMethod::kSmoothedIntegratedGrad;
  throw std::invalid_argument("unknown saliency method: " + name);
}

void SmoothingConfig::validate() const {
  if (sigma < 0) throw std::invalid_argument("sigma must be nonnegative");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (normalize_input && clip_radius <= 0)
    throw std::invalid_argument("normalize_input requires clip_radius > 0");
}

SaliencyMap simple_grad(const Network& net, const Vector& x, int y) {
  SaliencyMap map;
  map.values = input_gradient(net, x, y);
  map.method = SaliencyMethod::kSimpleGrad;
  map.sigma = 0.0;
  map.n_samples = 1;
  return map;
}

SaliencyMap integrated_grad(const Network& net, const Vector& x, int y,
                            const Vector& x0, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (x0.size() != x.size())
    throw std::invalid_argument("baseline dimension mismatch");
  Vector path = x - x0;
  Vector acc = Vector::Zero(x.size());
  for (int s = 1; s <= n_steps; ++s) {
    double alpha = (s - 0.5) / n_steps;  // midpoint nodes
    acc += input_gradient(net, x0 + alpha * path, y);
  }
  SaliencyMap map;
  map.values = path.cwiseProduct(acc / n_steps);
  map.method = SaliencyMethod::kIntegratedGrad;
  map.sigma = 0.0;
  map.n_samples = 1;
  return map;
}

namespace {

Vector clip_to_ball(const Vector& v, double radius) {
  double norm = v.norm();
  return norm > radius ? Vector((radius / norm) * v) : v;
}

Vector base_map_at(SaliencyMethod base, const Network& net, const Vector& x,
                   int y, const IntegratedGradParams& ig) {
  switch (base) {
    case SaliencyMethod::kSimpleGrad:
      return input_gradient(net, x, y);
    case SaliencyMethod::kIntegratedGrad: {
      Vector x0 = ig.baseline.size() > 0 ? ig.baseline
                                         : Vector(Vector::Zero(x.size()));
      return integrated_grad(net, x, y, x0, ig.n_steps).values;
    }
    default:
      throw std::invalid_argument("smoothing base must be an unsmoothed method");
  }
}

}  // namespace

SaliencyMap smoothed_saliency(SaliencyMethod base, const Network& net,
                              const Vector& x, int y,
                              const SmoothingConfig& cfg,
                              const IntegratedGradParams& ig_params) {
  cfg.validate();
  if (cfg.sigma <= 0)
    throw std::invalid_argument("smoothing requires sigma > 0");
  Vector acc = Vector::Zero(x.size());
  Vector z(x.size());
  for (int j = 0; j < cfg.n_samples; ++j) {
    // draws keyed by (seed, sample index): parallel evaluation order and
    // shared draws across compared models both come for free
    CounterRng rng(CounterRng::derive(cfg.seed, static_cast<std::uint64_t>(j)));
    rng.fill_gaussian(z, cfg.sigma);
    Vector xp = x + z;
    if (cfg.normalize_input) xp = clip_to_ball(xp, cfg.clip_radius);
    acc += base_map_at(base, net, xp, y, ig_params);
  }
  SaliencyMap map;
  map.values = acc / cfg.n_samples;
  map.method = base == SaliencyMethod::kSimpleGrad
                   ? SaliencyMethod::kSmoothGrad
                   : SaliencyMethod::kSmoothedIntegratedGrad;
  map.sigma = cfg.sigma;
  map.n_samples = cfg.n_samples;
  return map;
}

SaliencyMap smooth_grad(const Network& net, const Vector& x, int y,
                        const SmoothingConfig& cfg) {
  return smoothed_saliency(SaliencyMethod::kSimpleGrad, net, x, y, cfg);
}

void write_maps_csv(const std::vector<SaliencyMap>& maps,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "input_id,method,sigma,n_samples,values...\n";
  for (const auto& m : maps) {
    out << m.input_id << "," << method_name(m.method) << "," << m.sigma << ","
        << m.n_samples;
    for (Eigen::Index i = 0; i < m.values.size(); ++i) out << "," << m.values[i];
    out << "\n";
  }
}

std::vector<SaliencyMap> read_maps_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<SaliencyMap> maps;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    SaliencyMap m;
    std::getline(ss, cell, ',');
    m.input_id = std::stoll(cell);
    std::getline(ss, cell, ',');
    m.method = method_from_name(cell);
    std::getline(ss, cell, ',');
    m.sigma = std::stod(cell);
    std::getline(ss, cell, ',');
    m.n_samples = std::stoi(cell);
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    m.values = Eigen::Map<Vector>(vals.data(),
                                  static_cast<Eigen::Index>(vals.size()));
    maps.push_back(std::move(m));
  }
  return maps;
}

namespace {
constexpr std::uint32_t kMapBatchMagic = 0x53414c42;  // "SALB"
}

void write_maps_binary(const std::vector<SaliencyMap>& maps,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  auto put32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  put32(kMapBatchMagic);
  put32(1);  // version
  put32(static_cast<std::uint32_t>(maps.size()));
  put32(maps.empty() ? 0
                     : static_cast<std::uint32_t>(maps.front().values.size()));
  for (const auto& m : maps) {
    std::int64_t id = m.input_id;
    out.write(reinterpret_cast<const char*>(&id), 8);
    put32(static_cast<std::uint32_t>(m.method));
    put32(static_cast<std::uint32_t>(m.n_samples));
    out.write(reinterpret_cast<const char*>(&m.sigma), 8);
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * 8));
  }
}

std::vector<SaliencyMap> read_maps_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get32 = [&]() {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4))
      throw std::runtime_error(path + ": truncated map batch");
    return v;
  };
  if (get32() != kMapBatchMagic)
    throw std::runtime_error(path + ": bad map batch magic");
  if (get32() != 1) throw std::runtime_error(path + ": unknown batch version");
  std::uint32_t count = get32();
  std::uint32_t dim = get32();
  std::vector<SaliencyMap> maps(count);
  for (auto& m : maps) {
    std::int64_t id = 0;
    in.read(reinterpret_cast<char*>(&id), 8);
    m.input_id = id;
    m.method = static_cast<SaliencyMethod>(get32());
    m.n_samples = static_cast<int>(get32());
    in.read(reinterpret_cast<char*>(&m.sigma), 8);
    m.values.resize(dim);
    if (!in.read(reinterpret_cast<char*>(m.values.data()),
                 static_cast<std::streamsize>(dim) * 8))
      throw std::runtime_error(path + ": truncated map payload");
  }
  return maps;
}

}  // namespace salstab
