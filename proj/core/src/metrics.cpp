#include "bnl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace bnl::metrics {

std::vector<double> neuron_activity(const TensorF& activations) {
  if (activations.rank() < 2) throw ShapeError("neuron_activity expects a batched activation tensor");
  const std::size_t n = activations.shape().back();
  const std::size_t rows = activations.size() / n;
  std::vector<double> mean(n, 0.0);
  const auto v = activations.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) mean[j] += std::abs(static_cast<double>(v[r * n + j]));
  }
  for (double& m : mean) m /= static_cast<double>(rows);
  return mean;
}

LayerDormancy layer_dormancy(std::span<const double> activity, double threshold) {
  LayerDormancy out;
  out.neurons = activity.size();
  if (activity.empty()) return out;
  double layer_mean = 0.0;
  for (double a : activity) layer_mean += a;
  layer_mean /= static_cast<double>(activity.size());
  if (layer_mean == 0.0) {
    out.dormant = out.neurons;
  } else {
    for (double a : activity) {
      if (a / layer_mean <= threshold) ++out.dormant;
    }
  }
  out.fraction = static_cast<double>(out.dormant) / static_cast<double>(out.neurons);
  return out;
}

namespace {

double pooled_fraction(const std::vector<LayerDormancy>& layers) {
  std::size_t total = 0, dormant = 0;
  for (const auto& l : layers) {
    total += l.neurons;
    dormant += l.dormant;
  }
  return total == 0 ? 0.0 : static_cast<double>(dormant) / static_cast<double>(total);
}

}  // namespace

DormancyReport dormant_fraction(const Network& network, const TensorF& probe_batch, double threshold) {
  if (probe_batch.rank() != 4 || probe_batch.dim(0) == 0) {
    throw std::invalid_argument("dormant_fraction needs a non-empty N×H×W×C probe batch");
  }
  NoGradGuard guard;
  const auto out = network.forward(VarF(probe_batch), true);
  DormancyReport report;
  report.threshold = threshold;
  for (const auto& h : out.phi) report.phi_layers.push_back(layer_dormancy(neuron_activity(h.value()), threshold));
  for (const auto& h : out.psi) report.psi_layers.push_back(layer_dormancy(neuron_activity(h.value()), threshold));
  report.phi = pooled_fraction(report.phi_layers);
  report.psi = pooled_fraction(report.psi_layers);
  return report;
}

double feature_norm(const TensorF& features) {
  if (features.rank() != 2) throw ShapeError("feature_norm expects N×d features");
  const std::size_t n = features.dim(0), d = features.dim(1);
  const auto v = features.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(v[i * d + j]) * v[i * d + j];
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(n);
}

double feature_norm(const Network& network, const TensorF& probe_batch) {
  NoGradGuard guard;
  return feature_norm(network.forward(VarF(probe_batch)).features.value());
}

DensityReport effective_density(const Network& network, const sparsity::ParamMask* bottleneck_mask) {
  DensityReport r;
  r.baseline = flatten_baseline_weight_count(network.spec());
  const auto& w = network.bottleneck_param();
  r.active = bottleneck_mask ? bottleneck_mask->active_count() : w.var.value().size();
  r.density = static_cast<double>(r.active) / static_cast<double>(r.baseline);
  return r;
}

DensityReport effective_density(const Network& network, const std::optional<sparsity::SparseTraining>& sparse) {
  const sparsity::ParamMask* mask = sparse ? sparse->mask_for(network.bottleneck_index()) : nullptr;
  return effective_density(network, mask);
}

SaliencyMap grad_cam_from(const TensorD& activations, const TensorD& gradients, std::size_t out_h,
                          std::size_t out_w) {
  if (activations.rank() != 3 || activations.shape() != gradients.shape()) {
    throw ShapeError("grad_cam expects matching H×W×C activations and gradients");
  }
  const std::size_t h = activations.dim(0), w = activations.dim(1), c = activations.dim(2);
  const auto a = activations.data();
  const auto g = gradients.data();
  std::vector<double> alpha(c, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t k = 0; k < c; ++k) alpha[k] += g[p * c + k];
  }
  for (double& x : alpha) x /= static_cast<double>(h * w);

  std::vector<double> coarse(h * w, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += alpha[k] * a[p * c + k];
    coarse[p] = std::max(s, 0.0);
  }

  SaliencyMap map{out_h, out_w, std::vector<double>(out_h * out_w, 0.0)};
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t col = 0; col < out_w; ++col) {
      map.values[r * out_w + col] = coarse[(r * h / out_h) * w + col * w / out_w];
    }
  }
  const double mx = *std::max_element(map.values.begin(), map.values.end());
  if (mx > 0.0) {
    for (double& v : map.values) v /= mx;
  }
  return map;
}

SaliencyMap grad_cam(const Network& network, const TensorF& observation) {
  if (observation.rank() != 3) throw ShapeError("grad_cam expects a single H×W×C observation");
  // Work on a double copy so the caller's gradient buffers stay untouched.
  const QNetwork<double> net = network.cast<double>();
  const auto out = net.forward(VarD(observation.cast<double>()));
  const auto q = out.q.value().data();
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  TensorD seed(out.q.shape());
  seed[best] = 1.0;
  Var<double> root = out.q;
  root.backward(seed);
  const auto& s = out.encoder_out.shape();
  const Shape hwc{s[1], s[2], s[3]};
  return grad_cam_from(out.encoder_out.value().reshaped(hwc), out.encoder_out.grad().reshaped(hwc),
                       observation.dim(0), observation.dim(1));
}

void write_pgm(std::ostream& out, const SaliencyMap& map) {
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (double v : map.values) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(byte));
  }
}

void write_pgm(const std::string& path, const SaliencyMap& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  write_pgm(f, map);
}

void write_grid_csv(std::ostream& out, const SaliencyMap& map) {
  out.precision(9);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      if (c) out << ',';
      out << map.at(r, c);
    }
    out << '\n';
  }
}

}  // namespace bnl::metrics
