#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bnl/network.hpp"
#include "bnl/sparsity.hpp"

namespace bnl::metrics {

inline constexpr double kDefaultDormancyThreshold = 0.001;
inline constexpr std::size_t kDefaultProbeSize = 512;

struct LayerDormancy {
  std::size_t neurons = 0;
  std::size_t dormant = 0;
  double fraction = 0.0;
};

/// Aggregates weight every neuron equally across the layers of a group.
/// ψ's Q-value layer is never included.
struct DormancyReport {
  double threshold = kDefaultDormancyThreshold;
  std::vector<LayerDormancy> phi_layers;
  std::vector<LayerDormancy> psi_layers;
  double phi = 0.0;
  double psi = 0.0;
};

/// Per-neuron mean |h| over batch and spatial positions; neurons live on the
/// trailing axis.
std::vector<double> neuron_activity(const TensorF& activations);

/// Scores s_i = a_i / mean_j(a_j). A layer whose activity is all zero is
/// entirely dormant.
LayerDormancy layer_dormancy(std::span<const double> activity, double threshold);

DormancyReport dormant_fraction(const Network& network, const TensorF& probe_batch,
                                double threshold = kDefaultDormancyThreshold);

/// Batch mean of the L2 norm of the features entering ψ.
double feature_norm(const TensorF& features);
double feature_norm(const Network& network, const TensorF& probe_batch);

struct DensityReport {
  std::size_t active = 0;    // unmasked weights in ψ's first layer
  std::size_t baseline = 0;  // H·W·C·dim(ψ)
  double density = 0.0;
};

DensityReport effective_density(const Network& network, const sparsity::ParamMask* bottleneck_mask = nullptr);

/// Convenience: uses the mask the sparse trainer holds for the bottleneck layer, if any.
DensityReport effective_density(const Network& network, const std::optional<sparsity::SparseTraining>& sparse);

struct SaliencyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, in [0, 1]

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Grad-CAM from encoder activations A (H×W×C) and dQ/dA of the same shape,
/// upsampled by nearest neighbour to out_h×out_w.
SaliencyMap grad_cam_from(const TensorD& activations, const TensorD& gradients, std::size_t out_h,
                          std::size_t out_w);

/// Saliency for the greedy action's Q-value at a single H₀×W₀×C₀ observation.
SaliencyMap grad_cam(const Network& network, const TensorF& observation);

void write_pgm(std::ostream& out, const SaliencyMap& map);
void write_pgm(const std::string& path, const SaliencyMap& map);
void write_grid_csv(std::ostream& out, const SaliencyMap& map);

}  // namespace bnl::metrics
