#pragma once

// Feed-forward embedding model: observation -> feature vector.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gmf/geometry.hpp"

namespace gmf {

enum class Activation { kTanh, kRelu, kIdentity };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Intermediate activations of one batched forward pass.
struct ForwardCache {
  std::vector<Matrix> activations;  // input, then each hidden layer output
  Matrix raw;                       // last layer output before normalization
  Vector norms;                     // row norms of `raw` (normalized models)
  Matrix features;
};

class EmbeddingModel {
 public:
  /// `layer_sizes` = {D_o, hidden..., D_f}; parameters start at zero.
  EmbeddingModel(std::vector<std::size_t> layer_sizes, Activation activation,
                 bool normalize);

  /// Glorot-uniform weights and zero biases drawn from `seed`.
  static EmbeddingModel initialized(std::vector<std::size_t> layer_sizes,
                                    Activation activation, bool normalize,
                                    std::uint64_t seed);

  std::size_t input_dim() const { return layers_.front(); }
  std::size_t feature_dim() const { return layers_.back(); }
  std::size_t num_layers() const { return layers_.size() - 1; }
  const std::vector<std::size_t>& layer_sizes() const { return layers_; }
  Activation activation() const { return activation_; }
  bool normalize() const { return normalize_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  using RowMatrixMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>;
  RowMatrixMap weight(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  Vector forward(std::span<const double> observation) const;
  Matrix forward(const Matrix& batch) const;
  ForwardCache forward_cached(const Matrix& batch) const;

  /// Gradient of sum_i <feature_grads_i, f_i> with respect to every
  /// parameter, in the layout of parameters().
  std::vector<double> backward(const ForwardCache& cache,
                               const Matrix& feature_grads) const;

  friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + layers_[layer] * layers_[layer + 1];
  }

  std::vector<std::size_t> layers_;
  Activation activation_;
  bool normalize_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// A trained model plus the proportionality constant it was trained with.
struct Checkpoint {
  EmbeddingModel model;
  double lambda = 1.0;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text,
                            const std::string& source = "checkpoint");
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Features of every row of `observations`, one feature per row.
Matrix embed(const EmbeddingModel& model, const Matrix& observations);

}  // namespace gmf
