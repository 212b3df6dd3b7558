#include "gmf/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "gmf/error.hpp"
#include "gmf/io.hpp"

namespace gmf {

namespace {

constexpr double kMinNorm = 1e-300;

void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::kTanh: z = z.array().tanh(); break;
    case Activation::kRelu: z = z.array().max(0.0); break;
    case Activation::kIdentity: break;
  }
}

// Derivative of the activation expressed through its output.
Matrix activation_slope(Activation a, const Matrix& out) {
  switch (a) {
    case Activation::kTanh: return (1.0 - out.array().square()).matrix();
    case Activation::kRelu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::kIdentity: break;
  }
  return Matrix::Ones(out.rows(), out.cols());
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  fail(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

EmbeddingModel::EmbeddingModel(std::vector<std::size_t> layer_sizes,
                               Activation activation, bool normalize)
    : layers_(std::move(layer_sizes)), activation_(activation), normalize_(normalize) {
  require(layers_.size() >= 2, "model needs at least an input and an output layer");
  for (std::size_t s : layers_) require(s >= 1, "model layer sizes must be positive");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    offsets_.push_back(total);
    total += layers_[l] * layers_[l + 1] + layers_[l + 1];
  }
  params_.assign(total, 0.0);
}

EmbeddingModel EmbeddingModel::initialized(std::vector<std::size_t> layer_sizes,
                                           Activation activation, bool normalize,
                                           std::uint64_t seed) {
  EmbeddingModel m(std::move(layer_sizes), activation, normalize);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const double fan_in = static_cast<double>(m.layers_[l]);
    const double fan_out = static_cast<double>(m.layers_[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t w0 = m.weight_offset(l);
    for (std::size_t k = 0; k < m.layers_[l] * m.layers_[l + 1]; ++k) {
      m.params_[w0 + k] = dist(rng);
    }
  }
  return m;
}

EmbeddingModel::RowMatrixMap EmbeddingModel::weight(std::size_t layer) const {
  return RowMatrixMap(params_.data() + weight_offset(layer),
                      static_cast<Eigen::Index>(layers_[layer + 1]),
                      static_cast<Eigen::Index>(layers_[layer]));
}

Eigen::Map<const Vector> EmbeddingModel::bias(std::size_t layer) const {
  return Eigen::Map<const Vector>(params_.data() + bias_offset(layer),
                                  static_cast<Eigen::Index>(layers_[layer + 1]));
}

ForwardCache EmbeddingModel::forward_cached(const Matrix& batch) const {
  if (static_cast<std::size_t>(batch.cols()) != input_dim()) {
    fail(ErrorCode::kInvalidArgument,
         "model expects observations of dimension " + std::to_string(input_dim()) +
             ", got " + std::to_string(batch.cols()));
  }
  ForwardCache cache;
  cache.activations.reserve(num_layers());
  cache.activations.push_back(batch);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z = cache.activations.back() * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (l + 1 < num_layers()) {
      apply_activation(activation_, z);
      cache.activations.push_back(std::move(z));
    } else {
      cache.raw = std::move(z);
    }
  }
  cache.features = cache.raw;
  if (normalize_) {
    cache.norms = cache.raw.rowwise().norm();
    for (Eigen::Index i = 0; i < cache.raw.rows(); ++i) {
      if (cache.norms(i) > kMinNorm) cache.features.row(i) /= cache.norms(i);
    }
  }
  return cache;
}

Matrix EmbeddingModel::forward(const Matrix& batch) const {
  return forward_cached(batch).features;
}

Vector EmbeddingModel::forward(std::span<const double> observation) const {
  Matrix x(1, static_cast<Eigen::Index>(observation.size()));
  for (std::size_t k = 0; k < observation.size(); ++k) x(0, k) = observation[k];
  return forward(x).row(0).transpose();
}

std::vector<double> EmbeddingModel::backward(const ForwardCache& cache,
                                             const Matrix& feature_grads) const {
  require(feature_grads.rows() == cache.features.rows() &&
              feature_grads.cols() == cache.features.cols(),
          "backward: feature gradient shape does not match the forward batch");
  std::vector<double> grads(params_.size(), 0.0);

  Matrix delta = feature_grads;
  if (normalize_) {
    // d(z/|z|) = (I - f f^T) dz / |z|
    for (Eigen::Index i = 0; i < delta.rows(); ++i) {
      if (cache.norms(i) <= kMinNorm) {
        delta.row(i).setZero();
        continue;
      }
      const auto f = cache.features.row(i);
      const double proj = f.dot(delta.row(i));
      delta.row(i) = (delta.row(i) - proj * f) / cache.norms(i);
    }
  }

  for (std::size_t l = num_layers(); l-- > 0;) {
    const Matrix& input = cache.activations[l];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        dw(grads.data() + weight_offset(l), static_cast<Eigen::Index>(layers_[l + 1]),
           static_cast<Eigen::Index>(layers_[l]));
    Eigen::Map<Vector> db(grads.data() + bias_offset(l),
                          static_cast<Eigen::Index>(layers_[l + 1]));
    dw.noalias() = delta.transpose() * input;
    db = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix upstream = delta * weight(l);
      delta = upstream.cwiseProduct(activation_slope(activation_, input));
    }
  }
  return grads;
}

Matrix embed(const EmbeddingModel& model, const Matrix& observations) {
  return model.forward(observations);
}

// Format:
//   gmf-model 1
//   layers <L> <size_0> ... <size_{L-1}>
//   activation <tanh|relu|identity>
//   normalize <0|1>
//   lambda <value>
//   params <P>
//   <p_1> ... <p_P>      (one per line)
std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  const EmbeddingModel& m = checkpoint.model;
  std::ostringstream out;
  out << "gmf-model 1\nlayers " << m.layer_sizes().size();
  for (std::size_t s : m.layer_sizes()) out << ' ' << s;
  out << "\nactivation " << activation_name(m.activation()) << "\nnormalize "
      << (m.normalize() ? 1 : 0) << "\nlambda " << io::format_double(checkpoint.lambda)
      << "\nparams " << m.parameters().size() << '\n';
  for (double p : m.parameters()) out << io::format_double(p) << '\n';
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text, const std::string& source) {
  io::LineReader reader(text);
  std::vector<std::string_view> tok;
  auto expect = [&](std::string_view key, std::size_t count) {
    if (!reader.next(tok) || tok[0] != key || (count && tok.size() != count)) {
      io::parse_error(source, reader.line(), "expected '" + std::string(key) + "'");
    }
  };
  expect("gmf-model", 2);
  if (tok[1] != "1") io::parse_error(source, reader.line(), "unsupported version");
  expect("layers", 0);
  const std::size_t n_layers = io::parse_size(tok.size() > 1 ? tok[1] : "", reader.line());
  if (tok.size() != 2 + n_layers) {
    io::parse_error(source, reader.line(), "layer count does not match sizes");
  }
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l < n_layers; ++l) {
    sizes.push_back(io::parse_size(tok[2 + l], reader.line()));
  }
  expect("activation", 2);
  const Activation act = parse_activation(std::string(tok[1]));
  expect("normalize", 2);
  const bool normalize = io::parse_int(tok[1], reader.line()) != 0;
  expect("lambda", 2);
  const double lambda = io::parse_double(tok[1], reader.line());
  expect("params", 2);
  const std::size_t n_params = io::parse_size(tok[1], reader.line());

  Checkpoint cp{EmbeddingModel(sizes, act, normalize), lambda};
  if (cp.model.parameters().size() != n_params) {
    io::parse_error(source, reader.line(), "parameter count does not match topology");
  }
  std::size_t k = 0;
  while (reader.next(tok)) {
    for (auto t : tok) {
      if (k >= n_params) io::parse_error(source, reader.line(), "too many parameters");
      const double v = io::parse_double(t, reader.line());
      if (!std::isfinite(v)) io::parse_error(source, reader.line(), "non-finite parameter");
      cp.model.parameters()[k++] = v;
    }
  }
  if (k != n_params) {
    io::parse_error(source, reader.line(),
                    "expected " + std::to_string(n_params) + " parameters, found " +
                        std::to_string(k));
  }
  return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path), path.string());
}

}  // namespace gmf
