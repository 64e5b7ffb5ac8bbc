#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "babel/error.hpp"
#include "babel/rng.hpp"

namespace babel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Knobs of the embedding-space sampler: step count T, temperature tau,
/// guidance strength lambda and nucleus mass p.
struct DiffusionConfig {
  int total_steps = 800;
  double temperature = 0.3;
  double guidance_strength = 1000.0;
  double top_p = 0.9;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1, got " + std::to_string(total_steps));
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw ConfigError("temperature must be > 0, got " + std::to_string(temperature));
    if (!(guidance_strength >= 0.0) || !std::isfinite(guidance_strength))
      throw ConfigError("guidance_strength must be >= 0, got " + std::to_string(guidance_strength));
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1], got " + std::to_string(top_p));
  }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Row-per-token embedding matrix. Entries are finite and the shape is fixed
/// at construction.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  explicit EmbeddingMatrix(Matrix values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw ValidationError("embedding matrix contains non-finite entries");
  }

  static EmbeddingMatrix zeros(Eigen::Index rows, Eigen::Index cols) {
    return EmbeddingMatrix(Matrix::Zero(rows, cols));
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  double operator()(Eigen::Index r, Eigen::Index c) const { return values_(r, c); }
  const Matrix& values() const { return values_; }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

/// Signal coefficient of the noise schedule, sqrt((T - t) / T). Evaluated in
/// double so that beta(0) == 1 and beta(T) == 0 exactly.
inline double beta(int t, int total_steps) {
  if (total_steps < 1) throw DomainError("beta: total steps must be >= 1");
  if (t < 0 || t > total_steps)
    throw DomainError("beta: step " + std::to_string(t) + " outside [0, " + std::to_string(total_steps) + "]");
  return std::sqrt(static_cast<double>(total_steps - t) / static_cast<double>(total_steps));
}

/// x_t = sqrt(beta_t) * embedding + sqrt(1 - beta_t) * noise, elementwise.
inline EmbeddingMatrix forward_diffuse(const EmbeddingMatrix& embedding, int t, const DiffusionConfig& config,
                                       const EmbeddingMatrix& noise) {
  if (embedding.rows() != noise.rows() || embedding.cols() != noise.cols()) {
    throw ShapeError("forward_diffuse: embedding is " + std::to_string(embedding.rows()) + "x" +
                     std::to_string(embedding.cols()) + " but noise is " + std::to_string(noise.rows()) + "x" +
                     std::to_string(noise.cols()));
  }
  const double b = beta(t, config.total_steps);
  const double signal = std::sqrt(b);
  const double spread = std::sqrt(1.0 - b);
  return EmbeddingMatrix(signal * embedding.values() + spread * noise.values());
}

inline EmbeddingMatrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  // Row-major draw order so the stream consumption is independent of Eigen's storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = standard_normal(rng);
  return EmbeddingMatrix(std::move(m));
}

/// Convenience wrapper drawing the noise from `rng`.
inline EmbeddingMatrix forward_diffuse(const EmbeddingMatrix& embedding, int t, const DiffusionConfig& config,
                                       Rng& rng) {
  return forward_diffuse(embedding, t, config, gaussian_noise(embedding.rows(), embedding.cols(), rng));
}

}  // namespace babel
