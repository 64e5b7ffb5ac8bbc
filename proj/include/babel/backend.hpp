#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "babel/diffusion.hpp"
#include "babel/error.hpp"

namespace babel {

struct TokenSequence {
  std::vector<int> ids;
  int vocab_size = 0;

  TokenSequence() = default;
  TokenSequence(std::vector<int> token_ids, int vocab) : ids(std::move(token_ids)), vocab_size(vocab) { validate(); }

  void validate() const {
    if (vocab_size <= 0) throw ValidationError("token sequence has non-positive vocab_size");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= vocab_size)
        throw ValidationError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                              " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Denoiser output before softmax: one row per position, one column per token.
class LogitsMatrix {
 public:
  LogitsMatrix() = default;
  explicit LogitsMatrix(Matrix values) : values_(std::move(values)) {
    for (Eigen::Index r = 0; r < values_.rows(); ++r) {
      if (!values_.row(r).allFinite())
        throw NumericError("logits contain non-finite entries at position " + std::to_string(r));
    }
  }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  friend bool operator==(const LogitsMatrix& a, const LogitsMatrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

/// Probability per style label; label order is fixed by the detector.
class StyleDistribution {
 public:
  StyleDistribution() = default;
  StyleDistribution(std::vector<std::string> labels, std::vector<double> probs)
      : labels_(std::move(labels)), probs_(std::move(probs)) {
    if (labels_.size() != probs_.size() || labels_.empty())
      throw ValidationError("style distribution needs one probability per label");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("style probability must be finite and >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("style probabilities sum to " + std::to_string(sum));
  }

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<double>& probabilities() const { return probs_; }

  std::optional<double> probability(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return probs_[i];
    return std::nullopt;
  }

  /// Highest-probability label; ties go to the label listed first in `order`
  /// (or in the distribution's own order when `order` is empty).
  std::string argmax(std::span<const std::string> order = {}) const {
    double best = -1.0;
    for (double p : probs_) best = std::max(best, p);
    if (!order.empty()) {
      for (const auto& label : order) {
        auto p = probability(label);
        if (p && *p == best) return label;
      }
    }
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (probs_[i] == best) return labels_[i];
    return labels_.front();
  }

 private:
  std::vector<std::string> labels_;
  std::vector<double> probs_;
};

enum class BackendKind { reference, remote };

inline constexpr std::string_view kCapabilities[] = {"tokenize", "embed",    "style_embed", "sentence_embed",
                                                     "classify", "paraphrase", "denoise"};

struct BackendDescriptor {
  BackendKind kind = BackendKind::reference;
  int embedding_dim = 0;
  int style_dim = 0;
  int vocab_size = 0;
  std::vector<std::string> style_labels;
  std::vector<std::string> languages;
  std::vector<std::string> capabilities;
  int max_sequence_len = 0;
  std::optional<std::string> endpoint;

  bool declares_language(std::string_view lang) const {
    return std::find(languages.begin(), languages.end(), lang) != languages.end();
  }
  bool has_capability(std::string_view cap) const {
    return std::find(capabilities.begin(), capabilities.end(), cap) != capabilities.end();
  }
};

struct DiffusionStep {
  int t = 0;
  int total = 1;
};

/// Linear map from a mean-pooled token embedding (D) into style space (S),
/// the differentiable stand-in for E_s used by guidance. `gram` = W^T W.
struct StyleHead {
  Matrix weights;  // S x D
  Matrix gram;     // D x D

  bool ready() const { return weights.size() > 0; }

  static StyleHead from_weights(Matrix w) {
    StyleHead head;
    head.gram = w.transpose() * w;
    head.weights = std::move(w);
    return head;
  }

  /// Ridge least squares from pooled embeddings (n x D) to style embeddings
  /// (n x S).
  static StyleHead fit(const Matrix& pooled, const Matrix& targets, double ridge) {
    if (pooled.rows() != targets.rows() || pooled.rows() == 0)
      throw ShapeError("style head fit: " + std::to_string(pooled.rows()) + " inputs for " +
                       std::to_string(targets.rows()) + " targets");
    Matrix lhs = pooled.transpose() * pooled;
    lhs.diagonal().array() += ridge;
    const Matrix wt = lhs.ldlt().solve(pooled.transpose() * targets);
    return from_weights(wt.transpose());
  }
};

/// One training example for the denoiser: noisy embeddings of r, the step,
/// the conditioning tokens (paraphrase) and the target tokens (r itself).
struct DenoiserExample {
  EmbeddingMatrix x_t;
  DiffusionStep step;
  TokenSequence condition;
  TokenSequence target;
};

/// Parameter access for denoisers that can be trained in-process.
class TrainableDenoiser {
 public:
  virtual ~TrainableDenoiser() = default;
  virtual Vector parameters() const = 0;
  virtual void set_parameters(const Vector& params) = 0;
  /// Mean token-level cross-entropy over all target positions of the batch.
  virtual double loss(std::span<const DenoiserExample> batch) const = 0;
  /// Same loss; writes d loss / d parameters into `gradient`.
  virtual double loss_and_gradient(std::span<const DenoiserExample> batch, Vector& gradient) const = 0;
  virtual void mark_trained(int total_steps) = 0;
};

/// Every learned component behind one interface: tokenizer, token embedder
/// E, style embedder E_s, sentence embedder, per-language style classifiers,
/// paraphraser P and denoiser D.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  virtual TokenSequence tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(const TokenSequence& tokens) const = 0;
  virtual EmbeddingMatrix embed_tokens(const TokenSequence& tokens) const = 0;
  /// Unit-norm style embedding of a non-empty text.
  virtual Vector style_embed(std::string_view text) const = 0;
  /// Unit-norm (or zero) content embedding used for semantic similarity.
  virtual Vector sentence_embed(std::string_view text) const = 0;
  virtual StyleDistribution classify_style(std::string_view text, std::string_view language) const = 0;
  virtual std::string paraphrase(std::string_view text, std::uint64_t seed) const = 0;
  virtual LogitsMatrix denoise(const EmbeddingMatrix& x_t, DiffusionStep step,
                               const TokenSequence& condition) const = 0;

  /// Full token embedding table, vocab_size x embedding_dim.
  virtual const Matrix& token_embedding_table() const = 0;
  virtual const StyleHead& style_head() const = 0;

  virtual TrainableDenoiser* trainable_denoiser() { return nullptr; }
};

}  // namespace babel
