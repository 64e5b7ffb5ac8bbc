#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "babel/backend.hpp"
#include "babel/diffusion.hpp"
#include "babel/ngram.hpp"
#include "babel/rng.hpp"

namespace babel {

/// User style exemplars y_1..y_n with their unit style embeddings.
struct GuidanceSet {
  std::vector<std::string> sample_texts;
  std::vector<Vector> sample_embeddings;
  std::string language;

  void validate() const {
    if (sample_embeddings.empty()) throw ValidationError("guidance set needs at least one sample");
    const auto dim = sample_embeddings.front().size();
    for (const auto& e : sample_embeddings) {
      if (e.size() != dim) throw ShapeError("guidance samples have inconsistent dimensions");
      if (!e.allFinite() || std::abs(e.norm() - 1.0) > 1e-6)
        throw ValidationError("guidance sample embeddings must be finite unit vectors");
    }
  }

  static GuidanceSet from_texts(std::vector<std::string> texts, std::string language, const ModelBackend& backend) {
    GuidanceSet g;
    for (const auto& t : texts) g.sample_embeddings.push_back(backend.style_embed(t));
    g.sample_texts = std::move(texts);
    g.language = std::move(language);
    g.validate();
    return g;
  }

  static GuidanceSet from_embeddings(std::vector<Vector> embeddings, std::string language = {}) {
    GuidanceSet g;
    g.sample_embeddings = std::move(embeddings);
    g.language = std::move(language);
    g.validate();
    return g;
  }

  Vector mean_embedding() const {
    Vector m = Vector::Zero(sample_embeddings.front().size());
    for (const auto& e : sample_embeddings) m += e;
    return m / static_cast<double>(sample_embeddings.size());
  }
};

/// J = (1/n) * sum_i cos(candidate, y_i).
inline double guidance_value(const Vector& candidate, const GuidanceSet& guidance) {
  guidance.validate();
  if (!candidate.allFinite()) throw ValidationError("guidance_value: candidate is not finite");
  const double norm = candidate.norm();
  if (norm == 0.0) throw ValidationError("guidance_value: candidate has zero norm");
  if (candidate.size() != guidance.sample_embeddings.front().size())
    throw ShapeError("guidance_value: candidate dimension does not match the guidance samples");
  double sum = 0.0;
  for (const auto& y : guidance.sample_embeddings) sum += candidate.dot(y) / (norm * y.norm());
  return sum / static_cast<double>(guidance.sample_embeddings.size());
}

/// Style-space image of a concrete text under the backend's style head:
/// W * mean_i E(token_i).
inline Vector style_projection(const std::string& text, const ModelBackend& backend) {
  const auto tokens = backend.tokenize(text);
  if (tokens.empty()) throw ValidationError("style_projection: empty text");
  const Vector pooled = backend.embed_tokens(tokens).values().colwise().mean().transpose();
  return backend.style_head().weights * pooled;
}

/// Guidance quantities that depend only on (style head, guidance set):
/// pulled = W^T * mean(y), gram = W^T W. Since the y_i are unit vectors,
/// J(u) = u . mean(y) / |u| with u = W v.
struct GuidanceContext {
  Vector pulled;
  Matrix gram;

  GuidanceContext(const StyleHead& head, const GuidanceSet& guidance) {
    guidance.validate();
    if (!head.ready()) throw NotReadyError("style head is not available");
    if (head.weights.rows() != guidance.sample_embeddings.front().size())
      throw ShapeError("guidance sample dimension " + std::to_string(guidance.sample_embeddings.front().size()) +
                       " does not match style head output " + std::to_string(head.weights.rows()));
    pulled = head.weights.transpose() * guidance.mean_embedding();
    gram = head.gram;
  }
};

struct GuidanceEvaluation {
  double value = 0.0;
  Matrix gradient;  // dJ / dlogits, same shape as the logits
};

inline Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto z = (logits.row(i) / temperature).eval();
    const double m = z.maxCoeff();
    const auto e = (z.array() - m).exp().eval();
    p.row(i) = (e / e.sum()).matrix();
  }
  return p;
}

/// J through the relaxation softmax(logits / tau) -> expected token embedding
/// -> mean over positions -> style head -> mean cosine, and its gradient with
/// respect to the logits.
inline GuidanceEvaluation evaluate_guidance(const Matrix& logits, const Matrix& token_table,
                                            const GuidanceContext& ctx, double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("guidance: temperature must be > 0");
  if (logits.cols() != token_table.rows())
    throw ShapeError("guidance: logits have " + std::to_string(logits.cols()) + " columns, vocabulary has " +
                     std::to_string(token_table.rows()));
  const Eigen::Index len = logits.rows();
  if (len == 0) throw ValidationError("guidance: empty logits");
  for (Eigen::Index i = 0; i < len; ++i)
    if (!logits.row(i).allFinite()) throw NumericError("guidance: non-finite logits at position " + std::to_string(i));

  const Matrix probs = softmax_rows(logits, temperature);
  const Vector pooled = (probs * token_table).colwise().mean().transpose();
  const Vector q = ctx.gram * pooled;
  const double norm_sq = pooled.dot(q);
  if (!(norm_sq > 0.0) || !std::isfinite(norm_sq))
    throw ValidationError("guidance: candidate has zero norm in style space");
  const double norm = std::sqrt(norm_sq);
  GuidanceEvaluation out;
  out.value = pooled.dot(ctx.pulled) / norm;
  const Vector g = ctx.pulled / norm - out.value * q / norm_sq;  // dJ / dpooled
  const Vector s = token_table * g;                                // e_v . g
  const double scale = 1.0 / (temperature * static_cast<double>(len));
  out.gradient.resize(len, logits.cols());
  for (Eigen::Index i = 0; i < len; ++i) {
    const double centre = probs.row(i).dot(s);
    out.gradient.row(i) = scale * (probs.row(i).array() * (s.transpose().array() - centre)).matrix();
    if (!out.gradient.row(i).allFinite())
      throw NumericError("guidance: non-finite gradient at position " + std::to_string(i));
  }
  return out;
}

/// dJ/dlogits for the backend's token table and style head.
inline Matrix guidance_gradient(const LogitsMatrix& logits, const GuidanceSet& guidance, const ModelBackend& backend,
                                double temperature) {
  const GuidanceContext ctx(backend.style_head(), guidance);
  return evaluate_guidance(logits.values(), backend.token_embedding_table(), ctx, temperature).gradient;
}

// --- nucleus sampling -------------------------------------------------------

/// Renormalised nucleus of one position: token ids in descending probability
/// (ties by ascending id) and their probabilities.
struct Nucleus {
  std::vector<int> ids;
  std::vector<double> probs;
};

inline Nucleus top_p_distribution(const Eigen::Ref<const Eigen::RowVectorXd>& logits, double temperature, double top_p) {
  if (!(temperature > 0.0)) throw ValidationError("top-p: temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top-p: p must lie in (0, 1]");
  const auto vocab = logits.size();
  if (vocab == 0) throw ValidationError("top-p: empty logits row");
  Eigen::RowVectorXd z = logits / temperature;
  const double m = z.maxCoeff();
  // Scalar exp for every entry: Eigen's packet exp can differ from the tail
  // by an ulp, which would split tied logits.
  Eigen::RowVectorXd e(vocab);
  for (Eigen::Index v = 0; v < vocab; ++v) e[v] = std::exp(z[v] - m);
  const double total = e.sum();
  std::vector<int> order(static_cast<std::size_t>(vocab));
  std::iota(order.begin(), order.end(), 0);
  const auto before = [&](int a, int b) { return e[a] > e[b] || (e[a] == e[b] && a < b); };

  // Nuclei are usually short: sort a prefix and widen it only when needed.
  Nucleus out;
  double mass = 0.0;
  std::size_t sorted = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == sorted) {
      const std::size_t width = std::min(order.size(), std::max<std::size_t>(8, 4 * sorted));
      std::partial_sort(order.begin() + static_cast<std::ptrdiff_t>(k), order.begin() + static_cast<std::ptrdiff_t>(width),
                        order.end(), before);
      sorted = width;
    }
    const int id = order[k];
    const double p = e[id] / total;
    out.ids.push_back(id);
    out.probs.push_back(p);
    mass += p;
    if (top_p < 1.0 && mass >= top_p) break;
  }
  for (auto& p : out.probs) p /= mass;
  return out;
}

inline TokenSequence top_p_sample(const LogitsMatrix& logits, double temperature, double top_p, Rng& rng) {
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Nucleus n = top_p_distribution(logits.values().row(i), temperature, top_p);
    const double u = uniform01(rng);
    double cum = 0.0;
    int chosen = n.ids.back();
    for (std::size_t k = 0; k < n.ids.size(); ++k) {
      cum += n.probs[k];
      if (u < cum) {
        chosen = n.ids[k];
        break;
      }
    }
    ids.push_back(chosen);
  }
  return TokenSequence(std::move(ids), static_cast<int>(logits.cols()));
}

// --- training ---------------------------------------------------------------

struct TrainingConfig {
  int steps = 0;
  int batch_size = 128;
  double learning_rate = 1e-5;
  int total_steps = 800;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw ConfigError("training steps must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  }
};

struct TrainingTrace {
  std::vector<double> losses;
  Vector final_parameters;
};

/// Denoiser training: each step draws a batch of texts r, pairs each with its
/// paraphrase p, a uniform step t in [0, T] and Gaussian noise, forms x_t from
/// E(r), and takes one gradient-descent step on the cross-entropy of
/// D(x_t, t, p) against r's tokens.
inline TrainingTrace train_denoiser(const std::vector<std::string>& corpus, ModelBackend& backend,
                                    const TrainingConfig& config) {
  config.validate();
  if (corpus.empty()) throw ValidationError("train_denoiser: empty corpus");
  TrainableDenoiser* denoiser = backend.trainable_denoiser();
  if (!denoiser) throw UnsupportedError("backend does not support in-process denoiser training");

  struct Prepared {
    TokenSequence target;
    TokenSequence condition;
    EmbeddingMatrix embedding;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto target = backend.tokenize(corpus[i]);
    if (target.empty()) throw ValidationError("train_denoiser: corpus text " + std::to_string(i) + " is empty");
    auto condition = backend.tokenize(backend.paraphrase(corpus[i], derive_seed(config.seed, i)));
    auto embedding = backend.embed_tokens(target);
    prepared.push_back({std::move(target), std::move(condition), std::move(embedding)});
  }

  DiffusionConfig schedule;
  schedule.total_steps = config.total_steps;
  Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::uniform_int_distribution<int> pick_t(0, config.total_steps);

  TrainingTrace trace;
  Vector params = denoiser->parameters();
  Vector grad;
  std::vector<DenoiserExample> batch;
  for (int step = 0; step < config.steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& ex = prepared[pick(rng)];
      const int t = pick_t(rng);
      batch.push_back({forward_diffuse(ex.embedding, t, schedule, rng), {t, config.total_steps}, ex.condition, ex.target});
    }
    const double loss = denoiser->loss_and_gradient(batch, grad);
    if (!std::isfinite(loss) || !grad.allFinite())
      throw NumericError("train_denoiser: non-finite loss at step " + std::to_string(step));
    trace.losses.push_back(loss);
    params -= config.learning_rate * grad;
    denoiser->set_parameters(params);
  }
  if (config.steps > 0) denoiser->mark_trained(config.total_steps);
  trace.final_parameters = denoiser->parameters();
  return trace;
}

// --- inference --------------------------------------------------------------

namespace detail {

template <class F>
auto at_step(int t, F&& f) -> decltype(f()) {
  const std::string where = " (diffusion step " + std::to_string(t) + ")";
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(e.what() + where);
  } catch (const DomainError& e) {
    throw DomainError(e.what() + where);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what() + where);
  } catch (const ValidationError& e) {
    throw ValidationError(e.what() + where);
  } catch (const NotReadyError& e) {
    throw NotReadyError(e.what() + where);
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(e.what() + where);
  } catch (const NumericError& e) {
    throw NumericError(e.what() + where);
  } catch (const RemoteError& e) {
    throw RemoteError(e.status(), e.code(), e.what() + where);
  } catch (const Error& e) {
    throw Error(e.what() + where);
  }
}

/// Reverse process conditioned on `translation`. When `guidance` is given the
/// logits are shifted by +lambda * dJ/dlogits before sampling.
inline TokenSequence run_sampler(const std::string& translation, const GuidanceSet* guidance,
                                 const DiffusionConfig& config, const ModelBackend& backend, std::uint64_t seed) {
  config.validate();
  const TokenSequence condition = backend.tokenize(translation);
  if (condition.empty()) throw ValidationError("apply_style: translation is empty");
  const auto len = static_cast<Eigen::Index>(condition.size());
  const int dim = backend.descriptor().embedding_dim;
  const int total = config.total_steps;

  std::optional<GuidanceContext> ctx;
  if (guidance) ctx.emplace(backend.style_head(), *guidance);

  Rng rng(seed);
  EmbeddingMatrix x = gaussian_noise(len, dim, rng);

  auto step_tokens = [&](int t) {
    const LogitsMatrix logits = backend.denoise(x, {t, total}, condition);
    if (!ctx) return top_p_sample(logits, config.temperature, config.top_p, rng);
    const auto g = evaluate_guidance(logits.values(), backend.token_embedding_table(), *ctx, config.temperature);
    const LogitsMatrix steered(logits.values() + config.guidance_strength * g.gradient);
    return top_p_sample(steered, config.temperature, config.top_p, rng);
  };

  for (int t = total; t >= 1; --t) {
    at_step(t, [&] {
      const TokenSequence sampled = step_tokens(t);
      x = forward_diffuse(backend.embed_tokens(sampled), t - 1, config, rng);
      return 0;
    });
  }
  return at_step(0, [&] { return step_tokens(0); });
}

}  // namespace detail

/// Guided generation: x_T ~ N(0, I); for t = T..1 denoise, steer, sample,
/// renoise to t-1; then a final pass at t = 0. Output length equals the
/// translation's token length.
inline std::string apply_style(const std::string& translation, const GuidanceSet& guidance,
                               const DiffusionConfig& config, const ModelBackend& backend, std::uint64_t seed) {
  guidance.validate();
  return backend.detokenize(detail::run_sampler(translation, &guidance, config, backend, seed));
}

/// The same reverse process without the guidance term.
inline std::string sample_unguided(const std::string& translation, const DiffusionConfig& config,
                                   const ModelBackend& backend, std::uint64_t seed) {
  return backend.detokenize(detail::run_sampler(translation, nullptr, config, backend, seed));
}

}  // namespace babel
