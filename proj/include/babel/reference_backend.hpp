#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "babel/backend.hpp"
#include "babel/ngram.hpp"
#include "babel/rng.hpp"
#include "babel/text.hpp"

namespace babel {

inline std::string default_alphabet() {
  return " abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,;:!?'\"-()"
         "àâäçéèêëîïôöùûüÀÂÄÇÉÈÊËÎÏÔÖÙÛÜ";
}

struct ReferenceOptions {
  std::uint64_t seed = 0;
  int embedding_dim = 32;
  int style_dim = 2048;
  std::string alphabet = default_alphabet();
  std::vector<std::string> style_labels{"formal", "informal"};
  std::vector<std::string> languages{"en", "fr"};
  int max_sequence_len = 512;
};

/// Word-level rewrite rules of the reference paraphraser. The paraphrase of a
/// text is: lowercase, delete every marker character, replace whole words
/// through `synonyms` (an empty replacement deletes the word), and rejoin with
/// single spaces.
struct ParaphraseRules {
  std::u32string marker_chars = U"!.;";
  std::map<std::string, std::string> synonyms{
      {"shall", "will"}, {"hereby", ""}, {"thus", "so"}, {"herein", "here"}, {"gonna", "going to"}};
};

inline std::string apply_paraphrase_rules(std::string_view input, const ParaphraseRules& rules) {
  std::u32string cps;
  for (char32_t c : text::decode_utf8(input)) {
    if (rules.marker_chars.find(c) != std::u32string::npos) continue;
    cps.push_back(text::to_lower(c));
  }
  std::vector<std::string> out;
  for (auto& word : text::split_words(text::encode_utf8(cps))) {
    auto it = rules.synonyms.find(word);
    if (it == rules.synonyms.end()) {
      out.push_back(std::move(word));
    } else if (!it->second.empty()) {
      out.push_back(it->second);
    }
  }
  return text::join_words(out);
}

/// Value of component k of token `id`'s embedding:
///   u = (mix64(derive_seed(seed, 0xE1) ^ mix64(id * dim + k)) >> 11) * 2^-53
///   value = (2u - 1) * sqrt(3 / dim)
/// i.e. uniform entries with variance 1/dim, so rows have unit expected norm.
inline double token_embedding_value(std::uint64_t seed, int id, int k, int dim) {
  const std::uint64_t key = static_cast<std::uint64_t>(id) * static_cast<std::uint64_t>(dim) + static_cast<std::uint64_t>(k);
  const double u = static_cast<double>(mix64(derive_seed(seed, 0xE1) ^ mix64(key)) >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * std::sqrt(3.0 / dim);
}

struct ClassifierTraining {
  int epochs = 300;
  double learning_rate = 20.0;
  double l2 = 1e-4;
};

/// Multinomial logistic head over unit-norm hashed n-gram features.
struct LogisticHead {
  Matrix weights;  // labels x style_dim
  Vector bias;
};

/// Offline stand-in for all learned models. Character-level tokenizer,
/// seeded-hash token embeddings, hashed n-gram style and sentence embedders,
/// one logistic style classifier per language, a rule-table paraphraser and
/// a per-position affine denoiser trained by gradient descent.
class ReferenceBackend final : public ModelBackend, public TrainableDenoiser {
 public:
  static constexpr int kTimeFeatures = 8;
  static constexpr int kUnknownId = 0;

  explicit ReferenceBackend(ReferenceOptions options, ParaphraseRules rules = {})
      : options_(std::move(options)), rules_(std::move(rules)) {
    if (options_.embedding_dim < 2) throw ValidationError("embedding_dim must be >= 2");
    if (options_.style_dim < 2) throw ValidationError("style_dim must be >= 2");
    if (options_.style_labels.size() < 2) throw ValidationError("reference backend needs >= 2 style labels");
    if (options_.languages.empty()) throw ValidationError("reference backend needs >= 1 language");
    const auto alphabet = text::decode_utf8(options_.alphabet);
    if (alphabet.empty()) throw ValidationError("vocabulary alphabet is empty");
    chars_.push_back(U'\uFFFD');
    for (char32_t c : alphabet) {
      if (char_to_id_.count(c)) throw ValidationError("vocabulary alphabet repeats a character");
      char_to_id_[c] = static_cast<int>(chars_.size());
      chars_.push_back(c);
    }
    const int vocab = static_cast<int>(chars_.size());
    const int dim = options_.embedding_dim;
    table_.resize(vocab, dim);
    for (int v = 0; v < vocab; ++v)
      for (int k = 0; k < dim; ++k) table_(v, k) = token_embedding_value(options_.seed, v, k, dim);

    descriptor_.kind = BackendKind::reference;
    descriptor_.embedding_dim = dim;
    descriptor_.style_dim = options_.style_dim;
    descriptor_.vocab_size = vocab;
    descriptor_.style_labels = options_.style_labels;
    descriptor_.languages = options_.languages;
    descriptor_.max_sequence_len = options_.max_sequence_len;
    descriptor_.capabilities.assign(std::begin(kCapabilities), std::end(kCapabilities));

    params_ = Vector::Zero(static_cast<Eigen::Index>(vocab) * (feature_dim() + 1));
    generation_ = next_generation();
  }

  const ReferenceOptions& options() const { return options_; }
  const ParaphraseRules& paraphrase_rules() const { return rules_; }
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  int feature_dim() const { return 5 * options_.embedding_dim + kTimeFeatures; }

  // --- tokenizer -----------------------------------------------------------

  TokenSequence tokenize(std::string_view s) const override {
    std::vector<int> ids;
    for (char32_t c : text::decode_utf8(s)) {
      auto it = char_to_id_.find(c);
      ids.push_back(it == char_to_id_.end() ? kUnknownId : it->second);
    }
    return TokenSequence(std::move(ids), descriptor_.vocab_size);
  }

  std::string detokenize(const TokenSequence& tokens) const override {
    std::u32string out;
    for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
      const int id = tokens.ids[i];
      if (id < 0 || id >= descriptor_.vocab_size)
        throw ValidationError("detokenize: unknown token id " + std::to_string(id) + " at position " +
                              std::to_string(i));
      out.push_back(chars_[id]);
    }
    return text::encode_utf8(out);
  }

  // --- embeddings ----------------------------------------------------------

  const Matrix& token_embedding_table() const override { return table_; }

  EmbeddingMatrix embed_tokens(const TokenSequence& tokens) const override {
    check_tokens(tokens);
    Matrix m(static_cast<Eigen::Index>(tokens.size()), options_.embedding_dim);
    for (std::size_t i = 0; i < tokens.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = table_.row(tokens.ids[i]);
    return EmbeddingMatrix(std::move(m));
  }

  /// Case- and punctuation-sensitive character 1..3-gram hash, L2-normalised.
  Vector style_embed(std::string_view s) const override {
    if (s.empty()) throw ValidationError("style_embed: empty text");
    return l2_normalized(raw_style_features(s));
  }

  /// Character 1..3-grams over the content-normalised text (lowercase,
  /// letters and digits only), L2-normalised. Falls back to the raw text
  /// when normalisation leaves nothing.
  Vector sentence_embed(std::string_view s) const override {
    if (s.empty()) throw ValidationError("sentence_embed: empty text");
    auto content = text::content_normalize(s);
    if (content.empty()) content = text::decode_utf8(s);
    return l2_normalized(hashed_ngrams(content, 1, 3, options_.style_dim, derive_seed(options_.seed, 0x53)));
  }

  // --- style classifiers ---------------------------------------------------

  bool classifier_ready(std::string_view lang) const { return classifiers_.count(std::string(lang)) > 0; }

  StyleDistribution classify_style(std::string_view s, std::string_view lang) const override {
    if (!descriptor_.declares_language(lang))
      throw UnsupportedError("language '" + std::string(lang) + "' is not declared by the reference backend");
    auto it = classifiers_.find(std::string(lang));
    if (it == classifiers_.end())
      throw NotReadyError("style classifier for '" + std::string(lang) + "' has not been trained");
    const Vector x = l2_normalized(raw_style_features(s));
    const Vector z = it->second.weights * x + it->second.bias;
    const Vector p = softmax(z);
    return StyleDistribution(options_.style_labels, std::vector<double>(p.data(), p.data() + p.size()));
  }

  /// Full-batch gradient descent on softmax cross-entropy. Returns the final
  /// training loss.
  double train_classifier(const std::string& lang, const std::vector<std::string>& texts,
                          const std::vector<std::string>& labels, const ClassifierTraining& cfg = {}) {
    if (!descriptor_.declares_language(lang)) throw UnsupportedError("language '" + lang + "' is not declared");
    if (texts.size() != labels.size() || texts.empty())
      throw ValidationError("train_classifier: need equally many texts and labels (non-empty)");
    const auto n = static_cast<Eigen::Index>(texts.size());
    const auto k = static_cast<Eigen::Index>(options_.style_labels.size());
    Matrix x(n, options_.style_dim);
    Matrix y = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      x.row(i) = l2_normalized(raw_style_features(texts[i])).transpose();
      y(i, label_index(labels[i])) = 1.0;
    }
    LogisticHead head{Matrix::Zero(k, options_.style_dim), Vector::Zero(k)};
    double loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Matrix z = x * head.weights.transpose();
      z.rowwise() += head.bias.transpose();
      Matrix p(n, k);
      loss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        p.row(i) = softmax(z.row(i).transpose()).transpose();
        for (Eigen::Index c = 0; c < k; ++c)
          if (y(i, c) > 0) loss -= std::log(std::max(p(i, c), 1e-300));
      }
      loss /= static_cast<double>(n);
      const Matrix g = (p - y) / static_cast<double>(n);
      head.weights -= cfg.learning_rate * (g.transpose() * x + cfg.l2 * head.weights);
      head.bias -= cfg.learning_rate * g.colwise().sum().transpose();
    }
    classifiers_[lang] = std::move(head);
    return loss;
  }

  // --- paraphraser ---------------------------------------------------------

  std::string paraphrase(std::string_view s, std::uint64_t /*seed*/) const override {
    if (s.empty()) throw ValidationError("paraphrase: empty text");
    return apply_paraphrase_rules(s, rules_);
  }

  // --- style head ----------------------------------------------------------

  const StyleHead& style_head() const override {
    if (!head_.ready()) throw NotReadyError("style head has not been fitted");
    return head_;
  }

  /// Ridge least squares from mean-pooled token embeddings to style_embed.
  void fit_style_head(const std::vector<std::string>& texts, double ridge = 1e-3) {
    if (texts.empty()) throw ValidationError("fit_style_head: no texts");
    const auto n = static_cast<Eigen::Index>(texts.size());
    Matrix pooled(n, options_.embedding_dim);
    Matrix targets(n, options_.style_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto tokens = tokenize(texts[i]);
      if (tokens.empty()) throw ValidationError("fit_style_head: empty text");
      pooled.row(i) = embed_tokens(tokens).values().colwise().mean();
      targets.row(i) = style_embed(texts[i]).transpose();
    }
    head_ = StyleHead::fit(pooled, targets, ridge);
  }

  void set_style_head(Matrix weights) { head_ = StyleHead::from_weights(std::move(weights)); }

  // --- denoiser ------------------------------------------------------------

  bool denoiser_ready() const { return denoiser_ready_; }
  int denoiser_total_steps() const { return denoiser_total_steps_; }

  LogitsMatrix denoise(const EmbeddingMatrix& x_t, DiffusionStep step, const TokenSequence& condition) const override {
    if (!denoiser_ready_) throw NotReadyError("reference denoiser has not been trained");
    check_tokens(condition);
    if (x_t.cols() != options_.embedding_dim || x_t.rows() != static_cast<Eigen::Index>(condition.size())) {
      throw ShapeError("denoise: x_t is " + std::to_string(x_t.rows()) + "x" + std::to_string(x_t.cols()) +
                       ", expected " + std::to_string(condition.size()) + "x" + std::to_string(options_.embedding_dim));
    }
    check_step(step);
    return LogitsMatrix(forward(x_t, step, condition));
  }

  TrainableDenoiser* trainable_denoiser() override { return this; }

  Vector parameters() const override { return params_; }

  void set_parameters(const Vector& params) override {
    if (params.size() != params_.size()) throw ShapeError("set_parameters: wrong parameter count");
    if (!params.allFinite()) throw NumericError("set_parameters: non-finite parameters");
    params_ = params;
    generation_ = next_generation();
  }

  void mark_trained(int total_steps) override {
    denoiser_ready_ = true;
    denoiser_total_steps_ = total_steps;
  }

  double loss(std::span<const DenoiserExample> batch) const override {
    return loss_impl(batch, nullptr);
  }

  double loss_and_gradient(std::span<const DenoiserExample> batch, Vector& gradient) const override {
    gradient = Vector::Zero(params_.size());
    return loss_impl(batch, &gradient);
  }

  /// Per-position feature rows:
  /// [x_t | beta_t * x_t | time features | condition_i | condition_{i-1} | mean(condition)].
  /// Condition rows outside the condition's length are zero.
  Matrix features(const EmbeddingMatrix& x_t, DiffusionStep step, const TokenSequence& condition) const {
    const int d = options_.embedding_dim;
    const Eigen::Index len = x_t.rows();
    Matrix f = Matrix::Zero(len, feature_dim());
    const double b = beta(step.t, step.total);
    const Vector time = time_features(step);
    const auto cond_len = static_cast<Eigen::Index>(condition.size());
    Vector mean_cond = Vector::Zero(d);
    for (Eigen::Index j = 0; j < cond_len; ++j) mean_cond += table_.row(condition.ids[j]).transpose();
    if (cond_len > 0) mean_cond /= static_cast<double>(cond_len);
    for (Eigen::Index i = 0; i < len; ++i) {
      f.row(i).segment(0, d) = x_t.values().row(i);
      f.row(i).segment(d, d) = b * x_t.values().row(i);
      f.row(i).segment(2 * d, kTimeFeatures) = time.transpose();
      const int off = 2 * d + kTimeFeatures;
      if (i < cond_len) f.row(i).segment(off, d) = table_.row(condition.ids[i]);
      if (i >= 1 && i - 1 < cond_len) f.row(i).segment(off + d, d) = table_.row(condition.ids[i - 1]);
      f.row(i).segment(off + 2 * d, d) = mean_cond.transpose();
    }
    return f;
  }

  // --- persistence ---------------------------------------------------------

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "babel-reference-backend/1";
    j["seed"] = options_.seed;
    j["embedding_dim"] = options_.embedding_dim;
    j["style_dim"] = options_.style_dim;
    j["alphabet"] = options_.alphabet;
    j["style_labels"] = options_.style_labels;
    j["languages"] = options_.languages;
    j["max_sequence_len"] = options_.max_sequence_len;
    nlohmann::json classifiers = nlohmann::json::object();
    for (const auto& [lang, head] : classifiers_) {
      classifiers[lang] = {{"weights", matrix_to_json(head.weights)},
                           {"bias", std::vector<double>(head.bias.data(), head.bias.data() + head.bias.size())}};
    }
    j["classifiers"] = classifiers;
    j["denoiser"] = {{"ready", denoiser_ready_},
                     {"total_steps", denoiser_total_steps_},
                     {"parameters", std::vector<double>(params_.data(), params_.data() + params_.size())}};
    if (head_.ready()) j["style_head"] = matrix_to_json(head_.weights);
    return j;
  }

  static ReferenceBackend from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "babel-reference-backend/1")
      throw ValidationError("not a reference backend model file");
    ReferenceOptions o;
    o.seed = j.at("seed").get<std::uint64_t>();
    o.embedding_dim = j.at("embedding_dim").get<int>();
    o.style_dim = j.at("style_dim").get<int>();
    o.alphabet = j.at("alphabet").get<std::string>();
    o.style_labels = j.at("style_labels").get<std::vector<std::string>>();
    o.languages = j.at("languages").get<std::vector<std::string>>();
    o.max_sequence_len = j.at("max_sequence_len").get<int>();
    ReferenceBackend backend(std::move(o));
    for (const auto& [lang, head] : j.at("classifiers").items()) {
      auto bias = head.at("bias").get<std::vector<double>>();
      backend.classifiers_[lang] = LogisticHead{matrix_from_json(head.at("weights")),
                                                Eigen::Map<Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()))};
    }
    const auto& den = j.at("denoiser");
    auto params = den.at("parameters").get<std::vector<double>>();
    backend.set_parameters(Eigen::Map<Vector>(params.data(), static_cast<Eigen::Index>(params.size())));
    backend.denoiser_ready_ = den.at("ready").get<bool>();
    backend.denoiser_total_steps_ = den.at("total_steps").get<int>();
    if (j.contains("style_head")) backend.set_style_head(matrix_from_json(j.at("style_head")));
    return backend;
  }

 private:
  static Vector softmax(const Vector& z) {
    const double m = z.maxCoeff();
    Vector e = (z.array() - m).exp().matrix();
    return e / e.sum();
  }

  static nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
      rows.push_back(std::move(row));
    }
    return rows;
  }

  static Matrix matrix_from_json(const nlohmann::json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index k = 0; k < c; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    return m;
  }

  Vector raw_style_features(std::string_view s) const {
    return hashed_ngrams(text::decode_utf8(s), 1, 3, options_.style_dim, derive_seed(options_.seed, 0x57));
  }

  Eigen::Index label_index(const std::string& label) const {
    for (std::size_t i = 0; i < options_.style_labels.size(); ++i)
      if (options_.style_labels[i] == label) return static_cast<Eigen::Index>(i);
    throw ValidationError("unknown style label '" + label + "'");
  }

  void check_tokens(const TokenSequence& tokens) const {
    if (tokens.vocab_size != descriptor_.vocab_size)
      throw ValidationError("token sequence vocab_size " + std::to_string(tokens.vocab_size) +
                            " does not match backend vocab_size " + std::to_string(descriptor_.vocab_size));
    tokens.validate();
  }

  static void check_step(DiffusionStep step) {
    if (step.total < 1 || step.t < 0 || step.t > step.total)
      throw DomainError("diffusion step " + std::to_string(step.t) + " outside [0, " + std::to_string(step.total) + "]");
  }

  static Vector time_features(DiffusionStep step) {
    const double u = static_cast<double>(step.t) / static_cast<double>(step.total);
    Vector f(kTimeFeatures);
    for (int j = 0; j < kTimeFeatures / 2; ++j) {
      const double w = std::numbers::pi * std::ldexp(1.0, j) * u;
      f[2 * j] = std::sin(w);
      f[2 * j + 1] = std::cos(w);
    }
    return f;
  }

  Eigen::Map<const Matrix> weight_view(const Vector& p) const {
    return {p.data(), descriptor_.vocab_size, feature_dim()};
  }
  Eigen::Map<const Vector> bias_view(const Vector& p) const {
    return {p.data() + static_cast<Eigen::Index>(descriptor_.vocab_size) * feature_dim(), descriptor_.vocab_size};
  }

  /// features(x_t, step, condition) * W^T + b, applied block by block: the
  /// time and mean-condition columns are the same in every row.
  Matrix forward(const EmbeddingMatrix& x_t, DiffusionStep step, const TokenSequence& condition) const {
    const int d = options_.embedding_dim;
    const int off = 2 * d + kTimeFeatures;
    const Eigen::Index len = x_t.rows();
    const auto cond_len = static_cast<Eigen::Index>(condition.size());
    const auto w = weight_view(params_);
    const double b = beta(step.t, step.total);

    Vector mean_cond = Vector::Zero(d);
    for (Eigen::Index j = 0; j < cond_len; ++j) mean_cond += table_.row(condition.ids[j]).transpose();
    if (cond_len > 0) mean_cond /= static_cast<double>(cond_len);
    Vector shared = bias_view(params_);
    shared.noalias() += w.middleCols(2 * d, kTimeFeatures) * time_features(step);
    shared.noalias() += w.middleCols(off + 2 * d, d) * mean_cond;

    const Matrix wx = (w.leftCols(d) + b * w.middleCols(d, d)).transpose();
    Matrix logits = x_t.values() * wx;
    logits += condition_part(condition, len);
    logits.rowwise() += shared.transpose();
    return logits;
  }

  /// [condition_i | condition_{i-1}] rows against their weight blocks. A
  /// sampler run repeats the same condition at every step, so the last result
  /// is kept per thread.
  const Matrix& condition_part(const TokenSequence& condition, Eigen::Index len) const {
    struct Memo {
      std::uint64_t generation = 0;
      std::vector<int> ids;
      Matrix value;
    };
    thread_local Memo memo;
    if (memo.generation == generation_ && memo.ids == condition.ids && memo.value.rows() == len) return memo.value;
    const int d = options_.embedding_dim;
    const int off = 2 * d + kTimeFeatures;
    const auto cond_len = static_cast<Eigen::Index>(condition.size());
    Matrix f = Matrix::Zero(len, 2 * d);
    for (Eigen::Index i = 0; i < len; ++i) {
      if (i < cond_len) f.row(i).head(d) = table_.row(condition.ids[i]);
      if (i >= 1 && i - 1 < cond_len) f.row(i).tail(d) = table_.row(condition.ids[i - 1]);
    }
    memo.value = f * weight_view(params_).middleCols(off, 2 * d).transpose();
    memo.ids = condition.ids;
    memo.generation = generation_;
    return memo.value;
  }

  static std::uint64_t next_generation() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  double loss_impl(std::span<const DenoiserExample> batch, Vector* gradient) const {
    if (batch.empty()) throw ValidationError("denoiser loss: empty batch");
    const int vocab = descriptor_.vocab_size;
    const int fdim = feature_dim();
    double total = 0.0;
    std::size_t positions = 0;
    Matrix grad_w;
    Vector grad_b;
    if (gradient) {
      grad_w = Matrix::Zero(vocab, fdim);
      grad_b = Vector::Zero(vocab);
    }
    for (const auto& ex : batch) {
      check_tokens(ex.condition);
      check_tokens(ex.target);
      check_step(ex.step);
      if (ex.x_t.rows() != static_cast<Eigen::Index>(ex.target.size()) || ex.x_t.cols() != options_.embedding_dim)
        throw ShapeError("denoiser example: x_t rows must equal target length");
      const Matrix f = features(ex.x_t, ex.step, ex.condition);
      Matrix logits = f * weight_view(params_).transpose();
      logits.rowwise() += bias_view(params_).transpose();
      Matrix residual(logits.rows(), vocab);
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const Vector p = softmax(Vector(logits.row(i).transpose()));
        const int target = ex.target.ids[static_cast<std::size_t>(i)];
        total -= std::log(std::max(p[target], 1e-300));
        residual.row(i) = p.transpose();
        residual(i, target) -= 1.0;
      }
      positions += static_cast<std::size_t>(logits.rows());
      if (gradient) {
        grad_w.noalias() += residual.transpose() * f;
        grad_b += residual.colwise().sum().transpose();
      }
    }
    if (positions == 0) throw ValidationError("denoiser loss: batch has no target positions");
    const double scale = 1.0 / static_cast<double>(positions);
    if (gradient) {
      gradient->head(static_cast<Eigen::Index>(vocab) * fdim) =
          Eigen::Map<const Vector>(grad_w.data(), grad_w.size()) * scale;
      gradient->tail(vocab) = grad_b * scale;
    }
    return total * scale;
  }

  ReferenceOptions options_;
  ParaphraseRules rules_;
  BackendDescriptor descriptor_;
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, int> char_to_id_;
  Matrix table_;
  std::map<std::string, LogisticHead> classifiers_;
  StyleHead head_;
  Vector params_;
  bool denoiser_ready_ = false;
  int denoiser_total_steps_ = 0;
  std::uint64_t generation_ = 0;
};

/// Builds a reference backend with the default alphabet replaced by `alphabet`
/// when non-empty.
inline ReferenceBackend make_reference_backend(std::uint64_t seed, int embedding_dim,
                                               std::vector<std::string> style_labels,
                                               std::string alphabet = default_alphabet(),
                                               std::vector<std::string> languages = {"en", "fr"}) {
  ReferenceOptions o;
  o.seed = seed;
  o.embedding_dim = embedding_dim;
  o.style_labels = std::move(style_labels);
  o.alphabet = std::move(alphabet);
  o.languages = std::move(languages);
  return ReferenceBackend(std::move(o));
}

}  // namespace babel
