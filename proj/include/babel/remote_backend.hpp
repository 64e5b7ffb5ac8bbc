#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "babel/http.hpp"
#include <json.hpp>

#include "babel/backend.hpp"
#include "babel/error.hpp"

// Client for the model-server wire protocol (docs/protocol.md).
namespace babel {

struct RemoteOptions {
  /// Scheme, host and port, e.g. "http://127.0.0.1:8700".
  std::string endpoint;
  int max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  int connect_timeout_s = 5;
  int read_timeout_s = 60;
};

namespace protocol {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Rows of equal length; `cols` is enforced when non-negative.
inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols = -1) {
  if (!j.is_array()) throw ValidationError("expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows > 0 && cols < 0) cols = static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, std::max<Eigen::Index>(cols, 0));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ShapeError("row " + std::to_string(r) + " has " + std::to_string(row.size()) + " entries, expected " +
                       std::to_string(cols));
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

/// Maps an error body {code, message} to the matching exception type.
[[noreturn]] inline void throw_error(int status, const std::string& code, const std::string& message) {
  if (code == "unsupported") throw UnsupportedError(message);
  if (code == "not_ready") throw NotReadyError(message);
  if (code == "shape") throw ShapeError(message);
  if (code == "validation") throw ValidationError(message);
  throw RemoteError(status, code, message);
}

}  // namespace protocol

/// ModelBackend over HTTP. The handshake (GET /v1/capabilities) must declare
/// every capability or construction fails. The token embedding table is
/// fetched once on first use. The style head is fitted locally from
/// calibration texts (fit_style_head) since the protocol does not expose one.
class RemoteBackend final : public ModelBackend {
 public:
  explicit RemoteBackend(RemoteOptions options)
      : options_(std::move(options)), slots_(std::max(1, options_.max_in_flight)) {
    if (options_.endpoint.empty()) throw ConfigError("remote backend: endpoint is empty");
    if (options_.max_in_flight < 1) throw ConfigError("remote backend: max_in_flight must be >= 1");
    if (options_.attempts < 1) throw ConfigError("remote backend: attempts must be >= 1");
    const auto caps = get("/v1/capabilities");
    try {
      descriptor_.kind = BackendKind::remote;
      descriptor_.embedding_dim = caps.at("embedding_dim").get<int>();
      descriptor_.style_dim = caps.at("style_dim").get<int>();
      descriptor_.vocab_size = caps.at("vocab_size").get<int>();
      descriptor_.style_labels = caps.at("style_labels").get<std::vector<std::string>>();
      descriptor_.languages = caps.at("languages").get<std::vector<std::string>>();
      descriptor_.max_sequence_len = caps.at("max_sequence_len").get<int>();
      descriptor_.capabilities = caps.at("capabilities").get<std::vector<std::string>>();
      descriptor_.endpoint = options_.endpoint;
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(200, "bad_handshake", "capabilities response is malformed: " + std::string(e.what()));
    }
    std::string missing;
    for (auto cap : kCapabilities)
      if (!descriptor_.has_capability(cap)) missing += (missing.empty() ? "" : ", ") + std::string(cap);
    if (!missing.empty())
      throw UnsupportedError("remote backend at " + options_.endpoint + " lacks capabilities: " + missing);
    if (descriptor_.embedding_dim < 1 || descriptor_.vocab_size < 1 || descriptor_.style_dim < 1 ||
        descriptor_.style_labels.size() < 2 || descriptor_.max_sequence_len < 1)
      throw RemoteError(200, "bad_handshake", "capabilities declare invalid dimensions or fewer than 2 labels");
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }

  TokenSequence tokenize(std::string_view text) const override {
    const auto r = post("/v1/tokenize", {{"text", std::string(text)}});
    return TokenSequence(field<std::vector<int>>(r, "ids"), descriptor_.vocab_size);
  }

  std::string detokenize(const TokenSequence& tokens) const override {
    check_tokens(tokens);
    return field<std::string>(post("/v1/detokenize", {{"ids", tokens.ids}}), "text");
  }

  EmbeddingMatrix embed_tokens(const TokenSequence& tokens) const override {
    check_tokens(tokens);
    const auto r = post("/v1/embed", {{"ids", tokens.ids}});
    Matrix m = parse([&] { return protocol::matrix_from_json(r.at("embeddings"), descriptor_.embedding_dim); });
    if (m.rows() != static_cast<Eigen::Index>(tokens.size()))
      throw RemoteError(200, "bad_response", "embed returned " + std::to_string(m.rows()) + " rows for " +
                                                 std::to_string(tokens.size()) + " tokens");
    return EmbeddingMatrix(std::move(m));
  }

  Vector style_embed(std::string_view text) const override {
    if (text.empty()) throw ValidationError("style_embed: empty text");
    return embedding("/v1/style_embed", text, descriptor_.style_dim);
  }

  Vector sentence_embed(std::string_view text) const override {
    if (text.empty()) throw ValidationError("sentence_embed: empty text");
    return embedding("/v1/sentence_embed", text, -1);
  }

  StyleDistribution classify_style(std::string_view text, std::string_view language) const override {
    if (!descriptor_.declares_language(language))
      throw UnsupportedError("language '" + std::string(language) + "' is not declared by " + options_.endpoint);
    const auto r = post("/v1/classify", {{"text", std::string(text)}, {"lang", std::string(language)}});
    return parse([&] {
      return StyleDistribution(r.at("labels").get<std::vector<std::string>>(),
                               r.at("probabilities").get<std::vector<double>>());
    });
  }

  std::string paraphrase(std::string_view text, std::uint64_t seed) const override {
    if (text.empty()) throw ValidationError("paraphrase: empty text");
    return field<std::string>(post("/v1/paraphrase", {{"text", std::string(text)}, {"seed", seed}}), "text");
  }

  LogitsMatrix denoise(const EmbeddingMatrix& x_t, DiffusionStep step, const TokenSequence& condition) const override {
    check_tokens(condition);
    const nlohmann::json body{{"x_t", protocol::matrix_to_json(x_t.values())},
                              {"t", step.t},
                              {"total_steps", step.total},
                              {"condition", condition.ids}};
    const auto r = post("/v1/denoise", body);
    Matrix m = parse([&] { return protocol::matrix_from_json(r.at("logits"), descriptor_.vocab_size); });
    return LogitsMatrix(std::move(m));
  }

  const Matrix& token_embedding_table() const override {
    std::call_once(table_once_, [&] {
      const int vocab = descriptor_.vocab_size;
      const int chunk = descriptor_.max_sequence_len;
      Matrix table(vocab, descriptor_.embedding_dim);
      for (int start = 0; start < vocab; start += chunk) {
        const int n = std::min(chunk, vocab - start);
        std::vector<int> ids(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = start + i;
        table.middleRows(start, n) = embed_tokens(TokenSequence(std::move(ids), vocab)).values();
      }
      table_ = std::move(table);
    });
    return table_;
  }

  const StyleHead& style_head() const override {
    if (!head_.ready()) throw NotReadyError("remote backend style head has not been fitted (call fit_style_head)");
    return head_;
  }

  /// Fits the linear style head from pooled token embeddings to the server's
  /// style embeddings of `texts`.
  void fit_style_head(const std::vector<std::string>& texts, double ridge = 1e-3) {
    if (texts.empty()) throw ValidationError("fit_style_head: no texts");
    const auto n = static_cast<Eigen::Index>(texts.size());
    Matrix pooled(n, descriptor_.embedding_dim);
    Matrix targets(n, descriptor_.style_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto tokens = tokenize(texts[static_cast<std::size_t>(i)]);
      if (tokens.empty()) throw ValidationError("fit_style_head: empty text");
      pooled.row(i) = embed_tokens(tokens).values().colwise().mean();
      targets.row(i) = style_embed(texts[static_cast<std::size_t>(i)]).transpose();
    }
    head_ = StyleHead::fit(pooled, targets, ridge);
  }

  void set_style_head(Matrix weights) { head_ = StyleHead::from_weights(std::move(weights)); }

  /// Raw GET returning the parsed body; errors mapped as for every call.
  nlohmann::json get(const std::string& path) const { return request(path, nullptr); }
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const { return request(path, &body); }

 private:
  template <class T>
  T field(const nlohmann::json& j, const char* name) const {
    return parse([&] { return j.at(name).get<T>(); });
  }

  template <class F>
  auto parse(F&& f) const -> decltype(f()) {
    try {
      return f();
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(200, "bad_response", options_.endpoint + ": malformed response: " + e.what());
    }
  }

  Vector embedding(const char* path, std::string_view text, Eigen::Index dim) const {
    const auto r = post(path, {{"text", std::string(text)}});
    Vector v = parse([&] { return protocol::vector_from_json(r.at("embedding")); });
    if (dim >= 0 && v.size() != dim)
      throw RemoteError(200, "bad_response", std::string(path) + " returned dimension " + std::to_string(v.size()));
    if (!v.allFinite()) throw NumericError(std::string(path) + " returned non-finite values");
    return v;
  }

  void check_tokens(const TokenSequence& tokens) const {
    if (tokens.vocab_size != descriptor_.vocab_size)
      throw ValidationError("token sequence vocabulary " + std::to_string(tokens.vocab_size) +
                            " does not match backend vocabulary " + std::to_string(descriptor_.vocab_size));
    tokens.validate();
  }

  nlohmann::json request(const std::string& path, const nlohmann::json* body) const {
    struct Slot {
      std::counting_semaphore<>& s;
      explicit Slot(std::counting_semaphore<>& sem) : s(sem) { s.acquire(); }
      ~Slot() { s.release(); }
    } slot(slots_);
    auto backoff = options_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
      httplib::Client client(options_.endpoint);
      client.set_connection_timeout(options_.connect_timeout_s);
      client.set_read_timeout(options_.read_timeout_s);
      auto res = body ? client.Post(path, body->dump(), "application/json") : client.Get(path);
      if (res && res->status == 200) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw RemoteError(200, "bad_response", path + ": response is not JSON: " + e.what());
        }
      }
      if (res && res->status >= 400 && res->status < 500 && res->status != 429) {
        std::string code = "client_error";
        std::string message = res->body;
        try {
          const auto err = nlohmann::json::parse(res->body);
          code = err.at("code").get<std::string>();
          message = err.at("message").get<std::string>();
        } catch (const nlohmann::json::exception&) {
        }
        protocol::throw_error(res->status, code, path + ": " + message);
      }
      last_error = res ? "HTTP " + std::to_string(res->status) + " " + res->body : httplib::to_string(res.error());
      if (attempt < options_.attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw RemoteError(0, "unavailable", options_.endpoint + path + " failed after " + std::to_string(options_.attempts) +
                                            " attempts: " + last_error);
  }

  RemoteOptions options_;
  BackendDescriptor descriptor_;
  mutable std::counting_semaphore<> slots_;
  mutable std::once_flag table_once_;
  mutable Matrix table_;
  StyleHead head_;
};

}  // namespace babel
