#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include "babel/http.hpp"
#include <json.hpp>

#include "babel/corpus.hpp"
#include "babel/error.hpp"
#include "babel/text.hpp"

namespace babel {

/// A machine translation system under test.
class TranslationClient {
 public:
  virtual ~TranslationClient() = default;
  /// Stable identifier; part of the cache key.
  virtual std::string id() const = 0;
  virtual std::string translate(const std::string& text, const std::string& source_lang,
                                const std::string& target_lang) const = 0;
};

class IdentityClient final : public TranslationClient {
 public:
  std::string id() const override { return "mock-identity"; }
  std::string translate(const std::string& text, const std::string&, const std::string&) const override { return text; }
};

/// Word-for-word dictionary translation. Without stripping, each word keeps
/// its casing pattern (all caps, capitalised, lower) and its surrounding
/// punctuation. With stripping, output words are lowercase and punctuation is
/// dropped, which simulates a system that loses the source's register.
/// Unknown words pass through. `strip_fraction` < 1 strips only the texts
/// whose SHA-256("strip:<text>") prefix falls below that fraction.
class DictionaryClient final : public TranslationClient {
 public:
  DictionaryClient(std::map<std::string, std::string> dictionary, bool strip_style, double strip_fraction = 1.0)
      : dictionary_(std::move(dictionary)), strip_(strip_style), fraction_(strip_fraction) {}

  std::string id() const override {
    return strip_ ? "mock-strip-" + std::to_string(static_cast<int>(fraction_ * 100 + 0.5)) : "mock-dictionary";
  }

  bool strips(const std::string& text) const {
    if (!strip_) return false;
    if (fraction_ >= 1.0) return true;
    const double u = static_cast<double>(sha256_prefix64("strip:" + text) >> 11) * 0x1.0p-53;
    return u < fraction_;
  }

  std::string translate(const std::string& text, const std::string&, const std::string&) const override {
    const bool strip = strips(text);
    std::vector<std::string> out;
    for (const auto& word : text::split_words(text)) {
      auto cps = text::decode_utf8(word);
      std::size_t begin = 0;
      std::size_t end = cps.size();
      while (begin < end && !text::is_alnum(cps[begin])) ++begin;
      while (end > begin && !text::is_alnum(cps[end - 1])) --end;
      const std::u32string core(cps.begin() + static_cast<std::ptrdiff_t>(begin), cps.begin() + static_cast<std::ptrdiff_t>(end));
      std::u32string lower = core;
      for (auto& c : lower) c = text::to_lower(c);
      auto it = dictionary_.find(text::encode_utf8(lower));
      std::u32string mapped = it == dictionary_.end() ? lower : text::decode_utf8(it->second);
      if (strip) {
        if (!mapped.empty()) out.push_back(text::encode_utf8(mapped));
        continue;
      }
      const bool all_caps = core.size() > 1 && std::all_of(core.begin(), core.end(), [](char32_t c) {
                              return !text::is_alnum(c) || text::is_upper(c) || (c >= U'0' && c <= U'9');
                            }) && std::any_of(core.begin(), core.end(), text::is_upper);
      if (all_caps) {
        for (auto& c : mapped) c = text::to_upper(c);
      } else if (!core.empty() && text::is_upper(core.front()) && !mapped.empty()) {
        mapped.front() = text::to_upper(mapped.front());
      }
      std::u32string rebuilt(cps.begin(), cps.begin() + static_cast<std::ptrdiff_t>(begin));
      rebuilt += mapped;
      rebuilt.append(cps.begin() + static_cast<std::ptrdiff_t>(end), cps.end());
      if (!rebuilt.empty()) out.push_back(text::encode_utf8(rebuilt));
    }
    return text::join_words(out);
  }

 private:
  std::map<std::string, std::string> dictionary_;
  bool strip_;
  double fraction_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

/// Generic JSON-over-HTTP adapter for a remote MT service.
/// POST <path> {"q", "source", "target"} -> {"translation"}.
/// Endpoint and credentials come from the environment only:
/// BABEL_MT_ENDPOINT (e.g. http://host:port/translate) and BABEL_MT_API_KEY
/// (sent as a Bearer token when set).
class HttpTranslationClient final : public TranslationClient {
 public:
  HttpTranslationClient(std::string name, std::string base_url, std::string path, std::string api_key = {},
                        RetryPolicy retry = {})
      : name_(std::move(name)), base_(std::move(base_url)), path_(std::move(path)), key_(std::move(api_key)),
        retry_(retry) {}

  static HttpTranslationClient from_environment(std::string name) {
    const char* endpoint = std::getenv("BABEL_MT_ENDPOINT");
    if (!endpoint || !*endpoint) throw ConfigError("BABEL_MT_ENDPOINT is not set");
    const std::string url(endpoint);
    const auto scheme = url.find("://");
    const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string base = slash == std::string::npos ? url : url.substr(0, slash);
    std::string path = slash == std::string::npos ? "/translate" : url.substr(slash);
    const char* key = std::getenv("BABEL_MT_API_KEY");
    return HttpTranslationClient(std::move(name), std::move(base), std::move(path), key ? key : "");
  }

  std::string id() const override { return name_; }

  std::string translate(const std::string& text, const std::string& source_lang,
                        const std::string& target_lang) const override {
    const std::string body = nlohmann::json{{"q", text}, {"source", source_lang}, {"target", target_lang}}.dump();
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
    std::string last_error;
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
      httplib::Client client(base_);
      client.set_connection_timeout(5);
      client.set_read_timeout(30);
      auto res = client.Post(path_, headers, body, "application/json");
      if (res && res->status == 200) {
        try {
          return nlohmann::json::parse(res->body).at("translation").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          throw RemoteError(res->status, "bad_response", name_ + ": malformed translation response: " + e.what());
        }
      }
      if (res && res->status >= 400 && res->status < 500 && res->status != 429)
        throw RemoteError(res->status, "client_error", name_ + ": HTTP " + std::to_string(res->status) + ": " + res->body);
      last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (attempt < retry_.attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw RemoteError(0, "unavailable",
                      name_ + ": translation failed after " + std::to_string(retry_.attempts) + " attempts: " + last_error);
  }

 private:
  std::string name_;
  std::string base_;
  std::string path_;
  std::string key_;
  RetryPolicy retry_;
};

/// Content-addressed on-disk response cache in front of another client.
/// Key: SHA-256 over client id, languages and text; file
/// <dir>/<key[0..2]>/<key>.json. Readers share a lock; writers are
/// serialised and publish via rename.
class CachedTranslationClient final : public TranslationClient {
 public:
  CachedTranslationClient(std::shared_ptr<const TranslationClient> inner, std::filesystem::path directory)
      : inner_(std::move(inner)), dir_(std::move(directory)) {}

  /// Directory from BABEL_CACHE_DIR, else `fallback`.
  static std::filesystem::path directory_from_environment(const std::filesystem::path& fallback) {
    const char* dir = std::getenv("BABEL_CACHE_DIR");
    return dir && *dir ? std::filesystem::path(dir) : fallback;
  }

  std::string id() const override { return inner_->id(); }

  std::filesystem::path entry_path(const std::string& text, const std::string& source_lang,
                                   const std::string& target_lang) const {
    const std::string key =
        sha256_hex(inner_->id() + '\x1f' + source_lang + '\x1f' + target_lang + '\x1f' + text);
    return dir_ / key.substr(0, 2) / (key + ".json");
  }

  std::string translate(const std::string& text, const std::string& source_lang,
                        const std::string& target_lang) const override {
    const auto path = entry_path(text, source_lang, target_lang);
    {
      std::shared_lock lock(mutex_);
      if (auto hit = read_entry(path)) {
        ++hits_;
        return *hit;
      }
    }
    std::string translation = inner_->translate(text, source_lang, target_lang);
    std::unique_lock lock(mutex_);
    ++misses_;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create cache directory '" + path.parent_path().string() + "': " + ec.message());
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw IoError("cannot write cache entry '" + tmp + "'");
      nlohmann::ordered_json j;
      j["client"] = inner_->id();
      j["source_lang"] = source_lang;
      j["target_lang"] = target_lang;
      j["text"] = text;
      j["translation"] = translation;
      out << j.dump() << '\n';
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot publish cache entry '" + path.string() + "': " + ec.message());
    return translation;
  }

  long hits() const { return hits_; }
  long misses() const { return misses_; }

 private:
  static std::optional<std::string> read_entry(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
      return nlohmann::json::parse(in).at("translation").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

  std::shared_ptr<const TranslationClient> inner_;
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  mutable std::atomic<long> hits_{0};
  mutable std::atomic<long> misses_{0};
};

}  // namespace babel
