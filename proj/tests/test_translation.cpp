#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>
#include "babel/http.hpp"

#include "babel/babel.hpp"

using namespace babel;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("babel_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

/// MT stub: fails the first `failures` requests with 503, then upper-cases.
class MtStub {
 public:
  explicit MtStub(int failures, int status = 503) : failures_(failures) {
    server_.Post("/translate", [this, status](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_auth_ = req.get_header_value("Authorization");
      if (failures_ > 0) {
        --failures_;
        res.status = status;
        return;
      }
      const auto j = nlohmann::json::parse(req.body);
      std::string t = j.at("q").get<std::string>();
      for (auto& c : t) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      res.set_content(nlohmann::json{{"translation", t + "/" + j.at("target").get<std::string>()}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MtStub() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }
  std::string last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> failures_;
  std::atomic<int> requests_{0};
  std::string last_auth_;
};

RetryPolicy quick() { return {3, std::chrono::milliseconds(1)}; }

}  // namespace

TEST(Identity, ReturnsInput) {
  EXPECT_EQ(IdentityClient().translate("Hello There.", "en", "fr"), "Hello There.");
}

TEST(Dictionary, PreservesStyle) {
  const DictionaryClient c(synthetic::dictionary(), false);
  EXPECT_EQ(c.translate("The Court Must Review The Final Contract.", "en", "fr"),
            "Le Cour Doit Examine Le Final Contrat.");
  EXPECT_EQ(c.translate("THE COURT!", "en", "fr"), "LE COUR!");
  EXPECT_EQ(c.translate("a new poet can write this poem!", "en", "fr"), "un nouveau poete peut ecrit ce poeme!");
  EXPECT_EQ(c.translate("unknown Word", "en", "fr"), "unknown Word");
}

TEST(Dictionary, StripsStyle) {
  const DictionaryClient c(synthetic::dictionary(), true);
  EXPECT_EQ(c.translate("The Court Must Review The Final Contract.", "en", "fr"), "le cour doit examine le final contrat");
  EXPECT_EQ(c.id(), "mock-strip-100");
}

TEST(Dictionary, StripFraction) {
  const DictionaryClient none(synthetic::dictionary(), true, 0.0);
  const DictionaryClient half(synthetic::dictionary(), true, 0.5);
  int stripped = 0;
  const auto records = synthetic::generate_corpus(100, 3);
  for (const auto& r : records) {
    EXPECT_FALSE(none.strips(r.text));
    stripped += half.strips(r.text);
  }
  EXPECT_NEAR(stripped / 500.0, 0.5, 0.07);
  EXPECT_FALSE(DictionaryClient(synthetic::dictionary(), false).strips("x"));
}

TEST(Cache, HitsAndLayout) {
  const auto dir = fresh_dir("cache");
  auto inner = std::make_shared<DictionaryClient>(synthetic::dictionary(), false);
  CachedTranslationClient c(inner, dir);
  const auto first = c.translate("The Court.", "en", "fr");
  EXPECT_EQ(c.misses(), 1);
  EXPECT_EQ(c.translate("The Court.", "en", "fr"), first);
  EXPECT_EQ(c.hits(), 1);
  const auto path = c.entry_path("The Court.", "en", "fr");
  const std::string key = sha256_hex("mock-dictionary\x1f" "en\x1f" "fr\x1f" "The Court.");
  EXPECT_EQ(path, dir / key.substr(0, 2) / (key + ".json"));
  ASSERT_TRUE(std::filesystem::exists(path));
  std::ifstream in(path);
  EXPECT_EQ(nlohmann::json::parse(in).at("translation"), first);

  // A fresh client over the same directory serves from disk.
  CachedTranslationClient again(inner, dir);
  EXPECT_EQ(again.translate("The Court.", "en", "fr"), first);
  EXPECT_EQ(again.hits(), 1);
  EXPECT_EQ(again.misses(), 0);
  std::filesystem::remove_all(dir);
}

TEST(Cache, ConcurrentWriters) {
  const auto dir = fresh_dir("cache_mt");
  CachedTranslationClient c(std::make_shared<IdentityClient>(), dir);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i) EXPECT_EQ(c.translate("t" + std::to_string(i), "en", "fr"), "t" + std::to_string(i));
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(c.hits() + c.misses(), 160);
  std::filesystem::remove_all(dir);
}

TEST(Cache, EnvironmentDirectory) {
  ::unsetenv("BABEL_CACHE_DIR");
  EXPECT_EQ(CachedTranslationClient::directory_from_environment("/x"), "/x");
  ::setenv("BABEL_CACHE_DIR", "/y", 1);
  EXPECT_EQ(CachedTranslationClient::directory_from_environment("/x"), "/y");
  ::unsetenv("BABEL_CACHE_DIR");
}

TEST(Http, TranslatesAndSendsKey) {
  MtStub stub(0);
  HttpTranslationClient c("svc", stub.base(), "/translate", "k3y", quick());
  EXPECT_EQ(c.translate("abc", "en", "fr"), "ABC/fr");
  EXPECT_EQ(stub.last_auth(), "Bearer k3y");
}

TEST(Http, RetriesTransientFailures) {
  MtStub stub(2);
  HttpTranslationClient c("svc", stub.base(), "/translate", "", quick());
  EXPECT_EQ(c.translate("abc", "en", "fr"), "ABC/fr");
  EXPECT_EQ(stub.requests(), 3);
}

TEST(Http, GivesUpAfterAttempts) {
  MtStub stub(5);
  HttpTranslationClient c("svc", stub.base(), "/translate", "", quick());
  EXPECT_THROW(c.translate("abc", "en", "fr"), RemoteError);
  EXPECT_EQ(stub.requests(), 3);
}

TEST(Http, ClientErrorsAreNotRetried) {
  MtStub stub(5, 403);
  HttpTranslationClient c("svc", stub.base(), "/translate", "", quick());
  try {
    c.translate("abc", "en", "fr");
    FAIL();
  } catch (const RemoteError& e) {
    EXPECT_EQ(e.status(), 403);
  }
  EXPECT_EQ(stub.requests(), 1);
}

TEST(Http, FromEnvironment) {
  ::unsetenv("BABEL_MT_ENDPOINT");
  EXPECT_THROW(HttpTranslationClient::from_environment("svc"), ConfigError);
  MtStub stub(0);
  ::setenv("BABEL_MT_ENDPOINT", (stub.base() + "/translate").c_str(), 1);
  ::setenv("BABEL_MT_API_KEY", "env-key", 1);
  EXPECT_EQ(HttpTranslationClient::from_environment("svc").translate("x", "en", "de"), "X/de");
  EXPECT_EQ(stub.last_auth(), "Bearer env-key");
  ::unsetenv("BABEL_MT_ENDPOINT");
  ::unsetenv("BABEL_MT_API_KEY");
}

TEST(Cache, FixturesServeOffline) {
  auto offline = std::make_shared<HttpTranslationClient>("fixture-mt", "http://127.0.0.1:1", "/translate", "",
                                                         RetryPolicy{1, std::chrono::milliseconds(1)});
  CachedTranslationClient cached(offline, BABEL_FIXTURES "/mt_cache");
  const DictionaryClient strip(synthetic::dictionary(), true, 0.5);
  for (const auto& r : load_corpus(BABEL_FIXTURES "/split10.jsonl"))
    EXPECT_EQ(cached.translate(r.text, "en", "fr"), strip.translate(r.text, "en", "fr"));
  EXPECT_EQ(cached.misses(), 0);
}
