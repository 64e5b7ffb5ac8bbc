#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "babel/babel.hpp"
#include "support/toy.hpp"

using namespace babel;
using babel::testing::toy_backend;
using babel::testing::toy_split;

namespace {

// Independent transcription of the documented embedding construction.
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double oracle_embedding(std::uint64_t seed, int id, int k, int dim) {
  const std::uint64_t stream = splitmix(splitmix(seed) ^ splitmix(0xE1 + 0x632BE59BD9B4E019ULL));
  const std::uint64_t bits = splitmix(stream ^ splitmix(static_cast<std::uint64_t>(id) * dim + k)) >> 11;
  const double u = std::ldexp(static_cast<double>(bits), -53);
  return (2.0 * u - 1.0) * std::sqrt(3.0 / dim);
}

ReferenceBackend small_backend(std::uint64_t seed = 1) {
  ReferenceOptions o;
  o.seed = seed;
  o.embedding_dim = 8;
  o.style_dim = 256;
  return ReferenceBackend(o);
}

}  // namespace

TEST(ReferenceBackend, TokenizeRoundTrip) {
  const auto b = small_backend();
  EXPECT_TRUE(b.tokenize("").empty());
  EXPECT_EQ(b.detokenize(b.tokenize("")), "");
  const auto ab = b.tokenize("ab");
  ASSERT_EQ(ab.size(), 2u);
  EXPECT_NE(ab.ids[0], ab.ids[1]);
  EXPECT_EQ(b.detokenize(ab), "ab");
  const std::string s = "Le Tribunal Doit Examiner l'Appel, \xC3\xA9videmment!";
  EXPECT_EQ(b.detokenize(b.tokenize(s)), s);
}

TEST(ReferenceBackend, UnknownCharactersMapToReplacement) {
  const auto b = small_backend();
  const auto t = b.tokenize("a\xE2\x82\xAC");  // "a€"
  EXPECT_EQ(t.ids[1], ReferenceBackend::kUnknownId);
  EXPECT_EQ(b.detokenize(t), "a\xEF\xBF\xBD");
}

TEST(ReferenceBackend, DetokenizeRejectsUnknownId) {
  const auto b = small_backend();
  TokenSequence bad;
  bad.ids = {1, b.descriptor().vocab_size};
  bad.vocab_size = b.descriptor().vocab_size + 1;
  EXPECT_THROW(b.detokenize(bad), ValidationError);
  EXPECT_THROW(TokenSequence({-1}, 5), ValidationError);
}

TEST(ReferenceBackend, EmbeddingShapeAndPositionIndependence) {
  const auto b = small_backend();
  const auto single = b.embed_tokens(b.tokenize("x"));
  EXPECT_EQ(single.rows(), 1);
  EXPECT_EQ(single.cols(), 8);
  const auto e = b.embed_tokens(b.tokenize("aba"));
  EXPECT_EQ(e.values().row(0), e.values().row(2));
}

TEST(ReferenceBackend, EmbeddingMatchesDocumentedConstruction) {
  ReferenceOptions o;
  o.seed = 7;
  o.embedding_dim = 32;
  const ReferenceBackend b(o);
  const auto row = b.embed_tokens(TokenSequence({3}, b.descriptor().vocab_size));
  for (int k = 0; k < 32; ++k) EXPECT_EQ(row(0, k), oracle_embedding(7, 3, k, 32)) << "k=" << k;
}

TEST(ReferenceBackend, SeedDeterminismAndSensitivity) {
  const auto tokens = small_backend().tokenize("hello");
  EXPECT_EQ(small_backend(5).embed_tokens(tokens), small_backend(5).embed_tokens(tokens));
  EXPECT_FALSE(small_backend(5).embed_tokens(tokens) == small_backend(6).embed_tokens(tokens));
}

TEST(ReferenceBackend, StyleEmbeddingIsUnitNorm) {
  const auto b = small_backend();
  for (const char* s : {"a", "The Court Must Review.", "un nouveau juge peut signe ce appel!"})
    EXPECT_NEAR(b.style_embed(s).norm(), 1.0, 1e-6) << s;
  EXPECT_EQ(b.style_embed("same text"), b.style_embed("same text"));
  EXPECT_THROW(b.style_embed(""), ValidationError);
}

TEST(ReferenceBackend, DisjointAlphabetsAreOrthogonal) {
  const ReferenceBackend b(ReferenceOptions{});
  EXPECT_NEAR(cosine(b.style_embed("abc"), b.style_embed("XYZ")), 0.0, 1e-6);
  EXPECT_NEAR(cosine(b.style_embed("hello"), b.style_embed("QWRTY!")), 0.0, 1e-6);
}

TEST(ReferenceBackend, CapabilitiesAndDescriptor) {
  const auto b = small_backend();
  const auto& d = b.descriptor();
  EXPECT_EQ(d.kind, BackendKind::reference);
  const std::set<std::string> caps(d.capabilities.begin(), d.capabilities.end());
  EXPECT_EQ(caps, (std::set<std::string>{"tokenize", "embed", "style_embed", "sentence_embed", "classify",
                                         "paraphrase", "denoise"}));
  EXPECT_EQ(d.style_labels, (std::vector<std::string>{"formal", "informal"}));
  EXPECT_FALSE(d.endpoint.has_value());
}

TEST(ReferenceBackend, ConstructionValidation) {
  EXPECT_THROW(make_reference_backend(1, 1, {"formal", "informal"}), ValidationError);
  EXPECT_THROW(make_reference_backend(1, 8, {"formal"}), ValidationError);
  EXPECT_THROW(make_reference_backend(1, 8, {"a", "b"}, "aa"), ValidationError);
  EXPECT_NO_THROW(make_reference_backend(1, 2, {"a", "b"}));
}

TEST(ReferenceBackend, ParaphraseRuleTable) {
  const auto b = small_backend();
  EXPECT_EQ(b.paraphrase("THE COURT SHALL ORDER", 0), "the court will order");
  // Oracle: each rule of the table applied by hand.
  EXPECT_EQ(b.paraphrase("We Hereby Agree; Thus It Ends.", 0), "we agree so it ends");
  EXPECT_EQ(b.paraphrase("gonna stay herein!", 0), "going to stay here");
  EXPECT_EQ(b.paraphrase("x", 1), b.paraphrase("x", 1));
  EXPECT_THROW(b.paraphrase("", 0), ValidationError);
}

TEST(ReferenceBackend, ParaphrasePreservesMeaning) {
  const auto& b = toy_backend();
  double worst = 1.0;
  for (const auto& r : babel::testing::toy_corpus()) {
    const double s = semantic_similarity(r.text, b.paraphrase(r.text, 0), b);
    worst = std::min(worst, s);
  }
  EXPECT_GE(worst, 0.7);
}

TEST(ReferenceBackend, ClassifierFitsTrainingCorpus) {
  const auto& b = toy_backend();
  const auto& train = toy_split().train;
  const auto fr = babel::testing::french(train);
  int en_ok = 0;
  int fr_ok = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    en_ok += b.classify_style(train[i].text, "en").argmax() == train[i].style_label;
    fr_ok += b.classify_style(fr[i], "fr").argmax() == train[i].style_label;
  }
  EXPECT_GE(en_ok, 0.95 * static_cast<double>(train.size()));
  EXPECT_GE(fr_ok, 0.95 * static_cast<double>(train.size()));
}

TEST(ReferenceBackend, ClassifierOutputsDistribution) {
  const auto& b = toy_backend();
  for (const char* s : {"?", "THE END", "le juge doit signe le contrat", "\xC3\xA9\xC3\xA9\xC3\xA9"}) {
    const auto d = b.classify_style(s, "fr");
    double sum = 0.0;
    for (double p : d.probabilities()) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  EXPECT_EQ(b.classify_style("The Court Must Review The Old Claim.", "en").argmax(), "formal");
  EXPECT_EQ(b.classify_style("the court must review the old claim!", "en").argmax(), "informal");
}

TEST(ReferenceBackend, ClassifierErrors) {
  const auto b = small_backend();
  EXPECT_THROW(b.classify_style("x", "de"), UnsupportedError);
  EXPECT_THROW(b.classify_style("x", "en"), NotReadyError);
}

TEST(ReferenceBackend, DenoiserReconstructsAtStepZero) {
  const auto& b = toy_backend();
  const auto fr = babel::testing::french(toy_split().train);
  long hit = 0;
  long total = 0;
  for (const auto& text : fr) {
    const auto tokens = b.tokenize(text);
    const auto logits = b.denoise(b.embed_tokens(tokens), {0, 800}, tokens);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index best = 0;
      logits.values().row(i).maxCoeff(&best);
      hit += best == tokens.ids[static_cast<std::size_t>(i)];
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(hit), 0.95 * static_cast<double>(total));
}

TEST(ReferenceBackend, DenoiseShapeDeterminismAndErrors) {
  const auto& b = toy_backend();
  const auto cond = b.tokenize("le juge");
  Rng rng(1);
  const auto x = gaussian_noise(static_cast<Eigen::Index>(cond.size()), b.descriptor().embedding_dim, rng);
  const auto a = b.denoise(x, {400, 800}, cond);
  EXPECT_EQ(a.rows(), static_cast<Eigen::Index>(cond.size()));
  EXPECT_EQ(a.cols(), b.descriptor().vocab_size);
  EXPECT_EQ(a, b.denoise(x, {400, 800}, cond));
  EXPECT_THROW(b.denoise(gaussian_noise(2, b.descriptor().embedding_dim, rng), {1, 800}, cond), ShapeError);
  EXPECT_THROW(small_backend().denoise(EmbeddingMatrix::zeros(1, 8), {0, 800}, TokenSequence({1}, 100)),
               NotReadyError);
}

TEST(ReferenceBackend, DenoiseEqualsFeatureProduct) {
  const auto& b = toy_backend();
  const auto params = b.parameters();
  const Eigen::Index vocab = b.descriptor().vocab_size;
  const Eigen::Index fdim = params.size() / vocab - 1;
  const Eigen::Map<const Matrix> w(params.data(), vocab, fdim);
  const auto bias = params.tail(vocab);
  Rng rng(5);
  for (const char* text : {"x", "le juge", "Le Tribunal Doit Examiner."}) {
    const auto cond = b.tokenize(text);
    const auto x = gaussian_noise(static_cast<Eigen::Index>(cond.size()), b.descriptor().embedding_dim, rng);
    for (int t : {0, 1, 400, 800}) {
      Matrix expected = b.features(x, {t, 800}, cond) * w.transpose();
      expected.rowwise() += bias.transpose();
      const auto got = b.denoise(x, {t, 800}, cond).values();
      EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-10) << text << " t=" << t;
    }
  }
}

TEST(ReferenceBackend, DenoiseFollowsParameterUpdates) {
  ReferenceBackend b = toy_backend();
  const auto cond = b.tokenize("le juge");
  Rng rng(6);
  const auto x = gaussian_noise(static_cast<Eigen::Index>(cond.size()), b.descriptor().embedding_dim, rng);
  const auto before = b.denoise(x, {3, 800}, cond);
  b.set_parameters(b.parameters() * 2.0);
  const auto after = b.denoise(x, {3, 800}, cond);
  EXPECT_LT((after.values() - 2.0 * before.values()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(toy_backend().denoise(x, {3, 800}, cond), before);
}

TEST(ReferenceBackend, DenoiserGradientMatchesFiniteDifferences) {
  // Five-token vocabulary: the replacement character plus "abcd".
  ReferenceOptions o;
  o.seed = 3;
  o.embedding_dim = 3;
  o.style_dim = 64;
  o.alphabet = "abcd";
  ReferenceBackend b(o);
  ASSERT_EQ(b.descriptor().vocab_size, 5);
  Rng rng(9);
  Vector params(b.parameters().size());
  for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = 0.3 * standard_normal(rng);
  b.set_parameters(params);

  std::vector<DenoiserExample> batch;
  for (const auto& [target, cond, t] : {std::tuple{"abcd", "abd", 17}, std::tuple{"dcba", "dcbaa", 90}}) {
    const auto tt = b.tokenize(target);
    batch.push_back({forward_diffuse(b.embed_tokens(tt), t, DiffusionConfig{100}, rng), {t, 100}, b.tokenize(cond), tt});
  }
  Vector grad;
  b.loss_and_gradient(batch, grad);
  const double h = 1e-5;
  Vector numeric(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    Vector p = params;
    p[i] += h;
    b.set_parameters(p);
    const double up = b.loss(batch);
    p[i] -= 2 * h;
    b.set_parameters(p);
    const double down = b.loss(batch);
    numeric[i] = (up - down) / (2 * h);
  }
  const double scale = numeric.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < params.size(); ++i)
    EXPECT_LE(std::abs(grad[i] - numeric[i]), 1e-4 * std::max(std::abs(numeric[i]), scale * 1e-2)) << "i=" << i;
  EXPECT_LT((grad - numeric).norm() / numeric.norm(), 1e-4);
}

TEST(ReferenceBackend, JsonRoundTrip) {
  const auto& b = toy_backend();
  const auto copy = ReferenceBackend::from_json(nlohmann::json::parse(b.to_json().dump()));
  const std::string s = "un nouveau juge peut signe ce appel";
  EXPECT_EQ(copy.classify_style(s, "fr").probabilities(), b.classify_style(s, "fr").probabilities());
  const auto cond = b.tokenize(s);
  Rng rng(4);
  const auto x = gaussian_noise(static_cast<Eigen::Index>(cond.size()), b.descriptor().embedding_dim, rng);
  EXPECT_EQ(copy.denoise(x, {10, 800}, cond), b.denoise(x, {10, 800}, cond));
  EXPECT_EQ(copy.style_head().weights, b.style_head().weights);
  EXPECT_THROW(ReferenceBackend::from_json(nlohmann::json{{"format", "other"}}), ValidationError);
}
