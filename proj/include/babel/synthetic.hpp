#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "babel/applicator.hpp"
#include "babel/corpus.hpp"
#include "babel/profile.hpp"
#include "babel/reference_backend.hpp"
#include "babel/rng.hpp"
#include "babel/text.hpp"
#include "babel/translation.hpp"

// Two-style synthetic corpus used for the toy backend, the acceptance suite
// and the CLI's offline mode. Style is orthographic: "formal" sentences are
// title-cased and end with '.', "informal" ones are lowercase and end with '!'.
namespace babel::synthetic {

struct Lexicon {
  std::string_view domain;
  std::array<std::string_view, 4> subjects;
  std::array<std::string_view, 4> verbs;
  std::array<std::string_view, 4> objects;
};

inline constexpr std::array<Lexicon, 5> kLexicons{{
    {"law", {"court", "judge", "lawyer", "tribunal"}, {"review", "sign", "approve", "reject"},
     {"contract", "appeal", "verdict", "claim"}},
    {"literature", {"poet", "author", "reader", "critic"}, {"write", "read", "praise", "study"},
     {"novel", "poem", "story", "letter"}},
    {"wikipedia", {"city", "river", "museum", "region"}, {"host", "border", "protect", "attract"},
     {"festival", "valley", "archive", "visitor"}},
    {"medicine", {"doctor", "nurse", "surgeon", "patient"}, {"treat", "examine", "monitor", "prescribe"},
     {"fever", "wound", "infection", "dose"}},
    {"education", {"teacher", "student", "school", "tutor"}, {"teach", "grade", "explain", "revise"},
     {"lesson", "exam", "essay", "course"}},
}};

inline constexpr std::array<std::string_view, 4> kAdjectives{"new", "old", "final", "brief"};

/// English -> toy French word dictionary covering the synthetic vocabulary.
inline const std::map<std::string, std::string>& dictionary() {
  static const std::map<std::string, std::string> d{
      {"the", "le"},          {"a", "un"},           {"this", "ce"},          {"must", "doit"},
      {"can", "peut"},        {"shall", "doit"},     {"will", "va"},          {"order", "ordonner"},
      {"new", "nouveau"},     {"old", "ancien"},     {"final", "final"},      {"brief", "bref"},
      {"court", "cour"},      {"judge", "juge"},     {"lawyer", "avocat"},    {"tribunal", "tribunal"},
      {"review", "examine"},  {"sign", "signe"},     {"approve", "approuve"}, {"reject", "rejette"},
      {"contract", "contrat"}, {"appeal", "appel"},  {"verdict", "verdict"},  {"claim", "demande"},
      {"poet", "poete"},      {"author", "auteur"},  {"reader", "lecteur"},   {"critic", "critique"},
      {"write", "ecrit"},     {"read", "lit"},       {"praise", "loue"},      {"study", "etudie"},
      {"novel", "roman"},     {"poem", "poeme"},     {"story", "histoire"},   {"letter", "lettre"},
      {"city", "ville"},      {"river", "fleuve"},   {"museum", "musee"},     {"region", "region"},
      {"host", "accueille"},  {"border", "borde"},   {"protect", "protege"},  {"attract", "attire"},
      {"festival", "festival"}, {"valley", "vallee"}, {"archive", "archive"}, {"visitor", "visiteur"},
      {"doctor", "medecin"},  {"nurse", "infirmier"}, {"surgeon", "chirurgien"}, {"patient", "patient"},
      {"treat", "traite"},    {"examine", "ausculte"}, {"monitor", "surveille"}, {"prescribe", "prescrit"},
      {"fever", "fievre"},    {"wound", "blessure"}, {"infection", "infection"}, {"dose", "dose"},
      {"teacher", "professeur"}, {"student", "etudiant"}, {"school", "ecole"}, {"tutor", "tuteur"},
      {"teach", "enseigne"},  {"grade", "note"},     {"explain", "explique"}, {"revise", "revise"},
      {"lesson", "lecon"},    {"exam", "examen"},    {"essay", "essai"},      {"course", "cours"},
  };
  return d;
}

/// Renders a lowercase word sequence in the given style.
inline std::string render(const std::vector<std::string>& words, const std::string& style) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    auto cps = text::decode_utf8(w);
    if (style == "formal" && !cps.empty()) cps.front() = text::to_upper(cps.front());
    out.push_back(text::encode_utf8(cps));
  }
  return text::join_words(out) + (style == "formal" ? "." : "!");
}

inline std::vector<std::string> sentence_words(const Lexicon& lex, Rng& rng) {
  auto pick = [&](const auto& arr) { return std::string(arr[rng() % arr.size()]); };
  const std::string subject = pick(lex.subjects);
  const std::string verb = pick(lex.verbs);
  const std::string adjective = pick(kAdjectives);
  const std::string object = pick(lex.objects);
  if (rng() % 2 == 0) return {"the", subject, "must", verb, "the", adjective, object};
  return {"a", adjective, subject, "can", verb, "this", object};
}

/// `per_domain` English records for each of the five domains, styles
/// alternating formal/informal. Ids are "<domain>-<nnnn>".
inline std::vector<CorpusRecord> generate_corpus(int per_domain, std::uint64_t seed) {
  std::vector<CorpusRecord> records;
  for (std::size_t d = 0; d < kLexicons.size(); ++d) {
    Rng rng(derive_seed(seed, d));
    for (int i = 0; i < per_domain; ++i) {
      const std::string style = i % 2 == 0 ? "formal" : "informal";
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04d", std::string(kLexicons[d].domain).c_str(), i);
      records.push_back({id, std::string(kLexicons[d].domain), "en", render(sentence_words(kLexicons[d], rng), style), style});
    }
  }
  return records;
}

/// Style exemplars for both languages, drawn from a seed disjoint from the
/// corpus generator's.
inline StyleProfile profile(int samples_per_label = 4, std::uint64_t seed = 0x5EED) {
  StyleProfile p;
  p.name = "synthetic-register";
  p.labels = {"formal", "informal"};
  const DictionaryClient to_fr(dictionary(), false);
  Rng rng(seed);
  for (const std::string label : {"formal", "informal"}) {
    for (int i = 0; i < samples_per_label; ++i) {
      const auto& lex = kLexicons[static_cast<std::size_t>(i) % kLexicons.size()];
      const std::string en = render(sentence_words(lex, rng), label);
      p.samples["en"][label].push_back(en);
      p.samples["fr"][label].push_back(to_fr.translate(en, "en", "fr"));
    }
  }
  return p;
}

/// Gold inconsistency labels for a style-stripping translator: a translation
/// is inconsistent when it was stripped and its source is formal. A stripped
/// informal sentence stays lowercase, which still reads as informal.
inline std::map<std::string, bool> gold_labels(const std::vector<CorpusRecord>& records,
                                               const DictionaryClient& client) {
  std::map<std::string, bool> gold;
  for (const auto& r : records) gold[r.id] = client.strips(r.text) && r.style_label == "formal";
  return gold;
}

struct ToyOptions {
  std::uint64_t seed = 11;
  int embedding_dim = 32;
  int style_dim = 2048;
  int denoiser_steps = 1500;
  int batch_size = 16;
  double learning_rate = 1.0;
  int total_steps = 800;
};

/// Trains a reference backend for the en -> fr synthetic setting: one style
/// classifier per language, the style head, and the denoiser on the French
/// (style-preserving) translations of `train`.
inline ReferenceBackend train_toy_backend(const std::vector<CorpusRecord>& train, const ToyOptions& options = {}) {
  ReferenceOptions ro;
  ro.seed = options.seed;
  ro.embedding_dim = options.embedding_dim;
  ro.style_dim = options.style_dim;
  ReferenceBackend backend(ro);
  const DictionaryClient to_fr(dictionary(), false);
  std::vector<std::string> en_texts;
  std::vector<std::string> fr_texts;
  std::vector<std::string> labels;
  for (const auto& r : train) {
    en_texts.push_back(r.text);
    fr_texts.push_back(to_fr.translate(r.text, "en", "fr"));
    labels.push_back(r.style_label);
  }
  backend.train_classifier("en", en_texts, labels);
  backend.train_classifier("fr", fr_texts, labels);
  backend.fit_style_head(fr_texts);
  TrainingConfig tc;
  tc.steps = options.denoiser_steps;
  tc.batch_size = options.batch_size;
  tc.learning_rate = options.learning_rate;
  tc.total_steps = options.total_steps;
  tc.seed = derive_seed(options.seed, 0xD1);
  train_denoiser(fr_texts, backend, tc);
  return backend;
}

}  // namespace babel::synthetic
