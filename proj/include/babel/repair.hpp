#pragma once

#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "babel/applicator.hpp"
#include "babel/backend.hpp"
#include "babel/detector.hpp"
#include "babel/ngram.hpp"
#include "babel/profile.hpp"

namespace babel {

struct RepairConfig {
  int candidate_count = 4;
  double sts_threshold = 0.85;
  DiffusionConfig diffusion;
  DetectionConfig detection;
  /// Generate candidates on separate threads.
  bool parallel_candidates = false;

  void validate() const {
    if (candidate_count < 1) throw ConfigError("candidate_count must be >= 1, got " + std::to_string(candidate_count));
    if (!(sts_threshold >= -1.0 && sts_threshold <= 1.0))
      throw ConfigError("sts_threshold must lie in [-1, 1], got " + std::to_string(sts_threshold));
    diffusion.validate();
    detection.validate();
  }
};

struct Candidate {
  std::string text;
  double style_score = 0.0;
  double sts = 0.0;
  std::uint64_t seed = 0;
  /// Set when generation or scoring failed; the candidate is then ineligible.
  std::optional<std::string> error;
};

struct RepairResult {
  std::vector<Candidate> candidates;
  std::optional<std::size_t> selected_index;
  bool fallback_to_original = true;
  std::string original_translation;
  std::string source_label;
  /// The pair was not flagged when repair was requested.
  bool repaired_unflagged = false;

  /// The selected candidate, or the original translation on fallback.
  const std::string& output() const {
    return selected_index ? candidates[*selected_index].text : original_translation;
  }
};

/// Cosine similarity of sentence embeddings.
inline double semantic_similarity(const std::string& a, const std::string& b, const ModelBackend& backend) {
  if (a.empty() || b.empty()) throw ValidationError("semantic_similarity: empty text");
  return cosine(backend.sentence_embed(a), backend.sentence_embed(b));
}

/// Highest style score among candidates with sts >= threshold; ties go to the
/// higher sts, then the lower index. Failed candidates never qualify.
inline std::optional<std::size_t> select_candidate(const std::vector<Candidate>& candidates, double sts_threshold) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.error || !(c.sts >= sts_threshold)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = candidates[*best];
    if (c.style_score > b.style_score || (c.style_score == b.style_score && c.sts > b.sts)) best = i;
  }
  return best;
}

/// Seed of candidate k under a master seed.
inline std::uint64_t candidate_seed(std::uint64_t seed, int k) {
  return derive_seed(seed, 0xCA00 + static_cast<std::uint64_t>(k));
}

/// Generates candidate_count guided rewrites of the translation, scores them
/// with the target detector (confidence for the source's label) and STS
/// against the original translation, and selects one through the STS gate.
inline RepairResult repair(const LocalizedText& source, const LocalizedText& translation, const StyleProfile& profile,
                           const RepairConfig& config, const ModelBackend& source_backend,
                           const ModelBackend& target_backend, std::uint64_t seed) {
  config.validate();
  const DetectionVerdict verdict =
      check_consistency(source, translation, config.detection, profile, source_backend, target_backend);
  const GuidanceSet guidance =
      GuidanceSet::from_texts(profile.samples_for(translation.language, verdict.source_label), translation.language,
                              target_backend);

  RepairResult result;
  result.original_translation = translation.text;
  result.source_label = verdict.source_label;
  result.repaired_unflagged = !verdict.flagged;

  auto make = [&](int k) {
    Candidate c;
    c.seed = candidate_seed(seed, k);
    try {
      c.text = apply_style(translation.text, guidance, config.diffusion, target_backend, c.seed);
      const auto dist = target_backend.classify_style(c.text, translation.language);
      c.style_score = dist.probability(verdict.source_label).value_or(0.0);
      c.sts = c.text.empty() ? 0.0 : semantic_similarity(c.text, translation.text, target_backend);
    } catch (const Error& e) {
      c.error = e.what();
    }
    return c;
  };

  if (config.parallel_candidates && config.candidate_count > 1) {
    std::vector<std::future<Candidate>> futures;
    for (int k = 0; k < config.candidate_count; ++k) futures.push_back(std::async(std::launch::async, make, k));
    for (auto& f : futures) result.candidates.push_back(f.get());
  } else {
    for (int k = 0; k < config.candidate_count; ++k) result.candidates.push_back(make(k));
  }

  bool any_ok = false;
  std::string diagnostics;
  for (std::size_t k = 0; k < result.candidates.size(); ++k) {
    if (!result.candidates[k].error) {
      any_ok = true;
    } else {
      diagnostics += "\n  candidate " + std::to_string(k) + ": " + *result.candidates[k].error;
    }
  }
  if (!any_ok) throw Error("repair: all " + std::to_string(result.candidates.size()) + " candidates failed" + diagnostics);

  result.selected_index = select_candidate(result.candidates, config.sts_threshold);
  result.fallback_to_original = !result.selected_index;
  return result;
}

}  // namespace babel
