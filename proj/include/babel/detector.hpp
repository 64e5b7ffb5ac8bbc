#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "babel/backend.hpp"
#include "babel/profile.hpp"

namespace babel {

struct DetectionConfig {
  double threshold = 0.5;

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0))
      throw ConfigError("detection threshold h must lie in (0, 1), got " + std::to_string(threshold));
  }
};

struct DetectionVerdict {
  std::string source_label;
  double source_confidence = 0.0;
  double translation_confidence_for_source_label = 0.0;
  bool flagged = false;
  double threshold_used = 0.5;
};

/// A text in a given language.
struct LocalizedText {
  std::string text;
  std::string language;
};

inline StyleDistribution detect_style(std::string_view text, std::string_view language, const ModelBackend& backend) {
  return backend.classify_style(text, language);
}

/// Flag rule: inconsistent iff the translation's probability for the
/// source's style label is below h.
inline DetectionVerdict make_verdict(std::string source_label, double source_confidence,
                                     double translation_confidence, double threshold) {
  return DetectionVerdict{std::move(source_label), source_confidence, translation_confidence,
                          translation_confidence < threshold, threshold};
}

/// Both detectors must cover every label of the profile (matched by name).
inline void check_label_alignment(const StyleProfile& profile, const ModelBackend& source_backend,
                                  const ModelBackend& target_backend) {
  for (const auto* backend : {&source_backend, &target_backend}) {
    const auto& declared = backend->descriptor().style_labels;
    for (const auto& label : profile.labels) {
      if (std::find(declared.begin(), declared.end(), label) == declared.end())
        throw ConfigError("style label '" + label + "' of profile '" + profile.name +
                          "' is not produced by a detector backend");
    }
  }
}

inline DetectionVerdict check_consistency(const LocalizedText& source, const LocalizedText& translation,
                                          const DetectionConfig& config, const StyleProfile& profile,
                                          const ModelBackend& source_backend, const ModelBackend& target_backend) {
  config.validate();
  check_label_alignment(profile, source_backend, target_backend);
  const auto src = detect_style(source.text, source.language, source_backend);
  const std::string label = src.argmax(profile.labels);
  const auto tgt = detect_style(translation.text, translation.language, target_backend);
  const auto p = tgt.probability(label);
  if (!p) throw ConfigError("target detector has no label '" + label + "'");
  return make_verdict(label, *src.probability(label), *p, config.threshold);
}

struct ConfusionMatrix {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;
};

/// Ratios in [0, 1]; nullopt when the denominator is zero.
struct ConfusionMetrics {
  ConfusionMatrix counts;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> fpr;
};

inline ConfusionMetrics confusion_metrics(const ConfusionMatrix& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw ValidationError("confusion counts must be >= 0");
  ConfusionMetrics m{c, std::nullopt, std::nullopt, std::nullopt};
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.fp + c.tn > 0) m.fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  return m;
}

/// Positive class = inconsistent. gold[i] is the human judgement for
/// verdicts[i].
inline ConfusionMetrics score_confusion(std::span<const DetectionVerdict> verdicts, const std::vector<bool>& gold) {
  if (verdicts.size() != gold.size())
    throw ValidationError("score_confusion: " + std::to_string(verdicts.size()) + " verdicts but " +
                          std::to_string(gold.size()) + " gold labels");
  ConfusionMatrix c;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const bool flagged = verdicts[i].flagged;
    if (flagged && gold[i]) ++c.tp;
    else if (flagged && !gold[i]) ++c.fp;
    else if (!flagged && gold[i]) ++c.fn;
    else ++c.tn;
  }
  return confusion_metrics(c);
}

}  // namespace babel
