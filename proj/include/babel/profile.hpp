#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "babel/error.hpp"

namespace babel {

/// User-supplied style exemplars: for every label, sample texts in every
/// declared language. Labels correspond across languages by name.
struct StyleProfile {
  std::string name;
  std::vector<std::string> labels;  // declaration order breaks argmax ties
  std::map<std::string, std::map<std::string, std::vector<std::string>>> samples;  // lang -> label -> texts

  std::vector<std::string> languages() const {
    std::vector<std::string> out;
    for (const auto& [lang, _] : samples) out.push_back(lang);
    return out;
  }

  bool has_label(const std::string& label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
  }

  const std::vector<std::string>& samples_for(const std::string& lang, const std::string& label) const {
    auto lit = samples.find(lang);
    if (lit == samples.end()) throw ConfigError("style profile '" + name + "' has no samples for language '" + lang + "'");
    auto it = lit->second.find(label);
    if (it == lit->second.end() || it->second.empty())
      throw ConfigError("style profile '" + name + "' has no '" + label + "' samples for language '" + lang + "'");
    return it->second;
  }

  void validate() const {
    if (labels.empty()) throw ConfigError("style profile '" + name + "' declares no labels");
    if (samples.empty()) throw ConfigError("style profile '" + name + "' declares no languages");
    for (const auto& [lang, per_label] : samples) {
      for (const auto& label : labels) {
        auto it = per_label.find(label);
        if (it == per_label.end() || it->second.empty())
          throw ConfigError("style profile '" + name + "': label '" + label + "' has no sample in language '" + lang + "'");
        for (const auto& s : it->second)
          if (s.empty()) throw ConfigError("style profile '" + name + "': empty sample text");
      }
      for (const auto& [label, _] : per_label)
        if (!has_label(label))
          throw ConfigError("style profile '" + name + "': samples for undeclared label '" + label + "'");
    }
  }
};

inline void to_json(nlohmann::json& j, const StyleProfile& p) {
  j = nlohmann::json{{"name", p.name}, {"labels", p.labels}, {"samples", p.samples}};
}

inline void from_json(const nlohmann::json& j, StyleProfile& p) {
  p.name = j.value("name", "profile");
  p.labels = j.at("labels").get<std::vector<std::string>>();
  p.samples = j.at("samples").get<std::map<std::string, std::map<std::string, std::vector<std::string>>>>();
}

inline StyleProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open style profile '" + path + "'");
  StyleProfile p;
  try {
    p = nlohmann::json::parse(in).get<StyleProfile>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("style profile '" + path + "': " + e.what());
  }
  p.validate();
  return p;
}

}  // namespace babel
