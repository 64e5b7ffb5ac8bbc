#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "babel/error.hpp"

namespace babel {

inline constexpr std::array<std::string_view, 5> kStandardDomains{"law", "literature", "wikipedia", "medicine",
                                                                  "education"};

/// One style-labelled monolingual text. JSONL field names: id, domain, lang,
/// text, style.
struct CorpusRecord {
  std::string id;
  std::string domain;
  std::string language;
  std::string text;
  std::string style_label;

  friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

inline nlohmann::json record_to_json(const CorpusRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["domain"] = r.domain;
  j["lang"] = r.language;
  j["text"] = r.text;
  j["style"] = r.style_label;
  return j;
}

using Sha256Digest = std::array<unsigned char, 32>;

inline Sha256Digest sha256(std::string_view data) {
  Sha256Digest digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != digest.size())
    throw Error("SHA-256 computation failed");
  return digest;
}

inline std::string sha256_hex(std::string_view data) {
  const auto digest = sha256(data);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * digest.size());
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

/// First 8 bytes of SHA-256(text), big-endian.
inline std::uint64_t sha256_prefix64(std::string_view data) {
  const auto digest = sha256(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[static_cast<std::size_t>(i)];
  return v;
}

/// Parses and validates JSONL. `allowed_labels`, when non-empty, restricts
/// the style field. Blank lines are skipped.
inline std::vector<CorpusRecord> parse_corpus(std::istream& in, const std::string& origin,
                                              const std::vector<std::string>& allowed_labels = {}) {
  std::vector<CorpusRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ValidationError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail("record is not a JSON object");
    CorpusRecord r;
    for (auto [field, dest] : {std::pair{"id", &r.id}, std::pair{"domain", &r.domain}, std::pair{"lang", &r.language},
                               std::pair{"text", &r.text}, std::pair{"style", &r.style_label}}) {
      if (!j.contains(field)) fail(std::string("missing field '") + field + "'");
      if (!j[field].is_string()) fail(std::string("field '") + field + "' must be a string");
      *dest = j[field].get<std::string>();
    }
    if (r.id.empty()) fail("empty id");
    if (r.text.empty()) fail("empty text");
    if (r.style_label.empty()) fail("empty style");
    if (!allowed_labels.empty() &&
        std::find(allowed_labels.begin(), allowed_labels.end(), r.style_label) == allowed_labels.end())
      fail("style '" + r.style_label + "' is not in the profile's label set");
    if (!ids.insert(r.id).second) fail("duplicate id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<CorpusRecord> load_corpus(const std::string& path, const std::vector<std::string>& allowed_labels = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  return parse_corpus(in, path, allowed_labels);
}

inline void write_corpus(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus '" + path + "'");
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

struct CorpusSplit {
  std::vector<CorpusRecord> train;
  std::vector<CorpusRecord> test;
};

/// Deterministic 8:2 split. Records are ranked by the first 8 bytes of
/// SHA-256("<seed>:<id>"); the round(0.2 * n) lowest-ranked go to test.
/// Both halves keep the input order.
inline CorpusSplit split_corpus(const std::vector<CorpusRecord>& records, std::uint64_t seed, double test_fraction = 0.2) {
  const std::size_t n = records.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::pair<std::uint64_t, std::size_t>> keys;
  keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    keys.emplace_back(sha256_prefix64(std::to_string(seed) + ":" + records[i].id), i);
  std::sort(keys.begin(), keys.end());
  std::vector<bool> is_test(n, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[keys[k].second] = true;
  CorpusSplit split;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? split.test : split.train).push_back(records[i]);
  return split;
}

}  // namespace babel
