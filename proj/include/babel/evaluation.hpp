#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "babel/corpus.hpp"
#include "babel/detector.hpp"
#include "babel/repair.hpp"
#include "babel/translation.hpp"

namespace babel {

inline constexpr const char* kStyleScoreCaveat =
    "style scores are detector confidences and are comparable only within one dataset and detector";

struct EvaluationConfig {
  RepairConfig repair;
  std::string source_lang = "en";
  std::string target_lang = "fr";
  /// Records evaluated concurrently.
  int jobs = 1;

  void validate() const {
    repair.validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1, got " + std::to_string(jobs));
    if (source_lang.empty() || target_lang.empty()) throw ConfigError("source and target languages are required");
  }
};

/// One row of the report. For the "Average" row every ratio and score is the
/// mean of the domain rows and the counts are sums.
struct DomainMetrics {
  std::string domain;
  long total = 0;
  long evaluated = 0;
  long excluded = 0;
  long flagged = 0;
  long revised_flagged = 0;
  long repaired = 0;
  long fallbacks = 0;
  double bias_ratio = 0.0;
  double style_score = 0.0;
  double revised_bias_ratio = 0.0;
  double revised_style_score = 0.0;
  std::optional<double> sts_mean;
  std::optional<ConfusionMetrics> confusion;
};

struct SystemReport {
  std::string system;
  std::vector<DomainMetrics> domains;
  DomainMetrics average;
  std::vector<std::string> errors;
};

struct EvaluationReport {
  std::vector<SystemReport> systems;
  std::string note = kStyleScoreCaveat;
};

/// Per-record trace of an evaluation run.
struct RecordOutcome {
  std::string id;
  std::string domain;
  std::string translation;
  DetectionVerdict verdict;
  std::optional<RepairResult> repair;
  DetectionVerdict final_verdict;
  std::optional<std::string> error;

  const std::string& final_text() const { return repair ? repair->output() : translation; }
};

/// Gold inconsistency labels keyed by record id (true = inconsistent).
using GoldLabels = std::map<std::string, bool>;

/// Seed of one record; independent of record order and job count.
inline std::uint64_t record_seed(std::uint64_t seed, const std::string& id) {
  return derive_seed(seed, sha256_prefix64("record:" + id));
}

namespace detail {

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& t : workers) t.join();
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace detail

/// Translates, detects and (for flagged records) repairs every record.
/// Failures are captured per record, never thrown.
inline std::vector<RecordOutcome> run_records(const std::vector<CorpusRecord>& records, const TranslationClient& client,
                                              const StyleProfile& profile, const EvaluationConfig& config,
                                              const ModelBackend& source_backend, const ModelBackend& target_backend,
                                              std::uint64_t seed) {
  config.validate();
  check_label_alignment(profile, source_backend, target_backend);
  std::vector<RecordOutcome> outcomes(records.size());
  detail::parallel_for(records.size(), config.jobs, [&](std::size_t i) {
    const auto& r = records[i];
    auto& out = outcomes[i];
    out.id = r.id;
    out.domain = r.domain;
    try {
      out.translation = client.translate(r.text, config.source_lang, config.target_lang);
      const LocalizedText src{r.text, config.source_lang};
      const LocalizedText tgt{out.translation, config.target_lang};
      out.verdict = check_consistency(src, tgt, config.repair.detection, profile, source_backend, target_backend);
      out.final_verdict = out.verdict;
      if (out.verdict.flagged) {
        out.repair = repair(src, tgt, profile, config.repair, source_backend, target_backend, record_seed(seed, r.id));
        if (out.repair->selected_index) {
          const auto p = target_backend.classify_style(out.repair->output(), config.target_lang)
                             .probability(out.verdict.source_label);
          out.final_verdict = make_verdict(out.verdict.source_label, out.verdict.source_confidence, p.value_or(0.0),
                                           config.repair.detection.threshold);
        }
      }
    } catch (const std::exception& e) {
      out.error = r.id + ": " + e.what();
    }
  });
  return outcomes;
}

/// Row means of the ratios, scores and STS (over rows that define them);
/// counts and confusion cells are summed.
inline DomainMetrics average_row(const std::vector<DomainMetrics>& domains) {
  DomainMetrics avg;
  avg.domain = "Average";
  std::vector<double> bias, score, rbias, rscore, sts;
  ConfusionMatrix cm;
  bool all_confusion = !domains.empty();
  for (const auto& m : domains) {
    avg.total += m.total;
    avg.evaluated += m.evaluated;
    avg.excluded += m.excluded;
    avg.flagged += m.flagged;
    avg.revised_flagged += m.revised_flagged;
    avg.repaired += m.repaired;
    avg.fallbacks += m.fallbacks;
    if (m.evaluated == 0) continue;
    bias.push_back(m.bias_ratio);
    score.push_back(m.style_score);
    rbias.push_back(m.revised_bias_ratio);
    rscore.push_back(m.revised_style_score);
    if (m.sts_mean) sts.push_back(*m.sts_mean);
    if (m.confusion) {
      cm.tp += m.confusion->counts.tp;
      cm.tn += m.confusion->counts.tn;
      cm.fp += m.confusion->counts.fp;
      cm.fn += m.confusion->counts.fn;
    } else {
      all_confusion = false;
    }
  }
  avg.bias_ratio = detail::mean_of(bias);
  avg.style_score = detail::mean_of(score);
  avg.revised_bias_ratio = detail::mean_of(rbias);
  avg.revised_style_score = detail::mean_of(rscore);
  if (!sts.empty()) avg.sts_mean = detail::mean_of(sts);
  if (all_confusion) avg.confusion = confusion_metrics(cm);
  return avg;
}

/// Aggregates outcomes into per-domain rows (in order of first appearance)
/// and an average row.
inline SystemReport aggregate(const std::string& system, const std::vector<RecordOutcome>& outcomes,
                              const GoldLabels* gold = nullptr) {
  SystemReport report;
  report.system = system;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RecordOutcome*>> by_domain;
  for (const auto& o : outcomes) {
    if (!by_domain.count(o.domain)) order.push_back(o.domain);
    by_domain[o.domain].push_back(&o);
    if (o.error) report.errors.push_back(*o.error);
  }
  for (const auto& domain : order) {
    DomainMetrics m;
    m.domain = domain;
    double style = 0.0;
    double revised_style = 0.0;
    double sts = 0.0;
    long sts_n = 0;
    ConfusionMatrix cm;
    bool have_gold = gold != nullptr;
    for (const RecordOutcome* o : by_domain[domain]) {
      ++m.total;
      if (o->error) {
        ++m.excluded;
        continue;
      }
      ++m.evaluated;
      m.flagged += o->verdict.flagged;
      m.revised_flagged += o->final_verdict.flagged;
      style += o->verdict.translation_confidence_for_source_label;
      revised_style += o->final_verdict.translation_confidence_for_source_label;
      if (o->repair) {
        ++m.repaired;
        if (o->repair->selected_index) {
          sts += o->repair->candidates[*o->repair->selected_index].sts;
          ++sts_n;
        } else {
          ++m.fallbacks;
        }
      }
      if (have_gold) {
        auto it = gold->find(o->id);
        if (it == gold->end()) {
          have_gold = false;
          continue;
        }
        const bool g = it->second;
        const bool f = o->verdict.flagged;
        cm.tp += g && f;
        cm.fn += g && !f;
        cm.fp += !g && f;
        cm.tn += !g && !f;
      }
    }
    if (m.evaluated > 0) {
      const auto n = static_cast<double>(m.evaluated);
      m.bias_ratio = static_cast<double>(m.flagged) / n;
      m.revised_bias_ratio = static_cast<double>(m.revised_flagged) / n;
      m.style_score = style / n;
      m.revised_style_score = revised_style / n;
    }
    if (sts_n > 0) m.sts_mean = sts / static_cast<double>(sts_n);
    if (have_gold) m.confusion = confusion_metrics(cm);
    report.domains.push_back(std::move(m));
  }

  report.average = average_row(report.domains);
  return report;
}

/// Translate, detect, repair flagged records and report per domain.
inline SystemReport evaluate_system(const std::vector<CorpusRecord>& records, const TranslationClient& client,
                                    const StyleProfile& profile, const EvaluationConfig& config,
                                    const ModelBackend& source_backend, const ModelBackend& target_backend,
                                    std::uint64_t seed, const GoldLabels* gold = nullptr,
                                    std::vector<RecordOutcome>* outcomes = nullptr) {
  auto results = run_records(records, client, profile, config, source_backend, target_backend, seed);
  auto report = aggregate(client.id(), results, gold);
  if (outcomes) *outcomes = std::move(results);
  return report;
}

// --- sweeps -----------------------------------------------------------------

struct SweepPoint {
  double value = 0.0;
  long evaluated = 0;
  /// h sweep.
  long flagged = 0;
  std::optional<ConfusionMetrics> confusion;
  /// tau and lambda sweeps.
  long remaining_issues = 0;
  double style_score = 0.0;
  std::optional<double> sts_mean;
};

struct SweepResult {
  std::string parameter;
  std::vector<double> grid;
  std::vector<SweepPoint> points;
};

inline std::string canonical_parameter(const std::string& name) {
  if (name == "h" || name == "threshold") return "h";
  if (name == "tau" || name == "temperature") return "tau";
  if (name == "lambda" || name == "guidance_strength") return "lambda";
  throw ConfigError("unknown sweep parameter '" + name + "' (expected h, tau or lambda)");
}

/// Flag counts and confusion metrics of the threshold rule over fixed
/// probabilities, one point per grid value.
inline std::vector<SweepPoint> threshold_sweep(const std::vector<double>& probabilities, const std::vector<bool>* gold,
                                               const std::vector<double>& grid) {
  if (gold && gold->size() != probabilities.size())
    throw ValidationError("threshold_sweep: gold has " + std::to_string(gold->size()) + " labels for " +
                          std::to_string(probabilities.size()) + " items");
  std::vector<SweepPoint> points;
  for (double h : grid) {
    DetectionConfig{h}.validate();
    SweepPoint pt;
    pt.value = h;
    pt.evaluated = static_cast<long>(probabilities.size());
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      const bool f = probabilities[i] < h;
      pt.flagged += f;
      if (gold) {
        const bool g = (*gold)[i];
        cm.tp += g && f;
        cm.fn += g && !f;
        cm.fp += !g && f;
        cm.tn += !g && !f;
      }
    }
    if (gold) pt.confusion = confusion_metrics(cm);
    points.push_back(pt);
  }
  return points;
}

/// Sweeps h, tau or lambda over `grid` with everything else fixed. Every
/// grid value reuses the same master seed.
inline SweepResult sweep_parameter(const std::string& name, const std::vector<double>& grid,
                                   const std::vector<CorpusRecord>& records, const TranslationClient& client,
                                   const StyleProfile& profile, const EvaluationConfig& config,
                                   const ModelBackend& source_backend, const ModelBackend& target_backend,
                                   std::uint64_t seed, const GoldLabels* gold = nullptr) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("sweep grid must be strictly increasing");
  SweepResult result;
  result.parameter = canonical_parameter(name);
  result.grid = grid;

  if (result.parameter == "h") {
    config.validate();
    check_label_alignment(profile, source_backend, target_backend);
    std::vector<double> probs(records.size());
    std::vector<std::optional<std::string>> errors(records.size());
    detail::parallel_for(records.size(), config.jobs, [&](std::size_t i) {
      try {
        const auto translation = client.translate(records[i].text, config.source_lang, config.target_lang);
        probs[i] = check_consistency({records[i].text, config.source_lang}, {translation, config.target_lang},
                                     config.repair.detection, profile, source_backend, target_backend)
                       .translation_confidence_for_source_label;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    std::vector<double> kept;
    std::vector<bool> labels;
    bool use_gold = gold != nullptr;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (errors[i]) continue;
      kept.push_back(probs[i]);
      if (use_gold) {
        auto it = gold->find(records[i].id);
        if (it == gold->end()) throw ValidationError("sweep: no gold label for record '" + records[i].id + "'");
        labels.push_back(it->second);
      }
    }
    result.points = threshold_sweep(kept, use_gold ? &labels : nullptr, grid);
    return result;
  }

  for (double v : grid) {
    EvaluationConfig c = config;
    if (result.parameter == "tau") {
      c.repair.diffusion.temperature = v;
    } else {
      c.repair.diffusion.guidance_strength = v;
    }
    const auto outcomes = run_records(records, client, profile, c, source_backend, target_backend, seed);
    SweepPoint pt;
    pt.value = v;
    double style = 0.0;
    double sts = 0.0;
    long sts_n = 0;
    for (const auto& o : outcomes) {
      if (o.error) continue;
      ++pt.evaluated;
      pt.flagged += o.verdict.flagged;
      pt.remaining_issues += o.final_verdict.flagged;
      style += o.final_verdict.translation_confidence_for_source_label;
      if (o.repair && o.repair->selected_index) {
        sts += o.repair->candidates[*o.repair->selected_index].sts;
        ++sts_n;
      }
    }
    if (pt.evaluated > 0) pt.style_score = style / static_cast<double>(pt.evaluated);
    if (sts_n > 0) pt.sts_mean = sts / static_cast<double>(sts_n);
    result.points.push_back(pt);
  }
  return result;
}

// --- emission ---------------------------------------------------------------

/// Half-up rounding to two decimals. A relative nudge absorbs binary
/// representation error so that decimal halves round up.
inline std::string format_fixed2(double x) {
  const double scaled = std::abs(x) * 100.0;
  const double rounded = std::floor(scaled * (1.0 + 1e-12) + 0.5);
  const long long cents = static_cast<long long>(rounded);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", (x < 0 && cents != 0) ? "-" : "", cents / 100, cents % 100);
  return buf;
}

/// Half-up rounding to two decimals of 100 * ratio, e.g. 0.131481 -> "13.15%".
inline std::string format_percent(double ratio) { return format_fixed2(ratio * 100.0) + "%"; }

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::ordered_json confusion_json(const ConfusionMetrics& c) {
  nlohmann::ordered_json j;
  j["tp"] = c.counts.tp;
  j["tn"] = c.counts.tn;
  j["fp"] = c.counts.fp;
  j["fn"] = c.counts.fn;
  j["precision"] = optional_json(c.precision);
  j["recall"] = optional_json(c.recall);
  j["fpr"] = optional_json(c.fpr);
  return j;
}

inline ConfusionMetrics confusion_from(const nlohmann::json& j) {
  ConfusionMetrics c;
  c.counts = {j.at("tp").get<long>(), j.at("tn").get<long>(), j.at("fp").get<long>(), j.at("fn").get<long>()};
  c.precision = optional_from(j.at("precision"));
  c.recall = optional_from(j.at("recall"));
  c.fpr = optional_from(j.at("fpr"));
  return c;
}

inline nlohmann::ordered_json metrics_json(const DomainMetrics& m) {
  nlohmann::ordered_json j;
  j["domain"] = m.domain;
  j["total"] = m.total;
  j["evaluated"] = m.evaluated;
  j["excluded"] = m.excluded;
  j["flagged"] = m.flagged;
  j["revised_flagged"] = m.revised_flagged;
  j["repaired"] = m.repaired;
  j["fallbacks"] = m.fallbacks;
  j["bias_ratio"] = m.bias_ratio;
  j["style_score"] = m.style_score;
  j["revised_bias_ratio"] = m.revised_bias_ratio;
  j["revised_style_score"] = m.revised_style_score;
  j["sts_mean"] = optional_json(m.sts_mean);
  j["confusion"] = m.confusion ? confusion_json(*m.confusion) : nlohmann::ordered_json(nullptr);
  return j;
}

inline DomainMetrics metrics_from(const nlohmann::json& j) {
  DomainMetrics m;
  m.domain = j.at("domain").get<std::string>();
  m.total = j.at("total").get<long>();
  m.evaluated = j.at("evaluated").get<long>();
  m.excluded = j.at("excluded").get<long>();
  m.flagged = j.at("flagged").get<long>();
  m.revised_flagged = j.at("revised_flagged").get<long>();
  m.repaired = j.at("repaired").get<long>();
  m.fallbacks = j.at("fallbacks").get<long>();
  m.bias_ratio = j.at("bias_ratio").get<double>();
  m.style_score = j.at("style_score").get<double>();
  m.revised_bias_ratio = j.at("revised_bias_ratio").get<double>();
  m.revised_style_score = j.at("revised_style_score").get<double>();
  m.sts_mean = optional_from(j.at("sts_mean"));
  if (!j.at("confusion").is_null()) m.confusion = confusion_from(j.at("confusion"));
  return m;
}

inline std::string csv_optional_percent(const std::optional<double>& v) { return v ? format_percent(*v) : ""; }

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  j["note"] = report.note;
  j["systems"] = nlohmann::ordered_json::array();
  for (const auto& s : report.systems) {
    nlohmann::ordered_json sj;
    sj["system"] = s.system;
    sj["domains"] = nlohmann::ordered_json::array();
    for (const auto& m : s.domains) sj["domains"].push_back(detail::metrics_json(m));
    sj["average"] = detail::metrics_json(s.average);
    sj["errors"] = s.errors;
    j["systems"].push_back(std::move(sj));
  }
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  try {
    EvaluationReport r;
    r.note = j.at("note").get<std::string>();
    for (const auto& sj : j.at("systems")) {
      SystemReport s;
      s.system = sj.at("system").get<std::string>();
      for (const auto& mj : sj.at("domains")) s.domains.push_back(detail::metrics_from(mj));
      s.average = detail::metrics_from(sj.at("average"));
      s.errors = sj.at("errors").get<std::vector<std::string>>();
      r.systems.push_back(std::move(s));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

inline constexpr const char* kReportCsvHeader =
    "system,domain,total,evaluated,excluded,flagged,bias_ratio,style_score,revised_bias_ratio,revised_style_score,"
    "sts_mean,precision,fpr";

/// One row per domain plus the average row; ratios as two-decimal
/// percentages, scores to two decimals, undefined values empty.
inline std::string report_to_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << kReportCsvHeader << '\n';
  auto row = [&](const std::string& system, const DomainMetrics& m) {
    std::optional<double> precision, fpr;
    if (m.confusion) {
      precision = m.confusion->precision;
      fpr = m.confusion->fpr;
    }
    out << system << ',' << m.domain << ',' << m.total << ',' << m.evaluated << ',' << m.excluded << ','
        << m.flagged << ',' << format_percent(m.bias_ratio) << ',' << format_fixed2(m.style_score) << ','
        << format_percent(m.revised_bias_ratio) << ',' << format_fixed2(m.revised_style_score) << ','
        << (m.sts_mean ? format_fixed2(*m.sts_mean) : "") << ',' << detail::csv_optional_percent(precision) << ','
        << detail::csv_optional_percent(fpr) << '\n';
  };
  for (const auto& s : report.systems) {
    for (const auto& m : s.domains) row(s.system, m);
    if (!s.domains.empty()) row(s.system, s.average);
  }
  return out.str();
}

inline nlohmann::ordered_json sweep_to_json(const SweepResult& sweep) {
  nlohmann::ordered_json j;
  j["parameter"] = sweep.parameter;
  j["grid"] = sweep.grid;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : sweep.points) {
    nlohmann::ordered_json pj;
    pj["value"] = p.value;
    pj["evaluated"] = p.evaluated;
    pj["flagged"] = p.flagged;
    if (sweep.parameter == "h") {
      pj["confusion"] = p.confusion ? detail::confusion_json(*p.confusion) : nlohmann::ordered_json(nullptr);
    } else {
      pj["remaining_issues"] = p.remaining_issues;
      pj["style_score"] = p.style_score;
      pj["sts_mean"] = detail::optional_json(p.sts_mean);
    }
    j["points"].push_back(std::move(pj));
  }
  return j;
}

inline std::string sweep_to_csv(const SweepResult& sweep) {
  std::ostringstream out;
  if (sweep.parameter == "h") {
    out << "h,evaluated,flagged,precision,fpr\n";
    for (const auto& p : sweep.points) {
      std::optional<double> precision, fpr;
      if (p.confusion) {
        precision = p.confusion->precision;
        fpr = p.confusion->fpr;
      }
      out << format_fixed2(p.value) << ',' << p.evaluated << ',' << p.flagged << ','
          << detail::csv_optional_percent(precision) << ',' << detail::csv_optional_percent(fpr) << '\n';
    }
  } else {
    out << sweep.parameter << ",evaluated,flagged,remaining_issues,style_score,sts_mean\n";
    for (const auto& p : sweep.points) {
      std::ostringstream v;
      v << p.value;
      out << v.str() << ',' << p.evaluated << ',' << p.flagged << ',' << p.remaining_issues << ','
          << format_fixed2(p.style_score) << ',' << (p.sts_mean ? format_fixed2(*p.sts_mean) : "") << '\n';
    }
  }
  return out.str();
}

enum class ReportFormat { json, csv };

inline ReportFormat parse_format(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + s + "' (expected json or csv)");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void emit_report(const EvaluationReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, format == ReportFormat::json ? report_to_json(report).dump(2) + "\n" : report_to_csv(report));
}

inline void emit_sweep(const SweepResult& sweep, ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, format == ReportFormat::json ? sweep_to_json(sweep).dump(2) + "\n" : sweep_to_csv(sweep));
}

}  // namespace babel
