// babel: detect and repair stylistic inconsistencies in machine translation.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "babel/babel.hpp"

namespace {

using nlohmann::ordered_json;

struct Options {
  // shared
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string backend = "reference";
  std::string model;
  std::string endpoint;
  int max_in_flight = 4;
  std::string profile;
  std::string src_lang = "en";
  std::string tgt_lang = "fr";
  std::string out;
  std::string format = "json";
  // corpus and translation
  std::string corpus;
  std::string split = "all";
  std::uint64_t split_seed = 0;
  std::string translator = "mock-strip";
  double strip_fraction = 0.5;
  std::string cache_dir;
  std::string gold;
  int limit = 0;
  // detection and repair
  double h = 0.5;
  double tau = 0.3;
  double lambda = 1000.0;
  int steps = 800;
  double top_p = 0.9;
  int candidates = 4;
  double sts_threshold = 0.85;
  std::string source_text;
  std::string translation_text;
  bool repair_all = false;
  // sweep
  std::string param;
  std::vector<double> values;
  // toy training
  int per_domain = 100;
  int train_steps = 1500;
  int batch = 16;
  double learning_rate = 1.0;
  int embedding_dim = 32;
  std::string corpus_out;
  std::string profile_out;
};

void log(const std::string& msg) { std::cerr << "babel: " << msg << '\n'; }

ordered_json resolved_config(const std::string& command, const Options& o) {
  ordered_json j;
  j["command"] = command;
  j["seed"] = o.seed;
  j["jobs"] = o.jobs;
  j["backend"] = o.backend;
  j["model"] = o.model;
  j["endpoint"] = o.endpoint;
  j["profile"] = o.profile;
  j["src_lang"] = o.src_lang;
  j["tgt_lang"] = o.tgt_lang;
  j["corpus"] = o.corpus;
  j["split"] = o.split;
  j["split_seed"] = o.split_seed;
  j["translator"] = o.translator;
  j["strip_fraction"] = o.strip_fraction;
  j["cache_dir"] = o.cache_dir;
  j["limit"] = o.limit;
  j["h"] = o.h;
  j["tau"] = o.tau;
  j["lambda"] = o.lambda;
  j["steps"] = o.steps;
  j["top_p"] = o.top_p;
  j["candidates"] = o.candidates;
  j["sts_threshold"] = o.sts_threshold;
  j["out"] = o.out;
  j["format"] = o.format;
  if (command == "sweep") {
    j["param"] = o.param;
    j["values"] = o.values;
  }
  if (command == "train-toy") {
    j["per_domain"] = o.per_domain;
    j["train_steps"] = o.train_steps;
    j["batch"] = o.batch;
    j["learning_rate"] = o.learning_rate;
    j["embedding_dim"] = o.embedding_dim;
  }
  return j;
}

babel::EvaluationConfig evaluation_config(const Options& o) {
  babel::EvaluationConfig c;
  c.source_lang = o.src_lang;
  c.target_lang = o.tgt_lang;
  c.jobs = o.jobs;
  c.repair.candidate_count = o.candidates;
  c.repair.sts_threshold = o.sts_threshold;
  c.repair.detection.threshold = o.h;
  c.repair.diffusion.total_steps = o.steps;
  c.repair.diffusion.temperature = o.tau;
  c.repair.diffusion.guidance_strength = o.lambda;
  c.repair.diffusion.top_p = o.top_p;
  c.repair.diffusion.rng_seed = o.seed;
  c.validate();
  return c;
}

babel::StyleProfile load_profile(const Options& o) {
  if (o.profile.empty()) return babel::synthetic::profile();
  return babel::load_profile(o.profile);
}

babel::synthetic::ToyOptions toy_options(const Options& o) {
  babel::synthetic::ToyOptions t;
  t.seed = o.seed;
  t.embedding_dim = o.embedding_dim;
  t.denoiser_steps = o.train_steps;
  t.batch_size = o.batch;
  t.learning_rate = o.learning_rate;
  t.total_steps = o.steps;
  return t;
}

std::vector<babel::CorpusRecord> toy_training_records(const Options& o) {
  return babel::split_corpus(babel::synthetic::generate_corpus(o.per_domain, o.seed), o.split_seed).train;
}

/// One backend serves both languages (the reference backend hosts one
/// classifier per language).
std::unique_ptr<babel::ModelBackend> make_backend(const Options& o, const babel::StyleProfile& profile) {
  if (o.backend == "remote") {
    babel::RemoteOptions ro;
    ro.endpoint = o.endpoint;
    ro.max_in_flight = o.max_in_flight;
    auto remote = std::make_unique<babel::RemoteBackend>(ro);
    std::vector<std::string> calibration;
    for (const auto& label : profile.labels)
      for (const auto& t : profile.samples_for(o.tgt_lang, label)) calibration.push_back(t);
    remote->fit_style_head(calibration);
    return remote;
  }
  if (o.backend != "reference") throw babel::ConfigError("--backend must be reference or remote, got '" + o.backend + "'");
  if (!o.model.empty()) {
    std::ifstream in(o.model);
    if (!in) throw babel::IoError("cannot open model '" + o.model + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw babel::ValidationError("model '" + o.model + "' is not valid JSON: " + e.what());
    }
    return std::make_unique<babel::ReferenceBackend>(babel::ReferenceBackend::from_json(j));
  }
  log("no --model given; training the toy reference backend (seed " + std::to_string(o.seed) + ")");
  return std::make_unique<babel::ReferenceBackend>(
      babel::synthetic::train_toy_backend(toy_training_records(o), toy_options(o)));
}

std::shared_ptr<const babel::TranslationClient> make_translator(const Options& o) {
  std::shared_ptr<const babel::TranslationClient> client;
  if (o.translator == "identity") {
    client = std::make_shared<babel::IdentityClient>();
  } else if (o.translator == "mock-dictionary") {
    client = std::make_shared<babel::DictionaryClient>(babel::synthetic::dictionary(), false);
  } else if (o.translator == "mock-strip") {
    client = std::make_shared<babel::DictionaryClient>(babel::synthetic::dictionary(), true, o.strip_fraction);
  } else if (o.translator == "http") {
    client = std::make_shared<babel::HttpTranslationClient>(babel::HttpTranslationClient::from_environment("http"));
  } else {
    throw babel::ConfigError("--translator must be identity, mock-dictionary, mock-strip or http, got '" +
                             o.translator + "'");
  }
  const auto dir = babel::CachedTranslationClient::directory_from_environment(o.cache_dir);
  if (!dir.empty()) client = std::make_shared<babel::CachedTranslationClient>(client, dir);
  return client;
}

std::vector<babel::CorpusRecord> load_records(const Options& o, const babel::StyleProfile& profile) {
  std::vector<babel::CorpusRecord> records;
  if (o.corpus.empty()) {
    records = babel::synthetic::generate_corpus(o.per_domain, o.seed);
  } else {
    records = babel::load_corpus(o.corpus, profile.labels);
  }
  if (o.split == "test") {
    records = babel::split_corpus(records, o.split_seed).test;
  } else if (o.split == "train") {
    records = babel::split_corpus(records, o.split_seed).train;
  } else if (o.split != "all") {
    throw babel::ConfigError("--split must be all, train or test, got '" + o.split + "'");
  }
  if (o.limit > 0 && static_cast<std::size_t>(o.limit) < records.size()) records.resize(static_cast<std::size_t>(o.limit));
  return records;
}

std::optional<babel::GoldLabels> load_gold(const Options& o, const std::vector<babel::CorpusRecord>& records) {
  if (!o.gold.empty()) {
    std::ifstream in(o.gold);
    if (!in) throw babel::IoError("cannot open gold labels '" + o.gold + "'");
    try {
      return nlohmann::json::parse(in).get<babel::GoldLabels>();
    } catch (const nlohmann::json::exception& e) {
      throw babel::ValidationError("gold labels '" + o.gold + "' must be a JSON object of id -> bool: " + e.what());
    }
  }
  if (o.translator == "mock-strip")
    return babel::synthetic::gold_labels(
        records, babel::DictionaryClient(babel::synthetic::dictionary(), true, o.strip_fraction));
  return std::nullopt;
}

void write_output(const Options& o, const std::string& content) {
  if (o.out.empty()) {
    std::cout << content;
  } else {
    babel::write_text_file(o.out, content);
    log("wrote " + o.out);
  }
}

ordered_json verdict_json(const babel::DetectionVerdict& v) {
  ordered_json j;
  j["source_label"] = v.source_label;
  j["source_confidence"] = v.source_confidence;
  j["translation_confidence_for_source_label"] = v.translation_confidence_for_source_label;
  j["flagged"] = v.flagged;
  j["threshold_used"] = v.threshold_used;
  return j;
}

ordered_json repair_json(const babel::RepairResult& r) {
  ordered_json j;
  j["original_translation"] = r.original_translation;
  j["source_label"] = r.source_label;
  j["candidates"] = ordered_json::array();
  for (const auto& c : r.candidates) {
    ordered_json cj;
    cj["text"] = c.text;
    cj["style_score"] = c.style_score;
    cj["sts"] = c.sts;
    cj["seed"] = c.seed;
    cj["error"] = c.error ? ordered_json(*c.error) : ordered_json(nullptr);
    j["candidates"].push_back(std::move(cj));
  }
  j["selected_index"] = r.selected_index ? ordered_json(*r.selected_index) : ordered_json(nullptr);
  j["fallback_to_original"] = r.fallback_to_original;
  j["repaired_unflagged"] = r.repaired_unflagged;
  j["output"] = r.output();
  return j;
}

int cmd_detect(const Options& o) {
  const auto profile = load_profile(o);
  const auto config = evaluation_config(o);
  const auto backend = make_backend(o, profile);
  const auto client = make_translator(o);
  const auto records = load_records(o, profile);
  babel::check_label_alignment(profile, *backend, *backend);
  std::vector<ordered_json> rows(records.size());
  long flagged = 0;
  long failed = 0;
  babel::detail::parallel_for(records.size(), o.jobs, [&](std::size_t i) {
    const auto& r = records[i];
    ordered_json j;
    j["id"] = r.id;
    j["domain"] = r.domain;
    try {
      const auto translation = client->translate(r.text, o.src_lang, o.tgt_lang);
      j["translation"] = translation;
      j["verdict"] = verdict_json(babel::check_consistency({r.text, o.src_lang}, {translation, o.tgt_lang},
                                                           config.repair.detection, profile, *backend, *backend));
    } catch (const babel::Error& e) {
      j["error"] = e.what();
    }
    rows[i] = std::move(j);
  });
  ordered_json out = ordered_json::array();
  for (auto& j : rows) {
    if (j.contains("error")) {
      ++failed;
    } else if (j["verdict"]["flagged"].get<bool>()) {
      ++flagged;
    }
    out.push_back(std::move(j));
  }
  write_output(o, out.dump(2) + "\n");
  std::cout << "detect: " << records.size() << " records, " << flagged << " flagged, " << failed << " failed\n";
  return 0;
}

int cmd_repair(const Options& o) {
  const auto profile = load_profile(o);
  const auto config = evaluation_config(o);
  const auto backend = make_backend(o, profile);
  if (!o.source_text.empty() || !o.translation_text.empty()) {
    if (o.source_text.empty() || o.translation_text.empty())
      throw babel::ConfigError("--source and --translation must be given together");
    const babel::LocalizedText src{o.source_text, o.src_lang};
    const babel::LocalizedText tgt{o.translation_text, o.tgt_lang};
    const auto verdict = babel::check_consistency(src, tgt, config.repair.detection, profile, *backend, *backend);
    if (!verdict.flagged) log("pair is not flagged; repairing anyway");
    const auto result = babel::repair(src, tgt, profile, config.repair, *backend, *backend, o.seed);
    ordered_json j;
    j["verdict"] = verdict_json(verdict);
    j["repair"] = repair_json(result);
    write_output(o, j.dump(2) + "\n");
    std::cout << "repair: " << (result.fallback_to_original ? "fallback to original" : "selected candidate")
              << ": " << result.output() << "\n";
    return 0;
  }
  const auto client = make_translator(o);
  const auto records = load_records(o, profile);
  babel::check_label_alignment(profile, *backend, *backend);
  std::vector<ordered_json> rows(records.size());
  babel::detail::parallel_for(records.size(), o.jobs, [&](std::size_t i) {
    const auto& r = records[i];
    ordered_json j;
    j["id"] = r.id;
    j["domain"] = r.domain;
    try {
      const auto translation = client->translate(r.text, o.src_lang, o.tgt_lang);
      j["translation"] = translation;
      const babel::LocalizedText src{r.text, o.src_lang};
      const babel::LocalizedText tgt{translation, o.tgt_lang};
      const auto verdict = babel::check_consistency(src, tgt, config.repair.detection, profile, *backend, *backend);
      j["verdict"] = verdict_json(verdict);
      if (verdict.flagged || o.repair_all)
        j["repair"] = repair_json(
            babel::repair(src, tgt, profile, config.repair, *backend, *backend, babel::record_seed(o.seed, r.id)));
    } catch (const babel::Error& e) {
      j["error"] = e.what();
    }
    rows[i] = std::move(j);
  });
  long repaired = 0;
  long selected = 0;
  ordered_json out = ordered_json::array();
  for (auto& j : rows) {
    if (j.contains("repair")) {
      ++repaired;
      selected += !j["repair"]["fallback_to_original"].get<bool>();
    }
    out.push_back(std::move(j));
  }
  write_output(o, out.dump(2) + "\n");
  std::cout << "repair: " << records.size() << " records, " << repaired << " repaired, " << selected
            << " with a selected candidate\n";
  return 0;
}

void print_summary(const babel::SystemReport& s) {
  std::cout << "system " << s.system << "\n";
  std::cout << "  domain        bias    score  revised-bias  revised-score  sts\n";
  auto row = [](const babel::DomainMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-12s %7s  %5s  %12s  %13s  %4s\n", m.domain.c_str(),
                  babel::format_percent(m.bias_ratio).c_str(), babel::format_fixed2(m.style_score).c_str(),
                  babel::format_percent(m.revised_bias_ratio).c_str(),
                  babel::format_fixed2(m.revised_style_score).c_str(),
                  m.sts_mean ? babel::format_fixed2(*m.sts_mean).c_str() : "-");
    std::cout << buf;
  };
  for (const auto& m : s.domains) row(m);
  row(s.average);
  if (!s.errors.empty()) std::cout << "  " << s.errors.size() << " records excluded after errors\n";
}

int cmd_evaluate(const Options& o) {
  const auto profile = load_profile(o);
  const auto config = evaluation_config(o);
  const auto backend = make_backend(o, profile);
  const auto client = make_translator(o);
  const auto records = load_records(o, profile);
  const auto gold = load_gold(o, records);
  babel::EvaluationReport report;
  report.systems.push_back(babel::evaluate_system(records, *client, profile, config, *backend, *backend, o.seed,
                                                  gold ? &*gold : nullptr));
  write_output(o, babel::parse_format(o.format) == babel::ReportFormat::json
                      ? babel::report_to_json(report).dump(2) + "\n"
                      : babel::report_to_csv(report));
  print_summary(report.systems.front());
  std::cout << "note: " << report.note << "\n";
  return 0;
}

int cmd_sweep(const Options& o) {
  const auto profile = load_profile(o);
  const auto config = evaluation_config(o);
  if (o.param.empty()) throw babel::ConfigError("--param is required (h, tau or lambda)");
  if (o.values.empty()) throw babel::ConfigError("--values is required");
  const auto backend = make_backend(o, profile);
  const auto client = make_translator(o);
  const auto records = load_records(o, profile);
  const auto gold = load_gold(o, records);
  const auto sweep = babel::sweep_parameter(o.param, o.values, records, *client, profile, config, *backend, *backend,
                                            o.seed, gold ? &*gold : nullptr);
  write_output(o, babel::parse_format(o.format) == babel::ReportFormat::json
                      ? babel::sweep_to_json(sweep).dump(2) + "\n"
                      : babel::sweep_to_csv(sweep));
  if (!o.out.empty()) std::cout << babel::sweep_to_csv(sweep);
  return 0;
}

int cmd_train_toy(const Options& o) {
  if (o.out.empty()) throw babel::ConfigError("--out is required for train-toy");
  const auto start = std::chrono::steady_clock::now();
  const auto records = babel::synthetic::generate_corpus(o.per_domain, o.seed);
  const auto train = babel::split_corpus(records, o.split_seed).train;
  const auto backend = babel::synthetic::train_toy_backend(train, toy_options(o));
  babel::write_text_file(o.out, backend.to_json().dump() + "\n");
  if (!o.corpus_out.empty()) {
    babel::write_corpus(o.corpus_out, records);
    log("wrote " + o.corpus_out);
  }
  if (!o.profile_out.empty()) {
    babel::write_text_file(o.profile_out, nlohmann::json(babel::synthetic::profile()).dump(2) + "\n");
    log("wrote " + o.profile_out);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "train-toy: " << train.size() << " training records, model written to " << o.out << " ("
            << babel::format_fixed2(secs) << " s)\n";
  return 0;
}

int cmd_capabilities(const Options& o) {
  if (o.endpoint.empty()) throw babel::ConfigError("--endpoint is required for capabilities");
  babel::RemoteOptions ro;
  ro.endpoint = o.endpoint;
  const babel::RemoteBackend remote(ro);
  const auto caps = remote.get("/v1/capabilities");
  write_output(o, caps.dump(2) + "\n");
  return 0;
}

/// Value in the open interval (lo, hi).
CLI::Validator open_range(double lo, double hi) {
  return CLI::Validator(
      [lo, hi](std::string& s) -> std::string {
        double v = 0.0;
        std::istringstream in(s);
        if (!(in >> v) || !(v > lo && v < hi)) {
          std::ostringstream msg;
          msg << "value " << s << " must lie strictly between " << lo << " and " << hi;
          return msg.str();
        }
        return {};
      },
      "(" + std::to_string(lo).substr(0, 3) + ", " + std::to_string(hi).substr(0, 3) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"babel: detect and repair stylistic inconsistencies in machine translation"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--seed", o.seed, "Master seed for every stochastic step")->capture_default_str();
  app.add_option("--jobs", o.jobs, "Records processed concurrently")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--backend", o.backend, "Model backend: reference or remote")->capture_default_str();
  app.add_option("--model", o.model, "Reference model file from train-toy (default: train the toy model in process)");
  app.add_option("--endpoint", o.endpoint, "Model server URL for --backend remote, e.g. http://127.0.0.1:8700");
  app.add_option("--max-in-flight", o.max_in_flight, "Concurrent requests to the model server")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--profile", o.profile, "Style profile JSON (default: the built-in synthetic profile)");
  app.add_option("--src-lang", o.src_lang, "Source language tag")->capture_default_str();
  app.add_option("--tgt-lang", o.tgt_lang, "Target language tag")->capture_default_str();
  app.add_option("--out", o.out, "Output file (default: standard output)");
  app.add_option("--format", o.format, "Report format: json or csv")
      ->capture_default_str()
      ->check(CLI::IsMember({"json", "csv"}));

  app.add_option("--corpus", o.corpus, "JSONL corpus (default: generate the synthetic corpus)");
  app.add_option("--per-domain", o.per_domain, "Synthetic records per domain")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--split", o.split, "Corpus part to use: all, train or test (8:2 split)")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "train", "test"}));
  app.add_option("--split-seed", o.split_seed, "Seed of the 8:2 split")->capture_default_str();
  app.add_option("--limit", o.limit, "Use at most this many records (0 = all)")->capture_default_str()->check(CLI::NonNegativeNumber);
  app.add_option("--translator", o.translator, "identity, mock-dictionary, mock-strip or http (BABEL_MT_ENDPOINT)")
      ->capture_default_str()
      ->check(CLI::IsMember({"identity", "mock-dictionary", "mock-strip", "http"}));
  app.add_option("--strip-fraction", o.strip_fraction, "Share of texts mock-strip strips of style")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--cache-dir", o.cache_dir, "Translation cache directory (BABEL_CACHE_DIR overrides)");
  app.add_option("--gold", o.gold, "Gold inconsistency labels: JSON object id -> bool");

  app.add_option("--h", o.h, "Style classification threshold h")->capture_default_str()->check(open_range(0.0, 1.0));
  app.add_option("--tau", o.tau, "Inference temperature tau")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--lambda", o.lambda, "Guidance strength lambda")->capture_default_str()->check(CLI::NonNegativeNumber);
  app.add_option("--steps", o.steps, "Diffusion steps T")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--top-p", o.top_p, "Nucleus mass p (0.9 is this tool's choice; no published value)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--candidates", o.candidates, "Candidates generated per repair")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--sts-threshold", o.sts_threshold, "Semantic similarity gate for candidates")
      ->capture_default_str()
      ->check(CLI::Range(-1.0, 1.0));

  auto* detect = app.add_subcommand("detect", "Flag translations whose style departs from the source");
  auto* repair = app.add_subcommand("repair", "Repair flagged translations (a corpus, or one --source/--translation pair)");
  repair->add_option("--source", o.source_text, "Source text of a single pair");
  repair->add_option("--translation", o.translation_text, "Translation of a single pair");
  repair->add_flag("--all", o.repair_all, "Repair unflagged records too");
  auto* evaluate = app.add_subcommand("evaluate", "Per-domain bias ratio, style score and their revised values");
  auto* sweep = app.add_subcommand("sweep", "Sweep h, tau or lambda over a grid");
  sweep->add_option("--param", o.param, "Parameter: h, tau or lambda")->check(CLI::IsMember({"h", "tau", "lambda"}));
  sweep->add_option("--values", o.values, "Comma-separated strictly increasing grid")->delimiter(',');
  auto* train = app.add_subcommand("train-toy", "Train the toy reference backend on the synthetic corpus");
  train->add_option("--train-steps", o.train_steps, "Denoiser training steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--batch", o.batch, "Denoiser batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", o.learning_rate, "Denoiser learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--embedding-dim", o.embedding_dim, "Token embedding dimension")->capture_default_str()->check(CLI::Range(2, 4096));
  train->add_option("--corpus-out", o.corpus_out, "Also write the generated corpus (JSONL)");
  train->add_option("--profile-out", o.profile_out, "Also write the synthetic style profile (JSON)");
  auto* caps = app.add_subcommand("capabilities", "Print a model server's capability handshake");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::string command;
  for (auto* sub : {detect, repair, evaluate, sweep, train, caps})
    if (sub->parsed()) command = sub->get_name();
  log("config " + resolved_config(command, o).dump());

  try {
    if (command == "detect") return cmd_detect(o);
    if (command == "repair") return cmd_repair(o);
    if (command == "evaluate") return cmd_evaluate(o);
    if (command == "sweep") return cmd_sweep(o);
    if (command == "train-toy") return cmd_train_toy(o);
    if (command == "capabilities") return cmd_capabilities(o);
  } catch (const babel::ValidationError& e) {
    log("error: " + std::string(e.what()));
    return 1;
  } catch (const std::exception& e) {
    log("error: " + std::string(e.what()));
    return 2;
  }
  return 2;
}
