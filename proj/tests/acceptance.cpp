// Acceptance runner: one PASS/FAIL line per primary criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "babel/babel.hpp"
#include "support/published_tables.hpp"

using namespace babel;

namespace {

// Tolerances.
constexpr double kTableTolerance = 0.01;      // percentage points or score units
constexpr double kEnergyTolerance = 0.03;     // relative
constexpr double kGradientRelTolerance = 1e-4;
constexpr double kGradientFloor = 1e-8;       // absolute floor of the relative test
constexpr double kStsGate = 0.85;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failed;
  void require(bool ok, const std::string& what) {
    if (ok) return;
    failed += (pass ? "" : "; ") + what;
    pass = false;
  }
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  o.require(secs < budget_s, "runtime " + std::to_string(secs) + " s over budget " + std::to_string(budget_s) + " s");
  if (!o.pass) ++failures;
  char buf[64];
  std::snprintf(buf, sizeof buf, " (%.1f s)", secs);
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << buf;
  if (!o.pass) std::cout << " -- failed: " << o.failed;
  std::cout << std::endl;
}

double round2(double x) { return std::floor(x * 100.0 * (1.0 + 1e-12) + 0.5) / 100.0; }

bool close_rel(double a, double b) {
  return std::abs(a - b) <= kGradientRelTolerance * std::max(std::abs(b), kGradientFloor);
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Backend and data shared by the sampler, end-to-end and sweep criteria.
struct ToySetting {
  std::vector<CorpusRecord> test;
  ReferenceBackend backend;
  StyleProfile profile = synthetic::profile();
  DictionaryClient translator{synthetic::dictionary(), true, 0.5};
  GoldLabels gold;

  static ToySetting make() {
    const auto corpus = synthetic::generate_corpus(200, 11);
    const auto split = split_corpus(corpus, 0);
    ToySetting s{split.test, synthetic::train_toy_backend(split.train), synthetic::profile(), {synthetic::dictionary(), true, 0.5}, {}};
    s.gold = synthetic::gold_labels(s.test, s.translator);
    return s;
  }
};

const ToySetting& toy() {
  static const ToySetting s = ToySetting::make();
  return s;
}

}  // namespace

int main() {
  using babel::testing::kPublishedConfusion;
  using babel::testing::kPublishedEvaluation;

  criterion("table2-arithmetic", 1.0, [](Outcome& o) {
    double worst = 0.0;
    for (const auto& row : kPublishedConfusion) {
      const auto m = confusion_metrics({row.tp, row.tn, row.fp, row.fn});
      const double dp = std::abs(*m.precision * 100 - row.precision_percent);
      const double df = std::abs(*m.fpr * 100 - row.fpr_percent);
      worst = std::max({worst, dp, df});
      o.require(dp <= kTableTolerance && df <= kTableTolerance,
                std::string(row.system) + "/" + std::string(row.domain) + " off by " + std::to_string(std::max(dp, df)));
    }
    o.detail << kPublishedConfusion.size() << " rows, worst deviation " << worst << " pp";
  });

  criterion("table1-aggregation", 1.0, [](Outcome& o) {
    double worst = 0.0;
    int systems = 0;
    for (std::size_t s = 0; s + 5 < kPublishedEvaluation.size(); s += 6, ++systems) {
      std::vector<DomainMetrics> rows;
      for (std::size_t d = s; d < s + 5; ++d) {
        const auto& r = kPublishedEvaluation[d];
        DomainMetrics m;
        m.domain = r.domain;
        m.evaluated = 1;
        m.bias_ratio = r.bias_percent / 100;
        m.style_score = r.score;
        m.revised_bias_ratio = r.revised_bias_percent / 100;
        m.revised_style_score = r.revised_score;
        m.sts_mean = r.sts;
        rows.push_back(m);
      }
      const auto avg = average_row(rows);
      const auto& p = kPublishedEvaluation[s + 5];
      const std::pair<double, double> pairs[] = {{round2(avg.bias_ratio * 100), p.bias_percent},
                                                 {round2(avg.style_score), p.score},
                                                 {round2(avg.revised_bias_ratio * 100), p.revised_bias_percent},
                                                 {round2(avg.revised_style_score), p.revised_score},
                                                 {round2(*avg.sts_mean), p.sts}};
      for (const auto& [got, want] : pairs) {
        const double d = std::abs(got - want);
        worst = std::max(worst, d);
        o.require(d <= kTableTolerance + 1e-9, std::string(p.system) + " average off by " + std::to_string(d));
      }
    }
    o.detail << systems << " systems, worst deviation " << worst;
  });

  criterion("schedule-diffusion", 10.0, [](Outcome& o) {
    for (int T : {1, 10, 800, 10000}) o.require(beta(0, T) == 1.0 && beta(T, T) == 0.0, "beta endpoints");
    const int grid = 10000;
    for (int t = 1; t <= grid; ++t)
      if (!(beta(t, grid) < beta(t - 1, grid))) {
        o.require(false, "beta not strictly decreasing at t=" + std::to_string(t));
        break;
      }
    const int dim = 16, T = 800, draws = 10000;
    Matrix e = Matrix::Zero(1, dim);
    e(0, 0) = 1.0;
    const EmbeddingMatrix unit(e);
    DiffusionConfig cfg;
    cfg.total_steps = T;
    Rng rng(2024);
    double worst = 0.0;
    for (int t : {100, 400, 700}) {
      double sum = 0.0;
      for (int k = 0; k < draws; ++k) sum += forward_diffuse(unit, t, cfg, rng).values().squaredNorm();
      const double b = beta(t, T);
      const double expected = b + (1.0 - b) * dim;
      const double rel = std::abs(sum / draws - expected) / expected;
      worst = std::max(worst, rel);
      o.require(rel <= kEnergyTolerance, "energy off at t=" + std::to_string(t));
    }
    o.detail << "endpoints exact, monotone over 10^4 points, worst energy error " << worst * 100 << "%";
  });

  criterion("gradient-oracles", 30.0, [](Outcome& o) {
    ReferenceOptions ro;
    ro.seed = 21;
    ro.embedding_dim = 3;
    ro.style_dim = 32;
    ro.alphabet = "abcde";
    ReferenceBackend b(ro);
    b.fit_style_head({"abc", "cde", "aabb", "eeda", "bead", "cab"});

    // Training loss gradient with respect to the denoiser parameters.
    Rng rng(5);
    Vector params(b.parameters().size());
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = 0.2 * (2 * uniform01(rng) - 1);
    b.set_parameters(params);
    b.mark_trained(20);
    DiffusionConfig cfg;
    cfg.total_steps = 20;
    std::vector<DenoiserExample> batch;
    for (const char* s : {"abcd", "eba", "ccd"}) {
      const auto target = b.tokenize(s);
      const int t = 3 + static_cast<int>(batch.size()) * 5;
      batch.push_back({forward_diffuse(b.embed_tokens(target), t, cfg, rng), {t, 20}, b.tokenize("dab"), target});
    }
    Vector grad;
    b.loss_and_gradient(batch, grad);
    const double h = 1e-5;
    int checked = 0, bad = 0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      Vector up = params, down = params;
      up[i] += h;
      down[i] -= h;
      b.set_parameters(up);
      const double lu = b.loss(batch);
      b.set_parameters(down);
      const double ld = b.loss(batch);
      ++checked;
      bad += !close_rel(grad[i], (lu - ld) / (2 * h));
    }
    b.set_parameters(params);
    o.require(bad == 0, std::to_string(bad) + " of " + std::to_string(checked) + " loss gradient entries off");

    // Guidance gradient with respect to the logits.
    const auto g = GuidanceSet::from_texts({"abba", "ed"}, "en", b);
    const GuidanceContext ctx(b.style_head(), g);
    const Matrix& table = b.token_embedding_table();
    Matrix logits(4, table.rows());
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 2 * uniform01(rng) - 1;
    const double tau = 0.3;
    const auto ev = evaluate_guidance(logits, table, ctx, tau);
    int gbad = 0, gchecked = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      for (Eigen::Index v = 0; v < logits.cols(); ++v) {
        Matrix up = logits, down = logits;
        up(i, v) += h;
        down(i, v) -= h;
        const double fd =
            (evaluate_guidance(up, table, ctx, tau).value - evaluate_guidance(down, table, ctx, tau).value) / (2 * h);
        ++gchecked;
        gbad += !close_rel(ev.gradient(i, v), fd);
      }
    o.require(gbad == 0, std::to_string(gbad) + " of " + std::to_string(gchecked) + " guidance gradient entries off");
    o.detail << checked << " loss and " << gchecked << " guidance gradient entries within 1e-4 relative";
  });

  // Includes training the toy backend.
  criterion("end-to-end-repair", 300.0, [](Outcome& o) {
    const auto& s = toy();
    EvaluationConfig cfg;
    cfg.jobs = jobs();
    o.detail << s.test.size() << " records";
    o.require(s.test.size() >= 200, "fewer than 200 records");
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto r = evaluate_system(s.test, s.translator, s.profile, cfg, s.backend, s.backend, seed, &s.gold);
      long flagged = 0, revised = 0, evaluated = 0;
      for (const auto& d : r.domains) {
        flagged += d.flagged;
        revised += d.revised_flagged;
        evaluated += d.evaluated;
      }
      const double bias = static_cast<double>(flagged) / static_cast<double>(evaluated);
      const double rbias = static_cast<double>(revised) / static_cast<double>(evaluated);
      o.detail << "; seed " << seed << ": bias " << format_percent(bias) << " -> " << format_percent(rbias);
      o.require(rbias < bias, "seed " + std::to_string(seed) + ": revised bias not below bias");
      // Mean STS over every selected repair of the run.
      double sts = 0.0;
      long n = 0;
      for (const auto& d : r.domains)
        if (d.sts_mean) {
          // Weight each domain mean by its number of selected repairs.
          const long selected = d.repaired - d.fallbacks;
          sts += *d.sts_mean * static_cast<double>(selected);
          n += selected;
        }
      o.require(n > 0, "seed " + std::to_string(seed) + ": no repair selected");
      if (n > 0) {
        sts /= static_cast<double>(n);
        o.detail << ", STS " << format_fixed2(sts) << " over " << n << " repairs";
        o.require(sts >= kStsGate, "seed " + std::to_string(seed) + ": mean STS below 0.85");
      }
      o.require(r.errors.empty(), "seed " + std::to_string(seed) + ": " + std::to_string(r.errors.size()) + " errors");
    }
  });

  criterion("sampler", 30.0, [](Outcome& o) {
    Rng rng(1000);
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int vocab = 1 + static_cast<int>(uniform01(rng) * 50);
      Eigen::RowVectorXd logits(vocab);
      for (int v = 0; v < vocab; ++v) logits[v] = std::round((6 * uniform01(rng) - 3) * 4) / 4;  // ties happen
      const double tau = 0.1 + uniform01(rng);
      const double p = trial % 10 == 0 ? 1.0 : 0.01 + 0.99 * uniform01(rng);
      const auto n = top_p_distribution(logits, tau, p);
      std::vector<std::pair<double, int>> order;
      double z = 0.0;
      for (int v = 0; v < vocab; ++v) z += std::exp((logits[v] - logits.maxCoeff()) / tau);
      for (int v = 0; v < vocab; ++v) order.push_back({-std::exp((logits[v] - logits.maxCoeff()) / tau) / z, v});
      std::sort(order.begin(), order.end());
      std::vector<int> ids;
      double mass = 0.0;
      for (const auto& [neg, v] : order) {
        ids.push_back(v);
        mass -= neg;
        if (p < 1.0 && mass >= p) break;
      }
      bool ok = n.ids == ids;
      for (std::size_t k = 0; ok && k < ids.size(); ++k) ok = std::abs(n.probs[k] + order[k].first / mass) < 1e-12;
      bad += !ok;
    }
    o.require(bad == 0, std::to_string(bad) + " of 1000 nucleus distributions differ from brute force");

    const auto& s = toy();
    DiffusionConfig c;
    c.guidance_strength = 0.0;
    const auto samples = s.profile.samples_for("fr", "formal");
    const auto guidance = GuidanceSet::from_texts(samples, "fr", s.backend);
    const auto text = s.translator.translate(s.test.front().text, "en", "fr");
    int differ = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      differ += apply_style(text, guidance, c, s.backend, seed) != sample_unguided(text, c, s.backend, seed);
    o.require(differ == 0, std::to_string(differ) + " of 20 lambda=0 runs differ from unguided");
    o.detail << "1000 nucleus distributions match brute force; 20/20 lambda=0 runs equal unguided (T="
             << c.total_steps << ")";
  });

  criterion("sweep-shape", 120.0, [](Outcome& o) {
    const auto& s = toy();
    EvaluationConfig cfg;
    cfg.jobs = jobs();
    std::vector<double> hs;
    for (int k = 1; k <= 19; ++k) hs.push_back(k * 0.05);
    const auto hsweep = sweep_parameter("h", hs, s.test, s.translator, s.profile, cfg, s.backend, s.backend, 0, &s.gold);
    double prev = -1.0;
    for (const auto& p : hsweep.points) {
      const double fpr = p.confusion && p.confusion->fpr ? *p.confusion->fpr : 0.0;
      o.require(fpr >= prev, "FPR decreases at h=" + format_fixed2(p.value));
      prev = fpr;
    }
    o.detail << "FPR non-decreasing over " << hs.size() << " h values";

    // tau and lambda: a 20-record subset at T=200 keeps the double run affordable.
    std::vector<CorpusRecord> subset(s.test.begin(), s.test.begin() + 20);
    cfg.repair.diffusion.total_steps = 200;
    for (const auto& [param, grid] : {std::pair<std::string, std::vector<double>>{"tau", {0.1, 0.3, 0.5}},
                                      std::pair<std::string, std::vector<double>>{"lambda", {0.0, 100.0, 1000.0}}}) {
      const auto a = sweep_parameter(param, grid, subset, s.translator, s.profile, cfg, s.backend, s.backend, 4);
      const auto b = sweep_parameter(param, grid, subset, s.translator, s.profile, cfg, s.backend, s.backend, 4);
      bool complete = a.points.size() == grid.size();
      for (const auto& p : a.points) complete = complete && p.evaluated == static_cast<long>(subset.size());
      o.require(complete, param + " series incomplete");
      o.require(sweep_to_json(a).dump() == sweep_to_json(b).dump(), param + " series not deterministic");
      o.detail << "; " << param << " remaining issues:";
      for (const auto& p : a.points) o.detail << " " << p.remaining_issues;
    }
  });

  criterion("hermeticity", 10.0, [](Outcome& o) {
    // An HTTP translator pointed at a closed port, answered entirely from the
    // recorded cache, and the in-process reference backend.
    auto offline = std::make_shared<HttpTranslationClient>("fixture-mt", "http://127.0.0.1:1", "/translate", "",
                                                           RetryPolicy{1, std::chrono::milliseconds(1)});
    CachedTranslationClient cached(offline, BABEL_FIXTURES "/mt_cache");
    const auto records = load_corpus(BABEL_FIXTURES "/split10.jsonl");
    const auto& s = toy();
    const auto points = sweep_parameter("h", {0.5}, records, cached, s.profile, {}, s.backend, s.backend, 0);
    o.require(points.points.front().evaluated == 10, "not every record was evaluated offline");
    o.require(cached.misses() == 0 && cached.hits() == 10, "cache missed");
    o.detail << "10 records translated from cache fixtures, " << cached.misses() << " network calls";
  });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
