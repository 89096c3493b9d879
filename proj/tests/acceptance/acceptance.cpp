// Acceptance runner: one PASS/FAIL line per acceptance criterion, nonzero exit
// if any fails. Uses the real CIFAR-10 batches when CIFAR10_DIR is set and
// the procedural CIFAR-format proxy otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "cloneforge/harness.hpp"
#include "cloneforge/report.hpp"
#include "cloneforge/synthetic.hpp"
#include "gradcheck.hpp"
#include "metric_oracles.hpp"
#include "test_support.hpp"

using namespace cloneforge;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCorpusSize = 10000;
constexpr std::uint64_t kSeed = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++g_failures;
  std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Corpus head(const Corpus& c, std::size_t n) {
  const auto px = c.pixels().subspan(0, n * kImageSize);
  std::vector<std::string> ids(c.ids().begin(), c.ids().begin() + static_cast<std::ptrdiff_t>(n));
  CorpusManifest m;
  m.format = c.manifest().format;
  return Corpus(std::vector<float>(px.begin(), px.end()), std::move(ids), std::move(m));
}

struct Data {
  std::string store;      // benchmark corpus, ingested through the CLI
  std::string source;     // human-readable provenance line
  std::vector<fs::path> throughput_files;
};

Data prepare_data(const fs::path& work) {
  Data d;
  d.store = (work / "corpus.cfs").string();
  if (const char* dir = std::getenv("CIFAR10_DIR"); dir && *dir) {
    const auto batches = find_cifar_batches(dir);
    if (batches.empty()) throw std::runtime_error(std::string("no CIFAR-10 batches under ") + dir);
    fs::path target = batches.back();
    for (const auto& b : batches) {
      if (b.filename() == "test_batch.bin") target = b;
    }
    if (cli::run({"ingest", "--cifar", target.string(), "--out", d.store}) != cli::kOk) {
      throw std::runtime_error("ingest of " + target.string() + " failed");
    }
    d.source = "CIFAR-10 (" + target.string() + ")";
    // Two 10^4-record batches are enough for the scaling check.
    d.throughput_files.assign(batches.begin(), batches.begin() + std::min<std::ptrdiff_t>(2, std::ssize(batches)));
  } else {
    const auto bin = work / "proxy.bin";
    if (cli::run({"synth", "--out", bin.string(), "--count", std::to_string(kCorpusSize), "--seed", "0"}) !=
            cli::kOk ||
        cli::run({"ingest", "--cifar", bin.string(), "--out", d.store}) != cli::kOk) {
      throw std::runtime_error("could not build the proxy corpus");
    }
    d.source = "synthetic CIFAR-format proxy (CIFAR10_DIR not set; " + std::to_string(kCorpusSize) +
               " procedural images, seed 0)";
  }
  return d;
}

Outcome gradient_correctness() {
  const auto summaries = gradcheck::check_all(20, 2024);
  double worst = 0;
  std::string detail;
  bool ok = true;
  for (const auto& s : summaries) {
    worst = std::max(worst, s.max_rel_error);
    ok = ok && s.instances >= 20 && s.max_rel_error < 1e-3;
    detail += s.op + "=" + sci(s.max_rel_error) + " ";
  }
  return {ok, "max rel error " + sci(worst) + " < 1e-3 (h=1e-3, >=20 instances each; " + detail + ")"};
}

Outcome metric_oracles() {
  Rng rng(77);
  double auroc_err = 0, auprc_err = 0;
  for (int i = 0; i < 100; ++i) {
    const LabeledScores s = oracle::random_scores(rng);
    auroc_err = std::max(auroc_err, std::abs(auroc(s) - oracle::auroc(s)));
    auprc_err = std::max(auprc_err, std::abs(auprc(s) - oracle::auprc(s)));
  }
  const PRF1 none = prf1(0, 0, 0), no_tp = prf1(0, 3, 4), no_pred = prf1(0, 0, 5), perfect = prf1(5, 0, 0);
  const bool conventions = none.precision == 0 && none.recall == 0 && none.f1 == 0 && no_tp.f1 == 0 &&
                           no_pred.precision == 0 && no_pred.recall == 0 && perfect.f1 == 1.0;
  const bool ok = auroc_err <= 1e-12 && auprc_err <= 1e-9 && conventions;
  return {ok, "100 tied score sets: |auroc-oracle| " + sci(auroc_err) + " <= 1e-12, |auprc-oracle| " +
                  sci(auprc_err) + " <= 1e-9, prf1 degenerate conventions " + (conventions ? "hold" : "violated")};
}

Outcome separable_sanity() {
  const Corpus c = testsupport::separable_corpus(400);
  TrialSpec spec;
  spec.anchor_id = 0;
  spec.n_test_pos = 300;
  spec.n_test_neg = 300;
  const TrialMetrics t = run_trial(c, spec);
  const bool ok = t.f1 == 1.0 && t.auroc == 1.0 && t.auprc == 1.0;
  return {ok, "F1 " + num(t.f1, 6) + ", AUROC " + num(t.auroc, 6) + ", AUPRC " + num(t.auprc, 6) + " (all must be 1)"};
}

double mean_f1_op(const std::vector<TrialMetrics>& trials) {
  double s = 0;
  for (const auto& t : trials) s += t.f1;
  return s / static_cast<double>(trials.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cloneforge acceptance criteria"};
  std::string work_dir;
  int jobs = 1;
  app.add_option("--work-dir", work_dir, "Scratch directory for corpora and CLI runs")->required();
  app.add_option("--jobs", jobs, "Parallel anchor trials for the benchmark criteria")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  const Data data = prepare_data(work);
  const Corpus corpus = load_store(data.store);
  std::printf("data: %s, %zu images, checksum %s\n", data.source.c_str(), corpus.size(), corpus.checksum().c_str());
  std::fflush(stdout);

  report("gradient-correctness", [] {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = gradient_correctness();
    const double s = seconds_since(t0);
    o.pass = o.pass && s < 60;
    o.detail += ", runtime " + num(s, 1) + " s < 60 s";
    return o;
  });
  report("metric-oracles", [] {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = metric_oracles();
    const double s = seconds_since(t0);
    o.pass = o.pass && s < 60;
    o.detail += ", runtime " + num(s, 1) + " s < 60 s";
    return o;
  });
  report("separable-corpus", [] {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = separable_sanity();
    const double s = seconds_since(t0);
    o.pass = o.pass && s < 60;
    o.detail += ", runtime " + num(s, 1) + " s < 60 s";
    return o;
  });

  // One 25-anchor default-config run backs the benchmark, margin and
  // calibration criteria and supplies the PU side of the SVDD pairing.
  TrialSpec base;
  BenchmarkReport bench;
  double bench_seconds = 0;
  report("desk-benchmark", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    bench = run_benchmark(corpus, 25, base, jobs, kSeed);
    bench_seconds = seconds_since(t0);
    const auto& a = bench.mean;
    const bool ok = a.f1 >= 0.90 && a.auroc >= 0.95 && a.precision >= 0.92;
    return Outcome{ok, "25 anchors: mean F1 " + num(a.f1) + " >= 0.90, AUROC " + num(a.auroc) +
                           " >= 0.95, precision " + num(a.precision) + " >= 0.92 (recall " + num(a.recall) +
                           ", AUPRC " + num(a.auprc) + ")"};
  });

  report("ablation-ordering", [&] {
    const auto rows = run_ablation_grid(corpus, 20, base, jobs, kSeed);
    const AblationRow* learned = nullptr;
    const AblationRow* fixed = nullptr;
    const AblationRow* cosine = nullptr;
    for (const auto& r : rows) {
      if (r.variant == Variant::pu_cosine) cosine = &r;
      if (r.variant == Variant::pu_l2 && r.fixed_margin && r.weight_decay == 0.0) fixed = &r;
      if (r.variant == Variant::pu_l2 && !r.fixed_margin && r.label == "L2 + learned m") learned = &r;
    }
    if (!learned || !fixed || !cosine) return Outcome{false, "ablation grid is missing a configuration"};
    const bool a = fixed->f1_best >= cosine->f1_best;
    const bool b = *fixed->f1_op >= *learned->f1_op - 0.02;
    std::string table;
    for (const auto& r : rows) {
      table += "; " + r.label + " F1_op " + (r.f1_op ? num(*r.f1_op) : std::string("--")) + " F1_best " +
               num(r.f1_best);
    }
    return Outcome{a && b, "20 anchors: (a) fixed-m F1_best " + num(fixed->f1_best) + " >= cosine F1_best " +
                               num(cosine->f1_best) + (a ? "" : " [violated]") + "; (b) fixed-m F1_op " +
                               num(*fixed->f1_op) + " >= learned-m F1_op " + num(*learned->f1_op) + " - 0.02" +
                               (b ? "" : " [violated]") + table};
  });

  report("margin-stability", [&] {
    if (bench.trials.size() < 20) return Outcome{false, "desk benchmark did not complete"};
    const bool ok = bench.m_stats.stddev <= 0.05 && bench.m_stats.mean >= 0.5 && bench.m_stats.mean <= 2.5;
    return Outcome{ok, std::to_string(bench.trials.size()) + " anchors, learned m, d=128: sigma_m " +
                           sci(bench.m_stats.stddev) + " <= 0.05, mean m " + num(bench.m_stats.mean) +
                           " in [0.5, 2.5] (mu " + num(bench.mu_stats.mean) + " +- " + num(bench.mu_stats.stddev) +
                           ")"};
  });

  report("calibration-monotonicity", [&] {
    if (bench.trials.empty()) return Outcome{false, "desk benchmark did not complete"};
    std::size_t precision_bad = 0, recall_bad = 0;
    double worst_rise = 0;  // largest step-to-step precision increase
    std::string offenders;
    for (const auto& t : bench.trials) {
      bool p_ok = true, r_ok = true;
      for (std::size_t i = 1; i < t.calibration.size(); ++i) {
        const double rise = t.calibration[i].precision - t.calibration[i - 1].precision;
        worst_rise = std::max(worst_rise, rise);
        p_ok = p_ok && rise <= 0;
        r_ok = r_ok && t.calibration[i].recall >= t.calibration[i - 1].recall;
      }
      precision_bad += !p_ok;
      recall_bad += !r_ok;
      if (!p_ok || !r_ok) offenders += " " + std::to_string(t.anchor_id);
    }
    // Context only: the cross-anchor mean curve.
    const auto& mean = bench.mean.calibration;
    bool mean_ok = true;
    for (std::size_t i = 1; i < mean.size(); ++i) {
      mean_ok = mean_ok && mean[i].precision <= mean[i - 1].precision && mean[i].recall >= mean[i - 1].recall;
    }
    const bool ok = precision_bad == 0 && recall_bad == 0;
    return Outcome{ok, std::to_string(bench.trials.size()) + " anchors x 21 deltas: precision nonincreasing on " +
                           std::to_string(bench.trials.size() - precision_bad) + ", recall nondecreasing on " +
                           std::to_string(bench.trials.size() - recall_bad) +
                           (offenders.empty() ? "" : "; offending anchors:" + offenders) + "; largest precision rise " +
                           sci(worst_rise) + "; mean curve " + (mean_ok ? "monotone" : "not monotone")};
  });

  report("pu-beats-svdd", [&] {
    if (bench.trials.size() < 20) return Outcome{false, "desk benchmark did not complete"};
    TrialSpec svdd = base;
    svdd.variant = Variant::svdd;
    const BenchmarkReport s = run_benchmark_on(corpus, bench.anchors, svdd, jobs, kSeed);
    const double pu = mean_f1_op(bench.trials), sv = mean_f1_op(s.trials);
    std::size_t wins = 0;
    for (std::size_t i = 0; i < s.trials.size(); ++i) wins += bench.trials[i].f1 > s.trials[i].f1;
    return Outcome{pu > sv, std::to_string(s.trials.size()) + " paired anchors: mean PU F1 " + num(pu) +
                                " > mean SVDD F1 " + num(sv) + " (PU ahead on " + std::to_string(wins) + ")"};
  });

  report("throughput", [&] {
    const Corpus big = data.throughput_files.empty()
                           ? testsupport::synthetic_corpus(20000, 1)
                           : load_cifar10_bin(data.throughput_files);
    if (big.size() < 20000) return Outcome{false, "need 2e4 images, have " + std::to_string(big.size())};
    const Corpus c1 = head(big, 10000), c2 = head(big, 20000);
    const AnchorModel model = train_anchor(c1, 0, base.train);
    // Best of three damps scheduler noise on a shared machine.
    auto best = [&](const Corpus& c) {
      double s = INFINITY;
      for (int i = 0; i < 3; ++i) s = std::min(s, measure_throughput(c, model, 20).score_seconds);
      return s;
    };
    const double t1 = best(c1), t2 = best(c2);
    const bool ok = t1 <= 60.0 && t2 <= 2.5 * t1;
    return Outcome{ok, "single-thread scoring 1e4 images " + num(t1, 3) + " s <= 60 s; 2e4 images " + num(t2, 3) +
                           " s <= 2.5 x 1e4 (ratio " + num(t2 / t1, 3) + ")"};
  });

  report("determinism", [&] {
    std::vector<std::string> files = {"benchmark.json", "benchmark.csv", "mu_m.csv", "calibration.csv"};
    std::vector<std::string> dirs;
    for (const char* name : {"det-a", "det-b"}) {
      dirs.push_back((work / name).string());
      const int rc =
          cli::run({"bench", "--store", data.store, "--anchors", "5", "--seed", "0", "--out", dirs.back()});
      if (rc != cli::kOk) return Outcome{false, "bench exited with " + std::to_string(rc)};
    }
    std::string differing;
    for (const auto& f : files) {
      if (testsupport::TempDir::read_all(fs::path(dirs[0]) / f) != testsupport::TempDir::read_all(fs::path(dirs[1]) / f)) {
        differing += " " + f;
      }
    }
    return Outcome{differing.empty(), "two `bench --anchors 5 --seed 0` runs: " +
                                          (differing.empty() ? std::string("reports byte-identical (") +
                                                                   std::to_string(files.size()) + " files)"
                                                             : "differ in" + differing) +
                                          "; built without the curator UI"};
  });

  std::printf("desk benchmark wall time %.1f s\n", bench_seconds);
  std::printf("%s: %d failing criteria\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
