#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "cloneforge/harness.hpp"
#include "cloneforge/report.hpp"
#include "cloneforge/service.hpp"
#include "cloneforge/synthetic.hpp"

namespace cloneforge::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags a --config file (or a previous run's manifest.json) may supply.
// Explicit command-line flags win over the file.
struct ExpandedArgs {
  std::vector<std::string> args;
  Json train_tree;  // null when absent
};

std::string flag_token(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

ExpandedArgs expand_config(const std::vector<std::string>& args) {
  ExpandedArgs out{args, nullptr};
  std::string config_path;
  std::set<std::string> explicit_flags;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const std::string name = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
    explicit_flags.insert(name);
    if (name == "config") {
      if (a.find('=') != std::string::npos) {
        config_path = a.substr(a.find('=') + 1);
      } else if (i + 1 < args.size()) {
        config_path = args[i + 1];
      }
    }
  }
  if (config_path.empty() || args.empty()) return out;

  Json j;
  try {
    j = Json::parse(read_text_file(config_path));
  } catch (const std::exception& e) {
    throw UsageError("--config " + config_path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("--config " + config_path + ": expected a JSON object");
  Json flags = j;
  if (j.contains("command")) {
    // A run manifest: replay its recorded flags.
    if (j.at("command") != args[0]) {
      throw UsageError("--config " + config_path + " records command '" + flag_token(j.at("command")) + "'");
    }
    flags = j.at("config").value("flags", Json::object());
    out.train_tree = j.at("config").value("train", Json(nullptr));
  } else if (j.contains("train")) {
    out.train_tree = j.at("train");
    flags.erase("train");
  }

  std::vector<std::string> injected;
  for (const auto& [key, value] : flags.items()) {
    if (key == "config" || explicit_flags.count(key)) continue;
    injected.push_back("--" + key);
    if (value.is_array()) {
      for (const auto& v : value) injected.push_back(flag_token(v));
    } else {
      injected.push_back(flag_token(value));
    }
  }
  out.args.insert(out.args.begin() + 1, injected.begin(), injected.end());
  return out;
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("CLONEFORGE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("CLONEFORGE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

Corpus open_store(const std::string& path) {
  try {
    return load_store(path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

// Options shared by the commands that train encoders.
struct TrainFlags {
  int epochs = 10;
  double lr = 1e-3;
  int embed_dim = 128;
  double lambda_var = 0.0;
  double weight_decay = 0.0;
  std::string margin = "learned";
  CLI::Option *epochs_opt{}, *lr_opt{}, *dim_opt{}, *lambda_opt{}, *wd_opt{}, *margin_opt{};

  void add_to(CLI::App* app) {
    epochs_opt = app->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    lr_opt = app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    dim_opt = app->add_option("--embed-dim", embed_dim, "Embedding size d")->check(CLI::PositiveNumber);
    lambda_opt = app->add_option("--lambda-var", lambda_var, "Variance weight")->check(CLI::NonNegativeNumber);
    wd_opt = app->add_option("--weight-decay", weight_decay, "Adam weight decay")->check(CLI::NonNegativeNumber);
    margin_opt = app->add_option("--margin", margin, "'learned' or a fixed positive margin value");
  }

  TrainConfig resolve(const Json& tree, std::uint64_t seed) const {
    TrainConfig cfg;
    if (!tree.is_null()) cfg = train_config_from_json(tree, cfg);
    auto given = [](const CLI::Option* o) { return o != nullptr && o->count() > 0; };
    if (given(epochs_opt)) cfg.epochs = epochs;
    if (given(lr_opt)) cfg.lr = lr;
    if (given(dim_opt)) cfg.encoder.embed_dim = embed_dim;
    if (given(lambda_opt)) cfg.loss.lambda_var = lambda_var;
    if (given(wd_opt)) cfg.weight_decay = weight_decay;
    if (given(margin_opt)) {
      if (margin == "learned") {
        cfg.encoder.margin_mode = MarginMode::learned;
      } else {
        double v = 0.0;
        try {
          v = std::stod(margin);
        } catch (const std::exception&) {
          throw UsageError("--margin must be 'learned' or a number, got '" + margin + "'");
        }
        if (!(v > 0)) throw UsageError("--margin must be positive");
        cfg.encoder.margin_mode = MarginMode::fixed;
        cfg.encoder.fixed_margin = static_cast<float>(v);
      }
    }
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

Json recorded_flags(const CLI::App* app, std::uint64_t seed) {
  Json flags = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      flags[name] = res.size() == 1 ? Json(res.front()) : Json(res);
    } else if (!opt->get_default_str().empty()) {
      flags[name] = opt->get_default_str();
    }
  }
  flags["seed"] = seed;
  return flags;
}

struct ManifestScope {
  RunManifest m;
  fs::path dir;

  ManifestScope(std::string command, fs::path out_dir) : dir(std::move(out_dir)) {
    m.command = std::move(command);
    m.tool_version = tool_version();
    m.started_at = utc_timestamp();
    fs::create_directories(dir);
  }
  void write(const std::string& name, const std::string& text) {
    write_text_file(dir / name, text);
    m.outputs.push_back(name);
  }
  void finish() {
    m.finished_at = utc_timestamp();
    write_run_manifest(dir, m);
  }
};

void check_anchor(const Corpus& corpus, std::size_t anchor) {
  if (anchor >= corpus.size()) {
    throw UsageError("anchor " + std::to_string(anchor) + " is outside the corpus (size " +
                     std::to_string(corpus.size()) + ")");
  }
}

void check_anchor_count(const Corpus& corpus, std::size_t n) {
  if (n < 1 || n > corpus.size()) {
    throw UsageError("--anchors must be in [1, " + std::to_string(corpus.size()) + "]");
  }
}

std::vector<std::size_t> ranked_without(const ScoreTable& table, std::size_t anchor, std::size_t k) {
  auto top = top_k(table.scores, std::min(k + 1, table.size()));
  top.erase(std::remove(top.begin(), top.end(), anchor), top.end());
  if (top.size() > k) top.resize(k);
  return top;
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

}  // namespace

int run(const std::vector<std::string>& raw_args) {
  CLI::App app{"Per-anchor positive-unlabeled clone detection", "cloneforge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());
  std::string config_path;
  std::uint64_t seed_flag = 0;
  std::string store, out_dir;
  std::size_t anchor = 0, k = 20, n_anchors = 25;
  int jobs = 1, n_test_pos = 1000, n_test_neg = 1000;
  std::string variant = "pu_l2";
  TrainFlags tf_train, tf_find, tf_bench, tf_calibrate, tf_ablate, tf_throughput, tf_serve;

  auto add_common = [&](CLI::App* sub, bool needs_store) {
    sub->add_option("--config", config_path, "JSON file supplying any flag (or a manifest.json to replay)");
    auto* seed_opt = sub->add_option("--seed", seed_flag, "Run seed (falls back to $CLONEFORGE_SEED, then 0)");
    if (needs_store) sub->add_option("--store", store, "Corpus store written by 'ingest'")->required();
    return seed_opt;
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a normalized corpus store from CIFAR-10 batches or a PPM folder");
  std::vector<std::string> cifar_paths;
  std::string image_dir, ingest_out;
  add_common(ingest, false);
  auto* cifar_opt = ingest->add_option("--cifar", cifar_paths, "CIFAR-10 .bin files or a directory holding them");
  auto* dir_opt = ingest->add_option("--dir", image_dir, "Directory of PPM images");
  cifar_opt->excludes(dir_opt);
  ingest->add_option("--out", ingest_out, "Store path (manifest goes to <store>.json)")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a procedural CIFAR-format proxy corpus");
  std::string synth_out;
  std::size_t synth_count = 10000;
  auto* synth_seed = add_common(synth, false);
  synth->add_option("--out", synth_out, "Output .bin path")->required();
  synth->add_option("--count", synth_count, "Number of images")->check(CLI::Range(std::size_t{2}, std::size_t{10000000}));

  // train
  auto* train = app.add_subcommand("train", "Train one anchor model");
  auto* train_seed = add_common(train, true);
  train->add_option("--anchor", anchor, "Anchor corpus index")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  tf_train.add_to(train);

  // find-similar
  auto* find = app.add_subcommand("find-similar", "Train on an anchor and rank the whole corpus");
  auto* find_seed = add_common(find, true);
  find->add_option("--anchor", anchor, "Anchor corpus index")->required();
  find->add_option("--k", k, "Number of ranked candidates")->capture_default_str()->check(CLI::PositiveNumber);
  find->add_option("--out", out_dir, "Output directory")->required();
  tf_find.add_to(find);

  // bench / calibrate
  auto add_bench_opts = [&](CLI::App* sub) {
    sub->add_option("--anchors", n_anchors, "Number of seeded anchors")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--jobs", jobs, "Parallel anchor trials")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--n-test-pos", n_test_pos, "Held-out clones per anchor")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--n-test-neg", n_test_neg, "Held-out corpus negatives per anchor")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "Output directory")->required();
  };
  auto* bench = app.add_subcommand("bench", "Multi-anchor benchmark");
  auto* bench_seed = add_common(bench, true);
  add_bench_opts(bench);
  bench->add_option("--variant", variant, "pu_l2, pu_cosine or svdd")->capture_default_str()
      ->check(CLI::IsMember({"pu_l2", "pu_cosine", "svdd"}));
  tf_bench.add_to(bench);

  auto* calibrate = app.add_subcommand("calibrate", "Threshold-offset sweep around the learned operating point");
  auto* calibrate_seed = add_common(calibrate, true);
  add_bench_opts(calibrate);
  tf_calibrate.add_to(calibrate);

  auto* ablate = app.add_subcommand("ablate", "Run the five-variant ablation grid");
  auto* ablate_seed = add_common(ablate, true);
  add_bench_opts(ablate);

  auto* throughput = app.add_subcommand("throughput", "Time training, corpus scoring and top-k on one thread");
  auto* throughput_seed = add_common(throughput, true);
  throughput->add_option("--anchor", anchor, "Anchor corpus index")->capture_default_str();
  throughput->add_option("--k", k, "Top-k size")->capture_default_str()->check(CLI::PositiveNumber);
  throughput->add_option("--out", out_dir, "Output directory")->required();
  tf_throughput.add_to(throughput);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP/JSON backend for the curator workflow");
  std::string host = "127.0.0.1", state_dir = "cloneforge-state";
  int port = 8080;
  auto* serve_seed = add_common(serve, true);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Bind port (0 picks a free one)")->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--state-dir", state_dir, "Models and the decision log live here")->capture_default_str();
  tf_serve.add_to(serve);

  try {
    const ExpandedArgs expanded = expand_config(raw_args);
    std::vector<std::string> reversed(expanded.args.rbegin(), expanded.args.rend());
    app.parse(reversed);
    const Json& tree = expanded.train_tree;

    if (ingest->parsed()) {
      if (cifar_paths.empty() && image_dir.empty()) throw UsageError("ingest needs --cifar or --dir");
      Corpus corpus = [&] {
        try {
          if (!image_dir.empty()) return load_image_dir(image_dir);
          std::vector<fs::path> files;
          for (const auto& p : cifar_paths) {
            if (fs::is_directory(p)) {
              const auto found = find_cifar_batches(p);
              if (found.empty()) throw std::runtime_error("no CIFAR-10 batch files in " + p);
              files.insert(files.end(), found.begin(), found.end());
            } else {
              files.emplace_back(p);
            }
          }
          return load_cifar10_bin(files);
        } catch (const std::exception& e) {
          throw DataError(std::string("ingest failed: ") + e.what());
        }
      }();
      save_store(ingest_out, corpus);
      const auto& m = corpus.manifest();
      std::cout << "ingested " << corpus.size() << " images (" << m.skipped.size() << " skipped) -> " << ingest_out
                << "\nchecksum " << corpus.checksum() << "\n";
      for (const auto& s : m.skipped) std::cout << "  skipped " << s.path << ": " << s.reason << "\n";
      return kOk;
    }

    if (synth->parsed()) {
      const auto seed = resolve_seed(synth_seed, seed_flag);
      write_synthetic_cifar(synth_out, synth_count, seed);
      std::cout << "wrote " << synth_count << " synthetic CIFAR-format records -> " << synth_out << "\n";
      return kOk;
    }

    if (train->parsed() || find->parsed()) {
      CLI::App* sub = train->parsed() ? train : find;
      const auto seed = resolve_seed(train->parsed() ? train_seed : find_seed, seed_flag);
      const TrainConfig cfg = (train->parsed() ? tf_train : tf_find).resolve(tree, seed);
      const Corpus corpus = open_store(store);
      check_anchor(corpus, anchor);
      ManifestScope scope(sub->get_name(), out_dir);
      scope.m.seed = seed;
      scope.m.corpus_checksum = corpus.checksum();
      scope.m.corpus_store = store;
      scope.m.config = {{"flags", recorded_flags(sub, seed)}, {"train", train_config_to_json(cfg)}};

      const AnchorModel model = train_anchor(corpus, anchor, cfg);
      save_anchor_model(out_dir + "/model.cfe", model);
      scope.m.outputs.push_back("model.cfe");
      std::cout << "anchor " << anchor << " (" << corpus.ids()[anchor] << "): mu=" << fmt_num(model.mu)
                << " m=" << fmt_num(model.m) << " tau=" << fmt_num(model.tau) << "\n";
      if (train->parsed()) {
        scope.write("loss_trace.csv", loss_trace_csv(model));
      } else {
        const ScoreTable table = score_corpus(model, corpus);
        std::ostringstream csv;
        csv << "rank,candidate_id,key,score,norm,is_clone\n";
        std::size_t rank = 0;
        auto row = [&](const std::string& r, std::size_t id) {
          csv << r << ',' << id << ",\"" << corpus.ids()[id] << "\"," << fmt_num(table.scores[id]) << ','
              << fmt_num(table.norms[id]) << ',' << int(table.is_clone[id]) << '\n';
        };
        for (auto id : ranked_without(table, anchor, k)) row(std::to_string(++rank), id);
        row("least", least_similar(table.scores));
        scope.write("ranking.csv", csv.str());
        std::size_t flagged = 0;
        for (std::size_t i = 0; i < table.size(); ++i) flagged += i != anchor && table.is_clone[i];
        std::cout << flagged << " of " << table.size() - 1 << " corpus images fall inside tau\n";
      }
      scope.finish();
      return kOk;
    }

    if (bench->parsed() || calibrate->parsed()) {
      CLI::App* sub = bench->parsed() ? bench : calibrate;
      const auto seed = resolve_seed(bench->parsed() ? bench_seed : calibrate_seed, seed_flag);
      TrialSpec spec;
      spec.train = (bench->parsed() ? tf_bench : tf_calibrate).resolve(tree, seed);
      spec.n_test_pos = n_test_pos;
      spec.n_test_neg = n_test_neg;
      spec.variant = bench->parsed() ? parse_variant(variant) : Variant::pu_l2;
      const Corpus corpus = open_store(store);
      check_anchor_count(corpus, n_anchors);
      if (corpus.size() <= static_cast<std::size_t>(n_test_neg)) {
        throw UsageError("--n-test-neg must be smaller than the corpus size " + std::to_string(corpus.size()));
      }
      ManifestScope scope(sub->get_name(), out_dir);
      scope.m.seed = seed;
      scope.m.corpus_checksum = corpus.checksum();
      scope.m.corpus_store = store;
      Json trial = trial_spec_to_json(spec);
      trial.erase("anchor_id");
      scope.m.config = {{"flags", recorded_flags(sub, seed)}, {"train", train_config_to_json(spec.train)},
                        {"trial", trial}};

      const BenchmarkReport report = run_benchmark(corpus, n_anchors, spec, jobs, seed);
      if (bench->parsed()) {
        scope.write("benchmark.json", benchmark_json(report));
        scope.write("benchmark.csv", benchmark_csv(report));
        scope.write("mu_m.csv", mu_m_csv(report));
      }
      scope.write("calibration.csv", calibration_csv(report));
      scope.write("timings.json", benchmark_timings(report).dump(2) + "\n");
      scope.finish();

      const auto& a = report.mean;
      std::cout << report.variant << " over " << report.trials.size() << " anchors (seed " << seed << ")\n";
      if (spec.variant != Variant::pu_cosine) {
        std::cout << "  precision " << fmt_num(a.precision) << "  recall " << fmt_num(a.recall) << "  F1 "
                  << fmt_num(a.f1) << "\n";
      }
      std::cout << "  AUROC " << fmt_num(a.auroc) << "  AUPRC " << fmt_num(a.auprc) << "  F1_best "
                << fmt_num(a.f1_best) << "\n";
      if (spec.variant != Variant::svdd) {
        std::cout << "  mu " << fmt_num(report.mu_stats.mean) << " +- " << fmt_num(report.mu_stats.stddev) << "  m "
                  << fmt_num(report.m_stats.mean) << " +- " << fmt_num(report.m_stats.stddev) << "\n";
      }
      if (calibrate->parsed()) {
        std::cout << "  delta  precision  recall  f1\n";
        for (const auto& r : a.calibration) {
          std::printf("  %+.2f  %.4f  %.4f  %.4f\n", r.delta, r.precision, r.recall, r.f1);
        }
      }
      return kOk;
    }

    if (ablate->parsed()) {
      const auto seed = resolve_seed(ablate_seed, seed_flag);
      TrialSpec spec;
      spec.train = tf_ablate.resolve(tree, seed);
      spec.n_test_pos = n_test_pos;
      spec.n_test_neg = n_test_neg;
      const Corpus corpus = open_store(store);
      check_anchor_count(corpus, n_anchors);
      ManifestScope scope("ablate", out_dir);
      scope.m.seed = seed;
      scope.m.corpus_checksum = corpus.checksum();
      scope.m.corpus_store = store;
      scope.m.config = {{"flags", recorded_flags(ablate, seed)}, {"train", train_config_to_json(spec.train)}};
      const auto rows = run_ablation_grid(corpus, n_anchors, spec, jobs, seed);
      scope.write("ablation.csv", ablation_csv(rows));
      scope.write("ablation.json", ablation_json(rows));
      scope.finish();
      std::cout << ablation_csv(rows);
      return kOk;
    }

    if (throughput->parsed()) {
      const auto seed = resolve_seed(throughput_seed, seed_flag);
      const TrainConfig cfg = tf_throughput.resolve(tree, seed);
      const Corpus corpus = open_store(store);
      check_anchor(corpus, anchor);
      ManifestScope scope("throughput", out_dir);
      scope.m.seed = seed;
      scope.m.corpus_checksum = corpus.checksum();
      scope.m.corpus_store = store;
      scope.m.config = {{"flags", recorded_flags(throughput, seed)}, {"train", train_config_to_json(cfg)}};
      const Throughput t = measure_throughput(corpus, anchor, cfg, k);
      scope.write("throughput.json", throughput_to_json(t).dump(2) + "\n");
      scope.finish();
      std::printf("train %.3f s  score %.3f s (%zu images, %.0f img/s)  top-%zu %.4f s\n", t.train_seconds,
                  t.score_seconds, t.n_images, t.images_per_second, t.k, t.topk_seconds);
      return kOk;
    }

    if (serve->parsed()) {
      const auto seed = resolve_seed(serve_seed, seed_flag);
      ServiceConfig sc;
      sc.state_dir = state_dir;
      sc.train = tf_serve.resolve(tree, seed);
      auto corpus = std::make_shared<const Corpus>(open_store(store));
      CuratorService service(corpus, sc);
      HttpFrontend http(service);
      const int bound = http.bind(host, port);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread watcher([&] {
        while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        http.stop();
      });
      std::cout << "serving " << corpus->size() << " images on http://" << host << ":" << bound << std::endl;
      http.listen();
      g_interrupted = true;
      watcher.join();
      return kOk;
    }
    return kUsageError;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace cloneforge::cli
