#include "doctest.h"

#include "cloneforge/report.hpp"
#include "test_support.hpp"

using namespace cloneforge;

namespace {

TrialMetrics fake_trial(std::size_t anchor, double f1) {
  TrialMetrics t;
  t.anchor_id = anchor;
  t.precision = 1.0;
  t.recall = 0.5;
  t.f1 = f1;
  t.auroc = 0.9;
  t.auprc = 0.8;
  t.f1_best = 0.95;
  t.mu = 1.25;
  t.m = 0.5;
  t.tau = 1.75;
  t.confusion = {5, 0, 5, 10};
  t.calibration = calibration_sweep({{-1.0, -2.0}, {-3.0}}, 1.5);
  t.train_seconds = 123.0;
  return t;
}

BenchmarkReport fake_report() {
  BenchmarkReport r;
  r.seed = 9;
  r.variant = "pu_l2";
  r.anchors = {3, 8};
  r.trials = {fake_trial(3, 0.6), fake_trial(8, 0.7)};
  r.mean = aggregate(r.trials);
  r.mu_stats = describe({1.25, 1.25});
  r.m_stats = describe({0.5, 0.5});
  r.train_seconds = 246.0;
  return r;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("number formatting is short and locale-free") {
    CHECK(fmt_num(0.5) == "0.5");
    CHECK(fmt_num(1.0) == "1");
    CHECK(fmt_num(1e-4) == "0.0001");
    CHECK(fmt_num(0.1 + 0.2) == "0.3");
    CHECK(fmt_num(-2.25) == "-2.25");
  }

  TEST_CASE("train config JSON round trip") {
    TrainConfig c;
    c.n_pos = 64;
    c.epochs = 3;
    c.lr = 5e-4;
    c.weight_decay = 1e-4;
    c.encoder.embed_dim = 64;
    c.encoder.margin_mode = MarginMode::fixed;
    c.encoder.fixed_margin = 0.5f;
    c.augment.rot_deg = 5;
    c.augment.scale_min = 0.8;
    c.loss.lambda_var = 0.1;
    c.mu_from_all_positives = true;
    c.seed = 77;
    const Json j = train_config_to_json(c);
    CHECK(j["encoder"]["margin_mode"] == "fixed");
    CHECK(j["augment"]["scale_range"] == Json::array({0.8, 1.1}));
    CHECK(j["loss"]["lambda_var"] == 0.1);
    const TrainConfig back = train_config_from_json(j);
    CHECK(train_config_to_json(back) == j);
  }

  TEST_CASE("partial configs keep defaults; unknown keys and bad values are rejected") {
    const TrainConfig c = train_config_from_json(Json::parse(R"({"epochs": 2, "encoder": {"embed_dim": 64}})"));
    CHECK(c.epochs == 2);
    CHECK(c.encoder.embed_dim == 64);
    CHECK(c.n_pos == 128);
    CHECK(c.augment.rot_deg == 20.0);
    CHECK_THROWS_AS(train_config_from_json(Json::parse(R"({"epoch": 2})")), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json(Json::parse(R"({"augment": {"blur": 1}})")), std::invalid_argument);
    CHECK_THROWS(train_config_from_json(Json::parse(R"({"batch_pos": 33})")));
    CHECK_THROWS(train_config_from_json(Json::parse(R"({"encoder": {"margin_mode": "sometimes"}})")));
  }

  TEST_CASE("trial spec round trip") {
    TrialSpec s;
    s.anchor_id = 12;
    s.n_test_neg = 500;
    s.variant = Variant::svdd;
    s.train.epochs = 4;
    const TrialSpec back = trial_spec_from_json(trial_spec_to_json(s));
    CHECK(back.anchor_id == 12);
    CHECK(back.n_test_neg == 500);
    CHECK(back.variant == Variant::svdd);
    CHECK(back.train.epochs == 4);
  }

  TEST_CASE("benchmark JSON carries results, no timings, and the published figures") {
    const std::string text = benchmark_json(fake_report());
    CHECK(text.back() == '\n');
    const Json j = Json::parse(text);
    CHECK(j["seed"] == 9);
    CHECK(j["n_anchors"] == 2);
    CHECK(j["mean"]["f1"].get<double>() == doctest::Approx(0.65));
    CHECK(j["trials"].size() == 2);
    CHECK(j["trials"][0]["calibration"].size() == 21);
    Json measured = j;
    measured.erase("published_reference");  // quoted reference timings are constants
    CHECK(measured.dump().find("seconds") == std::string::npos);
    CHECK(j["published_reference"]["cifar10"]["pu_l2"]["f1"] == 96.37);
    CHECK(benchmark_json(fake_report()) == text);
    const Json timings = benchmark_timings(fake_report());
    CHECK(timings["train_seconds_total"] == 246.0);
  }

  TEST_CASE("published reference values") {
    const Json p = published_reference();
    const auto& c = p["cifar10"];
    CHECK(c["pu_l2"]["precision"] == 99.19);
    CHECK(c["pu_l2"]["recall"] == 94.60);
    CHECK(c["pu_l2"]["auroc"] == 97.97);
    CHECK(c["pu_l2"]["auprc"] == 96.66);
    CHECK(c["byol"]["f1"] == 95.09);
    CHECK(c["simclr"]["f1"] == 94.71);
    CHECK(c["moco"]["f1"] == 94.75);
    CHECK(c["svdd"]["f1"] == 92.32);
    const auto& a = p["atticpot"];
    CHECK(a["pu_l2"]["precision"] == 86.89);
    CHECK(a["pu_l2"]["recall"] == 96.28);
    CHECK(a["pu_l2"]["f1"] == 90.79);
    CHECK(a["pu_l2"]["auroc"] == 98.99);
    CHECK(a["pu_l2"]["auprc"] == 98.61);
    CHECK(a["svdd"]["f1"] == 83.09);
    CHECK(a["svdd"]["auroc"] == 82.41);
    CHECK(a["svdd"]["auprc"] == 78.69);
    CHECK(p["margin"]["m_mean"] == 1.296);
    CHECK(p["margin"]["m_std"] == 2.5e-3);
    CHECK(p["throughput_seconds"]["cpu_score_1e4"] == 3.12);
    CHECK(p["throughput_seconds"]["topk_k20"] == 0.084);
  }

  TEST_CASE("benchmark CSVs") {
    const BenchmarkReport r = fake_report();
    const std::string csv = benchmark_csv(r);
    CHECK(csv.rfind("anchor,precision,recall,f1,auroc,auprc,f1_best,mu,m,tau,tp,fp,fn,tn,negative_overlap\n", 0) == 0);
    CHECK(csv.find("\n3,1,0.5,0.6,0.9,0.8,0.95,1.25,0.5,1.75,5,0,5,10,0\n") != std::string::npos);
    CHECK(csv.find("\nmean,1,0.5,0.65,") != std::string::npos);

    const std::string cal = calibration_csv(r);
    CHECK(cal.rfind("anchor,delta,precision,recall,f1\n", 0) == 0);
    CHECK(std::count(cal.begin(), cal.end(), '\n') == 1 + 3 * 21);
    CHECK(cal.find("\nmean,-0.5,") != std::string::npos);

    CHECK(mu_m_csv(r) == "anchor,mu,m,tau\n3,1.25,0.5,1.75\n8,1.25,0.5,1.75\n");
  }

  TEST_CASE("ablation table") {
    auto rows = ablation_rows();
    for (auto& row : rows) {
      row.auroc = 0.9;
      row.auprc = 0.8;
      row.f1_best = 0.85;
      if (row.variant != Variant::pu_cosine) row.f1_op = 0.7;
    }
    const std::string csv = ablation_csv(rows);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "Variant,d,lambda_var,m,WD,F1_op,AUROC,AUPRC,F1_best");
    std::getline(is, line);
    CHECK(line == "\"L2 + learned m\",128,0.1,learned,0,0.7,0.9,0.8,0.85");
    std::getline(is, line);
    CHECK(line == "\"L2 + fixed m\",64,0,0.5,0,0.7,0.9,0.8,0.85");
    std::getline(is, line);
    CHECK(line == "\"L2 + fixed m + WD\",128,0.1,0.5,0.0001,0.7,0.9,0.8,0.85");
    std::getline(is, line);
    CHECK(line == "\"L2 + learned m + lambda_var\",64,0.1,learned,0,0.7,0.9,0.8,0.85");
    std::getline(is, line);
    CHECK(line == "\"Cosine to centroid (best-F1)\",128,0.1,0.5,0.0001,--,0.9,0.8,0.85");
    const Json j = Json::parse(ablation_json(rows));
    CHECK(j["rows"][4]["f1_op"].is_null());
    CHECK(j["rows"][0]["m"] == "learned");
  }

  TEST_CASE("run manifest round trip") {
    testsupport::TempDir dir;
    RunManifest m;
    m.command = "bench";
    m.config = {{"flags", {{"anchors", 5}}}};
    m.seed = 42;
    m.corpus_checksum = "abc";
    m.tool_version = tool_version();
    m.started_at = utc_timestamp();
    m.outputs = {"benchmark.json"};
    write_run_manifest(dir.path(), m);
    const RunManifest back = run_manifest_from_json(Json::parse(read_text_file(dir / kManifestName)));
    CHECK(back.command == "bench");
    CHECK(back.seed == 42);
    CHECK(back.config == m.config);
    CHECK(back.outputs == m.outputs);
  }

  TEST_CASE("UTC timestamps") {
    const std::string s = utc_timestamp();
    CHECK(s.size() == 20);
    CHECK(s[10] == 'T');
    CHECK(s.back() == 'Z');
    const std::string ms = utc_timestamp(true);
    CHECK(ms.size() == 24);
    CHECK(ms[19] == '.');
  }
}
