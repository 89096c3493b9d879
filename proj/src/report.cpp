#include "cloneforge/report.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cloneforge {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const Json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2) throw std::invalid_argument(std::string(key) + ": expected [min, max]");
  lo = r[0].get<double>();
  hi = r[1].get<double>();
}

Json confusion_to_json(const Confusion& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

Json stats_to_json(const DistributionStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}};
}

Json aggregate_to_json(const AggregateMetrics& a, bool has_op) {
  Json j;
  j["precision"] = has_op ? Json(a.precision) : Json(nullptr);
  j["recall"] = has_op ? Json(a.recall) : Json(nullptr);
  j["f1"] = has_op ? Json(a.f1) : Json(nullptr);
  j["auroc"] = a.auroc;
  j["auprc"] = a.auprc;
  j["f1_best"] = a.f1_best;
  j["calibration"] = calibration_to_json(a.calibration);
  return j;
}

std::string opt_num(const std::optional<double>& v) { return v ? fmt_num(*v) : "--"; }

}  // namespace

std::string fmt_num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

Json augment_config_to_json(const AugmentConfig& c) {
  return {{"rot_deg", c.rot_deg},
          {"translate_frac", c.translate_frac},
          {"scale_range", {c.scale_min, c.scale_max}},
          {"shear_deg", c.shear_deg},
          {"brightness", c.brightness},
          {"contrast", c.contrast},
          {"saturation", c.saturation},
          {"blur_kernel", c.blur_kernel},
          {"blur_sigma_range", {c.blur_sigma_min, c.blur_sigma_max}},
          {"seed", c.seed}};
}

AugmentConfig augment_config_from_json(const Json& j, AugmentConfig c) {
  check_keys(j,
             {"rot_deg", "translate_frac", "scale_range", "shear_deg", "brightness", "contrast", "saturation",
              "blur_kernel", "blur_sigma_range", "seed"},
             "augment");
  read_if(j, "rot_deg", c.rot_deg);
  read_if(j, "translate_frac", c.translate_frac);
  read_range(j, "scale_range", c.scale_min, c.scale_max);
  read_if(j, "shear_deg", c.shear_deg);
  read_if(j, "brightness", c.brightness);
  read_if(j, "contrast", c.contrast);
  read_if(j, "saturation", c.saturation);
  read_if(j, "blur_kernel", c.blur_kernel);
  read_range(j, "blur_sigma_range", c.blur_sigma_min, c.blur_sigma_max);
  read_if(j, "seed", c.seed);
  c.validate();
  return c;
}

Json encoder_config_to_json(const EncoderConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"margin_mode", c.margin_mode == MarginMode::learned ? "learned" : "fixed"},
          {"fixed_margin", c.fixed_margin}};
}

EncoderConfig encoder_config_from_json(const Json& j, EncoderConfig c) {
  check_keys(j, {"embed_dim", "margin_mode", "fixed_margin"}, "encoder");
  read_if(j, "embed_dim", c.embed_dim);
  if (j.contains("margin_mode")) {
    const auto mode = j.at("margin_mode").get<std::string>();
    if (mode == "learned") {
      c.margin_mode = MarginMode::learned;
    } else if (mode == "fixed") {
      c.margin_mode = MarginMode::fixed;
    } else {
      throw std::invalid_argument("encoder: margin_mode must be 'learned' or 'fixed'");
    }
  }
  read_if(j, "fixed_margin", c.fixed_margin);
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"n_pos", c.n_pos},
          {"n_unl", c.n_unl},
          {"batch_pos", c.batch_pos},
          {"batch_unl", c.batch_unl},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"encoder", encoder_config_to_json(c.encoder)},
          {"augment", augment_config_to_json(c.augment)},
          {"loss", {{"lambda_var", c.loss.lambda_var}}},
          {"mu_from_all_positives", c.mu_from_all_positives},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  check_keys(j,
             {"n_pos", "n_unl", "batch_pos", "batch_unl", "epochs", "lr", "weight_decay", "encoder", "augment", "loss",
              "mu_from_all_positives", "seed"},
             "train");
  read_if(j, "n_pos", c.n_pos);
  read_if(j, "n_unl", c.n_unl);
  read_if(j, "batch_pos", c.batch_pos);
  read_if(j, "batch_unl", c.batch_unl);
  read_if(j, "epochs", c.epochs);
  read_if(j, "lr", c.lr);
  read_if(j, "weight_decay", c.weight_decay);
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"), c.encoder);
  if (j.contains("augment")) c.augment = augment_config_from_json(j.at("augment"), c.augment);
  if (j.contains("loss")) {
    check_keys(j.at("loss"), {"lambda_var"}, "loss");
    read_if(j.at("loss"), "lambda_var", c.loss.lambda_var);
  }
  read_if(j, "mu_from_all_positives", c.mu_from_all_positives);
  read_if(j, "seed", c.seed);
  c.validate();
  return c;
}

Json trial_spec_to_json(const TrialSpec& s) {
  return {{"anchor_id", s.anchor_id},
          {"n_test_pos", s.n_test_pos},
          {"n_test_neg", s.n_test_neg},
          {"variant", variant_name(s.variant)},
          {"deltas", s.deltas},
          {"train", train_config_to_json(s.train)}};
}

TrialSpec trial_spec_from_json(const Json& j, TrialSpec s) {
  check_keys(j, {"anchor_id", "n_test_pos", "n_test_neg", "variant", "deltas", "train"}, "trial");
  read_if(j, "anchor_id", s.anchor_id);
  read_if(j, "n_test_pos", s.n_test_pos);
  read_if(j, "n_test_neg", s.n_test_neg);
  if (j.contains("variant")) s.variant = parse_variant(j.at("variant").get<std::string>());
  read_if(j, "deltas", s.deltas);
  if (j.contains("train")) s.train = train_config_from_json(j.at("train"), s.train);
  return s;
}

Json calibration_to_json(const std::vector<CalibrationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"delta", r.delta}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}});
  }
  return out;
}

Json trial_to_json(const TrialMetrics& t) {
  Json j;
  j["anchor_id"] = t.anchor_id;
  j["variant"] = variant_name(t.variant);
  j["precision"] = t.has_operating_point ? Json(t.precision) : Json(nullptr);
  j["recall"] = t.has_operating_point ? Json(t.recall) : Json(nullptr);
  j["f1"] = t.has_operating_point ? Json(t.f1) : Json(nullptr);
  j["auroc"] = t.auroc;
  j["auprc"] = t.auprc;
  j["f1_best"] = t.f1_best;
  j["confusion"] = t.has_operating_point ? confusion_to_json(t.confusion) : Json(nullptr);
  j["mu"] = t.mu;
  j["m"] = t.m;
  j["tau"] = t.tau;
  j["mean_pos_norm"] = t.mean_pos_norm;
  j["mean_neg_norm"] = t.mean_neg_norm;
  j["first_epoch_loss"] = t.first_epoch_loss;
  j["last_epoch_loss"] = t.last_epoch_loss;
  j["n_test_pos"] = t.n_test_pos;
  j["n_test_neg"] = t.n_test_neg;
  j["negative_overlap"] = t.negative_overlap;
  j["same_label_negatives"] = t.same_label_negatives < 0 ? Json(nullptr) : Json(t.same_label_negatives);
  j["calibration"] = calibration_to_json(t.calibration);
  return j;
}

std::string benchmark_json(const BenchmarkReport& r) {
  const bool has_op = r.trials.empty() || r.trials.front().has_operating_point;
  Json j;
  j["seed"] = r.seed;
  j["variant"] = r.variant;
  j["n_anchors"] = r.anchors.size();
  j["anchors"] = r.anchors;
  j["mean"] = aggregate_to_json(r.mean, has_op);
  j["mu_stats"] = stats_to_json(r.mu_stats);
  j["m_stats"] = stats_to_json(r.m_stats);
  j["trials"] = Json::array();
  for (const auto& t : r.trials) j["trials"].push_back(trial_to_json(t));
  j["published_reference"] = published_reference();
  return j.dump(2) + "\n";
}

std::string benchmark_csv(const BenchmarkReport& r) {
  std::ostringstream os;
  os << "anchor,precision,recall,f1,auroc,auprc,f1_best,mu,m,tau,tp,fp,fn,tn,negative_overlap\n";
  for (const auto& t : r.trials) {
    os << t.anchor_id << ',' << fmt_num(t.precision) << ',' << fmt_num(t.recall) << ',' << fmt_num(t.f1) << ','
       << fmt_num(t.auroc) << ',' << fmt_num(t.auprc) << ',' << fmt_num(t.f1_best) << ',' << fmt_num(t.mu) << ','
       << fmt_num(t.m) << ',' << fmt_num(t.tau) << ',' << t.confusion.tp << ',' << t.confusion.fp << ','
       << t.confusion.fn << ',' << t.confusion.tn << ',' << t.negative_overlap << '\n';
  }
  const auto& a = r.mean;
  os << "mean," << fmt_num(a.precision) << ',' << fmt_num(a.recall) << ',' << fmt_num(a.f1) << ','
     << fmt_num(a.auroc) << ',' << fmt_num(a.auprc) << ',' << fmt_num(a.f1_best) << ',' << fmt_num(r.mu_stats.mean)
     << ',' << fmt_num(r.m_stats.mean) << ",,,,,,\n";
  return os.str();
}

std::string calibration_csv(const BenchmarkReport& r) {
  std::ostringstream os;
  os << "anchor,delta,precision,recall,f1\n";
  auto rows = [&os](const std::string& who, const std::vector<CalibrationRow>& table) {
    for (const auto& c : table) {
      os << who << ',' << fmt_num(c.delta) << ',' << fmt_num(c.precision) << ',' << fmt_num(c.recall) << ','
         << fmt_num(c.f1) << '\n';
    }
  };
  for (const auto& t : r.trials) rows(std::to_string(t.anchor_id), t.calibration);
  rows("mean", r.mean.calibration);
  return os.str();
}

std::string mu_m_csv(const BenchmarkReport& r) {
  std::ostringstream os;
  os << "anchor,mu,m,tau\n";
  for (const auto& t : r.trials) {
    os << t.anchor_id << ',' << fmt_num(t.mu) << ',' << fmt_num(t.m) << ',' << fmt_num(t.tau) << '\n';
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "Variant,d,lambda_var,m,WD,F1_op,AUROC,AUPRC,F1_best\n";
  for (const auto& r : rows) {
    os << '"' << r.label << "\"," << r.embed_dim << ',' << fmt_num(r.lambda_var) << ','
       << (r.fixed_margin ? fmt_num(*r.fixed_margin) : std::string("learned")) << ',' << fmt_num(r.weight_decay)
       << ',' << opt_num(r.f1_op) << ',' << fmt_num(r.auroc) << ',' << fmt_num(r.auprc) << ',' << fmt_num(r.f1_best)
       << '\n';
  }
  return os.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["variant"] = r.label;
    j["scorer"] = variant_name(r.variant);
    j["d"] = r.embed_dim;
    j["lambda_var"] = r.lambda_var;
    j["m"] = r.fixed_margin ? Json(*r.fixed_margin) : Json("learned");
    j["weight_decay"] = r.weight_decay;
    j["f1_op"] = r.f1_op ? Json(*r.f1_op) : Json(nullptr);
    j["auroc"] = r.auroc;
    j["auprc"] = r.auprc;
    j["f1_best"] = r.f1_best;
    j["anchors"] = Json::array();
    for (const auto& t : r.trials) j["anchors"].push_back(t.anchor_id);
    out.push_back(std::move(j));
  }
  return Json{{"rows", out}, {"published_reference", published_reference()}}.dump(2) + "\n";
}

Json benchmark_timings(const BenchmarkReport& r) {
  Json per = Json::array();
  for (const auto& t : r.trials) {
    per.push_back({{"anchor_id", t.anchor_id}, {"train_seconds", t.train_seconds}, {"score_seconds", t.score_seconds}});
  }
  return {{"train_seconds_total", r.train_seconds}, {"score_seconds_total", r.score_seconds}, {"trials", per}};
}

Json throughput_to_json(const Throughput& t) {
  return {{"n_images", t.n_images},
          {"k", t.k},
          {"train_seconds", t.train_seconds},
          {"score_seconds", t.score_seconds},
          {"topk_seconds", t.topk_seconds},
          {"images_per_second", t.images_per_second},
          {"top", t.top}};
}

Json published_reference() {
  auto row = [](double p, double r, double f1, double auroc, double auprc) {
    return Json{{"precision", p}, {"recall", r}, {"f1", f1}, {"auroc", auroc}, {"auprc", auprc}};
  };
  Json j;
  j["note"] = "Published figures (percent) for context; not recomputed by this tool.";
  j["cifar10"] = {{"pu_l2", row(99.19, 94.60, 96.37, 97.97, 96.66)},
                  {"byol", {{"f1", 95.09}}},
                  {"simclr", {{"f1", 94.71}}},
                  {"moco", {{"f1", 94.75}}},
                  {"svdd", {{"f1", 92.32}}}};
  j["atticpot"] = {{"pu_l2", row(86.89, 96.28, 90.79, 98.99, 98.61)},
                   {"svdd", {{"f1", 83.09}, {"auroc", 82.41}, {"auprc", 78.69}}},
                   {"simclr", {{"f1", 77.34}}},
                   {"moco", {{"f1", 77.28}}},
                   {"byol", {{"f1", 77.65}}}};
  j["margin"] = {{"m_mean", 1.296}, {"m_std", 2.5e-3}};
  j["throughput_seconds"] = {{"train_10_epochs", 1.05}, {"score", 1.27}, {"topk_k20", 0.084}, {"cpu_score_1e4", 3.12}};
  return j;
}

Json run_manifest_to_json(const RunManifest& m) {
  return {{"command", m.command},     {"config", m.config},           {"seed", m.seed},
          {"corpus_checksum", m.corpus_checksum}, {"corpus_store", m.corpus_store},
          {"tool_version", m.tool_version},       {"started_at", m.started_at},
          {"finished_at", m.finished_at},         {"outputs", m.outputs}};
}

RunManifest run_manifest_from_json(const Json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.seed = j.at("seed").get<std::uint64_t>();
  read_if(j, "corpus_checksum", m.corpus_checksum);
  read_if(j, "corpus_store", m.corpus_store);
  read_if(j, "tool_version", m.tool_version);
  read_if(j, "started_at", m.started_at);
  read_if(j, "finished_at", m.finished_at);
  read_if(j, "outputs", m.outputs);
  return m;
}

void write_run_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  write_text_file(dir / kManifestName, run_manifest_to_json(m).dump(2) + "\n");
}

std::string utc_timestamp(bool millis) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::string out(buf);
  if (millis) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    char frac[8];
    std::snprintf(frac, sizeof frac, ".%03d", static_cast<int>(ms));
    out += frac;
  }
  return out + "Z";
}

std::string tool_version() { return CLONEFORGE_VERSION; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace cloneforge
