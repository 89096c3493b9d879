#include "cloneforge/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "cloneforge/image_codec.hpp"
#include "httplib.h"

namespace cloneforge {

namespace {

Response json_response(int status, const Json& body) { return {status, body.dump(), "application/json"}; }

Response error(int status, const std::string& message) { return json_response(status, {{"error", message}}); }

template <typename T>
std::optional<T> parse_number(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return value;
}

std::string model_stem(std::size_t anchor, std::uint64_t seed) {
  return "anchor-" + std::to_string(anchor) + "-seed-" + std::to_string(seed);
}

Json candidate_json(const Corpus& corpus, const AnchorResult& r, std::size_t id, float threshold,
                    const Json& verdict) {
  return {{"candidate_id", id},
          {"key", corpus.ids()[id]},
          {"score", r.table.scores[id]},
          {"norm", r.table.norms[id]},
          {"is_clone", decision(r.table.norms[id], threshold)},
          {"thumbnail_url", "/images/" + std::to_string(id)},
          {"decision", verdict}};
}

}  // namespace

std::string job_state_name(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

CuratorService::CuratorService(std::shared_ptr<const Corpus> corpus, ServiceConfig config)
    : corpus_(std::move(corpus)), config_(std::move(config)) {
  if (!corpus_) throw std::invalid_argument("service: no corpus");
  if (config_.histogram_bins < 1) throw std::invalid_argument("service: histogram needs at least one bin");
  config_.train.validate();
  std::filesystem::create_directories(config_.state_dir / "models");
  restore_models();
  replay_decisions();
  log_.open(decision_log_path(), std::ios::binary | std::ios::app);
  if (!log_) throw std::runtime_error("service: cannot open " + decision_log_path().string());
  worker_ = std::thread([this] { worker_loop(); });
}

CuratorService::~CuratorService() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::optional<std::size_t> CuratorService::parse_anchor(const std::string& text) const {
  const auto id = parse_number<std::size_t>(text);
  if (!id || *id >= corpus_->size()) return std::nullopt;
  return id;
}

Json CuratorService::job_json(const TrainJob& job) const {
  Json j;
  j["job_id"] = job.job_id;
  j["anchor_id"] = job.anchor_id;
  j["seed"] = job.seed;
  j["state"] = job_state_name(job.state);
  j["progress"] = {{"step", job.step}, {"total", job.total}};
  if (job.state == JobState::done && job.result) {
    const auto& m = job.result->model;
    j["result"] = {{"mu", m.mu}, {"m", m.m}, {"tau", m.tau}, {"model_path", job.result->model_path.string()}};
  }
  if (job.state == JobState::failed) j["error"] = job.error;
  return j;
}

Response CuratorService::post_train(const std::string& anchor_text, const std::string& body) {
  const auto anchor = parse_anchor(anchor_text);
  if (!anchor) return error(404, "unknown anchor '" + anchor_text + "'");

  TrainConfig cfg = config_.train;
  try {
    const Json req = body.empty() ? Json::object() : Json::parse(body);
    if (!req.is_object()) return error(400, "request body must be a JSON object");
    for (const auto& [key, _] : req.items()) {
      if (key != "seed" && key != "config") return error(400, "unknown key '" + key + "'");
    }
    if (req.contains("config")) cfg = train_config_from_json(req.at("config"), cfg);
    if (req.contains("seed")) cfg.seed = req.at("seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
  const Json effective = train_config_to_json(cfg);
  const std::string job_id = model_stem(*anchor, cfg.seed);

  std::lock_guard lock(mutex_);
  if (auto it = jobs_.find(job_id); it != jobs_.end()) {
    if (it->second.config != effective) {
      return error(409, "job " + job_id + " already exists with a different configuration");
    }
    return json_response(202, job_json(it->second));
  }
  TrainJob job;
  job.job_id = job_id;
  job.anchor_id = *anchor;
  job.seed = cfg.seed;
  job.config = effective;
  job.total = cfg.total_steps();
  const Json out = job_json(job);
  jobs_.emplace(job_id, std::move(job));
  queue_.push_back(job_id);
  work_cv_.notify_one();
  return json_response(202, out);
}

Response CuratorService::get_job(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return error(404, "unknown job '" + job_id + "'");
  return json_response(200, job_json(it->second));
}

void CuratorService::worker_loop() {
  for (;;) {
    std::string job_id;
    {
      std::unique_lock lock(mutex_);
      work_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job_id = queue_.front();
      queue_.pop_front();
      busy_ = true;
      jobs_.at(job_id).state = JobState::running;
    }
    run_job(job_id);
    {
      std::lock_guard lock(mutex_);
      busy_ = false;
    }
    idle_cv_.notify_all();
  }
}

void CuratorService::run_job(const std::string& job_id) {
  std::size_t anchor;
  TrainConfig cfg;
  {
    std::lock_guard lock(mutex_);
    const TrainJob& job = jobs_.at(job_id);
    anchor = job.anchor_id;
    cfg = train_config_from_json(job.config);
  }
  try {
    AnchorModel model = train_anchor(*corpus_, anchor, cfg, [&](int step, int total, const PULossValue&) {
      std::lock_guard lock(mutex_);
      TrainJob& job = jobs_.at(job_id);
      job.step = step;
      job.total = total;
    });
    const auto base = config_.state_dir / "models" / model_stem(anchor, cfg.seed);
    auto path = base;
    path += ".cfe";
    save_anchor_model(path, model);
    auto sidecar = base;
    sidecar += ".json";
    write_text_file(sidecar, Json{{"job_id", job_id}, {"anchor_id", anchor}, {"seed", cfg.seed},
                                  {"config", train_config_to_json(cfg)}}
                                 .dump(2) +
                                 "\n");
    auto result = finish_model(std::move(model), cfg, path);
    std::lock_guard lock(mutex_);
    TrainJob& job = jobs_.at(job_id);
    job.result = std::move(result);
    job.state = JobState::done;
    active_job_[anchor] = job_id;
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    TrainJob& job = jobs_.at(job_id);
    job.state = JobState::failed;
    job.error = e.what();
  }
}

std::shared_ptr<const AnchorResult> CuratorService::finish_model(AnchorModel model, const TrainConfig& cfg,
                                                                 const std::filesystem::path& path) const {
  ScoreTable table = score_corpus(model, *corpus_);
  // Same held-out clone stream the evaluation harness draws from.
  TrialSpec spec;
  spec.anchor_id = model.anchor_id;
  spec.n_test_pos = config_.n_stat_pos;
  spec.n_test_neg = 1;
  spec.train = cfg;
  std::vector<float> clone_norms =
      batched_norms(model.encoder, build_test_sets(*corpus_, model.anchor_id, spec).positives);

  LabeledScores scores;
  for (float n : clone_norms) scores.pos_scores.push_back(-static_cast<double>(n));
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (i != model.anchor_id) scores.neg_scores.push_back(table.scores[i]);
  }
  auto calibration = calibration_sweep(scores, model.tau);
  return std::make_shared<const AnchorResult>(AnchorResult{std::move(model), std::move(table), std::move(clone_norms),
                                                           std::move(calibration), path, cfg.seed});
}

void CuratorService::restore_models() {
  const auto dir = config_.state_dir / "models";
  std::vector<std::filesystem::path> sidecars;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") sidecars.push_back(e.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  for (const auto& sidecar : sidecars) {
    const Json meta = Json::parse(read_text_file(sidecar));
    TrainJob job;
    job.job_id = meta.at("job_id").get<std::string>();
    job.anchor_id = meta.at("anchor_id").get<std::size_t>();
    job.seed = meta.at("seed").get<std::uint64_t>();
    if (job.anchor_id >= corpus_->size()) continue;  // model for a different corpus
    const TrainConfig cfg = train_config_from_json(meta.at("config"));
    job.config = train_config_to_json(cfg);
    job.total = job.step = cfg.total_steps();
    auto path = sidecar;
    path.replace_extension(".cfe");
    job.result = finish_model(load_anchor_model(path, job.anchor_id), cfg, path);
    job.state = JobState::done;
    active_job_[job.anchor_id] = job.job_id;
    jobs_.emplace(job.job_id, std::move(job));
  }
}

void CuratorService::replay_decisions() {
  std::ifstream in(decision_log_path(), std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      decisions_.push_back(Json::parse(line));
    } catch (const Json::parse_error&) {
      // A torn final write is possible after a crash; the bytes stay in the file.
      std::fprintf(stderr, "decision log line %zu is not valid JSON; skipped\n", line_no);
    }
  }
}

std::shared_ptr<const AnchorResult> CuratorService::trained(std::size_t anchor) const {
  const auto it = active_job_.find(anchor);
  if (it == active_job_.end()) return nullptr;
  return jobs_.at(it->second).result;
}

Response CuratorService::get_candidates(const std::string& anchor_text, const std::optional<std::string>& k_text,
                                        const std::optional<std::string>& delta_text) const {
  const auto anchor = parse_anchor(anchor_text);
  if (!anchor) return error(404, "unknown anchor '" + anchor_text + "'");
  std::size_t k = 20;
  if (k_text) {
    const auto parsed = parse_number<std::size_t>(*k_text);
    if (!parsed || *parsed == 0) return error(400, "k must be a positive integer");
    k = *parsed;
  }
  double delta = 0.0;
  if (delta_text) {
    const auto parsed = parse_number<double>(*delta_text);
    if (!parsed || !std::isfinite(*parsed)) return error(400, "delta must be a number");
    delta = std::clamp(*parsed, -0.5, 0.5);
  }

  std::shared_ptr<const AnchorResult> r;
  std::map<std::size_t, Json> latest;
  {
    std::lock_guard lock(mutex_);
    r = trained(*anchor);
    if (!r) return error(409, "anchor " + anchor_text + " has no finished training job");
    for (const auto& d : decisions_) {
      if (d.value("anchor_id", std::size_t{0}) == *anchor && d.contains("candidate_id")) {
        latest[d.at("candidate_id").get<std::size_t>()] = d.at("action");
      }
    }
  }
  auto verdict = [&](std::size_t id) { return latest.count(id) ? latest.at(id) : Json(nullptr); };

  const float threshold = r->model.tau + static_cast<float>(delta);
  // The anchor itself is the query, not a candidate.
  auto top = top_k(r->table.scores, std::min(k + 1, r->table.size()));
  top.erase(std::remove(top.begin(), top.end(), *anchor), top.end());
  if (top.size() > k) top.resize(k);

  Json out;
  out["anchor_id"] = *anchor;
  out["seed"] = r->seed;
  out["tau"] = r->model.tau;
  out["delta"] = delta;
  out["threshold"] = threshold;
  out["k"] = top.size();
  out["candidates"] = Json::array();
  for (auto id : top) out["candidates"].push_back(candidate_json(*corpus_, *r, id, threshold, verdict(id)));
  const std::size_t worst = least_similar(r->table.scores);
  out["least_similar"] = candidate_json(*corpus_, *r, worst, threshold, verdict(worst));
  return json_response(200, out);
}

Response CuratorService::post_decision(const std::string& anchor_text, const std::string& body) {
  const auto anchor = parse_anchor(anchor_text);
  if (!anchor) return error(404, "unknown anchor '" + anchor_text + "'");
  Json req;
  try {
    req = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return error(400, std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "request body must be a JSON object");
  for (const auto& [key, _] : req.items()) {
    if (key != "candidate_id" && key != "action" && key != "delta" && key != "note") {
      return error(400, "unknown key '" + key + "'");
    }
  }
  if (!req.contains("action") || !req.at("action").is_string()) return error(400, "action is required");
  const auto action = req.at("action").get<std::string>();
  if (action != "accept" && action != "reject" && action != "unsure") {
    return error(400, "action must be accept, reject or unsure");
  }
  if (!req.contains("candidate_id") || !req.at("candidate_id").is_number_unsigned()) {
    return error(400, "candidate_id must be a non-negative integer");
  }
  const auto candidate = req.at("candidate_id").get<std::size_t>();
  if (candidate >= corpus_->size()) return error(404, "unknown candidate " + std::to_string(candidate));
  double delta = 0.0;
  if (req.contains("delta")) {
    if (!req.at("delta").is_number()) return error(400, "delta must be a number");
    delta = std::clamp(req.at("delta").get<double>(), -0.5, 0.5);
  }
  std::string note;
  if (req.contains("note")) {
    if (!req.at("note").is_string()) return error(400, "note must be a string");
    note = req.at("note").get<std::string>();
  }

  std::shared_ptr<const AnchorResult> r;
  {
    std::lock_guard lock(mutex_);
    r = trained(*anchor);
  }
  if (!r) return error(409, "anchor " + anchor_text + " has no finished training job");
  const float threshold = r->model.tau + static_cast<float>(delta);

  Json record;
  record["anchor_id"] = *anchor;
  record["candidate_id"] = candidate;
  record["candidate_key"] = corpus_->ids()[candidate];
  record["action"] = action;
  record["score"] = r->table.scores[candidate];
  record["tau"] = r->model.tau;
  record["delta"] = delta;
  record["is_clone"] = decision(r->table.norms[candidate], threshold);
  record["seed"] = r->seed;
  record["note"] = note;
  {
    std::lock_guard log_lock(log_mutex_);
    record["timestamp"] = utc_timestamp(true);
    log_ << record.dump() << '\n';
    log_.flush();
    if (!log_) return error(500, "failed to append to the decision log");
    std::lock_guard lock(mutex_);
    decisions_.push_back(record);
  }
  return json_response(201, record);
}

Response CuratorService::get_decisions(const std::string& anchor_text) const {
  const auto anchor = parse_anchor(anchor_text);
  if (!anchor) return error(404, "unknown anchor '" + anchor_text + "'");
  Json out = Json::array();
  std::lock_guard lock(mutex_);
  for (const auto& d : decisions_) {
    if (d.value("anchor_id", std::numeric_limits<std::size_t>::max()) == *anchor) out.push_back(d);
  }
  return json_response(200, {{"anchor_id", *anchor}, {"decisions", out}});
}

Response CuratorService::get_stats(const std::string& anchor_text) const {
  const auto anchor = parse_anchor(anchor_text);
  if (!anchor) return error(404, "unknown anchor '" + anchor_text + "'");
  std::shared_ptr<const AnchorResult> r;
  {
    std::lock_guard lock(mutex_);
    r = trained(*anchor);
  }
  if (!r) return error(409, "anchor " + anchor_text + " has no finished training job");

  const auto bins = static_cast<std::size_t>(config_.histogram_bins);
  float top = 0.0f;
  for (float n : r->clone_norms) top = std::max(top, n);
  for (float n : r->table.norms) top = std::max(top, n);
  const double hi = top > 0.0f ? static_cast<double>(top) : 1.0;
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = hi * static_cast<double>(i) / static_cast<double>(bins);
  auto histogram = [&](const std::vector<float>& values) {
    std::vector<std::size_t> counts(bins, 0);
    for (float v : values) {
      // Bins are [e_i, e_{i+1}); the last one also takes the maximum.
      auto b = static_cast<std::size_t>(static_cast<double>(v) / hi * static_cast<double>(bins));
      counts[std::min(b, bins - 1)] += 1;
    }
    return counts;
  };

  Json out;
  out["anchor_id"] = *anchor;
  out["seed"] = r->seed;
  out["mu"] = r->model.mu;
  out["m"] = r->model.m;
  out["tau"] = r->model.tau;
  out["histogram"] = {{"bin_edges", edges},
                      {"positive_counts", histogram(r->clone_norms)},
                      {"corpus_counts", histogram(r->table.norms)}};
  out["n_positive"] = r->clone_norms.size();
  out["n_corpus"] = r->table.size();
  out["calibration"] = calibration_to_json(r->calibration);
  return json_response(200, out);
}

Response CuratorService::get_corpus(const std::optional<std::string>& offset_text,
                                    const std::optional<std::string>& limit_text) const {
  std::size_t offset = 0, limit = 50;
  if (offset_text) {
    const auto v = parse_number<std::size_t>(*offset_text);
    if (!v) return error(400, "offset must be a non-negative integer");
    offset = *v;
  }
  if (limit_text) {
    const auto v = parse_number<std::size_t>(*limit_text);
    if (!v || *v == 0 || *v > 1000) return error(400, "limit must be an integer in [1, 1000]");
    limit = *v;
  }
  const auto& labels = corpus_->manifest().labels;
  Json items = Json::array();
  for (std::size_t i = offset; i < std::min(corpus_->size(), offset + limit); ++i) {
    Json item{{"index", i}, {"key", corpus_->ids()[i]}, {"thumbnail_url", "/images/" + std::to_string(i)}};
    if (labels.size() == corpus_->size()) item["label"] = labels[i];
    items.push_back(std::move(item));
  }
  return json_response(200, {{"total", corpus_->size()}, {"offset", offset}, {"limit", limit}, {"items", items},
                             {"checksum", corpus_->checksum()}});
}

Response CuratorService::get_image(const std::string& id_text) const {
  const auto id = parse_anchor(id_text);
  if (!id) return error(404, "unknown image '" + id_text + "'");
  const RgbImage img =
      planar_to_rgb(corpus_->image(*id).data(), kImageSide, kImageSide, config_.thumbnail_scale);
  const auto png = encode_png(img);
  return {200, std::string(png.begin(), png.end()), "image/png"};
}

bool CuratorService::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty() && !busy_; });
}

struct HttpFrontend::Impl {
  CuratorService& service;
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

}  // namespace

HttpFrontend::HttpFrontend(CuratorService& service) : impl_(new Impl{service, {}}) {
  auto& srv = impl_->server;
  CuratorService& svc = impl_->service;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Post(R"(/anchors/([^/]+)/train)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.post_train(req.matches[1], req.body));
  });
  srv.Get(R"(/jobs/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_job(req.matches[1]));
  });
  srv.Get(R"(/anchors/([^/]+)/candidates)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_candidates(req.matches[1], query(req, "k"), query(req, "delta")));
  });
  srv.Post(R"(/anchors/([^/]+)/decisions)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.post_decision(req.matches[1], req.body));
  });
  srv.Get(R"(/anchors/([^/]+)/decisions)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_decisions(req.matches[1]));
  });
  srv.Get(R"(/anchors/([^/]+)/stats)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_stats(req.matches[1]));
  });
  srv.Get("/corpus", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_corpus(query(req, "offset"), query(req, "limit")));
  });
  srv.Get(R"(/images/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_image(req.matches[1]));
  });
  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpFrontend::listen() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace cloneforge
