#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cloneforge/report.hpp"
#include "cloneforge/trainer.hpp"

namespace cloneforge {

struct ServiceConfig {
  /// Holds models/ and decisions.jsonl; created if missing.
  std::filesystem::path state_dir = "cloneforge-state";
  /// Defaults for POST /anchors/{id}/train; the request may override any field.
  TrainConfig train;
  /// Held-out clones per anchor behind the stats endpoint.
  int n_stat_pos = 1000;
  int histogram_bins = 32;
  int thumbnail_scale = 4;
};

/// Status code plus body, independent of the HTTP library.
struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  Json json() const { return Json::parse(body); }
};

enum class JobState { queued, running, done, failed };
std::string job_state_name(JobState s);

/// Everything a finished job leaves behind for the read endpoints.
struct AnchorResult {
  AnchorModel model;
  ScoreTable table;                  // every corpus image
  std::vector<float> clone_norms;    // held-out clones of the anchor
  std::vector<CalibrationRow> calibration;
  std::filesystem::path model_path;
  std::uint64_t seed = 0;
};

struct TrainJob {
  std::string job_id;
  std::size_t anchor_id = 0;
  std::uint64_t seed = 0;
  Json config;  // full effective TrainConfig
  JobState state = JobState::queued;
  int step = 0, total = 0;
  std::string error;
  std::shared_ptr<const AnchorResult> result;
};

/// Backend of the curator workflow. Handlers are safe to call from many
/// threads; training runs on a single FIFO worker; decision-log appends go
/// through one writer.
class CuratorService {
 public:
  CuratorService(std::shared_ptr<const Corpus> corpus, ServiceConfig config);
  ~CuratorService();
  CuratorService(const CuratorService&) = delete;
  CuratorService& operator=(const CuratorService&) = delete;

  // Path parameters arrive as raw strings so parsing errors map to HTTP codes.
  Response post_train(const std::string& anchor, const std::string& body);
  Response get_job(const std::string& job_id) const;
  Response get_candidates(const std::string& anchor, const std::optional<std::string>& k,
                          const std::optional<std::string>& delta) const;
  Response post_decision(const std::string& anchor, const std::string& body);
  Response get_decisions(const std::string& anchor) const;
  Response get_stats(const std::string& anchor) const;
  Response get_corpus(const std::optional<std::string>& offset, const std::optional<std::string>& limit) const;
  Response get_image(const std::string& id) const;

  /// Blocks until the job queue is empty and the worker idle, or the timeout passes.
  bool wait_idle(std::chrono::milliseconds timeout) const;
  std::filesystem::path decision_log_path() const { return config_.state_dir / "decisions.jsonl"; }
  const Corpus& corpus() const { return *corpus_; }

 private:
  void worker_loop();
  void run_job(const std::string& job_id);
  std::shared_ptr<const AnchorResult> finish_model(AnchorModel model, const TrainConfig& cfg,
                                                   const std::filesystem::path& path) const;
  void restore_models();
  void replay_decisions();
  std::shared_ptr<const AnchorResult> trained(std::size_t anchor) const;
  std::optional<std::size_t> parse_anchor(const std::string& text) const;
  Json job_json(const TrainJob& job) const;

  std::shared_ptr<const Corpus> corpus_;
  ServiceConfig config_;

  mutable std::mutex mutex_;
  mutable std::condition_variable idle_cv_;
  std::condition_variable work_cv_;
  std::map<std::string, TrainJob> jobs_;
  std::map<std::size_t, std::string> active_job_;  // anchor -> latest finished job
  std::deque<std::string> queue_;
  bool busy_ = false;
  bool stopping_ = false;

  std::mutex log_mutex_;
  std::ofstream log_;
  std::vector<Json> decisions_;  // guarded by mutex_

  std::thread worker_;
};

/// Thin HTTP layer over CuratorService.
class HttpFrontend {
 public:
  explicit HttpFrontend(CuratorService& service);
  ~HttpFrontend();

  /// Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cloneforge
