#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cloneforge/corpus.hpp"
#include "cloneforge/metrics.hpp"
#include "cloneforge/trainer.hpp"

namespace cloneforge {

enum class Variant { pu_l2, pu_cosine, svdd };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct TrialSpec {
  std::size_t anchor_id = 0;
  int n_test_pos = 1000;
  int n_test_neg = 1000;
  TrainConfig train;
  Variant variant = Variant::pu_l2;
  std::vector<double> deltas = default_delta_grid();
  /// Keep the raw test scores in the result (needed for histograms).
  bool keep_scores = false;
};

struct TrialMetrics {
  std::size_t anchor_id = 0;
  Variant variant = Variant::pu_l2;

  /// False for cosine-to-centroid, which has no learned threshold.
  bool has_operating_point = true;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double auroc = 0.0, auprc = 0.0, f1_best = 0.0;
  Confusion confusion;
  std::vector<CalibrationRow> calibration;

  double mu = 0.0, m = 0.0, tau = 0.0;
  double mean_pos_norm = 0.0, mean_neg_norm = 0.0;
  double first_epoch_loss = 0.0, last_epoch_loss = 0.0;

  std::size_t n_test_pos = 0, n_test_neg = 0;
  /// Test negatives that also appeared in the training unlabeled set.
  std::size_t negative_overlap = 0;
  /// Test negatives sharing the anchor's class label; -1 when labels are unknown.
  long same_label_negatives = -1;

  double train_seconds = 0.0, score_seconds = 0.0;
  std::optional<LabeledScores> scores;
};

/// Held-out evaluation sets for one anchor, drawn from streams separate from training.
struct TestSets {
  Tensor positives;
  std::vector<std::size_t> negative_ids;
};

TestSets build_test_sets(const Corpus& corpus, std::size_t anchor_id, const TrialSpec& spec);

TrialMetrics run_trial(const Corpus& corpus, const TrialSpec& spec);

/// Cosine similarity of each query embedding to the mean positive
/// embedding. A zero query embedding scores -1.
std::vector<double> score_cosine_centroid(const CloneEncoder& encoder, const Tensor& positives,
                                          const Tensor& queries);

struct SvddModel {
  std::size_t anchor_id = 0;
  CloneEncoder encoder;
  std::vector<float> center;
  std::vector<float> loss_trace;
};

/// Mean squared distance of the embedding rows to `center`.
double svdd_loss(const Tensor& embeddings, const std::vector<float>& center);

/// One-class baseline: centre = mean embedding of the training clones under
/// the untrained network, then minimise the mean squared distance of clone
/// embeddings to it with the same optimiser, epochs and batching as PU.
SvddModel train_svdd(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config);
/// s(x) = -|f(x) - c|
std::vector<double> svdd_scores(const SvddModel& model, const Tensor& images);

struct DistributionStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0, max = 0.0;
};

DistributionStats describe(const std::vector<double>& values);

struct AggregateMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double auroc = 0.0, auprc = 0.0, f1_best = 0.0;
  std::vector<CalibrationRow> calibration;  // per-delta mean over anchors
};

AggregateMetrics aggregate(const std::vector<TrialMetrics>& trials);

struct BenchmarkReport {
  std::uint64_t seed = 0;
  std::string variant;
  std::vector<std::size_t> anchors;
  std::vector<TrialMetrics> trials;
  AggregateMetrics mean;
  DistributionStats mu_stats, m_stats;
  double train_seconds = 0.0, score_seconds = 0.0;  // summed over trials
};

/// Anchors sampled without replacement from a stream derived from `seed`.
std::vector<std::size_t> choose_anchors(std::size_t corpus_size, std::size_t n_anchors, std::uint64_t seed);
/// Training seed for one anchor, independent of scheduling order.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t anchor_id);

BenchmarkReport run_benchmark(const Corpus& corpus, std::size_t n_anchors, const TrialSpec& base,
                              int parallelism, std::uint64_t seed);
BenchmarkReport run_benchmark_on(const Corpus& corpus, const std::vector<std::size_t>& anchors,
                                 const TrialSpec& base, int parallelism, std::uint64_t seed);

struct AblationRow {
  std::string label;
  int embed_dim = 128;
  double lambda_var = 0.0;
  std::optional<double> fixed_margin;  // nullopt = learned
  double weight_decay = 0.0;
  Variant variant = Variant::pu_l2;

  std::optional<double> f1_op;
  double auroc = 0.0, auprc = 0.0, f1_best = 0.0;
  std::vector<TrialMetrics> trials;
};

/// The five variant configurations of the ablation table, unevaluated.
std::vector<AblationRow> ablation_rows();
std::vector<AblationRow> run_ablation_grid(const Corpus& corpus, std::size_t n_anchors, const TrialSpec& base,
                                           int parallelism, std::uint64_t seed);

struct Throughput {
  std::size_t n_images = 0;
  std::size_t k = 20;
  double train_seconds = 0.0;
  double score_seconds = 0.0;
  double topk_seconds = 0.0;
  double images_per_second = 0.0;
  std::vector<std::size_t> top;
};

Throughput measure_throughput(const Corpus& corpus, const AnchorModel& model, std::size_t k = 20,
                              std::size_t batch_size = 256);
/// Trains on `anchor_id` first and records the training time too.
Throughput measure_throughput(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config,
                              std::size_t k = 20, std::size_t batch_size = 256);

}  // namespace cloneforge
