#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cloneforge/augment.hpp"
#include "cloneforge/corpus.hpp"
#include "cloneforge/encoder.hpp"
#include "cloneforge/errors.hpp"
#include "cloneforge/pu_objective.hpp"
#include "cloneforge/rng.hpp"

namespace cloneforge {

struct TrainConfig {
  int n_pos = 128;
  int n_unl = 128;
  int batch_pos = 32;
  int batch_unl = 32;
  int epochs = 10;
  double lr = 1e-3;
  double weight_decay = 0.0;
  EncoderConfig encoder;
  AugmentConfig augment;
  PULossConfig loss;
  std::uint64_t seed = 0;
  /// Take mu for the operating point from every training positive instead of
  /// the last batch.
  bool mu_from_all_positives = false;

  void validate() const;
  int steps_per_epoch() const { return n_pos / batch_pos; }
  int total_steps() const { return epochs * steps_per_epoch(); }
};

/// Streams a training run draws from, all derived from TrainConfig::seed.
struct TrainStreams {
  std::uint64_t encoder_init;
  std::uint64_t train_clones;
  std::uint64_t unlabeled;
  std::uint64_t shuffle;

  static TrainStreams from_seed(std::uint64_t seed);
};

struct AnchorModel {
  std::size_t anchor_id = 0;
  CloneEncoder encoder;
  float mu = 0.0f;
  float m = 0.0f;
  float tau = 0.0f;
  std::vector<PULossValue> train_loss_trace;
  std::vector<float> train_margin_trace;  // m used by each step's loss

  OperatingPoint operating_point() const { return {mu, m, tau}; }
};

struct ScoreTable {
  std::vector<float> norms;
  std::vector<float> scores;  // -norm
  std::vector<std::uint8_t> is_clone;
  float tau = 0.0f;

  std::size_t size() const { return scores.size(); }
};

/// Indices drawn uniformly without replacement from [0, corpus_size) \ {anchor}.
std::vector<std::size_t> sample_unlabeled_indices(std::size_t corpus_size, std::size_t anchor_id,
                                                  std::size_t count, Rng& rng);
Tensor sample_unlabeled(const Corpus& corpus, std::size_t anchor_id, std::size_t count, Rng& rng);

/// Positives and unlabeled images for one anchor, before any training.
struct TrainingSets {
  Tensor positives;
  Tensor unlabeled;
  std::vector<std::size_t> unlabeled_ids;
};

TrainingSets build_training_sets(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config);

using StepCallback = std::function<void(int step, int total, const PULossValue& loss)>;

AnchorModel train_anchor(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config,
                         const StepCallback& on_step = {});

/// Latent norms for a batch of images, evaluated in chunks of `batch_size`.
std::vector<float> batched_norms(const CloneEncoder& encoder, const Tensor& images,
                                 std::size_t batch_size = 256);
ScoreTable score_images(const AnchorModel& model, const Tensor& images, std::size_t batch_size = 256);
ScoreTable score_corpus(const AnchorModel& model, const Corpus& corpus, std::size_t batch_size = 256);

/// Indices of the k highest scores, descending, ties broken by index ascending.
std::vector<std::size_t> top_k(std::span<const float> scores, std::size_t k);
/// Index of the lowest score; the smallest index wins ties.
std::size_t least_similar(std::span<const float> scores);

void save_anchor_model(const std::filesystem::path& path, const AnchorModel& model);
AnchorModel load_anchor_model(const std::filesystem::path& path, std::size_t anchor_id);

/// step,consistency,variance,hinge,total,mu,m
std::string loss_trace_csv(const AnchorModel& model);

}  // namespace cloneforge
