#include "cloneforge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_set>

namespace cloneforge {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs fn(i) for i in [0, n) on up to `parallelism` threads. Results must be
// written by index so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<double> negate(const std::vector<float>& norms) {
  std::vector<double> out(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) out[i] = -static_cast<double>(norms[i]);
  return out;
}

double mean_of(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

void fill_epoch_losses(TrialMetrics& out, const std::vector<double>& per_step, int steps_per_epoch) {
  if (per_step.empty() || steps_per_epoch <= 0) return;
  const std::size_t spe = static_cast<std::size_t>(steps_per_epoch);
  const std::size_t n = std::min(spe, per_step.size());
  out.first_epoch_loss = std::accumulate(per_step.begin(), per_step.begin() + static_cast<std::ptrdiff_t>(n), 0.0) /
                         static_cast<double>(n);
  out.last_epoch_loss = std::accumulate(per_step.end() - static_cast<std::ptrdiff_t>(n), per_step.end(), 0.0) /
                        static_cast<double>(n);
}

Tensor mean_embedding(const CloneEncoder& encoder, const Tensor& images, std::vector<float>* center_out = nullptr) {
  const Tensor emb = encoder.forward(images);
  const auto n = emb.dim(0), d = emb.dim(1);
  Tensor center({d});
  std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t k = 0; k < d; ++k) acc[k] += emb.data[r * d + k];
  for (std::int64_t k = 0; k < d; ++k) center.data[k] = static_cast<float>(acc[k] / static_cast<double>(n));
  if (center_out) center_out->assign(center.data.begin(), center.data.end());
  return center;
}

Tensor embed_batched(const CloneEncoder& encoder, const Tensor& images, std::size_t batch = 256) {
  const auto n = static_cast<std::size_t>(images.dim(0));
  Tensor out({static_cast<std::int64_t>(n), encoder.embed_dim()});
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    Tensor chunk({static_cast<std::int64_t>(count), kImageChannels, kImageSide, kImageSide});
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(start * kImageSize), count * kImageSize,
                chunk.data.begin());
    const Tensor e = encoder.forward(chunk);
    std::copy(e.data.begin(), e.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(start * encoder.embed_dim()));
  }
  return out;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::pu_l2: return "pu_l2";
    case Variant::pu_cosine: return "pu_cosine";
    case Variant::svdd: return "svdd";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "pu_l2") return Variant::pu_l2;
  if (name == "pu_cosine") return Variant::pu_cosine;
  if (name == "svdd") return Variant::svdd;
  throw std::invalid_argument("unknown variant '" + name + "' (expected pu_l2, pu_cosine or svdd)");
}

TestSets build_test_sets(const Corpus& corpus, std::size_t anchor_id, const TrialSpec& spec) {
  if (spec.n_test_pos < 1 || spec.n_test_neg < 1) throw std::invalid_argument("trial: test set sizes must be positive");
  if (corpus.size() <= static_cast<std::size_t>(spec.n_test_neg)) {
    throw std::invalid_argument("trial: corpus of " + std::to_string(corpus.size()) + " images is too small for " +
                                std::to_string(spec.n_test_neg) + " test negatives");
  }
  TestSets sets;
  AugmentConfig aug = spec.train.augment;
  aug.seed = Rng::derive_seed(spec.train.seed, "test-clones");
  sets.positives = make_clones(corpus.get(anchor_id), spec.n_test_pos, aug);
  Rng neg_rng = Rng::derive(spec.train.seed, "test-negatives");
  sets.negative_ids =
      sample_unlabeled_indices(corpus.size(), anchor_id, static_cast<std::size_t>(spec.n_test_neg), neg_rng);
  return sets;
}

std::vector<double> score_cosine_centroid(const CloneEncoder& encoder, const Tensor& positives, const Tensor& queries) {
  const Tensor centroid = mean_embedding(encoder, positives);
  double cnorm = 0.0;
  for (float v : centroid.data) cnorm += static_cast<double>(v) * v;
  cnorm = std::sqrt(cnorm);
  if (cnorm == 0.0) throw std::invalid_argument("cosine-to-centroid: centroid is the zero vector");
  const Tensor emb = embed_batched(encoder, queries);
  const auto n = emb.dim(0), d = emb.dim(1);
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) {
    double dot = 0.0, qn = 0.0;
    for (std::int64_t k = 0; k < d; ++k) {
      const double q = emb.data[r * d + k];
      dot += q * centroid.data[k];
      qn += q * q;
    }
    scores[r] = qn == 0.0 ? -1.0 : dot / (std::sqrt(qn) * cnorm);
  }
  return scores;
}

double svdd_loss(const Tensor& embeddings, const std::vector<float>& center) {
  const auto n = embeddings.dim(0), d = embeddings.dim(1);
  if (static_cast<std::int64_t>(center.size()) != d) throw std::invalid_argument("svdd_loss: centre size mismatch");
  double total = 0.0;
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t k = 0; k < d; ++k) {
      const double diff = embeddings.data[r * d + k] - center[k];
      total += diff * diff;
    }
  return total / static_cast<double>(n);
}

SvddModel train_svdd(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config) {
  if (anchor_id >= corpus.size()) throw std::out_of_range("train_svdd: anchor outside corpus");
  // Same clone set as PU under the same seed; the unlabeled pool is unused.
  const TrainingSets sets = build_training_sets(corpus, anchor_id, config);
  const TrainStreams streams = TrainStreams::from_seed(config.seed);
  EncoderConfig enc_config = config.encoder;
  enc_config.seed = streams.encoder_init;
  SvddModel model{anchor_id, CloneEncoder(enc_config), {}, {}};
  mean_embedding(model.encoder, sets.positives, &model.center);

  Rng shuffle_rng(streams.shuffle);
  std::vector<std::size_t> order(static_cast<std::size_t>(config.n_pos));
  std::iota(order.begin(), order.end(), 0);
  const auto bp = static_cast<std::size_t>(config.batch_pos);
  AdamOptions adam;
  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;
  Tensor batch({static_cast<std::int64_t>(bp), kImageChannels, kImageSide, kImageSide});
  CloneEncoder::Activations trace;
  const std::int64_t d = model.encoder.embed_dim();
  auto params = model.encoder.trainable_parameters();
  // No margin in this objective.
  params.erase(std::remove(params.begin(), params.end(), &model.encoder.raw_margin), params.end());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int s = 0; s < config.steps_per_epoch(); ++s) {
      for (std::size_t i = 0; i < bp; ++i) {
        std::copy_n(sets.positives.data.begin() + static_cast<std::ptrdiff_t>(order[s * bp + i] * kImageSize),
                    kImageSize, batch.data.begin() + static_cast<std::ptrdiff_t>(i * kImageSize));
      }
      model.encoder.forward(batch, trace);
      const double loss = svdd_loss(trace.embedding, model.center);
      if (!std::isfinite(loss)) throw NumericalError("non-finite SVDD loss at step " + std::to_string(model.loss_trace.size()));
      Tensor grad(trace.embedding.shape);
      const float scale = 2.0f / static_cast<float>(bp);
      for (std::size_t r = 0; r < bp; ++r)
        for (std::int64_t k = 0; k < d; ++k)
          grad.data[r * d + k] = scale * (trace.embedding.data[r * d + k] - model.center[k]);
      model.encoder.backward(trace, grad);
      adam_step<float>(params, adam);
      model.loss_trace.push_back(static_cast<float>(loss));
    }
  }
  return model;
}

std::vector<double> svdd_scores(const SvddModel& model, const Tensor& images) {
  const Tensor emb = embed_batched(model.encoder, images);
  const auto n = emb.dim(0), d = emb.dim(1);
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::int64_t k = 0; k < d; ++k) {
      const double diff = emb.data[r * d + k] - model.center[k];
      sq += diff * diff;
    }
    scores[r] = -std::sqrt(sq);
  }
  return scores;
}

TrialMetrics run_trial(const Corpus& corpus, const TrialSpec& spec) {
  spec.train.validate();
  if (spec.anchor_id >= corpus.size()) {
    throw std::out_of_range("trial: anchor " + std::to_string(spec.anchor_id) + " outside corpus");
  }
  const TestSets test = build_test_sets(corpus, spec.anchor_id, spec);
  const Tensor negatives = corpus.gather(test.negative_ids);

  TrialMetrics out;
  out.anchor_id = spec.anchor_id;
  out.variant = spec.variant;
  out.n_test_pos = static_cast<std::size_t>(spec.n_test_pos);
  out.n_test_neg = test.negative_ids.size();

  {
    Rng unl_rng(TrainStreams::from_seed(spec.train.seed).unlabeled);
    const auto train_unl = sample_unlabeled_indices(corpus.size(), spec.anchor_id,
                                                    static_cast<std::size_t>(spec.train.n_unl), unl_rng);
    const std::unordered_set<std::size_t> seen(train_unl.begin(), train_unl.end());
    for (auto id : test.negative_ids) out.negative_overlap += seen.count(id);
  }
  const auto& labels = corpus.manifest().labels;
  if (labels.size() == corpus.size()) {
    out.same_label_negatives = 0;
    for (auto id : test.negative_ids) out.same_label_negatives += labels[id] == labels[spec.anchor_id] ? 1 : 0;
  }

  LabeledScores scores;
  double tau = 0.0;
  auto t0 = Clock::now();
  switch (spec.variant) {
    case Variant::pu_l2: {
      const AnchorModel model = train_anchor(corpus, spec.anchor_id, spec.train);
      out.train_seconds = seconds_since(t0);
      t0 = Clock::now();
      const auto pos_norms = batched_norms(model.encoder, test.positives);
      const auto neg_norms = batched_norms(model.encoder, negatives);
      out.score_seconds = seconds_since(t0);
      scores.pos_scores = negate(pos_norms);
      scores.neg_scores = negate(neg_norms);
      out.mean_pos_norm = mean_of(pos_norms);
      out.mean_neg_norm = mean_of(neg_norms);
      out.mu = model.mu;
      out.m = model.m;
      out.tau = tau = model.tau;
      std::vector<double> losses;
      for (const auto& l : model.train_loss_trace) losses.push_back(l.total);
      fill_epoch_losses(out, losses, spec.train.steps_per_epoch());
      break;
    }
    case Variant::pu_cosine: {
      const AnchorModel model = train_anchor(corpus, spec.anchor_id, spec.train);
      out.train_seconds = seconds_since(t0);
      t0 = Clock::now();
      const Tensor train_pos = build_training_sets(corpus, spec.anchor_id, spec.train).positives;
      scores.pos_scores = score_cosine_centroid(model.encoder, train_pos, test.positives);
      scores.neg_scores = score_cosine_centroid(model.encoder, train_pos, negatives);
      out.score_seconds = seconds_since(t0);
      out.has_operating_point = false;
      out.mu = model.mu;
      out.m = model.m;
      out.tau = model.tau;
      std::vector<double> losses;
      for (const auto& l : model.train_loss_trace) losses.push_back(l.total);
      fill_epoch_losses(out, losses, spec.train.steps_per_epoch());
      break;
    }
    case Variant::svdd: {
      const SvddModel model = train_svdd(corpus, spec.anchor_id, spec.train);
      out.train_seconds = seconds_since(t0);
      t0 = Clock::now();
      scores.pos_scores = svdd_scores(model, test.positives);
      scores.neg_scores = svdd_scores(model, negatives);
      out.score_seconds = seconds_since(t0);
      // Threshold at the median score of a class-balanced slice of the test sets.
      const std::size_t half = std::min(scores.pos_scores.size(), scores.neg_scores.size());
      std::vector<double> balanced(scores.pos_scores.begin(), scores.pos_scores.begin() + static_cast<std::ptrdiff_t>(half));
      balanced.insert(balanced.end(), scores.neg_scores.begin(), scores.neg_scores.begin() + static_cast<std::ptrdiff_t>(half));
      out.tau = tau = -median_of(std::move(balanced));
      std::vector<double> losses(model.loss_trace.begin(), model.loss_trace.end());
      fill_epoch_losses(out, losses, spec.train.steps_per_epoch());
      double pos_sum = 0.0, neg_sum = 0.0;
      for (double s : scores.pos_scores) pos_sum -= s;
      for (double s : scores.neg_scores) neg_sum -= s;
      out.mean_pos_norm = pos_sum / static_cast<double>(scores.pos_scores.size());
      out.mean_neg_norm = neg_sum / static_cast<double>(scores.neg_scores.size());
      break;
    }
  }

  if (out.has_operating_point) {
    out.confusion = confusion_at(scores, tau);
    const PRF1 op = prf1(out.confusion);
    out.precision = op.precision;
    out.recall = op.recall;
    out.f1 = op.f1;
    out.calibration = calibration_sweep(scores, tau, spec.deltas);
  }
  out.auroc = auroc(scores);
  out.auprc = auprc(scores);
  out.f1_best = best_f1(scores);
  if (spec.keep_scores) out.scores = std::move(scores);
  return out;
}

DistributionStats describe(const std::vector<double>& values) {
  DistributionStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

AggregateMetrics aggregate(const std::vector<TrialMetrics>& trials) {
  AggregateMetrics a;
  if (trials.empty()) return a;
  const double n = static_cast<double>(trials.size());
  for (const auto& t : trials) {
    a.precision += t.precision;
    a.recall += t.recall;
    a.f1 += t.f1;
    a.auroc += t.auroc;
    a.auprc += t.auprc;
    a.f1_best += t.f1_best;
  }
  a.precision /= n;
  a.recall /= n;
  a.f1 /= n;
  a.auroc /= n;
  a.auprc /= n;
  a.f1_best /= n;

  const std::size_t rows = trials.front().calibration.size();
  const bool aligned = std::all_of(trials.begin(), trials.end(),
                                   [rows](const TrialMetrics& t) { return t.calibration.size() == rows; });
  if (rows > 0 && aligned) {
    a.calibration.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      a.calibration[i].delta = trials.front().calibration[i].delta;
      for (const auto& t : trials) {
        a.calibration[i].precision += t.calibration[i].precision;
        a.calibration[i].recall += t.calibration[i].recall;
        a.calibration[i].f1 += t.calibration[i].f1;
      }
      a.calibration[i].precision /= n;
      a.calibration[i].recall /= n;
      a.calibration[i].f1 /= n;
    }
  }
  return a;
}

std::vector<std::size_t> choose_anchors(std::size_t corpus_size, std::size_t n_anchors, std::uint64_t seed) {
  if (n_anchors > corpus_size) {
    throw std::invalid_argument("benchmark: " + std::to_string(n_anchors) + " anchors requested from a corpus of " +
                                std::to_string(corpus_size));
  }
  std::vector<std::size_t> pool(corpus_size);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng = Rng::derive(seed, "anchors");
  for (std::size_t i = 0; i < n_anchors; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n_anchors);
  return pool;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t anchor_id) {
  return Rng::derive_seed(seed, "trial", anchor_id);
}

BenchmarkReport run_benchmark_on(const Corpus& corpus, const std::vector<std::size_t>& anchors, const TrialSpec& base,
                                 int parallelism, std::uint64_t seed) {
  BenchmarkReport report;
  report.seed = seed;
  report.variant = variant_name(base.variant);
  report.anchors = anchors;
  report.trials.resize(anchors.size());
  parallel_for(anchors.size(), parallelism, [&](std::size_t i) {
    TrialSpec spec = base;
    spec.anchor_id = anchors[i];
    spec.train.seed = trial_seed(seed, anchors[i]);
    report.trials[i] = run_trial(corpus, spec);
  });
  report.mean = aggregate(report.trials);
  std::vector<double> mus, ms;
  for (const auto& t : report.trials) {
    mus.push_back(t.mu);
    ms.push_back(t.m);
    report.train_seconds += t.train_seconds;
    report.score_seconds += t.score_seconds;
  }
  report.mu_stats = describe(mus);
  report.m_stats = describe(ms);
  return report;
}

BenchmarkReport run_benchmark(const Corpus& corpus, std::size_t n_anchors, const TrialSpec& base, int parallelism,
                              std::uint64_t seed) {
  return run_benchmark_on(corpus, choose_anchors(corpus.size(), n_anchors, seed), base, parallelism, seed);
}

std::vector<AblationRow> ablation_rows() {
  std::vector<AblationRow> rows(5);
  rows[0] = {"L2 + learned m", 128, 0.1, std::nullopt, 0.0, Variant::pu_l2, {}, 0, 0, 0, {}};
  rows[1] = {"L2 + fixed m", 64, 0.0, 0.5, 0.0, Variant::pu_l2, {}, 0, 0, 0, {}};
  rows[2] = {"L2 + fixed m + WD", 128, 0.1, 0.5, 1e-4, Variant::pu_l2, {}, 0, 0, 0, {}};
  rows[3] = {"L2 + learned m + lambda_var", 64, 0.1, std::nullopt, 0.0, Variant::pu_l2, {}, 0, 0, 0, {}};
  rows[4] = {"Cosine to centroid (best-F1)", 128, 0.1, 0.5, 1e-4, Variant::pu_cosine, {}, 0, 0, 0, {}};
  return rows;
}

std::vector<AblationRow> run_ablation_grid(const Corpus& corpus, std::size_t n_anchors, const TrialSpec& base,
                                           int parallelism, std::uint64_t seed) {
  const auto anchors = choose_anchors(corpus.size(), n_anchors, seed);
  auto rows = ablation_rows();
  for (auto& row : rows) {
    TrialSpec spec = base;
    spec.variant = row.variant;
    spec.train.encoder.embed_dim = row.embed_dim;
    spec.train.loss.lambda_var = row.lambda_var;
    spec.train.weight_decay = row.weight_decay;
    if (row.fixed_margin) {
      spec.train.encoder.margin_mode = MarginMode::fixed;
      spec.train.encoder.fixed_margin = static_cast<float>(*row.fixed_margin);
    } else {
      spec.train.encoder.margin_mode = MarginMode::learned;
    }
    const BenchmarkReport r = run_benchmark_on(corpus, anchors, spec, parallelism, seed);
    row.trials = r.trials;
    if (row.variant != Variant::pu_cosine) row.f1_op = r.mean.f1;
    row.auroc = r.mean.auroc;
    row.auprc = r.mean.auprc;
    row.f1_best = r.mean.f1_best;
  }
  return rows;
}

Throughput measure_throughput(const Corpus& corpus, const AnchorModel& model, std::size_t k, std::size_t batch_size) {
  Throughput t;
  t.n_images = corpus.size();
  t.k = k;
  auto t0 = Clock::now();
  const ScoreTable table = score_corpus(model, corpus, batch_size);
  t.score_seconds = seconds_since(t0);
  t0 = Clock::now();
  t.top = top_k(table.scores, k);
  t.topk_seconds = seconds_since(t0);
  t.images_per_second = t.score_seconds > 0 ? static_cast<double>(t.n_images) / t.score_seconds : 0.0;
  return t;
}

Throughput measure_throughput(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config, std::size_t k,
                              std::size_t batch_size) {
  const auto t0 = Clock::now();
  const AnchorModel model = train_anchor(corpus, anchor_id, config);
  const double train_seconds = seconds_since(t0);
  Throughput t = measure_throughput(corpus, model, k, batch_size);
  t.train_seconds = train_seconds;
  return t;
}

}  // namespace cloneforge
