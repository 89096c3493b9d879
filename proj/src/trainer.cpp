#include "cloneforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cloneforge {

void TrainConfig::validate() const {
  if (n_pos < 1 || n_unl < 1 || batch_pos < 1 || batch_unl < 1) {
    throw std::invalid_argument("train: set and batch sizes must be positive");
  }
  if (n_pos % batch_pos != 0 || n_unl % batch_unl != 0) {
    throw std::invalid_argument("train: batch sizes must divide the set sizes");
  }
  if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
  if (!(lr > 0)) throw std::invalid_argument("train: learning rate must be positive");
  if (weight_decay < 0) throw std::invalid_argument("train: weight decay must be non-negative");
  if (loss.lambda_var < 0) throw std::invalid_argument("train: lambda_var must be non-negative");
  augment.validate();
}

TrainStreams TrainStreams::from_seed(std::uint64_t seed) {
  return {Rng::derive_seed(seed, "encoder-init"), Rng::derive_seed(seed, "train-clones"),
          Rng::derive_seed(seed, "unlabeled"), Rng::derive_seed(seed, "shuffle")};
}

std::vector<std::size_t> sample_unlabeled_indices(std::size_t corpus_size, std::size_t anchor_id,
                                                  std::size_t count, Rng& rng) {
  if (anchor_id >= corpus_size) throw std::out_of_range("sample_unlabeled: anchor outside corpus");
  if (count > corpus_size - 1) {
    throw std::invalid_argument("sample_unlabeled: corpus of " + std::to_string(corpus_size) +
                                " images cannot supply " + std::to_string(count) +
                                " unlabeled samples besides the anchor");
  }
  std::vector<std::size_t> pool;
  pool.reserve(corpus_size - 1);
  for (std::size_t i = 0; i < corpus_size; ++i)
    if (i != anchor_id) pool.push_back(i);
  // Partial Fisher-Yates: the first `count` slots end up a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

Tensor sample_unlabeled(const Corpus& corpus, std::size_t anchor_id, std::size_t count, Rng& rng) {
  const auto ids = sample_unlabeled_indices(corpus.size(), anchor_id, count, rng);
  return corpus.gather(ids);
}

TrainingSets build_training_sets(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config) {
  config.validate();
  const TrainStreams streams = TrainStreams::from_seed(config.seed);
  AugmentConfig aug = config.augment;
  aug.seed = streams.train_clones;
  TrainingSets sets;
  sets.positives = make_clones(corpus.get(anchor_id), config.n_pos, aug);
  Rng unl_rng(streams.unlabeled);
  sets.unlabeled_ids = sample_unlabeled_indices(corpus.size(), anchor_id, static_cast<std::size_t>(config.n_unl), unl_rng);
  sets.unlabeled = corpus.gather(sets.unlabeled_ids);
  return sets;
}

namespace {

void copy_rows(const Tensor& src, std::span<const std::size_t> rows, Tensor& dst, std::size_t dst_offset) {
  const std::size_t row = static_cast<std::size_t>(src.numel() / src.dim(0));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                dst.data.begin() + static_cast<std::ptrdiff_t>((dst_offset + i) * row));
  }
}

}  // namespace

AnchorModel train_anchor(const Corpus& corpus, std::size_t anchor_id, const TrainConfig& config,
                         const StepCallback& on_step) {
  if (anchor_id >= corpus.size()) {
    throw std::out_of_range("train_anchor: anchor " + std::to_string(anchor_id) + " outside corpus");
  }
  const TrainingSets sets = build_training_sets(corpus, anchor_id, config);
  const TrainStreams streams = TrainStreams::from_seed(config.seed);
  EncoderConfig enc_config = config.encoder;
  enc_config.seed = streams.encoder_init;
  AnchorModel model{anchor_id, CloneEncoder(enc_config), 0.0f, 0.0f, 0.0f, {}, {}};
  CloneEncoder& encoder = model.encoder;

  Rng shuffle_rng(streams.shuffle);
  std::vector<std::size_t> pos_order(static_cast<std::size_t>(config.n_pos));
  std::vector<std::size_t> unl_order(static_cast<std::size_t>(config.n_unl));
  std::iota(pos_order.begin(), pos_order.end(), 0);
  std::iota(unl_order.begin(), unl_order.end(), 0);

  const auto bp = static_cast<std::size_t>(config.batch_pos);
  const auto bu = static_cast<std::size_t>(config.batch_unl);
  const std::size_t unl_batches = unl_order.size() / bu;
  const int total = config.total_steps();
  AdamOptions adam;
  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;

  Tensor batch({static_cast<std::int64_t>(bp + bu), kImageChannels, kImageSide, kImageSide});
  CloneEncoder::Activations trace;
  PULossGradient<float> grad;
  float last_mu = 0.0f;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(pos_order);
    shuffle_rng.shuffle(unl_order);
    for (int s = 0; s < config.steps_per_epoch(); ++s, ++step) {
      const auto su = static_cast<std::size_t>(s) % unl_batches;
      copy_rows(sets.positives, std::span(pos_order).subspan(s * bp, bp), batch, 0);
      copy_rows(sets.unlabeled, std::span(unl_order).subspan(su * bu, bu), batch, bp);

      // Positives and unlabeled share one forward pass; rows are independent.
      encoder.forward(batch, trace);
      const Tensor norms = l2_norm_rows_forward(trace.embedding);
      const std::span<const float> all(norms.data);
      const float margin = encoder.margin();
      const PULossValue loss = pu_loss(all.subspan(0, bp), all.subspan(bp, bu), margin, config.loss, &grad);
      if (!std::isfinite(loss.total)) {
        throw NumericalError("non-finite loss at training step " + std::to_string(step) + " (anchor " +
                             std::to_string(anchor_id) + ")");
      }

      Tensor grad_norms({static_cast<std::int64_t>(bp + bu)});
      std::copy(grad.d_pos.begin(), grad.d_pos.end(), grad_norms.data.begin());
      std::copy(grad.d_unl.begin(), grad.d_unl.end(), grad_norms.data.begin() + static_cast<std::ptrdiff_t>(bp));
      encoder.backward(trace, l2_norm_rows_backward(trace.embedding, norms, grad_norms));
      encoder.accumulate_margin_grad(grad.d_margin);
      auto params = encoder.trainable_parameters();
      adam_step<float>(params, adam);

      last_mu = loss.mu;
      model.train_loss_trace.push_back(loss);
      model.train_margin_trace.push_back(margin);
      if (on_step) on_step(step + 1, total, loss);
    }
  }

  if (config.mu_from_all_positives) {
    const auto pos_norms = batched_norms(encoder, sets.positives);
    last_mu = compute_mu<float>(pos_norms);
  }
  model.mu = last_mu;
  model.m = encoder.margin();
  model.tau = model.mu + model.m;
  if (!std::isfinite(model.tau)) throw NumericalError("non-finite operating point after training");
  return model;
}

std::vector<float> batched_norms(const CloneEncoder& encoder, const Tensor& images, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batched_norms: batch size must be positive");
  const auto n = static_cast<std::size_t>(images.dim(0));
  std::vector<float> norms;
  norms.reserve(n);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Tensor chunk({static_cast<std::int64_t>(count), kImageChannels, kImageSide, kImageSide});
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(start * kImageSize), count * kImageSize,
                chunk.data.begin());
    const Tensor out = encoder.latent_norms(chunk);
    norms.insert(norms.end(), out.data.begin(), out.data.end());
  }
  return norms;
}

namespace {

ScoreTable table_from_norms(std::vector<float> norms, float tau) {
  ScoreTable table;
  table.tau = tau;
  table.scores.reserve(norms.size());
  table.is_clone.reserve(norms.size());
  for (float n : norms) {
    if (!std::isfinite(n)) throw NumericalError("non-finite latent norm while scoring");
    table.scores.push_back(-n);
    table.is_clone.push_back(decision(n, tau) ? 1 : 0);
  }
  table.norms = std::move(norms);
  return table;
}

}  // namespace

ScoreTable score_images(const AnchorModel& model, const Tensor& images, std::size_t batch_size) {
  return table_from_norms(batched_norms(model.encoder, images, batch_size), model.tau);
}

ScoreTable score_corpus(const AnchorModel& model, const Corpus& corpus, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("score_corpus: batch size must be positive");
  std::vector<float> norms;
  norms.reserve(corpus.size());
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, corpus.size() - start);
    ids.resize(count);
    std::iota(ids.begin(), ids.end(), start);
    const Tensor out = model.encoder.latent_norms(corpus.gather(ids));
    norms.insert(norms.end(), out.data.begin(), out.data.end());
  }
  return table_from_norms(std::move(norms), model.tau);
}

std::vector<std::size_t> top_k(std::span<const float> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

std::size_t least_similar(std::span<const float> scores) {
  if (scores.empty()) throw std::invalid_argument("least_similar: no scores");
  return static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
}

void save_anchor_model(const std::filesystem::path& path, const AnchorModel& model) {
  save_encoder(path, model.encoder, model.operating_point());
}

AnchorModel load_anchor_model(const std::filesystem::path& path, std::size_t anchor_id) {
  LoadedEncoder loaded = load_encoder(path);
  if (!loaded.operating_point) {
    throw std::runtime_error(path.string() + ": model file carries no operating point");
  }
  const OperatingPoint op = *loaded.operating_point;
  return AnchorModel{anchor_id, std::move(loaded.encoder), op.mu, op.m, op.tau, {}, {}};
}

std::string loss_trace_csv(const AnchorModel& model) {
  std::ostringstream os;
  os.precision(9);
  os << "step,consistency,variance,hinge,total,mu,m\n";
  for (std::size_t i = 0; i < model.train_loss_trace.size(); ++i) {
    const auto& l = model.train_loss_trace[i];
    const float m = i < model.train_margin_trace.size() ? model.train_margin_trace[i] : model.m;
    os << i + 1 << ',' << l.consistency << ',' << l.variance << ',' << l.hinge << ',' << l.total << ','
       << l.mu << ',' << m << '\n';
  }
  return os.str();
}

}  // namespace cloneforge
