#include <set>
#include <stdexcept>

#include "doctest.h"

#include "cloneforge/trainer.hpp"
#include "test_support.hpp"

using namespace cloneforge;

namespace {

const Corpus& shared_corpus() {
  static const Corpus c = testsupport::synthetic_corpus(300, 21);
  return c;
}

TrainConfig small_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.n_pos = 32;
  c.n_unl = 32;
  c.batch_pos = 8;
  c.batch_unl = 8;
  c.epochs = 2;
  c.encoder.embed_dim = 32;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("defaults: 128/128 images, batches of 32, 10 epochs, 40 steps") {
    const TrainConfig c;
    CHECK(c.n_pos == 128);
    CHECK(c.n_unl == 128);
    CHECK(c.batch_pos == 32);
    CHECK(c.batch_unl == 32);
    CHECK(c.epochs == 10);
    CHECK(c.lr == 1e-3);
    CHECK(c.weight_decay == 0.0);
    CHECK(c.loss.lambda_var == 0.0);
    CHECK(c.steps_per_epoch() == 4);
    CHECK(c.total_steps() == 40);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.batch_pos = 30;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.lr = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }

  TEST_CASE("unlabeled sampling: forced complement, anchor excluded, seeded") {
    Rng a(3);
    auto idx = sample_unlabeled_indices(10, 0, 9, a);
    std::sort(idx.begin(), idx.end());
    CHECK(idx == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    for (int t = 0; t < 20; ++t) {
      Rng r(100 + t);
      const auto v = sample_unlabeled_indices(50, 7, 20, r);
      CHECK(std::set<std::size_t>(v.begin(), v.end()).size() == 20);
      CHECK(std::find(v.begin(), v.end(), 7) == v.end());
    }
    Rng b(5), c(5);
    CHECK(sample_unlabeled_indices(50, 7, 20, b) == sample_unlabeled_indices(50, 7, 20, c));
    Rng d(1);
    CHECK_THROWS(sample_unlabeled_indices(10, 0, 10, d));
  }

  TEST_CASE("default training run: 40 steps, tau = mu + m exactly, positive margin") {
    const AnchorModel m = train_anchor(shared_corpus(), 5, TrainConfig{});
    CHECK(m.train_loss_trace.size() == 40);
    CHECK(m.tau == m.mu + m.m);
    CHECK(m.m > 0.f);
    CHECK(m.mu == m.train_loss_trace.back().mu);
    CHECK(m.m == m.encoder.margin());
    for (const auto& l : m.train_loss_trace) {
      CHECK(std::abs(l.total - (l.consistency + l.hinge)) <= 1e-6f * std::max(1.f, l.total));
      CHECK(l.consistency >= 0.f);
      CHECK(l.hinge >= 0.f);
    }
  }

  TEST_CASE("same seed gives identical models to the last bit") {
    const AnchorModel a = train_anchor(shared_corpus(), 3, small_config(8));
    const AnchorModel b = train_anchor(shared_corpus(), 3, small_config(8));
    CHECK(a.tau == b.tau);
    CHECK(a.encoder.fc_weight.value.data == b.encoder.fc_weight.value.data);
    const AnchorModel c = train_anchor(shared_corpus(), 3, small_config(9));
    CHECK(a.tau != c.tau);
  }

  TEST_CASE("progress callback sees every step") {
    std::vector<int> steps;
    train_anchor(shared_corpus(), 2, small_config(), [&](int step, int total, const PULossValue&) {
      CHECK(total == 8);
      steps.push_back(step);
    });
    CHECK(steps == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
  }

  TEST_CASE("fixed margin never moves") {
    TrainConfig c = small_config();
    c.encoder.margin_mode = MarginMode::fixed;
    c.encoder.fixed_margin = 0.5f;
    const AnchorModel m = train_anchor(shared_corpus(), 4, c);
    CHECK(m.m == 0.5f);
    CHECK(m.encoder.raw_margin.value.data[0] == 0.f);
    for (float v : m.train_margin_trace) CHECK(v == 0.5f);
  }

  TEST_CASE("learned margin moves with the hinge gradient") {
    const AnchorModel m = train_anchor(shared_corpus(), 4, small_config());
    CHECK(m.encoder.raw_margin.value.data[0] != 0.f);
  }

  TEST_CASE("mu over all positives on request") {
    TrainConfig c = small_config();
    c.mu_from_all_positives = true;
    const AnchorModel m = train_anchor(shared_corpus(), 4, c);
    const TrainingSets sets = build_training_sets(shared_corpus(), 4, c);
    const auto norms = batched_norms(m.encoder, sets.positives);
    CHECK(m.mu == compute_mu<float>(norms));
  }

  TEST_CASE("training sets are built from the documented streams") {
    const TrainConfig c = small_config(12);
    const TrainingSets a = build_training_sets(shared_corpus(), 9, c);
    CHECK(a.positives.shape == Shape{32, 3, 32, 32});
    CHECK(a.unlabeled.shape == Shape{32, 3, 32, 32});
    CHECK(std::find(a.unlabeled_ids.begin(), a.unlabeled_ids.end(), 9) == a.unlabeled_ids.end());
    const TrainStreams s = TrainStreams::from_seed(12);
    AugmentConfig aug = c.augment;
    aug.seed = s.train_clones;
    CHECK(make_clones(shared_corpus().get(9), 32, aug).data == a.positives.data);
    Rng r(s.unlabeled);
    CHECK(sample_unlabeled_indices(shared_corpus().size(), 9, 32, r) == a.unlabeled_ids);
  }

  TEST_CASE("scoring: one row per image, pure, decision at tau") {
    const AnchorModel m = train_anchor(shared_corpus(), 6, small_config());
    const ScoreTable t = score_corpus(m, shared_corpus(), 64);
    REQUIRE(t.size() == shared_corpus().size());
    const ScoreTable again = score_corpus(m, shared_corpus(), 7);
    CHECK(t.scores == again.scores);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t.scores[i] == -t.norms[i]);
      CHECK(t.norms[i] >= 0.f);
      CHECK(bool(t.is_clone[i]) == decision(t.norms[i], m.tau));
    }
    CHECK(t.tau == m.tau);
  }

  TEST_CASE("top-k: descending, ties by index, and least similar") {
    const std::vector<float> s{0.5f, 0.9f, 0.5f, -1.f, 0.9f, 0.1f};
    CHECK(top_k(s, 3) == std::vector<std::size_t>{1, 4, 0});
    CHECK(top_k(s, 10).size() == 6);
    CHECK(top_k(s, 0).empty());
    CHECK(least_similar(s) == 3);
    const std::vector<float> tie{0.f, 0.f};
    CHECK(least_similar(tie) == 0);
    Rng rng(1);
    std::vector<float> big(10000);
    for (float& v : big) v = static_cast<float>(rng.uniform());
    const auto top = top_k(big, 20);
    REQUIRE(top.size() == 20);
    for (std::size_t i = 1; i < 20; ++i) CHECK(big[top[i - 1]] >= big[top[i]]);
    std::vector<float> sorted = big;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    CHECK(big[top[19]] == sorted[19]);
  }

  TEST_CASE("anchor model file round trip and loss trace CSV") {
    testsupport::TempDir dir;
    const AnchorModel m = train_anchor(shared_corpus(), 7, small_config());
    save_anchor_model(dir / "m.cfe", m);
    const AnchorModel back = load_anchor_model(dir / "m.cfe", 7);
    CHECK(back.tau == m.tau);
    CHECK(back.mu == m.mu);
    CHECK(back.m == m.m);
    CHECK(score_corpus(back, shared_corpus()).scores == score_corpus(m, shared_corpus()).scores);
    save_encoder(dir / "bare.cfe", m.encoder);
    CHECK_THROWS(load_anchor_model(dir / "bare.cfe", 7));

    const std::string csv = loss_trace_csv(m);
    CHECK(csv.rfind("step,consistency,variance,hinge,total,mu,m\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  }

  TEST_CASE("out-of-range anchor") {
    CHECK_THROWS_AS(train_anchor(shared_corpus(), 300, small_config()), std::out_of_range);
  }
}
