#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "cloneforge/metrics.hpp"
#include "metric_oracles.hpp"

using namespace cloneforge;

TEST_SUITE("metrics") {
  TEST_CASE("confusion hand tally with the boundary counted positive") {
    const LabeledScores s{{-1, -3}, {-2, -5}};
    const Confusion c = confusion_at(s, 2.0);
    CHECK(c.tp == 1);
    CHECK(c.fn == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 1);
  }

  TEST_CASE("confusion extremes and count identities") {
    const LabeledScores s{{-0.5, -0.7}, {-3, -4, -5}};
    const Confusion sep = confusion_at(s, 1.0);
    CHECK(sep.fp == 0);
    CHECK(sep.fn == 0);
    const Confusion none = confusion_at(s, -10.0);
    CHECK(none.tp == 0);
    CHECK(none.fp == 0);
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      const auto r = oracle::random_scores(rng);
      const Confusion c = confusion_at(r, rng.uniform(-3, 3));
      CHECK(c.tp + c.fn == r.pos_scores.size());
      CHECK(c.fp + c.tn == r.neg_scores.size());
    }
  }

  TEST_CASE("prf1 arithmetic and degenerate conventions") {
    const PRF1 r = prf1(99, 1, 5);
    CHECK(r.precision == doctest::Approx(0.99));
    CHECK(r.recall == doctest::Approx(99.0 / 104.0));
    CHECK(r.f1 == doctest::Approx(0.9706).epsilon(1e-4));
    const PRF1 z = prf1(0, 3, 4);
    CHECK(z.precision == 0.0);
    CHECK(z.recall == 0.0);
    CHECK(z.f1 == 0.0);
    const PRF1 empty = prf1(0, 0, 0);
    CHECK(empty.f1 == 0.0);
    const double p = 0.9919, rc = 0.9460;
    CHECK(2 * p * rc / (p + rc) == doctest::Approx(0.9684).epsilon(1e-4));
  }

  TEST_CASE("auroc basics") {
    CHECK(auroc({{3, 4}, {1, 2}}) == 1.0);
    CHECK(auroc({{1, 2, 2}, {1, 2, 2}}) == 0.5);
    CHECK_THROWS_AS(auroc({{}, {1}}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({{1}, {}}), std::invalid_argument);
  }

  TEST_CASE("auroc equals the pairwise oracle exactly") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
      const auto s = oracle::random_scores(rng);
      CHECK(std::abs(auroc(s) - oracle::auroc(s)) <= 1e-12);
    }
    // 50 + 50 continuous scores
    LabeledScores s;
    for (int i = 0; i < 50; ++i) {
      s.pos_scores.push_back(rng.uniform(-1, 2));
      s.neg_scores.push_back(rng.uniform(-2, 1));
    }
    CHECK(std::abs(auroc(s) - oracle::auroc(s)) <= 1e-12);
  }

  TEST_CASE("auroc is rank-invariant and antisymmetric") {
    Rng rng(3);
    for (int t = 0; t < 30; ++t) {
      auto s = oracle::random_scores(rng);
      const double a = auroc(s);
      const LabeledScores swapped{s.neg_scores, s.pos_scores};
      CHECK(a + auroc(swapped) == doctest::Approx(1.0).epsilon(1e-12));
      for (auto* v : {&s.pos_scores, &s.neg_scores})
        for (double& x : *v) x = std::exp(3 * x) - 7;
      CHECK(auroc(s) == doctest::Approx(a).epsilon(1e-12));
    }
  }

  TEST_CASE("auprc basics") {
    CHECK(auprc({{3, 4}, {1, 2}}) == doctest::Approx(1.0));
    CHECK(auprc({{1, 1, 1}, {1}}) == doctest::Approx(0.75));
    CHECK(auprc({{0.5, 0.5}, {0.5, 0.5, 0.5}}) == doctest::Approx(0.4));
    CHECK_THROWS_AS(auprc({{}, {1}}), std::invalid_argument);
  }

  TEST_CASE("auprc matches the enumerate-all-thresholds oracle") {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
      const auto s = oracle::random_scores(rng);
      CHECK(std::abs(auprc(s) - oracle::auprc(s)) <= 1e-9);
    }
  }

  TEST_CASE("best F1 matches the threshold oracle") {
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
      const auto s = oracle::random_scores(rng);
      CHECK(best_f1(s) == doctest::Approx(oracle::best_f1(s)).epsilon(1e-12));
    }
    CHECK(best_f1({{2, 3}, {0, 1}}) == 1.0);
  }

  TEST_CASE("delta grid") {
    const auto g = default_delta_grid();
    REQUIRE(g.size() == 21);
    CHECK(g.front() == -0.5);
    CHECK(g.back() == 0.5);
    CHECK(g[10] == 0.0);
    for (int i = 0; i < 21; ++i) CHECK(g[i] == doctest::Approx(-0.5 + 0.05 * i).epsilon(1e-12));
  }

  TEST_CASE("calibration sweep: delta 0 is the operating point; recall is monotone") {
    Rng rng(6);
    for (int t = 0; t < 30; ++t) {
      const auto s = oracle::random_scores(rng);
      const double tau = rng.uniform(-1, 1);
      const auto rows = calibration_sweep(s, tau);
      REQUIRE(rows.size() == 21);
      const PRF1 base = prf1(confusion_at(s, tau));
      CHECK(rows[10].precision == base.precision);
      CHECK(rows[10].recall == base.recall);
      CHECK(rows[10].f1 == base.f1);
      for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].recall >= rows[i - 1].recall);
      for (const auto& r : rows) {
        const PRF1 want = prf1(confusion_at(s, tau + r.delta));
        CHECK(r.precision == want.precision);
        CHECK(r.recall == want.recall);
      }
    }
  }

  TEST_CASE("precision in the sweep is not monotone for every score set") {
    // A negative between the top positive and a block of lower positives:
    // loosening the threshold admits the negative first (precision drops),
    // then the block (precision recovers).
    const LabeledScores s{{-0.1, -1.4, -1.4, -1.4}, {-1.0}};
    const auto rows = calibration_sweep(s, 1.0);
    CHECK(rows[0].precision == 1.0);
    CHECK(rows[10].precision == 0.5);
    CHECK(rows[20].precision == doctest::Approx(0.8));
  }
}
