#include "cloneforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloneforge {

namespace {

void require_ranked(const LabeledScores& s, const char* who) {
  if (s.pos_scores.empty() || s.neg_scores.empty()) {
    throw std::invalid_argument(std::string(who) + ": positive and negative scores must be non-empty");
  }
}

struct Tagged {
  double score;
  bool positive;
};

std::vector<Tagged> sorted_descending(const LabeledScores& s) {
  std::vector<Tagged> all;
  all.reserve(s.pos_scores.size() + s.neg_scores.size());
  for (double v : s.pos_scores) all.push_back({v, true});
  for (double v : s.neg_scores) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.score > b.score; });
  return all;
}

// Cumulative (tp, fp) after admitting every sample with score >= each
// distinct threshold, highest threshold first.
std::vector<std::pair<std::size_t, std::size_t>> threshold_counts(const std::vector<Tagged>& sorted) {
  std::vector<std::pair<std::size_t, std::size_t>> counts;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == t) {
      (sorted[i].positive ? tp : fp) += 1;
      ++i;
    }
    counts.emplace_back(tp, fp);
  }
  return counts;
}

}  // namespace

Confusion confusion_at(const LabeledScores& scores, double tau) {
  Confusion c;
  for (double s : scores.pos_scores) (s >= -tau ? c.tp : c.fn) += 1;
  for (double s : scores.neg_scores) (s >= -tau ? c.fp : c.tn) += 1;
  return c;
}

PRF1 prf1(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF1 r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double auroc(const LabeledScores& scores) {
  require_ranked(scores, "auroc");
  // Rank-sum form: walk ascending, giving each tie block its midrank.
  std::vector<Tagged> all = sorted_descending(scores);
  std::reverse(all.begin(), all.end());
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t pos_in_block = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      pos_in_block += all[j].positive ? 1 : 0;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    pos_rank_sum += midrank * static_cast<double>(pos_in_block);
    i = j;
  }
  const double np = static_cast<double>(scores.pos_scores.size());
  const double nn = static_cast<double>(scores.neg_scores.size());
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

double auprc(const LabeledScores& scores) {
  require_ranked(scores, "auprc");
  const auto counts = threshold_counts(sorted_descending(scores));
  const double np = static_cast<double>(scores.pos_scores.size());
  auto precision = [](std::size_t tp, std::size_t fp) {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  };
  double prev_recall = 0.0;
  double prev_precision = precision(counts.front().first, counts.front().second);
  double area = 0.0;
  for (const auto& [tp, fp] : counts) {
    const double r = static_cast<double>(tp) / np;
    const double p = precision(tp, fp);
    area += (r - prev_recall) * (p + prev_precision) * 0.5;
    prev_recall = r;
    prev_precision = p;
  }
  return area;
}

double best_f1(const LabeledScores& scores) {
  require_ranked(scores, "best_f1");
  const auto counts = threshold_counts(sorted_descending(scores));
  const std::size_t np = scores.pos_scores.size();
  double best = 0.0;
  for (const auto& [tp, fp] : counts) best = std::max(best, prf1(tp, fp, np - tp).f1);
  return best;
}

std::vector<double> default_delta_grid() {
  std::vector<double> grid(21);
  for (int i = 0; i < 21; ++i) grid[static_cast<std::size_t>(i)] = -0.5 + 0.05 * i;
  return grid;
}

std::vector<CalibrationRow> calibration_sweep(const LabeledScores& scores, double tau,
                                              const std::vector<double>& deltas) {
  std::vector<CalibrationRow> rows;
  rows.reserve(deltas.size());
  for (double d : deltas) {
    const PRF1 m = prf1(confusion_at(scores, tau + d));
    rows.push_back({d, m.precision, m.recall, m.f1});
  }
  return rows;
}

}  // namespace cloneforge
