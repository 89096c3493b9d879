#pragma once

#include <cstddef>
#include <vector>

namespace cloneforge {

/// Scores s(x) (larger = more clone-like) split by ground truth.
struct LabeledScores {
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct PRF1 {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct CalibrationRow {
  double delta = 0.0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// A sample is predicted a clone iff s >= -tau.
Confusion confusion_at(const LabeledScores& scores, double tau);

/// Precision, recall and F1 = 2PR/(P+R); each is 0 when its denominator is 0.
PRF1 prf1(std::size_t tp, std::size_t fp, std::size_t fn);
inline PRF1 prf1(const Confusion& c) { return prf1(c.tp, c.fp, c.fn); }

/// Mann-Whitney AUROC; tied pairs count one half.
double auroc(const LabeledScores& scores);

/// Area under the precision-recall curve. Thresholds run over the distinct
/// observed scores in descending order; the curve starts at
/// (recall 0, precision at the highest threshold) and is integrated with the
/// trapezoid rule over recall.
double auprc(const LabeledScores& scores);

/// Best F1 over every threshold at an observed score.
double best_f1(const LabeledScores& scores);

/// 21 evenly spaced offsets in [-0.5, 0.5].
std::vector<double> default_delta_grid();

/// Confusion-based P/R/F1 at tau + delta for each delta.
std::vector<CalibrationRow> calibration_sweep(const LabeledScores& scores, double tau,
                                              const std::vector<double>& deltas = default_delta_grid());

}  // namespace cloneforge
