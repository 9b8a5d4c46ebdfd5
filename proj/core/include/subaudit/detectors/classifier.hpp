#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "subaudit/core/report.hpp"
#include "subaudit/core/sample_set.hpp"

namespace subaudit {

struct ClassifierHyper {
  double learning_rate = 0.1;
  std::size_t iterations = 500;
  double l2 = 1e-4;
};

/// Logistic regression on standardized unigram frequencies; label 1 = second
/// source. Standardization statistics come from the training set.
struct ClassifierModel {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  Eigen::VectorXd weights;
  double bias = 0.0;
  ClassifierHyper hyper;
  /// Training loss before each update, then once after the last one.
  std::vector<double> loss_history;
};

/// One row per completion: token counts over the vocabulary divided by L.
Eigen::MatrixXd unigram_features(const SampleSet& samples);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd grad_weights;
  double grad_bias = 0.0;
};

/// Mean logistic cross-entropy plus (l2 / 2) ||w||^2 (bias unpenalized), and
/// its analytic gradient. Labels are 0/1.
LossGradient logistic_loss(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                           const Eigen::VectorXd& weights, double bias, double l2);

/// (features - mean) / scale, row-wise.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& features, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale);

/// Full-batch gradient descent from zero. Each set needs >= 20 completions.
ClassifierModel classifier_train(const SampleSet& samples_a, const SampleSet& samples_b,
                                 const ClassifierHyper& hyper = {});

/// Mean of the per-class accuracies on held-out data.
double balanced_accuracy(const ClassifierModel& model, const SampleSet& heldout_a, const SampleSet& heldout_b);

inline constexpr double kDefaultAccuracyThreshold = 0.6;

/// substitution-detected iff balanced accuracy > threshold (strict).
DetectorVerdict classifier_verdict(const ClassifierModel& model, const SampleSet& heldout_a,
                                   const SampleSet& heldout_b, double threshold = kDefaultAccuracyThreshold);
DetectorVerdict classifier_verdict_from_accuracy(double balanced_accuracy,
                                                 double threshold = kDefaultAccuracyThreshold);

}  // namespace subaudit
