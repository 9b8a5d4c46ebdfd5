#include "subaudit/detectors/classifier.hpp"

#include <cmath>

#include "subaudit/core/error.hpp"

namespace subaudit {

Eigen::MatrixXd unigram_features(const SampleSet& samples) {
  const auto rows = static_cast<Eigen::Index>(samples.size());
  const auto cols = static_cast<Eigen::Index>(samples.vocab());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, cols);
  const double scale = samples.length() > 0 ? 1.0 / static_cast<double>(samples.length()) : 0.0;
  Eigen::Index r = 0;
  for (const auto& group : samples.groups()) {
    for (const auto& c : group.completions) {
      for (TokenId t : c) x(r, t) += scale;
      ++r;
    }
  }
  return x;
}

namespace {

/// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LossGradient logistic_loss(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                           const Eigen::VectorXd& weights, double bias, double l2) {
  const auto n = static_cast<double>(features.rows());
  const Eigen::VectorXd margin = (features * weights).array() + bias;
  LossGradient out;
  Eigen::VectorXd residual(margin.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < margin.size(); ++i) {
    // y log s(z) + (1 - y) log(1 - s(z)) = y z - softplus(z)
    loss += softplus(margin[i]) - labels[i] * margin[i];
    residual[i] = sigmoid(margin[i]) - labels[i];
  }
  out.loss = loss / n + 0.5 * l2 * weights.squaredNorm();
  out.grad_weights = features.transpose() * residual / n + l2 * weights;
  out.grad_bias = residual.sum() / n;
  return out;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& features, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  return ((features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

ClassifierModel classifier_train(const SampleSet& samples_a, const SampleSet& samples_b, const ClassifierHyper& hyper) {
  if (samples_a.size() < 20 || samples_b.size() < 20) {
    throw Error(ErrorCode::kInput, "classifier needs at least 20 completions per class");
  }
  if (samples_a.vocab() != samples_b.vocab()) throw Error(ErrorCode::kInput, "sample sets use different vocabularies");

  const Eigen::MatrixXd xa = unigram_features(samples_a);
  const Eigen::MatrixXd xb = unigram_features(samples_b);
  Eigen::MatrixXd raw(xa.rows() + xb.rows(), xa.cols());
  raw << xa, xb;

  ClassifierModel model;
  model.hyper = hyper;
  model.feature_mean = raw.colwise().mean().transpose();
  const Eigen::MatrixXd centered = raw.rowwise() - model.feature_mean.transpose();
  model.feature_scale = (centered.colwise().squaredNorm() / static_cast<double>(raw.rows())).cwiseSqrt().transpose();
  // Constant columns (e.g. BOS never emitted) keep unit scale.
  for (Eigen::Index i = 0; i < model.feature_scale.size(); ++i) {
    if (!(model.feature_scale[i] > 1e-12)) model.feature_scale[i] = 1.0;
  }
  const Eigen::MatrixXd x = standardize(raw, model.feature_mean, model.feature_scale);
  Eigen::VectorXd y(x.rows());
  y.head(xa.rows()).setZero();
  y.tail(xb.rows()).setOnes();

  model.weights = Eigen::VectorXd::Zero(x.cols());
  model.loss_history.reserve(hyper.iterations + 1);
  for (std::size_t it = 0; it < hyper.iterations; ++it) {
    const LossGradient lg = logistic_loss(x, y, model.weights, model.bias, hyper.l2);
    model.loss_history.push_back(lg.loss);
    model.weights -= hyper.learning_rate * lg.grad_weights;
    model.bias -= hyper.learning_rate * lg.grad_bias;
  }
  model.loss_history.push_back(logistic_loss(x, y, model.weights, model.bias, hyper.l2).loss);
  return model;
}

double balanced_accuracy(const ClassifierModel& model, const SampleSet& heldout_a, const SampleSet& heldout_b) {
  if (heldout_a.empty() || heldout_b.empty()) throw Error(ErrorCode::kInput, "held-out sets must be nonempty");
  auto class_accuracy = [&](const SampleSet& set, bool positive) {
    const Eigen::MatrixXd x = standardize(unigram_features(set), model.feature_mean, model.feature_scale);
    const Eigen::VectorXd margin = (x * model.weights).array() + model.bias;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < margin.size(); ++i) correct += ((margin[i] > 0.0) == positive) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(margin.size());
  };
  return 0.5 * (class_accuracy(heldout_a, false) + class_accuracy(heldout_b, true));
}

DetectorVerdict classifier_verdict_from_accuracy(double accuracy, double threshold) {
  DetectorVerdict v;
  v.detector = "classifier";
  v.statistic = accuracy;
  v.threshold = threshold;
  v.decision = accuracy > threshold ? Decision::kSubstitutionDetected : Decision::kHonestConsistent;
  v.note = "held-out balanced accuracy of a unigram logistic classifier";
  return v;
}

DetectorVerdict classifier_verdict(const ClassifierModel& model, const SampleSet& heldout_a,
                                   const SampleSet& heldout_b, double threshold) {
  return classifier_verdict_from_accuracy(balanced_accuracy(model, heldout_a, heldout_b), threshold);
}

}  // namespace subaudit
