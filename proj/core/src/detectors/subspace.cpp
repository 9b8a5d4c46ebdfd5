#include "subaudit/detectors/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

using ojson = nlohmann::ordered_json;

SubspaceSignature subspace_fingerprint(const std::vector<Eigen::VectorXd>& vectors, LogitKind kind) {
  if (vectors.size() < 3) {
    throw Error(ErrorCode::kInsufficientSamples, "need at least 3 vectors, got " + std::to_string(vectors.size()));
  }
  const Eigen::Index v = vectors.front().size();
  const auto n = static_cast<Eigen::Index>(vectors.size());
  Eigen::MatrixXd stacked(v, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd& col = vectors[static_cast<std::size_t>(i)];
    if (col.size() != v) throw Error(ErrorCode::kInput, "vectors must share one length");
    if (!col.allFinite()) throw Error(ErrorCode::kInput, "vectors must be finite (full disclosure required)");
    stacked.col(i) = kind == LogitKind::kLogProbabilities ? (col.array() - col.mean()).matrix() : col;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::Index usable = std::min(v, n);
  if (usable < 2 || !(s[0] > 0.0)) {
    throw Error(ErrorCode::kInsufficientSamples, "no singular-value gap can be located");
  }

  const double floor = kSingularFloor * s[0];
  Eigen::Index best = -1;
  double best_gap = -1.0;
  for (Eigen::Index i = 0; i + 1 < usable; ++i) {
    if (s[i] <= floor) break;
    const double gap = std::log(s[i]) - std::log(std::max(s[i + 1], floor));
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  if (best < 0) throw Error(ErrorCode::kInsufficientSamples, "no singular-value gap can be located");

  SubspaceSignature sig;
  sig.dimension = static_cast<std::size_t>(best + 1);
  sig.basis = svd.matrixU().leftCols(best + 1);
  sig.singular_values.assign(s.data(), s.data() + s.size());
  sig.kind = kind;
  return sig;
}

std::vector<double> principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::kInput, "bases live in different ambient dimensions");
  const Eigen::Index k = std::min(a.cols(), b.cols());
  const Eigen::MatrixXd cross = a.transpose() * b;
  Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(cross);
  // Cosines descending -> angles ascending.
  Eigen::VectorXd cosines = cos_svd.singularValues().head(k);

  // Sines from the component of the smaller basis orthogonal to the other one.
  const bool a_small = a.cols() <= b.cols();
  const Eigen::MatrixXd& small = a_small ? a : b;
  const Eigen::MatrixXd& large = a_small ? b : a;
  const Eigen::MatrixXd residual = small - large * (large.transpose() * small);
  Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(residual);
  Eigen::VectorXd sines = sin_svd.singularValues();  // descending -> reverse for ascending angles
  std::vector<double> angles(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosines[i], 0.0, 1.0);
    const double s = std::clamp(sines[k - 1 - i], 0.0, 1.0);
    angles[static_cast<std::size_t>(i)] = c > std::numbers::sqrt2 / 2.0 ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

DetectorVerdict subspace_compare(const SubspaceSignature& a, const SubspaceSignature& b, double angle_threshold) {
  if (a.basis.rows() != b.basis.rows()) throw Error(ErrorCode::kInput, "signatures have different vocabularies");
  DetectorVerdict verdict;
  verdict.detector = "subspace";
  verdict.threshold = angle_threshold;
  verdict.details["dimension_a"] = static_cast<double>(a.dimension);
  verdict.details["dimension_b"] = static_cast<double>(b.dimension);
  if (a.dimension != b.dimension) {
    verdict.statistic = std::numbers::pi / 2.0;
    verdict.decision = Decision::kSubstitutionDetected;
    verdict.note = "hidden dimension differs: " + std::to_string(a.dimension) + " vs " + std::to_string(b.dimension);
    return verdict;
  }
  const std::vector<double> angles = principal_angles(a.basis, b.basis);
  verdict.statistic = angles.empty() ? 0.0 : angles.back();
  verdict.decision =
      verdict.statistic > angle_threshold ? Decision::kSubstitutionDetected : Decision::kHonestConsistent;
  verdict.note = "largest principal angle between logit subspaces";
  return verdict;
}

std::string signature_to_json(const SubspaceSignature& signature) {
  ojson j;
  j["schema"] = "subspace-signature/1";
  j["kind"] = signature.kind == LogitKind::kRawLogits ? "raw-logits" : "log-probabilities";
  j["dimension"] = signature.dimension;
  j["vocab"] = signature.basis.rows();
  j["singular_values"] = signature.singular_values;
  ojson basis = ojson::array();
  for (Eigen::Index r = 0; r < signature.basis.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < signature.basis.cols(); ++c) row.push_back(signature.basis(r, c));
    basis.push_back(std::move(row));
  }
  j["basis"] = std::move(basis);
  return j.dump() + "\n";
}

SubspaceSignature signature_from_json(std::string_view text) {
  try {
    const ojson j = ojson::parse(text);
    if (j.value("schema", std::string{}) != "subspace-signature/1") {
      throw Error(ErrorCode::kSchema, "expected schema subspace-signature/1");
    }
    SubspaceSignature sig;
    sig.kind = j.at("kind").get<std::string>() == "raw-logits" ? LogitKind::kRawLogits : LogitKind::kLogProbabilities;
    sig.dimension = j.at("dimension").get<std::size_t>();
    sig.singular_values = j.at("singular_values").get<std::vector<double>>();
    const auto rows = j.at("vocab").get<Eigen::Index>();
    const auto cols = static_cast<Eigen::Index>(sig.dimension);
    sig.basis.resize(rows, cols);
    const auto& basis = j.at("basis");
    if (static_cast<Eigen::Index>(basis.size()) != rows) throw Error(ErrorCode::kSchema, "basis row count mismatch");
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = basis[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::kSchema, "basis column mismatch");
      for (Eigen::Index c = 0; c < cols; ++c) sig.basis(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return sig;
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

}  // namespace subaudit
