#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "subaudit/core/report.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

/// Hidden-dimension estimate plus an orthonormal basis of the logit subspace.
struct SubspaceSignature {
  std::size_t dimension = 0;
  Eigen::MatrixXd basis;  ///< v x dimension, orthonormal columns
  std::vector<double> singular_values;
  LogitKind kind = LogitKind::kRawLogits;
};

/// Relative floor below which singular values are treated as numerical noise.
inline constexpr double kSingularFloor = 1e-10;

/// Estimates the logit subspace from n >= 3 full-width vectors.
///
/// Log-probability inputs are centered per vector first, which removes the
/// normalization constant. The columns form L (v x n); with singular values
/// s_1 >= s_2 >= ..., the dimension is the index i maximizing
/// log s_i - log s_{i+1} over i < min(v, n), where values under
/// kSingularFloor * s_1 are clamped to that floor. The basis holds the
/// leading left singular vectors. Throws kInsufficientSamples when no gap
/// index exists.
SubspaceSignature subspace_fingerprint(const std::vector<Eigen::VectorXd>& vectors, LogitKind kind);

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal bases with the same row count. Small angles come from sines,
/// large ones from cosines, so both ends stay accurate.
std::vector<double> principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

inline constexpr double kDefaultAngleThreshold = 0.05;

/// substitution-detected on a dimension mismatch or when the largest
/// principal angle exceeds the threshold.
DetectorVerdict subspace_compare(const SubspaceSignature& a, const SubspaceSignature& b,
                                 double angle_threshold = kDefaultAngleThreshold);

std::string signature_to_json(const SubspaceSignature& signature);
SubspaceSignature signature_from_json(std::string_view text);

}  // namespace subaudit
