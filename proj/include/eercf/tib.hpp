#pragma once

// Text-gated interaction block: parameter-free softmax attention of a text
// vector over a set of visual feature rows.

#include <Eigen/Dense>
#include <cmath>

#include "eercf/embedding_store.hpp"
#include "eercf/error.hpp"

namespace eercf {

struct TibConfig {
  double frame_temperature = 0.1;
  double patch_temperature = 0.01;

  void validate() const {
    if (!(frame_temperature > 0.0) || !(patch_temperature > 0.0) ||
        !std::isfinite(frame_temperature) || !std::isfinite(patch_temperature)) {
      throw Error(ErrorCode::InvalidParams, "TIB temperatures must be positive and finite");
    }
  }
};

/// Softmax over the dot products of each feature row with `text`, divided by
/// `temperature`. Logits are max-shifted and evaluated in double precision,
/// so temperatures as small as 1e-6 do not overflow.
template <typename DerivedF, typename DerivedT>
Eigen::VectorXd tib_weights(const Eigen::MatrixBase<DerivedF>& features,
                            const Eigen::MatrixBase<DerivedT>& text, double temperature) {
  if (features.rows() == 0) throw Error(ErrorCode::EmptyInput, "TIB over zero feature rows");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidParams, "TIB temperature must be positive and finite");
  }
  if (features.cols() != text.size()) {
    throw Error(ErrorCode::ShapeMismatch, "TIB feature and text dimensions differ");
  }
  const Eigen::VectorXd query = text.template cast<double>();
  Eigen::VectorXd logits(features.rows());
  for (Eigen::Index m = 0; m < features.rows(); ++m) {
    logits[m] = features.row(m).template cast<double>().dot(query) / temperature;
  }
  if (!logits.allFinite()) throw Error(ErrorCode::NonFinite, "TIB logits are not finite");
  Eigen::VectorXd weights = (logits.array() - logits.maxCoeff()).exp().matrix();
  weights /= weights.sum();
  return weights;
}

/// Weighted sum of feature rows, accumulated in double and returned in the
/// feature scalar type.
template <typename DerivedF>
Vector<typename DerivedF::Scalar> weighted_rows(const Eigen::MatrixBase<DerivedF>& features,
                                                const Eigen::VectorXd& weights) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(features.cols());
  for (Eigen::Index m = 0; m < features.rows(); ++m) {
    acc += weights[m] * features.row(m).transpose().template cast<double>();
  }
  return acc.template cast<typename DerivedF::Scalar>();
}

/// Text-conditioned aggregate of `features`; lies in the convex hull of the
/// rows. Not normalized.
template <typename DerivedF, typename DerivedT>
Vector<typename DerivedF::Scalar> tib_aggregate(const Eigen::MatrixBase<DerivedF>& features,
                                                const Eigen::MatrixBase<DerivedT>& text,
                                                double temperature) {
  return weighted_rows(features, tib_weights(features, text, temperature));
}

/// Frame-level text-conditioned vector (unit norm).
template <typename DerivedT>
Eigen::VectorXf text_frame_feature(const VideoRecord& video, const Eigen::MatrixBase<DerivedT>& text,
                                   const TibConfig& config) {
  return normalize(tib_aggregate(video.frames, text, config.frame_temperature));
}

/// Patch-level text-conditioned vector (unit norm). One softmax runs jointly
/// over all T * N_p' patches of the video.
template <typename DerivedT>
Eigen::VectorXf text_patch_feature(const VideoRecord& video, const Eigen::MatrixBase<DerivedT>& text,
                                   const TibConfig& config) {
  return normalize(tib_aggregate(video.patches, text, config.patch_temperature));
}

}  // namespace eercf
