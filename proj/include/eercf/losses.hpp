#pragma once

// Training objectives with analytic gradients: symmetric InfoNCE across the
// batch, the Pearson intra-feature constraint, and their multi-level sum.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace eercf {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using ExtendedVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

/// One feature level of a batch. Row b is instance b, column d is channel d.
template <typename Scalar>
struct BasicBatch {
  DenseMatrix<Scalar> video;  // B x D
  DenseMatrix<Scalar> text;   // B x D
};
using BatchFeatures = BasicBatch<double>;

struct LossConfig {
  double alpha = 0.05;                             // cross-channel decorrelation weight
  double beta = 0.001;                             // intra-loss weight
  std::array<double, 3> level_weights{5.0, 5.0, 1.0};  // coarse, frame, patch levels
  double temperature = 0.01;                       // InfoNCE temperature

  void validate() const;
};

template <typename Scalar>
struct BasicLossResult {
  Scalar value = 0;
  DenseMatrix<Scalar> grad_video;
  DenseMatrix<Scalar> grad_text;
};
using LossResult = BasicLossResult<double>;

/// L = mean CE of softmax(S / tau) rows against the diagonal (text-to-video)
/// + the same over columns (video-to-text), with S = F_v F_t^T.
template <typename Scalar>
BasicLossResult<Scalar> inter_loss(const BasicBatch<Scalar>& batch, double temperature);

/// Pearson correlation of two equally long vectors. Throws DegenerateChannel
/// when either has standard deviation below 1e-12.
double pearson(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

/// 1 - pearson(x, y), in [0, 2].
double pearson_distance(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y);

/// D x D matrix of channel correlations: R(i, j) = pearson(F_v[:, i], F_t[:, j]).
Eigen::MatrixXd pearson_matrix(const BatchFeatures& batch);

/// sum_d d_p(v_d, t_d)^2 + alpha * sum_{d1 != d2} (1 - d_p(v_d1, t_d2))^2
template <typename Scalar>
BasicLossResult<Scalar> intra_loss(const BasicBatch<Scalar>& batch, double alpha);

template <typename Scalar>
struct BasicTotalLossResult {
  Scalar value = 0;
  std::array<DenseMatrix<Scalar>, 3> grad_video;
  std::array<DenseMatrix<Scalar>, 3> grad_text;
};
using TotalLossResult = BasicTotalLossResult<double>;

/// sum over levels of lambda_l * (inter + beta * intra).
template <typename Scalar>
BasicTotalLossResult<Scalar> total_loss(const std::array<BasicBatch<Scalar>, 3>& levels, const LossConfig& config);

extern template BasicLossResult<double> inter_loss(const BasicBatch<double>&, double);
extern template BasicLossResult<long double> inter_loss(const BasicBatch<long double>&, double);
extern template BasicLossResult<double> intra_loss(const BasicBatch<double>&, double);
extern template BasicLossResult<long double> intra_loss(const BasicBatch<long double>&, double);
extern template BasicTotalLossResult<double> total_loss(const std::array<BasicBatch<double>, 3>&,
                                                        const LossConfig&);
extern template BasicTotalLossResult<long double> total_loss(const std::array<BasicBatch<long double>, 3>&,
                                                             const LossConfig&);

/// Flattens video then text (column-major) into one parameter vector.
Eigen::VectorXd flatten(const BatchFeatures& batch);
BatchFeatures unflatten(const Eigen::VectorXd& params, Eigen::Index rows, Eigen::Index cols);
BasicBatch<long double> unflatten(const ExtendedVector& params, Eigen::Index rows, Eigen::Index cols);

/// Central-difference check of `analytic` against f at `x`. Returns the max
/// over coordinates of |a - n| / max(|a|, |n|, 1e-8). `eps` must lie in
/// [1e-6, 1e-3].
double grad_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& analytic, double eps);

/// Same check with f evaluated in extended precision, so the difference
/// quotient is not limited by the rounding of a double loss value.
double grad_check_extended(const std::function<long double(const ExtendedVector&)>& f, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& analytic, double eps);

/// Seeded B x D batch whose rows are unit norm; text rows are noisy copies of
/// the video rows so positives carry signal.
BatchFeatures random_batch(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols);

struct CheckLine {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct LossCheckOptions {
  std::uint64_t seeds = 20;
  Eigen::Index batch = 8;
  Eigen::Index dim = 16;
  double eps = 1e-6;
  std::size_t pearson_cases = 1000;
  LossConfig config;
};

/// Gradient and property certification of every loss on seeded inputs.
std::vector<CheckLine> run_loss_checks(const LossCheckOptions& options);

}  // namespace eercf
