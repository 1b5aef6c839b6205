#include "eercf/losses.hpp"

#include <algorithm>
#include <cmath>

#include "eercf/error.hpp"
#include "eercf/random.hpp"

namespace eercf {

namespace {

constexpr double kMinStd = 1e-12;

template <typename Scalar>
void check_batch(const BasicBatch<Scalar>& batch) {
  if (batch.video.rows() != batch.text.rows() || batch.video.cols() != batch.text.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "video and text batches differ in shape");
  }
  if (batch.video.rows() < 2) throw Error(ErrorCode::BatchTooSmall, "batch needs at least 2 pairs");
  if (batch.video.cols() < 1) throw Error(ErrorCode::ShapeMismatch, "batch has no channels");
  if (!batch.video.allFinite() || !batch.text.allFinite()) {
    throw Error(ErrorCode::NonFinite, "batch features are not finite");
  }
}

// Sum over rows of the cross-entropy of softmax(row) against the diagonal
// target, and the matching (softmax - one_hot) rows in `grad`. Uses log1p over
// the non-maximal terms and sums off-target probabilities for the target
// entry, so saturated rows keep their relative precision.
template <typename Scalar>
Scalar diagonal_cross_entropy(const DenseMatrix<Scalar>& logits, DenseMatrix<Scalar>& grad) {
  using std::exp, std::log1p;
  grad.resize(logits.rows(), logits.cols());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index top = 0;
    const Scalar peak = logits.row(i).maxCoeff(&top);
    Scalar rest = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      grad(i, j) = exp(logits(i, j) - peak);
      if (j != top) rest += grad(i, j);
    }
    total += (peak - logits(i, i)) + log1p(rest);
    grad.row(i) /= Scalar(1) + rest;
    Scalar off_target = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (j != i) off_target += grad(i, j);
    grad(i, i) = -off_target;
  }
  return total;
}

template <typename Scalar>
struct CenteredChannels {
  DenseMatrix<Scalar> unit;                      // centered columns scaled to unit norm
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms;  // norm of each centered column
};

template <typename Scalar>
CenteredChannels<Scalar> center_and_scale(const DenseMatrix<Scalar>& f) {
  using std::sqrt;
  CenteredChannels<Scalar> out;
  out.unit = f.rowwise() - f.colwise().mean();
  out.norms = out.unit.colwise().norm();
  const Scalar rows = static_cast<Scalar>(f.rows());
  for (Eigen::Index d = 0; d < f.cols(); ++d) {
    if (out.norms[d] / sqrt(rows) < Scalar(kMinStd)) {
      throw Error(ErrorCode::DegenerateChannel, "channel " + std::to_string(d) + " is constant");
    }
    out.unit.col(d) /= out.norms[d];
  }
  return out;
}

// Gradient through column centering + unit scaling.
template <typename Scalar>
DenseMatrix<Scalar> backprop_center_and_scale(const CenteredChannels<Scalar>& c,
                                              const DenseMatrix<Scalar>& grad_unit) {
  DenseMatrix<Scalar> g(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index d = 0; d < g.cols(); ++d) {
    const auto u = c.unit.col(d);
    g.col(d) = (grad_unit.col(d) - u * u.dot(grad_unit.col(d))) / c.norms[d];
  }
  return g.rowwise() - g.colwise().mean();
}

template <typename Scalar, typename Vec>
double central_differences(const std::function<Scalar(const Vec&)>& f, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& analytic, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw Error(ErrorCode::InvalidParams, "eps must lie in [1e-6, 1e-3]");
  if (analytic.size() != x.size()) throw Error(ErrorCode::ShapeMismatch, "gradient size mismatch");
  double worst = 0.0;
  Vec probe = x.cast<Scalar>();
  const Scalar step = static_cast<Scalar>(eps);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar origin = probe[i];
    probe[i] = origin + step;
    const Scalar up = f(probe);
    probe[i] = origin - step;
    const Scalar down = f(probe);
    probe[i] = origin;
    const double numeric = static_cast<double>((up - down) / (Scalar(2) * step));
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(temperature > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "alpha, beta must be >= 0 and temperature > 0");
  }
  for (double l : level_weights) {
    if (!(l >= 0.0)) throw Error(ErrorCode::InvalidParams, "level weights must be >= 0");
  }
}

template <typename Scalar>
BasicLossResult<Scalar> inter_loss(const BasicBatch<Scalar>& batch, double temperature) {
  check_batch(batch);
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidParams, "temperature must be positive");
  const auto tau = static_cast<Scalar>(temperature);
  const auto b = static_cast<Scalar>(batch.video.rows());
  const DenseMatrix<Scalar> logits = batch.video * batch.text.transpose() / tau;
  DenseMatrix<Scalar> grad_rows, grad_cols;
  const Scalar rows = diagonal_cross_entropy<Scalar>(logits, grad_rows) / b;
  const Scalar cols = diagonal_cross_entropy<Scalar>(logits.transpose(), grad_cols) / b;
  const DenseMatrix<Scalar> grad_logits = (grad_rows + grad_cols.transpose()) / b;

  BasicLossResult<Scalar> out;
  out.value = rows + cols;
  out.grad_video = grad_logits * batch.text / tau;
  out.grad_text = grad_logits.transpose() * batch.video / tau;
  return out;
}

double pearson(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "pearson over unequal lengths");
  if (x.size() < 2) throw Error(ErrorCode::DegenerateChannel, "pearson needs at least 2 samples");
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double n = std::sqrt(static_cast<double>(x.size()));
  const double nx = xc.norm();
  const double ny = yc.norm();
  if (nx / n < kMinStd || ny / n < kMinStd) {
    throw Error(ErrorCode::DegenerateChannel, "pearson of a constant channel");
  }
  return std::clamp(xc.dot(yc) / (nx * ny), -1.0, 1.0);
}

double pearson_distance(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y) {
  return 1.0 - pearson(x, y);
}

Eigen::MatrixXd pearson_matrix(const BatchFeatures& batch) {
  check_batch(batch);
  const auto v = center_and_scale(batch.video);
  const auto t = center_and_scale(batch.text);
  return v.unit.transpose() * t.unit;
}

template <typename Scalar>
BasicLossResult<Scalar> intra_loss(const BasicBatch<Scalar>& batch, double alpha) {
  check_batch(batch);
  const auto v = center_and_scale(batch.video);
  const auto t = center_and_scale(batch.text);
  const DenseMatrix<Scalar> corr = v.unit.transpose() * t.unit;
  const auto a = static_cast<Scalar>(alpha);

  // dL/dcorr: diagonal terms (1 - rho)^2, off-diagonal alpha * rho^2.
  DenseMatrix<Scalar> grad_corr = Scalar(2) * a * corr;
  Scalar value = 0;
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    for (Eigen::Index j = 0; j < corr.cols(); ++j) {
      if (i == j) {
        const Scalar distance = Scalar(1) - corr(i, i);
        value += distance * distance;
        grad_corr(i, i) = Scalar(-2) * distance;
      } else {
        value += a * corr(i, j) * corr(i, j);
      }
    }
  }

  BasicLossResult<Scalar> out;
  out.value = value;
  out.grad_video = backprop_center_and_scale<Scalar>(v, t.unit * grad_corr.transpose());
  out.grad_text = backprop_center_and_scale<Scalar>(t, v.unit * grad_corr);
  return out;
}

template <typename Scalar>
BasicTotalLossResult<Scalar> total_loss(const std::array<BasicBatch<Scalar>, 3>& levels, const LossConfig& config) {
  config.validate();
  const auto beta = static_cast<Scalar>(config.beta);
  BasicTotalLossResult<Scalar> out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto lambda = static_cast<Scalar>(config.level_weights[l]);
    const auto inter = inter_loss(levels[l], config.temperature);
    const auto intra = intra_loss(levels[l], config.alpha);
    out.value += lambda * (inter.value + beta * intra.value);
    out.grad_video[l] = lambda * (inter.grad_video + beta * intra.grad_video);
    out.grad_text[l] = lambda * (inter.grad_text + beta * intra.grad_text);
  }
  return out;
}

template BasicLossResult<double> inter_loss(const BasicBatch<double>&, double);
template BasicLossResult<long double> inter_loss(const BasicBatch<long double>&, double);
template BasicLossResult<double> intra_loss(const BasicBatch<double>&, double);
template BasicLossResult<long double> intra_loss(const BasicBatch<long double>&, double);
template BasicTotalLossResult<double> total_loss(const std::array<BasicBatch<double>, 3>&, const LossConfig&);
template BasicTotalLossResult<long double> total_loss(const std::array<BasicBatch<long double>, 3>&,
                                                      const LossConfig&);

Eigen::VectorXd flatten(const BatchFeatures& batch) {
  Eigen::VectorXd out(batch.video.size() + batch.text.size());
  out << batch.video.reshaped(), batch.text.reshaped();
  return out;
}

BatchFeatures unflatten(const Eigen::VectorXd& params, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index n = rows * cols;
  if (params.size() != 2 * n) throw Error(ErrorCode::ShapeMismatch, "parameter vector size mismatch");
  return {params.head(n).reshaped(rows, cols), params.tail(n).reshaped(rows, cols)};
}

BasicBatch<long double> unflatten(const ExtendedVector& params, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index n = rows * cols;
  if (params.size() != 2 * n) throw Error(ErrorCode::ShapeMismatch, "parameter vector size mismatch");
  return {params.head(n).reshaped(rows, cols), params.tail(n).reshaped(rows, cols)};
}

double grad_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& analytic, double eps) {
  return central_differences(f, x, analytic, eps);
}

double grad_check_extended(const std::function<long double(const ExtendedVector&)>& f, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& analytic, double eps) {
  return central_differences(f, x, analytic, eps);
}

BatchFeatures random_batch(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  Rng rng(seed);
  BatchFeatures batch{rng.normal_matrix(rows, cols), Eigen::MatrixXd(rows, cols)};
  batch.video.rowwise().normalize();
  batch.text = batch.video + rng.normal_matrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  batch.text.rowwise().normalize();
  return batch;
}

namespace {

template <typename Loss>
double check_single_loss(const BatchFeatures& batch, double eps, Loss loss) {
  const auto rows = batch.video.rows();
  const auto cols = batch.video.cols();
  const auto result = loss(batch);
  Eigen::VectorXd analytic(2 * rows * cols);
  analytic << result.grad_video.reshaped(), result.grad_text.reshaped();
  return grad_check_extended([&](const ExtendedVector& p) { return loss(unflatten(p, rows, cols)).value; },
                             flatten(batch), analytic, eps);
}

double check_total_loss(std::uint64_t seed, const LossCheckOptions& o) {
  std::array<BatchFeatures, 3> levels{random_batch(seed * 3 + 0, o.batch, o.dim),
                                      random_batch(seed * 3 + 1, o.batch, o.dim),
                                      random_batch(seed * 3 + 2, o.batch, o.dim)};
  const Eigen::Index per_level = 2 * o.batch * o.dim;
  Eigen::VectorXd params(3 * per_level);
  Eigen::VectorXd analytic(3 * per_level);
  const auto result = total_loss(levels, o.config);
  for (int l = 0; l < 3; ++l) {
    params.segment(l * per_level, per_level) = flatten(levels[l]);
    analytic.segment(l * per_level, per_level) << result.grad_video[l].reshaped(),
        result.grad_text[l].reshaped();
  }
  auto f = [&](const ExtendedVector& p) {
    std::array<BasicBatch<long double>, 3> probe;
    for (int l = 0; l < 3; ++l) {
      probe[l] = unflatten(ExtendedVector(p.segment(l * per_level, per_level)), o.batch, o.dim);
    }
    return total_loss(probe, o.config).value;
  };
  return grad_check_extended(f, params, analytic, o.eps);
}

}  // namespace

std::vector<CheckLine> run_loss_checks(const LossCheckOptions& o) {
  o.config.validate();
  std::vector<CheckLine> lines;
  auto add = [&](std::string name, double measured, double threshold, bool passed) {
    lines.push_back({std::move(name), measured, threshold, passed});
  };

  double inter_err = 0.0, intra_err = 0.0, total_err = 0.0, min_inter = 0.0;
  bool first = true;
  for (std::uint64_t s = 0; s < o.seeds; ++s) {
    const auto batch = random_batch(1000 + s, o.batch, o.dim);
    inter_err = std::max(inter_err, check_single_loss(batch, o.eps, [&](const auto& b) {
                           return inter_loss(b, o.config.temperature);
                         }));
    intra_err = std::max(intra_err, check_single_loss(batch, o.eps, [&](const auto& b) {
                           return intra_loss(b, o.config.alpha);
                         }));
    total_err = std::max(total_err, check_total_loss(2000 + s, o));
    const double v = inter_loss(batch, o.config.temperature).value;
    min_inter = first ? v : std::min(min_inter, v);
    first = false;
  }
  add("inter_loss gradient vs finite differences", inter_err, 1e-4, inter_err < 1e-4);
  add("intra_loss gradient vs finite differences", intra_err, 1e-4, intra_err < 1e-4);
  add("total_loss gradient vs finite differences", total_err, 1e-4, total_err < 1e-4);
  add("inter_loss minimum over seeds (>= 0)", min_inter, 0.0, min_inter >= 0.0);

  // The checker must flag a broken gradient: zero the largest coordinate.
  {
    const auto batch = random_batch(99, o.batch, o.dim);
    const auto result = inter_loss(batch, o.config.temperature);
    Eigen::VectorXd analytic(flatten(batch).size());
    analytic << result.grad_video.reshaped(), result.grad_text.reshaped();
    Eigen::Index worst = 0;
    analytic.cwiseAbs().maxCoeff(&worst);
    analytic[worst] = 0.0;
    const auto rows = o.batch, cols = o.dim;
    const double err = grad_check_extended(
        [&](const ExtendedVector& p) { return inter_loss(unflatten(p, rows, cols), o.config.temperature).value; },
        flatten(batch), analytic, o.eps);
    add("corrupted gradient detected (error > 1e-2)", err, 1e-2, err > 1e-2);
  }

  Rng rng(424242);
  double affine_dev = 0.0, flip_dev = 0.0, self_dev = 0.0;
  std::size_t out_of_range = 0;
  for (std::size_t c = 0; c < o.pearson_cases; ++c) {
    const auto n = static_cast<Eigen::Index>(3 + rng.below(30));
    const Eigen::VectorXd x = rng.normal_vector(n);
    const Eigen::VectorXd y = rng.normal_vector(n);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double m1 = sign * std::exp(rng.uniform(-2.3, 2.3));
    const double m2 = sign * std::exp(rng.uniform(-2.3, 2.3));
    const double n1 = rng.uniform(-10.0, 10.0);
    const double n2 = rng.uniform(-10.0, 10.0);
    const double d = pearson_distance(x, y);
    const Eigen::VectorXd xa = (m1 * x).array() + n1;
    const Eigen::VectorXd ya = (m2 * y).array() + n2;
    affine_dev = std::max(affine_dev, std::abs(pearson_distance(xa, ya) - d));
    flip_dev = std::max(flip_dev, std::abs(pearson_distance(x, -y) - (2.0 - d)));
    self_dev = std::max(self_dev, std::abs(pearson_distance(x, x)));
    for (double v : {d, pearson_distance(xa, ya), pearson_distance(x, -y)}) {
      if (v < 0.0 || v > 2.0) ++out_of_range;
    }
  }
  add("Pearson affine invariance (m1*m2 > 0)", affine_dev, 1e-6, affine_dev < 1e-6);
  add("Pearson flip: d(x,-y) = 2 - d(x,y)", flip_dev, 1e-6, flip_dev < 1e-6);
  add("Pearson self distance d(x,x) = 0", self_dev, 1e-9, self_dev < 1e-9);
  add("Pearson distance outside [0, 2] (count)", static_cast<double>(out_of_range), 0.0, out_of_range == 0);
  return lines;
}

}  // namespace eercf
