#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mvgwhiten/tensor_io.hpp"

namespace mvgw {

using FlatMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows per partial sum in mean/covariance accumulation. Partial sums are
/// always combined in chunk order, so results do not depend on threading.
constexpr std::size_t kAccumulationChunkRows = 4096;
constexpr double kDefaultFloorRel = 1e-10;

/// BHW x C matrix; row (b * H + h) * W + w holds the feature vector at (b, h, w).
FlatMatrix flatten(const FeatureStack& stack);

Eigen::VectorXd fit_mean(const FlatMatrix& flat);

/// Unbiased (divisor n - 1) covariance, two-pass around `mean`.
Eigen::MatrixXd fit_covariance(const FlatMatrix& flat, const Eigen::VectorXd& mean);

/// Single Gaussian fitted to all pixel feature vectors of a layer, with
/// its eigendecomposition and the PCA whitening matrix
/// W = diag(eigenvalues)^(-1/2) * eigenvectors^T.
///
/// Eigenvalues ascend, so row c of `whitening` projects onto the
/// eigenvector with the c-th smallest variance. Eigenvalues below
/// floor_rel * max eigenvalue are raised to that floor before W is built.
struct MvgModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd eigenvalues;   // after flooring
  Eigen::MatrixXd eigenvectors;  // column c pairs with eigenvalues[c]
  Eigen::MatrixXd whitening;
  double floor_rel = kDefaultFloorRel;
  double eigenvalue_floor = 0.0;
  std::size_t floored_count = 0;
  std::string layer_name;
  std::string category;

  std::size_t channels() const { return static_cast<std::size_t>(mean.size()); }
};

MvgModel build_model(const FlatMatrix& flat, double floor_rel = kDefaultFloorRel);

/// Same result as build_model(flatten(stack)) without materializing the
/// flat matrix.
MvgModel build_model(const FeatureStack& stack, double floor_rel = kDefaultFloorRel);

/// Eigendecomposition and whitening for already-estimated moments.
MvgModel model_from_moments(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double floor_rel = kDefaultFloorRel);

/// Whitened maps Y and their point-wise squares, laid out like the source
/// stack (B x C x H x W).
struct WhitenedStack {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> y;
  std::vector<double> y_sq;
  std::string layer_name;
  Split split = Split::kTrain;
  std::vector<std::string> image_ids;

  std::size_t index(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const
  {
    return ((b * channels + c) * height + h) * width + w;
  }
  /// Pointer to the H x W plane of component c in image b.
  const double* sq_plane(std::size_t b, std::size_t c) const { return y_sq.data() + index(b, c, 0, 0); }
};

WhitenedStack whiten(const FeatureStack& stack, const MvgModel& model);

/// Per-pixel squared Mahalanobis distance, B x H x W.
struct ScoreMap {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;

  double at(std::size_t b, std::size_t h, std::size_t w) const { return scores[(b * height + h) * width + w]; }
  const double* plane(std::size_t b) const { return scores.data() + b * height * width; }
};

ScoreMap score_map(const WhitenedStack& whitened);

/// (x - mean)^T Sigma^-1 (x - mean) by a Cholesky solve against the
/// (floored) covariance; independent of the whitening matrix.
class DirectMahalanobis {
 public:
  explicit DirectMahalanobis(const MvgModel& model);
  double operator()(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd lower_;
};

double mahalanobis_sq_direct(const Eigen::VectorXd& x, const MvgModel& model);

void save_model(const MvgModel& model, const std::filesystem::path& directory);
MvgModel load_model(const std::filesystem::path& directory);

}  // namespace mvgw
