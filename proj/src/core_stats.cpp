#include "mvgwhiten/core_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>

#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/npy.hpp"
#include "mvgwhiten/parallel.hpp"

namespace mvgw {
namespace {

namespace fs = std::filesystem;

// Copies `count` raw feature rows starting at `first` into `out` (count x C).
using RowSource = std::function<void(std::size_t first, std::size_t count, Eigen::MatrixXd& out)>;

RowSource rows_of(const FlatMatrix& flat)
{
  return [&flat](std::size_t first, std::size_t count, Eigen::MatrixXd& out) {
    out = flat.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  };
}

RowSource rows_of(const FeatureStack& stack)
{
  return [&stack](std::size_t first, std::size_t count, Eigen::MatrixXd& out) {
    const std::size_t hw = stack.pixels_per_image();
    out.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(stack.channels));
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t b = (first + k) / hw;
      const std::size_t p = (first + k) % hw;
      const double* base = stack.data.data() + b * stack.channels * hw + p;
      for (std::size_t c = 0; c < stack.channels; ++c) out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = base[c * hw];
    }
  };
}

std::size_t chunk_count(std::size_t rows) { return (rows + kAccumulationChunkRows - 1) / kAccumulationChunkRows; }

// Computes one partial result per chunk, in parallel waves, and folds them
// into `total` strictly in chunk order.
template <typename Partial>
void reduce_chunks(std::size_t rows, const std::function<void(std::size_t, std::size_t, Partial&)>& partial,
                   Partial& total)
{
  const std::size_t chunks = chunk_count(rows);
  const std::size_t wave = std::max<std::size_t>(1, max_threads());
  std::vector<Partial> parts(std::min(wave, chunks));
  for (std::size_t start = 0; start < chunks; start += wave) {
    const std::size_t n = std::min(wave, chunks - start);
    parallel_for(n, [&](std::size_t i) {
      const std::size_t first = (start + i) * kAccumulationChunkRows;
      partial(first, std::min(kAccumulationChunkRows, rows - first), parts[i]);
    });
    for (std::size_t i = 0; i < n; ++i) total += parts[i];
  }
}

Eigen::VectorXd mean_from(const RowSource& source, std::size_t rows, std::size_t cols)
{
  if (rows == 0) throw ArgumentError("cannot fit a mean to zero rows");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols));
  reduce_chunks<Eigen::VectorXd>(
      rows,
      [&](std::size_t first, std::size_t count, Eigen::VectorXd& part) {
        Eigen::MatrixXd block;
        source(first, count, block);
        part = block.colwise().sum().transpose();
      },
      sum);
  return sum / static_cast<double>(rows);
}

Eigen::MatrixXd covariance_from(const RowSource& source, std::size_t rows, const Eigen::VectorXd& mean)
{
  if (rows < 2) throw ArgumentError("covariance needs at least 2 rows, got " + std::to_string(rows));
  const auto cols = mean.size();
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(cols, cols);
  reduce_chunks<Eigen::MatrixXd>(
      rows,
      [&](std::size_t first, std::size_t count, Eigen::MatrixXd& part) {
        Eigen::MatrixXd block;
        source(first, count, block);
        block.rowwise() -= mean.transpose();
        part = Eigen::MatrixXd::Zero(cols, cols);
        part.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
      },
      lower);
  Eigen::MatrixXd cov = lower.triangularView<Eigen::Lower>();
  cov.triangularView<Eigen::StrictlyUpper>() = lower.transpose();
  return cov / static_cast<double>(rows - 1);
}

void require_finite(const Eigen::MatrixXd& m, const char* what)
{
  if (!m.allFinite()) throw NumericError(std::string(what) + " contains non-finite values");
}

npy::Array to_array(const Eigen::MatrixXd& m)
{
  npy::Array a;
  a.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  a.data.resize(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.data[i * m.cols() + j] = m(i, j);
  }
  return a;
}

npy::Array to_array(const Eigen::VectorXd& v)
{
  npy::Array a;
  a.shape = {static_cast<std::size_t>(v.size())};
  a.data.assign(v.data(), v.data() + v.size());
  return a;
}

Eigen::MatrixXd matrix_from(const npy::Array& a, std::size_t n, const fs::path& path)
{
  if (a.shape != std::vector<std::size_t>{n, n}) throw ShapeError("unexpected shape in " + path.string());
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = a.data[i * n + j];
  }
  return m;
}

}  // namespace

FlatMatrix flatten(const FeatureStack& stack)
{
  stack.validate();
  const std::size_t rows = stack.batch * stack.pixels_per_image();
  FlatMatrix flat(rows, stack.channels);
  const std::size_t hw = stack.pixels_per_image();
  for (std::size_t b = 0; b < stack.batch; ++b) {
    for (std::size_t c = 0; c < stack.channels; ++c) {
      const double* plane = stack.data.data() + (b * stack.channels + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) flat(b * hw + p, c) = plane[p];
    }
  }
  return flat;
}

Eigen::VectorXd fit_mean(const FlatMatrix& flat)
{
  return mean_from(rows_of(flat), static_cast<std::size_t>(flat.rows()), static_cast<std::size_t>(flat.cols()));
}

Eigen::MatrixXd fit_covariance(const FlatMatrix& flat, const Eigen::VectorXd& mean)
{
  if (mean.size() != flat.cols()) throw ShapeError("mean length does not match column count");
  return covariance_from(rows_of(flat), static_cast<std::size_t>(flat.rows()), mean);
}

MvgModel model_from_moments(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double floor_rel)
{
  if (!(floor_rel > 0.0) || floor_rel >= 1.0) throw ArgumentError("floor_rel must be in (0, 1)");
  require_finite(mean, "mean");
  require_finite(covariance, "covariance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition of the covariance failed");

  MvgModel model;
  model.floor_rel = floor_rel;
  model.eigenvalues = solver.eigenvalues();
  model.eigenvectors = solver.eigenvectors();
  const auto c = model.eigenvalues.size();
  const double largest = model.eigenvalues(c - 1);
  if (!(largest > 0.0) || !std::isfinite(largest)) throw NumericError("covariance has no positive eigenvalue");

  model.eigenvalue_floor = floor_rel * largest;
  for (Eigen::Index i = 0; i < c; ++i) {
    if (model.eigenvalues(i) < model.eigenvalue_floor) {
      model.eigenvalues(i) = model.eigenvalue_floor;
      ++model.floored_count;
    }
  }
  // Largest-magnitude entry of each eigenvector is made positive.
  for (Eigen::Index j = 0; j < c; ++j) {
    Eigen::Index pivot = 0;
    model.eigenvectors.col(j).cwiseAbs().maxCoeff(&pivot);
    if (model.eigenvectors(pivot, j) < 0.0) model.eigenvectors.col(j) *= -1.0;
  }
  model.whitening = model.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * model.eigenvectors.transpose();
  require_finite(model.whitening, "whitening matrix");

  model.mean = std::move(mean);
  model.covariance = std::move(covariance);
  return model;
}

MvgModel build_model(const FlatMatrix& flat, double floor_rel)
{
  Eigen::VectorXd mean = fit_mean(flat);
  Eigen::MatrixXd cov = fit_covariance(flat, mean);
  return model_from_moments(std::move(mean), std::move(cov), floor_rel);
}

MvgModel build_model(const FeatureStack& stack, double floor_rel)
{
  stack.validate();
  const auto source = rows_of(stack);
  const std::size_t rows = stack.batch * stack.pixels_per_image();
  Eigen::VectorXd mean = mean_from(source, rows, stack.channels);
  Eigen::MatrixXd cov = covariance_from(source, rows, mean);
  MvgModel model = model_from_moments(std::move(mean), std::move(cov), floor_rel);
  model.layer_name = stack.layer_name;
  return model;
}

WhitenedStack whiten(const FeatureStack& stack, const MvgModel& model)
{
  if (stack.channels != model.channels()) {
    throw ShapeError("stack has " + std::to_string(stack.channels) + " channels, model expects " +
                     std::to_string(model.channels()));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  WhitenedStack out;
  out.batch = stack.batch;
  out.channels = stack.channels;
  out.height = stack.height;
  out.width = stack.width;
  out.layer_name = stack.layer_name;
  out.split = stack.split;
  out.image_ids = stack.image_ids;
  out.y.resize(stack.data.size());
  out.y_sq.resize(stack.data.size());

  const auto c = static_cast<Eigen::Index>(stack.channels);
  const auto hw = static_cast<Eigen::Index>(stack.pixels_per_image());
  parallel_for(stack.batch, [&](std::size_t b) {
    const std::size_t offset = b * stack.channels * stack.pixels_per_image();
    Eigen::Map<const RowMajor> x(stack.data.data() + offset, c, hw);
    Eigen::Map<RowMajor> y(out.y.data() + offset, c, hw);
    Eigen::Map<RowMajor> y_sq(out.y_sq.data() + offset, c, hw);
    y.noalias() = model.whitening * (x.colwise() - model.mean);
    y_sq = y.array().square();
  });
  return out;
}

ScoreMap score_map(const WhitenedStack& whitened)
{
  ScoreMap out;
  out.batch = whitened.batch;
  out.height = whitened.height;
  out.width = whitened.width;
  const std::size_t hw = whitened.height * whitened.width;
  out.scores.assign(whitened.batch * hw, 0.0);
  parallel_for(whitened.batch, [&](std::size_t b) {
    double* acc = out.scores.data() + b * hw;
    for (std::size_t c = 0; c < whitened.channels; ++c) {
      const double* plane = whitened.sq_plane(b, c);
      for (std::size_t p = 0; p < hw; ++p) acc[p] += plane[p];
    }
  });
  return out;
}

DirectMahalanobis::DirectMahalanobis(const MvgModel& model) : mean_(model.mean)
{
  // With flooring active the effective covariance is the reassembled,
  // floored spectrum.
  const Eigen::MatrixXd cov = model.floored_count == 0
                                  ? model.covariance
                                  : Eigen::MatrixXd(model.eigenvectors * model.eigenvalues.asDiagonal() *
                                                    model.eigenvectors.transpose());
  const auto n = cov.rows();
  lower_ = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = cov(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= lower_(j, k) * lower_(j, k);
    if (!(diag > 0.0)) throw NumericError("covariance is not positive definite");
    lower_(j, j) = std::sqrt(diag);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = cov(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= lower_(i, k) * lower_(j, k);
      lower_(i, j) = s / lower_(j, j);
    }
  }
}

double DirectMahalanobis::operator()(const Eigen::VectorXd& x) const
{
  if (x.size() != mean_.size()) throw ShapeError("vector length does not match the model");
  if (!x.allFinite()) throw NumericError("feature vector contains non-finite values");
  const Eigen::VectorXd d = x - mean_;
  // Forward substitution L z = d; the squared distance is |z|^2.
  const auto n = d.size();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = d(i);
    for (Eigen::Index k = 0; k < i; ++k) s -= lower_(i, k) * z(k);
    z(i) = s / lower_(i, i);
  }
  return z.squaredNorm();
}

double mahalanobis_sq_direct(const Eigen::VectorXd& x, const MvgModel& model) { return DirectMahalanobis(model)(x); }

void save_model(const MvgModel& model, const fs::path& directory)
{
  fs::create_directories(directory);
  npy::write(directory / "mean.npy", to_array(model.mean));
  npy::write(directory / "covariance.npy", to_array(model.covariance));
  npy::write(directory / "eigenvalues.npy", to_array(model.eigenvalues));
  npy::write(directory / "eigenvectors.npy", to_array(model.eigenvectors));
  npy::write(directory / "whitening.npy", to_array(model.whitening));
  nlohmann::ordered_json meta;
  meta["layer_name"] = model.layer_name;
  meta["category"] = model.category;
  meta["floor_rel"] = model.floor_rel;
  meta["eigenvalue_floor"] = model.eigenvalue_floor;
  meta["floored_count"] = model.floored_count;
  meta["C"] = model.channels();
  std::ofstream out(directory / "model.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (directory / "model.json").string());
  out << meta.dump(2) << "\n";
}

MvgModel load_model(const fs::path& directory)
{
  const fs::path meta_path = directory / "model.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("file not found: " + meta_path.string());
  nlohmann::json meta;
  MvgModel model;
  std::size_t c = 0;
  try {
    meta = nlohmann::json::parse(in);
    model.layer_name = meta.at("layer_name").get<std::string>();
    model.category = meta.at("category").get<std::string>();
    model.floor_rel = meta.at("floor_rel").get<double>();
    model.eigenvalue_floor = meta.at("eigenvalue_floor").get<double>();
    model.floored_count = meta.value("floored_count", std::size_t{0});
    c = meta.at("C").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid " + meta_path.string() + ": " + e.what());
  }
  auto vec = [&](const char* name) {
    const auto a = npy::read(directory / name);
    if (a.shape != std::vector<std::size_t>{c}) throw ShapeError(std::string("unexpected shape in ") + name);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(a.data.data(), static_cast<Eigen::Index>(c)));
  };
  auto mat = [&](const char* name) { return matrix_from(npy::read(directory / name), c, directory / name); };
  model.mean = vec("mean.npy");
  model.eigenvalues = vec("eigenvalues.npy");
  model.covariance = mat("covariance.npy");
  model.eigenvectors = mat("eigenvectors.npy");
  model.whitening = mat("whitening.npy");
  return model;
}

}  // namespace mvgw
