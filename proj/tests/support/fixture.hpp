#pragma once

// Synthetic Gaussian feature fixtures with planted anomalies, for tests.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvgwhiten/npy.hpp"
#include "mvgwhiten/tensor_io.hpp"

namespace mvgw::testing {

struct FixtureSpec {
  std::size_t channels = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t batch_train = 16;
  std::size_t batch_test = 16;
  std::size_t anomalous = 8;          // first `anomalous` test images get a region
  std::vector<double> spectrum;       // ascending; empty = geometric 0.1 .. 10
  std::size_t anomaly_component = 0;  // index into the ascending spectrum
  double shift = 6.0;                 // in units of sqrt(eigenvalue)
  std::size_t region = 4;             // square side, feature pixels
  std::size_t upscale = 4;            // image pixels per feature pixel
  std::uint64_t seed = 7;
  std::string layer = "layer1";
  std::string category = "synthetic";
};

struct Region {
  std::size_t top = 0;
  std::size_t left = 0;
};

struct Fixture {
  FixtureSpec spec;
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // columns are eigenvectors, ascending spectrum
  Eigen::VectorXd spectrum;
  FeatureStack train;
  FeatureStack test;
  PixelLabels test_labels;  // image resolution
  std::vector<Region> regions;
};

Fixture make_fixture(const FixtureSpec& spec);

/// Writes features (float32 NPY), masks, images and manifest.json under
/// `dir`; returns the manifest path.
std::filesystem::path write_fixture(const Fixture& fixture, const std::filesystem::path& dir,
                                    npy::Dtype dtype = npy::Dtype::kFloat32);

/// Writes a pipeline config next to the manifest and returns its path.
std::filesystem::path write_config(const std::filesystem::path& manifest, const std::filesystem::path& output_dir,
                                   const std::string& extra_json = "");

/// Fresh scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace mvgw::testing
