#include "fixture.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "mvgwhiten/image.hpp"
#include "oracles.hpp"

namespace mvgw::testing {

namespace fs = std::filesystem;

Fixture make_fixture(const FixtureSpec& spec)
{
  Fixture fx;
  fx.spec = spec;
  const auto c = static_cast<Eigen::Index>(spec.channels);
  fx.spectrum.resize(c);
  if (spec.spectrum.empty()) {
    for (Eigen::Index i = 0; i < c; ++i) {
      fx.spectrum(i) = c == 1 ? 1.0 : 0.1 * std::pow(100.0, static_cast<double>(i) / static_cast<double>(c - 1));
    }
  } else {
    for (Eigen::Index i = 0; i < c; ++i) fx.spectrum(i) = spec.spectrum[static_cast<std::size_t>(i)];
  }
  fx.basis = oracle::random_orthogonal(spec.channels, spec.seed);

  std::mt19937_64 rng(spec.seed + 1);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> top(0, spec.height - spec.region);
  std::uniform_int_distribution<std::size_t> left(0, spec.width - spec.region);
  fx.mean.resize(c);
  for (Eigen::Index i = 0; i < c; ++i) fx.mean(i) = 2.0 * normal(rng);
  const Eigen::MatrixXd factor = fx.basis * fx.spectrum.cwiseSqrt().asDiagonal();

  auto sample = [&](FeatureStack& stack) {
    Eigen::VectorXd z(c);
    for (std::size_t b = 0; b < stack.batch; ++b) {
      for (std::size_t h = 0; h < stack.height; ++h) {
        for (std::size_t w = 0; w < stack.width; ++w) {
          for (Eigen::Index i = 0; i < c; ++i) z(i) = normal(rng);
          const Eigen::VectorXd x = fx.mean + factor * z;
          for (std::size_t k = 0; k < stack.channels; ++k) stack.at(b, k, h, w) = x(static_cast<Eigen::Index>(k));
        }
      }
    }
  };

  fx.train = FeatureStack(spec.batch_train, spec.channels, spec.height, spec.width);
  fx.train.layer_name = spec.layer;
  fx.train.split = Split::kTrain;
  sample(fx.train);

  fx.test = FeatureStack(spec.batch_test, spec.channels, spec.height, spec.width);
  fx.test.layer_name = spec.layer;
  fx.test.split = Split::kTest;
  sample(fx.test);

  const std::size_t img_h = spec.height * spec.upscale;
  const std::size_t img_w = spec.width * spec.upscale;
  fx.test_labels.batch = spec.batch_test;
  fx.test_labels.height = img_h;
  fx.test_labels.width = img_w;
  fx.test_labels.masks.assign(spec.batch_test * img_h * img_w, 0);
  fx.test_labels.image_ids = fx.test.image_ids;

  const auto k = static_cast<Eigen::Index>(spec.anomaly_component);
  const Eigen::VectorXd offset = spec.shift * std::sqrt(fx.spectrum(k)) * fx.basis.col(k);
  for (std::size_t b = 0; b < spec.anomalous && b < spec.batch_test; ++b) {
    Region r{top(rng), left(rng)};
    fx.regions.push_back(r);
    for (std::size_t h = r.top; h < r.top + spec.region; ++h) {
      for (std::size_t w = r.left; w < r.left + spec.region; ++w) {
        for (std::size_t ch = 0; ch < spec.channels; ++ch) fx.test.at(b, ch, h, w) += offset(static_cast<Eigen::Index>(ch));
      }
    }
    for (std::size_t y = r.top * spec.upscale; y < (r.top + spec.region) * spec.upscale; ++y) {
      for (std::size_t x = r.left * spec.upscale; x < (r.left + spec.region) * spec.upscale; ++x) {
        fx.test_labels.masks[(b * img_h + y) * img_w + x] = 1;
      }
    }
  }
  return fx;
}

namespace {

RgbImage synthetic_image(std::size_t h, std::size_t w, std::size_t index)
{
  RgbImage img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      img.set(y, x,
              Rgb{static_cast<std::uint8_t>((x * 5 + index * 17) % 256), static_cast<std::uint8_t>((y * 3) % 256),
                  static_cast<std::uint8_t>(90 + (index * 31) % 100)});
    }
  }
  return img;
}

}  // namespace

fs::path write_fixture(const Fixture& fx, const fs::path& dir, npy::Dtype dtype)
{
  const auto& spec = fx.spec;
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "masks" / "test");
  fs::create_directories(dir / "images" / "train");
  fs::create_directories(dir / "images" / "test");
  write_tensor(fx.train, dir / "features" / ("train_" + spec.layer + ".npy"), dtype);
  write_tensor(fx.test, dir / "features" / ("test_" + spec.layer + ".npy"), dtype);

  const std::size_t img_h = fx.test_labels.height;
  const std::size_t img_w = fx.test_labels.width;
  for (std::size_t b = 0; b < fx.test.batch; ++b) {
    GrayImage mask{img_h, img_w, std::vector<std::uint8_t>(img_h * img_w)};
    bool any = false;
    for (std::size_t p = 0; p < img_h * img_w; ++p) {
      mask.pixels[p] = fx.test_labels.masks[b * img_h * img_w + p] ? 255 : 0;
      any = any || mask.pixels[p];
    }
    if (any) write_png(dir / "masks" / "test" / (fx.test.image_ids[b] + ".png"), mask);
    write_png(dir / "images" / "test" / (fx.test.image_ids[b] + ".png"), synthetic_image(img_h, img_w, b + 100));
  }
  for (std::size_t b = 0; b < fx.train.batch; ++b) {
    write_png(dir / "images" / "train" / (fx.train.image_ids[b] + ".png"), synthetic_image(img_h, img_w, b));
  }

  nlohmann::ordered_json manifest;
  manifest["category"] = spec.category;
  manifest["layers"] = {spec.layer};
  manifest["image_size"] = {img_h, img_w};
  manifest["splits"]["train"]["features"][spec.layer] = "features/train_" + spec.layer + ".npy";
  manifest["splits"]["train"]["masks"] = nullptr;
  manifest["splits"]["train"]["images"] = "images/train";
  manifest["splits"]["test"]["features"][spec.layer] = "features/test_" + spec.layer + ".npy";
  manifest["splits"]["test"]["masks"] = "masks/test";
  manifest["splits"]["test"]["images"] = "images/test";
  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream(manifest_path) << manifest.dump(2) << "\n";

  nlohmann::ordered_json oracle;
  oracle["mean"] = std::vector<double>(fx.mean.data(), fx.mean.data() + fx.mean.size());
  oracle["spectrum"] = std::vector<double>(fx.spectrum.data(), fx.spectrum.data() + fx.spectrum.size());
  oracle["anomaly_component"] = spec.anomaly_component;
  oracle["shift"] = spec.shift;
  std::ofstream(dir / "oracle.json") << oracle.dump(2) << "\n";
  return manifest_path;
}

fs::path write_config(const fs::path& manifest, const fs::path& output_dir, const std::string& extra_json)
{
  std::string doc = "{\n  \"manifest\": \"" + manifest.string() + "\",\n  \"output_dir\": \"" + output_dir.string() +
                    "\",\n  \"images_per_page\": 3";
  if (!extra_json.empty()) doc += ",\n  " + extra_json;
  doc += "\n}\n";
  const fs::path path = manifest.parent_path() / "config.json";
  std::ofstream(path) << doc;
  return path;
}

fs::path scratch_dir(const std::string& name)
{
  const fs::path dir = fs::temp_directory_path() / ("mvgwhiten_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace mvgw::testing
