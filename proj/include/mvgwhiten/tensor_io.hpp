#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvgwhiten/npy.hpp"

namespace mvgw {

enum class Split { kTrain, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// B x C x H x W feature maps of one backbone layer over one dataset split,
/// stored C-contiguous in doubles.
struct FeatureStack {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;
  std::string layer_name;
  Split split = Split::kTrain;
  std::vector<std::string> image_ids;

  FeatureStack() = default;
  FeatureStack(std::size_t b, std::size_t c, std::size_t h, std::size_t w);

  std::size_t pixels_per_image() const { return height * width; }
  std::size_t index(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const
  {
    return ((b * channels + c) * height + h) * width + w;
  }
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const { return data[index(b, c, h, w)]; }
  double& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) { return data[index(b, c, h, w)]; }

  // Throws ShapeError / DataError when an invariant is broken.
  void validate() const;
};

/// Ids "0".."B-1" used when a dataset does not name its images.
std::vector<std::string> default_image_ids(std::size_t count);

FeatureStack read_tensor(const std::filesystem::path& path);
FeatureStack read_tensor(const std::filesystem::path& path, std::string layer_name, Split split,
                         std::vector<std::string> image_ids);
void write_tensor(const FeatureStack& stack, const std::filesystem::path& path,
                  npy::Dtype dtype = npy::Dtype::kFloat64);

/// Per-pixel anomaly labels at image resolution; nonzero means anomalous.
struct PixelLabels {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> masks;
  std::vector<std::string> image_ids;

  bool at(std::size_t b, std::size_t y, std::size_t x) const { return masks[(b * height + y) * width + x] != 0; }
  std::size_t count_true() const;
};

constexpr int kDefaultMaskThreshold = 127;

/// Reads a single mask PNG (B = 1) or every PNG below a directory, ordered
/// by relative path. A pixel is anomalous iff its gray value exceeds
/// `threshold`.
PixelLabels read_masks(const std::filesystem::path& path, int threshold = kDefaultMaskThreshold);

/// Reads one mask per image; images without a mask file are all-normal.
PixelLabels read_masks(const std::vector<std::optional<std::filesystem::path>>& files,
                       std::vector<std::string> image_ids, std::size_t height, std::size_t width,
                       int threshold = kDefaultMaskThreshold);

/// A per-image file source: either a directory searched as
/// `<dir>/<image_id><suffix>.png`, or an explicit per-image list.
struct FileSet {
  std::optional<std::filesystem::path> directory;
  std::vector<std::optional<std::filesystem::path>> files;
  std::string suffix;

  bool empty() const { return !directory && files.empty(); }
  std::vector<std::optional<std::filesystem::path>> resolve(const std::vector<std::string>& image_ids) const;
};

struct SplitSources {
  std::map<std::string, std::filesystem::path> features;
  FileSet masks;
  FileSet images;
  std::vector<std::string> image_ids;
};

struct DatasetManifest {
  std::string category;
  std::vector<std::string> layers;
  std::map<Split, SplitSources> splits;
  std::size_t image_height = 0;
  std::size_t image_width = 0;

  const SplitSources& sources(Split split) const;
};

/// Parses a manifest JSON document. Relative paths resolve against the
/// manifest's directory; every referenced path must exist.
DatasetManifest read_manifest(const std::filesystem::path& path);

FeatureStack load_features(const DatasetManifest& manifest, Split split, const std::string& layer);
PixelLabels load_labels(const DatasetManifest& manifest, Split split, const std::vector<std::string>& image_ids);

}  // namespace mvgw
