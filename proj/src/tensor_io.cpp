#include "mvgwhiten/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>

#include "mvgwhiten/errors.hpp"
#include "mvgwhiten/image.hpp"

namespace mvgw {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& text)
{
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw ArgumentError("unknown split '" + text + "'");
}

FeatureStack::FeatureStack(std::size_t b, std::size_t c, std::size_t h, std::size_t w)
    : batch(b), channels(c), height(h), width(w), data(b * c * h * w, 0.0), image_ids(default_image_ids(b))
{
}

void FeatureStack::validate() const
{
  if (batch == 0 || channels == 0 || height == 0 || width == 0) {
    throw ShapeError("feature stack has an empty dimension");
  }
  if (data.size() != batch * channels * height * width) throw ShapeError("feature stack data size mismatch");
  if (image_ids.size() != batch) {
    throw ShapeError("feature stack has " + std::to_string(image_ids.size()) + " image ids for batch " +
                     std::to_string(batch));
  }
  const std::set<std::string> unique(image_ids.begin(), image_ids.end());
  if (unique.size() != image_ids.size()) throw DataError("feature stack image ids are not distinct");
  for (double v : data) {
    if (!std::isfinite(v)) throw DataError("feature stack contains NaN or Inf");
  }
}

std::vector<std::string> default_image_ids(std::size_t count)
{
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ids.push_back(std::to_string(i));
  return ids;
}

FeatureStack read_tensor(const fs::path& path)
{
  return read_tensor(path, path.stem().string(), Split::kTrain, {});
}

FeatureStack read_tensor(const fs::path& path, std::string layer_name, Split split, std::vector<std::string> image_ids)
{
  npy::Array array = npy::read(path);
  if (array.shape.size() != 4) {
    throw ShapeError("expected a 4-D B x C x H x W tensor in " + path.string() + ", got rank " +
                     std::to_string(array.shape.size()));
  }
  FeatureStack stack;
  stack.batch = array.shape[0];
  stack.channels = array.shape[1];
  stack.height = array.shape[2];
  stack.width = array.shape[3];
  stack.data = std::move(array.data);
  stack.layer_name = std::move(layer_name);
  stack.split = split;
  stack.image_ids = image_ids.empty() ? default_image_ids(stack.batch) : std::move(image_ids);
  stack.validate();
  return stack;
}

void write_tensor(const FeatureStack& stack, const fs::path& path, npy::Dtype dtype)
{
  stack.validate();
  npy::Array array;
  array.shape = {stack.batch, stack.channels, stack.height, stack.width};
  array.data = stack.data;
  npy::write(path, array, dtype);
}

std::size_t PixelLabels::count_true() const
{
  return static_cast<std::size_t>(std::count_if(masks.begin(), masks.end(), [](std::uint8_t m) { return m != 0; }));
}

namespace {

void append_mask(PixelLabels& labels, const GrayImage& image, int threshold, const fs::path& source)
{
  if (labels.batch == 0 && labels.height == 0) {
    labels.height = image.height;
    labels.width = image.width;
  } else if (image.height != labels.height || image.width != labels.width) {
    throw ShapeError("mask " + source.string() + " is " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + ", expected " + std::to_string(labels.height) + "x" +
                     std::to_string(labels.width));
  }
  for (auto v : image.pixels) labels.masks.push_back(static_cast<int>(v) > threshold ? 1 : 0);
  ++labels.batch;
}

}  // namespace

PixelLabels read_masks(const fs::path& path, int threshold)
{
  PixelLabels labels;
  if (fs::is_regular_file(path)) {
    append_mask(labels, read_png_gray(path), threshold, path);
    labels.image_ids = {path.stem().string()};
    return labels;
  }
  if (!fs::is_directory(path)) throw IoError("file not found: " + path.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    append_mask(labels, read_png_gray(file), threshold, file);
    auto rel = fs::relative(file, path);
    rel.replace_extension();
    labels.image_ids.push_back(rel.generic_string());
  }
  return labels;
}

PixelLabels read_masks(const std::vector<std::optional<fs::path>>& files, std::vector<std::string> image_ids,
                       std::size_t height, std::size_t width, int threshold)
{
  if (files.size() != image_ids.size()) throw ShapeError("mask list and image ids differ in length");
  PixelLabels labels;
  labels.height = height;
  labels.width = width;
  labels.masks.reserve(files.size() * height * width);
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i]) {
      append_mask(labels, read_png_gray(*files[i]), threshold, *files[i]);
    } else {
      labels.masks.insert(labels.masks.end(), height * width, 0);
      ++labels.batch;
    }
  }
  labels.image_ids = std::move(image_ids);
  return labels;
}

std::vector<std::optional<fs::path>> FileSet::resolve(const std::vector<std::string>& image_ids) const
{
  std::vector<std::optional<fs::path>> out;
  if (directory) {
    for (const auto& id : image_ids) {
      auto candidate = *directory / (id + suffix + ".png");
      out.push_back(fs::exists(candidate) ? std::optional<fs::path>(candidate) : std::nullopt);
    }
    return out;
  }
  if (files.empty()) return std::vector<std::optional<fs::path>>(image_ids.size());
  if (files.size() != image_ids.size()) {
    throw ShapeError("file list has " + std::to_string(files.size()) + " entries for " +
                     std::to_string(image_ids.size()) + " images");
  }
  return files;
}

const SplitSources& DatasetManifest::sources(Split split) const
{
  auto it = splits.find(split);
  if (it == splits.end()) throw ConfigError("manifest has no '" + to_string(split) + "' split");
  return it->second;
}

namespace {

fs::path existing(const fs::path& base, const std::string& rel)
{
  fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) throw IoError("file not found: " + p.string());
  return p;
}

FileSet parse_file_set(const json& node, const fs::path& base, const std::string& suffix)
{
  FileSet set;
  set.suffix = suffix;
  if (node.is_null()) return set;
  if (node.is_string()) {
    set.directory = existing(base, node.get<std::string>());
    if (!fs::is_directory(*set.directory)) throw ConfigError("expected a directory: " + set.directory->string());
    return set;
  }
  if (!node.is_array()) throw ConfigError("masks/images must be a directory path, a list, or null");
  for (const auto& item : node) {
    if (item.is_null()) {
      set.files.emplace_back(std::nullopt);
    } else {
      set.files.emplace_back(existing(base, item.get<std::string>()));
    }
  }
  return set;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path)
{
  std::ifstream in(path);
  if (!in) throw IoError("file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse manifest " + path.string() + ": " + e.what());
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  DatasetManifest manifest;
  try {
    manifest.category = doc.at("category").get<std::string>();
    manifest.layers = doc.at("layers").get<std::vector<std::string>>();
    const auto size = doc.at("image_size").get<std::vector<std::size_t>>();
    if (size.size() != 2 || size[0] == 0 || size[1] == 0) throw ConfigError("image_size must be [H, W]");
    manifest.image_height = size[0];
    manifest.image_width = size[1];
    for (const auto& [name, node] : doc.at("splits").items()) {
      const Split split = parse_split(name);
      SplitSources sources;
      for (const auto& [layer, rel] : node.at("features").items()) {
        sources.features[layer] = existing(base, rel.get<std::string>());
      }
      sources.masks = parse_file_set(node.value("masks", json()), base, node.value("mask_suffix", std::string()));
      sources.images = parse_file_set(node.value("images", json()), base, node.value("image_suffix", std::string()));
      if (node.contains("image_ids")) sources.image_ids = node.at("image_ids").get<std::vector<std::string>>();
      manifest.splits[split] = std::move(sources);
    }
  } catch (const json::exception& e) {
    throw ConfigError("invalid manifest " + path.string() + ": " + e.what());
  }
  if (manifest.layers.empty()) throw ConfigError("manifest lists no layers");
  for (const auto& [split, sources] : manifest.splits) {
    for (const auto& layer : manifest.layers) {
      if (!sources.features.count(layer)) {
        throw ConfigError("manifest split '" + to_string(split) + "' has no features for layer '" + layer + "'");
      }
    }
  }
  return manifest;
}

FeatureStack load_features(const DatasetManifest& manifest, Split split, const std::string& layer)
{
  const auto& sources = manifest.sources(split);
  auto it = sources.features.find(layer);
  if (it == sources.features.end()) {
    throw ConfigError("no '" + layer + "' features for split '" + to_string(split) + "'");
  }
  return read_tensor(it->second, layer, split, sources.image_ids);
}

PixelLabels load_labels(const DatasetManifest& manifest, Split split, const std::vector<std::string>& image_ids)
{
  const auto& sources = manifest.sources(split);
  PixelLabels labels = read_masks(sources.masks.resolve(image_ids), image_ids, manifest.image_height,
                                  manifest.image_width);
  if (split == Split::kTrain && labels.count_true() != 0) {
    throw DataError("train split masks must be all normal");
  }
  return labels;
}

}  // namespace mvgw
