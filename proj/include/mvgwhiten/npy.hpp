#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mvgw::npy {

enum class Dtype { kFloat32, kFloat64 };

/// A C-ordered float array as stored in an NPY file. Values are always held
/// as doubles; `dtype` records the on-disk element type.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  Dtype dtype = Dtype::kFloat64;

  std::size_t element_count() const;
};

struct Header {
  Dtype dtype = Dtype::kFloat64;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
  std::size_t data_offset = 0;
};

// Parses the preamble and dict header of an in-memory NPY image.
Header parse_header(const std::string& bytes);

std::string format_header(Dtype dtype, const std::vector<std::size_t>& shape);

Array read(const std::filesystem::path& path);

/// Writes `array` as NPY v1.0 in `dtype` (narrowing to float32 if asked).
void write(const std::filesystem::path& path, const Array& array, Dtype dtype);
inline void write(const std::filesystem::path& path, const Array& array) { write(path, array, array.dtype); }

}  // namespace mvgw::npy
