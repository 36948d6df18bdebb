#include "mvgwhiten/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mvgwhiten/errors.hpp"

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace mvgw::npy {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

// Returns the raw text following `'key':` up to the matching delimiter.
std::string_view dict_value(std::string_view dict, std::string_view key)
{
  const std::string quoted = "'" + std::string(key) + "'";
  auto pos = dict.find(quoted);
  if (pos == std::string_view::npos) throw FormatError("npy header missing key " + quoted);
  pos = dict.find(':', pos + quoted.size());
  if (pos == std::string_view::npos) throw FormatError("npy header malformed near " + quoted);
  auto rest = trim(dict.substr(pos + 1));
  if (rest.empty()) throw FormatError("npy header malformed near " + quoted);
  std::size_t end = 0;
  if (rest.front() == '\'') {
    end = rest.find('\'', 1);
    if (end == std::string_view::npos) throw FormatError("unterminated string in npy header");
    return rest.substr(1, end - 1);
  }
  if (rest.front() == '(') {
    end = rest.find(')');
    if (end == std::string_view::npos) throw FormatError("unterminated shape tuple in npy header");
    return rest.substr(1, end - 1);
  }
  end = rest.find_first_of(",}");
  return trim(rest.substr(0, end));
}

std::vector<std::size_t> parse_shape(std::string_view text)
{
  std::vector<std::size_t> shape;
  while (true) {
    text = trim(text);
    if (text.empty()) break;
    auto comma = text.find(',');
    auto token = trim(text.substr(0, comma));
    if (!token.empty()) {
      std::size_t value = 0;
      for (char ch : token) {
        if (ch == 'L') continue;
        if (ch < '0' || ch > '9') throw FormatError("bad dimension in npy shape: " + std::string(token));
        value = value * 10 + static_cast<std::size_t>(ch - '0');
      }
      shape.push_back(value);
    }
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return shape;
}

std::size_t element_size(Dtype dtype) { return dtype == Dtype::kFloat32 ? 4 : 8; }

std::size_t product(const std::vector<std::size_t>& shape)
{
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

std::size_t Array::element_count() const { return product(shape); }

Header parse_header(const std::string& bytes)
{
  if (bytes.size() < 10 || bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0) {
    throw FormatError("not an NPY file (bad magic)");
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t preamble = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    preamble = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw FormatError("truncated npy preamble");
    for (int i = 3; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + i]);
    preamble = 12;
  } else {
    throw FormatError("unsupported npy version " + std::to_string(major));
  }
  if (bytes.size() < preamble + header_len) throw FormatError("truncated npy header");
  const std::string_view dict(bytes.data() + preamble, header_len);
  if (dict.find('{') == std::string_view::npos || dict.find('}') == std::string_view::npos) {
    throw FormatError("npy header is not a dict");
  }

  Header header;
  const auto descr = dict_value(dict, "descr");
  if (descr == "<f8") {
    header.dtype = Dtype::kFloat64;
  } else if (descr == "<f4") {
    header.dtype = Dtype::kFloat32;
  } else {
    throw ShapeError("unsupported npy dtype '" + std::string(descr) + "' (expected <f4 or <f8)");
  }
  const auto fortran = dict_value(dict, "fortran_order");
  if (fortran == "True") {
    header.fortran_order = true;
  } else if (fortran != "False") {
    throw FormatError("bad fortran_order value in npy header");
  }
  header.shape = parse_shape(dict_value(dict, "shape"));
  header.data_offset = preamble + header_len;
  return header;
}

std::string format_header(Dtype dtype, const std::vector<std::size_t>& shape)
{
  std::ostringstream dict;
  dict << "{'descr': '" << (dtype == Dtype::kFloat32 ? "<f4" : "<f8") << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) dict << ", ";
    dict << shape[i];
  }
  if (shape.size() == 1) dict << ",";
  dict << "), }";
  std::string text = dict.str();
  // Pad so magic + version + length + header is a multiple of 64, newline-terminated.
  const std::size_t total = 10 + text.size() + 1;
  text.append((64 - total % 64) % 64, ' ');
  text.push_back('\n');

  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(text.size() & 0xff));
  out.push_back(static_cast<char>((text.size() >> 8) & 0xff));
  return out + text;
}

Array read(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file not found: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const Header header = parse_header(bytes);
  if (header.fortran_order) throw FormatError("fortran-ordered npy arrays are not supported: " + path.string());

  Array array;
  array.shape = header.shape;
  array.dtype = header.dtype;
  const std::size_t count = product(header.shape);
  const std::size_t payload = count * element_size(header.dtype);
  if (bytes.size() - header.data_offset < payload) throw FormatError("truncated npy payload: " + path.string());

  array.data.resize(count);
  const char* src = bytes.data() + header.data_offset;
  if (header.dtype == Dtype::kFloat64) {
    std::memcpy(array.data.data(), src, payload);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, src + 4 * i, 4);
      array.data[i] = static_cast<double>(v);
    }
  }
  return array;
}

void write(const std::filesystem::path& path, const Array& array, Dtype dtype)
{
  if (array.data.size() != array.element_count()) throw ShapeError("npy array data size does not match its shape");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::string header = format_header(dtype, array.shape);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  if (dtype == Dtype::kFloat64) {
    out.write(reinterpret_cast<const char*>(array.data.data()), static_cast<std::streamsize>(array.data.size() * 8));
  } else {
    std::vector<float> narrowed(array.data.begin(), array.data.end());
    out.write(reinterpret_cast<const char*>(narrowed.data()), static_cast<std::streamsize>(narrowed.size() * 4));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mvgw::npy
