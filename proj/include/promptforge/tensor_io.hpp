#pragma once

#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptforge/error.hpp"
#include "promptforge/prompt.hpp"

namespace promptforge {

// ---------------------------------------------------------------------------
// Feature tensors
// ---------------------------------------------------------------------------

/// Row-major float32 tensor as stored in an FPT1 file.
struct TensorFile {
  static constexpr std::string_view kDtype = "f32";

  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t rank() const { return shape.size(); }

  friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

namespace detail {

inline constexpr char kTensorMagic[6] = {'F', 'P', 'T', '1', '\n', '\0'};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "read failed for " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline bool checked_product(std::span<const std::size_t> dims, std::size_t& out) {
  std::size_t product = 1;
  for (std::size_t d : dims) {
    if (d != 0 && product > std::numeric_limits<std::size_t>::max() / d) return false;
    product *= d;
  }
  out = product;
  return true;
}

// Reads one '\n'-terminated line starting at pos; advances pos past the newline.
inline bool next_line(std::string_view bytes, std::size_t& pos, std::string_view& line) {
  const auto end = bytes.find('\n', pos);
  if (end == std::string_view::npos) return false;
  line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return true;
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  }
  return v;
}

}  // namespace detail

inline std::string encode_tensor(const TensorFile& tensor) {
  if (tensor.rank() < 2 || tensor.rank() > 3) {
    throw Error(ErrorKind::InvalidArgument, "tensor rank must be 2 or 3");
  }
  std::size_t count = 0;
  if (!detail::checked_product(tensor.shape, count)) {
    throw Error(ErrorKind::DimensionOverflow, "shape product overflows");
  }
  if (count != tensor.data.size()) {
    throw Error(ErrorKind::DimensionMismatch, "shape product " + std::to_string(count) +
                                                  " != element count " +
                                                  std::to_string(tensor.data.size()));
  }
  std::string out(detail::kTensorMagic, sizeof(detail::kTensorMagic));
  out += "dtype=f32\nshape=";
  for (std::size_t i = 0; i < tensor.shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(tensor.shape[i]);
  }
  out += "\n\n";
  const std::size_t header = out.size();
  out.resize(header + count * sizeof(float));
  for (std::size_t i = 0; i < count; ++i) {
    const auto word = detail::to_little_endian(std::bit_cast<std::uint32_t>(tensor.data[i]));
    std::memcpy(out.data() + header + i * sizeof(float), &word, sizeof(word));
  }
  return out;
}

inline TensorFile decode_tensor(std::string_view bytes) {
  if (bytes.size() < sizeof(detail::kTensorMagic) ||
      std::memcmp(bytes.data(), detail::kTensorMagic, sizeof(detail::kTensorMagic)) != 0) {
    throw Error(ErrorKind::MalformedHeader, "bad magic, expected FPT1");
  }
  std::size_t pos = sizeof(detail::kTensorMagic);
  std::string_view line;

  if (!detail::next_line(bytes, pos, line) || !line.starts_with("dtype=")) {
    throw Error(ErrorKind::MalformedHeader, "missing dtype line");
  }
  if (line.substr(6) != TensorFile::kDtype) {
    throw Error(ErrorKind::UnsupportedDtype, "dtype '" + std::string(line.substr(6)) +
                                                 "' is not supported (only f32)");
  }

  if (!detail::next_line(bytes, pos, line) || !line.starts_with("shape=")) {
    throw Error(ErrorKind::MalformedHeader, "missing shape line");
  }
  TensorFile tensor;
  std::string_view dims = line.substr(6);
  while (true) {
    const auto comma = dims.find(',');
    const auto token = dims.substr(0, comma);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
      if (ec == std::errc::result_out_of_range) {
        throw Error(ErrorKind::DimensionOverflow, "dimension too large: " + std::string(token));
      }
      throw Error(ErrorKind::MalformedHeader, "bad shape entry '" + std::string(token) + "'");
    }
    tensor.shape.push_back(value);
    if (comma == std::string_view::npos) break;
    dims.remove_prefix(comma + 1);
  }
  if (tensor.shape.size() < 2 || tensor.shape.size() > 3) {
    throw Error(ErrorKind::MalformedHeader, "shape rank must be 2 or 3");
  }
  if (!detail::next_line(bytes, pos, line) || !line.empty()) {
    throw Error(ErrorKind::MalformedHeader, "missing blank line after header");
  }

  std::size_t count = 0;
  if (!detail::checked_product(tensor.shape, count) ||
      count > std::numeric_limits<std::size_t>::max() / sizeof(float)) {
    throw Error(ErrorKind::DimensionOverflow, "shape product overflows");
  }
  const std::size_t payload = bytes.size() - pos;
  if (payload < count * sizeof(float)) {
    throw Error(ErrorKind::TruncatedData, "expected " + std::to_string(count * sizeof(float)) +
                                              " data bytes, found " + std::to_string(payload));
  }
  if (payload > count * sizeof(float)) {
    throw Error(ErrorKind::MalformedHeader, "trailing bytes after tensor data");
  }
  tensor.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t word = 0;
    std::memcpy(&word, bytes.data() + pos + i * sizeof(float), sizeof(word));
    tensor.data[i] = std::bit_cast<float>(detail::to_little_endian(word));
  }
  return tensor;
}

inline TensorFile load_tensor(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_tensor(std::string_view(bytes.data(), bytes.size()));
}

inline void save_tensor(const TensorFile& tensor, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_tensor(tensor));
}

// ---------------------------------------------------------------------------
// Rasters
// ---------------------------------------------------------------------------

/// 8-bit grayscale raster (PGM P5 payload).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary mask, row-major, values in {0, 1}.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  MaskImage() = default;
  MaskImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t area() const {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
  }

  friend bool operator==(const MaskImage&, const MaskImage&) = default;
};

inline constexpr int kMaxRasterSide = 1 << 16;

inline GrayImage decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw Error(ErrorKind::UnsupportedFormat, "expected binary PGM (P5)");
  }
  std::size_t pos = 2;
  auto read_header_int = [&](const char* what) -> long long {
    // Whitespace and '#' comments may separate header fields.
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
    if (ec == std::errc::result_out_of_range) {
      throw Error(ErrorKind::DimensionOverflow, std::string(what) + " out of range");
    }
    if (ec != std::errc{}) throw Error(ErrorKind::UnsupportedFormat, std::string("bad PGM ") + what);
    pos = static_cast<std::size_t>(ptr - bytes.data());
    return value;
  };
  const long long width = read_header_int("width");
  const long long height = read_header_int("height");
  const long long maxval = read_header_int("maxval");
  if (width < 1 || height < 1 || width > kMaxRasterSide || height > kMaxRasterSide) {
    throw Error(ErrorKind::DimensionOverflow,
                "PGM dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                    " outside [1, " + std::to_string(kMaxRasterSide) + "]");
  }
  if (maxval < 1 || maxval > 255) {
    throw Error(ErrorKind::UnsupportedFormat, "only 8-bit PGM (maxval <= 255) is supported");
  }
  if (pos >= bytes.size()) throw Error(ErrorKind::TruncatedData, "PGM header not terminated");
  ++pos;  // single whitespace before raster
  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < count) {
    throw Error(ErrorKind::TruncatedData, "PGM raster shorter than " + std::to_string(count));
  }
  GrayImage image{static_cast<int>(width), static_cast<int>(height), {}};
  image.data.assign(reinterpret_cast<const std::uint8_t*>(bytes.data() + pos),
                    reinterpret_cast<const std::uint8_t*>(bytes.data() + pos + count));
  return image;
}

inline std::string encode_pgm(const GrayImage& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw Error(ErrorKind::DimensionMismatch, "raster size does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.data.data()), image.data.size());
  return out;
}

inline GrayImage load_gray(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_pgm(std::string_view(bytes.data(), bytes.size()));
}

inline void save_gray(const GrayImage& image, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_pgm(image));
}

/// Any nonzero pixel becomes 1.
inline MaskImage threshold_mask(const GrayImage& image) {
  MaskImage mask(image.width, image.height);
  for (std::size_t i = 0; i < image.data.size(); ++i) mask.data[i] = image.data[i] != 0 ? 1 : 0;
  return mask;
}

inline MaskImage load_mask(const std::filesystem::path& path) {
  return threshold_mask(load_gray(path));
}

/// Writes 0 / 255.
inline void save_mask(const MaskImage& mask, const std::filesystem::path& path) {
  GrayImage image{mask.width, mask.height, std::vector<std::uint8_t>(mask.data.size())};
  for (std::size_t i = 0; i < mask.data.size(); ++i) image.data[i] = mask.data[i] ? 255 : 0;
  save_gray(image, path);
}

// ---------------------------------------------------------------------------
// Prompt schemes
// ---------------------------------------------------------------------------

inline nlohmann::json scheme_to_json(const PromptScheme& scheme) {
  nlohmann::json j;
  j["image_size"] = {scheme.image_width, scheme.image_height};
  for (PromptClass cls : kAllPromptClasses) {
    auto arr = nlohmann::json::array();
    for (const auto& p : scheme.points) {
      if (p.cls == cls) arr.push_back({p.x, p.y});
    }
    j[std::string(to_string(cls))] = std::move(arr);
  }
  return j;
}

inline PromptScheme scheme_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& why) -> void {
    throw Error(ErrorKind::MalformedInput, "prompt scheme: " + why);
  };
  if (!j.is_object()) fail("not a JSON object");
  const auto size = j.find("image_size");
  if (size == j.end() || !size->is_array() || size->size() != 2 ||
      !(*size)[0].is_number_integer() || !(*size)[1].is_number_integer()) {
    fail("image_size must be [w, h]");
  }
  PromptScheme scheme;
  scheme.image_width = (*size)[0].get<int>();
  scheme.image_height = (*size)[1].get<int>();
  if (scheme.image_width < 1 || scheme.image_height < 1) fail("image_size must be positive");
  for (PromptClass cls : kAllPromptClasses) {
    const std::string key(to_string(cls));
    const auto arr = j.find(key);
    if (arr == j.end()) continue;
    if (!arr->is_array()) fail(key + " must be an array");
    for (const auto& item : *arr) {
      if (!item.is_array() || item.size() != 2 || !item[0].is_number_integer() ||
          !item[1].is_number_integer()) {
        fail(key + " entries must be [x, y] integer pairs");
      }
      PromptPoint p{item[0].get<int>(), item[1].get<int>(), cls};
      if (!scheme.in_bounds(p)) fail(key + " point outside image");
      scheme.add(p);
    }
  }
  return scheme;
}

inline std::string encode_scheme(const PromptScheme& scheme) {
  return scheme_to_json(scheme).dump(2) + "\n";
}

inline void save_prompt_scheme(const PromptScheme& scheme, const std::filesystem::path& path) {
  for (const auto& p : scheme.points) {
    if (!scheme.in_bounds(p)) {
      throw Error(ErrorKind::OutOfRange, "point (" + std::to_string(p.x) + "," +
                                             std::to_string(p.y) + ") outside image");
    }
  }
  detail::write_file_bytes(path, encode_scheme(scheme));
}

inline PromptScheme load_prompt_scheme(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::MalformedInput, std::string("prompt scheme JSON: ") + e.what());
  }
  return scheme_from_json(j);
}

}  // namespace promptforge
