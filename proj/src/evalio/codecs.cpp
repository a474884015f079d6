// Copyright 2026 The promptseed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "promptseed/codecs.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_f32le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_f32le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw FormatError(where + ": missing key '" + key + "'", 0);
  return obj.at(key);
}

}  // namespace

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width; ++x)
    for (int y = 0; y < mask.height; ++y) {
      const std::uint8_t v = mask.at(y, x) ? 1 : 0;
      if (v != current) {
        counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int height, int width) {
  if (height < 0 || width < 0) throw FormatError("rle: negative dimensions", 0);
  BinaryMask mask(height, width);
  const std::uint64_t total = static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  std::uint64_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t run : counts) {
    if (pos + run > total) throw FormatError("rle: runs exceed " + std::to_string(total) + " pixels", 0);
    for (std::uint32_t i = 0; i < run; ++i, ++pos) {
      if (value) {
        const int x = static_cast<int>(pos / static_cast<std::uint64_t>(height));
        const int y = static_cast<int>(pos % static_cast<std::uint64_t>(height));
        mask.at(y, x) = 1;
      }
    }
    value ^= 1;
  }
  if (pos != total) {
    throw FormatError("rle: runs cover " + std::to_string(pos) + " of " + std::to_string(total) + " pixels", 0);
  }
  return mask;
}

std::string encode_mask_json(const MaskFile& file) {
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& m : file.masks) {
    if (m.mask.height != file.height || m.mask.width != file.width) {
      throw DimensionError("mask file: entry dimensions differ from header");
    }
    masks.push_back({{"level", std::string(to_string(m.level))}, {"confidence", m.confidence}, {"rle", rle_encode(m.mask)}});
  }
  nlohmann::json doc{{"height", file.height}, {"width", file.width}, {"masks", masks}};
  return doc.dump() + "\n";
}

MaskFile decode_mask_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("mask file: malformed JSON: ") + e.what(), e.byte);
  }
  MaskFile file;
  try {
    file.height = require(doc, "height", "mask file").get<int>();
    file.width = require(doc, "width", "mask file").get<int>();
    const auto& masks = require(doc, "masks", "mask file");
    if (!masks.is_array()) throw FormatError("mask file: 'masks' is not an array", 0);
    std::size_t index = 0;
    for (const auto& m : masks) {
      const std::string where = "mask file: mask " + std::to_string(index++);
      const auto level = parse_mask_level(require(m, "level", where).get<std::string>());
      const double confidence = require(m, "confidence", where).get<double>();
      const auto counts = require(m, "rle", where).get<std::vector<std::uint32_t>>();
      file.masks.push_back(MaskEntry::make(rle_decode(counts, file.height, file.width), level, confidence));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("mask file: ") + e.what(), 0);
  } catch (const DomainError& e) {
    throw FormatError(std::string("mask file: ") + e.what(), 0);
  }
  return file;
}

void write_mask_file(const std::filesystem::path& path, const MaskFile& file) {
  write_file(path, encode_mask_json(file));
}

MaskFile read_mask_file(const std::filesystem::path& path) {
  try {
    return decode_mask_json(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

CamTensor CamTensor::from_stack(const CamStack& stack) {
  CamTensor t;
  t.shape = {static_cast<int>(stack.maps.size()), stack.height, stack.width};
  t.class_ids = stack.class_ids;
  t.data.reserve(stack.maps.size() * std::size_t(stack.height) * stack.width);
  for (const auto& m : stack.maps) {
    if (m.rows() != stack.height || m.cols() != stack.width) {
      throw DimensionError("cam tensor: map shape differs from stack shape");
    }
    for (int y = 0; y < stack.height; ++y)
      for (int x = 0; x < stack.width; ++x) t.data.push_back(static_cast<float>(m(y, x)));
  }
  if (stack.refined) t.extras["refined"] = true;
  return t;
}

CamStack CamTensor::to_stack() const {
  CamStack s;
  s.height = shape[1];
  s.width = shape[2];
  s.class_ids = class_ids;
  s.refined = extras.contains("refined") && extras.at("refined").get<bool>();
  std::size_t k = 0;
  for (int c = 0; c < shape[0]; ++c) {
    Eigen::MatrixXd m(shape[1], shape[2]);
    for (int y = 0; y < shape[1]; ++y)
      for (int x = 0; x < shape[2]; ++x) m(y, x) = data[k++];
    s.maps.push_back(std::move(m));
  }
  return s;
}

std::string encode_cam_tensor(const CamTensor& tensor) {
  const std::size_t expected = std::size_t(tensor.shape[0]) * tensor.shape[1] * tensor.shape[2];
  if (tensor.data.size() != expected) throw DimensionError("cam tensor: data length differs from shape");
  if (tensor.class_ids.size() != static_cast<std::size_t>(tensor.shape[0])) {
    throw DimensionError("cam tensor: one class id per channel required");
  }
  nlohmann::json header = tensor.extras.is_object() ? tensor.extras : nlohmann::json::object();
  header["shape"] = tensor.shape;
  header["class_ids"] = tensor.class_ids;
  header["dtype"] = "f32le";
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 4 * tensor.data.size());
  for (float v : tensor.data) put_f32le(out, v);
  return out;
}

CamTensor decode_cam_tensor(const std::string& bytes, std::size_t& offset) {
  const std::size_t start = offset;
  const std::size_t newline = bytes.find('\n', start);
  if (newline == std::string::npos) throw FormatError("cam tensor: header line not terminated", bytes.size());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(newline));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("cam tensor: malformed header: ") + e.what(), start + e.byte);
  }
  CamTensor t;
  try {
    if (!header.is_object()) throw FormatError("cam tensor: header is not an object", start);
    const auto shape = require(header, "shape", "cam tensor").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] < 0 || shape[1] < 0 || shape[2] < 0) {
      throw FormatError("cam tensor: shape must be three non-negative integers", start);
    }
    t.shape = {shape[0], shape[1], shape[2]};
    t.class_ids = require(header, "class_ids", "cam tensor").get<std::vector<int>>();
    if (t.class_ids.size() != static_cast<std::size_t>(shape[0])) {
      throw FormatError("cam tensor: class_ids length differs from channel count", start);
    }
    const auto dtype = require(header, "dtype", "cam tensor").get<std::string>();
    if (dtype != "f32le") throw FormatError("cam tensor: unsupported dtype '" + dtype + "'", start);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cam tensor: bad header field: ") + e.what(), start);
  }
  header.erase("shape");
  header.erase("class_ids");
  header.erase("dtype");
  t.extras = std::move(header);

  const std::size_t count = std::size_t(t.shape[0]) * t.shape[1] * t.shape[2];
  const std::size_t data_begin = newline + 1;
  const std::size_t available = bytes.size() - data_begin;
  if (available < 4 * count) {
    throw FormatError("cam tensor: truncated data, expected " + std::to_string(4 * count) + " bytes, found " +
                          std::to_string(available),
                      bytes.size());
  }
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) t.data[i] = get_f32le(bytes.data() + data_begin + 4 * i);
  offset = data_begin + 4 * count;
  return t;
}

CamTensor decode_cam_tensor(const std::string& bytes) {
  std::size_t offset = 0;
  CamTensor t = decode_cam_tensor(bytes, offset);
  if (offset != bytes.size()) throw FormatError("cam tensor: trailing bytes", offset);
  return t;
}

void write_cam_tensor(const std::filesystem::path& path, const CamTensor& tensor) {
  write_file(path, encode_cam_tensor(tensor));
}

CamTensor read_cam_tensor(const std::filesystem::path& path) {
  try {
    return decode_cam_tensor(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

namespace {

std::vector<std::uint8_t> png_encode(const std::uint8_t* pixels, int height, int width, std::uint32_t format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> png_decode(const std::vector<std::uint8_t>& bytes, std::uint32_t format, int& height,
                                     int& width) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png decode failed: ") + img.message, 0);
  }
  img.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(std::string("png decode failed: ") + img.message, 0);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return pixels;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  return {s.begin(), s.end()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace

std::vector<std::uint8_t> encode_seed_png(const SeedMap& seed) {
  if (seed.height <= 0 || seed.width <= 0) throw DimensionError("seed png: empty seed map");
  return png_encode(seed.labels.data(), seed.height, seed.width, PNG_FORMAT_GRAY);
}

SeedMap decode_seed_png(const std::vector<std::uint8_t>& bytes) {
  int h = 0, w = 0;
  auto pixels = png_decode(bytes, PNG_FORMAT_GRAY, h, w);
  SeedMap seed(h, w);
  seed.labels = std::move(pixels);
  return seed;
}

void write_seed_png(const std::filesystem::path& path, const SeedMap& seed) {
  write_bytes(path, encode_seed_png(seed));
}

SeedMap read_seed_png(const std::filesystem::path& path) {
  try {
    return decode_seed_png(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

nlohmann::json seed_sidecar(const std::vector<std::string>& foreground_names) {
  nlohmann::json j = nlohmann::json::object();
  j["0"] = "background";
  for (std::size_t k = 0; k < foreground_names.size(); ++k) j[std::to_string(k + 1)] = foreground_names[k];
  return j;
}

void write_seed_with_sidecar(const std::filesystem::path& png_path, const SeedMap& seed,
                             const std::vector<std::string>& foreground_names) {
  write_seed_png(png_path, seed);
  std::filesystem::path sidecar = png_path;
  sidecar.replace_extension(".json");
  write_file(sidecar, seed_sidecar(foreground_names).dump(2) + "\n");
}

std::vector<std::uint8_t> encode_image_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DimensionError("image png: need 1 or 3 channels");
  std::vector<std::uint8_t> pixels(image.data.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  }
  return png_encode(pixels.data(), image.height, image.width,
                    image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY);
}

Image decode_image_png(const std::vector<std::uint8_t>& bytes) {
  int h = 0, w = 0;
  auto pixels = png_decode(bytes, PNG_FORMAT_RGB, h, w);
  Image img(h, w, 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) img.data[i] = pixels[i] / 255.0;
  return img;
}

void write_image_png(const std::filesystem::path& path, const Image& image) {
  write_bytes(path, encode_image_png(image));
}

Image read_image_png(const std::filesystem::path& path) {
  try {
    return decode_image_png(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read error on " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on " + path.string());
}

}  // namespace promptseed
