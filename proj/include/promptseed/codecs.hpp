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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseed/backend.hpp"
#include "promptseed/cam.hpp"
#include "promptseed/raster.hpp"

namespace promptseed {

// Column-major run lengths, first run counting zeros (possibly empty).
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int height, int width);

struct MaskFile {
  int height = 0;
  int width = 0;
  std::vector<MaskEntry> masks;
  bool operator==(const MaskFile&) const = default;
};

std::string encode_mask_json(const MaskFile& file);
MaskFile decode_mask_json(const std::string& text);
void write_mask_file(const std::filesystem::path& path, const MaskFile& file);
MaskFile read_mask_file(const std::filesystem::path& path);

/// C x H x W little-endian float32 tensor behind a one-line JSON header.
/// Header keys other than shape, class_ids and dtype are kept in `extras`.
struct CamTensor {
  std::array<int, 3> shape{0, 0, 0};
  std::vector<int> class_ids;
  std::vector<float> data;  // row-major (C, H, W)
  nlohmann::json extras = nlohmann::json::object();

  static CamTensor from_stack(const CamStack& stack);
  CamStack to_stack() const;
  bool operator==(const CamTensor&) const = default;
};

std::string encode_cam_tensor(const CamTensor& tensor);
/// Decodes one tensor starting at `offset`; on return `offset` points past it.
CamTensor decode_cam_tensor(const std::string& bytes, std::size_t& offset);
CamTensor decode_cam_tensor(const std::string& bytes);
void write_cam_tensor(const std::filesystem::path& path, const CamTensor& tensor);
CamTensor read_cam_tensor(const std::filesystem::path& path);

/// 8-bit single-channel PNG.
std::vector<std::uint8_t> encode_seed_png(const SeedMap& seed);
SeedMap decode_seed_png(const std::vector<std::uint8_t>& bytes);
void write_seed_png(const std::filesystem::path& path, const SeedMap& seed);
SeedMap read_seed_png(const std::filesystem::path& path);

/// {"0": "background", "k": name of foreground class k-1, ...}
nlohmann::json seed_sidecar(const std::vector<std::string>& foreground_names);
void write_seed_with_sidecar(const std::filesystem::path& png_path, const SeedMap& seed,
                             const std::vector<std::string>& foreground_names);

/// 8-bit RGB (or gray) PNG; values are scaled to and from [0, 1].
std::vector<std::uint8_t> encode_image_png(const Image& image);
Image decode_image_png(const std::vector<std::uint8_t>& bytes);
void write_image_png(const std::filesystem::path& path, const Image& image);
Image read_image_png(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace promptseed
