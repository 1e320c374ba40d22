// Copyright 2026 The fundus-lesion-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <png.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fundus/error.hpp"
#include "fundus/image.hpp"

namespace fundus {

/// Reads an 8-bit PNG. Gray (with or without alpha) loads as one channel,
/// everything else as RGB; alpha is composited onto black.
inline Raster read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(Errc::io, "cannot read PNG '" + path.string() + "': " + image.message);

  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    fail(Errc::io, "PNG '" + path.string() + "' has no pixels");
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&image, &black, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::io, "cannot decode PNG '" + path.string() + "': " + msg);
  }
  return Raster(static_cast<int>(image.width), static_cast<int>(image.height),
                channels, std::move(buffer));
}

inline void write_png(const std::filesystem::path& path, const Raster& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data().data(), 0,
                               nullptr))
    fail(Errc::io, "cannot write PNG '" + path.string() + "': " + image.message);
}

inline BinaryMask read_mask_png(const std::filesystem::path& path) {
  return BinaryMask::from_raster(read_png(path));
}

inline void write_mask_png(const std::filesystem::path& path,
                           const BinaryMask& m) {
  write_png(path, m.to_raster());
}

}  // namespace fundus
