// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "iforge/geometry.hpp"

namespace iforge {

// 8-bit RGBA PNG. The alpha channel doubles as the silhouette mask.
// Grayscale / RGB / paletted inputs are expanded to RGBA on load.
ImageRGBA load_image(const std::filesystem::path& path);
void save_image(const ImageRGBA& image, const std::filesystem::path& path);

}  // namespace iforge
