#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cme/types.hpp"

namespace cme {

// FeatureMap text format: first line "h w c", then h*w*c whitespace-separated
// decimal values. Values are written with 17 significant digits so a
// save/load cycle is bit-exact.
FeatureMap parse_feature_map(std::string_view text);
std::string format_feature_map(const FeatureMap& fm);
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path);

// Plain PGM (P2, maxval 255). Pixel = floor(255 * m + 0.5).
std::string format_mask_pgm(const Mask& mask);
void save_mask_pgm(const Mask& mask, const std::filesystem::path& path);
// Pixels are mapped back as value / maxval.
Mask parse_mask_pgm(std::string_view text);
Mask load_mask_pgm(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace cme
