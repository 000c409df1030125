#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fediod/data.hpp"

namespace fediod {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);

void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

/// Area-averaged resample of a rows x cols image onto an out x out grid.
std::vector<double> area_downsample(const std::uint8_t* pixels, std::size_t rows, std::size_t cols,
                                    std::size_t out);

/// Loads an IDX image/label pair, maps 0..255 to [-1, 1], and area-averages each
/// image down to sqrt(dim) x sqrt(dim). `num_classes` 0 means max label + 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t dim,
                 std::size_t num_classes = 0);

}  // namespace fediod
