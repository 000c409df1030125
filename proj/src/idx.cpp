#include "fediod/idx.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fediod {

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size()) throw DataError(path + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
  const auto bytes = slurp(path);
  const std::uint32_t magic = be32(bytes, 0, path);
  if (magic != kIdxImageMagic) throw DataError(path + ": bad IDX image magic " + hex(magic));
  IdxImages img;
  img.count = be32(bytes, 4, path);
  img.rows = be32(bytes, 8, path);
  img.cols = be32(bytes, 12, path);
  const std::size_t need = std::size_t{img.count} * img.rows * img.cols;
  if (bytes.size() < 16 + need) throw DataError(path + ": truncated pixel data");
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto bytes = slurp(path);
  const std::uint32_t magic = be32(bytes, 0, path);
  if (magic != kIdxLabelMagic) throw DataError(path + ": bad IDX label magic " + hex(magic));
  const std::uint32_t count = be32(bytes, 4, path);
  if (bytes.size() < 8 + std::size_t{count}) throw DataError(path + ": truncated label data");
  return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  put_be32(out, kIdxImageMagic);
  put_be32(out, images.count);
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

std::vector<double> area_downsample(const std::uint8_t* pixels, std::size_t rows, std::size_t cols,
                                    std::size_t out) {
  // Each output cell covers [i*rows/out, (i+1)*rows/out) in source units; source
  // pixels contribute in proportion to the overlapped area.
  std::vector<double> res(out * out, 0.0);
  const double sy = static_cast<double>(rows) / static_cast<double>(out);
  const double sx = static_cast<double>(cols) / static_cast<double>(out);
  for (std::size_t oy = 0; oy < out; ++oy) {
    const double y0 = static_cast<double>(oy) * sy, y1 = y0 + sy;
    for (std::size_t ox = 0; ox < out; ++ox) {
      const double x0 = static_cast<double>(ox) * sx, x1 = x0 + sx;
      double acc = 0.0;
      for (auto r = static_cast<std::size_t>(std::floor(y0)); r < rows && static_cast<double>(r) < y1; ++r) {
        const double hy = std::min(y1, static_cast<double>(r + 1)) - std::max(y0, static_cast<double>(r));
        if (hy <= 0) continue;
        for (auto c = static_cast<std::size_t>(std::floor(x0)); c < cols && static_cast<double>(c) < x1; ++c) {
          const double hx = std::min(x1, static_cast<double>(c + 1)) - std::max(x0, static_cast<double>(c));
          if (hx <= 0) continue;
          acc += hy * hx * pixels[r * cols + c];
        }
      }
      res[oy * out + ox] = acc / (sy * sx);
    }
  }
  return res;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t dim,
                 std::size_t num_classes) {
  const auto images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (images.count != labels.size()) {
    throw DataError("image count " + std::to_string(images.count) + " does not match label count " +
                    std::to_string(labels.size()));
  }
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim || side == 0) throw DataError("IDX target dim must be a perfect square");

  Dataset ds;
  ds.name = "idx";
  ds.dim = dim;
  const std::size_t px = std::size_t{images.rows} * images.cols;
  for (std::size_t i = 0; i < images.count; ++i) {
    const auto cell = area_downsample(&images.pixels[i * px], images.rows, images.cols, side);
    for (double v : cell) ds.inputs.push_back(std::clamp(v / 255.0 * 2.0 - 1.0, -1.0, 1.0));
    ds.labels.push_back(labels[i]);
  }
  const std::size_t max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  ds.num_classes = num_classes ? num_classes : max_label + 1;
  ds.validate();
  return ds;
}

}  // namespace fediod
