#include "fse/idx_io.hpp"

#include <cstdint>
#include <fstream>

#include "fse/error.hpp"

namespace fse {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_be32(std::ifstream& f, const std::string& path, int64_t offset) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4)
    fail("idx: '", path, "' truncated at byte offset ", offset, " (expected 4-byte field)");
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be32(std::ofstream& f, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

ImageDataset load_idx_images(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "idx: cannot open '", path, "'");
  const uint32_t magic = read_be32(f, path, 0);
  require(magic == kImageMagic, "idx: '", path, "' has magic 0x", std::hex, magic,
          ", expected image magic 0x00000803");
  const int64_t n = read_be32(f, path, 4);
  const int64_t h = read_be32(f, path, 8);
  const int64_t w = read_be32(f, path, 12);
  require(n > 0 && h > 0 && w > 0, "idx: '", path, "' has empty dimensions ", n, "x", h, "x", w);
  ImageDataset out;
  out.n = n;
  out.height = h;
  out.width = w;
  std::vector<unsigned char> raw(static_cast<size_t>(n * h * w));
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    fail("idx: '", path, "' truncated at byte offset ", 16 + f.gcount(), " (expected ",
         16 + static_cast<int64_t>(raw.size()), " bytes total)");
  out.pixels.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.is_open(), "idx: cannot open '", path, "'");
  const uint32_t magic = read_be32(f, path, 0);
  require(magic == kLabelMagic, "idx: '", path, "' has magic 0x", std::hex, magic,
          ", expected label magic 0x00000801");
  const int64_t n = read_be32(f, path, 4);
  std::vector<unsigned char> raw(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    fail("idx: '", path, "' truncated at byte offset ", 8 + f.gcount(), " (expected ",
         8 + n, " bytes total)");
  return {raw.begin(), raw.end()};
}

ImageDataset ingest_idx(const std::string& images_path, const std::string& labels_path) {
  ImageDataset data = load_idx_images(images_path);
  if (!labels_path.empty()) {
    std::vector<int> labels = load_idx_labels(labels_path);
    require(static_cast<int64_t>(labels.size()) == data.n, "idx: ", labels.size(), " labels in '",
            labels_path, "' but ", data.n, " images in '", images_path, "'");
    data.labels = std::move(labels);
  }
  return data;
}

void write_idx_images(const std::string& path, const ImageDataset& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.is_open(), "idx: cannot write '", path, "'");
  write_be32(f, kImageMagic);
  write_be32(f, static_cast<uint32_t>(data.n));
  write_be32(f, static_cast<uint32_t>(data.height));
  write_be32(f, static_cast<uint32_t>(data.width));
  std::vector<unsigned char> raw(data.pixels.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const float v = data.pixels[i];
    require(v >= 0.0f && v <= 1.0f, "idx: pixel value ", v, " outside [0,1]");
    raw[i] = static_cast<unsigned char>(v * 255.0f + 0.5f);
  }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(f.good(), "idx: write failed for '", path, "'");
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.is_open(), "idx: cannot write '", path, "'");
  write_be32(f, kLabelMagic);
  write_be32(f, static_cast<uint32_t>(labels.size()));
  std::vector<unsigned char> raw(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] <= 255, "idx: label ", labels[i], " outside [0,255]");
    raw[i] = static_cast<unsigned char>(labels[i]);
  }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(f.good(), "idx: write failed for '", path, "'");
}

}  // namespace fse
