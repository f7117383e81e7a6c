#pragma once

#include <string>
#include <vector>

#include "fse/dataset.hpp"

namespace fse {

// IDX binary format (big-endian dims): magic 0x00000803 for ubyte images,
// 0x00000801 for ubyte labels. Pixel bytes map to [0,1] as v/255.
ImageDataset load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// Loads images and, when a label path is given, attaches labels; image/label
// count mismatch is an error.
ImageDataset ingest_idx(const std::string& images_path, const std::string& labels_path = "");

void write_idx_images(const std::string& path, const ImageDataset& data);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

}  // namespace fse
