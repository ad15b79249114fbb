#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedtan/data/dataset.hpp"

namespace fedtan::data {

enum class IdxErrorKind { Io, BadMagic, Truncated, CountMismatch };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  IdxErrorKind kind() const { return kind_; }

 private:
  IdxErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrorKind::Io, "idx: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::string& name) {
  if (buf.size() < offset + 4)
    throw IdxError(IdxErrorKind::Truncated, "idx: " + name + " header truncated");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace detail

// Parses a big-endian IDX image/label pair. Pixel bytes are scaled by 1/255.
inline LabeledDataset load_mnist_idx(const std::filesystem::path& images_path,
                                     const std::filesystem::path& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);

  const std::uint32_t image_magic = detail::read_be32(images, 0, "images");
  if (image_magic != kIdxImagesMagic)
    throw IdxError(IdxErrorKind::BadMagic, "idx: images magic " + std::to_string(image_magic));
  const std::uint32_t label_magic = detail::read_be32(labels, 0, "labels");
  if (label_magic != kIdxLabelsMagic)
    throw IdxError(IdxErrorKind::BadMagic, "idx: labels magic " + std::to_string(label_magic));

  const std::uint32_t count = detail::read_be32(images, 4, "images");
  const std::uint32_t rows = detail::read_be32(images, 8, "images");
  const std::uint32_t cols = detail::read_be32(images, 12, "images");
  const std::uint32_t label_count = detail::read_be32(labels, 4, "labels");
  if (count != label_count)
    throw IdxError(IdxErrorKind::CountMismatch, "idx: " + std::to_string(count) + " images vs " +
                                                    std::to_string(label_count) + " labels");

  const std::size_t pixels = std::size_t{rows} * cols;
  if (images.size() < 16 + std::size_t{count} * pixels)
    throw IdxError(IdxErrorKind::Truncated, "idx: image payload truncated");
  if (labels.size() < 8 + std::size_t{count})
    throw IdxError(IdxErrorKind::Truncated, "idx: label payload truncated");
  if (count == 0) throw IdxError(IdxErrorKind::Truncated, "idx: empty dataset");

  LabeledDataset ds{Matrix(count, static_cast<Index>(pixels)), std::vector<int>(count), 0};
  const unsigned char* px = images.data() + 16;
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < pixels; ++j)
      ds.samples(i, static_cast<Index>(j)) = static_cast<double>(px[i * pixels + j]) / 255.0;
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    ds.labels[i] = labels[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = std::max(10, max_label + 1);
  return ds;
}

}  // namespace fedtan::data
