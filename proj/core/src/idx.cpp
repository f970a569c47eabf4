#include <cmath>
#include <cstdint>
#include <string>

#include "advkit/dataset.hpp"
#include "advkit/error.hpp"
#include "advkit/io.hpp"

namespace advkit {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& what) {
  if (bytes.size() < offset + 4)
    fail(Errc::truncated, what + ": header ends at byte " + std::to_string(bytes.size()));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::vector<std::string> class_names) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);
  const std::string iname = images_path.string(), lname = labels_path.string();

  const std::uint32_t imagic = read_be32(img, 0, iname);
  if (imagic != kImageMagic)
    fail(Errc::bad_magic, iname + ": image magic " + hex32(imagic) + ", expected " +
                              hex32(kImageMagic));
  const std::uint32_t lmagic = read_be32(lab, 0, lname);
  if (lmagic != kLabelMagic)
    fail(Errc::bad_magic, lname + ": label magic " + hex32(lmagic) + ", expected " +
                              hex32(kLabelMagic));

  const std::uint32_t count = read_be32(img, 4, iname);
  const std::uint32_t rows = read_be32(img, 8, iname);
  const std::uint32_t cols = read_be32(img, 12, iname);
  const std::uint32_t label_count = read_be32(lab, 4, lname);
  if (count != label_count)
    fail(Errc::dimension_mismatch, iname + " holds " + std::to_string(count) + " images but " +
                                       lname + " holds " + std::to_string(label_count) +
                                       " labels");
  if (rows == 0 || cols == 0) fail(Errc::corrupt_header, iname + ": zero image extent");

  const std::size_t plane = std::size_t{rows} * cols;
  const std::size_t need_img = 16 + std::size_t{count} * plane;
  if (img.size() < need_img)
    fail(Errc::truncated, iname + ": " + std::to_string(img.size()) + " bytes, header implies " +
                              std::to_string(need_img));
  if (img.size() > need_img)
    fail(Errc::corrupt_header, iname + ": " + std::to_string(img.size() - need_img) +
                                   " trailing bytes");
  const std::size_t need_lab = 8 + std::size_t{count};
  if (lab.size() < need_lab)
    fail(Errc::truncated, lname + ": " + std::to_string(lab.size()) + " bytes, header implies " +
                              std::to_string(need_lab));
  if (lab.size() > need_lab)
    fail(Errc::corrupt_header, lname + ": " + std::to_string(lab.size() - need_lab) +
                                   " trailing bytes");

  std::vector<Tensor> images;
  std::vector<int> labels;
  images.reserve(count);
  labels.reserve(count);
  const auto* pixels = reinterpret_cast<const unsigned char*>(img.data() + 16);
  const auto* tags = reinterpret_cast<const unsigned char*>(lab.data() + 8);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t(Shape{1, rows, cols});
    for (std::size_t p = 0; p < plane; ++p) t[p] = static_cast<float>(pixels[i * plane + p]) / 255.0f;
    images.push_back(std::move(t));
    labels.push_back(tags[i]);
  }
  return Dataset(std::move(images), std::move(labels), std::move(class_names));
}

void save_idx(const Dataset& dataset, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  const Shape& s = dataset.image_shape();
  if (s[0] != 1)
    fail(Errc::invalid_argument, "IDX holds single-channel images, dataset has " +
                                     std::to_string(s[0]) + " channels");
  for (int l : dataset.labels())
    if (l > 255) fail(Errc::out_of_range, "IDX labels are bytes, got " + std::to_string(l));
  std::string img, lab;
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(dataset.size()));
  put_be32(img, static_cast<std::uint32_t>(s[1]));
  put_be32(img, static_cast<std::uint32_t>(s[2]));
  img.reserve(16 + dataset.size() * s.numel());
  for (const Tensor& t : dataset.images())
    for (float v : t.data()) img.push_back(static_cast<char>(std::lround(v * 255.0f)));
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (int l : dataset.labels()) lab.push_back(static_cast<char>(l));
  write_file_atomic(images_path, img);
  write_file_atomic(labels_path, lab);
}

}  // namespace advkit
