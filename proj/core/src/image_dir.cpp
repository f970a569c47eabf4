#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "advkit/dataset.hpp"
#include "advkit/error.hpp"
#include "advkit/io.hpp"

namespace advkit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decodes an 8-bit grayscale or RGB PNG into [C,H,W] floats in [0,1].
Tensor read_png(const std::filesystem::path& path, const std::string& where) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(Errc::io_failure, where + ": cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(Errc::bad_magic, where + ": " + path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Errc::io_failure, "libpng initialisation failed");
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::corrupt_header, where + ": cannot decode " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  const bool gray = color_type == PNG_COLOR_TYPE_GRAY;
  const bool rgb = color_type == PNG_COLOR_TYPE_RGB;
  if (bit_depth != 8 || !(gray || rgb)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::unknown_format, where + ": " + path.string() +
                                   " must be 8-bit grayscale or RGB (bit depth " +
                                   std::to_string(bit_depth) + ", color type " +
                                   std::to_string(color_type) + ")");
  }
  const std::size_t channels = gray ? 1 : 3;
  const std::size_t row_bytes = width * channels;
  pixels.resize(row_bytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor t(Shape{channels, height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        t[(c * height + y) * width + x] = static_cast<float>(pixels[y * row_bytes + x * channels + c]) / 255.0f;
  return t;
}

}  // namespace

void save_png(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    fail(Errc::shape_mismatch, "save_png expects [1|3,H,W], got " + image.shape().str());
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> pixels(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        const float v = std::min(1.0f, std::max(0.0f, image[(k * h + y) * w + x]));
        pixels[(y * w + x) * c + k] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    FilePtr file(std::fopen(tmp.c_str(), "wb"));
    if (!file) fail(Errc::io_failure, "cannot create " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      fail(Errc::io_failure, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      fail(Errc::io_failure, "PNG encode failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y) png_write_row(png, pixels.data() + y * w * c);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

Dataset load_image_dir(const std::filesystem::path& root) {
  const auto csv_path = root / "labels.csv";
  std::ifstream csv(csv_path);
  if (!csv) fail(Errc::io_failure, "cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line)) fail(Errc::corrupt_header, csv_path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "filename,label_index")
    fail(Errc::corrupt_header, csv_path.string() + ": header must be \"filename,label_index\", got \"" +
                                   line + "\"");

  std::vector<std::string> class_names;
  if (std::filesystem::exists(root / "classes.txt")) class_names = load_class_names(root / "classes.txt");

  std::vector<Tensor> images;
  std::vector<int> labels;
  std::size_t row = 1;
  int max_label = -1;
  while (std::getline(csv, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = csv_path.string() + " row " + std::to_string(row);
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0)
      fail(Errc::corrupt_header, where + ": expected filename,label_index");
    const std::string name = line.substr(0, comma);
    const std::string label_text = line.substr(comma + 1);
    int label = -1;
    std::size_t used = 0;
    try {
      label = std::stoi(label_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != label_text.size() || label < 0)
      fail(Errc::out_of_range, where + ": bad label \"" + label_text + "\"");
    if (!class_names.empty() && static_cast<std::size_t>(label) >= class_names.size())
      fail(Errc::out_of_range, where + ": label " + std::to_string(label) + " but only " +
                                   std::to_string(class_names.size()) + " classes");
    const auto file = root / name;
    if (!std::filesystem::exists(file)) fail(Errc::io_failure, where + ": missing file " + file.string());
    Tensor t = read_png(file, where);
    if (!images.empty() && !(t.shape() == images.front().shape()))
      fail(Errc::dimension_mismatch, where + ": " + name + " has shape " + t.shape().str() +
                                         " but earlier images have " +
                                         images.front().shape().str());
    images.push_back(std::move(t));
    labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (images.empty()) fail(Errc::invalid_argument, csv_path.string() + " lists no images");
  if (class_names.empty())
    for (int c = 0; c <= max_label; ++c) class_names.push_back(std::to_string(c));
  return Dataset(std::move(images), std::move(labels), std::move(class_names));
}

}  // namespace advkit
