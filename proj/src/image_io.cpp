#include "hierseg/image_io.hpp"

#include <fstream>

namespace hierseg {

namespace {

constexpr std::uint8_t kVoidByte = 255;

void expect_token(std::istream& is, const std::string& want, const std::string& path) {
  std::string tok;
  if (!(is >> tok) || tok != want) {
    throw Error("image: '" + path + "' is not a " + want + " file");
  }
}

std::size_t read_dim(std::istream& is, const std::string& path) {
  long v;
  if (!(is >> v) || v <= 0) throw Error("image: bad header dimension in '" + path + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("image: cannot open '" + path + "' for writing");
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw Error("image: write failed for '" + path + "'");
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("image: cannot open '" + path + "'");
  expect_token(is, "P6", path);
  const std::size_t w = read_dim(is, path), h = read_dim(is, path);
  const std::size_t maxval = read_dim(is, path);
  if (maxval != 255) throw Error("image: only maxval 255 supported in '" + path + "'");
  is.get();  // single whitespace after header
  RgbImage img(h, w);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size()))) {
    throw Error("image: truncated pixel data in '" + path + "'");
  }
  return img;
}

void write_pgm(const std::string& path, const SparseLabelMap& mask) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("image: cannot open '" + path + "' for writing");
  os << "P5\n" << mask.w << " " << mask.h << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.labels.size());
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    const int v = mask.labels[i];
    if (v == kVoidLabel) {
      bytes[i] = kVoidByte;
    } else if (v >= 0 && v < 255) {
      bytes[i] = static_cast<std::uint8_t>(v);
    } else {
      throw Error("image: label " + std::to_string(v) + " does not fit a pgm byte");
    }
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("image: write failed for '" + path + "'");
}

SparseLabelMap read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("image: cannot open '" + path + "'");
  expect_token(is, "P5", path);
  const std::size_t w = read_dim(is, path), h = read_dim(is, path);
  const std::size_t maxval = read_dim(is, path);
  if (maxval != 255) throw Error("image: only maxval 255 supported in '" + path + "'");
  is.get();
  std::vector<std::uint8_t> bytes(h * w);
  if (!is.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()))) {
    throw Error("image: truncated pixel data in '" + path + "'");
  }
  SparseLabelMap mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    mask.labels[i] = bytes[i] == kVoidByte ? kVoidLabel : static_cast<int>(bytes[i]);
  }
  return mask;
}

TensorBuffer image_to_tensor(const RgbImage& img) {
  TensorBuffer t = TensorBuffer::zeros({3, img.h, img.w});
  const std::size_t hw = img.h * img.w;
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      t.data[c * hw + p] = static_cast<double>(img.pixels[p * 3 + c]) / 255.0;
    }
  }
  return t;
}

}  // namespace hierseg
