#include <cmath>
#include <fstream>
#include <string>

#include "fseg/dataset.hpp"

namespace fseg {

namespace {

struct RawPnm {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v)) throw LoadError("malformed PNM header in " + path.string());
  return v;
}

RawPnm read_pnm(const std::filesystem::path& path, int want_channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  const int channels = magic[0] == 'P' && magic[1] == '6' ? 3 : magic[0] == 'P' && magic[1] == '5' ? 1 : 0;
  if (channels == 0) throw LoadError("not a binary PPM/PGM file: " + path.string());
  if (channels != want_channels) {
    throw LoadError(path.string() + ": expected " + (want_channels == 3 ? "P6" : "P5") + " raster");
  }
  RawPnm r;
  r.channels = channels;
  r.width = read_header_int(in, path);
  r.height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (r.width <= 0 || r.height <= 0 || maxval <= 0 || maxval > 255) {
    throw LoadError("unsupported PNM geometry or bit depth in " + path.string());
  }
  in.get();  // single whitespace before the raster
  r.data.resize(static_cast<std::size_t>(r.width) * r.height * channels);
  in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.data.size())) {
    throw LoadError("truncated raster data in " + path.string());
  }
  return r;
}

void write_pnm(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << (channels == 3 ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  const RawPnm r = read_pnm(path, 3);
  Image img(r.width, r.height, 3);
  const std::size_t n = img.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) img.plane(c)[i] = r.data[i * 3 + c] / 255.0;
  }
  return img;
}

void write_ppm(const Image& rgb, const std::filesystem::path& path) {
  if (rgb.channels() != 3) throw InvalidInput("write_ppm: expected 3 channels");
  const std::size_t n = rgb.plane_size();
  std::vector<std::uint8_t> data(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) data[i * 3 + c] = to_byte(rgb.plane(c)[i]);
  }
  write_pnm(path, rgb.width(), rgb.height(), 3, data);
}

Image read_pgm(const std::filesystem::path& path) {
  const RawPnm r = read_pnm(path, 1);
  Image img(r.width, r.height, 1);
  for (std::size_t i = 0; i < r.data.size(); ++i) img.plane(0)[i] = r.data[i] / 255.0;
  return img;
}

void write_pgm(const Image& grey, const std::filesystem::path& path) {
  if (grey.channels() != 1) throw InvalidInput("write_pgm: expected 1 channel");
  std::vector<std::uint8_t> data(grey.plane_size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = to_byte(grey.plane(0)[i]);
  write_pnm(path, grey.width(), grey.height(), 1, data);
}

Mask read_mask(const std::filesystem::path& path) {
  const RawPnm r = read_pnm(path, 1);
  Mask m(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) m.set(x, y, r.data[static_cast<std::size_t>(y) * r.width + x] != 0);
  }
  return m;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> data(mask.flags().size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask.flags()[i] ? 255 : 0;
  write_pnm(path, mask.width(), mask.height(), 1, data);
}

LabelMap read_labels(const std::filesystem::path& path) {
  const RawPnm r = read_pnm(path, 1);
  LabelMap m(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const std::uint8_t v = r.data[static_cast<std::size_t>(y) * r.width + x];
      if (v >= kNumClasses) {
        throw LoadError(path.string() + ": label " + std::to_string(v) + " at (" + std::to_string(x) +
                        "," + std::to_string(y) + ") is not a class id");
      }
      m.set(x, y, static_cast<Label>(v));
    }
  }
  return m;
}

void write_labels(const LabelMap& labels, const std::filesystem::path& path) {
  write_pnm(path, labels.width(), labels.height(), 1,
            std::vector<std::uint8_t>(labels.ids().begin(), labels.ids().end()));
}

}  // namespace fseg
