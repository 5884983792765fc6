#include "tsn/image_io.hpp"

#include <fstream>

namespace tsn {

namespace {

void write_pnm(const std::string& path, const ImageU8& img, const char* magic, int channels) {
  if (img.channels != channels)
    throw InputError(path + ": expected " + std::to_string(channels) + "-channel image");
  if (img.data.size() != static_cast<size_t>(img.h) * img.w * channels)
    throw InputError(path + ": image buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for write: " + path);
  f << magic << "\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!f) throw InputError("write failed: " + path);
}

int read_pnm_int(std::istream& f) {
  // skips whitespace and '#' comments
  int c = f.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = f.get();
    } else if (!std::isspace(c)) {
      break;
    }
    if (c != EOF) c = f.get();
  }
  if (c == EOF) throw InputError("truncated PNM header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = f.get();
  }
  return v;
}

ImageU8 read_pnm(const std::string& path, const char* magic, int channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != magic[0] || m1 != magic[1]) throw InputError(path + ": not a " + magic + " file");
  ImageU8 img;
  img.w = read_pnm_int(f);
  img.h = read_pnm_int(f);
  const int maxval = read_pnm_int(f);
  if (maxval != 255) throw InputError(path + ": only maxval 255 supported");
  img.channels = channels;
  img.data.resize(static_cast<size_t>(img.h) * img.w * channels);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw InputError(path + ": truncated pixel data");
  return img;
}

}  // namespace

void write_ppm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P6", 3); }
ImageU8 read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }
void write_pgm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P5", 1); }
ImageU8 read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

}  // namespace tsn
