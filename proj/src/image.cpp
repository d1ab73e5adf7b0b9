#include "trajaug/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "trajaug/error.hpp"

namespace trajaug {

namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  // skip whitespace and '#' comments
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  if (!(in >> v) || v <= 0) throw Error(ErrorCode::IoFailure, "bad PPM header in " + path.string());
  return v;
}

}  // namespace

ImageArray read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw Error(ErrorCode::IoFailure, path.string() + " is not a binary PPM (P6)");
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (maxval != 255) throw Error(ErrorCode::IoFailure, "only maxval 255 is supported: " + path.string());
  in.get();  // single whitespace before raster
  ImageArray img(h, w);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error(ErrorCode::IoFailure, "truncated raster in " + path.string());
  return img;
}

void write_ppm(const ImageArray& img, const std::filesystem::path& path) {
  if (!img.valid()) throw Error(ErrorCode::DimensionMismatch, "refusing to write an invalid image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace trajaug
