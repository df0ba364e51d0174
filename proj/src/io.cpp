#include "uad/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "uad/error.hpp"

namespace uad::io {

namespace {

struct Header {
  std::size_t width = 0, height = 0;
  std::size_t raster = 0;  // offset of the first pixel byte
};

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, const char* kind)
      : bytes_(bytes), kind_(kind) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(std::string(kind_) + ": " + what + " at byte " + std::to_string(pos_));
  }

  void magic(char digit) {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != static_cast<std::uint8_t>(digit))
      fail(std::string("expected magic P") + digit);
    pos_ = 2;
  }

  // Whitespace and '#' comments before a header field.
  void skip_separators() {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected whitespace");
  }

  std::size_t number(const char* field) {
    skip_separators();
    if (pos_ >= bytes_.size() || bytes_[pos_] < '0' || bytes_[pos_] > '9')
      fail(std::string("expected ") + field);
    std::size_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1u << 20) fail(std::string(field) + " too large");
      ++pos_;
    }
    return v;
  }

  Header read(char digit, std::size_t channels) {
    magic(digit);
    Header h;
    const std::size_t wpos = pos_;
    h.width = number("width");
    const std::size_t hpos = pos_;
    h.height = number("height");
    if (h.width == 0) {
      pos_ = wpos;
      fail("zero width");
    }
    if (h.height == 0) {
      pos_ = hpos;
      fail("zero height");
    }
    const std::size_t mpos = pos_;
    if (number("maxval") != 255) {
      pos_ = mpos;
      fail("maxval must be 255");
    }
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail("expected whitespace");
    ++pos_;
    h.raster = pos_;
    const std::size_t need = h.width * h.height * channels;
    if (bytes_.size() - pos_ < need) {
      pos_ = bytes_.size();
      fail("raster truncated, " + std::to_string(need) + " bytes expected");
    }
    return h;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  const char* kind_;
  std::size_t pos_ = 0;
};

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Bytes header(char digit, std::size_t w, std::size_t h) {
  const std::string s = std::string("P") + digit + "\n" + std::to_string(w) + " " +
                        std::to_string(h) + "\n255\n";
  return Bytes(s.begin(), s.end());
}

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  const Header h = HeaderReader(bytes, "ppm").read('6', 3);
  Tensor t(Shape{3, h.height, h.width});
  const std::uint8_t* p = bytes.data() + h.raster;
  for (std::size_t i = 0; i < h.height; ++i)
    for (std::size_t j = 0; j < h.width; ++j)
      for (std::size_t c = 0; c < 3; ++c) t.at(c, i, j) = *p++ / 255.0;
  return t;
}

Bytes encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("write_ppm: expected [3,H,W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  Bytes out = header('6', w, h);
  out.reserve(out.size() + 3 * h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c) out.push_back(quantize(image.at(c, i, j)));
  return out;
}

seg::BinaryMask decode_pgm(std::span<const std::uint8_t> bytes) {
  const Header h = HeaderReader(bytes, "pgm").read('5', 1);
  seg::BinaryMask m(h.height, h.width);
  for (std::size_t k = 0; k < m.bits.size(); ++k) m.bits[k] = bytes[h.raster + k] >= 128 ? 1 : 0;
  return m;
}

Bytes encode_pgm(const seg::BinaryMask& mask) {
  Bytes out = header('5', mask.width, mask.height);
  for (std::uint8_t b : mask.bits) out.push_back(b ? 255 : 0);
  return out;
}

Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return out;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Tensor read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  write_bytes(path, encode_ppm(image));
}

seg::BinaryMask read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const seg::BinaryMask& mask) {
  write_bytes(path, encode_pgm(mask));
}

}  // namespace uad::io
