#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "facechannel/data.hpp"

namespace facechannel {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// ---- PNM (P2/P3 ASCII, P5/P6 binary), 8-bit ----

struct PnmScanner {
  const std::vector<std::uint8_t>& buf;
  const std::string& path;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < buf.size()) {
      if (std::isspace(buf[pos])) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  unsigned next_uint(const char* what) {
    skip_space_and_comments();
    if (pos >= buf.size() || !std::isdigit(buf[pos]))
      fail(path, std::string("malformed PNM header: expected ") + what);
    unsigned v = 0;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
      v = v * 10 + (buf[pos] - '0');
      ++pos;
    }
    return v;
  }
};

Tensor<float> decode_pnm(const std::string& path, const std::vector<std::uint8_t>& buf) {
  const char kind = static_cast<char>(buf[1]); // '2','3','5','6'
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';

  PnmScanner s{buf, path, 2};
  const unsigned w = s.next_uint("width");
  const unsigned h = s.next_uint("height");
  const unsigned maxval = s.next_uint("maxval");
  if (w == 0 || h == 0) fail(path, "zero image dimension");
  if (maxval == 0 || maxval > 255) fail(path, "maxval " + std::to_string(maxval) + " unsupported (must be 1..255)");

  const std::size_t values = static_cast<std::size_t>(w) * h * (color ? 3 : 1);
  std::vector<unsigned> raw(values);
  if (binary) {
    ++s.pos; // single whitespace after maxval
    if (s.pos + values > buf.size()) fail(path, "truncated pixel data");
    for (std::size_t i = 0; i < values; ++i) raw[i] = buf[s.pos + i];
  } else {
    for (std::size_t i = 0; i < values; ++i) {
      raw[i] = s.next_uint("pixel value");
      if (raw[i] > maxval) fail(path, "pixel value exceeds maxval");
    }
  }

  Tensor<float> img({3, h, w});
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      for (std::size_t c = 0; c < 3; ++c)
        img[c * h * w + p] = scale * static_cast<float>(color ? raw[p * 3 + c] : raw[p]);
    }
  return img;
}

// ---- PNG: 8-bit gray / gray+alpha / RGB / RGBA, non-interlaced ----

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

Tensor<float> decode_png(const std::string& path, const std::vector<std::uint8_t>& buf) {
  static const std::uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (buf.size() < 8 || std::memcmp(buf.data(), kSig, 8) != 0) fail(path, "bad PNG signature");

  std::size_t pos = 8;
  std::uint32_t w = 0, h = 0;
  unsigned channels = 0;
  std::vector<std::uint8_t> idat;
  bool saw_ihdr = false, saw_iend = false;

  while (pos + 8 <= buf.size() && !saw_iend) {
    const std::uint32_t len = be32(&buf[pos]);
    if (pos + 12 + std::size_t(len) > buf.size()) fail(path, "truncated PNG chunk");
    const std::string type(reinterpret_cast<const char*>(&buf[pos + 4]), 4);
    const std::uint8_t* data = &buf[pos + 8];

    if (type == "IHDR") {
      if (len != 13) fail(path, "bad IHDR length");
      w = be32(data);
      h = be32(data + 4);
      const unsigned depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8) fail(path, "only 8-bit PNGs supported");
      if (interlace != 0) fail(path, "interlaced PNGs unsupported");
      switch (color) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default: fail(path, "unsupported PNG color type " + std::to_string(color));
      }
      saw_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      saw_iend = true;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || w == 0 || h == 0) fail(path, "missing or empty IHDR");
  if (idat.empty()) fail(path, "no IDAT data");

  const std::size_t stride = std::size_t(w) * channels;
  std::vector<std::uint8_t> raw(h * (stride + 1));
  uLongf out_len = raw.size();
  if (uncompress(raw.data(), &out_len, idat.data(), idat.size()) != Z_OK || out_len != raw.size())
    fail(path, "PNG inflate failed");

  // Undo per-row filters in place into `pixels`.
  std::vector<std::uint8_t> pixels(h * stride);
  for (std::size_t y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = &raw[y * (stride + 1) + 1];
    std::uint8_t* dst = &pixels[y * stride];
    const std::uint8_t* up = y > 0 ? &pixels[(y - 1) * stride] : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= channels ? dst[i - channels] : 0;
      const int above = up ? up[i] : 0;
      const int corner = (up && i >= channels) ? up[i - channels] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += above; break;
        case 3: v += (left + above) / 2; break;
        case 4: v += paeth(left, above, corner); break;
        default: fail(path, "unsupported PNG filter " + std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  Tensor<float> img({3, h, w});
  constexpr float kScale = 1.0f / 255.0f;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t* px = &pixels[(y * w + x) * channels];
      float r, g, b;
      if (channels <= 2) {
        r = g = b = px[0] * kScale; // gray (alpha, if present, is dropped)
      } else {
        r = px[0] * kScale;
        g = px[1] * kScale;
        b = px[2] * kScale;
      }
      img[0 * h * w + y * w + x] = r;
      img[1 * h * w + y * w + x] = g;
      img[2 * h * w + y * w + x] = b;
    }
  return img;
}

std::uint8_t to_byte(float v) {
  const float c = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void check_chw(const Tensor<float>& img, const char* op) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument(std::string(op) + ": expects [3,H,W], got " +
                                shape_to_string(img.shape()));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type,
               const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

} // namespace

Tensor<float> load_image(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_file(path);
  if (buf.size() >= 2 && buf[0] == 'P' &&
      (buf[1] == '2' || buf[1] == '3' || buf[1] == '5' || buf[1] == '6'))
    return decode_pnm(path, buf);
  if (buf.size() >= 8 && buf[0] == 137 && buf[1] == 'P' && buf[2] == 'N' && buf[3] == 'G')
    return decode_png(path, buf);
  fail(path, "unsupported image format (PNG/PPM/PGM only)");
}

void write_ppm(const std::string& path, const Tensor<float>& img) {
  check_chw(img, "write_ppm");
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        f.put(static_cast<char>(to_byte(img[c * h * w + y * w + x])));
  if (!f) throw std::runtime_error("write failed: " + path);
}

void write_png(const std::string& path, const Tensor<float>& img) {
  check_chw(img, "write_png");
  const std::size_t h = img.dim(1), w = img.dim(2);

  std::vector<std::uint8_t> scanlines;
  scanlines.reserve(h * (1 + 3 * w));
  for (std::size_t y = 0; y < h; ++y) {
    scanlines.push_back(0); // filter: none
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        scanlines.push_back(to_byte(img[c * h * w + y * w + x]));
  }
  uLongf bound = compressBound(static_cast<uLong>(scanlines.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, scanlines.data(), scanlines.size(), 6) != Z_OK)
    throw std::runtime_error("PNG deflate failed: " + path);
  compressed.resize(bound);

  std::vector<std::uint8_t> out = {137, 'P', 'N', 'G', 13, 10, 26, 10};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8); // bit depth
  ihdr.push_back(2); // color type: RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

} // namespace facechannel
