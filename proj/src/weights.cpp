#include "facechannel/weights.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace facechannel {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'W', '1'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("truncated weight file");
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

} // namespace

void write_weight_file(const std::string& path, const std::vector<TensorBlob>& blobs) {
  std::vector<std::uint8_t> out;
  std::size_t payload = 8;
  for (const auto& b : blobs) payload += 3 + b.name.size() + 4 * b.shape.size() + 4 * b.data.size();
  out.reserve(payload);

  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& b : blobs) {
    if (b.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw std::invalid_argument("write_weight_file: tensor name too long: " + b.name);
    if (b.shape.size() > 255)
      throw std::invalid_argument("write_weight_file: rank too large for " + b.name);
    put_u16(out, static_cast<std::uint16_t>(b.name.size()));
    out.insert(out.end(), b.name.begin(), b.name.end());
    out.push_back(static_cast<std::uint8_t>(b.shape.size()));
    std::size_t numel = 1;
    for (const std::size_t d : b.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      numel *= d;
    }
    if (numel != b.data.size())
      throw std::invalid_argument("write_weight_file: " + b.name + " shape " +
                                  shape_to_string(b.shape) + " does not match data length " +
                                  std::to_string(b.data.size()));
    for (const float v : b.data) put_f32(out, v);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<TensorBlob> read_weight_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open weight file: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  Reader r{buf};
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("not a FaceChannel weight file: " + path);
  r.pos = 4;
  const std::uint32_t count = r.u32();
  std::vector<TensorBlob> blobs;
  blobs.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    TensorBlob b;
    b.name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      b.shape.push_back(r.u32());
      numel *= b.shape.back();
    }
    b.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) b.data[i] = r.f32();
    blobs.push_back(std::move(b));
  }
  if (r.pos != buf.size())
    throw std::runtime_error("weight file has trailing bytes: " + path);
  return blobs;
}

} // namespace facechannel
