#include "qdn/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "qdn/errors.hpp"

namespace qdn {

namespace {

constexpr char kMagic[4] = {'Q', 'T', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void put_u32(std::string& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  put_bytes(out, b, 4);
}

void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_f32_array(std::string& out, const float* p, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    put_bytes(out, p, n * sizeof(float));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(p[i]));
    }
  }
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::string name)
      : buf_(buf), name_(std::move(name)) {}

  const unsigned char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw DataError(name_ + ": truncated QTNS file");
    }
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(buf_.data()) + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t u8() { return *take(1); }

  std::uint32_t u32() {
    const unsigned char* b = take(4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  double f64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return std::bit_cast<double>(lo | (hi << 32));
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return buf;
}

std::string header(std::uint8_t dtype, const Shape& s) {
  std::string out;
  put_bytes(out, kMagic, 4);
  put_u32(out, kVersion);
  out.push_back(static_cast<char>(dtype));
  out.push_back(4);  // rank
  put_u32(out, static_cast<std::uint32_t>(s.n));
  put_u32(out, static_cast<std::uint32_t>(s.h));
  put_u32(out, static_cast<std::uint32_t>(s.w));
  put_u32(out, static_cast<std::uint32_t>(s.c));
  return out;
}

Shape promote_dims(const std::uint32_t* dims, int rank,
                   const std::string& name) {
  std::uint32_t d[4] = {1, 1, 1, 1};
  switch (rank) {
    case 1:
      d[2] = dims[0];
      break;
    case 2:
      d[1] = dims[0];
      d[2] = dims[1];
      break;
    case 3:
      d[1] = dims[0];
      d[2] = dims[1];
      d[3] = dims[2];
      break;
    case 4:
      for (int i = 0; i < 4; ++i) d[i] = dims[i];
      break;
    default:
      throw DataError(name + ": unsupported rank " + std::to_string(rank));
  }
  for (int i = 0; i < 4; ++i) {
    if (d[i] == 0 || d[i] > (1u << 30)) {
      throw DataError(name + ": bad dimension " + std::to_string(d[i]));
    }
  }
  return Shape{static_cast<int>(d[0]), static_cast<int>(d[1]),
               static_cast<int>(d[2]), static_cast<int>(d[3])};
}

}  // namespace

void write_qtns(const std::filesystem::path& path, const TensorF& t) {
  std::string out = header(0, t.shape());
  put_f32_array(out, t.data(), t.size());
  write_file(path, out);
}

void write_qtns(const std::filesystem::path& path, const QuantTensor& t) {
  std::string out = header(1, t.shape());
  put_f64(out, t.params.scale);
  put_i32(out, t.params.zero_point);
  put_bytes(out, t.values.data(), t.values.size());
  write_file(path, out);
}

std::variant<TensorF, QuantTensor> read_qtns(
    const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, path.string());

  const unsigned char* magic = r.take(4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not a QTNS file");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported QTNS version " +
                    std::to_string(version));
  }
  const std::uint8_t dtype = r.u8();
  const int rank = r.u8();
  std::uint32_t dims[4] = {0, 0, 0, 0};
  if (rank < 1 || rank > 4) {
    throw DataError(path.string() + ": unsupported rank " +
                    std::to_string(rank));
  }
  for (int i = 0; i < rank; ++i) dims[i] = r.u32();
  const Shape shape = promote_dims(dims, rank, path.string());
  const std::size_t count = shape.volume();

  if (dtype == 0) {
    if (r.remaining() != count * sizeof(float)) {
      throw DataError(path.string() + ": payload size mismatch");
    }
    std::vector<float> data(count);
    const unsigned char* p = r.take(count * sizeof(float));
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(data.data(), p, count * sizeof(float));
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t v = static_cast<std::uint32_t>(p[4 * i]) |
                          (static_cast<std::uint32_t>(p[4 * i + 1]) << 8) |
                          (static_cast<std::uint32_t>(p[4 * i + 2]) << 16) |
                          (static_cast<std::uint32_t>(p[4 * i + 3]) << 24);
        data[i] = std::bit_cast<float>(v);
      }
    }
    return TensorF::from_data(shape, std::move(data));
  }
  if (dtype == 1) {
    QuantTensor q;
    q.params.scale = r.f64();
    q.params.zero_point = r.i32();
    if (!params_valid(q.params)) {
      throw DataError(path.string() + ": invalid quantization parameters");
    }
    if (r.remaining() != count) {
      throw DataError(path.string() + ": payload size mismatch");
    }
    const unsigned char* p = r.take(count);
    std::vector<std::uint8_t> data(p, p + count);
    q.values = TensorU8::from_data(shape, std::move(data));
    return q;
  }
  throw DataError(path.string() + ": unknown dtype " + std::to_string(dtype));
}

TensorF read_qtns_f32(const std::filesystem::path& path) {
  auto v = read_qtns(path);
  if (auto* t = std::get_if<TensorF>(&v)) return std::move(*t);
  throw DataError(path.string() + ": expected float32 tensor");
}

QuantTensor read_qtns_u8(const std::filesystem::path& path) {
  auto v = read_qtns(path);
  if (auto* t = std::get_if<QuantTensor>(&v)) return std::move(*t);
  throw DataError(path.string() + ": expected uint8 tensor");
}

TensorF read_pgm(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < buf.size()) {
      if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < buf.size() &&
           !std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    }
    if (start == pos) throw DataError(path.string() + ": truncated PGM");
    return buf.substr(start, pos - start);
  };

  if (next_token() != "P5") throw DataError(path.string() + ": not binary PGM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  ++pos;  // single whitespace after maxval
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw DataError(path.string() + ": bad PGM header");
  }
  const bool wide = maxval > 255;
  const std::size_t need = static_cast<std::size_t>(w) * h * (wide ? 2 : 1);
  if (buf.size() - pos < need) throw DataError(path.string() + ": truncated PGM");

  TensorF img(Shape{1, h, w, 1});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data()) + pos;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint32_t v;
      if (wide) {  // PGM 16-bit is big-endian
        v = (static_cast<std::uint32_t>(p[0]) << 8) | p[1];
        p += 2;
      } else {
        v = *p++;
      }
      img(0, y, x, 0) = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const TensorF& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 1) {
    throw ShapeError("write_pgm: expected 1xHxWx1 image, got " + s.str());
  }
  std::string out = "P5\n" + std::to_string(s.w) + " " + std::to_string(s.h) +
                    "\n65535\n";
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      float v = std::clamp(image(0, y, x, 0), 0.0f, 1.0f);
      auto u = static_cast<std::uint32_t>(std::lround(v * 65535.0));
      out.push_back(static_cast<char>((u >> 8) & 0xFF));
      out.push_back(static_cast<char>(u & 0xFF));
    }
  }
  write_file(path, out);
}

}  // namespace qdn
