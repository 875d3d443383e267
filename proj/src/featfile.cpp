#include "soyo/featfile.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace soyo::cli {

namespace {

constexpr std::size_t kHeaderSize = 24;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

[[noreturn]] void fail(const std::string& path, std::size_t offset, const std::string& what) {
  throw FormatError(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
}

}  // namespace

void save_feat(const std::string& path, const FeatureMatrix& features,
               const std::optional<std::vector<std::uint32_t>>& labels) {
  if (labels && labels->size() != features.n_rows())
    throw LengthMismatch("save_feat: label count != n_rows");

  std::string buf;
  buf.reserve(kHeaderSize + features.data().size() * 4 +
              (labels ? features.n_rows() * 4 : 0));
  buf.append("FEAT");
  put_u16(buf, 1);
  put_u16(buf, labels ? 1 : 0);
  put_u64(buf, features.n_rows());
  put_u32(buf, static_cast<std::uint32_t>(features.dim()));
  buf.push_back(static_cast<char>(1));  // dtype f32
  buf.append(3, '\0');

  for (double v : features.data()) {
    const float narrowed = static_cast<float>(v);
    if (!std::isfinite(narrowed))
      throw FormatError("save_feat: value " + std::to_string(v) +
                        " does not fit in 32-bit float");
    put_f32(buf, narrowed);
  }
  if (labels)
    for (std::uint32_t l : *labels) put_u32(buf, l);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("save_feat: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("save_feat: write failed for " + path);
}

FeatFile load_feat(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_feat: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

  if (raw.size() < kHeaderSize) fail(path, raw.size(), "file shorter than header");
  if (std::memcmp(p, "FEAT", 4) != 0) fail(path, 0, "bad magic");
  const std::uint16_t version = get_u16(p + 4);
  if (version != 1) fail(path, 4, "unsupported version " + std::to_string(version));
  const std::uint16_t flags = get_u16(p + 6);
  if ((flags & ~std::uint16_t{1}) != 0) fail(path, 6, "unknown flag bits");
  const std::uint64_t n_rows = get_u64(p + 8);
  const std::uint32_t dim = get_u32(p + 16);
  if (dim == 0) fail(path, 16, "dim must be positive");
  const std::uint8_t dtype = p[20];
  if (dtype != 1) fail(path, 20, "unsupported dtype " + std::to_string(dtype));
  if (p[21] != 0 || p[22] != 0 || p[23] != 0) fail(path, 21, "nonzero reserved bytes");

  const bool has_labels = (flags & 1) != 0;
  const std::size_t payload_bytes = static_cast<std::size_t>(n_rows) * dim * 4;
  const std::size_t label_bytes = has_labels ? static_cast<std::size_t>(n_rows) * 4 : 0;
  const std::size_t expected = kHeaderSize + payload_bytes + label_bytes;
  if (raw.size() < expected) fail(path, raw.size(), "truncated payload");
  if (raw.size() > expected) fail(path, expected, "trailing bytes after payload");

  std::vector<double> data(static_cast<std::size_t>(n_rows) * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = get_f32(p + kHeaderSize + i * 4);
    if (!std::isfinite(v)) fail(path, kHeaderSize + i * 4, "non-finite feature value");
    data[i] = static_cast<double>(v);
  }

  FeatFile file;
  file.features = FeatureMatrix(static_cast<std::size_t>(n_rows), dim, std::move(data));
  if (has_labels) {
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(n_rows));
    for (std::size_t i = 0; i < labels.size(); ++i)
      labels[i] = get_u32(p + kHeaderSize + payload_bytes + i * 4);
    file.labels = std::move(labels);
  }
  return file;
}

}  // namespace soyo::cli
