#include "soyo/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace soyo {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(mix64(mix64(seed + kGolden) ^ mix64(stream_id * kGolden + 1))) {}

RngStream RngStream::substream(std::uint64_t child_id) const {
  return RngStream(seed_, mix64(stream_id_ * kGolden + child_id + 1));
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_below: n must be positive");
  // 2^64 mod n; draws in the incomplete top interval are rejected.
  const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  if (rem == 0) return next_u64() % n;
  const std::uint64_t limit = 0 - rem;
  std::uint64_t r = next_u64();
  while (r >= limit) r = next_u64();
  return r % n;
}

std::vector<double> RngStream::normals(std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    // Marsaglia polar method: accepted pairs (u,v) in the unit disc.
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    out.push_back(u * f);
    if (out.size() < n) out.push_back(v * f);
  }
  return out;
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw EmptyInput("log_sum_exp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (std::isinf(m) && m < 0) return m;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

std::vector<double> standard_normal(RngStream& rng, std::size_t n) {
  return rng.normals(n);
}

std::string to_string(LevelId level) {
  if (level == LevelId::mid()) return "mid";
  if (level == LevelId::last()) return "last";
  return "L" + std::to_string(level.index);
}

LevelId level_from_string(const std::string& name) {
  if (name == "mid") return LevelId::mid();
  if (name == "last") return LevelId::last();
  if (!name.empty() && name[0] == 'L') {
    try {
      return LevelId{std::stoi(name.substr(1))};
    } catch (const std::exception&) {
    }
  }
  throw InvalidArgument("unknown level name: " + name);
}

FeatureMatrix::FeatureMatrix(std::size_t n_rows, std::size_t dim, std::vector<double> data)
    : n_rows_(n_rows), dim_(dim), data_(std::move(data)) {
  if (dim_ == 0) throw InvalidArgument("FeatureMatrix: dim must be positive");
  if (data_.size() != n_rows_ * dim_)
    throw LengthMismatch("FeatureMatrix: data length " + std::to_string(data_.size()) +
                         " != n_rows*dim = " + std::to_string(n_rows_ * dim_));
  for (double x : data_)
    if (!std::isfinite(x)) throw InvalidArgument("FeatureMatrix: non-finite value");
}

void ProbVector::validate() const {
  if (values.empty()) throw BadWeights("ProbVector: empty");
  double sum = 0.0;
  for (double w : values) {
    if (!(w >= 0.0 && w <= 1.0)) throw BadWeights("ProbVector: entry outside [0,1]");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw BadWeights("ProbVector: sum " + std::to_string(sum) + " != 1");
}

const FeatureMatrix& LabeledBatch::level(LevelId id) const {
  auto it = levels.find(id);
  if (it == levels.end()) throw IncompleteStore("LabeledBatch: missing level " + to_string(id));
  return it->second;
}

void LabeledBatch::validate() const {
  for (const auto& [id, mat] : levels) {
    if (mat.n_rows() != labels.size())
      throw LengthMismatch("LabeledBatch: level " + to_string(id) + " has " +
                           std::to_string(mat.n_rows()) + " rows, labels " +
                           std::to_string(labels.size()));
  }
}

}  // namespace soyo
