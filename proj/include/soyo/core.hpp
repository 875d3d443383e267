#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace soyo {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SOYO_DEFINE_ERROR(Name)                  \
  class Name : public Error {                    \
   public:                                       \
    using Error::Error;                          \
  }

SOYO_DEFINE_ERROR(EmptyInput);
SOYO_DEFINE_ERROR(DimMismatch);
SOYO_DEFINE_ERROR(LengthMismatch);
SOYO_DEFINE_ERROR(InsufficientSamples);
SOYO_DEFINE_ERROR(SingularCovariance);
SOYO_DEFINE_ERROR(BadComponentCount);
SOYO_DEFINE_ERROR(BadWeights);
SOYO_DEFINE_ERROR(BadLabel);
SOYO_DEFINE_ERROR(IncompleteStore);
SOYO_DEFINE_ERROR(NotEnoughSessions);
SOYO_DEFINE_ERROR(FormatError);
SOYO_DEFINE_ERROR(InvalidArgument);

#undef SOYO_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Deterministic random streams
// ---------------------------------------------------------------------------

/// Counter-based pseudo-random stream.
///
/// The i-th 64-bit output of a stream is mix64(key + i * GOLDEN) where
/// mix64 is the SplitMix64 finalizer and key is derived from (seed, stream
/// id). There is no hidden generator state beyond the draw counter, so a
/// stream can be copied, replayed, and split into independent sub-streams.
/// Every randomized operation in the repository draws from an RngStream;
/// platform RNGs are not used anywhere.
///
/// Normal deviates use the Marsaglia polar method on 53-bit uniforms. Draws
/// are produced in accepted pairs; requesting an odd count discards the
/// second half of the final pair.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Derives an independent child stream. Children of distinct ids and the
  /// parent never share outputs.
  RngStream substream(std::uint64_t child_id) const;

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random mantissa bits.
  double uniform01();

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);

  /// n i.i.d. standard normal deviates.
  std::vector<double> normals(std::size_t n);

  /// Fisher-Yates permutation of [0..n): result[i] is the source row of
  /// output row i.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// ln sum_i exp(v_i), max-shifted. Exact -inf when every entry is -inf.
double log_sum_exp(std::span<const double> v);

/// n standard normal draws from the given stream (see RngStream).
std::vector<double> standard_normal(RngStream& rng, std::size_t n);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// 0-based domain index. Human-facing reports convert to 1-based at the
/// printing boundary only.
struct DomainId {
  int index = 0;

  auto operator<=>(const DomainId&) const = default;
};

/// Identifies one feature level (network depth). The canonical pipeline uses
/// two levels, mid and last; arbitrary indices are allowed for layer-choice
/// studies.
struct LevelId {
  int index = 0;

  static constexpr LevelId mid() { return LevelId{0}; }
  static constexpr LevelId last() { return LevelId{1}; }

  auto operator<=>(const LevelId&) const = default;
};

std::string to_string(LevelId level);
LevelId level_from_string(const std::string& name);

/// Dense n x d matrix of 64-bit feature values, row-major. Immutable after
/// construction; constructors reject non-finite entries.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n_rows, std::size_t dim, std::vector<double> data);

  static FeatureMatrix empty(std::size_t dim) { return FeatureMatrix(0, dim, {}); }

  std::size_t n_rows() const { return n_rows_; }
  std::size_t dim() const { return dim_; }
  const std::vector<double>& data() const { return data_; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_.data() + i * dim_, dim_);
  }

  double at(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

 private:
  std::size_t n_rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Probability vector: entries in [0,1] summing to 1 within 1e-9.
struct ProbVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  /// Throws BadWeights if the invariant does not hold.
  void validate() const;
};

/// Per-level feature matrices plus one domain label per row. All levels
/// share the same row count and row order.
struct LabeledBatch {
  std::map<LevelId, FeatureMatrix> levels;
  std::vector<DomainId> labels;

  std::size_t n_rows() const { return labels.size(); }
  const FeatureMatrix& level(LevelId id) const;
  bool has_level(LevelId id) const { return levels.count(id) != 0; }

  /// Checks the shared-row-count invariant; throws LengthMismatch.
  void validate() const;
};

}  // namespace soyo
