#pragma once

// Bundle files: packed unit-norm feature rows plus a JSON metadata section.
//
// Layout (little-endian, no padding):
//   0..3    magic "CODR"
//   4..7    version u32 (= 1)
//   8..11   rows u32
//   12..15  dim u32
//   16..23  metadata_len u64
//   24..    metadata_len bytes of UTF-8 JSON
//   ...     rows * dim * 4 bytes float32 row-major payload

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coder {

inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr double kDegenerateNorm = 1e-12;
inline constexpr double kNormTolerance = 1e-4;

enum class Family : std::uint8_t {
  ClassName = 0,
  Attribute = 1,
  AnalogousClass = 2,
  Synonym = 3,
  OneToOne = 4,
};

inline constexpr Family kAllFamilies[] = {Family::ClassName, Family::Attribute,
                                          Family::AnalogousClass,
                                          Family::Synonym, Family::OneToOne};

std::string_view to_string(Family family) noexcept;
// Accepts the snake_case names produced by to_string.
Family family_from_string(std::string_view name);

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;
  bool normalized = false;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> data,
                bool normalized = false);

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

  // Throws InvariantViolation on length mismatch, NaN/Inf, or a normalized
  // flag that the row norms do not back up.
  void validate() const;

  bool operator==(const FeatureMatrix&) const = default;
};

struct TextRecord {
  std::int64_t id = 0;
  std::string text;
  Family family = Family::ClassName;
  int class_id = 0;
  std::optional<int> pair_class_id;
  std::string template_id;

  bool operator==(const TextRecord&) const = default;
};

struct ImageRecord {
  std::int64_t id = 0;
  std::optional<int> label_class_id;
  std::string source_path;

  bool operator==(const ImageRecord&) const = default;
};

enum class BundleKind { Text, Image, Coder };

std::string_view to_string(BundleKind kind) noexcept;
BundleKind bundle_kind_from_string(std::string_view name);

// Text bundles: one TextRecord per row.
// Image bundles: one ImageRecord per row.
// Coder bundles: one ImageRecord per row and one TextRecord per column
//   (features.dim == text_records.size()).
struct EmbeddingBundle {
  BundleKind kind = BundleKind::Text;
  FeatureMatrix features;
  std::vector<TextRecord> text_records;
  std::vector<ImageRecord> image_records;
  std::vector<std::string> class_names;
  std::string encoder_tag;

  std::size_t record_count() const {
    return kind == BundleKind::Text ? text_records.size()
                                    : image_records.size();
  }

  void validate() const;

  bool operator==(const EmbeddingBundle&) const = default;
};

// Sorts text rows by (class_id, family, id), carrying feature rows along.
// Image and coder bundles are returned unchanged.
EmbeddingBundle canonicalize(EmbeddingBundle bundle);

// Serializes the canonical form of `bundle`. Validates first; nothing is
// written on failure. Uses write-to-temp-then-rename.
void write_bundle(const EmbeddingBundle& bundle,
                  const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_bundle(const EmbeddingBundle& bundle);

EmbeddingBundle read_bundle(const std::filesystem::path& path);
EmbeddingBundle parse_bundle(std::span<const std::uint8_t> bytes);

FeatureMatrix normalize_rows(const FeatureMatrix& m);

// Returns a text bundle restricted to rows whose record satisfies `keep`.
template <typename Pred>
EmbeddingBundle filter_text_rows(const EmbeddingBundle& bundle, Pred keep) {
  EmbeddingBundle out;
  out.kind = bundle.kind;
  out.class_names = bundle.class_names;
  out.encoder_tag = bundle.encoder_tag;
  out.features.dim = bundle.features.dim;
  out.features.normalized = bundle.features.normalized;
  for (std::size_t i = 0; i < bundle.text_records.size(); ++i) {
    if (!keep(bundle.text_records[i])) continue;
    out.text_records.push_back(bundle.text_records[i]);
    auto r = bundle.features.row(i);
    out.features.data.insert(out.features.data.end(), r.begin(), r.end());
    ++out.features.rows;
  }
  return out;
}

}  // namespace coder
