#include "coder/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

#include <unistd.h>

#include "coder/error.hpp"
#include "coder/json_io.hpp"

namespace coder {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'O', 'D', 'R'};
constexpr std::size_t kHeaderSize = 24;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

void validate_text_records(const std::vector<TextRecord>& records,
                           std::size_t num_classes) {
  std::set<std::tuple<std::string, Family, int, int>> seen;
  for (const auto& r : records) {
    auto where = "text record " + std::to_string(r.id);
    if (r.text.empty()) {
      throw Error(ErrorCode::InvariantViolation, where + " has empty text");
    }
    if (r.class_id < 0 || static_cast<std::size_t>(r.class_id) >= num_classes) {
      throw Error(ErrorCode::InvariantViolation,
                  where + " class_id out of range");
    }
    bool is_pair = r.family == Family::OneToOne;
    if (is_pair != r.pair_class_id.has_value()) {
      throw Error(ErrorCode::InvariantViolation,
                  where + ": pair_class_id must be set exactly for one_to_one");
    }
    if (r.pair_class_id) {
      if (*r.pair_class_id == r.class_id || *r.pair_class_id < 0 ||
          static_cast<std::size_t>(*r.pair_class_id) >= num_classes) {
        throw Error(ErrorCode::InvariantViolation,
                    where + " has invalid pair_class_id");
      }
    }
    if (!seen.emplace(r.text, r.family, r.class_id, r.pair_class_id.value_or(-1))
             .second) {
      throw Error(ErrorCode::InvariantViolation, where + " is a duplicate");
    }
  }
}

void validate_image_records(const std::vector<ImageRecord>& records,
                            std::size_t num_classes) {
  for (const auto& r : records) {
    if (r.label_class_id && (*r.label_class_id < 0 ||
                             static_cast<std::size_t>(*r.label_class_id) >=
                                 num_classes)) {
      throw Error(ErrorCode::InvariantViolation,
                  "image record " + std::to_string(r.id) +
                      " label_class_id out of range");
    }
  }
}

std::string metadata_json(const EmbeddingBundle& b) {
  json meta;
  meta["kind"] = std::string(to_string(b.kind));
  meta["class_names"] = b.class_names;
  meta["encoder_tag"] = b.encoder_tag;
  meta["normalized"] = b.features.normalized;
  json records = json::array();
  if (b.kind == BundleKind::Text) {
    for (const auto& r : b.text_records) records.push_back(to_json(r));
  } else {
    for (const auto& r : b.image_records) records.push_back(to_json(r));
  }
  meta["records"] = std::move(records);
  if (b.kind == BundleKind::Coder) {
    json columns = json::array();
    for (const auto& r : b.text_records) columns.push_back(to_json(r));
    meta["columns"] = std::move(columns);
  }
  return meta.dump();
}

}  // namespace

std::string_view to_string(Family family) noexcept {
  switch (family) {
    case Family::ClassName: return "class_name";
    case Family::Attribute: return "attribute";
    case Family::AnalogousClass: return "analogous_class";
    case Family::Synonym: return "synonym";
    case Family::OneToOne: return "one_to_one";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (to_string(f) == name) return f;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown text family '" + std::string(name) + "'");
}

std::string_view to_string(BundleKind kind) noexcept {
  switch (kind) {
    case BundleKind::Text: return "text";
    case BundleKind::Image: return "image";
    case BundleKind::Coder: return "coder";
  }
  return "unknown";
}

BundleKind bundle_kind_from_string(std::string_view name) {
  if (name == "text") return BundleKind::Text;
  if (name == "image") return BundleKind::Image;
  if (name == "coder") return BundleKind::Coder;
  throw Error(ErrorCode::InvalidMetadata,
              "unknown bundle kind '" + std::string(name) + "'");
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dim,
                             std::vector<float> data, bool normalized)
    : rows(rows), dim(dim), data(std::move(data)), normalized(normalized) {}

void FeatureMatrix::validate() const {
  if (data.size() != rows * dim) {
    throw Error(ErrorCode::InvariantViolation,
                "feature data length " + std::to_string(data.size()) +
                    " != rows*dim " + std::to_string(rows * dim));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::InvariantViolation,
                  "non-finite feature value at row " + std::to_string(i / dim));
    }
  }
  if (!normalized) return;
  for (std::size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (float v : row(i)) sq += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
      throw Error(ErrorCode::InvariantViolation,
                  "row " + std::to_string(i) +
                      " is flagged normalized but has norm " +
                      std::to_string(std::sqrt(sq)));
    }
  }
}

void EmbeddingBundle::validate() const {
  features.validate();
  if (record_count() != features.rows) {
    throw Error(ErrorCode::RowCountMismatch,
                std::to_string(record_count()) + " records for " +
                    std::to_string(features.rows) + " feature rows");
  }
  switch (kind) {
    case BundleKind::Text:
      if (!image_records.empty()) {
        throw Error(ErrorCode::InvariantViolation,
                    "text bundle carries image records");
      }
      validate_text_records(text_records, class_names.size());
      break;
    case BundleKind::Image:
      if (!text_records.empty()) {
        throw Error(ErrorCode::InvariantViolation,
                    "image bundle carries text records");
      }
      validate_image_records(image_records, class_names.size());
      break;
    case BundleKind::Coder:
      if (text_records.size() != features.dim) {
        throw Error(ErrorCode::RowCountMismatch,
                    "coder bundle has " + std::to_string(text_records.size()) +
                        " columns for dim " + std::to_string(features.dim));
      }
      validate_image_records(image_records, class_names.size());
      validate_text_records(text_records, class_names.size());
      break;
  }
}

EmbeddingBundle canonicalize(EmbeddingBundle bundle) {
  if (bundle.kind != BundleKind::Text) return bundle;
  std::vector<std::size_t> order(bundle.text_records.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& recs = bundle.text_records;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tuple(recs[a].class_id, recs[a].family, recs[a].id) <
           std::tuple(recs[b].class_id, recs[b].family, recs[b].id);
  });
  if (std::is_sorted(order.begin(), order.end())) return bundle;

  std::vector<TextRecord> records;
  std::vector<float> data;
  records.reserve(order.size());
  data.reserve(bundle.features.data.size());
  for (std::size_t i : order) {
    records.push_back(std::move(bundle.text_records[i]));
    if (i < bundle.features.rows) {
      auto r = bundle.features.row(i);
      data.insert(data.end(), r.begin(), r.end());
    }
  }
  bundle.text_records = std::move(records);
  bundle.features.data = std::move(data);
  return bundle;
}

std::vector<std::uint8_t> serialize_bundle(const EmbeddingBundle& input) {
  input.validate();
  EmbeddingBundle b = canonicalize(input);
  if (b.features.rows > UINT32_MAX || b.features.dim > UINT32_MAX) {
    throw Error(ErrorCode::InvariantViolation, "bundle too large for u32 header");
  }
  std::string meta = metadata_json(b);

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + meta.size() + b.features.data.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kBundleVersion);
  put_u32(out, static_cast<std::uint32_t>(b.features.rows));
  put_u32(out, static_cast<std::uint32_t>(b.features.dim));
  put_u64(out, meta.size());
  out.insert(out.end(), meta.begin(), meta.end());
  for (float v : b.features.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

void write_bundle(const EmbeddingBundle& bundle,
                  const std::filesystem::path& path) {
  auto bytes = serialize_bundle(bundle);

  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error(ErrorCode::Io, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::Io, "rename to " + path.string() + ": " + ec.message());
  }
}

EmbeddingBundle parse_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "missing CODR magic");
  }
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::Truncated, "header shorter than 24 bytes");
  }
  std::uint32_t version = get_u32(bytes, 4);
  if (version != kBundleVersion) {
    throw Error(ErrorCode::UnsupportedVersion,
                "bundle version " + std::to_string(version));
  }
  std::size_t rows = get_u32(bytes, 8);
  std::size_t dim = get_u32(bytes, 12);
  std::uint64_t meta_len = get_u64(bytes, 16);

  std::size_t available = bytes.size() - kHeaderSize;
  if (meta_len > available) {
    throw Error(ErrorCode::Truncated, "metadata section truncated");
  }
  std::uint64_t payload_len = static_cast<std::uint64_t>(rows) * dim * 4;
  std::uint64_t expected = meta_len + payload_len;
  if (available < expected) {
    throw Error(ErrorCode::Truncated,
                "payload holds " + std::to_string(available - meta_len) +
                    " bytes, header declares " + std::to_string(payload_len));
  }
  if (available > expected) {
    throw Error(ErrorCode::TrailingBytes,
                std::to_string(available - expected) + " bytes after payload");
  }

  auto meta_bytes = bytes.subspan(kHeaderSize, meta_len);
  json meta;
  try {
    meta = json::parse(meta_bytes.begin(), meta_bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidMetadata, e.what());
  }

  EmbeddingBundle b;
  try {
    b.kind = bundle_kind_from_string(meta.at("kind").get<std::string>());
    b.class_names = meta.at("class_names").get<std::vector<std::string>>();
    b.encoder_tag = meta.at("encoder_tag").get<std::string>();
    b.features.normalized = meta.at("normalized").get<bool>();
    for (const auto& r : meta.at("records")) {
      if (b.kind == BundleKind::Text) {
        b.text_records.push_back(text_record_from_json(r));
      } else {
        b.image_records.push_back(image_record_from_json(r));
      }
    }
    if (b.kind == BundleKind::Coder) {
      for (const auto& r : meta.at("columns")) {
        b.text_records.push_back(text_record_from_json(r));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidMetadata, e.what());
  }

  if (b.record_count() != rows) {
    throw Error(ErrorCode::RowCountMismatch,
                "metadata lists " + std::to_string(b.record_count()) +
                    " records, header declares " + std::to_string(rows));
  }

  b.features.rows = rows;
  b.features.dim = dim;
  b.features.data.resize(rows * dim);
  std::size_t at = kHeaderSize + meta_len;
  for (auto& v : b.features.data) {
    v = std::bit_cast<float>(get_u32(bytes, at));
    at += 4;
  }
  b.validate();
  return b;
}

EmbeddingBundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_bundle(bytes);
}

FeatureMatrix normalize_rows(const FeatureMatrix& m) {
  if (m.data.size() != m.rows * m.dim) {
    throw Error(ErrorCode::InvariantViolation, "feature data length mismatch");
  }
  FeatureMatrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto src = m.row(i);
    double sq = 0.0;
    for (float v : src) sq += static_cast<double>(v) * v;
    double norm = std::sqrt(sq);
    if (!(norm >= kDegenerateNorm)) throw DegenerateFeatureError(i, "feature");
    auto dst = out.row(i);
    for (std::size_t k = 0; k < m.dim; ++k) {
      dst[k] = static_cast<float>(src[k] / norm);
    }
  }
  out.normalized = true;
  return out;
}

}  // namespace coder
