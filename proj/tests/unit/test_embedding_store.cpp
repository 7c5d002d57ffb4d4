#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "coder/embedding_store.hpp"
#include "coder/error.hpp"
#include "coder/json_io.hpp"
#include "doctest.h"
#include "json.hpp"
#include "testing.hpp"

using namespace coder;
using coder::testing::TempDir;

namespace {

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

EmbeddingBundle random_bundle(std::mt19937_64& rng, BundleKind kind) {
  std::uniform_int_distribution<int> small(0, 6);
  std::uniform_int_distribution<int> dim_dist(1, 9);
  std::size_t classes = 1 + small(rng) % 4;
  std::size_t rows = small(rng);
  std::size_t dim = dim_dist(rng);
  EmbeddingBundle b;
  b.kind = kind;
  b.encoder_tag = "enc-" + std::to_string(small(rng));
  for (std::size_t c = 0; c < classes; ++c) b.class_names.push_back("c" + std::to_string(c));
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  std::uniform_int_distribution<int> fam(0, 3);

  auto make_texts = [&](std::size_t n) {
    std::vector<TextRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
      TextRecord r{static_cast<std::int64_t>(i), "text \"" + std::to_string(i) + "\" é",
                   static_cast<Family>(fam(rng)), cls(rng), std::nullopt, "tpl"};
      if (classes > 1 && small(rng) == 0) {
        r.family = Family::OneToOne;
        r.pair_class_id = (r.class_id + 1) % static_cast<int>(classes);
      }
      out.push_back(r);
    }
    return out;
  };
  auto make_images = [&](std::size_t n) {
    std::vector<ImageRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
      ImageRecord r{static_cast<std::int64_t>(100 + i), std::nullopt, "p/" + std::to_string(i)};
      if (small(rng) > 1) r.label_class_id = cls(rng);
      out.push_back(r);
    }
    return out;
  };

  if (kind == BundleKind::Text) {
    b.text_records = make_texts(rows);
  } else {
    b.image_records = make_images(rows);
  }
  if (kind == BundleKind::Coder) {
    b.text_records = make_texts(dim);
  }
  std::normal_distribution<float> gauss;
  b.features = FeatureMatrix(rows, dim, std::vector<float>(rows * dim));
  for (auto& v : b.features.data) v = gauss(rng);
  if (kind == BundleKind::Text && rows > 0 && small(rng) % 2 == 0) {
    b.features = normalize_rows(b.features);
  }
  return canonicalize(std::move(b));
}

}  // namespace

TEST_SUITE("embedding_store") {

TEST_CASE("empty bundle round-trips with a valid header") {
  TempDir dir;
  EmbeddingBundle b;
  b.kind = BundleKind::Text;
  b.features = FeatureMatrix(0, 512, {});
  b.encoder_tag = "ViT-B/32";
  write_bundle(b, dir / "empty.codr");
  auto bytes = coder::testing::read_bytes(dir / "empty.codr");
  REQUIRE(bytes.size() > 24);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CODR");
  CHECK(read_bundle(dir / "empty.codr") == b);
}

TEST_CASE("three unit rows of dim 4 round-trip bit for bit") {
  TempDir dir;
  EmbeddingBundle b;
  b.kind = BundleKind::Text;
  b.class_names = {"a", "b"};
  b.features = FeatureMatrix(3, 4,
                             {0.6f, 0.8f, 0.0f, 0.0f,  //
                              0.0f, 0.0f, 1.0f, 0.0f,  //
                              0.5f, -0.5f, 0.5f, -0.5f},
                             true);
  b.text_records = {{0, "a photo of a a", Family::ClassName, 0, std::nullopt, "photo"},
                    {1, "x", Family::Attribute, 0, std::nullopt, "attribute"},
                    {2, "a photo of a b", Family::ClassName, 1, std::nullopt, "photo"}};
  write_bundle(b, dir / "three.codr");
  auto back = read_bundle(dir / "three.codr");
  CHECK(back.text_records == b.text_records);
  CHECK(bit_equal(back.features.data, b.features.data));
  CHECK(back.features.data.size() == 12);
}

TEST_CASE("a NaN entry is rejected before anything is written") {
  TempDir dir;
  EmbeddingBundle b;
  b.kind = BundleKind::Image;
  b.features = FeatureMatrix(1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  b.image_records = {{0, std::nullopt, ""}};
  CHECK(code_of([&] { write_bundle(b, dir / "nan.codr"); }) ==
        ErrorCode::InvariantViolation);
  CHECK_FALSE(std::filesystem::exists(dir / "nan.codr"));
  CHECK(std::distance(std::filesystem::directory_iterator(dir.path()),
                      std::filesystem::directory_iterator{}) == 0);
}

TEST_CASE("invariant violations are caught by validate") {
  EmbeddingBundle b;
  b.kind = BundleKind::Text;
  b.class_names = {"a"};
  b.features = FeatureMatrix(1, 2, {1.0f, 0.0f}, true);
  b.text_records = {{0, "t", Family::ClassName, 0, std::nullopt, ""}};
  CHECK_NOTHROW(b.validate());

  SUBCASE("class id out of range") {
    b.text_records[0].class_id = 1;
    CHECK(code_of([&] { b.validate(); }) == ErrorCode::InvariantViolation);
  }
  SUBCASE("normalized flag without unit rows") {
    b.features.data = {2.0f, 0.0f};
    CHECK(code_of([&] { b.validate(); }) == ErrorCode::InvariantViolation);
  }
  SUBCASE("record count differs from rows") {
    b.text_records.push_back({1, "u", Family::ClassName, 0, std::nullopt, ""});
    CHECK(code_of([&] { b.validate(); }) == ErrorCode::RowCountMismatch);
  }
  SUBCASE("one-to-one record without a partner class") {
    b.text_records[0].family = Family::OneToOne;
    CHECK(code_of([&] { b.validate(); }) == ErrorCode::InvariantViolation);
  }
}

TEST_CASE("read errors carry distinct codes") {
  std::mt19937_64 rng(3);
  auto b = random_bundle(rng, BundleKind::Image);
  b.features = FeatureMatrix(10, 3, std::vector<float>(30, 0.25f));
  b.image_records.clear();
  for (int i = 0; i < 10; ++i) b.image_records.push_back({i, std::nullopt, ""});
  auto bytes = serialize_bundle(b);
  REQUIRE_NOTHROW(parse_bundle(bytes));

  SUBCASE("bad magic") {
    std::memcpy(bytes.data(), "XXXX", 4);
    CHECK(code_of([&] { parse_bundle(bytes); }) == ErrorCode::BadMagic);
  }
  SUBCASE("unsupported version") {
    bytes[4] = 2;
    CHECK(code_of([&] { parse_bundle(bytes); }) == ErrorCode::UnsupportedVersion);
  }
  SUBCASE("payload holds 9 of 10 rows") {
    bytes.resize(bytes.size() - 3 * 4);
    CHECK(code_of([&] { parse_bundle(bytes); }) == ErrorCode::Truncated);
  }
  SUBCASE("short header") {
    bytes.resize(10);
    CHECK(code_of([&] { parse_bundle(bytes); }) == ErrorCode::Truncated);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK(code_of([&] { parse_bundle(bytes); }) == ErrorCode::TrailingBytes);
  }
  SUBCASE("metadata lists fewer records than rows") {
    b.image_records.pop_back();
    auto meta_start = 24;
    auto good = serialize_bundle([&] {
      auto c = b;
      c.features = FeatureMatrix(9, 3, std::vector<float>(27, 0.25f));
      return c;
    }());
    // Keep the 9-record metadata but claim 10 rows with a 10-row payload.
    std::uint64_t meta_len = 0;
    std::memcpy(&meta_len, good.data() + 16, 8);
    std::vector<std::uint8_t> forged(good.begin(), good.begin() + meta_start + meta_len);
    forged[8] = 10;
    forged.insert(forged.end(), 30 * 4, 0);
    CHECK(code_of([&] { parse_bundle(forged); }) == ErrorCode::RowCountMismatch);
  }
  SUBCASE("metadata is not JSON") {
    bytes[24] = '!';
    CHECK(code_of([&] { parse_bundle(bytes); }) == ErrorCode::InvalidMetadata);
  }
}

TEST_CASE("missing file is an I/O error") {
  TempDir dir;
  CHECK(code_of([&] { read_bundle(dir / "nope.codr"); }) == ErrorCode::Io);
}

TEST_CASE("normalize_rows") {
  SUBCASE("3-4-5 triangle") {
    auto n = normalize_rows(FeatureMatrix(1, 2, {3.0f, 4.0f}));
    CHECK(n.data[0] == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(n.data[1] == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(n.normalized);
  }
  SUBCASE("idempotent within 1e-7 and order preserving") {
    std::mt19937_64 rng(11);
    auto once = coder::testing::random_matrix(rng, 50, 17);
    auto twice = normalize_rows(once);
    for (std::size_t i = 0; i < once.data.size(); ++i) {
      CHECK(std::abs(once.data[i] - twice.data[i]) <= 1e-7);
    }
  }
  SUBCASE("zero row names its index") {
    FeatureMatrix m(3, 2, {1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 1.0f});
    try {
      normalize_rows(m);
      FAIL("expected DegenerateFeatureError");
    } catch (const DegenerateFeatureError& e) {
      CHECK(e.row() == 1);
      CHECK(e.code() == ErrorCode::DegenerateFeature);
    }
  }
}

TEST_CASE("property: read(write(b)) == b bit-exactly") {
  std::mt19937_64 rng(2024);
  TempDir dir;
  for (int trial = 0; trial < 300; ++trial) {
    auto kind = static_cast<BundleKind>(trial % 3);
    auto b = random_bundle(rng, kind);
    auto path = dir / ("b" + std::to_string(trial) + ".codr");
    write_bundle(b, path);
    auto back = read_bundle(path);
    REQUIRE(back.kind == b.kind);
    CHECK(back.text_records == b.text_records);
    CHECK(back.image_records == b.image_records);
    CHECK(back.class_names == b.class_names);
    CHECK(back.encoder_tag == b.encoder_tag);
    CHECK(back.features.normalized == b.features.normalized);
    CHECK(back.features.rows == b.features.rows);
    CHECK(back.features.dim == b.features.dim);
    CHECK(bit_equal(back.features.data, b.features.data));
    // Rewriting an unchanged bundle is byte-identical.
    CHECK(serialize_bundle(back) == coder::testing::read_bytes(path));
  }
}

TEST_CASE("property: permuting text rows with their records canonicalizes back") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto b = random_bundle(rng, BundleKind::Text);
    std::vector<std::size_t> perm(b.text_records.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EmbeddingBundle shuffled = b;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      shuffled.text_records[i] = b.text_records[perm[i]];
      auto src = b.features.row(perm[i]);
      std::copy(src.begin(), src.end(), shuffled.features.row(i).begin());
    }
    CHECK(canonicalize(shuffled) == b);
    CHECK(serialize_bundle(shuffled) == serialize_bundle(b));
  }
}

TEST_CASE("writes replace the previous file atomically") {
  TempDir dir;
  std::mt19937_64 rng(8);
  auto first = random_bundle(rng, BundleKind::Image);
  auto second = random_bundle(rng, BundleKind::Text);
  write_bundle(first, dir / "x.codr");
  write_bundle(second, dir / "x.codr");
  CHECK(read_bundle(dir / "x.codr") == second);
  std::size_t files = 0;
  for ([[maybe_unused]] auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
}

TEST_CASE("filter_text_rows keeps rows aligned with records") {
  std::mt19937_64 rng(9);
  auto b = coder::testing::random_text_bundle(rng, 3, 5, 2);
  auto only_attr = filter_text_rows(b, [](const TextRecord& r) {
    return r.family == Family::Attribute;
  });
  REQUIRE(only_attr.text_records.size() == 6);
  for (std::size_t i = 0; i < only_attr.text_records.size(); ++i) {
    auto it = std::find(b.text_records.begin(), b.text_records.end(),
                        only_attr.text_records[i]);
    auto src = b.features.row(static_cast<std::size_t>(it - b.text_records.begin()));
    auto got = only_attr.features.row(i);
    CHECK(std::equal(src.begin(), src.end(), got.begin()));
  }
  CHECK_NOTHROW(only_attr.validate());
}

TEST_CASE("golden bundles parse to the expected structures") {
  auto expected = nlohmann::json::parse(
      read_file(coder::testing::fixtures_dir() / "golden" / "expected.json"));
  for (const char* name : {"text", "image", "coder"}) {
    CAPTURE(name);
    const auto& e = expected.at(name);
    auto path = coder::testing::fixtures_dir() / "golden" / (std::string(name) + ".codr");
    auto b = read_bundle(path);
    CHECK(to_string(b.kind) == e.at("kind").get<std::string>());
    CHECK(b.features.rows == e.at("rows").get<std::size_t>());
    CHECK(b.features.dim == e.at("dim").get<std::size_t>());
    CHECK(b.features.normalized == e.at("normalized").get<bool>());
    CHECK(b.class_names == e.at("class_names").get<std::vector<std::string>>());
    CHECK(b.encoder_tag == e.at("encoder_tag").get<std::string>());
    const auto& rows = e.at("features");
    for (std::size_t i = 0; i < b.features.rows; ++i) {
      for (std::size_t d = 0; d < b.features.dim; ++d) {
        CHECK(b.features.row(i)[d] == static_cast<float>(rows[i][d].get<double>()));
      }
    }
    if (b.kind == BundleKind::Text) {
      REQUIRE(b.text_records.size() == e.at("records").size());
      for (std::size_t i = 0; i < b.text_records.size(); ++i) {
        CHECK(b.text_records[i] == text_record_from_json(e.at("records")[i]));
      }
    } else {
      REQUIRE(b.image_records.size() == e.at("records").size());
      for (std::size_t i = 0; i < b.image_records.size(); ++i) {
        CHECK(b.image_records[i] == image_record_from_json(e.at("records")[i]));
      }
    }
    if (b.kind == BundleKind::Coder) {
      REQUIRE(b.text_records.size() == e.at("columns").size());
      for (std::size_t i = 0; i < b.text_records.size(); ++i) {
        CHECK(b.text_records[i] == text_record_from_json(e.at("columns")[i]));
      }
    }
    CHECK(serialize_bundle(b) == coder::testing::read_bytes(path));
  }
}

}  // TEST_SUITE
