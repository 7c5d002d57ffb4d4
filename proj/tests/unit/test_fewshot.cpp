#include <cmath>
#include <random>

#include "coder/error.hpp"
#include "coder/fewshot.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "testing.hpp"

using namespace coder;
using coder::testing::make_image_bundle;

namespace {

SupportCache random_cache(std::mt19937_64& rng, std::size_t ways, std::size_t shots,
                          std::size_t texts) {
  SupportCache cache;
  cache.num_classes = ways;
  cache.ways = ways;
  cache.shots = shots;
  cache.coder.rows = ways * shots;
  cache.coder.cols = texts;
  std::uniform_real_distribution<float> sim(-0.3f, 0.9f);
  for (std::size_t i = 0; i < ways * shots * texts; ++i) cache.coder.values.push_back(sim(rng));
  cache.labels.assign(ways * shots * ways, 0.0f);
  for (std::size_t n = 0; n < ways * shots; ++n) {
    int label = static_cast<int>(n / shots);
    cache.label_ids.push_back(label);
    cache.labels[n * ways + label] = 1.0f;
  }
  return cache;
}

std::vector<std::vector<float>> support_rows(const SupportCache& cache) {
  std::vector<std::vector<float>> out;
  for (std::size_t n = 0; n < cache.size(); ++n) {
    auto r = cache.coder.row(n);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

std::vector<float> random_coder(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<float> sim(-0.3f, 0.9f);
  std::vector<float> out(k);
  for (auto& v : out) v = sim(rng);
  return out;
}

oracle::AdapterSetting setting(const AdapterParams& p) {
  return {p.alpha, p.beta, p.temperature, p.norm == NormMode::MinMax};
}

}  // namespace

TEST_SUITE("fewshot") {

TEST_CASE("support cache shapes and one-hot labels") {
  std::mt19937_64 rng(1);
  auto texts = coder::testing::random_text_bundle(rng, 2, 6, 1);
  texts = filter_text_rows(texts, [](const TextRecord& r) {
    return r.family == Family::ClassName || r.family == Family::Attribute;
  });
  REQUIRE(texts.features.rows == 4);
  auto support = make_image_bundle(coder::testing::random_matrix(rng, 2, 6, false), {0, 1},
                                   texts.class_names);
  auto cache = build_support_cache(support, texts);
  CHECK(cache.coder.rows == 2);
  CHECK(cache.coder.cols == 4);
  CHECK(cache.labels == std::vector<float>{1.0f, 0.0f, 0.0f, 1.0f});
  CHECK(cache.ways == 2);
  CHECK(cache.shots == 1);
  for (std::size_t n = 0; n < cache.size(); ++n) {
    float sum = 0.0f;
    for (std::size_t c = 0; c < cache.num_classes; ++c) sum += cache.labels[n * 2 + c];
    CHECK(sum == 1.0f);
  }
}

TEST_CASE("support rows use raw image features against unit text rows") {
  FeatureMatrix image(1, 2, {3.0f, 4.0f});
  EmbeddingBundle texts;
  texts.kind = BundleKind::Text;
  texts.class_names = {"a"};
  texts.encoder_tag = "test-encoder";
  texts.features = FeatureMatrix(1, 2, {2.0f, 0.0f});
  texts.text_records = {{0, "t", Family::ClassName, 0, std::nullopt, ""}};
  auto support = make_image_bundle(image, {0}, {"a"});
  CHECK(build_support_cache(support, texts).coder.values[0] == doctest::Approx(3.0));
  CHECK(build_support_cache(support, texts, true).coder.values[0] == doctest::Approx(0.6));
}

TEST_CASE("duplicate support images give duplicate rows") {
  std::mt19937_64 rng(2);
  auto texts = coder::testing::random_text_bundle(rng, 2, 5, 1);
  auto row = coder::testing::random_matrix(rng, 1, 5, false);
  FeatureMatrix twice(2, 5, row.data);
  twice.data.insert(twice.data.end(), row.data.begin(), row.data.end());
  auto cache = build_support_cache(make_image_bundle(twice, {0, 0}, texts.class_names), texts);
  auto a = cache.coder.row(0), b = cache.coder.row(1);
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
}

TEST_CASE("support cache errors and warnings") {
  std::mt19937_64 rng(3);
  auto texts = coder::testing::random_text_bundle(rng, 2, 5, 1);
  auto feats = coder::testing::random_matrix(rng, 2, 5, false);
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(build_support_cache(make_image_bundle(feats, {0, 2}, texts.class_names),
                                        texts),
                    Error);
  }
  SUBCASE("missing label") {
    CHECK_THROWS_AS(
        build_support_cache(make_image_bundle(feats, {0}, texts.class_names), texts), Error);
  }
  SUBCASE("unbalanced shots") {
    auto three = coder::testing::random_matrix(rng, 3, 5, false);
    try {
      build_support_cache(make_image_bundle(three, {0, 0, 1}, texts.class_names), texts);
      FAIL("expected InvariantViolation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvariantViolation);
    }
  }
  SUBCASE("encoder mismatch only warns") {
    auto support = make_image_bundle(feats, {0, 1}, texts.class_names);
    support.encoder_tag = "RN50";
    coder::testing::CapturedWarnings warnings;
    CHECK_NOTHROW(build_support_cache(support, texts));
    REQUIRE(warnings.messages.size() == 1);
    CHECK(warnings.messages[0].find("RN50") != std::string::npos);
  }
}

TEST_CASE("affinity endpoints") {
  std::mt19937_64 rng(4);
  auto cache = random_cache(rng, 3, 1, 4);
  auto s = random_coder(rng, 4);
  AdapterParams p;
  p.temperature = 1.0;
  auto a = affinity(s, cache, p);
  double hi = *std::max_element(a.begin(), a.end());
  double lo = *std::min_element(a.begin(), a.end());
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lo == doctest::Approx(std::exp(-p.beta)).epsilon(1e-12));
}

TEST_CASE("a constant similarity row maps to 0.5 under min-max") {
  SupportCache cache;
  cache.num_classes = 1;
  cache.coder = {2, 2, {0.5f, 0.5f, 0.5f, 0.5f}};
  cache.labels = {1.0f, 1.0f};
  cache.label_ids = {0, 0};
  std::vector<float> s{1.0f, 1.0f};
  AdapterParams p;
  p.temperature = 0.5;  // Norm = T gives exp(0)
  for (double v : affinity(s, cache, p)) CHECK(v == doctest::Approx(1.0));
  p.temperature = 3.0;
  for (double v : affinity(s, cache, p)) {
    CHECK(v == doctest::Approx(std::exp(-5.5 * (1.0 - 0.5 / 3.0))));
  }
}

TEST_CASE("affinity agrees with the scalar formula") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto cache = random_cache(rng, 3, 1, 7);
    auto s = random_coder(rng, 7);
    AdapterParams p{0.5 + trial % 3, 1.0 + trial % 7, 0.5 + trial % 4,
                    trial % 2 ? NormMode::MinMax : NormMode::L2};
    auto got = affinity(s, cache, p);
    auto want = oracle::affinity(s, support_rows(cache), setting(p));
    for (std::size_t n = 0; n < got.size(); ++n) CHECK(std::abs(got[n] - want[n]) <= 1e-6);
  }
}

TEST_CASE("affinity errors") {
  SupportCache empty;
  std::vector<float> s{0.1f};
  CHECK_THROWS_AS(affinity(s, empty, AdapterParams{}), Error);
  std::mt19937_64 rng(6);
  auto cache = random_cache(rng, 2, 1, 3);
  CHECK_THROWS_AS(affinity(s, cache, AdapterParams{}), Error);
  AdapterParams bad;
  bad.beta = 0.0;
  CHECK_THROWS_AS(affinity(random_coder(rng, 3), cache, bad), Error);
}

TEST_CASE("adapt_logits") {
  std::mt19937_64 rng(7);
  SUBCASE("alpha = 0 returns the zero-shot logits exactly") {
    auto cache = random_cache(rng, 3, 2, 5);
    std::vector<double> zs{1.5, -0.25, 3.0};
    AdapterParams p;
    p.alpha = 0.0;
    CHECK(adapt_logits(zs, random_coder(rng, 5), cache, p) == zs);
  }
  SUBCASE("one support image with affinity 1 adds exactly alpha to its class") {
    auto cache = random_cache(rng, 1, 1, 4);
    cache.num_classes = 3;
    cache.labels = {0.0f, 0.0f, 1.0f};
    cache.label_ids = {2};
    AdapterParams p;
    p.temperature = 0.5;  // single entry: min-max gives 0.5 = T
    std::vector<double> zs{0.2, 0.4, 0.1};
    auto out = adapt_logits(zs, random_coder(rng, 4), cache, p);
    CHECK(out[0] == zs[0]);
    CHECK(out[1] == zs[1]);
    CHECK(out[2] == doctest::Approx(1.1).epsilon(1e-15));
  }
  SUBCASE("2-way 4-shot instances agree with the scalar oracle") {
    for (int trial = 0; trial < 100; ++trial) {
      auto cache = random_cache(rng, 2, 4, 6);
      auto s = random_coder(rng, 6);
      std::vector<double> zs{std::uniform_real_distribution<double>(-1, 1)(rng), 0.3};
      AdapterParams p{1.0 + trial % 5, 5.5, 3.0, trial % 2 ? NormMode::MinMax : NormMode::L2};
      auto got = adapt_logits(zs, s, cache, p);
      auto want = oracle::adapt(zs, s, support_rows(cache), cache.label_ids, setting(p));
      for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(got[c] - want[c]) <= 1e-6);
    }
  }
  SUBCASE("class count mismatch") {
    auto cache = random_cache(rng, 3, 1, 2);
    std::vector<double> zs{0.0, 0.0};
    CHECK_THROWS_AS(adapt_logits(zs, random_coder(rng, 2), cache, AdapterParams{}), Error);
  }
}

TEST_CASE("property: min-max affinities stay within [exp(-beta), exp(-beta (T-1)/T)]") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto cache = random_cache(rng, 4, 2, 6);
    AdapterParams p;
    p.beta = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    p.temperature = std::uniform_real_distribution<double>(0.2, 6.0)(rng);
    double lo = std::exp(-p.beta);
    double hi = std::exp(-p.beta * (p.temperature - 1.0) / p.temperature);
    for (double v : affinity(random_coder(rng, 6), cache, p)) {
      CHECK(v > 0.0);
      CHECK(v >= lo * (1 - 1e-12));
      CHECK(v <= hi * (1 + 1e-12));
    }
  }
}

TEST_CASE("property: correction mass equals the total affinity") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto cache = random_cache(rng, 3, 3, 5);
    auto s = random_coder(rng, 5);
    AdapterParams p;
    std::vector<double> zs(3, 0.0);
    auto out = adapt_logits(zs, s, cache, p);
    auto a = affinity(s, cache, p);
    double mass = 0.0, total = 0.0;
    for (double v : out) {
      CHECK(v >= 0.0);
      mass += v;
    }
    for (double v : a) total += v;
    CHECK(mass == doctest::Approx(total).epsilon(1e-12));
  }
}

TEST_CASE("property: adapted logits are affine in alpha") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto cache = random_cache(rng, 3, 2, 5);
    auto s = random_coder(rng, 5);
    std::vector<double> zs{0.3, -0.7, 1.2};
    AdapterParams one;
    auto at_one = adapt_logits(zs, s, cache, one);
    double alpha = std::uniform_real_distribution<double>(0.0, 20.0)(rng);
    AdapterParams p = one;
    p.alpha = alpha;
    auto got = adapt_logits(zs, s, cache, p);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(got[c] == doctest::Approx(zs[c] + alpha * (at_one[c] - zs[c])).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: shifting zero-shot logits shifts the output and keeps the argmax") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto cache = random_cache(rng, 4, 1, 5);
    auto s = random_coder(rng, 5);
    std::vector<double> zs{0.1, 0.5, 0.45, 0.2};
    double shift = std::uniform_real_distribution<double>(-50, 50)(rng);
    auto shifted = zs;
    for (double& v : shifted) v += shift;
    auto a = adapt_logits(zs, s, cache, AdapterParams{});
    auto b = adapt_logits(shifted, s, cache, AdapterParams{});
    for (std::size_t c = 0; c < 4; ++c) CHECK(b[c] - a[c] == doctest::Approx(shift));
    CHECK(argmax(a) == argmax(b));
  }
}

TEST_CASE("property: affinity ratios sharpen as beta grows") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto cache = random_cache(rng, 3, 1, 5);
    auto s = random_coder(rng, 5);
    AdapterParams p;
    auto base = affinity(s, cache, p);
    std::size_t i = std::max_element(base.begin(), base.end()) - base.begin();
    std::size_t j = std::min_element(base.begin(), base.end()) - base.begin();
    double prev = 0.0;
    for (double beta : {0.5, 1.0, 2.0, 5.5, 9.0}) {
      p.beta = beta;
      auto a = affinity(s, cache, p);
      double ratio = a[i] / a[j];
      CHECK(ratio > prev);
      prev = ratio;
    }
  }
}

TEST_CASE("class_name_logits score images against class-name prototypes") {
  EmbeddingBundle texts;
  texts.kind = BundleKind::Text;
  texts.class_names = {"a", "b"};
  texts.features = FeatureMatrix(3, 2, {1.0f, 0.0f, 0.0f, 2.0f, 5.0f, 5.0f});
  texts.text_records = {{0, "a1", Family::ClassName, 0, std::nullopt, ""},
                        {1, "b1", Family::ClassName, 1, std::nullopt, ""},
                        {2, "b2", Family::Attribute, 1, std::nullopt, ""}};
  FeatureMatrix images(1, 2, {0.0f, 3.0f});
  auto logits = class_name_logits(images, texts, 100.0);
  CHECK(logits[0][0] == doctest::Approx(0.0));
  CHECK(logits[0][1] == doctest::Approx(100.0));

  texts.text_records[1].family = Family::Synonym;
  CHECK_THROWS_AS(class_name_logits(images, texts), Error);
}

TEST_CASE("grid_search") {
  std::mt19937_64 rng(13);
  // Planted instance: zero-shot logits prefer the wrong class by a small
  // margin, while each validation CODER is one-hot on its own support row,
  // so a sharp enough correction flips every prediction.
  SupportCache cache = random_cache(rng, 2, 2, 4);
  std::fill(cache.coder.values.begin(), cache.coder.values.end(), 0.0f);
  for (std::size_t n = 0; n < 4; ++n) cache.coder.values[n * 4 + n] = 1.0f;
  ValidationSet val;
  val.coder.cols = 4;
  for (std::size_t n = 0; n < cache.size(); ++n) {
    auto r = cache.coder.row(n);
    val.coder.values.insert(val.coder.values.end(), r.begin(), r.end());
    ++val.coder.rows;
    int label = cache.label_ids[n];
    val.labels.push_back(label);
    ClassScores zs(2, 0.0);
    zs[1 - label] = 0.05;
    val.zs_logits.push_back(zs);
  }
  AdapterParams none;
  none.alpha = 0.0;
  AdapterParams strong;
  strong.alpha = 10.0;
  strong.beta = 20.0;
  strong.temperature = 1.0;

  SUBCASE("singleton grid") {
    std::vector<AdapterParams> grid{none};
    CHECK(grid_search(grid, val, cache) == none);
  }
  SUBCASE("picks the helpful point over alpha = 0") {
    std::vector<AdapterParams> grid{none, strong};
    CHECK(adapter_accuracy(none, val, cache) == 0.0);
    CHECK(adapter_accuracy(strong, val, cache) == 1.0);
    CHECK(grid_search(grid, val, cache) == strong);
  }
  SUBCASE("ties keep the first point") {
    auto twin = strong;
    twin.alpha = 11.0;
    std::vector<AdapterParams> grid{strong, twin};
    CHECK(grid_search(grid, val, cache) == strong);
  }
  SUBCASE("the selected point is never worse than alpha = 0 on validation") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<AdapterParams> grid{none};
      for (int g = 0; g < 5; ++g) {
        AdapterParams p;
        p.alpha = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
        grid.push_back(p);
      }
      auto best = grid_search(grid, val, cache);
      CHECK(adapter_accuracy(best, val, cache) >= adapter_accuracy(none, val, cache));
    }
  }
  SUBCASE("errors") {
    std::vector<AdapterParams> empty_grid;
    CHECK_THROWS_AS(grid_search(empty_grid, val, cache), Error);
    std::vector<AdapterParams> grid{none};
    CHECK_THROWS_AS(grid_search(grid, ValidationSet{}, cache), Error);
  }
}

}  // TEST_SUITE
