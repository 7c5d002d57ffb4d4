#include "coder/atg/templates.hpp"
#include "coder/error.hpp"
#include "coder/json_io.hpp"
#include "doctest.h"
#include "testing.hpp"

using namespace coder;
using namespace coder::atg;

TEST_SUITE("atg.templates") {

TEST_CASE("placeholders are extracted by name") {
  CHECK(placeholders_in("Because of {1v1 text}, {class 1} is different from {class 2}") ==
        std::set<std::string>{"1v1 text", "class 1", "class 2"});
  CHECK(placeholders_in("no placeholders").empty());
}

TEST_CASE("each family requires its own placeholders") {
  CHECK(required_placeholders(Family::ClassName) == std::set<std::string>{"class"});
  CHECK(required_placeholders(Family::Synonym) == std::set<std::string>{"synonym class"});
  CHECK(required_placeholders(Family::AnalogousClass) ==
        std::set<std::string>{"class", "analogous class"});
}

TEST_CASE("validate rejects missing or extra placeholders") {
  PromptTemplate ok{"p", Family::ClassName, "a photo of a {class}"};
  CHECK_NOTHROW(ok.validate());
  PromptTemplate missing{"p", Family::AnalogousClass, "a {class} in the wild"};
  CHECK_THROWS_AS(missing.validate(), Error);
  PromptTemplate extra{"p", Family::ClassName, "a {class} like {analogous class}"};
  CHECK_THROWS_AS(extra.validate(), Error);
}

TEST_CASE("default templates reproduce the published patterns") {
  auto set = TemplateSet::defaults();
  for (const auto& t : set.all()) CHECK_NOTHROW(t.validate());
  auto analogous = set.for_family(Family::AnalogousClass);
  REQUIRE(analogous.size() == 1);
  CHECK(analogous[0]->render({{"class", "clouded leopard"}, {"analogous class", "cheetah"}}) ==
        "a clouded leopard similar to cheetah");
  auto synonym = set.for_family(Family::Synonym);
  REQUIRE(synonym.size() == 1);
  CHECK(synonym[0]->render({{"synonym class", "woodland"}}) == "a photo of woodland");
  auto pair = set.for_family(Family::OneToOne);
  REQUIRE(pair.size() == 1);
  CHECK(pair[0]->render({{"1v1 text", "larger wings"},
                         {"class 1", "butterfly"},
                         {"class 2", "dragonfly"}}) ==
        "Because of larger wings, butterfly is different from dragonfly");
  CHECK(set.for_family(Family::ClassName)[0]->render({{"class", "cat"}}) == "a photo of a cat");
}

TEST_CASE("fill substitutes every occurrence and rejects unknown placeholders") {
  CHECK(fill("{class} and {class}", {{"class", "x"}}) == "x and x");
  CHECK_THROWS_AS(fill("{other}", {{"class", "x"}}), Error);
}

TEST_CASE("template sets load from JSON and reject invalid entries") {
  coder::testing::TempDir dir;
  write_file_atomic(dir / "t.json", R"([
    {"template_id": "photo", "family": "class_name", "pattern": "a photo of a {class}"},
    {"template_id": "art", "family": "class_name", "pattern": "art of the {class}"}
  ])");
  auto set = TemplateSet::load(dir / "t.json");
  CHECK(set.for_family(Family::ClassName).size() == 2);
  CHECK(set.for_family(Family::Attribute).empty());

  write_file_atomic(dir / "bad.json",
                    R"([{"template_id": "x", "family": "synonym", "pattern": "{class}"}])");
  CHECK_THROWS_AS(TemplateSet::load(dir / "bad.json"), Error);
}

}  // TEST_SUITE
