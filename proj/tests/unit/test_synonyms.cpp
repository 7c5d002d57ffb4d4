#include "coder/atg/synonyms.hpp"
#include "doctest.h"
#include "testing.hpp"

using namespace coder::atg;
using Names = std::vector<std::string>;

TEST_SUITE("atg.synonyms") {

TEST_CASE("TSV provider") {
  auto p = TsvSynonymProvider::from_string(
      "# comment\n"
      "forest\twoodland,forest\n"
      "Bass\tbass fish, sea bass\n"
      "bass\tbass guitar\n"
      "\n");
  CHECK(p.synonyms("forest") == Names{"woodland", "forest"});
  CHECK(p.synonyms("FOREST") == Names{"woodland", "forest"});
  CHECK(p.sense_count("forest") == 1);
  CHECK(p.synonyms("bass") == Names{"bass fish", "sea bass", "bass guitar"});
  CHECK(p.sense_count("bass") == 2);
  CHECK(p.synonyms("river").empty());
  CHECK(p.sense_count("river") == 0);
}

TEST_CASE("TSV provider reads the EuroSAT fixture file") {
  TsvSynonymProvider p(coder::testing::fixtures_dir() / "eurosat" / "synonyms.tsv");
  CHECK(p.synonyms("river") == Names{"stream"});
  CHECK(p.synonyms("sea or lake") == Names{"body of water"});
}

TEST_CASE("WordNet data file provider") {
  // Lines follow the data.noun layout; the first is a license banner line.
  auto p = WordNetSynonymProvider::from_string(
      "  1 This software and database is being provided to you, the LICENSEE, by\n"
      "09284015 17 n 02 forest 0 woodland 0 001 @ 09287968 n 0000 | the trees and other "
      "plants in a large densely wooded area\n"
      "08438533 14 n 03 forest 0 wood 1 woods 0 000 | land that is covered with trees and "
      "shrubs\n"
      "02512053 05 n 02 sea_bass 0 bass(a) 0 000 | the lean flesh of a saltwater fish\n");
  CHECK(p.sense_count("forest") == 2);
  CHECK(p.synonyms("forest") == Names{"forest", "woodland", "wood", "woods"});
  CHECK(p.synonyms("sea bass") == Names{"sea bass", "bass"});
  CHECK(p.synonyms("Bass") == Names{"sea bass", "bass"});
  CHECK(p.synonyms("jungle").empty());
}

}  // TEST_SUITE
