#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace coder::atg {

class SynonymProvider {
 public:
  virtual ~SynonymProvider() = default;
  // Synonyms of `name` across all of its senses, in provider order. May
  // include `name` itself; callers exclude it.
  virtual std::vector<std::string> synonyms(const std::string& name) const = 0;
  virtual std::size_t sense_count(const std::string& name) const = 0;
};

// Tab-separated "class<TAB>syn1,syn2,..." lines; '#' starts a comment.
// Each line is one sense, so a class may appear on several lines.
class TsvSynonymProvider : public SynonymProvider {
 public:
  explicit TsvSynonymProvider(const std::filesystem::path& path);
  static TsvSynonymProvider from_string(const std::string& text);

  std::vector<std::string> synonyms(const std::string& name) const override;
  std::size_t sense_count(const std::string& name) const override;

 private:
  TsvSynonymProvider() = default;
  void parse(const std::string& text);

  std::map<std::string, std::vector<std::vector<std::string>>> senses_;
};

// Reads a WordNet database file (data.noun format): one synset per line,
// "offset lex_filenum ss_type w_cnt(hex) word lex_id ... | gloss". Words use
// '_' for spaces; adjective markers like "(a)" are dropped.
class WordNetSynonymProvider : public SynonymProvider {
 public:
  explicit WordNetSynonymProvider(const std::filesystem::path& data_file);
  static WordNetSynonymProvider from_string(const std::string& text);

  std::vector<std::string> synonyms(const std::string& name) const override;
  std::size_t sense_count(const std::string& name) const override;

 private:
  WordNetSynonymProvider() = default;
  void parse(const std::string& text);

  std::vector<std::vector<std::string>> synsets_;
  std::map<std::string, std::vector<std::size_t>> index_;
};

}  // namespace coder::atg
