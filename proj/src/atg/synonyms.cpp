#include "coder/atg/synonyms.hpp"

#include <set>
#include <sstream>

#include "coder/atg/response_parser.hpp"
#include "coder/error.hpp"
#include "coder/json_io.hpp"

namespace coder::atg {

namespace {

std::vector<std::string> union_of(const std::vector<std::vector<std::string>>& groups) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& g : groups) {
    for (const auto& w : g) {
      if (seen.insert(w).second) out.push_back(w);
    }
  }
  return out;
}

}  // namespace

TsvSynonymProvider::TsvSynonymProvider(const std::filesystem::path& path) {
  parse(read_file(path));
}

TsvSynonymProvider TsvSynonymProvider::from_string(const std::string& text) {
  TsvSynonymProvider p;
  p.parse(text);
  return p;
}

void TsvSynonymProvider::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::Parse,
                  "synonym file line " + std::to_string(line_no) + " has no tab");
    }
    auto key = to_lower(trim(line.substr(0, tab)));
    std::vector<std::string> words;
    std::istringstream fields(line.substr(tab + 1));
    std::string w;
    while (std::getline(fields, w, ',')) {
      auto word = trim(w);
      if (!word.empty()) words.push_back(word);
    }
    senses_[key].push_back(std::move(words));
  }
}

std::vector<std::string> TsvSynonymProvider::synonyms(const std::string& name) const {
  auto it = senses_.find(to_lower(trim(name)));
  return it == senses_.end() ? std::vector<std::string>{} : union_of(it->second);
}

std::size_t TsvSynonymProvider::sense_count(const std::string& name) const {
  auto it = senses_.find(to_lower(trim(name)));
  return it == senses_.end() ? 0 : it->second.size();
}

WordNetSynonymProvider::WordNetSynonymProvider(const std::filesystem::path& data_file) {
  parse(read_file(data_file));
}

WordNetSynonymProvider WordNetSynonymProvider::from_string(const std::string& text) {
  WordNetSynonymProvider p;
  p.parse(text);
  return p;
}

void WordNetSynonymProvider::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // License header lines start with two spaces.
    if (line.empty() || line[0] == ' ') continue;
    std::istringstream fields(line);
    std::string offset, lex_filenum, ss_type, w_cnt_hex;
    if (!(fields >> offset >> lex_filenum >> ss_type >> w_cnt_hex)) {
      throw Error(ErrorCode::Parse,
                  "WordNet line " + std::to_string(line_no) + " is malformed");
    }
    std::size_t w_cnt = 0;
    try {
      w_cnt = std::stoul(w_cnt_hex, nullptr, 16);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse,
                  "WordNet line " + std::to_string(line_no) + " has bad word count");
    }
    std::vector<std::string> words;
    for (std::size_t i = 0; i < w_cnt; ++i) {
      std::string word, lex_id;
      if (!(fields >> word >> lex_id)) {
        throw Error(ErrorCode::Parse,
                    "WordNet line " + std::to_string(line_no) + " is truncated");
      }
      if (auto paren = word.find('('); paren != std::string::npos) word.resize(paren);
      for (char& c : word) {
        if (c == '_') c = ' ';
      }
      words.push_back(word);
    }
    std::size_t synset = synsets_.size();
    for (const auto& w : words) {
      auto& senses = index_[to_lower(w)];
      if (senses.empty() || senses.back() != synset) senses.push_back(synset);
    }
    synsets_.push_back(std::move(words));
  }
}

std::vector<std::string> WordNetSynonymProvider::synonyms(const std::string& name) const {
  auto it = index_.find(to_lower(trim(name)));
  if (it == index_.end()) return {};
  std::vector<std::vector<std::string>> groups;
  for (std::size_t s : it->second) groups.push_back(synsets_[s]);
  return union_of(groups);
}

std::size_t WordNetSynonymProvider::sense_count(const std::string& name) const {
  auto it = index_.find(to_lower(trim(name)));
  return it == index_.end() ? 0 : it->second.size();
}

}  // namespace coder::atg
