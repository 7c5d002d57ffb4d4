#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coder/embedding_store.hpp"

namespace coder::atg {

// Placeholder names accepted in template patterns (without braces).
inline constexpr const char* kClass = "class";
inline constexpr const char* kClass1 = "class 1";
inline constexpr const char* kClass2 = "class 2";
inline constexpr const char* kAnalogousClass = "analogous class";
inline constexpr const char* kSynonymClass = "synonym class";
inline constexpr const char* kOneToOneText = "1v1 text";
inline constexpr const char* kAttribute = "attribute";

std::set<std::string> required_placeholders(Family family);

// Placeholder names found in `pattern`, e.g. {"class", "attribute"}.
std::set<std::string> placeholders_in(const std::string& pattern);

struct PromptTemplate {
  std::string template_id;
  Family family = Family::ClassName;
  std::string pattern;

  // Throws InvalidArgument unless the pattern carries exactly the
  // placeholders its family requires.
  void validate() const;
  std::string render(const std::map<std::string, std::string>& values) const;
};

class TemplateSet {
 public:
  TemplateSet() = default;
  explicit TemplateSet(std::vector<PromptTemplate> templates);

  // JSON array of {"template_id", "family", "pattern"}.
  static TemplateSet load(const std::filesystem::path& path);
  static TemplateSet defaults();

  std::vector<const PromptTemplate*> for_family(Family family) const;
  const std::vector<PromptTemplate>& all() const { return templates_; }

 private:
  std::vector<PromptTemplate> templates_;
};

// Queries sent to the language model.
inline constexpr const char* kAnalogousPrompt =
    "What other categories are {class} visually similar to?";
inline constexpr const char* kAttributePrompt =
    "What are useful visual features for distinguishing a {class} in a photo?";
inline constexpr const char* kOneToOnePrompt =
    "What are different visual features between a {class 1} and a {class 2} "
    "in a photo? Focus on their key differences.";

std::string fill(const std::string& pattern,
                 const std::map<std::string, std::string>& values);

}  // namespace coder::atg
