#include "coder/atg/templates.hpp"

#include "coder/error.hpp"
#include "coder/json_io.hpp"

namespace coder::atg {

std::set<std::string> required_placeholders(Family family) {
  switch (family) {
    case Family::ClassName: return {kClass};
    case Family::Attribute: return {kClass, kAttribute};
    case Family::AnalogousClass: return {kClass, kAnalogousClass};
    case Family::Synonym: return {kSynonymClass};
    case Family::OneToOne: return {kOneToOneText, kClass1, kClass2};
  }
  return {};
}

std::set<std::string> placeholders_in(const std::string& pattern) {
  std::set<std::string> found;
  std::size_t pos = 0;
  while ((pos = pattern.find('{', pos)) != std::string::npos) {
    auto close = pattern.find('}', pos);
    if (close == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument,
                  "unterminated placeholder in '" + pattern + "'");
    }
    found.insert(pattern.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return found;
}

void PromptTemplate::validate() const {
  if (template_id.empty()) {
    throw Error(ErrorCode::InvalidArgument, "template with empty id");
  }
  if (placeholders_in(pattern) != required_placeholders(family)) {
    throw Error(ErrorCode::InvalidArgument,
                "template '" + template_id + "' does not carry exactly the " +
                    std::string(to_string(family)) + " placeholders");
  }
}

std::string fill(const std::string& pattern,
                 const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = pattern.find('{', pos);
    if (open == std::string::npos) {
      out.append(pattern, pos);
      return out;
    }
    auto close = pattern.find('}', open);
    if (close == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument,
                  "unterminated placeholder in '" + pattern + "'");
    }
    out.append(pattern, pos, open - pos);
    auto name = pattern.substr(open + 1, close - open - 1);
    auto it = values.find(name);
    if (it == values.end()) {
      throw Error(ErrorCode::InvalidArgument, "no value for {" + name + "}");
    }
    out += it->second;
    pos = close + 1;
  }
}

std::string PromptTemplate::render(
    const std::map<std::string, std::string>& values) const {
  return fill(pattern, values);
}

TemplateSet::TemplateSet(std::vector<PromptTemplate> templates)
    : templates_(std::move(templates)) {
  std::set<std::string> ids;
  for (const auto& t : templates_) {
    t.validate();
    if (!ids.insert(t.template_id).second) {
      throw Error(ErrorCode::InvalidArgument,
                  "duplicate template id '" + t.template_id + "'");
    }
  }
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
  std::vector<PromptTemplate> templates;
  try {
    auto j = nlohmann::json::parse(read_file(path));
    for (const auto& t : j) {
      templates.push_back({t.at("template_id").get<std::string>(),
                           family_from_string(t.at("family").get<std::string>()),
                           t.at("pattern").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return TemplateSet(std::move(templates));
}

TemplateSet TemplateSet::defaults() {
  return TemplateSet({
      {"photo", Family::ClassName, "a photo of a {class}"},
      {"attribute", Family::Attribute, "a photo of a {class}, which has {attribute}"},
      {"analogous", Family::AnalogousClass, "a {class} similar to {analogous class}"},
      {"synonym", Family::Synonym, "a photo of {synonym class}"},
      {"one_to_one", Family::OneToOne,
       "Because of {1v1 text}, {class 1} is different from {class 2}"},
  });
}

std::vector<const PromptTemplate*> TemplateSet::for_family(Family family) const {
  std::vector<const PromptTemplate*> out;
  for (const auto& t : templates_) {
    if (t.family == family) out.push_back(&t);
  }
  return out;
}

}  // namespace coder::atg
