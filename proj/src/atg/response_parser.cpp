#include "coder/atg/response_parser.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>

#include "coder/error.hpp"

namespace coder::atg {

namespace {

struct Line {
  std::string text;
  bool marked = false;
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string strip_emphasis(std::string s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '*' && i + 1 < s.size() && s[i + 1] == '*') {
      ++i;
      continue;
    }
    out += s[i];
  }
  return out;
}

// Removes a leading list marker; returns true if one was present.
bool strip_marker(std::string& s) {
  static const std::string kBullet = "\xE2\x80\xA2";  // U+2022
  if (s.rfind(kBullet, 0) == 0) {
    s = trim(s.substr(kBullet.size()));
    return true;
  }
  if (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+') &&
      (s.size() == 1 || is_space(s[1]))) {
    s = trim(s.substr(1));
    return true;
  }
  std::size_t i = 0;
  bool paren = false;
  if (i < s.size() && s[i] == '(') {
    paren = true;
    ++i;
  }
  std::size_t digits = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == digits || i >= s.size()) return false;
  if ((paren && s[i] == ')') || (!paren && (s[i] == '.' || s[i] == ')'))) {
    if (i + 1 < s.size() && !is_space(s[i + 1])) return false;
    s = trim(s.substr(i + 1));
    return true;
  }
  return false;
}

std::string strip_trailing_punct(std::string s) {
  while (!s.empty() && std::string_view(".,;:!").find(s.back()) != std::string_view::npos) {
    s.pop_back();
  }
  return trim(s);
}

std::vector<Line> split_lines(std::string_view raw) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    auto text = trim(strip_emphasis(std::string(raw.substr(pos, nl - pos))));
    while (!text.empty() && text[0] == '#') text = trim(text.substr(1));
    if (!text.empty()) {
      Line line;
      line.marked = strip_marker(text);
      line.text = std::move(text);
      lines.push_back(std::move(line));
    }
    pos = nl + 1;
  }
  return lines;
}

// Substring that identifies a class name in running text; "butterfly"
// also has to match "butterflies".
std::string stem(std::string_view name) {
  auto s = to_lower(trim(name));
  if (s.size() > 3 && s.back() == 'y') s.pop_back();
  return s;
}

// 0 or 1 for the class mentioned first in `text`, nullopt if neither.
std::optional<int> first_mention(const std::string& text, const std::string& stem_1,
                                 const std::string& stem_2) {
  auto lower = to_lower(text);
  auto p1 = lower.find(stem_1);
  auto p2 = lower.find(stem_2);
  if (p1 == std::string::npos && p2 == std::string::npos) return std::nullopt;
  if (p1 == p2) return stem_1.size() >= stem_2.size() ? 0 : 1;
  return p1 < p2 ? 0 : 1;
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 128) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> parse_list_response(std::string_view raw) {
  if (trim(raw).empty()) throw ParseError("empty response", std::string(raw));
  auto lines = split_lines(raw);
  bool any_marked = std::any_of(lines.begin(), lines.end(),
                                [](const Line& l) { return l.marked; });
  std::vector<std::string> items;
  for (const auto& line : lines) {
    if (any_marked && !line.marked) continue;
    if (!line.marked && line.text.back() == ':') continue;
    auto item = strip_trailing_punct(line.text);
    if (!item.empty()) items.push_back(std::move(item));
  }
  if (items.empty()) throw ParseError("no list items in response", std::string(raw));
  return items;
}

std::vector<std::string> parse_class_list_response(std::string_view raw) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& item : parse_list_response(raw)) {
    auto folded = to_lower(item);
    if (seen.insert(folded).second) out.push_back(std::move(folded));
  }
  return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>>
parse_one_to_one_response(std::string_view raw, std::string_view class_1,
                          std::string_view class_2) {
  if (trim(raw).empty()) throw ParseError("empty response", std::string(raw));
  auto stem_1 = stem(class_1), stem_2 = stem(class_2);
  auto lines = split_lines(raw);
  bool any_marked = std::any_of(lines.begin(), lines.end(),
                                [](const Line& l) { return l.marked; });

  std::pair<std::vector<std::string>, std::vector<std::string>> sides;
  std::optional<int> current;
  for (const auto& line : lines) {
    if (line.text.back() == ':') {
      auto side = first_mention(line.text, stem_1, stem_2);
      if (side) current = side;
      continue;
    }
    if (any_marked && !line.marked) continue;
    auto item = strip_trailing_punct(line.text);
    if (item.empty()) continue;
    auto side = current ? current : first_mention(item, stem_1, stem_2);
    if (!side) continue;
    (*side == 0 ? sides.first : sides.second).push_back(std::move(item));
  }
  if (sides.first.empty() || sides.second.empty()) {
    throw ParseError("reply does not describe both classes", std::string(raw));
  }
  return sides;
}

}  // namespace coder::atg
