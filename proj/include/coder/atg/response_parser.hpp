#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace coder::atg {

// Splits a model reply into list items. Numbered ("1." / "2)") and bulleted
// ("-", "*", "•") lines are items; when the reply has no such markers every
// non-empty line is an item. Unmarked lines ending in ':' are treated as
// preamble. Items are trimmed and lose trailing punctuation.
// Throws ParseError (carrying the raw text) when nothing is left.
std::vector<std::string> parse_list_response(std::string_view raw);

// parse_list_response, lowercase-folded and deduplicated in reply order.
std::vector<std::string> parse_class_list_response(std::string_view raw);

// Splits a "key differences" reply into per-class items. Lines naming one
// of the classes and ending in ':' switch the current side; items seen
// before any such header go to the class they mention first.
std::pair<std::vector<std::string>, std::vector<std::string>>
parse_one_to_one_response(std::string_view raw, std::string_view class_1,
                          std::string_view class_2);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

}  // namespace coder::atg
