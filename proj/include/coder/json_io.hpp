#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coder/embedding_store.hpp"
#include "json.hpp"

namespace coder {

nlohmann::json to_json(const TextRecord& r);
TextRecord text_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ImageRecord& r);
ImageRecord image_record_from_json(const nlohmann::json& j);

// Compact JSON with sorted keys and doubles printed with 9 significant
// digits, so that reports diff cleanly and compare byte-for-byte.
std::string dump_canonical(const nlohmann::json& j, int indent = 2);

// Writes `text` to `path` via a temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

struct TextSet {
  std::vector<std::string> class_names;
  std::vector<TextRecord> records;
};

nlohmann::json to_json(const TextSet& set);
TextSet text_set_from_json(const nlohmann::json& j);
void write_text_set(const TextSet& set, const std::filesystem::path& path);
TextSet read_text_set(const std::filesystem::path& path);

}  // namespace coder
