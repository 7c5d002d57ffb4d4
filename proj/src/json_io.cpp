#include "coder/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "coder/error.hpp"

namespace coder {

using nlohmann::json;

json to_json(const TextRecord& r) {
  json j;
  j["id"] = r.id;
  j["text"] = r.text;
  j["family"] = std::string(to_string(r.family));
  j["class_id"] = r.class_id;
  if (r.pair_class_id) j["pair_class_id"] = *r.pair_class_id;
  j["template_id"] = r.template_id;
  return j;
}

TextRecord text_record_from_json(const json& j) {
  TextRecord r;
  r.id = j.at("id").get<std::int64_t>();
  r.text = j.at("text").get<std::string>();
  r.family = family_from_string(j.at("family").get<std::string>());
  r.class_id = j.at("class_id").get<int>();
  if (auto it = j.find("pair_class_id"); it != j.end() && !it->is_null()) {
    r.pair_class_id = it->get<int>();
  }
  r.template_id = j.value("template_id", std::string{});
  return r;
}

json to_json(const ImageRecord& r) {
  json j;
  j["id"] = r.id;
  j["label_class_id"] = r.label_class_id ? json(*r.label_class_id) : json(nullptr);
  j["source_path"] = r.source_path;
  return j;
}

ImageRecord image_record_from_json(const json& j) {
  ImageRecord r;
  r.id = j.at("id").get<std::int64_t>();
  if (auto it = j.find("label_class_id"); it != j.end() && !it->is_null()) {
    r.label_class_id = it->get<int>();
  }
  r.source_path = j.value("source_path", std::string{});
  return r;
}

namespace {

void emit(const json& j, int indent, int depth, std::string& out) {
  auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        emit(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        emit(v, indent, depth + 1, out);
      }
      newline(depth);
      out += ']';
      return;
    }
    case json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out += buf;
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_canonical(const json& j, int indent) {
  std::string out;
  emit(j, indent, 0, out);
  if (indent >= 0) out += '\n';
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::Io, "rename to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json to_json(const TextSet& set) {
  json records = json::array();
  for (const auto& r : set.records) records.push_back(to_json(r));
  return json{{"class_names", set.class_names}, {"records", std::move(records)}};
}

TextSet text_set_from_json(const json& j) {
  TextSet set;
  try {
    set.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& r : j.at("records")) set.records.push_back(text_record_from_json(r));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidMetadata, std::string("text set: ") + e.what());
  }
  return set;
}

void write_text_set(const TextSet& set, const std::filesystem::path& path) {
  write_file_atomic(path, dump_canonical(to_json(set)));
}

TextSet read_text_set(const std::filesystem::path& path) {
  try {
    return text_set_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidMetadata, path.string() + ": " + e.what());
  }
}

}  // namespace coder
